#ifndef VVGCS_CLI_HPP
#define VVGCS_CLI_HPP

// Command-line front end: argument and config-file parsing for the
// train / sweep / export / check subcommands, and their implementations.

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "vvgcs/sweep.hpp"
#include "vvgcs/trainer.hpp"

namespace vvgcs::cli {

enum class Command { Train, Sweep, Export, Check };

const char* to_string(Command c) noexcept;

// Everything one invocation needs. Values come from CLI flags, then the
// --config file, then the defaults below.
struct RunConfig {
    trainer::TrainConfig train;
    sweep::SweepGrid grid;
    std::uint64_t seed = 1;
    std::string out;
    std::string system_dir;
    std::string baseline;
    int baseline_half_window = 32;
    std::string init_constellation;  // TSV path, optional
    std::string init_partition;      // TSV path, optional
    int checkpoint_every = 0;
    int grid_cols = 50;
    std::string filter;
    std::string fault;
};

struct Parsed {
    Command command = Command::Check;
    RunConfig config;
    std::string echo;  // effective configuration in config-file syntax
    bool help = false;
    std::string help_text;
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// args excludes the program name. Throws UsageError on bad input.
Parsed parse(const std::vector<std::string>& args);

// Full program; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vvgcs::cli

#endif  // VVGCS_CLI_HPP
