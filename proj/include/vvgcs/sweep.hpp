#ifndef VVGCS_SWEEP_HPP
#define VVGCS_SWEEP_HPP

// Validation over an SNR x linewidth grid with genie-aided cycle-slip
// compensation.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vvgcs/constellation.hpp"
#include "vvgcs/cpe.hpp"
#include "vvgcs/demapper.hpp"

namespace vvgcs::sweep {

struct SweepGrid {
    std::vector<double> snrs_db{15.0, 17.0, 19.0};
    std::vector<double> linewidths_hz{0, 100e3, 200e3, 300e3, 400e3, 500e3, 600e3, 700e3, 800e3, 900e3, 1000e3};
    int reps = 8;
    std::size_t symbols_per_rep = std::size_t{1} << 16;
    double symbol_rate_baud = 32e9;
    std::uint64_t seed = 1;
    int workers = 1;
    bool equal_rep_seeds = false;  // every repetition reuses the seed of rep 0

    void validate() const;
};

// A complete transmission system under test. Without a network the receiver
// uses exact AWGN LLRs on the constellation as seen after compensation.
struct System {
    std::string id;
    Constellation constellation;
    cpe::CpeConfig cpe;
    std::optional<demapper::RxNet> net;
};

// Square Gray 64-QAM with hard two-ring partitioned V&V (innermost and
// outermost amplitude rings) and exact LLRs.
System qam_hard_baseline(int rings = 2, int half_window = 32);

// System directory layout: system.txt (key=value), constellation.tsv,
// optional partition.tsv and rxnet.txt.
void save_system(const System& s, const std::filesystem::path& dir);
System load_system(const std::filesystem::path& dir);

struct Row {
    double snr_db = 0.0;
    double linewidth_hz = 0.0;
    double bmi_mean = 0.0;
    double bmi_stddev = 0.0;
    std::string system_id;

    friend bool operator==(const Row&, const Row&) = default;
};

struct SweepResult {
    std::vector<Row> rows;  // ordered by (snr, linewidth) as listed in the grid
    friend bool operator==(const SweepResult&, const SweepResult&) = default;
};

// BMI of one repetition for the given channel seed.
double run_repetition(const System& s, double snr_db, double linewidth_hz, double symbol_rate_baud,
                      std::size_t symbols, std::uint64_t seed);

// Seed of one repetition; depends on the cell values, not on their position.
std::uint64_t repetition_seed(const SweepGrid& g, double snr_db, double linewidth_hz, int rep);

SweepResult run_sweep(const System& s, const SweepGrid& grid);

// Space-separated "linewidth mean stddev snr", linewidth in Hz, SNR with two
// decimals.
void write_results(std::ostream& os, const SweepResult& r);
SweepResult read_results(std::istream& is, const std::string& system_id = {});
void export_results(const SweepResult& r, const std::filesystem::path& path);
SweepResult import_results(const std::filesystem::path& path, const std::string& system_id = {});

// Git blob hash (SHA-1 over "blob <size>\0" + contents) of a file.
std::string git_blob_hash(const std::filesystem::path& file);

// JSON run manifest: system id, grid, seeds and hashes of the given artifacts.
void write_manifest(const std::filesystem::path& path, const System& s, const SweepGrid& grid,
                    const std::vector<std::filesystem::path>& artifacts);

}  // namespace vvgcs::sweep

#endif  // VVGCS_SWEEP_HPP
