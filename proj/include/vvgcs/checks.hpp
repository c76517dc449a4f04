#ifndef VVGCS_CHECKS_HPP
#define VVGCS_CHECKS_HPP

// Fast self-test suite run by `vvgcs check`, plus the gradient-check helper
// it shares with the test programs.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "vvgcs/trainer.hpp"

namespace vvgcs::checks {

// Deliberate defects for negative-control runs of the suite.
enum class Fault {
    None,
    CargSign,  // the analytic carg gradient is negated before comparison
};

Fault fault_from_string(const std::string& s);

struct GradientCheck {
    double max_rel_error = 0.0;
    int directions = 0;
};

// Compares the directional derivative of pipeline_loss along random unit
// directions with a central difference of step h. Directions cycle through
// the parameter groups (constellation, rings, network, all) so that small
// groups are not drowned out by the network weights.
GradientCheck pipeline_gradient_check(const trainer::TrainConfig& cfg, const trainer::Model& model,
                                      const trainer::BatchData& batch, int directions, std::uint64_t seed,
                                      double h = 1e-5);

// A model for gradient checks: random output layer, so every parameter
// group receives a nonzero gradient.
trainer::Model gradient_check_model(const trainer::TrainConfig& cfg);

struct Outcome {
    std::string name;
    bool passed = false;
    std::string detail;
};

std::vector<std::string> check_names();

// Runs every check whose name contains filter (all when empty), printing
// one line per check to os.
std::vector<Outcome> run_checks(const std::string& filter, Fault fault, std::ostream& os);

}  // namespace vvgcs::checks

#endif  // VVGCS_CHECKS_HPP
