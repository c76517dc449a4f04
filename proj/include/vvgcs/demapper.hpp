#ifndef VVGCS_DEMAPPER_HPP
#define VVGCS_DEMAPPER_HPP

// Bitwise demapping: the Rx network, the bitwise cross-entropy and the BMI.
// LLR sign convention everywhere: LLR > 0 means bit = 1.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <numbers>
#include <span>
#include <vector>

#include "vvgcs/complex.hpp"
#include "vvgcs/constellation.hpp"
#include "vvgcs/numgrad.hpp"
#include "vvgcs/rng.hpp"

namespace vvgcs::demapper {

// Fully connected network 2 -> hidden... -> m, relu hidden activations and a
// linear output layer. Parameters are stored flat: for every layer the
// weight matrix (out x in, row-major) followed by the bias vector.
class RxNet {
public:
    explicit RxNet(std::vector<int> layer_sizes);

    // He-normal hidden layers; the output layer is zero when zero_output is
    // set (the untrained net then emits LLR = 0 for every bit).
    static RxNet initialized(std::vector<int> layer_sizes, PhiloxEngine& rng, bool zero_output = true);

    const std::vector<int>& layer_sizes() const noexcept { return sizes_; }
    int output_bits() const noexcept { return sizes_.back(); }
    std::size_t num_params() const noexcept { return params_.size(); }
    std::span<const double> params() const noexcept { return params_; }
    std::span<double> params() noexcept { return params_; }

    // N symbols -> N x m LLRs, row-major.
    std::vector<double> forward(std::span<const CplxD> y) const;

    // Same forward pass recorded on a tape as one custom block that is
    // differentiable with respect to y and to the given parameter variables.
    std::vector<numgrad::Var> forward(numgrad::Tape& tape, std::span<const CplxV> y,
                                      std::span<const numgrad::Var> params) const;

    friend bool operator==(const RxNet&, const RxNet&) = default;

private:
    std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }

    std::vector<int> sizes_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

void write_checkpoint(std::ostream& os, const RxNet& net);
RxNet read_checkpoint(std::istream& is);
void save_checkpoint(const RxNet& net, const std::filesystem::path& path);
RxNet load_checkpoint(const std::filesystem::path& path);

struct BitBatch {
    int bits_per_symbol = 0;
    std::vector<std::uint8_t> bits;  // N x m, row-major
    std::vector<double> llrs;        // N x m, row-major

    std::size_t symbols() const noexcept { return bits_per_symbol ? bits.size() / bits_per_symbol : 0; }
    void validate() const;
};

// Bits of each label, row-major N x m.
std::vector<std::uint8_t> label_bits(std::span<const std::uint32_t> labels, int bits_per_symbol);

// Mean over all N*m entries of ln(1 + exp(-(2b - 1) LLR)).
template <class T>
T bce_loss(std::span<const std::uint8_t> bits, std::span<const T> llrs) {
    if (bits.empty() || bits.size() != llrs.size()) throw std::invalid_argument("bce_loss: empty or mismatched batch");
    T sum = 0.0;
    for (std::size_t i = 0; i < bits.size(); ++i) sum = sum + numgrad::softplus(bits[i] ? -llrs[i] : llrs[i]);
    return sum / static_cast<double>(bits.size());
}

double bce_loss(const BitBatch& batch);

// m - (1/N) sum_k sum_i log2(1 + exp(-(2b - 1) LLR)), in bit/symbol.
double bmi(const BitBatch& batch);

// Exact bitwise LLRs for complex AWGN of variance noise_var around the
// given points (log-sum-exp over each bit's subsets).
std::vector<double> exact_llrs(std::span<const CplxD> y, std::span<const CplxD> points, int bits_per_symbol,
                               double noise_var);

}  // namespace vvgcs::demapper

#endif  // VVGCS_DEMAPPER_HPP
