#ifndef VVGCS_CHANNEL_HPP
#define VVGCS_CHANNEL_HPP

// AWGN followed by Wiener phase noise: z_k = (x_k + n_k) e^{j phi_k}.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "vvgcs/complex.hpp"
#include "vvgcs/rng.hpp"

namespace vvgcs::channel {

struct ChannelParams {
    double snr_db = 20.0;  // +inf disables the noise
    double linewidth_hz = 100e3;
    double symbol_rate_baud = 32e9;
    std::uint64_t seed = 0;
    // Starting phase phi_0; uniform on [0, 2pi) when unset.
    std::optional<double> initial_phase;

    void validate() const;
};

struct ChannelRealization {
    std::vector<CplxD> noise;
    std::vector<double> phase;  // cumulative phi_k
};

// Wiener increment variance 2 pi dnu / R_S.
double phase_variance(const ChannelParams& p);

// Complex noise variance for unit signal power.
double noise_variance(const ChannelParams& p);
double noise_variance(double snr_db);

// Draws n symbols worth of noise and phase from the params' seed. Noise and
// phase use separate substreams.
ChannelRealization realize(const ChannelParams& p, std::size_t n);

template <class T>
std::vector<Cplx<T>> apply(std::span<const Cplx<T>> x, const ChannelRealization& r) {
    if (x.empty()) throw std::invalid_argument("channel: empty symbol sequence");
    if (r.noise.size() < x.size() || r.phase.size() < x.size())
        throw std::invalid_argument("channel: realization shorter than the symbol sequence");
    std::vector<Cplx<T>> z;
    z.reserve(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const Cplx<T> noisy{x[k].re + r.noise[k].re, x[k].im + r.noise[k].im};
        const CplxD rot = cexp_j(r.phase[k]);
        z.push_back({noisy.re * rot.re - noisy.im * rot.im, noisy.re * rot.im + noisy.im * rot.re});
    }
    return z;
}

// Logs a warning when the mean power of x is more than 1% away from unity.
void check_unit_power(std::span<const CplxD> x);

// Realizes the channel from p.seed and applies it.
std::vector<CplxD> apply(std::span<const CplxD> x, const ChannelParams& p);

}  // namespace vvgcs::channel

#endif  // VVGCS_CHANNEL_HPP
