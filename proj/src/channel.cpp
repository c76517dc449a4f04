#include "vvgcs/channel.hpp"

#include <cmath>
#include <iostream>
#include <numbers>
#include <random>

namespace vvgcs::channel {

void ChannelParams::validate() const {
    if (!(symbol_rate_baud > 0.0)) throw std::invalid_argument("channel: symbol rate must be positive");
    if (!(linewidth_hz >= 0.0)) throw std::invalid_argument("channel: linewidth must be non-negative");
    if (std::isnan(snr_db)) throw std::invalid_argument("channel: SNR is NaN");
}

double phase_variance(const ChannelParams& p) {
    p.validate();
    return 2.0 * std::numbers::pi * p.linewidth_hz / p.symbol_rate_baud;
}

double noise_variance(double snr_db) {
    if (std::isinf(snr_db) && snr_db > 0) return 0.0;
    return std::pow(10.0, -snr_db / 10.0);
}

double noise_variance(const ChannelParams& p) { return noise_variance(p.snr_db); }

ChannelRealization realize(const ChannelParams& p, std::size_t n) {
    p.validate();
    ChannelRealization r;
    r.noise.assign(n, CplxD{});
    r.phase.assign(n, 0.0);

    const double sigma_n2 = noise_variance(p);
    if (sigma_n2 > 0.0) {
        auto rng = make_stream(p.seed, {hash_name("noise")});
        std::normal_distribution<double> gauss(0.0, std::sqrt(sigma_n2 / 2.0));
        for (auto& w : r.noise) {
            w.re = gauss(rng);
            w.im = gauss(rng);
        }
    }

    auto rng = make_stream(p.seed, {hash_name("phase")});
    double phi = 0.0;
    if (p.initial_phase) {
        phi = *p.initial_phase;
    } else {
        std::uniform_real_distribution<double> uni(0.0, 2.0 * std::numbers::pi);
        phi = uni(rng);
    }
    const double sigma_phi = std::sqrt(phase_variance(p));
    std::normal_distribution<double> step(0.0, sigma_phi > 0.0 ? sigma_phi : 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        if (k > 0 && sigma_phi > 0.0) phi += step(rng);
        r.phase[k] = phi;
    }
    return r;
}

void check_unit_power(std::span<const CplxD> x) {
    if (x.empty()) return;
    double s = 0.0;
    for (const auto& v : x) s += v.re * v.re + v.im * v.im;
    const double mean = s / static_cast<double>(x.size());
    if (std::abs(mean - 1.0) > 0.01)
        std::cerr << "warning: channel input mean power " << mean << " deviates from 1 by more than 1%\n";
}

std::vector<CplxD> apply(std::span<const CplxD> x, const ChannelParams& p) {
    if (x.empty()) throw std::invalid_argument("channel: empty symbol sequence");
    check_unit_power(x);
    return apply<double>(x, realize(p, x.size()));
}

}  // namespace vvgcs::channel
