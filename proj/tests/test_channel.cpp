#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "vvgcs/channel.hpp"
#include "vvgcs/constellation.hpp"

using namespace vvgcs;
using namespace vvgcs::channel;

namespace {

std::vector<CplxD> qam_symbols(std::size_t n, std::uint64_t seed) {
    const auto pts = square_qam_gray(6).as_pairs();
    auto rng = make_stream(seed, {hash_name("symbols")});
    std::vector<CplxD> x(n);
    for (auto& s : x) s = pts[rng() % 64];
    return x;
}

}  // namespace

TEST_CASE("Wiener increment variance") {
    ChannelParams p;
    p.linewidth_hz = 100e3;
    p.symbol_rate_baud = 32e9;
    CHECK(phase_variance(p) == doctest::Approx(2 * std::numbers::pi * 1e5 / 3.2e10).epsilon(1e-12));
    CHECK(phase_variance(p) == doctest::Approx(1.9635e-5).epsilon(1e-4));
    p.linewidth_hz = 1e6;
    CHECK(phase_variance(p) == doctest::Approx(1.9635e-4).epsilon(1e-4));
    p.linewidth_hz = 0;
    CHECK(phase_variance(p) == 0.0);
}

TEST_CASE("noise variance from SNR") {
    CHECK(noise_variance(20.0) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(noise_variance(std::numeric_limits<double>::infinity()) == 0.0);
}

TEST_CASE("identity channel") {
    const auto x = qam_symbols(1000, 1);
    ChannelParams p{std::numeric_limits<double>::infinity(), 0.0, 32e9, 4, 0.0};
    const auto z = channel::apply(std::span<const CplxD>(x), p);
    for (std::size_t k = 0; k < x.size(); ++k) {
        CHECK(z[k].re == x[k].re);
        CHECK(z[k].im == x[k].im);
    }
}

TEST_CASE("constant rotation without linewidth") {
    const auto x = qam_symbols(500, 2);
    ChannelParams p{20.0, 0.0, 32e9, 8, 0.7};
    const auto r = realize(p, x.size());
    const auto z = channel::apply<double>(x, r);
    for (std::size_t k = 0; k < x.size(); ++k) {
        CHECK(r.phase[k] == 0.7);
        const auto expect = (to_std(x[k]) + to_std(r.noise[k])) * std::polar(1.0, 0.7);
        CHECK(std::abs(to_std(z[k]) - expect) < 1e-14);
    }
}

TEST_CASE("noise power at 20 dB") {
    const std::size_t n = 1000000;
    ChannelParams p{20.0, 0.0, 32e9, 12, 0.0};
    const auto r = realize(p, n);
    double sum = 0, sum2 = 0;
    for (const auto& w : r.noise) {
        const double e = cabs2(w);
        sum += e;
        sum2 += e * e;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(std::abs(mean - 0.01) < 3 * se);
}

TEST_CASE("phase increments have the Wiener variance") {
    const std::size_t n = 200000;
    ChannelParams p{std::numeric_limits<double>::infinity(), 1e6, 32e9, 3, 0.0};
    const auto r = realize(p, n);
    double s2 = 0;
    for (std::size_t k = 1; k < n; ++k) s2 += (r.phase[k] - r.phase[k - 1]) * (r.phase[k] - r.phase[k - 1]);
    CHECK(s2 / (n - 1) == doctest::Approx(phase_variance(p)).epsilon(0.03));
}

TEST_CASE("seeded realizations") {
    ChannelParams p{18.0, 500e3, 32e9, 77, std::nullopt};
    const auto a = realize(p, 256);
    const auto b = realize(p, 256);
    CHECK(a.phase == b.phase);
    for (std::size_t k = 0; k < 256; ++k) CHECK((a.noise[k].re == b.noise[k].re && a.noise[k].im == b.noise[k].im));
    CHECK(a.phase[0] >= 0.0);
    CHECK(a.phase[0] < 2 * std::numbers::pi);
    p.seed = 78;
    const auto c = realize(p, 256);
    CHECK(c.phase != a.phase);
}

TEST_CASE("invalid input") {
    std::vector<CplxD> empty;
    ChannelParams p;
    CHECK_THROWS_AS(channel::apply(std::span<const CplxD>(empty), p), std::invalid_argument);
    p.linewidth_hz = -1;
    CHECK_THROWS(p.validate());
}
