#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <random>
#include <sstream>
#include <string>

#include "vvgcs/constellation.hpp"
#include "vvgcs/numgrad.hpp"

using namespace vvgcs;

namespace {

Constellation random_constellation(int m, std::uint64_t seed) {
    auto rng = make_stream(seed, {hash_name("test-points")});
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<std::complex<double>> pts(std::size_t{1} << m);
    for (auto& p : pts) p = {g(rng), g(rng)};
    return Constellation(m, pts);
}

}  // namespace

TEST_CASE("Gray 64-QAM corner and power") {
    const auto c = square_qam_gray(6);
    CHECK(c.mean_power() == doctest::Approx(1.0).epsilon(1e-12));
    const double corner = 7.0 / std::sqrt(42.0);
    int corners = 0;
    for (auto p : c.points())
        if (std::abs(std::abs(p.real()) - corner) < 1e-12 && std::abs(std::abs(p.imag()) - corner) < 1e-12) ++corners;
    CHECK(corners == 4);
    // Label 0 is a corner in the binary-reflected Gray layout.
    CHECK(std::abs(std::abs(c[0].real()) - corner) < 1e-12);
    CHECK(std::abs(std::abs(c[0].imag()) - corner) < 1e-12);
}

TEST_CASE("Gray labelling: neighbours differ in one bit") {
    const auto c = square_qam_gray(6);
    const double step = 2.0 / std::sqrt(42.0);
    for (std::uint32_t a = 0; a < 64; ++a)
        for (std::uint32_t b = a + 1; b < 64; ++b)
            if (std::abs(std::abs(c[a] - c[b]) - step) < 1e-9) CHECK(__builtin_popcount(a ^ b) == 1);
}

TEST_CASE("map_bits") {
    const auto c = square_qam_gray(6);
    const std::vector<std::uint8_t> bits{0, 1, 1, 1, 1, 1};
    CHECK(c.map_bits(bits) == c[0x1F]);
    CHECK(label_from_bits(bits) == 0x1Fu);
    CHECK(bits_from_label(0x1F, 6) == bits);
    const std::vector<std::uint8_t> short_bits{0, 1};
    CHECK_THROWS_AS(c.map_bits(short_bits), std::invalid_argument);
    std::complex<double> power = 0;
    double p = 0;
    for (std::uint32_t l = 0; l < 64; ++l) p += std::norm(c.map_bits(bits_from_label(l, 6)));
    CHECK(p / 64 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normalize") {
    std::vector<std::complex<double>> pts;
    for (int i = 0; i < 4; ++i) pts.push_back(std::polar(2.0, 0.3 + i));
    const auto n = normalize(Constellation(2, pts));
    for (auto p : n.points()) CHECK(std::abs(p) == doctest::Approx(1.0).epsilon(1e-12));

    const auto q = square_qam_gray(6);
    const auto q2 = normalize(q);
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(std::abs(q[i] - q2[i]) < 1e-12);

    const auto r = normalize(random_constellation(6, 5));
    CHECK(std::abs(r.mean_power() - 1.0) < 1e-9);

    CHECK_THROWS_AS(normalize(Constellation(1, {0.0, 0.0})), std::invalid_argument);
}

TEST_CASE("differentiable normalization keeps unit power") {
    numgrad::Tape t;
    const auto c = random_constellation(4, 9);
    std::vector<CplxV> pts;
    for (auto p : c.points()) pts.push_back({t.leaf(p.real()), t.leaf(p.imag())});
    const auto n = normalize_points<numgrad::Var>(pts);
    double power = 0;
    for (const auto& p : n) power += cabs2(value(p));
    CHECK(power / 16 == doctest::Approx(1.0).epsilon(1e-12));
    // Total power does not depend on the raw points, so its gradient vanishes.
    numgrad::Var total = 0.0;
    for (const auto& p : n) total = total + cabs2(p);
    std::vector<numgrad::Var> leaves;
    for (const auto& p : pts) {
        leaves.push_back(p.re);
        leaves.push_back(p.im);
    }
    for (double g : numgrad::gradient(t, total, leaves)) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("TSV row format") {
    std::vector<std::complex<double>> pts(64, {0.1, 0.1});
    pts[0x1F] = {0.5, -0.25};
    std::ostringstream os;
    write_tsv(os, Constellation(6, pts));
    CHECK(os.str().find("\n0.5\t-0.25\t1F\n") != std::string::npos);
    CHECK(format_label(0x1F, 6) == "1F");
    CHECK(format_label(3, 6) == "03");
}

TEST_CASE("TSV round trip is exact") {
    const auto c = random_constellation(6, 21);
    std::stringstream ss;
    write_tsv(ss, c);
    CHECK(read_tsv(ss) == c);
}

TEST_CASE("TSV parse errors name the line") {
    std::istringstream empty("");
    CHECK_THROWS_AS(read_tsv(empty), ParseError);

    std::istringstream dup("real\timag\tlabel\n1\t0\t0\n0\t1\t0\n");
    try {
        read_tsv(dup);
        FAIL("duplicate label accepted");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }

    std::istringstream bad("1\t0\t0\n0\tx\t1\n");
    try {
        read_tsv(bad);
        FAIL("bad number accepted");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }

    std::istringstream count("1\t0\t0\n0\t1\t1\n1\t1\t2\n");
    CHECK_THROWS_AS(read_tsv(count), ParseError);

    std::istringstream cols("1\t0\n");
    CHECK_THROWS_AS(read_tsv(cols), ParseError);
}

TEST_CASE("perturbed QAM stays normalized and near QAM") {
    auto rng = make_stream(1, {hash_name("init")});
    const auto c = perturbed_qam(6, 0.01, rng);
    const auto q = square_qam_gray(6);
    CHECK(c.mean_power() == doctest::Approx(1.0).epsilon(1e-12));
    double worst = 0;
    for (std::size_t i = 0; i < 64; ++i) worst = std::max(worst, std::abs(c[i] - q[i]));
    CHECK(worst > 0.0);
    CHECK(worst < 0.1);
}

TEST_CASE("format_double round-trips") {
    for (double v : {0.1, -0.25, 1.0 / 3.0, 6.02214076e23, -1e-300})
        CHECK(std::stod(format_double(v)) == v);
}
