#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "vvgcs/sweep.hpp"

using namespace vvgcs;
using namespace vvgcs::sweep;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("vvgcs_test_sweep_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

System plain_qam() {
    cpe::CpeConfig c;
    c.vv = {4, 32};
    return {"qam64", square_qam_gray(6), c, std::nullopt};
}

SweepGrid small_grid() {
    SweepGrid g;
    g.snrs_db = {19.0};
    g.linewidths_hz = {100e3};
    g.reps = 3;
    g.symbols_per_rep = 8192;
    return g;
}

}  // namespace

TEST_CASE("result line format") {
    SweepResult r;
    r.rows.push_back({19.0, 100000.0, 5.1, 0.02, "x"});
    std::ostringstream os;
    write_results(os, r);
    CHECK(os.str() == "linewidth mean stddev snr\n100000 5.1 0.02 19.00\n");
}

TEST_CASE("empty result is a header-only file") {
    std::ostringstream os;
    write_results(os, SweepResult{});
    CHECK(os.str() == "linewidth mean stddev snr\n");
    std::istringstream is(os.str());
    CHECK(read_results(is).rows.empty());
}

TEST_CASE("results round trip") {
    SweepResult r;
    r.rows.push_back({15.0, 0.0, 4.123456789012345, 0.0123456789, "s"});
    r.rows.push_back({17.5, 250000.0, 5.0, 1e-5, "s"});
    const auto dir = scratch("roundtrip");
    export_results(r, dir / "r.txt");
    CHECK(import_results(dir / "r.txt", "s") == r);

    std::istringstream bad("linewidth mean stddev snr\n1 2 3\n");
    CHECK_THROWS(read_results(bad));
    std::istringstream header("lw mean\n");
    CHECK_THROWS(read_results(header));
}

TEST_CASE("grid validation") {
    auto g = small_grid();
    g.reps = 1;
    CHECK_THROWS(g.validate());
    g = small_grid();
    g.linewidths_hz.clear();
    CHECK_THROWS(g.validate());
    g = small_grid();
    g.snrs_db.clear();
    CHECK_THROWS(g.validate());
}

TEST_CASE("equal repetition seeds give zero spread") {
    auto g = small_grid();
    g.equal_rep_seeds = true;
    const auto r = run_sweep(plain_qam(), g);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0].bmi_stddev == 0.0);
}

TEST_CASE("cell results do not depend on grid order") {
    auto g = small_grid();
    g.snrs_db = {15.0, 19.0};
    g.linewidths_hz = {0.0, 500e3};
    g.reps = 2;
    g.symbols_per_rep = 4096;
    auto h = g;
    std::reverse(h.snrs_db.begin(), h.snrs_db.end());
    std::reverse(h.linewidths_hz.begin(), h.linewidths_hz.end());
    h.workers = 2;
    const auto a = run_sweep(plain_qam(), g);
    const auto b = run_sweep(plain_qam(), h);
    REQUIRE(a.rows.size() == 4);
    CHECK(a.rows[0].snr_db == 15.0);
    CHECK(a.rows[0].linewidth_hz == 0.0);
    CHECK(a.rows[1].linewidth_hz == 500e3);
    for (const auto& row : a.rows) {
        const auto it = std::find_if(b.rows.begin(), b.rows.end(), [&](const Row& o) {
            return o.snr_db == row.snr_db && o.linewidth_hz == row.linewidth_hz;
        });
        REQUIRE(it != b.rows.end());
        CHECK(it->bmi_mean == row.bmi_mean);
        CHECK(it->bmi_stddev == row.bmi_stddev);
    }
}

TEST_CASE("BMI falls with linewidth") {
    auto g = small_grid();
    g.linewidths_hz = {0.0, 300e3, 1e6};
    g.reps = 4;
    g.symbols_per_rep = 16384;
    const auto r = run_sweep(plain_qam(), g);
    REQUIRE(r.rows.size() == 3);
    CHECK(r.rows[0].bmi_mean > r.rows[1].bmi_mean);
    CHECK(r.rows[1].bmi_mean > r.rows[2].bmi_mean);
}

namespace {

// Bitwise MI of Gray 64-QAM on AWGN with known phase, from symbol posteriors
// on separately drawn samples.
double awgn_oracle(double snr) {
    const auto pts = square_qam_gray(6).as_pairs();
    const double nv = std::pow(10.0, -snr / 10.0);
    auto rng = make_stream(5, {hash_name("oracle")});
    std::normal_distribution<double> g(0.0, std::sqrt(nv / 2));
    const int n = 100000;
    double sum = 0;
    for (int k = 0; k < n; ++k) {
        const auto l = static_cast<std::uint32_t>(rng() % 64);
        const CplxD y{pts[l].re + g(rng), pts[l].im + g(rng)};
        double lik[64];
        double mx = -1e300;
        for (int i = 0; i < 64; ++i) {
            lik[i] = -cabs2(csub(y, pts[i])) / nv;
            mx = std::max(mx, lik[i]);
        }
        double total = 0;
        for (double& v : lik) total += (v = std::exp(v - mx));
        for (int b = 0; b < 6; ++b) {
            double same = 0;
            for (int i = 0; i < 64; ++i)
                if (label_bit(i, b, 6) == label_bit(l, b, 6)) same += lik[i];
            sum += std::log2(same / total);
        }
    }
    return 6.0 + sum / n;
}

double zero_linewidth_bmi(const System& s) {
    auto grid = small_grid();
    grid.linewidths_hz = {0.0};
    grid.reps = 4;
    grid.symbols_per_rep = 1 << 16;
    return run_sweep(s, grid).rows.at(0).bmi_mean;
}

}  // namespace

// With no phase noise the only loss left is the estimator's own jitter; a
// long window removes it, leaving the AWGN bound.
TEST_CASE("QAM baseline with a long window matches the AWGN oracle at zero linewidth") {
    const double oracle = awgn_oracle(19.0);
    const double hard = zero_linewidth_bmi(qam_hard_baseline(2, 256));
    auto plain = plain_qam();
    plain.cpe.vv.half_window = 256;
    const double soft = zero_linewidth_bmi(plain);
    INFO("oracle " << oracle << ", hard two-ring " << hard << ", plain " << soft);
    CHECK(std::abs(hard - oracle) < 0.03);
    CHECK(std::abs(soft - oracle) < 0.03);
    CHECK(hard <= oracle + 0.01);
}

// Same comparison with the default window K = 32, sized for phase-noise
// tracking. V&V jitter on 64-QAM costs 0.2-0.3 bit here, so the 0.03 bound
// is not met; kept as a known failure.
TEST_CASE("QAM baseline with the default window matches the AWGN oracle at zero linewidth" *
          doctest::should_fail()) {
    const double oracle = awgn_oracle(19.0);
    const double hard = zero_linewidth_bmi(qam_hard_baseline(2, 32));
    INFO("oracle " << oracle << ", hard two-ring " << hard);
    CHECK(std::abs(hard - oracle) < 0.03);
}

TEST_CASE("system directories round trip") {
    const auto dir = scratch("system");
    auto s = qam_hard_baseline(2, 32);
    save_system(s, dir / "hard");
    const auto back = load_system(dir / "hard");
    CHECK(back.id == s.id);
    CHECK(back.constellation == s.constellation);
    CHECK(back.cpe.variant == cpe::Variant::HardPartition);
    CHECK(back.cpe.hard_rings == 2);
    CHECK(!back.net.has_value());

    System soft = plain_qam();
    soft.id = "soft";
    soft.cpe.variant = cpe::Variant::SoftPartition;
    soft.cpe.partition = cpe::default_partition(2);
    auto rng = make_stream(1, {hash_name("n")});
    soft.net = demapper::RxNet::initialized({2, 8, 6}, rng, false);
    save_system(soft, dir / "soft");
    const auto sb = load_system(dir / "soft");
    CHECK(sb.cpe.partition.flatten() == soft.cpe.partition.flatten());
    CHECK(*sb.net == *soft.net);
    CHECK(sb.cpe.smooth_radius == soft.cpe.smooth_radius);
}

TEST_CASE("missing artifacts are reported") {
    const auto dir = scratch("missing");
    save_system(plain_qam(), dir / "s");
    fs::remove(dir / "s" / "constellation.tsv");
    CHECK_THROWS(load_system(dir / "s"));
    CHECK_THROWS(load_system(dir / "nowhere"));
}

TEST_CASE("manifest records artifact hashes") {
    const auto dir = scratch("manifest");
    {
        std::ofstream f(dir / "hello.txt", std::ios::binary);
        f << "hello\n";
    }
    // git hash-object of "hello\n"
    CHECK(git_blob_hash(dir / "hello.txt") == "ce013625030ba8dba906f756967f9e9ca394464a");
    write_manifest(dir / "m.json", plain_qam(), small_grid(), {dir / "hello.txt"});
    std::ifstream in(dir / "m.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j["system_id"] == "qam64");
    CHECK(j.dump().find("ce013625030ba8dba906f756967f9e9ca394464a") != std::string::npos);
}
