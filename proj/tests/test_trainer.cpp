#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <vector>

#include "vvgcs/constellation.hpp"
#include "vvgcs/sweep.hpp"
#include "vvgcs/trainer.hpp"

using namespace vvgcs;
using namespace vvgcs::trainer;

namespace {

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.batch_len = 512;
    cfg.batches = 5;
    cfg.half_window = 16;
    cfg.hidden = {16, 16};
    return cfg;
}

}  // namespace

TEST_CASE("Adam: zero gradient leaves parameters unchanged") {
    std::vector<double> p{1.0, -2.0, 3.0};
    const std::vector<double> g(3, 0.0);
    AdamState s(3);
    for (int i = 0; i < 10; ++i) adam_step(p, g, s, 0.1);
    CHECK(p == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("Adam: first step has size lr whatever the gradient scale") {
    for (double scale : {1e-6, 1.0, 1e6}) {
        std::vector<double> p{0.0, 0.0};
        const std::vector<double> g{scale, -3 * scale};
        AdamState s(2);
        adam_step(p, g, s, 1e-3);
        CHECK(p[0] == doctest::Approx(-1e-3).epsilon(1e-4));
        CHECK(p[1] == doctest::Approx(1e-3).epsilon(1e-4));
    }
}

TEST_CASE("Adam minimizes a quadratic bowl") {
    const std::vector<double> target{1.5, -0.7, 0.2, 3.0};
    const std::vector<double> curvature{1.0, 4.0, 0.5, 2.0};
    std::vector<double> p(4, 0.0);
    AdamState s(4);
    int steps = 0;
    auto dist = [&] {
        double d = 0;
        for (int i = 0; i < 4; ++i) d = std::max(d, std::abs(p[i] - target[i]));
        return d;
    };
    while (dist() > 1e-6 && steps < 5000) {
        std::vector<double> g(4);
        for (int i = 0; i < 4; ++i) g[i] = curvature[i] * (p[i] - target[i]);
        const double lr = steps < 2000 ? 0.05 : (steps < 3500 ? 5e-3 : 5e-4);
        adam_step(p, g, s, lr);
        ++steps;
    }
    CHECK(dist() <= 1e-6);
    CHECK(steps <= 5000);
}

TEST_CASE("gradient clipping") {
    std::vector<double> g{3.0, 4.0};
    CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
    CHECK(g == std::vector<double>{3.0, 4.0});
    CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
    CHECK(g[0] == doctest::Approx(0.6));
    CHECK(g[1] == doctest::Approx(0.8));
}

TEST_CASE("learning rate schedule") {
    TrainConfig cfg;
    CHECK(cfg.learning_rate(0) == cfg.lr);
    CHECK(cfg.learning_rate(cfg.lr_decay_every) == doctest::Approx(cfg.lr * cfg.lr_decay));
    CHECK(cfg.learning_rate(2 * cfg.lr_decay_every + 1) == doctest::Approx(cfg.lr * cfg.lr_decay * cfg.lr_decay));
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.mu = 1;
    CHECK_THROWS(cfg.validate());
    cfg = TrainConfig{};
    cfg.partitions = -1;
    CHECK_THROWS(cfg.validate());
    cfg = TrainConfig{};
    cfg.batch_len = 10;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("zero output layer gives m ln 2 at step 0") {
    for (int L : {0, 1}) {
        auto cfg = small_config();
        cfg.partitions = L;
        const auto model = initial_model(cfg);
        const auto batch = make_batch(cfg, 0);
        const auto flat = model.flatten();
        CHECK(pipeline_loss(cfg, model, flat, batch) == doctest::Approx(6 * std::numbers::ln2).epsilon(1e-12));
    }
}

TEST_CASE("flatten and with_params are inverse") {
    auto cfg = small_config();
    cfg.partitions = 2;
    const auto model = initial_model(cfg);
    auto flat = model.flatten();
    CHECK(flat.size() == model.layout().total());
    CHECK(model.layout().points == 128);
    CHECK(model.layout().partition == 6);
    for (auto& v : flat) v *= 1.5;
    CHECK(model.with_params(flat).flatten() == flat);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    auto cfg = small_config();
    cfg.lr = 0.0;
    cfg.partitions = 1;
    const auto before = initial_model(cfg);
    const auto r = train(cfg);
    CHECK(r.loss.size() == 5);
    CHECK(r.partition.flatten() == before.partition.flatten());
    CHECK(r.net == before.net);
    const auto norm = normalize(before.constellation);
    for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(r.constellation[i] - norm[i]) < 1e-15);
}

TEST_CASE("training is deterministic") {
    auto cfg = small_config();
    cfg.partitions = 1;
    const auto a = train(cfg);
    const auto b = train(cfg);
    CHECK(a.loss == b.loss);
    CHECK(a.constellation == b.constellation);
    CHECK(a.net == b.net);
    CHECK(a.partition.flatten() == b.partition.flatten());
    for (double l : a.loss) CHECK(std::isfinite(l));
    CHECK(std::abs(a.constellation.mean_power() - 1.0) < 1e-9);
}

TEST_CASE("checkpoint callback cadence") {
    auto cfg = small_config();
    cfg.batches = 7;
    std::vector<int> seen;
    train(cfg, [&](int done, const TrainReport&) { seen.push_back(done); }, 3);
    CHECK(seen == std::vector<int>{3, 6, 7});
}

TEST_CASE("symmetry-line distance") {
    std::vector<std::complex<double>> on_lines;
    for (int i = 0; i < 16; ++i) on_lines.push_back(std::polar(0.5 + 0.1 * (i / 4), 0.3 + (i % 4) * std::numbers::pi / 2));
    CHECK(mean_symmetry_line_distance(Constellation(4, on_lines), 4) < 1e-9);
    const double qam = mean_symmetry_line_distance(square_qam_gray(6), 4);
    CHECK(qam > 0.1);
    CHECK(qam < std::numbers::pi / 4);
}

TEST_CASE("smoke training beats the untrained QAM system on AWGN") {
    TrainConfig cfg;
    cfg.snr_db = 25.0;
    cfg.linewidth_hz = 0.0;
    cfg.batches = 300;
    const auto r = train(cfg);
    CHECK(r.loss.back() < r.loss.front());

    cpe::CpeConfig cp = cfg.cpe_config(r.partition);
    const sweep::System trained{"trained", r.constellation, cp, r.net};
    const auto init = initial_model(cfg);
    const sweep::System untrained{"init", normalize(init.constellation), cp, init.net};
    const std::uint64_t seed = 99;
    const double after = sweep::run_repetition(trained, 25.0, 0.0, 32e9, 1 << 15, seed);
    const double before = sweep::run_repetition(untrained, 25.0, 0.0, 32e9, 1 << 15, seed);
    INFO("initial " << before << ", trained " << after);
    CHECK(after > before);
    CHECK(after > 5.5);
}
