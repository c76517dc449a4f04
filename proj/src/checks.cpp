#include "vvgcs/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "vvgcs/channel.hpp"
#include "vvgcs/cpe.hpp"
#include "vvgcs/demapper.hpp"
#include "vvgcs/rng.hpp"

namespace vvgcs::checks {

using numgrad::Tape;
using numgrad::Var;

Fault fault_from_string(const std::string& s) {
    if (s.empty() || s == "none") return Fault::None;
    if (s == "carg-sign") return Fault::CargSign;
    throw std::invalid_argument("unknown fault '" + s + "' (expected none or carg-sign)");
}

trainer::Model gradient_check_model(const trainer::TrainConfig& cfg) {
    auto model = trainer::initial_model(cfg);
    auto rng = make_stream(cfg.seed, {hash_name("gradient-check-net")});
    model.net = demapper::RxNet::initialized(cfg.net_sizes(), rng, false);
    return model;
}

GradientCheck pipeline_gradient_check(const trainer::TrainConfig& cfg, const trainer::Model& model,
                                      const trainer::BatchData& batch, int directions, std::uint64_t seed, double h) {
    const auto lay = model.layout();
    const auto flat = model.flatten();
    std::vector<double> grad;
    trainer::pipeline_loss(cfg, model, flat, batch, &grad);

    struct Group {
        std::size_t offset;
        std::size_t size;
    };
    std::vector<Group> groups{{0, lay.points}};
    if (lay.partition > 0) groups.push_back({lay.partition_offset(), lay.partition});
    groups.push_back({lay.net_offset(), lay.net});
    groups.push_back({0, lay.total()});

    auto rng = make_stream(seed, {hash_name("directions")});
    std::normal_distribution<double> normal;
    GradientCheck out;
    std::vector<double> plus(flat.size());
    std::vector<double> minus(flat.size());
    for (int d = 0; d < directions; ++d) {
        const auto g = groups[static_cast<std::size_t>(d) % groups.size()];
        std::vector<double> dir(flat.size(), 0.0);
        double norm = 0.0;
        for (std::size_t i = g.offset; i < g.offset + g.size; ++i) {
            dir[i] = normal(rng);
            norm += dir[i] * dir[i];
        }
        norm = std::sqrt(norm);
        double analytic = 0.0;
        for (std::size_t i = 0; i < flat.size(); ++i) {
            dir[i] /= norm;
            analytic += grad[i] * dir[i];
            plus[i] = flat[i] + h * dir[i];
            minus[i] = flat[i] - h * dir[i];
        }
        const double fd = (trainer::pipeline_loss(cfg, model, plus, batch) -
                           trainer::pipeline_loss(cfg, model, minus, batch)) /
                          (2.0 * h);
        const double rel = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-8});
        out.max_rel_error = std::max(out.max_rel_error, rel);
        ++out.directions;
    }
    return out;
}

namespace {

struct Check {
    std::string name;
    std::function<Outcome(Fault)> run;
};

Outcome result(const std::string& name, bool ok, const std::string& detail) { return {name, ok, detail}; }

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

PhiloxEngine check_rng(const std::string& name) { return make_stream(20240607, {hash_name(name)}); }

Outcome scalar_gradient_check(const std::string& name, bool use_arg, Fault fault) {
    auto rng = check_rng(name);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double worst = 0.0;
    const double h = 1e-6;
    for (int i = 0; i < 200; ++i) {
        const double re = u(rng);
        const double im = u(rng);
        if (std::hypot(re, im) < 0.05) continue;
        Tape tape;
        const Var vre = tape.leaf(re);
        const Var vim = tape.leaf(im);
        const CplxV z{vre, vim};
        const Var f = use_arg ? carg(z) : cabs(z);
        const Var wrt[2] = {vre, vim};
        auto g = numgrad::gradient(tape, f, wrt);
        if (use_arg && fault == Fault::CargSign)
            for (auto& x : g) x = -x;
        const auto eval = [&](double a, double b) { return use_arg ? carg(CplxD{a, b}) : cabs(CplxD{a, b}); };
        // Stay clear of the branch cut of arg along the negative real axis.
        if (use_arg && re < 0.0 && std::abs(im) < 2 * h) continue;
        const double fd_re = (eval(re + h, im) - eval(re - h, im)) / (2 * h);
        const double fd_im = (eval(re, im + h) - eval(re, im - h)) / (2 * h);
        worst = std::max({worst, std::abs(g[0] - fd_re) / std::max(std::abs(fd_re), 1e-3),
                          std::abs(g[1] - fd_im) / std::max(std::abs(fd_im), 1e-3)});
    }
    return result(name, worst < 1e-6, "max rel error " + fmt(worst));
}

Outcome pipeline_check(const std::string& name, int partitions) {
    trainer::TrainConfig cfg;
    cfg.partitions = partitions;
    cfg.batch_len = 256;
    cfg.half_window = 16;
    cfg.hidden = {16};
    cfg.seed = 11;
    const auto model = gradient_check_model(cfg);
    const auto batch = trainer::make_batch(cfg, 0);
    const auto gc = pipeline_gradient_check(cfg, model, batch, 8, 5);
    return result(name, gc.max_rel_error < 1e-4,
                  "max rel error " + fmt(gc.max_rel_error) + " over " + std::to_string(gc.directions) + " directions");
}

double wrap(double a) { return std::remainder(a, 2 * std::numbers::pi); }

std::vector<double> random_walk(const std::string& name, std::size_t n, double step) {
    auto rng = check_rng(name);
    std::normal_distribution<double> normal(0.0, step);
    std::vector<double> path(n);
    double acc = 0.0;
    for (auto& p : path) p = acc += normal(rng);
    return path;
}

Outcome unwrap_steps() {
    const std::string name = "unwrap-steps";
    auto wrapped = random_walk(name, 5000, 1.5);
    for (auto& a : wrapped) a = wrap(a);
    const auto u = cpe::unwrap<double>(wrapped);
    double worst = 0.0;
    for (std::size_t k = 1; k < u.size(); ++k) worst = std::max(worst, std::abs(u[k] - u[k - 1]));
    return result(name, worst <= std::numbers::pi + 1e-12, "max step " + fmt(worst));
}

Outcome unwrap_offsets() {
    const std::string name = "unwrap-offsets";
    auto wrapped = random_walk(name, 5000, 2.0);
    for (auto& a : wrapped) a = wrap(a);
    const auto u = cpe::unwrap<double>(wrapped);
    double worst = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        const double turns = (u[k] - wrapped[k]) / (2 * std::numbers::pi);
        worst = std::max(worst, std::abs(turns - std::round(turns)));
    }
    return result(name, worst < 1e-9 && u[0] == wrapped[0], "max fractional turn " + fmt(worst));
}

Outcome unwrap_recovery() {
    const std::string name = "unwrap-recovery";
    const auto path = random_walk(name, 5000, 0.5);
    std::vector<double> wrapped(path.size());
    for (std::size_t k = 0; k < path.size(); ++k) wrapped[k] = wrap(path[k]);
    const auto u = cpe::unwrap<double>(wrapped);
    const double offset = u[0] - path[0];
    double worst = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) worst = std::max(worst, std::abs(u[k] - path[k] - offset));
    return result(name, worst < 1e-9, "max deviation " + fmt(worst));
}

Outcome vv_roots_offset() {
    const std::string name = "vv-roots-offset";
    auto rng = check_rng(name);
    double worst = 0.0;
    for (int mu : {3, 4, 5}) {
        std::uniform_int_distribution<int> pick(0, mu - 1);
        for (double theta : {-0.3, 0.1, 0.25}) {
            std::vector<CplxD> z(400);
            for (auto& s : z) s = cexp_j(2 * std::numbers::pi * pick(rng) / mu + theta);
            const auto t = cpe::vv_estimate<double>(z, {mu, 16});
            for (std::size_t k = 16; k + 16 < z.size(); ++k) worst = std::max(worst, std::abs(t.est[k] - theta));
        }
    }
    return result(name, worst < 1e-9, "max error " + fmt(worst));
}

Outcome vv_equivalence() {
    const std::string name = "vv-equivalence";
    auto rng = check_rng(name);
    std::normal_distribution<double> normal;
    std::vector<CplxD> z(1000);
    for (auto& s : z) s = {normal(rng), normal(rng)};
    const cpe::VVParams p{4, 16};
    std::vector<CplxD> unit(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) unit[k] = cscale(z[k], 1.0 / cabs(z[k]));
    const auto ref = cpe::vv_estimate<double>(unit, p);
    const cpe::Ring all_pass{50.0, -100.0, 100.0};
    const auto mod = cpe::vv_modified<double>(z, p, std::span<const cpe::Ring>(&all_pass, 1), cpe::Activation::Sigmoid, 0);
    double worst = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) worst = std::max(worst, std::abs(ref.est[k] - mod.est[k]));
    return result(name, worst < 1e-9, "max difference " + fmt(worst));
}

Outcome vv_rotation() {
    const std::string name = "vv-rotation";
    auto rng = check_rng(name);
    const auto qam = square_qam_gray(6).as_pairs();
    std::uniform_int_distribution<std::size_t> pick(0, qam.size() - 1);
    std::normal_distribution<double> normal(0.0, 0.05);
    std::vector<CplxD> z(600);
    for (auto& s : z) s = cadd(qam[pick(rng)], CplxD{normal(rng), normal(rng)});
    const double rot = 0.05;
    std::vector<CplxD> zr(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) zr[k] = cmul(z[k], cexp_j(rot));
    const cpe::VVParams p{4, 16};
    const auto a = cpe::vv_estimate<double>(z, p);
    const auto b = cpe::vv_estimate<double>(zr, p);
    double worst = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        const double d = std::remainder(b.est[k] - a.est[k] - rot, 2 * std::numbers::pi / 4);
        worst = std::max(worst, std::abs(d));
    }
    return result(name, worst < 1e-9, "max deviation " + fmt(worst));
}

Outcome csc_bound() {
    const std::string name = "csc-bound";
    auto rng = check_rng(name);
    std::normal_distribution<double> normal(0.0, 0.1);
    std::uniform_int_distribution<int> slip(-3, 3);
    const int mu = 4;
    const auto truth = random_walk(name, 20000, 0.01);
    std::vector<double> est(truth.size());
    int slips = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        if (k % 997 == 0) slips = slip(rng);
        est[k] = truth[k] + normal(rng) + slips * 2 * std::numbers::pi / mu;
    }
    const auto c = cpe::genie_csc(est, truth, mu);
    double worst = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) worst = std::max(worst, std::abs(c[k] - truth[k]));
    return result(name, worst <= std::numbers::pi / mu + 1e-12, "max residual " + fmt(worst));
}

Outcome wiener_variance() {
    const std::string name = "wiener-variance";
    const channel::ChannelParams p{20.0, 100e3, 32e9, 3, 0.0};
    const auto r = channel::realize(p, 200000);
    double s = 0.0;
    double s2 = 0.0;
    for (std::size_t k = 1; k < r.phase.size(); ++k) {
        const double d = r.phase[k] - r.phase[k - 1];
        s += d;
        s2 += d * d;
    }
    const double n = static_cast<double>(r.phase.size() - 1);
    const double var = s2 / n - (s / n) * (s / n);
    const double expected = channel::phase_variance(p);
    const double rel = std::abs(var / expected - 1.0);
    return result(name, rel < 0.03, "relative deviation " + fmt(rel));
}

// Bitwise MI from per-bit posteriors, computed without the LLR path.
double posterior_bmi(std::span<const CplxD> y, std::span<const std::uint32_t> labels, std::span<const CplxD> points,
                     int m, double noise_var) {
    double acc = 0.0;
    std::vector<double> lik(points.size());
    for (std::size_t k = 0; k < y.size(); ++k) {
        double best = -1e300;
        for (std::size_t j = 0; j < points.size(); ++j) {
            lik[j] = -cabs2(csub(y[k], points[j])) / noise_var;
            best = std::max(best, lik[j]);
        }
        double total = 0.0;
        for (auto& l : lik) total += l = std::exp(l - best);
        for (int i = 0; i < m; ++i) {
            const auto bit = label_bit(labels[k], i, m);
            double match = 0.0;
            for (std::size_t j = 0; j < points.size(); ++j)
                if (label_bit(static_cast<std::uint32_t>(j), i, m) == bit) match += lik[j];
            acc += std::log2(match / total);
        }
    }
    return m + acc / static_cast<double>(y.size());
}

Outcome bmi_awgn_oracle() {
    const std::string name = "bmi-awgn-oracle";
    auto rng = check_rng(name);
    const int m = 6;
    const auto pts = square_qam_gray(m).as_pairs();
    std::uniform_int_distribution<std::uint32_t> pick(0, 63);
    std::vector<std::uint32_t> labels(1 << 13);
    for (auto& l : labels) l = pick(rng);
    const auto x = map_labels<double>(pts, labels);
    const channel::ChannelParams p{19.0, 0.0, 32e9, 9, 0.0};
    const auto y = channel::apply(x, p);
    demapper::BitBatch b{m, demapper::label_bits(labels, m), demapper::exact_llrs(y, pts, m, channel::noise_variance(p))};
    const double toolkit = demapper::bmi(b);
    const double oracle = posterior_bmi(y, labels, pts, m, channel::noise_variance(p));
    const double diff = std::abs(toolkit - oracle);
    return result(name, diff < 1e-9 && toolkit > 0.0 && toolkit < m,
                  "toolkit " + fmt(toolkit) + " vs oracle " + fmt(oracle));
}

Outcome bmi_bounds() {
    const std::string name = "bmi-bounds";
    const int m = 6;
    std::vector<std::uint32_t> labels;
    for (std::uint32_t l = 0; l < 64; ++l) labels.push_back(l);
    demapper::BitBatch b{m, demapper::label_bits(labels, m), std::vector<double>(64 * m, 0.0)};
    const double zero = demapper::bmi(b);
    for (std::size_t i = 0; i < b.bits.size(); ++i) b.llrs[i] = b.bits[i] ? 60.0 : -60.0;
    const double perfect = demapper::bmi(b);
    const bool ok = std::abs(zero) < 1e-12 && perfect <= m && perfect > m - 1e-12;
    return result(name, ok, "zero LLRs " + fmt(zero) + ", confident LLRs " + fmt(perfect));
}

Outcome power_normalization() {
    const std::string name = "power-normalization";
    auto rng = check_rng(name);
    const auto c = perturbed_qam(6, 0.3, rng);
    const std::vector<std::complex<double>> scaled = [&] {
        std::vector<std::complex<double>> v;
        for (auto p : c.points()) v.push_back(3.7 * p);
        return v;
    }();
    const double power = normalize(Constellation(6, scaled)).mean_power();
    return result(name, std::abs(power - 1.0) < 1e-12, "mean power " + fmt(power));
}

Outcome tsv_roundtrip() {
    const std::string name = "tsv-roundtrip";
    auto rng = check_rng(name);
    const auto c = perturbed_qam(6, 0.1, rng);
    std::stringstream ss;
    write_tsv(ss, c);
    const auto back = read_tsv(ss);
    return result(name, back == c, back == c ? "exact" : "mismatch");
}

const std::vector<Check>& registry() {
    static const std::vector<Check> checks{
        {"gradient-carg", [](Fault f) { return scalar_gradient_check("gradient-carg", true, f); }},
        {"gradient-cabs", [](Fault f) { return scalar_gradient_check("gradient-cabs", false, f); }},
        {"gradient-pipeline-L0", [](Fault) { return pipeline_check("gradient-pipeline-L0", 0); }},
        {"gradient-pipeline-L1", [](Fault) { return pipeline_check("gradient-pipeline-L1", 1); }},
        {"unwrap-steps", [](Fault) { return unwrap_steps(); }},
        {"unwrap-offsets", [](Fault) { return unwrap_offsets(); }},
        {"unwrap-recovery", [](Fault) { return unwrap_recovery(); }},
        {"vv-roots-offset", [](Fault) { return vv_roots_offset(); }},
        {"vv-equivalence", [](Fault) { return vv_equivalence(); }},
        {"vv-rotation", [](Fault) { return vv_rotation(); }},
        {"csc-bound", [](Fault) { return csc_bound(); }},
        {"wiener-variance", [](Fault) { return wiener_variance(); }},
        {"bmi-awgn-oracle", [](Fault) { return bmi_awgn_oracle(); }},
        {"bmi-bounds", [](Fault) { return bmi_bounds(); }},
        {"power-normalization", [](Fault) { return power_normalization(); }},
        {"tsv-roundtrip", [](Fault) { return tsv_roundtrip(); }},
    };
    return checks;
}

}  // namespace

std::vector<std::string> check_names() {
    std::vector<std::string> names;
    for (const auto& c : registry()) names.push_back(c.name);
    return names;
}

std::vector<Outcome> run_checks(const std::string& filter, Fault fault, std::ostream& os) {
    std::vector<Outcome> out;
    for (const auto& c : registry()) {
        if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run(fault);
        } catch (const std::exception& e) {
            o = {c.name, false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        os << (o.passed ? "PASS " : "FAIL ") << o.name << ": " << o.detail << " (" << fmt(secs) << " s)\n";
        out.push_back(std::move(o));
    }
    return out;
}

}  // namespace vvgcs::checks
