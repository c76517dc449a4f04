#include "vvgcs/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace vvgcs::trainer {

using numgrad::Var;

// ---- Adam ------------------------------------------------------------------

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s, double lr,
               const AdamOptions& opt) {
    if (params.size() != grads.size() || params.size() != s.m.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    ++s.t;
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        s.m[i] = opt.beta1 * s.m[i] + (1.0 - opt.beta1) * grads[i];
        s.v[i] = opt.beta2 * s.v[i] + (1.0 - opt.beta2) * grads[i] * grads[i];
        const double mhat = s.m[i] / c1;
        const double vhat = s.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
}

double clip_global_norm(std::span<double> grads, double max_norm) {
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (double& g : grads) g *= scale;
    }
    return norm;
}

// ---- configuration -----------------------------------------------------------

void TrainConfig::validate() const {
    if (bits_per_symbol < 1 || bits_per_symbol > 16) throw std::invalid_argument("train: bits per symbol out of range");
    if (batches < 0) throw std::invalid_argument("train: batch count must be >= 0");
    if (batch_len <= static_cast<std::size_t>(2 * half_window))
        throw std::invalid_argument("train: batch length must exceed 2K");
    if (!(lr >= 0.0)) throw std::invalid_argument("train: learning rate must be >= 0");
    if (lr_decay_every < 1) throw std::invalid_argument("train: lr decay interval must be >= 1");
    if (partitions < 0) throw std::invalid_argument("train: number of partitions must be >= 0");
    if (hidden.empty()) throw std::invalid_argument("train: need at least one hidden layer");
    cpe::VVParams{mu, half_window}.validate();
    channel::ChannelParams{snr_db, linewidth_hz, symbol_rate_baud, 0, 0.0}.validate();
    if (init_constellation && init_constellation->bits_per_symbol() != bits_per_symbol)
        throw std::invalid_argument("train: initial constellation has the wrong size");
    if (init_partition && init_partition->size() != static_cast<std::size_t>(partitions))
        throw std::invalid_argument("train: initial partition has the wrong number of rings");
}

double TrainConfig::learning_rate(int batch) const { return lr * std::pow(lr_decay, batch / lr_decay_every); }

cpe::CpeConfig TrainConfig::cpe_config(const cpe::PartitionParams& pp) const {
    cpe::CpeConfig c;
    c.variant = partitions > 0 ? cpe::Variant::SoftPartition : cpe::Variant::Standard;
    c.vv = {mu, half_window};
    c.partition = pp;
    c.activation = activation;
    c.smooth_radius = smooth_radius < 0 ? half_window : smooth_radius;
    c.bits_per_symbol = bits_per_symbol;
    return c;
}

std::vector<int> TrainConfig::net_sizes() const {
    std::vector<int> s{2};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(bits_per_symbol);
    return s;
}

// ---- model -------------------------------------------------------------------

ParamLayout Model::layout() const {
    return {2 * constellation.size(), 3 * partition.size(), net.num_params()};
}

std::vector<double> Model::flatten() const {
    std::vector<double> flat;
    flat.reserve(layout().total());
    for (auto p : constellation.points()) {
        flat.push_back(p.real());
        flat.push_back(p.imag());
    }
    const auto rings = partition.flatten();
    flat.insert(flat.end(), rings.begin(), rings.end());
    flat.insert(flat.end(), net.params().begin(), net.params().end());
    return flat;
}

Model Model::with_params(std::span<const double> flat) const {
    const auto lay = layout();
    if (flat.size() != lay.total()) throw std::invalid_argument("model: flat parameter size mismatch");
    std::vector<std::complex<double>> pts(constellation.size());
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {flat[2 * i], flat[2 * i + 1]};
    Model out{Constellation(constellation.bits_per_symbol(), std::move(pts)),
              cpe::PartitionParams::unflatten(flat.subspan(lay.partition_offset(), lay.partition)), net};
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(lay.net_offset()), lay.net, out.net.params().begin());
    return out;
}

Model initial_model(const TrainConfig& cfg) {
    cfg.validate();
    auto rng = make_stream(cfg.seed, {hash_name("init")});
    Constellation c = cfg.init_constellation ? *cfg.init_constellation
                                             : perturbed_qam(cfg.bits_per_symbol, cfg.init_perturb_std, rng);
    auto net_rng = make_stream(cfg.seed, {hash_name("init-net")});
    auto net = demapper::RxNet::initialized(cfg.net_sizes(), net_rng, true);
    auto pp = cfg.init_partition ? *cfg.init_partition : cpe::default_partition(cfg.partitions);
    return Model{std::move(c), std::move(pp), std::move(net)};
}

BatchData make_batch(const TrainConfig& cfg, int batch_index) {
    const auto b = static_cast<std::uint64_t>(batch_index);
    BatchData data;
    auto rng = make_stream(cfg.seed, {hash_name("bits"), b});
    std::uniform_int_distribution<std::uint32_t> label(0, (1u << cfg.bits_per_symbol) - 1);
    data.labels.resize(cfg.batch_len);
    for (auto& l : data.labels) l = label(rng);
    channel::ChannelParams ch{cfg.snr_db, cfg.linewidth_hz, cfg.symbol_rate_baud,
                              stream_id({cfg.seed, hash_name("channel"), b}), 0.0};
    data.channel = channel::realize(ch, cfg.batch_len);
    return data;
}

// ---- pipeline ------------------------------------------------------------------

double pipeline_loss(const TrainConfig& cfg, const Model& shapes, std::span<const double> flat, const BatchData& batch,
                     std::vector<double>* grad, numgrad::Tape* workspace) {
    const auto lay = shapes.layout();
    if (flat.size() != lay.total()) throw std::invalid_argument("pipeline_loss: flat parameter size mismatch");
    numgrad::Tape local;
    numgrad::Tape& tape = workspace ? *workspace : local;
    tape.clear();

    const auto params = tape.leaves(flat);
    const std::span<const Var> pv(params);

    std::vector<CplxV> raw(shapes.constellation.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = {pv[2 * i], pv[2 * i + 1]};
    const auto points = normalize_points<Var>(raw);
    const auto x = map_labels<Var>(points, batch.labels);
    const auto z = channel::apply<Var>(x, batch.channel);

    const auto cc = cfg.cpe_config(shapes.partition);
    cpe::PhaseTrack<Var> track;
    if (cc.variant == cpe::Variant::SoftPartition) {
        std::vector<cpe::RingT<Var>> rings;
        const auto rp = pv.subspan(lay.partition_offset(), lay.partition);
        for (std::size_t l = 0; l < shapes.partition.size(); ++l) rings.push_back({rp[3 * l], rp[3 * l + 1], rp[3 * l + 2]});
        track = cpe::vv_modified<Var>(z, cc.vv, std::span<const cpe::RingT<Var>>(rings), cc.activation, cc.smooth_radius);
    } else {
        track = cpe::vv_estimate<Var>(z, cc.vv);
    }
    // The trajectory starts at phase 0, so the estimator's 2 pi / mu branch is
    // fixed once, at the first symbol, against the bias of the current
    // constellation. Later slips inside the batch are left alone.
    double offset = 0.0;
    try {
        std::vector<std::complex<double>> pts(points.size());
        for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {points[i].re.value(), points[i].im.value()};
        auto cc_values = cc;
        if (cc.variant == cpe::Variant::SoftPartition)
            cc_values.partition = cpe::PartitionParams::unflatten(flat.subspan(lay.partition_offset(), lay.partition));
        const double bias = cpe::phase_bias(Constellation(cfg.bits_per_symbol, std::move(pts)), cc_values);
        const double first = track.est.front().value();
        offset = cpe::genie_csc(std::span<const double>(&first, 1), std::span<const double>(&bias, 1), cfg.mu)[0] - first;
    } catch (const cpe::CpeError&) {
        // no usable moment: leave the branch where the estimator put it
    }
    if (offset != 0.0)
        for (auto& e : track.est) e = e + offset;
    const auto y = cpe::derotate<Var>(z, track.est);
    const auto llrs = shapes.net.forward(tape, y, pv.subspan(lay.net_offset(), lay.net));
    const auto bits = demapper::label_bits(batch.labels, cfg.bits_per_symbol);
    const Var loss = demapper::bce_loss<Var>(bits, llrs) * static_cast<double>(cfg.bits_per_symbol);

    if (grad) *grad = numgrad::gradient(tape, loss, pv);
    return loss.value();
}

// ---- training ------------------------------------------------------------------

namespace {

std::string snapshot_summary(std::span<const double> flat, const ParamLayout& lay) {
    const auto norm = [](std::span<const double> v) {
        double s = 0.0;
        bool finite = true;
        for (double x : v) {
            s += x * x;
            finite = finite && std::isfinite(x);
        }
        std::ostringstream os;
        os << (finite ? "" : "non-finite, ") << "|.|=" << std::sqrt(s);
        return os.str();
    };
    std::ostringstream os;
    os << "constellation " << norm(flat.subspan(0, lay.points)) << "; partition "
       << norm(flat.subspan(lay.partition_offset(), lay.partition)) << "; net "
       << norm(flat.subspan(lay.net_offset(), lay.net));
    return os.str();
}

TrainReport make_report(const TrainConfig& cfg, const Model& shapes, std::span<const double> flat,
                        std::vector<double> loss) {
    const Model m = shapes.with_params(flat);
    return TrainReport{cfg, std::move(loss), normalize(m.constellation), m.partition, m.net, 0.0};
}

}  // namespace

TrainReport train(const TrainConfig& cfg, const CheckpointFn& on_checkpoint, int checkpoint_every) {
    const auto t0 = std::chrono::steady_clock::now();
    const Model model = initial_model(cfg);
    const auto lay = model.layout();
    std::vector<double> flat = model.flatten();
    std::vector<double> grad;
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(cfg.batches));
    AdamState adam(flat.size());
    numgrad::Tape tape;

    for (int b = 0; b < cfg.batches; ++b) {
        const BatchData batch = make_batch(cfg, b);
        double loss = 0.0;
        try {
            loss = pipeline_loss(cfg, model, flat, batch, &grad, &tape);
        } catch (const numgrad::DomainError& e) {
            throw TrainError(std::string("numeric failure in batch ") + std::to_string(b) + ": " + e.what() + " (" +
                                 snapshot_summary(flat, lay) + ")",
                             b, cfg.seed, flat);
        }
        const bool grads_finite = std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); });
        if (!std::isfinite(loss) || !grads_finite) {
            throw TrainError("non-finite " + std::string(std::isfinite(loss) ? "gradient" : "loss") + " in batch " +
                                 std::to_string(b) + " (" + snapshot_summary(flat, lay) + ")",
                             b, cfg.seed, flat);
        }
        losses.push_back(loss);
        if (!cfg.train_constellation) std::fill_n(grad.begin(), lay.points, 0.0);
        clip_global_norm(grad, cfg.clip_norm);
        adam_step(flat, grad, adam, cfg.learning_rate(b));

        const Constellation updated = normalize(model.with_params(flat).constellation);
        if (std::abs(updated.mean_power() - 1.0) > 1e-9)
            throw TrainError("power normalization violated after batch " + std::to_string(b), b, cfg.seed, flat);

        if (on_checkpoint && checkpoint_every > 0 && (b + 1) % checkpoint_every == 0 && b + 1 < cfg.batches)
            on_checkpoint(b + 1, make_report(cfg, model, flat, losses));
    }

    TrainReport report = make_report(cfg, model, flat, std::move(losses));
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_checkpoint) on_checkpoint(cfg.batches, report);
    return report;
}

double mean_symmetry_line_distance(const Constellation& c, int mu) {
    if (mu < 1) throw std::invalid_argument("symmetry lines: mu must be positive");
    const double period = 2.0 * std::numbers::pi / mu;
    std::vector<double> angles;
    for (auto p : c.points()) angles.push_back(std::arg(p));
    const auto mean_distance = [&](double rho) {
        double s = 0.0;
        for (double a : angles) {
            const double d = std::remainder(a - rho, period);
            s += std::abs(d);
        }
        return s / static_cast<double>(angles.size());
    };
    // The objective is piecewise linear in rho with convex kinks where a
    // point sits on a line, so its minimum is attained at one of those.
    double best = std::numeric_limits<double>::infinity();
    for (double a : angles) best = std::min(best, mean_distance(a));
    return best;
}

}  // namespace vvgcs::trainer
