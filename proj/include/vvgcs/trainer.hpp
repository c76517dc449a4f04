#ifndef VVGCS_TRAINER_HPP
#define VVGCS_TRAINER_HPP

// End-to-end training of constellation, partition rings and Rx network
// through channel and V&V phase estimation.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vvgcs/channel.hpp"
#include "vvgcs/constellation.hpp"
#include "vvgcs/cpe.hpp"
#include "vvgcs/demapper.hpp"
#include "vvgcs/numgrad.hpp"

namespace vvgcs::trainer {

// ---- Adam ------------------------------------------------------------------

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;

    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamOptions& opt = {});

// Scales grads in place so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_global_norm(std::span<double> grads, double max_norm);

// ---- configuration -----------------------------------------------------------

struct TrainConfig {
    int bits_per_symbol = 6;
    std::size_t batch_len = 4096;
    int batches = 2000;
    double lr = 1e-2;
    double lr_decay = 0.5;
    int lr_decay_every = 500;
    double snr_db = 20.0;
    double linewidth_hz = 100e3;
    double symbol_rate_baud = 32e9;
    int mu = 4;
    int partitions = 0;        // L; 0 runs the standard estimator
    int half_window = 32;      // K
    int smooth_radius = -1;    // negative: use K
    cpe::Activation activation = cpe::Activation::Sigmoid;
    std::vector<int> hidden = {64, 64};
    double init_perturb_std = 0.01;
    double clip_norm = 10.0;
    bool train_constellation = true;
    std::uint64_t seed = 1;
    std::optional<Constellation> init_constellation;      // default: perturbed Gray QAM
    std::optional<cpe::PartitionParams> init_partition;   // default: cpe::default_partition(L)

    void validate() const;
    double learning_rate(int batch) const;
    cpe::CpeConfig cpe_config(const cpe::PartitionParams& pp) const;
    std::vector<int> net_sizes() const;
};

// Flat trainable parameter vector: [constellation re/im pairs | rings (s, theta0, theta1) | Rx net].
struct ParamLayout {
    std::size_t points = 0;     // 2 * 2^m
    std::size_t partition = 0;  // 3 * L
    std::size_t net = 0;

    std::size_t total() const noexcept { return points + partition + net; }
    std::size_t partition_offset() const noexcept { return points; }
    std::size_t net_offset() const noexcept { return points + partition; }
};

struct Model {
    Constellation constellation;  // raw (not necessarily normalized) trainable points
    cpe::PartitionParams partition;
    demapper::RxNet net;

    std::vector<double> flatten() const;
    ParamLayout layout() const;
    // Inverse of flatten, using this model's shapes.
    Model with_params(std::span<const double> flat) const;
};

Model initial_model(const TrainConfig& cfg);

struct BatchData {
    std::vector<std::uint32_t> labels;
    channel::ChannelRealization channel;
};

// Labels and channel draws of one training batch, from named substreams of
// the config seed. The phase trajectory starts at 0.
BatchData make_batch(const TrainConfig& cfg, int batch_index);

// Per-symbol bitwise cross-entropy (nats, summed over the m bits) of the
// full chain labels -> normalized constellation -> channel -> V&V -> derotate
// -> Rx net. Fills grad (d loss / d flat params) when given.
double pipeline_loss(const TrainConfig& cfg, const Model& shapes, std::span<const double> flat, const BatchData& batch,
                     std::vector<double>* grad = nullptr, numgrad::Tape* workspace = nullptr);

// ---- training ------------------------------------------------------------

struct TrainReport {
    TrainConfig config;
    std::vector<double> loss;  // per batch, before the update
    Constellation constellation;  // normalized
    cpe::PartitionParams partition;
    demapper::RxNet net;
    double wall_seconds = 0.0;
};

class TrainError : public std::runtime_error {
public:
    TrainError(const std::string& what, int batch, std::uint64_t seed, std::vector<double> snapshot)
        : std::runtime_error(what), batch_(batch), seed_(seed), snapshot_(std::move(snapshot)) {}
    int batch() const noexcept { return batch_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const std::vector<double>& snapshot() const noexcept { return snapshot_; }

private:
    int batch_;
    std::uint64_t seed_;
    std::vector<double> snapshot_;
};

// Called every checkpoint_every batches and once more after the last batch,
// with the number of batches done.
using CheckpointFn = std::function<void(int batches_done, const TrainReport& partial)>;

TrainReport train(const TrainConfig& cfg, const CheckpointFn& on_checkpoint = {}, int checkpoint_every = 0);

// Mean angular distance of the points to the nearest of mu symmetry lines
// (rays at rho + 2 pi n / mu), minimized over the global rotation rho.
double mean_symmetry_line_distance(const Constellation& c, int mu);

}  // namespace vvgcs::trainer

#endif  // VVGCS_TRAINER_HPP
