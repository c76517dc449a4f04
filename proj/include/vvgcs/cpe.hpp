#ifndef VVGCS_CPE_HPP
#define VVGCS_CPE_HPP

// Viterbi-Viterbi carrier phase estimation.
//
// All estimators are templates over the scalar type, so the same code runs
// on plain doubles (validation) and on numgrad::Var (training). Window sums
// use clamped bounds: at the sequence edges fewer than 2K+1 terms are summed.

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vvgcs/complex.hpp"
#include "vvgcs/constellation.hpp"

namespace vvgcs::cpe {

class CpeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct VVParams {
    int mu = 4;
    int half_window = 32;  // K; the window spans 2K+1 symbols

    void validate() const;
};

enum class Activation { Sigmoid, Softplus };

const char* to_string(Activation a) noexcept;
Activation activation_from_string(const std::string& s);

// One selection ring: weight = act(s (|z| - theta0)) * act(s (theta1 - |z|)).
template <class T>
struct RingT {
    T slope{};
    T theta0{};
    T theta1{};
};

using Ring = RingT<double>;

struct PartitionParams {
    std::vector<Ring> rings;

    std::size_t size() const noexcept { return rings.size(); }
    std::vector<double> flatten() const;
    static PartitionParams unflatten(std::span<const double> flat);
};

// Ring parameters as TSV: header "ring\tslope\ttheta0\ttheta1", one row per ring.
void write_partition_tsv(std::ostream& os, const PartitionParams& pp);
PartitionParams read_partition_tsv(std::istream& is);

// Total selection weight over a cols x cols grid on [-extent, extent]^2 with columns
// "real\timag\tpartition", the real part varying fastest.
void write_partition_grid(std::ostream& os, const PartitionParams& pp, Activation act, int cols = 50,
                          double extent = 2.0);

// Default ring initialization in unit-power magnitude, slope 10: ring 0
// keeps the outer amplitudes [1.2, 3], ring 1 the inner ones below 0.4,
// further rings split [0.4, 1.2] evenly.
PartitionParams default_partition(int num_rings);

template <class T>
struct PhaseTrack {
    std::vector<T> est;      // unwrapped phase estimate per symbol (radians)
    std::vector<T> weights;  // total selection weight per symbol; empty for plain V&V
};

// ---- building blocks -----------------------------------------------------

template <class T>
T activate(const T& x, Activation act) {
    return act == Activation::Sigmoid ? numgrad::sigmoid(x) : numgrad::softplus(x);
}

template <class T>
struct Selection {
    Cplx<T> phasor;  // weight * z/|z|
    T weight;
};

template <class T>
Selection<T> select(const Cplx<T>& z, const RingT<T>& ring, Activation act) {
    const T mag = cabs(z);
    if (numgrad::value(mag) == 0.0) throw CpeError("select: received symbol at the origin");
    const T weight = activate(ring.slope * (mag - ring.theta0), act) * activate(ring.slope * (ring.theta1 - mag), act);
    const T scale = weight / mag;
    return {cscale(z, scale), weight};
}

// Sum of v over [k-K, k+K] clamped to the sequence, for every k.
template <class T>
std::vector<Cplx<T>> window_sums(std::span<const Cplx<T>> v, int half_window) {
    const std::size_t n = v.size();
    std::vector<Cplx<T>> prefix(n + 1);
    prefix[0] = {T(0.0), T(0.0)};
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = cadd(prefix[i], v[i]);
    std::vector<Cplx<T>> out;
    out.reserve(n);
    const auto K = static_cast<std::ptrdiff_t>(half_window);
    for (std::size_t k = 0; k < n; ++k) {
        const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(k) - K);
        const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, static_cast<std::ptrdiff_t>(k) + K);
        if (lo == 0) {
            out.push_back(prefix[hi + 1]);
        } else {
            out.push_back(csub(prefix[hi + 1], prefix[lo]));
        }
    }
    return out;
}

// Shifts each sample by the multiple of 2 pi closest to the previous output.
// The shift is piecewise constant, so gradients pass through unchanged.
template <class T>
std::vector<T> unwrap(std::span<const T> angles) {
    std::vector<T> out;
    out.reserve(angles.size());
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t k = 0; k < angles.size(); ++k) {
        if (k == 0) {
            out.push_back(angles[0]);
            continue;
        }
        const double prev = numgrad::value(out.back());
        const double cur = numgrad::value(angles[k]);
        const double turns = std::round((prev - cur) / two_pi);
        out.push_back(turns == 0.0 ? angles[k] : angles[k] + turns * two_pi);
    }
    return out;
}

// (1/mu) unwrap(arg(window sum of the powered phasors)).
template <class T>
std::vector<T> phase_from_powers(std::span<const Cplx<T>> powered, int mu, int half_window) {
    const auto sums = window_sums(powered, half_window);
    std::vector<T> args;
    args.reserve(sums.size());
    for (const auto& s : sums) args.push_back(carg(s));
    auto est = unwrap<T>(args);
    const double inv_mu = 1.0 / mu;
    for (auto& e : est) e = e * inv_mu;
    return est;
}

// ---- estimators ----------------------------------------------------------

template <class T>
PhaseTrack<T> vv_estimate(std::span<const Cplx<T>> z, const VVParams& p) {
    p.validate();
    if (z.size() <= static_cast<std::size_t>(2 * p.half_window))
        throw CpeError("vv_estimate: sequence must be longer than 2K symbols");
    std::vector<Cplx<T>> powered;
    powered.reserve(z.size());
    for (const auto& s : z) powered.push_back(cpow_int(s, p.mu));
    return {phase_from_powers<T>(powered, p.mu, p.half_window), {}};
}

// Weight-weighted moving average of the estimate over +-radius symbols.
// A symbol whose own weight is negligible takes its neighbours' average.
template <class T>
PhaseTrack<T> smooth_track(const PhaseTrack<T>& t, int radius) {
    if (radius < 0) throw std::invalid_argument("smooth_track: radius must be >= 0");
    if (radius == 0) return t;
    if (t.weights.size() != t.est.size()) throw std::invalid_argument("smooth_track: track has no weights");
    const std::size_t n = t.est.size();
    std::vector<T> pw(n + 1), pwe(n + 1);
    pw[0] = T(0.0);
    pwe[0] = T(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        pw[i + 1] = pw[i] + t.weights[i];
        pwe[i + 1] = pwe[i] + t.weights[i] * t.est[i];
    }
    PhaseTrack<T> out;
    out.weights = t.weights;
    out.est.reserve(n);
    const auto r = static_cast<std::ptrdiff_t>(radius);
    for (std::size_t k = 0; k < n; ++k) {
        const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(k) - r);
        const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, static_cast<std::ptrdiff_t>(k) + r);
        const T wsum = lo == 0 ? pw[hi + 1] : pw[hi + 1] - pw[lo];
        if (!(numgrad::value(wsum) > 1e-300)) {
            out.est.push_back(t.est[k]);
            continue;
        }
        const T wesum = lo == 0 ? pwe[hi + 1] : pwe[hi + 1] - pwe[lo];
        out.est.push_back(wesum / wsum);
    }
    return out;
}

// Mean selection weight below which the partition is considered empty.
inline constexpr double kMinMeanSelectionWeight = 1e-9;

// Soft-partitioned V&V: per symbol the ring phasors are summed, raised to mu
// and window-averaged; then arg, unwrap, 1/mu, and the smoothing pass with
// the given radius (0 disables it).
template <class T>
PhaseTrack<T> vv_modified(std::span<const Cplx<T>> z, const VVParams& p, std::span<const RingT<T>> rings,
                          Activation act, int smooth_radius) {
    p.validate();
    if (rings.empty()) throw CpeError("vv_modified: at least one partition ring is required");
    if (z.size() <= static_cast<std::size_t>(2 * p.half_window))
        throw CpeError("vv_modified: sequence must be longer than 2K symbols");
    std::vector<Cplx<T>> powered;
    std::vector<T> weights;
    powered.reserve(z.size());
    weights.reserve(z.size());
    double total_weight = 0.0;
    for (const auto& s : z) {
        Selection<T> acc = select(s, rings[0], act);
        for (std::size_t l = 1; l < rings.size(); ++l) {
            const auto sel = select(s, rings[l], act);
            acc.phasor = cadd(acc.phasor, sel.phasor);
            acc.weight = acc.weight + sel.weight;
        }
        total_weight += numgrad::value(acc.weight);
        powered.push_back(cpow_int(acc.phasor, p.mu));
        weights.push_back(acc.weight);
    }
    if (total_weight / static_cast<double>(z.size()) < kMinMeanSelectionWeight)
        throw CpeError("vv_modified: partition rings select no symbols (mean weight " +
                       std::to_string(total_weight / static_cast<double>(z.size())) + ")");
    PhaseTrack<T> track{phase_from_powers<T>(powered, p.mu, p.half_window), std::move(weights)};
    return smooth_track(track, smooth_radius);
}

template <class T>
PhaseTrack<T> vv_modified(std::span<const Cplx<T>> z, const VVParams& p, const PartitionParams& pp, Activation act,
                          int smooth_radius) {
    std::vector<RingT<T>> rings;
    for (const auto& r : pp.rings) rings.push_back({T(r.slope), T(r.theta0), T(r.theta1)});
    return vv_modified<T>(z, p, std::span<const RingT<T>>(rings), act, smooth_radius);
}

// y_k = z_k e^{-j est_k}
template <class T>
std::vector<Cplx<T>> derotate(std::span<const Cplx<T>> z, std::span<const T> est) {
    if (z.size() != est.size()) throw std::invalid_argument("derotate: length mismatch");
    std::vector<Cplx<T>> y;
    y.reserve(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) y.push_back(cmul(z[k], cexp_j(-est[k])));
    return y;
}

// ---- hard amplitude partitioning (square-QAM baseline) -------------------

struct QamRing {
    double radius;      // unit-power normalized
    bool on_diagonal;   // ring holds points on the 4-fold symmetry lines
};

// Distinct amplitude rings of Gray square QAM, ascending radius.
std::vector<QamRing> square_qam_rings(int bits_per_symbol);

// Ring indices in selection priority: innermost, outermost, remaining
// diagonal rings (ascending), then all others (ascending).
std::vector<std::size_t> ring_selection_order(std::span<const QamRing> rings);

// Keeps symbols whose amplitude is nearest to one of the first num_rings
// rings in selection order.
std::vector<std::uint8_t> hard_partition_qam(std::span<const CplxD> z, int num_rings, int bits_per_symbol = 6);

// V&V over the kept symbols only. Windows without a kept symbol take the
// nearest estimated value.
template <class T>
PhaseTrack<T> vv_masked(std::span<const Cplx<T>> z, std::span<const std::uint8_t> mask, const VVParams& p) {
    p.validate();
    if (z.size() != mask.size()) throw std::invalid_argument("vv_masked: mask length mismatch");
    if (z.size() <= static_cast<std::size_t>(2 * p.half_window))
        throw CpeError("vv_masked: sequence must be longer than 2K symbols");
    const std::size_t n = z.size();
    std::vector<Cplx<T>> powered;
    powered.reserve(n);
    std::vector<int> kept_prefix(n + 1, 0);
    for (std::size_t k = 0; k < n; ++k) {
        powered.push_back(mask[k] ? cpow_int(z[k], p.mu) : Cplx<T>{T(0.0), T(0.0)});
        kept_prefix[k + 1] = kept_prefix[k] + (mask[k] ? 1 : 0);
    }
    const auto sums = window_sums<T>(powered, p.half_window);
    std::vector<std::ptrdiff_t> source(n, -1);
    const auto K = static_cast<std::ptrdiff_t>(p.half_window);
    for (std::size_t k = 0; k < n; ++k) {
        const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(k) - K);
        const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, static_cast<std::ptrdiff_t>(k) + K);
        const CplxD sv = value(sums[k]);
        if (kept_prefix[hi + 1] - kept_prefix[lo] > 0 && (sv.re != 0.0 || sv.im != 0.0))
            source[k] = static_cast<std::ptrdiff_t>(k);
    }
    // nearest valid window, earlier index on ties
    std::ptrdiff_t last = -1;
    std::vector<std::ptrdiff_t> next(n, -1);
    for (std::size_t k = n; k-- > 0;) {
        if (source[k] >= 0) last = static_cast<std::ptrdiff_t>(k);
        next[k] = last;
    }
    last = -1;
    bool any = false;
    for (std::size_t k = 0; k < n; ++k) {
        if (source[k] >= 0) {
            last = static_cast<std::ptrdiff_t>(k);
            any = true;
            continue;
        }
        const auto kk = static_cast<std::ptrdiff_t>(k);
        const std::ptrdiff_t nx = next[k];
        if (last < 0) {
            source[k] = nx;
        } else if (nx < 0) {
            source[k] = last;
        } else {
            source[k] = (kk - last <= nx - kk) ? last : nx;
        }
    }
    if (!any) throw CpeError("vv_masked: no symbol selected by the partition");
    std::vector<T> args;
    args.reserve(n);
    std::vector<T> computed(n);
    for (std::size_t k = 0; k < n; ++k) {
        if (source[k] == static_cast<std::ptrdiff_t>(k)) computed[k] = carg(sums[k]);
    }
    for (std::size_t k = 0; k < n; ++k) args.push_back(computed[static_cast<std::size_t>(source[k])]);
    auto est = unwrap<T>(args);
    const double inv_mu = 1.0 / p.mu;
    for (auto& e : est) e = e * inv_mu;
    return {std::move(est), {}};
}

// ---- genie-aided cycle-slip compensation ---------------------------------

// Adds to each estimate the multiple of 2 pi / mu that brings it closest to
// the reference phase, leaving a residual within [-pi/mu, pi/mu].
std::vector<double> genie_csc(std::span<const double> est, std::span<const double> reference, int mu);

// ---- complete estimator configurations -----------------------------------

enum class Variant { Standard, SoftPartition, HardPartition };

const char* to_string(Variant v) noexcept;

struct CpeConfig {
    Variant variant = Variant::Standard;
    VVParams vv;
    PartitionParams partition;  // SoftPartition only
    Activation activation = Activation::Sigmoid;
    int smooth_radius = 32;      // SoftPartition only
    int hard_rings = 2;          // HardPartition only
    int bits_per_symbol = 6;     // HardPartition reference QAM
};

PhaseTrack<double> estimate(std::span<const CplxD> z, const CpeConfig& cfg);

// Constant offset of the noiseless estimator for this constellation: the
// estimate settles at phi + bias (mod 2 pi / mu), bias in (-pi/mu, pi/mu].
double phase_bias(const Constellation& c, const CpeConfig& cfg);

}  // namespace vvgcs::cpe

#endif  // VVGCS_CPE_HPP
