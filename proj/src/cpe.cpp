#include "vvgcs/cpe.hpp"

#include <algorithm>
#include <complex>
#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace vvgcs::cpe {

void VVParams::validate() const {
    if (mu < 2 || mu > 8) throw std::invalid_argument("V&V: mu must be in [2, 8], got " + std::to_string(mu));
    if (half_window < 1) throw std::invalid_argument("V&V: half window K must be >= 1");
}

const char* to_string(Activation a) noexcept { return a == Activation::Sigmoid ? "sigmoid" : "softplus"; }

Activation activation_from_string(const std::string& s) {
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "softplus") return Activation::Softplus;
    throw std::invalid_argument("unknown activation '" + s + "' (expected sigmoid or softplus)");
}

const char* to_string(Variant v) noexcept {
    switch (v) {
        case Variant::Standard: return "standard";
        case Variant::SoftPartition: return "soft-partition";
        case Variant::HardPartition: return "hard-partition";
    }
    return "?";
}

std::vector<double> PartitionParams::flatten() const {
    std::vector<double> out;
    out.reserve(3 * rings.size());
    for (const auto& r : rings) {
        out.push_back(r.slope);
        out.push_back(r.theta0);
        out.push_back(r.theta1);
    }
    return out;
}

PartitionParams PartitionParams::unflatten(std::span<const double> flat) {
    if (flat.size() % 3 != 0) throw std::invalid_argument("partition parameters must come in triples");
    PartitionParams pp;
    for (std::size_t i = 0; i < flat.size(); i += 3) pp.rings.push_back({flat[i], flat[i + 1], flat[i + 2]});
    return pp;
}

void write_partition_tsv(std::ostream& os, const PartitionParams& pp) {
    os << "ring\tslope\ttheta0\ttheta1\n";
    for (std::size_t l = 0; l < pp.size(); ++l) {
        const auto& r = pp.rings[l];
        os << l << '\t' << format_double(r.slope) << '\t' << format_double(r.theta0) << '\t' << format_double(r.theta1)
           << '\n';
    }
}

PartitionParams read_partition_tsv(std::istream& is) {
    std::string line;
    std::size_t lineno = 0;
    PartitionParams pp;
    bool header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        for (std::string x; std::getline(ls, x, '\t');) f.push_back(x);
        if (!header) {
            if (f != std::vector<std::string>{"ring", "slope", "theta0", "theta1"})
                throw ParseError("expected partition header", lineno);
            header = true;
            continue;
        }
        if (f.size() != 4) throw ParseError("expected 4 columns", lineno);
        if (f[0] != std::to_string(pp.size())) throw ParseError("rings out of order", lineno);
        double v[3];
        for (int i = 0; i < 3; ++i) {
            const auto& s = f[i + 1];
            const auto res = std::from_chars(s.data(), s.data() + s.size(), v[i]);
            if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
                throw ParseError("bad number '" + s + "'", lineno);
        }
        pp.rings.push_back({v[0], v[1], v[2]});
    }
    if (!header) throw ParseError("empty partition file", lineno);
    return pp;
}

void write_partition_grid(std::ostream& os, const PartitionParams& pp, Activation act, int cols, double extent) {
    if (cols < 2) throw std::invalid_argument("partition grid needs at least 2 columns");
    os << "real\timag\tpartition\n";
    for (int r = 0; r < cols; ++r) {
        const double im = -extent + 2.0 * extent * r / (cols - 1);
        for (int c = 0; c < cols; ++c) {
            const double re = -extent + 2.0 * extent * c / (cols - 1);
            double w = 0.0;
            if (re != 0.0 || im != 0.0)
                for (const auto& ring : pp.rings) w += select(CplxD{re, im}, ring, act).weight;
            os << format_double(re) << '\t' << format_double(im) << '\t' << format_double(w) << '\n';
        }
    }
}

PartitionParams default_partition(int num_rings) {
    if (num_rings < 0) throw std::invalid_argument("number of partition rings must be >= 0");
    PartitionParams pp;
    if (num_rings >= 1) pp.rings.push_back({10.0, 1.2, 3.0});
    if (num_rings >= 2) pp.rings.push_back({10.0, -1.0, 0.4});
    const int middle = num_rings - 2;
    for (int l = 0; l < middle; ++l)
        pp.rings.push_back({10.0, 0.4 + 0.8 * l / middle, 0.4 + 0.8 * (l + 1) / middle});
    return pp;
}

std::vector<QamRing> square_qam_rings(int bits_per_symbol) {
    if (bits_per_symbol < 2 || bits_per_symbol % 2 != 0)
        throw std::invalid_argument("square_qam_rings: bits per symbol must be even and >= 2");
    const int levels = 1 << (bits_per_symbol / 2);
    const double energy = 2.0 * (levels * levels - 1) / 3.0;
    std::map<int, bool> rings;  // squared radius -> holds a diagonal point
    for (int a = 1; a < levels; a += 2) {
        for (int b = 1; b < levels; b += 2) rings[a * a + b * b] |= (a == b);
    }
    std::vector<QamRing> out;
    for (auto [r2, diag] : rings) out.push_back({std::sqrt(r2 / energy), diag});
    return out;
}

std::vector<std::size_t> ring_selection_order(std::span<const QamRing> rings) {
    std::vector<std::size_t> order;
    if (rings.empty()) return order;
    order.push_back(0);
    if (rings.size() > 1) order.push_back(rings.size() - 1);
    for (std::size_t i = 1; i + 1 < rings.size(); ++i)
        if (rings[i].on_diagonal) order.push_back(i);
    for (std::size_t i = 1; i + 1 < rings.size(); ++i)
        if (!rings[i].on_diagonal) order.push_back(i);
    return order;
}

std::vector<std::uint8_t> hard_partition_qam(std::span<const CplxD> z, int num_rings, int bits_per_symbol) {
    if (num_rings < 1) throw std::invalid_argument("hard_partition_qam: need at least one ring");
    const auto rings = square_qam_rings(bits_per_symbol);
    const auto order = ring_selection_order(rings);
    std::vector<std::uint8_t> selected(rings.size(), 0);
    for (std::size_t i = 0; i < order.size() && i < static_cast<std::size_t>(num_rings); ++i) selected[order[i]] = 1;
    std::vector<double> bounds;  // decision thresholds between adjacent rings
    for (std::size_t i = 0; i + 1 < rings.size(); ++i) bounds.push_back(0.5 * (rings[i].radius + rings[i + 1].radius));
    std::vector<std::uint8_t> mask(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
        const double r = cabs(z[k]);
        const auto ring = static_cast<std::size_t>(std::upper_bound(bounds.begin(), bounds.end(), r) - bounds.begin());
        mask[k] = selected[ring];
    }
    return mask;
}

std::vector<double> genie_csc(std::span<const double> est, std::span<const double> reference, int mu) {
    if (est.size() != reference.size()) throw std::invalid_argument("genie_csc: length mismatch");
    if (mu < 1) throw std::invalid_argument("genie_csc: mu must be positive");
    const double step = 2.0 * std::numbers::pi / mu;
    std::vector<double> out(est.size());
    for (std::size_t k = 0; k < est.size(); ++k) {
        const double n = std::round((reference[k] - est[k]) / step);
        out[k] = est[k] + n * step;
    }
    return out;
}

PhaseTrack<double> estimate(std::span<const CplxD> z, const CpeConfig& cfg) {
    switch (cfg.variant) {
        case Variant::Standard:
            return vv_estimate<double>(z, cfg.vv);
        case Variant::SoftPartition:
            return vv_modified<double>(z, cfg.vv, cfg.partition, cfg.activation, cfg.smooth_radius);
        case Variant::HardPartition: {
            const auto mask = hard_partition_qam(z, cfg.hard_rings, cfg.bits_per_symbol);
            return vv_masked<double>(z, mask, cfg.vv);
        }
    }
    throw std::logic_error("unknown CPE variant");
}

double phase_bias(const Constellation& c, const CpeConfig& cfg) {
    cfg.vv.validate();
    const auto pts = c.as_pairs();
    std::complex<double> sum{0.0, 0.0};
    switch (cfg.variant) {
        case Variant::Standard:
            for (const auto& x : pts) sum += to_std(cpow_int(x, cfg.vv.mu));
            break;
        case Variant::SoftPartition:
            for (const auto& x : pts) {
                if (cabs(x) == 0.0) continue;
                CplxD acc{0.0, 0.0};
                for (const auto& ring : cfg.partition.rings) acc = cadd(acc, select(x, ring, cfg.activation).phasor);
                sum += to_std(cpow_int(acc, cfg.vv.mu));
            }
            break;
        case Variant::HardPartition: {
            const auto mask = hard_partition_qam(pts, cfg.hard_rings, cfg.bits_per_symbol);
            for (std::size_t i = 0; i < pts.size(); ++i)
                if (mask[i]) sum += to_std(cpow_int(pts[i], cfg.vv.mu));
            break;
        }
    }
    if (std::abs(sum) < 1e-12 * static_cast<double>(pts.size()))
        throw CpeError("phase_bias: the constellation's mu-th moment vanishes; V&V cannot lock");
    double bias = std::arg(sum) / cfg.vv.mu;
    // Exactly on the branch cut (square QAM at mu = 4) the sign of a zero
    // imaginary part picks the side; report the upper end.
    if (bias <= -std::numbers::pi / cfg.vv.mu + 1e-12) bias += 2.0 * std::numbers::pi / cfg.vv.mu;
    return bias;
}

}  // namespace vvgcs::cpe
