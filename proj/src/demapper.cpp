#include "vvgcs/demapper.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace vvgcs::demapper {

namespace {

using Matrix = Eigen::MatrixXd;
using ConstRowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

constexpr std::size_t kChunk = 4096;

// Activations of one batch; kept alive by the tape's custom block.
struct ForwardCache {
    std::vector<Matrix> acts;  // acts[0] = input (2 x N), acts[l] = layer output
};

template <class ParamAccess>
Matrix run_layers(const std::vector<int>& sizes, const std::vector<std::size_t>& offsets, const ParamAccess& param,
                  Matrix x, std::vector<Matrix>* keep) {
    const std::size_t layers = sizes.size() - 1;
    if (keep) keep->push_back(x);
    for (std::size_t l = 0; l < layers; ++l) {
        const ConstRowMajorMap w(param(offsets[l]), sizes[l + 1], sizes[l]);
        const Eigen::Map<const Eigen::VectorXd> b(param(offsets[l]) + sizes[l + 1] * sizes[l], sizes[l + 1]);
        Matrix h = w * x;
        h.colwise() += b;
        if (l + 1 < layers) h = h.cwiseMax(0.0);
        x = std::move(h);
        if (keep) keep->push_back(x);
    }
    return x;
}

}  // namespace

RxNet::RxNet(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("RxNet: need at least input and output layers");
    if (sizes_.front() != 2) throw std::invalid_argument("RxNet: input layer must have 2 units (re, im)");
    for (int s : sizes_)
        if (s < 1) throw std::invalid_argument("RxNet: layer sizes must be positive");
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        offsets_.push_back(total);
        total += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
    }
    params_.assign(total, 0.0);
}

RxNet RxNet::initialized(std::vector<int> layer_sizes, PhiloxEngine& rng, bool zero_output) {
    RxNet net(std::move(layer_sizes));
    const std::size_t layers = net.sizes_.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        if (zero_output && l + 1 == layers) break;
        const int fan_in = net.sizes_[l];
        std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / fan_in));
        const std::size_t n = static_cast<std::size_t>(net.sizes_[l + 1]) * fan_in;
        for (std::size_t i = 0; i < n; ++i) net.params_[net.offsets_[l] + i] = gauss(rng);
    }
    return net;
}

std::vector<double> RxNet::forward(std::span<const CplxD> y) const {
    const std::size_t n = y.size();
    const int m = output_bits();
    std::vector<double> out(n * m);
    const auto param = [this](std::size_t off) { return params_.data() + off; };
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t len = std::min(kChunk, n - start);
        Matrix x(2, static_cast<Eigen::Index>(len));
        for (std::size_t k = 0; k < len; ++k) {
            x(0, static_cast<Eigen::Index>(k)) = y[start + k].re;
            x(1, static_cast<Eigen::Index>(k)) = y[start + k].im;
        }
        const Matrix llr = run_layers(sizes_, offsets_, param, std::move(x), nullptr);
        // column-major m x len is row-major len x m
        std::copy(llr.data(), llr.data() + llr.size(), out.begin() + static_cast<std::ptrdiff_t>(start * m));
    }
    return out;
}

std::vector<numgrad::Var> RxNet::forward(numgrad::Tape& tape, std::span<const CplxV> y,
                                         std::span<const numgrad::Var> params) const {
    if (params.size() != params_.size()) throw std::invalid_argument("RxNet: parameter variable count mismatch");
    const std::size_t n = y.size();
    const int m = output_bits();

    auto pvals = std::make_shared<std::vector<double>>(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) (*pvals)[i] = params[i].value();
    auto cache = std::make_shared<ForwardCache>();

    Matrix x(2, static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
        x(0, static_cast<Eigen::Index>(k)) = y[k].re.value();
        x(1, static_cast<Eigen::Index>(k)) = y[k].im.value();
    }
    const auto param = [pvals](std::size_t off) { return pvals->data() + off; };
    const Matrix llr = run_layers(sizes_, offsets_, param, std::move(x), &cache->acts);
    std::vector<double> out(llr.data(), llr.data() + llr.size());

    std::vector<numgrad::Var> inputs;
    inputs.reserve(2 * n + params.size());
    for (const auto& v : y) {
        inputs.push_back(v.re);
        inputs.push_back(v.im);
    }
    inputs.insert(inputs.end(), params.begin(), params.end());

    auto vjp = [sizes = sizes_, offsets = offsets_, pvals, cache, n, m](std::span<const double> out_adj,
                                                                         std::span<double> in_adj) {
        const std::size_t layers = sizes.size() - 1;
        const auto N = static_cast<Eigen::Index>(n);
        Matrix g = Eigen::Map<const Matrix>(out_adj.data(), m, N);
        double* dparams = in_adj.data() + 2 * n;
        for (std::size_t l = layers; l-- > 0;) {
            const Matrix& a_in = cache->acts[l];
            RowMajorMap dw(dparams + offsets[l], sizes[l + 1], sizes[l]);
            Eigen::Map<Eigen::VectorXd> db(dparams + offsets[l] + sizes[l + 1] * sizes[l], sizes[l + 1]);
            dw.noalias() += g * a_in.transpose();
            db += g.rowwise().sum();
            const ConstRowMajorMap w(pvals->data() + offsets[l], sizes[l + 1], sizes[l]);
            Matrix gin = w.transpose() * g;
            if (l > 0) gin = gin.cwiseProduct((a_in.array() > 0.0).cast<double>().matrix());
            g = std::move(gin);
        }
        for (std::size_t k = 0; k < n; ++k) {
            in_adj[2 * k] += g(0, static_cast<Eigen::Index>(k));
            in_adj[2 * k + 1] += g(1, static_cast<Eigen::Index>(k));
        }
    };
    return tape.custom(inputs, out, std::move(vjp));
}

// ---- checkpoint ------------------------------------------------------------

void write_checkpoint(std::ostream& os, const RxNet& net) {
    const auto& sizes = net.layer_sizes();
    os << "vvgcs-rxnet\t1\n";
    os << "layers";
    for (int s : sizes) os << '\t' << s;
    os << "\nhidden_activation\trelu\nllr_sign\tpositive_means_bit_1\n";
    const auto p = net.params();
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        os << "weight\t" << l << '\t' << sizes[l + 1] << '\t' << sizes[l] << '\n';
        for (int r = 0; r < sizes[l + 1]; ++r) {
            for (int c = 0; c < sizes[l]; ++c) os << (c ? "\t" : "") << format_double(p[off++]);
            os << '\n';
        }
        os << "bias\t" << l << '\t' << sizes[l + 1] << '\n';
        for (int r = 0; r < sizes[l + 1]; ++r) os << (r ? "\t" : "") << format_double(p[off++]);
        os << '\n';
    }
}

namespace {

std::vector<std::string> fields_of(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string f;
    while (std::getline(is, f, '\t')) out.push_back(f);
    return out;
}

double to_double(const std::string& s, std::size_t line) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("bad number '" + s + "'", line);
    return v;
}

int to_int(const std::string& s, std::size_t line) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("bad integer '" + s + "'", line);
    return v;
}

}  // namespace

RxNet read_checkpoint(std::istream& is) {
    std::string line;
    std::size_t lineno = 0;
    const auto next = [&]() {
        if (!std::getline(is, line)) throw ParseError("unexpected end of checkpoint", lineno + 1);
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return fields_of(line);
    };
    auto f = next();
    if (f.size() != 2 || f[0] != "vvgcs-rxnet") throw ParseError("not an Rx network checkpoint", lineno);
    if (f[1] != "1") throw ParseError("unsupported checkpoint version " + f[1], lineno);
    f = next();
    if (f.size() < 3 || f[0] != "layers") throw ParseError("expected layer sizes", lineno);
    std::vector<int> sizes;
    for (std::size_t i = 1; i < f.size(); ++i) sizes.push_back(to_int(f[i], lineno));
    f = next();
    if (f.size() != 2 || f[0] != "hidden_activation" || f[1] != "relu") throw ParseError("expected relu activation", lineno);
    f = next();
    if (f.size() != 2 || f[0] != "llr_sign" || f[1] != "positive_means_bit_1")
        throw ParseError("unexpected LLR sign convention", lineno);
    RxNet net(sizes);
    auto p = net.params();
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        f = next();
        if (f.size() != 4 || f[0] != "weight" || to_int(f[1], lineno) != static_cast<int>(l) ||
            to_int(f[2], lineno) != sizes[l + 1] || to_int(f[3], lineno) != sizes[l])
            throw ParseError("bad weight header", lineno);
        for (int r = 0; r < sizes[l + 1]; ++r) {
            f = next();
            if (f.size() != static_cast<std::size_t>(sizes[l])) throw ParseError("wrong weight row length", lineno);
            for (const auto& s : f) p[off++] = to_double(s, lineno);
        }
        f = next();
        if (f.size() != 3 || f[0] != "bias" || to_int(f[1], lineno) != static_cast<int>(l) ||
            to_int(f[2], lineno) != sizes[l + 1])
            throw ParseError("bad bias header", lineno);
        f = next();
        if (f.size() != static_cast<std::size_t>(sizes[l + 1])) throw ParseError("wrong bias row length", lineno);
        for (const auto& s : f) p[off++] = to_double(s, lineno);
    }
    return net;
}

void save_checkpoint(const RxNet& net, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    write_checkpoint(os, net);
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

RxNet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    return read_checkpoint(is);
}

// ---- losses ----------------------------------------------------------------

void BitBatch::validate() const {
    if (bits_per_symbol < 1) throw std::invalid_argument("BitBatch: bits per symbol must be positive");
    if (bits.empty()) throw std::invalid_argument("BitBatch: empty batch");
    if (bits.size() != llrs.size()) throw std::invalid_argument("BitBatch: bits and LLRs differ in shape");
    if (bits.size() % bits_per_symbol != 0) throw std::invalid_argument("BitBatch: size is not a multiple of m");
    for (auto b : bits)
        if (b > 1) throw std::invalid_argument("BitBatch: bits must be 0 or 1");
}

std::vector<std::uint8_t> label_bits(std::span<const std::uint32_t> labels, int bits_per_symbol) {
    std::vector<std::uint8_t> out;
    out.reserve(labels.size() * bits_per_symbol);
    for (auto l : labels)
        for (int i = 0; i < bits_per_symbol; ++i) out.push_back(label_bit(l, i, bits_per_symbol));
    return out;
}

double bce_loss(const BitBatch& batch) {
    batch.validate();
    return bce_loss<double>(batch.bits, batch.llrs);
}

double bmi(const BitBatch& batch) {
    const double loss = bce_loss(batch);
    return batch.bits_per_symbol * (1.0 - loss / std::numbers::ln2);
}

std::vector<double> exact_llrs(std::span<const CplxD> y, std::span<const CplxD> points, int bits_per_symbol,
                               double noise_var) {
    if (!(noise_var > 0.0)) throw std::invalid_argument("exact_llrs: noise variance must be positive");
    if (points.size() != (std::size_t{1} << bits_per_symbol))
        throw std::invalid_argument("exact_llrs: expected 2^m points");
    const int m = bits_per_symbol;
    std::vector<double> out(y.size() * m);
    std::vector<double> metric(points.size());
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < y.size(); ++k) {
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double dr = y[k].re - points[i].re;
            const double di = y[k].im - points[i].im;
            metric[i] = -(dr * dr + di * di) / noise_var;
        }
        for (int b = 0; b < m; ++b) {
            double max1 = neg_inf, max0 = neg_inf;
            for (std::size_t i = 0; i < points.size(); ++i) {
                if (label_bit(static_cast<std::uint32_t>(i), b, m))
                    max1 = std::max(max1, metric[i]);
                else
                    max0 = std::max(max0, metric[i]);
            }
            double s1 = 0.0, s0 = 0.0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                if (label_bit(static_cast<std::uint32_t>(i), b, m))
                    s1 += std::exp(metric[i] - max1);
                else
                    s0 += std::exp(metric[i] - max0);
            }
            out[k * m + b] = (max1 + std::log(s1)) - (max0 + std::log(s0));
        }
    }
    return out;
}

}  // namespace vvgcs::demapper
