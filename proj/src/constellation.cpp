#include "vvgcs/constellation.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace vvgcs {

ParseError::ParseError(const std::string& what, std::size_t line)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

Constellation::Constellation(int bits_per_symbol, std::vector<std::complex<double>> points)
    : m_(bits_per_symbol), points_(std::move(points)) {
    if (m_ < 1 || m_ > 16) throw std::invalid_argument("constellation: bits per symbol must be in [1, 16]");
    if (points_.size() != (std::size_t{1} << m_))
        throw std::invalid_argument("constellation: expected 2^m points, got " + std::to_string(points_.size()));
}

std::complex<double> Constellation::map_bits(std::span<const std::uint8_t> bits) const {
    if (bits.size() != static_cast<std::size_t>(m_))
        throw std::invalid_argument("map_bits: expected " + std::to_string(m_) + " bits, got " +
                                    std::to_string(bits.size()));
    return points_[label_from_bits(bits)];
}

double Constellation::mean_power() const noexcept {
    double s = 0.0;
    for (auto p : points_) s += std::norm(p);
    return s / static_cast<double>(points_.size());
}

std::vector<CplxD> Constellation::as_pairs() const {
    std::vector<CplxD> out;
    out.reserve(points_.size());
    for (auto p : points_) out.push_back(from_std(p));
    return out;
}

std::uint32_t label_from_bits(std::span<const std::uint8_t> bits) {
    std::uint32_t label = 0;
    for (auto b : bits) {
        if (b > 1) throw std::invalid_argument("label_from_bits: bits must be 0 or 1");
        label = (label << 1) | b;
    }
    return label;
}

std::vector<std::uint8_t> bits_from_label(std::uint32_t label, int bits_per_symbol) {
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(bits_per_symbol));
    for (int i = 0; i < bits_per_symbol; ++i) bits[i] = label_bit(label, i, bits_per_symbol);
    return bits;
}

std::string format_label(std::uint32_t label, int bits_per_symbol) {
    const int digits = std::max(2, (bits_per_symbol + 3) / 4);
    std::ostringstream os;
    os << std::uppercase << std::hex;
    os.width(digits);
    os.fill('0');
    os << label;
    return os.str();
}

Constellation normalize(const Constellation& c) {
    const double p = c.mean_power();
    if (p == 0.0) throw std::invalid_argument("normalize: all-zero constellation");
    const double scale = 1.0 / std::sqrt(p);
    std::vector<std::complex<double>> pts(c.points().begin(), c.points().end());
    for (auto& z : pts) z *= scale;
    return Constellation(c.bits_per_symbol(), std::move(pts));
}

namespace {

int gray_to_binary(int g) {
    int b = 0;
    for (; g; g >>= 1) b ^= g;
    return b;
}

}  // namespace

Constellation square_qam_gray(int bits_per_symbol) {
    if (bits_per_symbol < 2 || bits_per_symbol % 2 != 0)
        throw std::invalid_argument("square_qam_gray: bits per symbol must be even and >= 2");
    const int half = bits_per_symbol / 2;
    const int levels = 1 << half;
    const int mask = levels - 1;
    std::vector<std::complex<double>> pts(std::size_t{1} << bits_per_symbol);
    for (std::size_t label = 0; label < pts.size(); ++label) {
        const int gi = static_cast<int>(label >> half) & mask;
        const int gq = static_cast<int>(label) & mask;
        const double i = 2.0 * gray_to_binary(gi) - (levels - 1);
        const double q = 2.0 * gray_to_binary(gq) - (levels - 1);
        pts[label] = {i, q};
    }
    return normalize(Constellation(bits_per_symbol, std::move(pts)));
}

Constellation perturbed_qam(int bits_per_symbol, double perturb_std, PhiloxEngine& rng) {
    const Constellation base = square_qam_gray(bits_per_symbol);
    std::vector<std::complex<double>> pts(base.points().begin(), base.points().end());
    if (perturb_std > 0.0) {
        std::normal_distribution<double> gauss(0.0, perturb_std);
        for (auto& z : pts) {
            const double re = gauss(rng);
            const double im = gauss(rng);
            z += std::complex<double>(re, im);
        }
    }
    return normalize(Constellation(bits_per_symbol, std::move(pts)));
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_tsv(std::ostream& os, const Constellation& c) {
    os << "real\timag\tlabel\n";
    for (std::size_t i = 0; i < c.size(); ++i) {
        os << format_double(c[i].real()) << '\t' << format_double(c[i].imag()) << '\t'
           << format_label(static_cast<std::uint32_t>(i), c.bits_per_symbol()) << '\n';
    }
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_number(const std::string& s, std::size_t line) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last || first == last) throw ParseError("bad number '" + s + "'", line);
    return v;
}

}  // namespace

Constellation read_tsv(std::istream& is) {
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::pair<std::uint32_t, std::complex<double>>> rows;
    std::vector<std::size_t> row_lines;
    bool seen_content = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (!seen_content) {
            seen_content = true;
            if (fields.size() == 3 && fields[0] == "real" && fields[1] == "imag" && fields[2] == "label") continue;
        }
        if (fields.size() != 3)
            throw ParseError("expected 3 tab-separated columns, got " + std::to_string(fields.size()), lineno);
        const double re = parse_number(fields[0], lineno);
        const double im = parse_number(fields[1], lineno);
        std::uint32_t label = 0;
        const auto& lab = fields[2];
        const auto res = std::from_chars(lab.data(), lab.data() + lab.size(), label, 16);
        if (lab.empty() || res.ec != std::errc{} || res.ptr != lab.data() + lab.size())
            throw ParseError("bad hex label '" + lab + "'", lineno);
        rows.emplace_back(label, std::complex<double>(re, im));
        row_lines.push_back(lineno);
    }
    if (rows.empty()) throw ParseError("no constellation rows", lineno);
    const std::size_t n = rows.size();
    int m = 0;
    while ((std::size_t{1} << m) < n) ++m;
    if ((std::size_t{1} << m) != n || m < 1)
        throw ParseError("row count " + std::to_string(n) + " is not a power of two", lineno);
    std::vector<std::complex<double>> pts(n);
    std::vector<bool> seen(n, false);
    for (std::size_t r = 0; r < n; ++r) {
        const auto [label, z] = rows[r];
        if (label >= n) throw ParseError("label " + format_label(label, m) + " out of range", row_lines[r]);
        if (seen[label]) throw ParseError("duplicate label " + format_label(label, m), row_lines[r]);
        seen[label] = true;
        pts[label] = z;
    }
    return Constellation(m, std::move(pts));
}

void export_tsv(const Constellation& c, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    write_tsv(os, c);
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

Constellation import_tsv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    return read_tsv(is);
}

}  // namespace vvgcs
