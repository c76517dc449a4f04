#ifndef VVGCS_CONSTELLATION_HPP
#define VVGCS_CONSTELLATION_HPP

#include <complex>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vvgcs/complex.hpp"
#include "vvgcs/rng.hpp"

namespace vvgcs {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// 2^m complex points. Point i carries the bit vector given by the binary
// expansion of i, most significant bit first.
class Constellation {
public:
    Constellation(int bits_per_symbol, std::vector<std::complex<double>> points);

    int bits_per_symbol() const noexcept { return m_; }
    std::size_t size() const noexcept { return points_.size(); }
    std::span<const std::complex<double>> points() const noexcept { return points_; }
    std::complex<double> operator[](std::size_t label) const { return points_.at(label); }

    std::complex<double> map_bits(std::span<const std::uint8_t> bits) const;
    double mean_power() const noexcept;

    std::vector<CplxD> as_pairs() const;

    friend bool operator==(const Constellation&, const Constellation&) = default;

private:
    int m_;
    std::vector<std::complex<double>> points_;
};

std::uint32_t label_from_bits(std::span<const std::uint8_t> bits);
std::vector<std::uint8_t> bits_from_label(std::uint32_t label, int bits_per_symbol);

// Bit i (0 = most significant) of a label.
inline std::uint8_t label_bit(std::uint32_t label, int bit, int bits_per_symbol) {
    return static_cast<std::uint8_t>((label >> (bits_per_symbol - 1 - bit)) & 1u);
}

// Uppercase hex, zero padded to at least two digits.
std::string format_label(std::uint32_t label, int bits_per_symbol);

Constellation normalize(const Constellation& c);

// Unit-average-power scaling of a point set, differentiable when T = Var.
template <class T>
std::vector<Cplx<T>> normalize_points(std::span<const Cplx<T>> points) {
    if (points.empty()) throw std::invalid_argument("normalize: empty constellation");
    T power = 0.0;
    for (const auto& p : points) power = power + cabs2(p);
    if (numgrad::value(power) == 0.0) throw std::invalid_argument("normalize: all-zero constellation");
    const T scale = 1.0 / numgrad::sqrt(power / static_cast<double>(points.size()));
    std::vector<Cplx<T>> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(cscale(p, scale));
    return out;
}

template <class T>
std::vector<Cplx<T>> map_labels(std::span<const Cplx<T>> points, std::span<const std::uint32_t> labels) {
    std::vector<Cplx<T>> out;
    out.reserve(labels.size());
    for (auto l : labels) out.push_back(points[l]);
    return out;
}

// Square QAM with a binary-reflected Gray code per quadrature, unit power.
// The first m/2 bits select the in-phase level, the rest the quadrature level.
Constellation square_qam_gray(int bits_per_symbol);

// Gray square QAM plus i.i.d. N(0, perturb_std^2) on every coordinate, renormalized.
Constellation perturbed_qam(int bits_per_symbol, double perturb_std, PhiloxEngine& rng);

void write_tsv(std::ostream& os, const Constellation& c);
Constellation read_tsv(std::istream& is);
void export_tsv(const Constellation& c, const std::filesystem::path& path);
Constellation import_tsv(const std::filesystem::path& path);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace vvgcs

#endif  // VVGCS_CONSTELLATION_HPP
