#ifndef VVGCS_COMPLEX_HPP
#define VVGCS_COMPLEX_HPP

// Complex arithmetic on (re, im) pairs of double or numgrad::Var.

#include <algorithm>
#include <cmath>
#include <complex>
#include <type_traits>

#include "vvgcs/numgrad.hpp"

namespace vvgcs {

template <class T>
struct Cplx {
    T re{};
    T im{};
};

using CplxD = Cplx<double>;
using CplxV = Cplx<numgrad::Var>;

inline std::complex<double> to_std(const CplxD& z) { return {z.re, z.im}; }
inline CplxD from_std(std::complex<double> z) { return {z.real(), z.imag()}; }

template <class T>
CplxD value(const Cplx<T>& z) {
    return {numgrad::value(z.re), numgrad::value(z.im)};
}

template <class T>
Cplx<T> cadd(const Cplx<T>& a, const Cplx<T>& b) {
    return {a.re + b.re, a.im + b.im};
}

template <class T>
Cplx<T> csub(const Cplx<T>& a, const Cplx<T>& b) {
    return {a.re - b.re, a.im - b.im};
}

template <class T>
Cplx<T> cmul(const Cplx<T>& a, const Cplx<T>& b) {
    return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}

template <class T>
Cplx<T> cscale(const Cplx<T>& a, const std::type_identity_t<T>& s) {
    return {a.re * s, a.im * s};
}

template <class T>
Cplx<T> cconj(const Cplx<T>& a) {
    return {a.re, -a.im};
}

// z^n by binary exponentiation, n >= 1.
template <class T>
Cplx<T> cpow_int(const Cplx<T>& z, int n) {
    if (n < 1) throw numgrad::DomainError("cpow_int: exponent must be >= 1");
    Cplx<T> result{};
    bool have = false;
    Cplx<T> base = z;
    while (n > 0) {
        if (n & 1) {
            result = have ? cmul(result, base) : base;
            have = true;
        }
        n >>= 1;
        if (n > 0) base = cmul(base, base);
    }
    return result;
}

template <class T>
T cabs2(const Cplx<T>& z) {
    return numgrad::abs2(z.re, z.im);
}

inline double cabs(const CplxD& z) { return std::hypot(z.re, z.im); }
inline double carg(const CplxD& z) { return std::atan2(z.im, z.re); }

// Magnitude with the origin guard: exact zero is an error, and the partial
// denominators never drop below sqrt(kMagnitudeFloor2).
inline numgrad::Var cabs(const CplxV& z) {
    using namespace numgrad;
    const Var r2 = abs2(z.re, z.im);
    if (r2.value() == 0.0) throw DomainError("cabs: magnitude of the origin");
    const double r = std::sqrt(r2.value());
    if (r2.is_constant()) return Var{r};
    return r2.tape()->record(Op::Sqrt, r, r2, 0.5 / std::sqrt(std::max(r2.value(), kMagnitudeFloor2)));
}

inline numgrad::Var carg(const CplxV& z) {
    if (z.re.value() == 0.0 && z.im.value() == 0.0) throw numgrad::DomainError("carg: argument of the origin");
    return numgrad::atan2(z.im, z.re);
}

// e^{j theta}
inline CplxD cexp_j(double theta) { return {std::cos(theta), std::sin(theta)}; }
inline CplxV cexp_j(const numgrad::Var& theta) { return {numgrad::cos(theta), numgrad::sin(theta)}; }

}  // namespace vvgcs

#endif  // VVGCS_COMPLEX_HPP
