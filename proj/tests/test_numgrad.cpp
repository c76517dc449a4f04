#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "vvgcs/complex.hpp"
#include "vvgcs/numgrad.hpp"
#include "vvgcs/rng.hpp"

using namespace vvgcs;
using namespace vvgcs::numgrad;

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Unary op checked against a central difference at n random points.
void check_unary(const char* name, const std::function<Var(const Var&)>& f,
                 const std::function<double(double)>& fd, double lo, double hi) {
    auto rng = make_stream(7, {hash_name(name)});
    std::uniform_real_distribution<double> u(lo, hi);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double x0 = u(rng);
        Tape t;
        Var x = t.leaf(x0);
        Var y = f(x);
        const double g = gradient(t, y, std::span<const Var>(&x, 1))[0];
        const double h = 1e-6 * std::max(1.0, std::abs(x0));
        const double num = (fd(x0 + h) - fd(x0 - h)) / (2 * h);
        worst = std::max(worst, rel_err(g, num));
    }
    INFO(name);
    CHECK(worst < 1e-5);
}

}  // namespace

TEST_CASE("square derivative") {
    Tape t;
    Var x = t.leaf(3.0);
    Var y = x * x;
    CHECK(y.value() == 9.0);
    CHECK(gradient(t, y, std::span<const Var>(&x, 1))[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("softplus at zero") {
    Tape t;
    Var x = t.leaf(0.0);
    Var y = softplus(x);
    CHECK(y.value() == doctest::Approx(std::numbers::ln2).epsilon(1e-12));
    CHECK(gradient(t, y, std::span<const Var>(&x, 1))[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("atan2 on the positive imaginary axis") {
    Tape t;
    Var y = t.leaf(1.0);
    Var x = t.leaf(0.0);
    Var a = atan2(y, x);
    CHECK(a.value() == doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));
    const std::vector<Var> wrt{y, x};
    const auto g = gradient(t, a, wrt);
    CHECK(std::abs(g[0]) < 1e-15);
    CHECK(g[1] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("product adjoints") {
    Tape t;
    Var x = t.leaf(2.0);
    Var y = t.leaf(5.0);
    Var z = x * y;
    const std::vector<Var> wrt{x, y};
    const auto g = gradient(t, z, wrt);
    CHECK(g[0] == 5.0);
    CHECK(g[1] == 2.0);
}

TEST_CASE("sigmoid chain") {
    Tape t;
    Var x = t.leaf(0.0);
    Var y = sigmoid(3.0 * x);
    CHECK(y.value() == doctest::Approx(0.5));
    CHECK(gradient(t, y, std::span<const Var>(&x, 1))[0] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("elementary operations against central differences") {
    check_unary("exp", [](const Var& x) { return exp(x); }, [](double x) { return std::exp(x); }, -5, 5);
    check_unary("log", [](const Var& x) { return log(x); }, [](double x) { return std::log(x); }, 0.1, 10);
    check_unary("sqrt", [](const Var& x) { return sqrt(x); }, [](double x) { return std::sqrt(x); }, 0.1, 10);
    check_unary("sin", [](const Var& x) { return sin(x); }, [](double x) { return std::sin(x); }, -6, 6);
    check_unary("cos", [](const Var& x) { return cos(x); }, [](double x) { return std::cos(x); }, -6, 6);
    check_unary("tanh", [](const Var& x) { return tanh(x); }, [](double x) { return std::tanh(x); }, -4, 4);
    check_unary("sigmoid", [](const Var& x) { return sigmoid(x); },
                [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, -8, 8);
    check_unary("softplus", [](const Var& x) { return softplus(x); },
                [](double x) { return std::log1p(std::exp(x)); }, -8, 8);
    check_unary("pow3", [](const Var& x) { return pow_int(x, 3); }, [](double x) { return x * x * x; }, -3, 3);
    check_unary("powm2", [](const Var& x) { return pow_int(x, -2); }, [](double x) { return 1.0 / (x * x); }, 0.3,
                3);
    check_unary("div", [](const Var& x) { return 1.5 / x; }, [](double x) { return 1.5 / x; }, 0.2, 4);
    check_unary("relu", [](const Var& x) { return relu(x); }, [](double x) { return x > 0 ? x : 0.0; }, 0.05, 4);
    check_unary("neg", [](const Var& x) { return -x; }, [](double x) { return -x; }, -4, 4);
    check_unary("atan2y", [](const Var& y) { return atan2(y, Var(0.7)); }, [](double y) { return std::atan2(y, 0.7); },
                -3, 3);
    check_unary("atan2x", [](const Var& x) { return atan2(Var(-0.4), x); },
                [](double x) { return std::atan2(-0.4, x); }, -3, 3);
    check_unary("abs2", [](const Var& x) { return abs2(x, Var(0.3)); }, [](double x) { return x * x + 0.09; }, -3, 3);
}

TEST_CASE("random 200-node graph matches finite differences") {
    auto rng = make_stream(3, {hash_name("graph")});
    std::uniform_int_distribution<int> pick_op(0, 6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x0(8);
    for (auto& v : x0) v = u(rng);
    std::vector<int> ops;
    std::vector<std::pair<int, int>> args;
    {
        std::mt19937 g(11);
        for (int i = 0; i < 200; ++i) {
            ops.push_back(pick_op(rng));
            const int avail = 8 + i;
            args.emplace_back(static_cast<int>(g() % avail), static_cast<int>(g() % avail));
        }
    }
    // Bounded ops only so the graph stays well conditioned.
    auto build = [&](auto make_input) {
        using V = decltype(make_input(0));
        std::vector<V> nodes;
        for (int i = 0; i < 8; ++i) nodes.push_back(make_input(i));
        for (int i = 0; i < 200; ++i) {
            const V& a = nodes[args[i].first];
            const V& b = nodes[args[i].second];
            switch (ops[i]) {
                case 0: nodes.push_back(a + b); break;
                case 1: nodes.push_back(a * b); break;
                case 2: nodes.push_back(numgrad::tanh(a)); break;
                case 3: nodes.push_back(numgrad::sin(a) - b); break;
                case 4: nodes.push_back(numgrad::sigmoid(a) * 2.0 - 1.0); break;
                case 5: nodes.push_back(numgrad::atan2(a, b + 3.0)); break;
                default: nodes.push_back(numgrad::sqrt(numgrad::abs2(a, b) + 1.0) - 1.0); break;
            }
        }
        V sum = 0.0;
        for (int i = 8; i < static_cast<int>(nodes.size()); ++i) sum = sum + nodes[i];
        return sum;
    };
    Tape t;
    std::vector<Var> xs;
    Var out = build([&](int i) { xs.push_back(t.leaf(x0[i])); return xs.back(); });
    const auto g = gradient(t, out, xs);
    for (int i = 0; i < 8; ++i) {
        const double h = 1e-6;
        auto xp = x0, xm = x0;
        xp[i] += h;
        xm[i] -= h;
        const double fp = build([&](int j) { return xp[j]; });
        const double fm = build([&](int j) { return xm[j]; });
        CHECK(rel_err(g[i], (fp - fm) / (2 * h)) < 1e-5);
    }
}

TEST_CASE("backward visits every node exactly once") {
    Tape t;
    Var x = t.leaf(0.3);
    Var y = t.leaf(-1.2);
    Var acc = x;
    for (int i = 0; i < 50; ++i) acc = acc * y + sin(x);
    t.backward(acc);
    CHECK(t.last_backward_visits() == t.size());
}

TEST_CASE("domain errors") {
    Tape t;
    Var zero = t.leaf(0.0);
    Var neg = t.leaf(-1.0);
    CHECK_THROWS_AS(log(zero), DomainError);
    CHECK_THROWS_AS(log(neg), DomainError);
    CHECK_THROWS_AS(sqrt(neg), DomainError);
    CHECK_THROWS_AS(t.leaf(1.0) / zero, DomainError);
    CHECK_THROWS_AS(atan2(zero, zero), DomainError);
    CHECK_THROWS_AS(carg(CplxV{zero, zero}), DomainError);
    CHECK_THROWS_AS(cabs(CplxV{zero, zero}), DomainError);
}

TEST_CASE("mixing tapes is rejected") {
    Tape a, b;
    Var x = a.leaf(1.0);
    Var y = b.leaf(2.0);
    CHECK_THROWS_AS(x + y, GraphError);
    CHECK_THROWS_AS(b.backward(x), GraphError);
}

TEST_CASE("constants never touch a tape") {
    Var c = sin(Var(0.5)) * 2.0 + exp(Var(1.0));
    CHECK(c.is_constant());
    CHECK(c.value() == doctest::Approx(2 * std::sin(0.5) + std::exp(1.0)));
}

TEST_CASE("gradients are deterministic") {
    auto run = [] {
        Tape t;
        std::vector<Var> xs{t.leaf(0.1), t.leaf(0.7), t.leaf(-0.4)};
        Var s = 0.0;
        for (int i = 0; i < 100; ++i) s = s + tanh(xs[i % 3] * static_cast<double>(i) * 0.01 + xs[(i + 1) % 3]);
        return gradient(t, s, xs);
    };
    CHECK(run() == run());
}

TEST_CASE("complex composites") {
    const CplxD p = cpow_int(CplxD{0.0, 1.0}, 4);
    CHECK(p.re == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(p.im) < 1e-15);
    Tape t;
    Var th = t.leaf(0.3);
    CHECK(carg(cexp_j(th)).value() == doctest::Approx(0.3).epsilon(1e-15));

    // d/dtheta of arg((z e^{j theta})^4)/4 is 1.
    Tape t2;
    Var theta = t2.leaf(0.05);
    const CplxV z{Var(0.8), Var(0.35)};
    Var est = carg(cpow_int(cmul(z, cexp_j(theta)), 4)) * 0.25;
    CHECK(gradient(t2, est, std::span<const Var>(&theta, 1))[0] == doctest::Approx(1.0).epsilon(1e-12));
}
