#ifndef VVGCS_NUMGRAD_HPP
#define VVGCS_NUMGRAD_HPP

// Reverse-mode automatic differentiation over real scalars.
//
// A Tape records one node per operation together with the local partial
// derivatives with respect to its (at most two) parents. Parents always
// precede their children, so a single reverse sweep accumulates adjoints.
// A Var is either a tape node or a plain constant (no tape); operations on
// constants never touch a tape, which lets the same templated code run on
// double and Var.
//
// Vector-valued blocks (the demapper MLP) are recorded as custom nodes that
// carry a vector-Jacobian product callback.

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vvgcs::numgrad {

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class GraphError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class Op : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    PowInt,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Atan2,
    Abs2,
    Max,
    Softplus,
    Sigmoid,
    Tanh,
    Relu,
    Custom,
};

const char* op_name(Op op) noexcept;

// Squared-magnitude floor used in the denominators of atan2/sqrt partials.
inline constexpr double kMagnitudeFloor2 = 1e-24;

inline constexpr std::uint32_t kNoNode = std::numeric_limits<std::uint32_t>::max();

class Tape;

class Var {
public:
    Var() = default;
    Var(double constant) : value_(constant) {}  // NOLINT(google-explicit-constructor)

    double value() const noexcept { return value_; }
    std::uint32_t id() const noexcept { return id_; }
    Tape* tape() const noexcept { return tape_; }
    bool is_constant() const noexcept { return tape_ == nullptr; }

private:
    friend class Tape;
    Var(double v, std::uint32_t id, Tape* t) : value_(v), id_(id), tape_(t) {}

    double value_ = 0.0;
    std::uint32_t id_ = kNoNode;
    Tape* tape_ = nullptr;
};

// Vector-Jacobian product of a custom block: given the adjoints of the block
// outputs, add the adjoint contributions to each block input.
using VjpFn = std::function<void(std::span<const double> output_adjoints,
                                 std::span<double> input_adjoints)>;

class Tape {
public:
    struct Node {
        Op op = Op::Leaf;
        std::uint32_t a = kNoNode;
        std::uint32_t b = kNoNode;
        double da = 0.0;
        double db = 0.0;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(double value);
    std::vector<Var> leaves(std::span<const double> values);

    // Records a node with up to two parents. Constant parents are dropped.
    Var record(Op op, double value, const Var& a, double da, const Var& b = Var{}, double db = 0.0);

    // Records a vector-valued block. Output nodes are contiguous.
    std::vector<Var> custom(std::span<const Var> inputs, std::span<const double> outputs, VjpFn vjp);

    // Adjoint d(root)/d(node) for every node on the tape.
    std::vector<double> backward(const Var& root);

    std::size_t size() const noexcept { return nodes_.size(); }
    const Node& node(std::uint32_t id) const { return nodes_.at(id); }
    double value(std::uint32_t id) const { return values_.at(id); }

    // Number of node visits performed by the last backward pass.
    std::size_t last_backward_visits() const noexcept { return visits_; }

    void clear();

private:
    struct CustomBlock {
        std::vector<std::uint32_t> inputs;  // kNoNode for constants
        std::uint32_t first_output = 0;
        std::uint32_t num_outputs = 0;
        VjpFn vjp;
    };

    Var push(Op op, double value, std::uint32_t a, double da, std::uint32_t b, double db);

    std::vector<Node> nodes_;
    std::vector<double> values_;
    std::vector<CustomBlock> blocks_;
    std::size_t visits_ = 0;
};

// Gradient of root with respect to the given variables (0 for constants).
std::vector<double> gradient(Tape& tape, const Var& root, std::span<const Var> wrt);

// ---- elementary operations ----------------------------------------------

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

Var pow_int(const Var& x, int n);
Var sqrt(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var sin(const Var& x);
Var cos(const Var& x);
Var atan2(const Var& y, const Var& x);
Var abs2(const Var& re, const Var& im);
Var max(const Var& a, const Var& b);
Var softplus(const Var& x);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var relu(const Var& x);

// Plain-double overloads so templated code can call numgrad::f(x) for both
// scalar types.
double pow_int(double x, int n);
double sqrt(double x);
double exp(double x);
double log(double x);
double sin(double x);
double cos(double x);
double atan2(double y, double x);
double abs2(double re, double im);
double max(double a, double b);
double softplus(double x);
double sigmoid(double x);
double tanh(double x);
double relu(double x);

inline double value(double x) noexcept { return x; }
inline double value(const Var& x) noexcept { return x.value(); }

}  // namespace vvgcs::numgrad

#endif  // VVGCS_NUMGRAD_HPP
