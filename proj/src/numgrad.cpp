#include "vvgcs/numgrad.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vvgcs::numgrad {

const char* op_name(Op op) noexcept {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
        case Op::Neg: return "neg";
        case Op::PowInt: return "pow_int";
        case Op::Sqrt: return "sqrt";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        case Op::Atan2: return "atan2";
        case Op::Abs2: return "abs2";
        case Op::Max: return "max";
        case Op::Softplus: return "softplus";
        case Op::Sigmoid: return "sigmoid";
        case Op::Tanh: return "tanh";
        case Op::Relu: return "relu";
        case Op::Custom: return "custom";
    }
    return "?";
}

namespace {

Tape* common_tape(const Var& a, const Var& b) {
    Tape* ta = a.tape();
    Tape* tb = b.tape();
    if (ta && tb && ta != tb) throw GraphError("operands belong to different tapes");
    return ta ? ta : tb;
}

[[noreturn]] void domain_fail(const char* op, double x) {
    std::ostringstream os;
    os << op << ": argument " << x << " outside the domain";
    throw DomainError(os.str());
}

double stable_softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// ---- Tape ----------------------------------------------------------------

Var Tape::push(Op op, double value, std::uint32_t a, double da, std::uint32_t b, double db) {
    if (nodes_.size() >= static_cast<std::size_t>(kNoNode)) throw GraphError("tape full");
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{op, a, b, da, db});
    values_.push_back(value);
    return Var{value, id, this};
}

Var Tape::leaf(double value) { return push(Op::Leaf, value, kNoNode, 0.0, kNoNode, 0.0); }

std::vector<Var> Tape::leaves(std::span<const double> values) {
    std::vector<Var> out;
    out.reserve(values.size());
    for (double v : values) out.push_back(leaf(v));
    return out;
}

Var Tape::record(Op op, double value, const Var& a, double da, const Var& b, double db) {
    for (const Var* p : {&a, &b}) {
        if (p->tape() && p->tape() != this) throw GraphError("operand belongs to a different tape");
    }
    if (a.is_constant() && b.is_constant()) return Var{value};
    const std::uint32_t ia = a.is_constant() ? kNoNode : a.id();
    const std::uint32_t ib = b.is_constant() ? kNoNode : b.id();
    return push(op, value, ia, a.is_constant() ? 0.0 : da, ib, b.is_constant() ? 0.0 : db);
}

std::vector<Var> Tape::custom(std::span<const Var> inputs, std::span<const double> outputs, VjpFn vjp) {
    CustomBlock block;
    block.inputs.reserve(inputs.size());
    for (const Var& v : inputs) {
        if (v.tape() && v.tape() != this) throw GraphError("custom block input belongs to a different tape");
        block.inputs.push_back(v.is_constant() ? kNoNode : v.id());
    }
    if (outputs.empty()) throw GraphError("custom block without outputs");
    const auto block_id = static_cast<std::uint32_t>(blocks_.size());
    block.first_output = static_cast<std::uint32_t>(nodes_.size());
    block.num_outputs = static_cast<std::uint32_t>(outputs.size());
    block.vjp = std::move(vjp);
    blocks_.push_back(std::move(block));

    std::vector<Var> out;
    out.reserve(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        // a = block index, b = output position within the block
        out.push_back(push(Op::Custom, outputs[i], block_id, 0.0, static_cast<std::uint32_t>(i), 0.0));
    }
    return out;
}

std::vector<double> Tape::backward(const Var& root) {
    if (root.tape() != this || root.id() >= nodes_.size()) throw GraphError("backward: root is not on this tape");
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[root.id()] = 1.0;
    visits_ = 0;
    std::vector<double> block_in;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
        ++visits_;
        const Node& n = nodes_[i];
        if (n.op == Op::Custom) {
            // Run the block once, at its first output; later outputs were
            // already visited so all output adjoints are final.
            if (n.b != 0) continue;
            CustomBlock& blk = blocks_[n.a];
            const std::span<const double> out_adj(adj.data() + blk.first_output, blk.num_outputs);
            if (std::all_of(out_adj.begin(), out_adj.end(), [](double g) { return g == 0.0; })) continue;
            block_in.assign(blk.inputs.size(), 0.0);
            blk.vjp(out_adj, block_in);
            for (std::size_t k = 0; k < blk.inputs.size(); ++k) {
                if (blk.inputs[k] != kNoNode) adj[blk.inputs[k]] += block_in[k];
            }
            continue;
        }
        const double g = adj[i];
        if (g == 0.0) continue;
        if (n.a != kNoNode) adj[n.a] += g * n.da;
        if (n.b != kNoNode) adj[n.b] += g * n.db;
    }
    return adj;
}

void Tape::clear() {
    nodes_.clear();
    values_.clear();
    blocks_.clear();
    visits_ = 0;
}

std::vector<double> gradient(Tape& tape, const Var& root, std::span<const Var> wrt) {
    std::vector<double> g(wrt.size(), 0.0);
    if (root.is_constant()) return g;
    const auto adj = tape.backward(root);
    for (std::size_t i = 0; i < wrt.size(); ++i) {
        if (wrt[i].is_constant()) continue;
        if (wrt[i].tape() != &tape) throw GraphError("gradient: variable is not on this tape");
        g[i] = adj[wrt[i].id()];
    }
    return g;
}

// ---- elementary operations -----------------------------------------------

Var operator+(const Var& a, const Var& b) {
    Tape* t = common_tape(a, b);
    const double v = a.value() + b.value();
    return t ? t->record(Op::Add, v, a, 1.0, b, 1.0) : Var{v};
}

Var operator-(const Var& a, const Var& b) {
    Tape* t = common_tape(a, b);
    const double v = a.value() - b.value();
    return t ? t->record(Op::Sub, v, a, 1.0, b, -1.0) : Var{v};
}

Var operator*(const Var& a, const Var& b) {
    Tape* t = common_tape(a, b);
    const double v = a.value() * b.value();
    return t ? t->record(Op::Mul, v, a, b.value(), b, a.value()) : Var{v};
}

Var operator/(const Var& a, const Var& b) {
    if (b.value() == 0.0) throw DomainError("div: division by zero");
    Tape* t = common_tape(a, b);
    const double inv = 1.0 / b.value();
    const double v = a.value() * inv;
    return t ? t->record(Op::Div, v, a, inv, b, -v * inv) : Var{v};
}

Var operator-(const Var& a) {
    return a.is_constant() ? Var{-a.value()} : a.tape()->record(Op::Neg, -a.value(), a, -1.0);
}

Var pow_int(const Var& x, int n) {
    const double xv = x.value();
    if (n < 0 && xv == 0.0) throw DomainError("pow_int: zero to a negative power");
    if (n == 0) return Var{1.0};
    const double v = std::pow(xv, n);
    if (x.is_constant()) return Var{v};
    return x.tape()->record(Op::PowInt, v, x, n * std::pow(xv, n - 1));
}

Var sqrt(const Var& x) {
    if (!(x.value() > 0.0)) domain_fail("sqrt", x.value());
    const double v = std::sqrt(x.value());
    if (x.is_constant()) return Var{v};
    return x.tape()->record(Op::Sqrt, v, x, 0.5 / v);
}

Var exp(const Var& x) {
    const double v = std::exp(x.value());
    if (x.is_constant()) return Var{v};
    return x.tape()->record(Op::Exp, v, x, v);
}

Var log(const Var& x) {
    if (!(x.value() > 0.0)) domain_fail("log", x.value());
    const double v = std::log(x.value());
    if (x.is_constant()) return Var{v};
    return x.tape()->record(Op::Log, v, x, 1.0 / x.value());
}

Var sin(const Var& x) {
    const double v = std::sin(x.value());
    if (x.is_constant()) return Var{v};
    return x.tape()->record(Op::Sin, v, x, std::cos(x.value()));
}

Var cos(const Var& x) {
    const double v = std::cos(x.value());
    if (x.is_constant()) return Var{v};
    return x.tape()->record(Op::Cos, v, x, -std::sin(x.value()));
}

Var atan2(const Var& y, const Var& x) {
    const double yv = y.value();
    const double xv = x.value();
    if (yv == 0.0 && xv == 0.0) throw DomainError("atan2: both arguments are zero");
    const double v = std::atan2(yv, xv);
    Tape* t = common_tape(y, x);
    if (!t) return Var{v};
    const double r2 = std::max(xv * xv + yv * yv, kMagnitudeFloor2);
    return t->record(Op::Atan2, v, y, xv / r2, x, -yv / r2);
}

Var abs2(const Var& re, const Var& im) {
    const double v = re.value() * re.value() + im.value() * im.value();
    Tape* t = common_tape(re, im);
    return t ? t->record(Op::Abs2, v, re, 2.0 * re.value(), im, 2.0 * im.value()) : Var{v};
}

Var max(const Var& a, const Var& b) {
    const bool take_a = a.value() >= b.value();
    Tape* t = common_tape(a, b);
    const double v = take_a ? a.value() : b.value();
    return t ? t->record(Op::Max, v, a, take_a ? 1.0 : 0.0, b, take_a ? 0.0 : 1.0) : Var{v};
}

Var softplus(const Var& x) {
    const double v = stable_softplus(x.value());
    if (x.is_constant()) return Var{v};
    return x.tape()->record(Op::Softplus, v, x, stable_sigmoid(x.value()));
}

Var sigmoid(const Var& x) {
    const double v = stable_sigmoid(x.value());
    if (x.is_constant()) return Var{v};
    return x.tape()->record(Op::Sigmoid, v, x, v * (1.0 - v));
}

Var tanh(const Var& x) {
    const double v = std::tanh(x.value());
    if (x.is_constant()) return Var{v};
    return x.tape()->record(Op::Tanh, v, x, 1.0 - v * v);
}

Var relu(const Var& x) {
    const double v = x.value() > 0.0 ? x.value() : 0.0;
    if (x.is_constant()) return Var{v};
    return x.tape()->record(Op::Relu, v, x, x.value() > 0.0 ? 1.0 : 0.0);
}

double pow_int(double x, int n) { return std::pow(x, n); }
double sqrt(double x) { return std::sqrt(x); }
double exp(double x) { return std::exp(x); }
double log(double x) { return std::log(x); }
double sin(double x) { return std::sin(x); }
double cos(double x) { return std::cos(x); }
double atan2(double y, double x) { return std::atan2(y, x); }
double abs2(double re, double im) { return re * re + im * im; }
double max(double a, double b) { return a >= b ? a : b; }
double softplus(double x) { return stable_softplus(x); }
double sigmoid(double x) { return stable_sigmoid(x); }
double tanh(double x) { return std::tanh(x); }
double relu(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace vvgcs::numgrad
