#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lipgan/errors.hpp"
#include "lipgan/tensor.hpp"

namespace lipgan {

// Tape op kinds. `constant` is a leaf; everything else has one or two parents.
enum class Op {
    constant,
    add,
    sub,
    mul,
    div,
    neg,
    scale,       // c * x
    add_const,   // x + c
    exp,
    log,
    sin,
    cos,
    tanh,
    sigmoid,
    softplus,
    sqrt,
    square,
    leaky_relu,  // slope in aux
    matmul,      // optional transposes
    bias_add,    // [B,n] + [n]
    sum,         // full reduce -> scalar
    mean,        // full reduce -> scalar
    colsum,      // [B,n] -> [n]
    rowsum,      // [B,n] -> [B]
    broadcast_full,  // scalar -> recorded shape
    broadcast_col,   // [B] -> [B,n]
    broadcast_row,   // [n] -> [B,n]
};

class Tape;

// Handle to a recorded tensor: the forward value plus its node on the tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
    double item() const { return value().item(); }
};

struct Node {
    Op op = Op::constant;
    int a = -1, b = -1;
    double aux = 0.0;      // scale factor, added constant, or leaky-relu slope
    bool ta = false, tb = false;
    std::size_t n_extra = 0;  // broadcast width / row count
    Tensor value;
    int level = 0;  // 0 = primal graph, >=1 = created by a differentiable backward
};

namespace detail {

inline Tensor transposed(const Tensor& m) {
    const std::size_t r = m.shape[0], c = m.shape[1];
    Tensor out = Tensor::zeros({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.values[j * r + i] = m.values[i * c + j];
    return out;
}

// C = op_a(A) * op_b(B) with optional transposes applied first.
inline Tensor matmul_value(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    const Tensor& ae = ta ? transposed(a) : a;
    const Tensor& be = tb ? transposed(b) : b;
    // Note: binding a temporary to const& keeps it alive for the full scope.
    const std::size_t m = ae.shape[0], k = ae.shape[1], n = be.shape[1];
    Tensor c = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &ae.values[i * k];
        double* crow = &c.values[i * n];
        for (std::size_t l = 0; l < k; ++l) {
            const double av = arow[l];
            if (av == 0.0) continue;
            const double* brow = &be.values[l * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

inline double sigmoid_scalar(double t) {
    if (t >= 0) {
        double e = std::exp(-t);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(t);
    return e / (1.0 + e);
}

// log(1 + e^t) without overflow.
inline double softplus_scalar(double t) {
    if (t > 0) return t + std::log1p(std::exp(-t));
    return std::log1p(std::exp(t));
}

}  // namespace detail

// Append-only tape recording forward ops; parents always precede children, so
// a single descending pass implements reverse-mode differentiation.
class Tape {
public:
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    Var constant(Tensor t) { return push(Node{Op::constant, -1, -1, 0.0, false, false, 0, std::move(t), 0}); }
    Var input(Tensor t) { return constant(std::move(t)); }

    Var add(Var a, Var b) {
        check_pair(a, b, "add");
        Tensor out = val(a);
        const Tensor& bv = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += bv.values[i];
        return push(Node{Op::add, a.id, b.id, 0.0, false, false, 0, std::move(out), lvl(a, b)});
    }
    Var sub(Var a, Var b) {
        check_pair(a, b, "sub");
        Tensor out = val(a);
        const Tensor& bv = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= bv.values[i];
        return push(Node{Op::sub, a.id, b.id, 0.0, false, false, 0, std::move(out), lvl(a, b)});
    }
    Var mul(Var a, Var b) {
        check_pair(a, b, "mul");
        Tensor out = val(a);
        const Tensor& bv = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= bv.values[i];
        return push(Node{Op::mul, a.id, b.id, 0.0, false, false, 0, std::move(out), lvl(a, b)});
    }
    Var div(Var a, Var b) {
        check_pair(a, b, "div");
        Tensor out = val(a);
        const Tensor& bv = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) out.values[i] /= bv.values[i];
        return push(Node{Op::div, a.id, b.id, 0.0, false, false, 0, std::move(out), lvl(a, b)});
    }
    Var neg(Var a) { return unary(Op::neg, a, [](double t) { return -t; }); }
    Var scale(Var a, double c) {
        Tensor out = val(a);
        for (double& v : out.values) v *= c;
        return push(Node{Op::scale, a.id, -1, c, false, false, 0, std::move(out), lvl(a)});
    }
    Var add_const(Var a, double c) {
        Tensor out = val(a);
        for (double& v : out.values) v += c;
        return push(Node{Op::add_const, a.id, -1, c, false, false, 0, std::move(out), lvl(a)});
    }
    Var exp(Var a) { return unary(Op::exp, a, [](double t) { return std::exp(t); }); }
    Var log(Var a) {
        for (double v : val(a).values)
            if (v <= 0.0) throw DomainError("log of non-positive value " + std::to_string(v));
        return unary(Op::log, a, [](double t) { return std::log(t); });
    }
    Var sin(Var a) { return unary(Op::sin, a, [](double t) { return std::sin(t); }); }
    Var cos(Var a) { return unary(Op::cos, a, [](double t) { return std::cos(t); }); }
    Var tanh(Var a) { return unary(Op::tanh, a, [](double t) { return std::tanh(t); }); }
    Var sigmoid(Var a) { return unary(Op::sigmoid, a, detail::sigmoid_scalar); }
    Var softplus(Var a) { return unary(Op::softplus, a, detail::softplus_scalar); }
    Var sqrt(Var a) {
        for (double v : val(a).values)
            if (v < 0.0) throw DomainError("sqrt of negative value " + std::to_string(v));
        return unary(Op::sqrt, a, [](double t) { return std::sqrt(t); });
    }
    Var square(Var a) { return unary(Op::square, a, [](double t) { return t * t; }); }
    Var leaky_relu(Var a, double slope) {
        Tensor out = val(a);
        for (double& v : out.values) v = v > 0.0 ? v : slope * v;
        return push(Node{Op::leaky_relu, a.id, -1, slope, false, false, 0, std::move(out), lvl(a)});
    }
    Var relu(Var a) { return leaky_relu(a, 0.0); }

    Var matmul(Var a, Var b, bool ta = false, bool tb = false) {
        const Tensor& av = val(a);
        const Tensor& bv = val(b);
        if (av.shape.size() != 2 || bv.shape.size() != 2)
            throw ConfigError("matmul wants rank-2 operands, got " + shape_str(av.shape) + " x " + shape_str(bv.shape));
        std::size_t ak = ta ? av.shape[0] : av.shape[1];
        std::size_t bk = tb ? bv.shape[1] : bv.shape[0];
        if (ak != bk)
            throw ConfigError("matmul inner dims differ: " + shape_str(av.shape) + (ta ? "^T" : "") + " x " +
                              shape_str(bv.shape) + (tb ? "^T" : ""));
        Tensor out = detail::matmul_value(av, bv, ta, tb);
        return push(Node{Op::matmul, a.id, b.id, 0.0, ta, tb, 0, std::move(out), lvl(a, b)});
    }

    Var bias_add(Var x, Var b) {
        const Tensor& xv = val(x);
        const Tensor& bv = val(b);
        if (xv.shape.size() != 2 || bv.shape.size() != 1 || xv.shape[1] != bv.shape[0])
            throw ConfigError("bias_add shape mismatch " + shape_str(xv.shape) + " + " + shape_str(bv.shape));
        Tensor out = xv;
        const std::size_t rows = xv.shape[0], cols = xv.shape[1];
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) out.values[i * cols + j] += bv.values[j];
        return push(Node{Op::bias_add, x.id, b.id, 0.0, false, false, 0, std::move(out), lvl(x, b)});
    }

    Var sum(Var a) {
        double s = 0.0;
        for (double v : val(a).values) s += v;
        return push(Node{Op::sum, a.id, -1, 0.0, false, false, 0, Tensor::scalar(s), lvl(a)});
    }
    Var mean(Var a) {
        const Tensor& av = val(a);
        if (av.size() == 0) throw UsageError("mean of empty tensor");
        double s = 0.0;
        for (double v : av.values) s += v;
        return push(Node{Op::mean, a.id, -1, 0.0, false, false, 0, Tensor::scalar(s / static_cast<double>(av.size())),
                         lvl(a)});
    }
    Var colsum(Var a) {
        const Tensor& av = val(a);
        if (av.shape.size() != 2) throw ConfigError("colsum wants rank-2, got " + shape_str(av.shape));
        const std::size_t rows = av.shape[0], cols = av.shape[1];
        Tensor out = Tensor::zeros({cols});
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) out.values[j] += av.values[i * cols + j];
        return push(Node{Op::colsum, a.id, -1, 0.0, false, false, 0, std::move(out), lvl(a)});
    }
    Var rowsum(Var a) {
        const Tensor& av = val(a);
        if (av.shape.size() != 2) throw ConfigError("rowsum wants rank-2, got " + shape_str(av.shape));
        const std::size_t rows = av.shape[0], cols = av.shape[1];
        Tensor out = Tensor::zeros({rows});
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) out.values[i] += av.values[i * cols + j];
        return push(Node{Op::rowsum, a.id, -1, 0.0, false, false, 0, std::move(out), lvl(a)});
    }
    Var broadcast_full(Var a, Shape shape) {
        if (val(a).size() != 1) throw ConfigError("broadcast_full wants a scalar source");
        Tensor out = Tensor::full(shape, val(a).values[0]);
        return push(Node{Op::broadcast_full, a.id, -1, 0.0, false, false, numel(shape), std::move(out), lvl(a)});
    }
    Var broadcast_col(Var a, std::size_t cols) {
        const Tensor& av = val(a);
        if (av.shape.size() != 1) throw ConfigError("broadcast_col wants rank-1, got " + shape_str(av.shape));
        const std::size_t rows = av.shape[0];
        Tensor out = Tensor::zeros({rows, cols});
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) out.values[i * cols + j] = av.values[i];
        return push(Node{Op::broadcast_col, a.id, -1, 0.0, false, false, cols, std::move(out), lvl(a)});
    }
    Var broadcast_row(Var a, std::size_t rows) {
        const Tensor& av = val(a);
        if (av.shape.size() != 1) throw ConfigError("broadcast_row wants rank-1, got " + shape_str(av.shape));
        const std::size_t cols = av.shape[0];
        Tensor out = Tensor::zeros({rows, cols});
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) out.values[i * cols + j] = av.values[j];
        return push(Node{Op::broadcast_row, a.id, -1, 0.0, false, false, rows, std::move(out), lvl(a)});
    }

    // ---- composites ----

    // batch [B,in] * W [in,out] + b [out]
    Var affine(Var x, Var w, Var b) { return bias_add(matmul(x, w), b); }

    Var l2norm(Var a) {
        Var flat = a;  // square/sum are shape-agnostic
        return sqrt(sum(square(flat)));
    }

    // [B,n] -> [B] of per-row Euclidean norms
    Var row_l2norm(Var a) { return sqrt(rowsum(square(a))); }

    // Generic dispatcher mirroring the named builders; `aux` carries the
    // scale constant or leaky-relu slope where the op needs one.
    Var apply(Op op, const std::vector<Var>& in, double aux = 0.0) {
        switch (op) {
            case Op::add: return add(in.at(0), in.at(1));
            case Op::sub: return sub(in.at(0), in.at(1));
            case Op::mul: return mul(in.at(0), in.at(1));
            case Op::div: return div(in.at(0), in.at(1));
            case Op::neg: return neg(in.at(0));
            case Op::scale: return scale(in.at(0), aux);
            case Op::add_const: return add_const(in.at(0), aux);
            case Op::exp: return exp(in.at(0));
            case Op::log: return log(in.at(0));
            case Op::sin: return sin(in.at(0));
            case Op::cos: return cos(in.at(0));
            case Op::tanh: return tanh(in.at(0));
            case Op::sigmoid: return sigmoid(in.at(0));
            case Op::softplus: return softplus(in.at(0));
            case Op::sqrt: return sqrt(in.at(0));
            case Op::square: return square(in.at(0));
            case Op::leaky_relu: return leaky_relu(in.at(0), aux);
            case Op::matmul: return matmul(in.at(0), in.at(1));
            case Op::bias_add: return bias_add(in.at(0), in.at(1));
            case Op::sum: return sum(in.at(0));
            case Op::mean: return mean(in.at(0));
            case Op::colsum: return colsum(in.at(0));
            case Op::rowsum: return rowsum(in.at(0));
            default: throw UsageError("apply: op kind has no generic form");
        }
    }

    // Plain reverse pass. Returns d(out)/d(wrt) as raw tensors; the tape is
    // left untouched, so repeated calls are bit-identical.
    std::vector<Tensor> backward(Var out, std::span<const Var> wrt) const {
        check_backward_args(out, wrt);
        std::vector<char> needs = needed_mask(wrt);
        std::vector<std::vector<double>> grad(nodes_.size());
        std::vector<char> has(nodes_.size(), 0);
        grad[static_cast<std::size_t>(out.id)] = {1.0};
        has[static_cast<std::size_t>(out.id)] = 1;

        for (int i = out.id; i >= 0; --i) {
            const std::size_t ui = static_cast<std::size_t>(i);
            if (!has[ui] || !needs[ui]) continue;
            accumulate_value_vjp(nodes_[ui], grad[ui], grad, has, needs);
        }

        std::vector<Tensor> result;
        result.reserve(wrt.size());
        for (const Var& v : wrt) {
            const std::size_t ui = static_cast<std::size_t>(v.id);
            Tensor g = Tensor::zeros(nodes_[ui].value.shape);
            if (has[ui]) g.values = grad[ui];
            result.push_back(std::move(g));
        }
        return result;
    }

    std::vector<Tensor> backward(Var out, std::initializer_list<Var> wrt) const {
        std::vector<Var> w(wrt);
        return backward(out, std::span<const Var>(w));
    }

    // Reverse pass recorded as new tape nodes, so gradients stay
    // differentiable. One level of nesting only: asking for differentiable
    // gradients of something that already contains gradients is rejected.
    std::vector<Var> backward_differentiable(Var out, std::span<const Var> wrt) {
        check_backward_args(out, wrt);
        if (nodes_[static_cast<std::size_t>(out.id)].level >= 1)
            throw UsageError("third-order differentiation requested; only one nesting level is supported");
        std::vector<char> needs = needed_mask(wrt);
        std::vector<int> grad(nodes_.size(), -1);

        emitting_ = true;
        grad[static_cast<std::size_t>(out.id)] = constant(Tensor::scalar(1.0)).id;
        const int limit = out.id;
        for (int i = limit; i >= 0; --i) {
            const std::size_t ui = static_cast<std::size_t>(i);
            if (grad[ui] < 0 || !needs[ui]) continue;
            emit_vjp(i, grad[ui], grad, needs);
        }
        emitting_ = false;

        std::vector<Var> result;
        result.reserve(wrt.size());
        for (const Var& v : wrt) {
            int g = grad[static_cast<std::size_t>(v.id)];
            if (g < 0)
                result.push_back(constant(Tensor::zeros(val(v).shape)));
            else
                result.push_back(Var{this, g});
        }
        return result;
    }

    std::vector<Var> backward_differentiable(Var out, std::initializer_list<Var> wrt) {
        std::vector<Var> w(wrt);
        return backward_differentiable(out, std::span<const Var>(w));
    }

private:
    friend struct Var;
    std::vector<Node> nodes_;
    bool emitting_ = false;

    const Tensor& val(Var v) const {
        if (v.tape != this) throw UsageError("tensor does not live on this tape");
        return nodes_[static_cast<std::size_t>(v.id)].value;
    }

    int lvl(Var a) const { return std::max(nodes_[static_cast<std::size_t>(a.id)].level, emitting_ ? 1 : 0); }
    int lvl(Var a, Var b) const {
        return std::max({nodes_[static_cast<std::size_t>(a.id)].level, nodes_[static_cast<std::size_t>(b.id)].level,
                         emitting_ ? 1 : 0});
    }

    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    template <class F>
    Var unary(Op op, Var a, F f) {
        Tensor out = val(a);
        for (double& v : out.values) v = f(v);
        return push(Node{op, a.id, -1, 0.0, false, false, 0, std::move(out), lvl(a)});
    }

    void check_pair(Var a, Var b, const char* what) const {
        if (!same_shape(val(a), val(b)))
            throw ConfigError(std::string(what) + " shape mismatch " + shape_str(val(a).shape) + " vs " +
                              shape_str(val(b).shape));
    }

    void check_backward_args(Var out, std::span<const Var> wrt) const {
        if (out.tape != this || out.id < 0 || out.id >= static_cast<int>(nodes_.size()))
            throw UsageError("backward output is not on this tape");
        if (nodes_[static_cast<std::size_t>(out.id)].value.size() != 1)
            throw UsageError("backward output must be scalar, got shape " +
                             shape_str(nodes_[static_cast<std::size_t>(out.id)].value.shape));
        for (const Var& v : wrt)
            if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
                throw UsageError("wrt tensor is not on this tape");
    }

    std::vector<char> needed_mask(std::span<const Var> wrt) const {
        std::vector<char> needs(nodes_.size(), 0);
        for (const Var& v : wrt) needs[static_cast<std::size_t>(v.id)] = 1;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (needs[i]) continue;
            const Node& n = nodes_[i];
            if ((n.a >= 0 && needs[static_cast<std::size_t>(n.a)]) ||
                (n.b >= 0 && needs[static_cast<std::size_t>(n.b)]))
                needs[i] = 1;
        }
        return needs;
    }

    static void axpy(std::vector<double>& dst, const std::vector<double>& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }

    void add_into(std::vector<std::vector<double>>& grad, std::vector<char>& has, int target,
                  std::vector<double>&& contribution) const {
        const std::size_t ut = static_cast<std::size_t>(target);
        if (!has[ut]) {
            grad[ut] = std::move(contribution);
            has[ut] = 1;
        } else {
            axpy(grad[ut], contribution);
        }
    }

    void accumulate_value_vjp(const Node& n, const std::vector<double>& g, std::vector<std::vector<double>>& grad,
                              std::vector<char>& has, const std::vector<char>& needs) const {
        auto want = [&](int id) { return id >= 0 && needs[static_cast<std::size_t>(id)]; };
        const std::size_t sz = n.value.size();
        switch (n.op) {
            case Op::constant: return;
            case Op::add:
                if (want(n.a)) add_into(grad, has, n.a, std::vector<double>(g));
                if (want(n.b)) add_into(grad, has, n.b, std::vector<double>(g));
                return;
            case Op::sub:
                if (want(n.a)) add_into(grad, has, n.a, std::vector<double>(g));
                if (want(n.b)) {
                    std::vector<double> c(g);
                    for (double& v : c) v = -v;
                    add_into(grad, has, n.b, std::move(c));
                }
                return;
            case Op::mul: {
                const auto& av = nodes_[static_cast<std::size_t>(n.a)].value.values;
                const auto& bv = nodes_[static_cast<std::size_t>(n.b)].value.values;
                if (want(n.a)) {
                    std::vector<double> c(sz);
                    for (std::size_t i = 0; i < sz; ++i) c[i] = g[i] * bv[i];
                    add_into(grad, has, n.a, std::move(c));
                }
                if (want(n.b)) {
                    std::vector<double> c(sz);
                    for (std::size_t i = 0; i < sz; ++i) c[i] = g[i] * av[i];
                    add_into(grad, has, n.b, std::move(c));
                }
                return;
            }
            case Op::div: {
                const auto& bv = nodes_[static_cast<std::size_t>(n.b)].value.values;
                if (want(n.a)) {
                    std::vector<double> c(sz);
                    for (std::size_t i = 0; i < sz; ++i) c[i] = g[i] / bv[i];
                    add_into(grad, has, n.a, std::move(c));
                }
                if (want(n.b)) {
                    const auto& yv = n.value.values;  // y = a/b, d/db = -y/b
                    std::vector<double> c(sz);
                    for (std::size_t i = 0; i < sz; ++i) c[i] = -g[i] * yv[i] / bv[i];
                    add_into(grad, has, n.b, std::move(c));
                }
                return;
            }
            case Op::neg: {
                std::vector<double> c(g);
                for (double& v : c) v = -v;
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::scale: {
                std::vector<double> c(g);
                for (double& v : c) v *= n.aux;
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::add_const:
                add_into(grad, has, n.a, std::vector<double>(g));
                return;
            case Op::exp: {
                const auto& yv = n.value.values;
                std::vector<double> c(sz);
                for (std::size_t i = 0; i < sz; ++i) c[i] = g[i] * yv[i];
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::log: {
                const auto& xv = nodes_[static_cast<std::size_t>(n.a)].value.values;
                std::vector<double> c(sz);
                for (std::size_t i = 0; i < sz; ++i) c[i] = g[i] / xv[i];
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::sin: {
                const auto& xv = nodes_[static_cast<std::size_t>(n.a)].value.values;
                std::vector<double> c(sz);
                for (std::size_t i = 0; i < sz; ++i) c[i] = g[i] * std::cos(xv[i]);
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::cos: {
                const auto& xv = nodes_[static_cast<std::size_t>(n.a)].value.values;
                std::vector<double> c(sz);
                for (std::size_t i = 0; i < sz; ++i) c[i] = -g[i] * std::sin(xv[i]);
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::tanh: {
                const auto& yv = n.value.values;
                std::vector<double> c(sz);
                for (std::size_t i = 0; i < sz; ++i) c[i] = g[i] * (1.0 - yv[i] * yv[i]);
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::sigmoid: {
                const auto& yv = n.value.values;
                std::vector<double> c(sz);
                for (std::size_t i = 0; i < sz; ++i) c[i] = g[i] * yv[i] * (1.0 - yv[i]);
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::softplus: {
                const auto& xv = nodes_[static_cast<std::size_t>(n.a)].value.values;
                std::vector<double> c(sz);
                for (std::size_t i = 0; i < sz; ++i) c[i] = g[i] * detail::sigmoid_scalar(xv[i]);
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::sqrt: {
                const auto& yv = n.value.values;
                std::vector<double> c(sz);
                for (std::size_t i = 0; i < sz; ++i) c[i] = g[i] * 0.5 / yv[i];
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::square: {
                const auto& xv = nodes_[static_cast<std::size_t>(n.a)].value.values;
                std::vector<double> c(sz);
                for (std::size_t i = 0; i < sz; ++i) c[i] = 2.0 * g[i] * xv[i];
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::leaky_relu: {
                const auto& xv = nodes_[static_cast<std::size_t>(n.a)].value.values;
                std::vector<double> c(sz);
                for (std::size_t i = 0; i < sz; ++i) c[i] = g[i] * (xv[i] > 0.0 ? 1.0 : n.aux);
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::matmul: {
                const Tensor& av = nodes_[static_cast<std::size_t>(n.a)].value;
                const Tensor& bv = nodes_[static_cast<std::size_t>(n.b)].value;
                Tensor gt(n.value.shape, std::vector<double>(g));
                if (want(n.a)) {
                    Tensor ga = n.ta ? detail::matmul_value(bv, gt, n.tb, true)
                                     : detail::matmul_value(gt, bv, false, !n.tb);
                    add_into(grad, has, n.a, std::move(ga.values));
                }
                if (want(n.b)) {
                    Tensor gb = n.tb ? detail::matmul_value(gt, av, true, n.ta)
                                     : detail::matmul_value(av, gt, !n.ta, false);
                    add_into(grad, has, n.b, std::move(gb.values));
                }
                return;
            }
            case Op::bias_add: {
                const Tensor& xv = nodes_[static_cast<std::size_t>(n.a)].value;
                const std::size_t rows = xv.shape[0], cols = xv.shape[1];
                if (want(n.a)) add_into(grad, has, n.a, std::vector<double>(g));
                if (want(n.b)) {
                    std::vector<double> c(cols, 0.0);
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j) c[j] += g[i * cols + j];
                    add_into(grad, has, n.b, std::move(c));
                }
                return;
            }
            case Op::sum: {
                const std::size_t pn = nodes_[static_cast<std::size_t>(n.a)].value.size();
                add_into(grad, has, n.a, std::vector<double>(pn, g[0]));
                return;
            }
            case Op::mean: {
                const std::size_t pn = nodes_[static_cast<std::size_t>(n.a)].value.size();
                add_into(grad, has, n.a, std::vector<double>(pn, g[0] / static_cast<double>(pn)));
                return;
            }
            case Op::colsum: {
                const Tensor& xv = nodes_[static_cast<std::size_t>(n.a)].value;
                const std::size_t rows = xv.shape[0], cols = xv.shape[1];
                std::vector<double> c(rows * cols);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) c[i * cols + j] = g[j];
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::rowsum: {
                const Tensor& xv = nodes_[static_cast<std::size_t>(n.a)].value;
                const std::size_t rows = xv.shape[0], cols = xv.shape[1];
                std::vector<double> c(rows * cols);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) c[i * cols + j] = g[i];
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::broadcast_full: {
                double s = 0.0;
                for (double v : g) s += v;
                add_into(grad, has, n.a, std::vector<double>{s});
                return;
            }
            case Op::broadcast_col: {
                const std::size_t cols = n.n_extra, rows = n.value.shape[0];
                std::vector<double> c(rows, 0.0);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) c[i] += g[i * cols + j];
                add_into(grad, has, n.a, std::move(c));
                return;
            }
            case Op::broadcast_row: {
                const std::size_t rows = n.n_extra, cols = n.value.shape[1];
                std::vector<double> c(cols, 0.0);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) c[j] += g[i * cols + j];
                add_into(grad, has, n.a, std::move(c));
                return;
            }
        }
    }

    void add_grad_var(std::vector<int>& grad, int target, Var contribution) {
        const std::size_t ut = static_cast<std::size_t>(target);
        if (grad[ut] < 0)
            grad[ut] = contribution.id;
        else
            grad[ut] = add(Var{this, grad[ut]}, contribution).id;
    }

    // Same chain rules as the value path, but expressed as tape ops so the
    // resulting gradients can be differentiated once more.
    void emit_vjp(int id, int gid, std::vector<int>& grad, const std::vector<char>& needs) {
        const Node n = nodes_[static_cast<std::size_t>(id)];  // copy: push may reallocate
        Var g{this, gid};
        Var pa{this, n.a}, pb{this, n.b};
        auto want = [&](int p) { return p >= 0 && needs[static_cast<std::size_t>(p)]; };
        switch (n.op) {
            case Op::constant: return;
            case Op::add:
                if (want(n.a)) add_grad_var(grad, n.a, g);
                if (want(n.b)) add_grad_var(grad, n.b, g);
                return;
            case Op::sub:
                if (want(n.a)) add_grad_var(grad, n.a, g);
                if (want(n.b)) add_grad_var(grad, n.b, neg(g));
                return;
            case Op::mul:
                if (want(n.a)) add_grad_var(grad, n.a, mul(g, pb));
                if (want(n.b)) add_grad_var(grad, n.b, mul(g, pa));
                return;
            case Op::div: {
                Var y{this, id};
                if (want(n.a)) add_grad_var(grad, n.a, div(g, pb));
                if (want(n.b)) add_grad_var(grad, n.b, neg(div(mul(g, y), pb)));
                return;
            }
            case Op::neg: add_grad_var(grad, n.a, neg(g)); return;
            case Op::scale: add_grad_var(grad, n.a, scale(g, n.aux)); return;
            case Op::add_const: add_grad_var(grad, n.a, g); return;
            case Op::exp: add_grad_var(grad, n.a, mul(g, Var{this, id})); return;
            case Op::log: add_grad_var(grad, n.a, div(g, pa)); return;
            case Op::sin: add_grad_var(grad, n.a, mul(g, cos(pa))); return;
            case Op::cos: add_grad_var(grad, n.a, neg(mul(g, sin(pa)))); return;
            case Op::tanh: {
                Var y{this, id};
                add_grad_var(grad, n.a, mul(g, add_const(neg(square(y)), 1.0)));
                return;
            }
            case Op::sigmoid: {
                Var y{this, id};
                add_grad_var(grad, n.a, mul(g, mul(y, add_const(neg(y), 1.0))));
                return;
            }
            case Op::softplus: add_grad_var(grad, n.a, mul(g, sigmoid(pa))); return;
            case Op::sqrt: add_grad_var(grad, n.a, scale(div(g, Var{this, id}), 0.5)); return;
            case Op::square: add_grad_var(grad, n.a, scale(mul(g, pa), 2.0)); return;
            case Op::leaky_relu: {
                // Mask is held constant: the second derivative is zero a.e.
                Tensor mask = nodes_[static_cast<std::size_t>(n.a)].value;
                for (double& v : mask.values) v = v > 0.0 ? 1.0 : n.aux;
                add_grad_var(grad, n.a, mul(g, constant(std::move(mask))));
                return;
            }
            case Op::matmul:
                if (want(n.a))
                    add_grad_var(grad, n.a, n.ta ? matmul(pb, g, n.tb, true) : matmul(g, pb, false, !n.tb));
                if (want(n.b))
                    add_grad_var(grad, n.b, n.tb ? matmul(g, pa, true, n.ta) : matmul(pa, g, !n.ta, false));
                return;
            case Op::bias_add:
                if (want(n.a)) add_grad_var(grad, n.a, g);
                if (want(n.b)) add_grad_var(grad, n.b, colsum(g));
                return;
            case Op::sum:
                add_grad_var(grad, n.a, broadcast_full(g, nodes_[static_cast<std::size_t>(n.a)].value.shape));
                return;
            case Op::mean: {
                Shape s = nodes_[static_cast<std::size_t>(n.a)].value.shape;
                const double inv = 1.0 / static_cast<double>(numel(s));
                add_grad_var(grad, n.a, scale(broadcast_full(g, std::move(s)), inv));
                return;
            }
            case Op::colsum:
                add_grad_var(grad, n.a, broadcast_row(g, nodes_[static_cast<std::size_t>(n.a)].value.shape[0]));
                return;
            case Op::rowsum:
                add_grad_var(grad, n.a, broadcast_col(g, nodes_[static_cast<std::size_t>(n.a)].value.shape[1]));
                return;
            case Op::broadcast_full: add_grad_var(grad, n.a, sum(g)); return;
            case Op::broadcast_col: add_grad_var(grad, n.a, rowsum(g)); return;
            case Op::broadcast_row: add_grad_var(grad, n.a, colsum(g)); return;
        }
    }
};

inline const Tensor& Var::value() const { return tape->node(id).value; }

// Max relative disagreement between the tape gradient of `fn` and central
// finite differences at `point`. Non-finite intermediates surface as NaN.
inline double finite_diff_check(const std::function<Var(Tape&, Var)>& fn, const Tensor& point, double h) {
    Tensor analytic;
    {
        Tape tape;
        Var x = tape.input(point);
        Var y = fn(tape, x);
        if (y.value().size() != 1) throw UsageError("finite_diff_check needs a scalar-valued function");
        analytic = tape.backward(y, {x})[0];
    }
    auto eval = [&](const Tensor& p) {
        Tape tape;
        Var x = tape.input(p);
        return fn(tape, x).value().values[0];
    };
    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        Tensor hi = point, lo = point;
        hi.values[i] += h;
        lo.values[i] -= h;
        double num = (eval(hi) - eval(lo)) / (2.0 * h);
        double err = std::abs(analytic.values[i] - num) / (std::abs(analytic.values[i]) + 1e-12);
        if (!std::isfinite(err)) return std::numeric_limits<double>::quiet_NaN();
        worst = std::max(worst, err);
    }
    return worst;
}

// Multi-tensor variant used for checking gradients over network parameters.
inline double finite_diff_check_multi(const std::function<Var(Tape&, std::vector<Var>&)>& fn,
                                      const std::vector<Tensor>& points, double h) {
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> xs;
        for (const Tensor& p : points) xs.push_back(tape.input(p));
        Var y = fn(tape, xs);
        if (y.value().size() != 1) throw UsageError("finite_diff_check_multi needs a scalar-valued function");
        analytic = tape.backward(y, std::span<const Var>(xs));
    }
    auto eval = [&](const std::vector<Tensor>& ps) {
        Tape tape;
        std::vector<Var> xs;
        for (const Tensor& p : ps) xs.push_back(tape.input(p));
        return fn(tape, xs).value().values[0];
    };
    double worst = 0.0;
    for (std::size_t t = 0; t < points.size(); ++t) {
        for (std::size_t i = 0; i < points[t].size(); ++i) {
            std::vector<Tensor> hi = points, lo = points;
            hi[t].values[i] += h;
            lo[t].values[i] -= h;
            double num = (eval(hi) - eval(lo)) / (2.0 * h);
            double err = std::abs(analytic[t].values[i] - num) / (std::abs(analytic[t].values[i]) + 1e-12);
            if (!std::isfinite(err)) return std::numeric_limits<double>::quiet_NaN();
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace lipgan
