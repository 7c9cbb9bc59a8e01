#pragma once

#include <functional>
#include <string>
#include <vector>

#include "relight/tensor.hpp"

namespace relight::ag {

// Trainable tensor: value plus the gradient accumulated by Tape::backward.
struct Param {
    Tensor value;
    Tensor grad;
    std::string name;

    Param() = default;
    explicit Param(Tensor v) : value(std::move(v)) { grad = Tensor::zeros(value.shape()); }
    void zero_grad() { std::fill(grad.values().begin(), grad.values().end(), 0.0); }
};

class Tape;

// Handle into a tape node. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& val() const;
    // Gradient w.r.t. this node; populated by backward() for grad-tracked nodes.
    const Tensor& grad() const;
};

// Reverse-mode tape. Nodes are recorded in forward order, so reverse
// creation order is a valid topological order for the backward sweep.
// One tape per forward/backward pass; forward-only passes just drop it.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor v);
    // Differentiable leaf; read Var::grad after backward (gradient checks,
    // jacobian diagnostics, loss-gradient oracles).
    Var input(Tensor v);
    // Leaf bound to a parameter; backward adds into p.grad. Falls back to a
    // constant when grads are disabled or a FreezeScope is active, so frozen
    // modules can run inside a training tape without receiving updates.
    Var param(const Param& p);

    bool grad_enabled() const { return grad_enabled_ && !frozen_; }

    // Seeds d(root)/d(root) = 1 and sweeps the tape. root must be scalar.
    void backward(Var root);

    int size() const { return static_cast<int>(nodes_.size()); }
    const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    void accum(int id, const Tensor& g);

    using BackFn = std::function<void(Tape&, const Tensor& self_grad)>;
    Var push(Tensor val, std::vector<int> parents, BackFn back);

private:
    struct Node {
        Tensor val;
        Tensor grad;
        bool needs_grad = false;
        Param* sink = nullptr;
        BackFn back;
    };
    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
    bool frozen_ = false;
    friend struct Var;
    friend class FreezeScope;
};

// While alive, Tape::param binds leaves as constants: the wrapped module
// runs in the forward pass and passes gradients through to its inputs, but
// its own parameters receive none (stage-2 trains refiners behind a frozen
// decomposer this way).
class FreezeScope {
public:
    explicit FreezeScope(Tape& t) : tape_(t), prev_(t.frozen_) { t.frozen_ = true; }
    ~FreezeScope() { tape_.frozen_ = prev_; }
    FreezeScope(const FreezeScope&) = delete;
    FreezeScope& operator=(const FreezeScope&) = delete;

private:
    Tape& tape_;
    bool prev_;
};

// ---- elementwise ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var add_const(Var a, double c);
Var exp_of(Var a);
Var abs_of(Var a);
Var gelu(Var a);
Var clamp01(Var a);
// y = a * s with s a 1-element node (broadcast scalar).
Var mul_scalar(Var a, Var s);
Var recip(Var s);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// ---- reductions / broadcasts ----
Var mean_all(Var a);
Var sum_all(Var a);
Var channel_mean(Var a);                 // (H,W,C) -> (H,W,1)
Var channel_bcast_mul(Var a, Var b);     // (H,W,C) * (H,W,1)

// ---- structure ----
Var concat_c(Var a, Var b);
Var slice_c(Var a, int from, int count);
Var tokens(Var a);                       // (H,W,C) -> (H*W, C)
Var map_from_tokens(Var a, int h, int w);
// Forward difference along axis (0=vertical, 1=horizontal), replicate
// border: the final slice is zero.
Var fwd_diff(Var a, int axis);

// ---- linear algebra (2-D) ----
Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var softmax_rows(Var a);
// L2-normalizes each column over the row axis: tokens-per-channel unit norm.
Var unit_columns(Var a);

// ---- convolutions ----
// x (H,W,Cin), w (kh,kw,Cin,Cout), optional bias (Cout); zero padding.
Var conv2d(Var x, Var w, Var b, int stride, int pad);
// x (H,W,Cin), w (kh,kw,Cin,Cout); output ((H-1)*stride+kh, ...).
Var conv2d_transpose(Var x, Var w, Var b, int stride);
// w (3,3,C), per-channel 3x3, zero padding 1.
Var dwconv3x3(Var x, Var w, Var b);

}  // namespace relight::ag
