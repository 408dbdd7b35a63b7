#pragma once

#include <functional>
#include <span>
#include <vector>

#include "point3d/tensor.hpp"

namespace point3d {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only meaningful together with
// the tape that produced it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode differentiation tape over a small tensor-op set.
///
/// Ops append nodes in execution order, so the record is topologically
/// sorted by construction. backward() walks it once in reverse and
/// accumulates a gradient for every node reachable from the loss. A tape
/// is single-threaded; parallelism lives inside the kernels each op calls.
/// After backward() the tape is consumed: recording again requires reset().
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves. Inputs receive gradients; constants do not.
    Var input(Tensor value);
    Var constant(Tensor value);

    // Elementwise.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var rsub_scalar(double c, Var a); // c - a
    Var abs(Var a);
    Var log(Var a);
    Var pow_scalar(Var a, double p);
    Var clamp(Var a, double lo, double hi);
    Var relu(Var a);
    Var sigmoid(Var a);

    // Shape manipulation.
    Var reshape(Var a, std::vector<int> shape);
    Var transpose(Var a);                     // rank-2
    Var concat0(std::span<const Var> parts);  // along axis 0
    Var concat1(std::span<const Var> parts);  // along axis 1, rank >= 2
    Var swap01(Var a);                        // swap first two axes, rank >= 2

    // Reductions and linear maps.
    Var sum(Var a); // -> scalar [1]
    Var matmul(Var a, Var b);
    // Matmul whose per-element summation order is independent of operand
    // row/column permutations (addends sorted before accumulation). Keeps
    // permutation equivariance of attention bitwise exact.
    Var matmul_stable(Var a, Var b);
    Var softmax_rows(Var a); // rank-2, stabilized per row, sorted denominators
    Var conv2d(Var x, Var w, int stride, int pad);
    Var conv3d(Var x, Var w, int stride, int pad);
    Var add_channel_bias(Var x, Var b); // b broadcast over all trailing axes
    Var global_avg_pool(Var x);         // mean over all axes but 0 -> rank-1
    Var cross_entropy(Var logits, int label); // rank-1 logits -> scalar

    void backward(Var loss);

    const Tensor& value(Var v) const;
    const Tensor& grad(Var v) const; // empty tensor if never reached
    bool consumed() const { return consumed_; }
    int size() const { return static_cast<int>(nodes_.size()); }
    void reset();

private:
    using BackwardFn = std::function<void(Tape&, const Tensor&)>;

    struct Node {
        Tensor value;
        BackwardFn backward;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool consumed_ = false;

    Var emit(Tensor value, bool requires_grad, BackwardFn bw);
    void accumulate(int id, const Tensor& g);
    void check_open(const char* op) const;
    void check_var(Var v, const char* op) const;
    bool needs_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }
};

} // namespace point3d
