#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// Every value in a forward pass is a `Var`: a shared handle to a node holding
// the value, an optional gradient and a closure that pushes the node's
// gradient into its inputs. Nodes whose inputs are all constant carry no
// closure, so evaluation without trainable leaves costs nothing extra.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <random>
#include <vector>

namespace lmde {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

namespace ad {

/// Receives d(loss)/d(output) and one accumulation target per input; a target
/// is null when that input does not require a gradient.
using BackwardFn = std::function<void(const Matrix& grad_out, const std::vector<Matrix*>& input_grads)>;

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn backward;
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Matrix& value() const { return node_->value; }
    /// Direct access for optimizers and weight loading. Never call on a node
    /// that is part of a live graph.
    Matrix& mutable_value() { return node_->value; }

    /// Accumulated gradient; empty until a backward pass reaches this node.
    const Matrix& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.size() != 0; }
    void zero_grad() { node_->grad.resize(0, 0); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    Index rows() const { return node_->value.rows(); }
    Index cols() const { return node_->value.cols(); }
    double scalar() const { return node_->value(0, 0); }

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& shared() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
/// Leaf that accumulates gradients.
Var parameter(Matrix value);

/// Builds an op node. `fn` is dropped when no input requires a gradient.
Var make_op(std::vector<Var> inputs, Matrix value, BackwardFn fn);

/// Back-propagates from a 1x1 root, seeding d(root)/d(root) = 1. Gradients
/// accumulate into every reachable node requiring one.
void backward(const Var& root);

// Linear algebra.
Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// Adds a 1 x cols row to every row of `a`.
Var add_row(const Var& a, const Var& row);
/// x * W^T + b with W stored out x in and b as 1 x out (b may be undefined).
Var linear(const Var& x, const Var& weight, const Var& bias);
Var sum(const Var& a);
Var mean(const Var& a);

// Shape.
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& a, Index start, Index count);
Var slice_cols(const Var& a, Index start, Index count);

// Pointwise and row-wise.
Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var gelu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var sigmoid(const Var& a);
/// Inverted dropout; identity when p == 0.
Var dropout(const Var& a, double p, std::mt19937_64& rng);

}  // namespace ad
}  // namespace lmde
