#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "core/tensor.h"

// Minimal tape-free reverse-mode differentiation. Every op result holds
// shared pointers to its inputs; backward() walks the reachable DAG in
// reverse topological order. Parameters are leaves that keep their gradient
// buffers across backward calls until zero_grad().
namespace rssl::ag {

  struct Node;
  using NodePtr = std::shared_ptr<Node>;
  using BackwardFn = std::function<void(const Tensor& grad_out, const std::vector<NodePtr>& inputs)>;

  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<NodePtr> inputs;
    BackwardFn backward;

    // Zero-initialised on first use.
    Tensor& grad_buffer();
    bool has_grad() const { return !grad.empty(); }
  };

  class Var {
  public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);
    explicit Var(NodePtr node)
      : _node(std::move(node)) {
    }

    bool defined() const { return static_cast<bool>(_node); }
    const Tensor& value() const { return _node->value; }
    Tensor& mutable_value() { return _node->value; }
    Index rows() const { return _node->value.rows(); }
    Index cols() const { return _node->value.cols(); }
    double item() const { return _node->value.item(); }

    bool requires_grad() const { return _node->requires_grad; }
    void set_requires_grad(bool flag) { _node->requires_grad = flag; }

    // Empty when no gradient has reached this node.
    const Tensor& grad() const { return _node->grad; }
    void zero_grad() { _node->grad = Tensor(); }

    const NodePtr& node() const { return _node; }

  private:
    NodePtr _node;
  };

  bool grad_enabled();

  class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool _previous;
  };

  // Wraps an op result. The backward closure is kept only if some input
  // requires a gradient and gradient recording is enabled.
  Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  // Seeds d(root)/d(root) = 1 for a 1x1 root.
  void backward(const Var& root);

  // Elementwise and structural ops.
  Var add(const Var& a, const Var& b);
  Var sub(const Var& a, const Var& b);
  Var scale(const Var& a, double factor);
  Var sum(const Var& a);
  Var gelu(const Var& x);

  // x (T x in) * W^T (in x out) + b (1 x out). Bias may be undefined.
  Var linear(const Var& x, const Var& weight, const Var& bias);

  // Row-wise normalisation with affine gamma/beta (1 x C each).
  Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

  // Per-column normalization over all rows (time), with a per-column affine.
  Var time_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

  // Softmax over consecutive column blocks of width cols / groups.
  Var softmax_groups(const Var& x, Index groups);
  Var log_softmax_rows(const Var& x);

  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);

  // Valid 1-D convolution over time. weight is (C_out x K*C_in), column index
  // k * C_in + c; bias (1 x C_out).
  Var conv1d(const Var& x, const Var& weight, const Var& bias, Index kernel, Index stride);

  // Transposed convolution: output length (T-1)*stride + kernel. weight is
  // (C_in x K*C_out), column index k * C_out + c.
  Var conv_transpose1d(const Var& x, const Var& weight, const Var& bias, Index kernel, Index stride);

  // Per-channel convolution with zero "same" padding; weight (K x C), K odd.
  Var depthwise_conv_same(const Var& x, const Var& weight, const Var& bias);

  // Same data, new shape (row-major reinterpretation).
  Var reshape(const Var& x, Index rows, Index cols);

  // Centre-crops rows when too long, zero-pads at the end when too short.
  Var fit_rows(const Var& x, Index target_rows);

  // Rows with mask[t] set are replaced by the (1 x C) embedding.
  Var mask_rows(const Var& x, const std::vector<bool>& mask, const Var& embedding);

  // Multi-head scaled dot-product self-attention on pre-projected q, k, v (T x d).
  Var attention(const Var& q, const Var& k, const Var& v, Index heads);

  // Single-direction LSTM recurrence. input_gates (T x 4H) already contains
  // x W_ih^T + b; recurrent_weight is (4H x H); gate order i, f, g, o.
  // Output (T x H) is in input time order for both directions.
  Var lstm(const Var& input_gates, const Var& recurrent_weight, bool reverse);

  // Forward value `hard`, gradient routed to `soft` unchanged.
  Var straight_through(Tensor hard, const Var& soft);

  // selection (T x G*V), codebook (G*V x D) -> (T x G*D): per group, the
  // selection-weighted sum of that group's entries.
  Var codebook_lookup(const Var& selection, const Var& codebook, Index groups);

}
