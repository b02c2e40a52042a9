#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

// Dense 2-D tensors and a record/replay tape for reverse-mode
// differentiation. Every operation appends a node holding the forward value
// and a closure that scatters the node's gradient back onto its inputs;
// `backward` walks the tape in reverse creation order (a valid topological
// order by construction). Heavy arithmetic is delegated to repq::kernels, so
// forward passes parallelise without changing results.

namespace repq {

struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  static Tensor from(std::size_t r, std::size_t c, std::vector<double> v);

  std::size_t numel() const { return rows * cols; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  bool all_finite() const;
};

class Tape {
 public:
  using Id = std::int32_t;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Inserts a constant or parameter node holding a copy of `v`. `name` shows
  // up in gradient diagnostics.
  Id leaf(Tensor v, bool needs_grad = false, std::string name = "");

  // C = op(A) * op(B); op transposes when the flag is set.
  Id matmul(Id a, Id b, bool trans_a = false, bool trans_b = false);
  // Batched variant: operands hold `batch` stacked matrices (see kernels).
  Id bmm(Id a, Id b, std::size_t batch, bool trans_a = false,
         bool trans_b = false);

  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id hadamard(Id a, Id b);
  Id scale(Id x, double alpha);
  // Adds a [1, cols] bias to every row.
  Id add_bias_rows(Id x, Id bias);

  Id sigmoid(Id x);
  Id tanh(Id x);
  Id relu(Id x);
  Id softmax_rows(Id x);

  // Convolution plumbing; layouts as documented in kernels.hpp. `x` must be
  // [windows*len, channels].
  Id im2col(Id x, std::size_t windows, std::size_t len, std::size_t channels,
            std::size_t kernel);
  Id maxpool(Id x, std::size_t windows, std::size_t len, std::size_t channels);

  // Reinterprets the flat buffer with a new shape (same element order).
  Id reshape(Id x, std::size_t rows, std::size_t cols);

  // y = x[:, c0:c1).
  Id slice_cols(Id x, std::size_t c0, std::size_t c1);
  Id concat_cols(const std::vector<Id>& xs);

  // Sequence access for batch-major time layouts: x is [batch*steps, d] with
  // row b*steps + t; slice_time extracts step t as [batch, d], stack_time
  // rebuilds [batch*steps, d] from per-step tensors.
  Id slice_time(Id x, std::size_t batch, std::size_t steps, std::size_t t);
  Id stack_time(const std::vector<Id>& steps_tensors);

  // y = x .* mask, with the mask treated as a constant (entries are 0 or
  // 1/keep_prob, precomputed by the caller).
  Id dropout(Id x, std::vector<double> mask);

  // y row r = x row idx[r]; duplicate indices accumulate in the backward
  // scatter, which is what lets many pairs share one encoded segment.
  Id gather_rows(Id x, std::vector<std::size_t> idx);

  // Row-wise cosine similarity of two [R, d] tensors -> [R, 1]. A zero-norm
  // row yields 0 with zero gradient.
  Id cosine_rows(Id a, Id b);

  Id square(Id x);
  // Mean over all elements -> [1, 1].
  Id mean_all(Id x);

  // Per-row cross entropy of logits against integer labels -> [R, 1],
  // computed via a log-sum-exp that never exponentiates positives.
  Id cross_entropy_rows(Id logits, std::vector<int> labels);

  const Tensor& value(Id id) const;
  const std::string& name(Id id) const;
  // Gradient of the last backward() root w.r.t. this node. Zero-shaped until
  // touched; use has_grad to distinguish "zero" from "never reached".
  const Tensor& grad(Id id) const;
  bool has_grad(Id id) const;

  // Seeds d(root)/d(root) = 1 and replays the tape in reverse. `root` must be
  // a scalar ([1, 1]) node. One backward per tape.
  void backward(Id root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::string name;
    std::function<void()> backprop;
  };

  Id push(Tensor value, bool needs_grad, std::string name = "");
  Node& node(Id id);
  const Node& node(Id id) const;
  // Returns the gradient buffer for `id`, allocating zeros on first use.
  Tensor& grad_buf(Id id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace repq
