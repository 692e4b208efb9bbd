#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Value is a handle to a node of an acyclic computation graph. Leaves are
// either constants or parameters (requires-grad). Every op records its
// parents and a closure that pushes the node's gradient back to them.
// backward() accumulates (+=) into parameter gradients; callers zero them
// between optimizer steps.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "pdgsim/matrix.hpp"

namespace pdgsim::ad {

struct Node {
  Matrix data;
  Matrix grad;  // allocated during backward, or persistently for parameters
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> push_grad;
};

class Value {
public:
  Value() = default;
  explicit Value(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& data() const { return node_->data; }
  Matrix& mutable_data() { return node_->data; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->data.rows(); }
  Eigen::Index cols() const { return node_->data.cols(); }
  double scalar() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

private:
  std::shared_ptr<Node> node_;
};

Value constant(Matrix m);
Value parameter(Matrix m);

Value matmul(const Value& a, const Value& b);
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
// a (r x c) plus a 1 x c row vector added to every row.
Value add_row(const Value& a, const Value& row);
Value hadamard(const Value& a, const Value& b);
Value concat_cols(const std::vector<Value>& parts);
Value row_slice(const Value& a, Eigen::Index begin, Eigen::Index count);
Value col_slice(const Value& a, Eigen::Index begin, Eigen::Index count);
// Column vectors a (n x 1), b (m x 1) -> n x m with entry (i, j) = a_i + b_j.
Value outer_add(const Value& a, const Value& b);
// Column sums: r x c -> 1 x c.
Value sum_rows(const Value& a);
// Sum of every entry: r x c -> 1 x 1.
Value sum(const Value& a);
Value transpose(const Value& a);
Value scale(const Value& a, double c);
Value add_scalar(const Value& a, double c);
Value sigmoid(const Value& a);
Value tanh(const Value& a);
Value leaky_relu(const Value& a, double slope);
Value log(const Value& a);
// Elementwise clamp; gradient is zero where the input was clipped.
Value clamp(const Value& a, double lo, double hi);
// Row-wise softmax restricted to entries where mask == 1; masked entries are
// exactly 0. Throws MaskError if a mask row has no ones.
Value masked_row_softmax(const Value& scores, const Matrix& mask);
// Same data, cut from the graph: no gradient flows through.
Value detach(const Value& a);

// Rows of a stacked matrix are split into segments [offsets[g], offsets[g+1]).

// Graph attention per segment. For segment g with rows z_i and mask M
// (M(i, j) = 1 iff j is attended by i):
//   e_ij = leaky_relu(a_top . z_i + a_bottom . z_j), alpha = masked softmax_j(e),
//   out_i = sum_j alpha_ij z_j.
// `alphas`, when given, receives one alpha matrix per segment.
Value segment_attention(const Value& z, const Value& attn, const std::vector<Eigen::Index>& offsets,
                        const std::vector<Matrix>& masks, double slope,
                        std::vector<Matrix>* alphas = nullptr);
// Per-segment column sums (or means): N x c -> groups x c.
Value segment_sum(const Value& x, const std::vector<Eigen::Index>& offsets, bool mean = false);
// Selected rows, in order; repeated indices accumulate their gradients.
Value gather_rows(const Value& x, const std::vector<Eigen::Index>& rows);

// Insertion-ordered named parameters.
class ParamStore {
public:
  // Adds a parameter; `trainable == false` stores a frozen buffer that is
  // serialized with the model but never updated.
  Value& add(const std::string& name, Matrix init, bool trainable = true);
  // Registers an existing handle; both stores then see the same node.
  Value& adopt(const std::string& name, const Value& value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Value& get(const std::string& name);
  const Value& get(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  Value& at(std::size_t i) { return entries_[i].second; }
  const Value& at(std::size_t i) const { return entries_[i].second; }

  void zero_grads();
  std::size_t trainable_count() const;

private:
  std::vector<std::pair<std::string, Value>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Reverse accumulation from a 1x1 loss. Every trainable parameter in
// `params` ends up with an allocated gradient (zero if off-path).
void backward(const Value& loss, ParamStore& params);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t entries_checked = 0;
  // Entries whose probe interval straddles a LeakyReLU/clamp kink.
  std::size_t entries_skipped = 0;
};

// Compares reverse-mode gradients of `loss_fn` against central differences
// (f(θ+h) - f(θ-h)) / 2h for every trainable entry.
// Relative error is |a - b| / max(|a|, |b|, 1e-8). Entries where x +- h
// fall on different branches of a piecewise op are skipped and counted.
GradCheckResult grad_check(const std::function<Value()>& loss_fn, ParamStore& params, double h);

}  // namespace pdgsim::ad
