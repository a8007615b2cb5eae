#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "csyn/rng.hpp"

namespace csyn {

struct ShapeMismatch : std::runtime_error {
  explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct NonScalarLoss : std::runtime_error {
  explicit NonScalarLoss(const std::string& what) : std::runtime_error(what) {}
};

// A named trainable array living outside any tape. Gradients accumulate into
// `grad` across backward passes until the optimizer consumes them.
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string name, std::vector<int> shape);
  int64_t size() const { return static_cast<int64_t>(value.size()); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; the tape owns all storage.
class Tensor {
 public:
  Tensor() = default;

  const std::vector<int>& shape() const;
  int rows() const { return shape().at(0); }
  int cols() const { return shape().at(1); }
  int64_t size() const;
  const std::vector<double>& value() const;
  // Accumulated gradient of a leaf (valid after backward).
  const std::vector<double>& grad() const;
  double scalar() const;
  bool requires_grad() const;
  bool defined() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, int index) : tape_(tape), index_(index) {}
  Tape* tape_ = nullptr;
  int index_ = -1;
};

// Append-only record of one forward pass. Insertion order is topological
// order; backward sweeps it once in reverse. Single-owner, single-threaded.
// With recording off the same ops run value-only, so inference reuses the
// exact forward arithmetic.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }

  // Leaves.
  Tensor leaf(std::vector<int> shape, std::vector<double> data, bool requires_grad);
  Tensor constant(std::vector<int> shape, std::vector<double> data) {
    return leaf(std::move(shape), std::move(data), false);
  }
  Tensor scalar_leaf(double v, bool requires_grad = false) {
    return leaf({1}, {v}, requires_grad);
  }
  // Leaf bound to a parameter: value copied in, gradient pushed back into
  // p.grad by backward().
  Tensor param(Parameter& p);

  // Element-wise (identical shapes).
  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);
  // a + row vector broadcast over rows.
  Tensor add_rowvec(Tensor a, Tensor v);
  Tensor scale(Tensor a, double c);
  // a * s with scalar tensor s.
  Tensor scale_by(Tensor a, Tensor s);
  Tensor recip(Tensor a);
  Tensor exp(Tensor a);

  Tensor matmul(Tensor a, Tensor b);
  Tensor transpose(Tensor a);
  Tensor slice_rows(Tensor a, int r0, int r1);
  Tensor slice_cols(Tensor a, int c0, int c1);
  Tensor concat_rows(const std::vector<Tensor>& parts);
  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor broadcast_rows(Tensor v, int m);

  Tensor softmax_rows(Tensor a);
  Tensor log_softmax_rows(Tensor a);
  Tensor relu(Tensor a);
  Tensor gelu(Tensor a);
  Tensor sigmoid(Tensor a);
  Tensor layer_norm_rows(Tensor a, Tensor gain, Tensor bias, double eps = 1e-5);
  Tensor mean_all(Tensor a);
  Tensor sum_all(Tensor a);

  Tensor embedding_lookup(Tensor table, const std::vector<int>& ids);
  // Token-mixture embedding: dist {T,V} x table {V,d}. Plain matmul, named
  // for the call sites that feed relaxed one-hot rows.
  Tensor soft_embedding(Tensor dist, Tensor table) { return matmul(dist, table); }

  // Mean of -log softmax(logits_t)[target_t] over positions with mask != 0.
  Tensor cross_entropy(Tensor logits, const std::vector<int>& targets,
                       const std::vector<uint8_t>& mask);
  // -(y log p + (1-y) log(1-p)) with p clamped to [1e-12, 1-1e-12].
  Tensor binary_cross_entropy(Tensor p, double label);
  Tensor dropout(Tensor a, double rate, Rng& rng);

  // Forward value of `hard`; gradient flows unchanged into `soft`.
  Tensor straight_through(Tensor hard, Tensor soft);

  // Reverse sweep from a scalar loss. seed scales the injected gradient
  // (useful for pre-weighted batch members). Leaf and parameter gradients
  // accumulate across calls; internal gradients reset per call.
  void backward(Tensor loss, double seed = 1.0);

 private:
  struct Node {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> acc_grad;  // leaves only: survives across backward calls
    bool requires_grad = false;
    bool is_leaf = false;
    Parameter* bound = nullptr;
    std::function<void(int)> backward_fn;  // argument: own node index
  };

  friend class Tensor;
  Node& node(const Tensor& t) { return nodes_[static_cast<size_t>(t.index_)]; }
  const Node& node(const Tensor& t) const { return nodes_[static_cast<size_t>(t.index_)]; }
  Tensor make(std::vector<int> shape, std::vector<double> value, bool requires_grad,
              std::function<void(int)> backward_fn);
  std::vector<double>& grad_of(int index) { return nodes_[static_cast<size_t>(index)].grad; }
  // Runs fn on the gradient buffer of node `index` if it participates in
  // differentiation; constants are skipped.
  template <typename F>
  void push_grad(int index, F&& fn) {
    Node& n = nodes_[static_cast<size_t>(index)];
    if (!n.requires_grad) return;
    fn(n.grad);
  }
  void check_same_tape(const Tensor& t) const;

  bool recording_;
  std::vector<Node> nodes_;
};

// max |a-b| / max(|a|, |b|) over elements, with an absolute floor so that
// agreement below `atol` counts as zero error. Shared by the gradcheck suite.
double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                          double atol = 1e-9);

}  // namespace csyn
