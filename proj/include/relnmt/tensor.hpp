#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "relnmt/common.hpp"

namespace relnmt {

using ArrayXd = Eigen::ArrayXd;
// All 2-D views are row-major over the flat buffer.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One record of the computation graph. Nodes are created in topological
// order (seq is a monotone creation counter), so a backward pass visits
// reachable nodes in decreasing seq order.
struct TensorNode {
  std::string op;
  std::vector<Index> shape;
  ArrayXd value;
  ArrayXd grad;  // empty until first accumulation
  bool requires_grad = false;
  bool consumed = false;  // set on a loss node once backward ran
  std::uint64_t seq = 0;
  std::vector<NodePtr> parents;
  // Reads this->grad, accumulates into parents' grad.
  std::function<void(TensorNode&)> backward_fn;

  Index size() const { return static_cast<Index>(value.size()); }
  void accumulate(const ArrayXd& g);
};

// Dense float64 tensor handle with reverse-mode differentiation.
// Copies are shallow; the underlying node is shared.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<Index> shape, bool requires_grad = false);
  static Tensor full(std::vector<Index> shape, double v, bool requires_grad = false);
  static Tensor from_data(std::vector<Index> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor from_array(std::vector<Index> shape, ArrayXd data,
                           bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor randn(std::vector<Index> shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<Index>& shape() const { return node_->shape; }
  Index size() const { return node_->size(); }
  Index rows() const;  // 2-D only
  Index cols() const;

  const ArrayXd& value() const { return node_->value; }
  ArrayXd& value() { return node_->value; }
  double item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool b);
  bool has_grad() const { return node_ && node_->grad.size() > 0; }
  const ArrayXd& grad() const;
  void zero_grad();

  // Detached copy of the value (no graph edge).
  Tensor detach() const;

  Eigen::Map<const RowMat> mat() const;  // 2-D row-major view
  Eigen::Map<RowMat> mat_mutable();

  NodePtr node() const { return node_; }
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

 private:
  NodePtr node_;
};

std::string shape_str(const std::vector<Index>& s);

// ---- op library (free functions; each records a tape node) ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
// y[i,j] = x[i,j] + bias[j]
Tensor add_rowwise(const Tensor& x, const Tensor& bias);
// y[i,j] = x[i,j] * w[i]; w is a constant (no gradient path).
Tensor scale_rows(const Tensor& x, const ArrayXd& w);
// Elementwise multiply by a constant array (dropout masks etc).
Tensor apply_mask(const Tensor& x, const ArrayXd& mask);
// Add a constant array (attention masks).
Tensor add_const(const Tensor& x, const ArrayXd& c);

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& x, int axis = -1);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor relu(const Tensor& x);
// Rows of `table` selected by ids; gradient scatters back into rows.
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
Tensor slice_cols(const Tensor& x, Index start, Index n);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Mean negative log-likelihood over positions whose target != ignore_index.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     int ignore_index = -1);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

// Fills grads of every requires_grad leaf reachable from `loss`.
// A second call on the same loss node is a StateError.
void backward(const Tensor& loss);

// Scoped guard suppressing tape construction (pure value computation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();
// Number of graph nodes (nodes with a backward edge) created on this
// thread since start; used by tests to assert no-grad sections are clean.
std::uint64_t graph_nodes_created();

}  // namespace relnmt
