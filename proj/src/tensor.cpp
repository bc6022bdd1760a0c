#include "relnmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace relnmt {

namespace {

thread_local std::uint64_t g_seq = 0;
thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_graph_nodes = 0;

NodePtr make_node(std::string op, std::vector<Index> shape, ArrayXd value) {
  auto n = std::make_shared<TensorNode>();
  n->op = std::move(op);
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->seq = ++g_seq;
  return n;
}

Index numel(const std::vector<Index>& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

// Attach parents + backward only when the tape is live and some parent
// participates in differentiation.
void wire(const NodePtr& out, std::vector<NodePtr> parents,
          std::function<void(TensorNode&)> fn) {
  if (!g_grad_enabled) return;
  bool any = false;
  for (const auto& p : parents)
    if (p->requires_grad) any = true;
  if (!any) return;
  out->requires_grad = true;
  out->parents = std::move(parents);
  out->backward_fn = std::move(fn);
  ++g_graph_nodes;
}

Eigen::Map<const RowMat> view2d(const TensorNode& n) {
  return Eigen::Map<const RowMat>(n.value.data(), n.shape[0], n.shape[1]);
}

void check2d(const Tensor& t, const char* who) {
  if (t.shape().size() != 2)
    throw DimensionError(std::string(who) + ": expected 2-D tensor, got shape " +
                         shape_str(t.shape()));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(who) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

std::string shape_str(const std::vector<Index>& s) {
  return "[" + join(s, "x") + "]";
}

void TensorNode::accumulate(const ArrayXd& g) {
  if (!requires_grad) return;
  if (grad.size() == 0) grad = ArrayXd::Zero(value.size());
  grad += g;
}

// ---- construction ----

Tensor Tensor::zeros(std::vector<Index> shape, bool requires_grad) {
  Index n = numel(shape);
  auto node = make_node("leaf", std::move(shape), ArrayXd::Zero(n));
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::full(std::vector<Index> shape, double v, bool requires_grad) {
  Index n = numel(shape);
  auto node = make_node("leaf", std::move(shape), ArrayXd::Constant(n, v));
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::from_data(std::vector<Index> shape, std::vector<double> data,
                         bool requires_grad) {
  if (numel(shape) != static_cast<Index>(data.size()))
    throw DimensionError("from_data: " + shape_str(shape) + " incompatible with " +
                         std::to_string(data.size()) + " values");
  ArrayXd a = Eigen::Map<const ArrayXd>(data.data(), static_cast<Index>(data.size()));
  auto node = make_node("leaf", std::move(shape), std::move(a));
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::from_array(std::vector<Index> shape, ArrayXd data, bool requires_grad) {
  if (numel(shape) != static_cast<Index>(data.size()))
    throw DimensionError("from_array: " + shape_str(shape) + " incompatible with " +
                         std::to_string(data.size()) + " values");
  auto node = make_node("leaf", std::move(shape), std::move(data));
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::randn(std::vector<Index> shape, Rng& rng, double stddev,
                     bool requires_grad) {
  Index n = numel(shape);
  ArrayXd a(n);
  for (Index i = 0; i < n; ++i) a[i] = rng.normal(0.0, stddev);
  auto node = make_node("leaf", std::move(shape), std::move(a));
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Index Tensor::rows() const {
  check2d(*this, "rows");
  return node_->shape[0];
}

Index Tensor::cols() const {
  check2d(*this, "cols");
  return node_->shape[1];
}

double Tensor::item() const {
  if (size() != 1)
    throw DimensionError("item: tensor has " + std::to_string(size()) + " elements");
  return node_->value[0];
}

Tensor& Tensor::set_requires_grad(bool b) {
  node_->requires_grad = b;
  return *this;
}

const ArrayXd& Tensor::grad() const {
  if (!has_grad())
    throw StateError("grad: no gradient present (backward not run or detached)");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_->grad.size() > 0) node_->grad.setZero();
}

Tensor Tensor::detach() const {
  auto node = make_node("leaf", node_->shape, node_->value);
  return Tensor(node);
}

Eigen::Map<const RowMat> Tensor::mat() const {
  check2d(*this, "mat");
  return view2d(*node_);
}

Eigen::Map<RowMat> Tensor::mat_mutable() {
  check2d(*this, "mat");
  return Eigen::Map<RowMat>(node_->value.data(), node_->shape[0], node_->shape[1]);
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto out = make_node("add", a.shape(), a.value() + b.value());
  auto pa = a.node(), pb = b.node();
  wire(out, {pa, pb}, [pa, pb](TensorNode& self) {
    pa->accumulate(self.grad);
    pb->accumulate(self.grad);
  });
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto out = make_node("sub", a.shape(), a.value() - b.value());
  auto pa = a.node(), pb = b.node();
  wire(out, {pa, pb}, [pa, pb](TensorNode& self) {
    pa->accumulate(self.grad);
    pb->accumulate(-self.grad);
  });
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto out = make_node("mul", a.shape(), a.value() * b.value());
  auto pa = a.node(), pb = b.node();
  wire(out, {pa, pb}, [pa, pb](TensorNode& self) {
    pa->accumulate(self.grad * pb->value);
    pb->accumulate(self.grad * pa->value);
  });
  return Tensor(out);
}

Tensor scale(const Tensor& x, double c) {
  auto out = make_node("scale", x.shape(), x.value() * c);
  auto p = x.node();
  wire(out, {p}, [p, c](TensorNode& self) { p->accumulate(self.grad * c); });
  return Tensor(out);
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  check2d(x, "add_rowwise");
  if (bias.size() != x.cols())
    throw DimensionError("add_rowwise: bias " + shape_str(bias.shape()) +
                         " does not match columns of " + shape_str(x.shape()));
  Index m = x.rows(), n = x.cols();
  ArrayXd v = x.value();
  Eigen::Map<RowMat> mv(v.data(), m, n);
  mv.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), n);
  auto out = make_node("add_rowwise", x.shape(), std::move(v));
  auto px = x.node(), pb = bias.node();
  wire(out, {px, pb}, [px, pb, m, n](TensorNode& self) {
    px->accumulate(self.grad);
    if (pb->requires_grad) {
      Eigen::Map<const RowMat> g(self.grad.data(), m, n);
      ArrayXd gb = g.colwise().sum().transpose().array();
      pb->accumulate(gb);
    }
  });
  return Tensor(out);
}

Tensor scale_rows(const Tensor& x, const ArrayXd& w) {
  check2d(x, "scale_rows");
  Index m = x.rows(), n = x.cols();
  if (w.size() != m)
    throw DimensionError("scale_rows: weight length " + std::to_string(w.size()) +
                         " does not match rows of " + shape_str(x.shape()));
  ArrayXd v(m * n);
  Eigen::Map<RowMat> mv(v.data(), m, n);
  mv = x.mat().array().colwise() * w.matrix().array();
  auto out = make_node("scale_rows", x.shape(), std::move(v));
  auto px = x.node();
  ArrayXd wc = w;
  wire(out, {px}, [px, wc, m, n](TensorNode& self) {
    ArrayXd g(m * n);
    Eigen::Map<RowMat> gm(g.data(), m, n);
    gm = Eigen::Map<const RowMat>(self.grad.data(), m, n).array().colwise() *
         wc.matrix().array();
    px->accumulate(g);
  });
  return Tensor(out);
}

Tensor apply_mask(const Tensor& x, const ArrayXd& mask) {
  if (mask.size() != x.size())
    throw DimensionError("apply_mask: mask size " + std::to_string(mask.size()) +
                         " vs tensor " + shape_str(x.shape()));
  auto out = make_node("apply_mask", x.shape(), x.value() * mask);
  auto px = x.node();
  ArrayXd mc = mask;
  wire(out, {px}, [px, mc](TensorNode& self) { px->accumulate(self.grad * mc); });
  return Tensor(out);
}

Tensor add_const(const Tensor& x, const ArrayXd& c) {
  if (c.size() != x.size())
    throw DimensionError("add_const: constant size " + std::to_string(c.size()) +
                         " vs tensor " + shape_str(x.shape()));
  auto out = make_node("add_const", x.shape(), x.value() + c);
  auto px = x.node();
  wire(out, {px}, [px](TensorNode& self) { px->accumulate(self.grad); });
  return Tensor(out);
}

// ---- matrix products ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  check2d(a, "matmul");
  check2d(b, "matmul");
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  Index m = a.rows(), k = a.cols(), n = b.cols();
  ArrayXd v(m * n);
  Eigen::Map<RowMat>(v.data(), m, n) = a.mat() * b.mat();
  auto out = make_node("matmul", {m, n}, std::move(v));
  auto pa = a.node(), pb = b.node();
  wire(out, {pa, pb}, [pa, pb, m, k, n](TensorNode& self) {
    Eigen::Map<const RowMat> g(self.grad.data(), m, n);
    if (pa->requires_grad) {
      ArrayXd ga(m * k);
      Eigen::Map<RowMat>(ga.data(), m, k) = g * view2d(*pb).transpose();
      pa->accumulate(ga);
    }
    if (pb->requires_grad) {
      ArrayXd gb(k * n);
      Eigen::Map<RowMat>(gb.data(), k, n) = view2d(*pa).transpose() * g;
      pb->accumulate(gb);
    }
  });
  return Tensor(out);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check2d(a, "matmul_nt");
  check2d(b, "matmul_nt");
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()) + "^T");
  Index m = a.rows(), k = a.cols(), n = b.rows();
  ArrayXd v(m * n);
  Eigen::Map<RowMat>(v.data(), m, n) = a.mat() * b.mat().transpose();
  auto out = make_node("matmul_nt", {m, n}, std::move(v));
  auto pa = a.node(), pb = b.node();
  wire(out, {pa, pb}, [pa, pb, m, k, n](TensorNode& self) {
    Eigen::Map<const RowMat> g(self.grad.data(), m, n);
    if (pa->requires_grad) {
      ArrayXd ga(m * k);
      Eigen::Map<RowMat>(ga.data(), m, k) = g * view2d(*pb);
      pa->accumulate(ga);
    }
    if (pb->requires_grad) {
      ArrayXd gb(n * k);
      Eigen::Map<RowMat>(gb.data(), n, k) = g.transpose() * view2d(*pa);
      pb->accumulate(gb);
    }
  });
  return Tensor(out);
}

// ---- nonlinearities ----

Tensor softmax(const Tensor& x, int axis) {
  if (!x.value().isFinite().all())
    throw NumericError("softmax: non-finite input");
  const auto& shape = x.shape();
  int nd = static_cast<int>(shape.size());
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd)
    throw DimensionError("softmax: axis out of range for " + shape_str(shape));
  // Treat the tensor as [outer, n, inner] around the softmax axis.
  Index n = shape[axis];
  Index inner = 1, outer = 1;
  for (int i = axis + 1; i < nd; ++i) inner *= shape[i];
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  ArrayXd v(x.size());
  const ArrayXd& in = x.value();
  for (Index o = 0; o < outer; ++o) {
    for (Index c = 0; c < inner; ++c) {
      const Index base = o * n * inner + c;
      double mx = in[base];
      for (Index j = 1; j < n; ++j) mx = std::max(mx, in[base + j * inner]);
      double s = 0.0;
      for (Index j = 0; j < n; ++j) {
        double e = std::exp(in[base + j * inner] - mx);
        v[base + j * inner] = e;
        s += e;
      }
      for (Index j = 0; j < n; ++j) v[base + j * inner] /= s;
    }
  }
  auto out = make_node("softmax", shape, std::move(v));
  auto px = x.node();
  wire(out, {px}, [px, outer, n, inner](TensorNode& self) {
    ArrayXd g(self.value.size());
    const ArrayXd& y = self.value;
    const ArrayXd& go = self.grad;
    for (Index o = 0; o < outer; ++o) {
      for (Index c = 0; c < inner; ++c) {
        const Index base = o * n * inner + c;
        double dot = 0.0;
        for (Index j = 0; j < n; ++j) dot += go[base + j * inner] * y[base + j * inner];
        for (Index j = 0; j < n; ++j) {
          const Index k = base + j * inner;
          g[k] = y[k] * (go[k] - dot);
        }
      }
    }
    px->accumulate(g);
  });
  return Tensor(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  check2d(x, "layer_norm");
  Index m = x.rows(), n = x.cols();
  if (gain.size() != n || bias.size() != n)
    throw DimensionError("layer_norm: gain/bias must match last dimension " +
                         std::to_string(n));
  ArrayXd v(m * n);
  ArrayXd inv_std(m), meanv(m);
  auto xm = x.mat();
  Eigen::Map<RowMat> vm(v.data(), m, n);
  for (Index i = 0; i < m; ++i) {
    const double mu = xm.row(i).mean();
    const double var = (xm.row(i).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    meanv[i] = mu;
    inv_std[i] = is;
    vm.row(i) = (((xm.row(i).array() - mu) * is) *
                     Eigen::Map<const Eigen::RowVectorXd>(gain.value().data(), n).array() +
                 Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), n).array())
                    .matrix();
  }
  auto out = make_node("layer_norm", x.shape(), std::move(v));
  auto px = x.node(), pg = gain.node(), pb = bias.node();
  wire(out, {px, pg, pb}, [px, pg, pb, meanv, inv_std, m, n](TensorNode& self) {
    Eigen::Map<const RowMat> g(self.grad.data(), m, n);
    Eigen::Map<const RowMat> xm(px->value.data(), m, n);
    Eigen::Map<const Eigen::RowVectorXd> gv(pg->value.data(), n);
    ArrayXd gx(m * n);
    Eigen::Map<RowMat> gxm(gx.data(), m, n);
    ArrayXd ggain = ArrayXd::Zero(n), gbias = ArrayXd::Zero(n);
    for (Index i = 0; i < m; ++i) {
      const double is = inv_std[i];
      Eigen::RowVectorXd xhat = ((xm.row(i).array() - meanv[i]) * is).matrix();
      Eigen::RowVectorXd dy = g.row(i);
      Eigen::RowVectorXd dxhat = dy.cwiseProduct(gv);
      const double mean_dxhat = dxhat.mean();
      const double mean_dxhat_xhat = dxhat.cwiseProduct(xhat).mean();
      gxm.row(i) =
          ((dxhat.array() - mean_dxhat - xhat.array() * mean_dxhat_xhat) * is).matrix();
      ggain += (dy.cwiseProduct(xhat)).transpose().array();
      gbias += dy.transpose().array();
    }
    px->accumulate(gx);
    pg->accumulate(ggain);
    pb->accumulate(gbias);
  });
  return Tensor(out);
}

Tensor relu(const Tensor& x) {
  auto out = make_node("relu", x.shape(), x.value().max(0.0));
  auto px = x.node();
  wire(out, {px}, [px](TensorNode& self) {
    px->accumulate(self.grad * (px->value > 0.0).cast<double>());
  });
  return Tensor(out);
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  check2d(table, "embedding");
  Index v = table.rows(), d = table.cols();
  for (int id : ids)
    if (id < 0 || id >= v)
      throw InputError("embedding: id " + std::to_string(id) + " out of range [0," +
                       std::to_string(v) + ")");
  Index m = static_cast<Index>(ids.size());
  ArrayXd out_v(m * d);
  Eigen::Map<RowMat> om(out_v.data(), m, d);
  auto tm = table.mat();
  for (Index i = 0; i < m; ++i) om.row(i) = tm.row(ids[i]);
  auto out = make_node("embedding", {m, d}, std::move(out_v));
  auto pt = table.node();
  std::vector<int> idc = ids;
  wire(out, {pt}, [pt, idc, m, d](TensorNode& self) {
    if (pt->grad.size() == 0) pt->grad = ArrayXd::Zero(pt->value.size());
    Eigen::Map<RowMat> gt(pt->grad.data(), pt->shape[0], d);
    Eigen::Map<const RowMat> g(self.grad.data(), m, d);
    for (Index i = 0; i < m; ++i) gt.row(idc[i]) += g.row(i);
  });
  return Tensor(out);
}

Tensor slice_cols(const Tensor& x, Index start, Index n) {
  check2d(x, "slice_cols");
  if (start < 0 || n <= 0 || start + n > x.cols())
    throw DimensionError("slice_cols: [" + std::to_string(start) + "," +
                         std::to_string(start + n) + ") out of " + shape_str(x.shape()));
  Index m = x.rows();
  ArrayXd v(m * n);
  Eigen::Map<RowMat>(v.data(), m, n) = x.mat().middleCols(start, n);
  auto out = make_node("slice_cols", {m, n}, std::move(v));
  auto px = x.node();
  Index cols = x.cols();
  wire(out, {px}, [px, start, n, m, cols](TensorNode& self) {
    ArrayXd g = ArrayXd::Zero(m * cols);
    Eigen::Map<RowMat>(g.data(), m, cols).middleCols(start, n) =
        Eigen::Map<const RowMat>(self.grad.data(), m, n);
    px->accumulate(g);
  });
  return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  Index m = parts[0].rows();
  Index total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m)
      throw DimensionError("concat_cols: row mismatch " + shape_str(p.shape()));
    total += p.cols();
  }
  ArrayXd v(m * total);
  Eigen::Map<RowMat> vm(v.data(), m, total);
  Index at = 0;
  std::vector<NodePtr> ps;
  std::vector<Index> widths;
  for (const auto& p : parts) {
    vm.middleCols(at, p.cols()) = p.mat();
    at += p.cols();
    ps.push_back(p.node());
    widths.push_back(p.cols());
  }
  auto out = make_node("concat_cols", {m, total}, std::move(v));
  wire(out, ps, [ps, widths, m, total](TensorNode& self) {
    Eigen::Map<const RowMat> g(self.grad.data(), m, total);
    Index at = 0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (ps[i]->requires_grad) {
        ArrayXd gp(m * widths[i]);
        Eigen::Map<RowMat>(gp.data(), m, widths[i]) = g.middleCols(at, widths[i]);
        ps[i]->accumulate(gp);
      }
      at += widths[i];
    }
  });
  return Tensor(out);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     int ignore_index) {
  check2d(logits, "cross_entropy");
  Index m = logits.rows(), v = logits.cols();
  if (static_cast<Index>(targets.size()) != m)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(m) + " rows");
  Index counted = 0;
  for (int t : targets) {
    if (t == ignore_index) continue;
    if (t < 0 || t >= v)
      throw InputError("cross_entropy: target id " + std::to_string(t) +
                       " out of range [0," + std::to_string(v) + ")");
    ++counted;
  }
  if (counted == 0)
    throw NumericError("cross_entropy: every position ignored, mean undefined");
  auto lm = logits.mat();
  // log-sum-exp per counted row
  double total = 0.0;
  ArrayXd logz(m);
  for (Index i = 0; i < m; ++i) {
    if (targets[i] == ignore_index) continue;
    const double mx = lm.row(i).maxCoeff();
    const double lse = mx + std::log((lm.row(i).array() - mx).exp().sum());
    logz[i] = lse;
    total += lse - lm(i, targets[i]);
  }
  const double loss = total / static_cast<double>(counted);
  if (!std::isfinite(loss)) throw NumericError("cross_entropy: non-finite loss");
  auto out = make_node("cross_entropy", {1}, ArrayXd::Constant(1, loss));
  auto pl = logits.node();
  std::vector<int> tc = targets;
  wire(out, {pl}, [pl, tc, ignore_index, m, v, counted](TensorNode& self) {
    const double go = self.grad[0] / static_cast<double>(counted);
    Eigen::Map<const RowMat> lm(pl->value.data(), m, v);
    ArrayXd g = ArrayXd::Zero(m * v);
    Eigen::Map<RowMat> gm(g.data(), m, v);
    for (Index i = 0; i < m; ++i) {
      if (tc[i] == ignore_index) continue;
      const double mx = lm.row(i).maxCoeff();
      Eigen::RowVectorXd p = (lm.row(i).array() - mx).exp().matrix();
      p /= p.sum();
      gm.row(i) = p * go;
      gm(i, tc[i]) -= go;
    }
    pl->accumulate(g);
  });
  return Tensor(out);
}

Tensor sum(const Tensor& x) {
  auto out = make_node("sum", {1}, ArrayXd::Constant(1, x.value().sum()));
  auto px = x.node();
  wire(out, {px}, [px](TensorNode& self) {
    px->accumulate(ArrayXd::Constant(px->value.size(), self.grad[0]));
  });
  return Tensor(out);
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  auto out = make_node("mean", {1}, ArrayXd::Constant(1, x.value().sum() / n));
  auto px = x.node();
  wire(out, {px}, [px, n](TensorNode& self) {
    px->accumulate(ArrayXd::Constant(px->value.size(), self.grad[0] / n));
  });
  return Tensor(out);
}

// ---- backward ----

void backward(const Tensor& loss) {
  if (!loss.defined()) throw StateError("backward: undefined tensor");
  if (loss.size() != 1)
    throw DimensionError("backward: loss must be scalar, got " +
                         shape_str(loss.shape()));
  NodePtr root = loss.node();
  if (root->consumed)
    throw StateError("backward: graph already consumed by a previous backward");
  root->consumed = true;
  if (!root->requires_grad) return;  // nothing differentiable below

  // Reachable set, then decreasing creation order = topological order.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<NodePtr> stack{root};
  seen.insert(root.get());
  std::vector<NodePtr> keepalive;
  while (!stack.empty()) {
    NodePtr n = stack.back();
    stack.pop_back();
    keepalive.push_back(n);
    order.push_back(n.get());
    for (const auto& p : n->parents) {
      if (p->requires_grad && !seen.count(p.get())) {
        seen.insert(p.get());
        stack.push_back(p);
      }
    }
  }
  std::sort(order.begin(), order.end(),
            [](const TensorNode* a, const TensorNode* b) { return a->seq > b->seq; });

  root->grad = ArrayXd::Constant(1, 1.0);
  for (TensorNode* n : order) {
    if (n->backward_fn && n->grad.size() > 0) n->backward_fn(*n);
  }
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }
std::uint64_t graph_nodes_created() { return g_graph_nodes; }

}  // namespace relnmt
