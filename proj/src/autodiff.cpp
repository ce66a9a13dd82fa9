#include "popgraph/autodiff.hpp"

#include <atomic>
#include <cmath>
#include <unordered_set>

namespace popgraph {

namespace detail {

struct TensorNode {
  Mat value;
  Mat grad;  // empty until the first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  bool backward_done = false;
  std::uint64_t order = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;
};

namespace {

std::atomic<std::uint64_t> node_counter{0};

void accumulate(TensorNode* n, const Mat& g) {
  if (!n->requires_grad) return;
  if (n->grad.size() == 0) {
    n->grad = g;
  } else {
    n->grad += g;
  }
}

std::shared_ptr<TensorNode> new_leaf(Mat values, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  n->is_leaf = true;
  n->order = node_counter.fetch_add(1, std::memory_order_relaxed);
  return n;
}

}  // namespace
}  // namespace detail

using detail::TensorNode;

detail::TensorNode* tensor_node(const Tensor& t) { return t.node_.get(); }

std::shared_ptr<detail::TensorNode> tensor_node_ptr(const Tensor& t) { return t.node_; }

Tensor wrap_node(std::shared_ptr<detail::TensorNode> n) { return Tensor(std::move(n)); }

Tensor Tensor::constant(Mat values) { return wrap_node(detail::new_leaf(std::move(values), false)); }

Tensor Tensor::parameter(Mat values) { return wrap_node(detail::new_leaf(std::move(values), true)); }

Tensor Tensor::scalar_const(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

const Mat& Tensor::value() const { return node_->value; }

Mat& Tensor::value_mut() {
  if (!node_->is_leaf) throw std::logic_error("value_mut: only leaf tensors are mutable");
  return node_->value;
}

Eigen::Index Tensor::rows() const { return node_->value.rows(); }
Eigen::Index Tensor::cols() const { return node_->value.cols(); }

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw std::invalid_argument("item: tensor is not 1x1");
  return node_->value(0, 0);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && node_->grad.size() != 0; }

const Mat& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("grad: no gradient has been accumulated");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.resize(0, 0); }

const void* Tensor::id() const { return node_.get(); }

namespace {

Tensor make_op(const char* name, Mat value, std::vector<std::shared_ptr<TensorNode>> parents,
               std::function<void(TensorNode&)> backprop) {
  if (!value.allFinite()) {
    throw TrainError(std::string("non-finite values produced by ") + name);
  }
  auto n = std::make_shared<TensorNode>();
  n->value = std::move(value);
  n->is_leaf = false;
  n->order = detail::node_counter.fetch_add(1, std::memory_order_relaxed);
  for (const auto& p : parents) {
    if (p->requires_grad) n->requires_grad = true;
  }
  n->parents = std::move(parents);
  n->backprop = std::move(backprop);
  return wrap_node(std::move(n));
}

void check_same_shape(const char* name, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(name) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions disagree (" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + ")");
  }
  auto* na = tensor_node(a);
  auto* nb = tensor_node(b);
  return make_op("matmul", na->value * nb->value, {tensor_node_ptr(a), tensor_node_ptr(b)},
                 [na, nb](TensorNode& self) {
                   detail::accumulate(na, self.grad * nb->value.transpose());
                   detail::accumulate(nb, na->value.transpose() * self.grad);
                 });
}

Tensor transpose(const Tensor& x) {
  auto* nx = tensor_node(x);
  return make_op("transpose", nx->value.transpose(), {tensor_node_ptr(x)},
                 [nx](TensorNode& self) { detail::accumulate(nx, self.grad.transpose()); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  auto* na = tensor_node(a);
  auto* nb = tensor_node(b);
  return make_op("add", na->value + nb->value, {tensor_node_ptr(a), tensor_node_ptr(b)},
                 [na, nb](TensorNode& self) {
                   detail::accumulate(na, self.grad);
                   detail::accumulate(nb, self.grad);
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  auto* na = tensor_node(a);
  auto* nb = tensor_node(b);
  return make_op("sub", na->value - nb->value, {tensor_node_ptr(a), tensor_node_ptr(b)},
                 [na, nb](TensorNode& self) {
                   detail::accumulate(na, self.grad);
                   detail::accumulate(nb, -self.grad);
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  auto* na = tensor_node(a);
  auto* nb = tensor_node(b);
  return make_op("mul", na->value.cwiseProduct(nb->value), {tensor_node_ptr(a), tensor_node_ptr(b)},
                 [na, nb](TensorNode& self) {
                   detail::accumulate(na, self.grad.cwiseProduct(nb->value));
                   detail::accumulate(nb, self.grad.cwiseProduct(na->value));
                 });
}

Tensor add_rowvec(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw std::invalid_argument("add_rowvec: expected a 1x" + std::to_string(x.cols()) +
                                " row vector");
  }
  auto* nx = tensor_node(x);
  auto* nr = tensor_node(row);
  Mat out = nx->value.rowwise() + nr->value.row(0);
  return make_op("add_rowvec", std::move(out), {tensor_node_ptr(x), tensor_node_ptr(row)},
                 [nx, nr](TensorNode& self) {
                   detail::accumulate(nx, self.grad);
                   detail::accumulate(nr, self.grad.colwise().sum());
                 });
}

Tensor scale(const Tensor& x, double c) {
  auto* nx = tensor_node(x);
  return make_op("scale", c * nx->value, {tensor_node_ptr(x)},
                 [nx, c](TensorNode& self) { detail::accumulate(nx, c * self.grad); });
}

Tensor relu(const Tensor& x) {
  auto* nx = tensor_node(x);
  return make_op("relu", nx->value.cwiseMax(0.0), {tensor_node_ptr(x)}, [nx](TensorNode& self) {
    // subgradient at 0 taken as 0
    Mat g = ((nx->value.array() > 0.0).cast<double>() * self.grad.array()).matrix();
    detail::accumulate(nx, g);
  });
}

Tensor elu(const Tensor& x) {
  auto* nx = tensor_node(x);
  Mat out = nx->value.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
  return make_op("elu", std::move(out), {tensor_node_ptr(x)}, [nx](TensorNode& self) {
    Mat g = nx->value.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
    detail::accumulate(nx, g.cwiseProduct(self.grad));
  });
}

Tensor sigmoid(const Tensor& x) {
  auto* nx = tensor_node(x);
  Mat out = nx->value.unaryExpr([](double v) { return sigmoid(v); });
  Mat saved = out;
  return make_op("sigmoid", std::move(out), {tensor_node_ptr(x)},
                 [nx, saved = std::move(saved)](TensorNode& self) {
                   Mat g = (saved.array() * (1.0 - saved.array()) * self.grad.array()).matrix();
                   detail::accumulate(nx, g);
                 });
}

Tensor row_l2_normalize(const Tensor& x) {
  constexpr double kEps = 1e-12;
  auto* nx = tensor_node(x);
  const Mat& v = nx->value;
  Vec norms = v.rowwise().norm();
  Vec denom = norms.cwiseMax(kEps);
  Mat out = denom.cwiseInverse().asDiagonal() * v;
  return make_op("row_l2_normalize", std::move(out), {tensor_node_ptr(x)},
                 [nx, norms = std::move(norms), denom = std::move(denom)](TensorNode& self) {
                   const Mat& v = nx->value;
                   Mat g(v.rows(), v.cols());
                   for (Eigen::Index r = 0; r < v.rows(); ++r) {
                     const double d = denom(r);
                     if (norms(r) > kEps) {
                       const double dot = v.row(r).dot(self.grad.row(r));
                       g.row(r) = self.grad.row(r) / d - v.row(r) * (dot / (d * d * d));
                     } else {
                       g.row(r) = self.grad.row(r) / d;
                     }
                   }
                   detail::accumulate(nx, g);
                 });
}

Tensor sum(const Tensor& x) {
  auto* nx = tensor_node(x);
  Mat out(1, 1);
  out(0, 0) = nx->value.sum();
  return make_op("sum", std::move(out), {tensor_node_ptr(x)}, [nx](TensorNode& self) {
    detail::accumulate(nx, Mat::Constant(nx->value.rows(), nx->value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& x) {
  auto* nx = tensor_node(x);
  const double n = static_cast<double>(nx->value.size());
  Mat out(1, 1);
  out(0, 0) = nx->value.sum() / n;
  return make_op("mean", std::move(out), {tensor_node_ptr(x)}, [nx, n](TensorNode& self) {
    detail::accumulate(nx,
                       Mat::Constant(nx->value.rows(), nx->value.cols(), self.grad(0, 0) / n));
  });
}

Tensor logsumexp_rows(const Tensor& x) {
  auto* nx = tensor_node(x);
  const Mat& v = nx->value;
  Mat out(v.rows(), 1);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    out(r, 0) = m + std::log((v.row(r).array() - m).exp().sum());
  }
  Mat saved = out;
  return make_op("logsumexp_rows", std::move(out), {tensor_node_ptr(x)},
                 [nx, saved = std::move(saved)](TensorNode& self) {
                   const Mat& v = nx->value;
                   Mat g(v.rows(), v.cols());
                   for (Eigen::Index r = 0; r < v.rows(); ++r) {
                     g.row(r) = ((v.row(r).array() - saved(r, 0)).exp() * self.grad(r, 0)).matrix();
                   }
                   detail::accumulate(nx, g);
                 });
}

Tensor row_sum(const Tensor& x) {
  auto* nx = tensor_node(x);
  Mat out = nx->value.rowwise().sum();
  return make_op("row_sum", std::move(out), {tensor_node_ptr(x)}, [nx](TensorNode& self) {
    detail::accumulate(nx, self.grad * Eigen::RowVectorXd::Ones(nx->value.cols()));
  });
}

Tensor rsqrt(const Tensor& x) {
  auto* nx = tensor_node(x);
  if ((nx->value.array() <= 0.0).any()) {
    throw std::invalid_argument("rsqrt: input must be strictly positive");
  }
  Mat out = nx->value.array().rsqrt().matrix();
  return make_op("rsqrt", std::move(out), {tensor_node_ptr(x)}, [nx](TensorNode& self) {
    Mat g = (-0.5 * nx->value.array().pow(-1.5) * self.grad.array()).matrix();
    detail::accumulate(nx, g);
  });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (rate == 0.0) return x;
  auto* nx = tensor_node(x);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Mat mask(nx->value.rows(), nx->value.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      mask(r, c) = unif(rng) < rate ? 0.0 : keep_scale;
    }
  }
  Mat out = nx->value.cwiseProduct(mask);
  return make_op("dropout", std::move(out), {tensor_node_ptr(x)},
                 [nx, mask = std::move(mask)](TensorNode& self) {
                   detail::accumulate(nx, self.grad.cwiseProduct(mask));
                 });
}

Tensor custom_op(const char* name, Mat value, const std::vector<Tensor>& inputs,
                 CustomBackward backward) {
  std::vector<std::shared_ptr<TensorNode>> parents;
  parents.reserve(inputs.size());
  for (const auto& t : inputs) parents.push_back(tensor_node_ptr(t));
  std::vector<TensorNode*> raw;
  raw.reserve(parents.size());
  for (const auto& p : parents) raw.push_back(p.get());
  return make_op(name, std::move(value), std::move(parents),
                 [raw = std::move(raw), backward = std::move(backward)](TensorNode& self) {
                   auto accum = [&raw](std::size_t i, const Mat& g) {
                     detail::accumulate(raw.at(i), g);
                   };
                   backward(self.grad, accum);
                 });
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("backward: loss must be a 1x1 tensor");
  }
  TensorNode* root = tensor_node(loss);

  // Iterative post-order DFS; the resulting list has parents before children,
  // so iterating it in reverse visits every node before its parents.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (TensorNode* n : order) {
    if (!n->is_leaf && n->backward_done) {
      throw std::logic_error("backward: graph has already been swept; rebuild the forward pass");
    }
  }

  detail::accumulate(root, Mat::Ones(1, 1));
  if (!root->requires_grad) {
    // Nothing reachable wants gradients; still mark the sweep as done.
    for (TensorNode* n : order) {
      if (!n->is_leaf) n->backward_done = true;
    }
    return;
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (!n->is_leaf) {
      if (n->requires_grad && n->grad.size() != 0 && n->backprop) n->backprop(*n);
      n->backward_done = true;
      n->grad.resize(0, 0);  // intermediate grads are not retained
    }
  }
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  for (auto& p : params) {
    if (!p.has_grad()) {
      throw std::logic_error("adam_step: parameter has no gradient; run backward first");
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& p : params) {
    const Mat& g = p.grad();
    auto& mom = state.moments[p.id()];
    if (mom.m.size() == 0) {
      mom.m = Mat::Zero(g.rows(), g.cols());
      mom.v = Mat::Zero(g.rows(), g.cols());
    }
    Mat& theta = p.value_mut();
    if (state.weight_decay != 0.0) {
      theta -= state.learning_rate * state.weight_decay * theta;
    }
    mom.m = state.beta1 * mom.m + (1.0 - state.beta1) * g;
    mom.v = state.beta2 * mom.v + (1.0 - state.beta2) * g.cwiseProduct(g);
    Mat m_hat = mom.m / bc1;
    Mat v_hat = mom.v / bc2;
    theta.array() -= state.learning_rate * m_hat.array() / (v_hat.array().sqrt() + state.epsilon);
    p.zero_grad();
  }
}

nlohmann::ordered_json params_to_json(const NamedParams& params) {
  nlohmann::ordered_json j;
  for (const auto& [name, t] : params) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    const Mat& v = t.value();
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (Eigen::Index c = 0; c < v.cols(); ++c) row.push_back(v(r, c));
      rows.push_back(std::move(row));
    }
    j[name] = std::move(rows);
  }
  return j;
}

void params_from_json(const nlohmann::ordered_json& j, NamedParams& params) {
  for (auto& [name, t] : params) {
    if (!j.contains(name)) throw DataError("params_from_json: missing parameter " + name);
    const auto& rows = j.at(name);
    Mat& v = t.value_mut();
    if (static_cast<Eigen::Index>(rows.size()) != v.rows()) {
      throw DataError("params_from_json: row count mismatch for " + name);
    }
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      const auto& row = rows.at(r);
      if (static_cast<Eigen::Index>(row.size()) != v.cols()) {
        throw DataError("params_from_json: column count mismatch for " + name);
      }
      for (Eigen::Index c = 0; c < v.cols(); ++c) v(r, c) = row.at(c).get<double>();
    }
  }
}

}  // namespace popgraph
