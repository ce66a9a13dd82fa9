#pragma once

#include "popgraph/common.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace popgraph {

namespace detail {
struct TensorNode;
}

/// Dense 2-D value node in a reverse-mode computation graph. Copying a
/// Tensor copies the handle, not the values; graphs are rebuilt on every
/// forward pass while parameter leaves persist across passes.
class Tensor {
 public:
  Tensor() = default;

  /// Leaf that does not receive gradients (inputs, fixed operators).
  static Tensor constant(Mat values);
  /// Trainable leaf; accumulates gradients across backward calls until cleared.
  static Tensor parameter(Mat values);
  static Tensor scalar_const(double v);

  bool defined() const { return node_ != nullptr; }
  const Mat& value() const;
  /// Mutable access for optimizers and initialization. Leaves only.
  Mat& value_mut();
  Eigen::Index rows() const;
  Eigen::Index cols() const;
  /// Value of a 1x1 tensor.
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  const Mat& grad() const;
  void zero_grad();

  /// Stable identity of the underlying node, used to key optimizer state.
  const void* id() const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend detail::TensorNode* tensor_node(const Tensor&);
  friend std::shared_ptr<detail::TensorNode> tensor_node_ptr(const Tensor&);
  friend Tensor wrap_node(std::shared_ptr<detail::TensorNode>);
};

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// x (n x m) plus a 1 x m row vector broadcast over rows; the bias add.
Tensor add_rowvec(const Tensor& x, const Tensor& row);
Tensor scale(const Tensor& x, double c);

Tensor relu(const Tensor& x);
Tensor elu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Each row divided by max(||row||_2, 1e-12).
Tensor row_l2_normalize(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Row-wise log(sum(exp(.))) with max shift, n x m -> n x 1.
Tensor logsumexp_rows(const Tensor& x);
Tensor row_sum(const Tensor& x);
/// Elementwise x^(-1/2); requires strictly positive entries.
Tensor rsqrt(const Tensor& x);

/// Inverted dropout: keeps entries with probability 1-rate and rescales by
/// 1/(1-rate). rate = 0 returns the input unchanged.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

/// Extension point for fused operations with hand-derived backward rules.
/// `backward(upstream, accum)` must call accum(i, g_i) for every input i it
/// propagates into; inputs that do not require gradients are skipped there.
using CustomBackward =
    std::function<void(const Mat& upstream,
                       const std::function<void(std::size_t, const Mat&)>& accum)>;
Tensor custom_op(const char* name, Mat value, const std::vector<Tensor>& inputs,
                 CustomBackward backward);

/// Reverse sweep from a 1x1 loss. Populates grads on every reachable tensor
/// that requires them; gradients add up across fan-out. Running backward a
/// second time over the same graph is an error.
void backward(const Tensor& loss);

struct AdamState {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;

  struct Moments {
    Mat m;
    Mat v;
  };
  std::unordered_map<const void*, Moments> moments;
};

/// One Adam update with bias correction and decoupled weight decay
/// (theta <- theta - lr*wd*theta before the moment update). Clears grads.
void adam_step(std::vector<Tensor>& params, AdamState& state);

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

nlohmann::ordered_json params_to_json(const NamedParams& params);
/// Loads values into existing parameters; shapes must match.
void params_from_json(const nlohmann::ordered_json& j, NamedParams& params);

}  // namespace popgraph
