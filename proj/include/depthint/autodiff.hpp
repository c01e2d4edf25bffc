#pragma once

// Minimal reverse-mode differentiation over dense row-major double tensors.
//
// A Tensor is a shared handle to a graph node. Operations record their inputs and a backward
// closure; Tensor::backward() walks the graph once in reverse topological order. Leaf
// gradients accumulate across backward() calls until zero_grad(); interior gradients are
// recomputed each call.
//
// Volumes are laid out (channels, depth, height, width) with no batch axis. Batches are
// handled by building one graph per element and accumulating into shared leaves.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace depthint::ad {

using Shape = std::vector<int>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor variable(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  const Shape& shape() const { return node_->shape; }
  int rank() const { return int(node_->shape.size()); }
  int dim(int axis) const { return node_->shape[std::size_t(axis)]; }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return node_ != nullptr; }

  std::span<const double> values() const { return node_->value; }
  /// Only meaningful on leaves; mutating an interior node does not re-run the graph.
  std::span<double> mutable_values() { return node_->value; }
  /// Zeros when no gradient has been accumulated.
  std::span<const double> grad() const;
  double item() const;

  Eigen::Map<const Eigen::VectorXd> vector() const {
    return {node_->value.data(), Eigen::Index(node_->value.size())};
  }

  /// Seeds d(this)/d(this) = 1 and propagates; this must be a single-element tensor.
  void backward() const;
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Primitives. Shape errors throw DomainError naming the primitive and extents.

/// x [Ci, D, H, W], weight [Co, Ci, k, k, k] (k odd), bias [Co]; stride 1, zero "same" padding.
Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// 2x2x2 window, stride 2; backward routes to the first maximal element in window order.
Tensor maxpool3d(const Tensor& x);
/// x [Ci, D, H, W], weight [Ci, Co, 2, 2, 2], bias [Co] -> [Co, 2D, 2H, 2W].
Tensor deconv3d(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// a [n, k] x b [k, m].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Same shapes, or b of rank 1 matching a's last extent (added to every row).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor concat(const Tensor& a, const Tensor& b, int axis = 0);
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice(const Tensor& x, int axis, int begin, int end);
Tensor reduce_sum(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
/// Gathers entries along `axis`; indices may repeat (gradients scatter-add).
Tensor take(const Tensor& x, int axis, const std::vector<int>& indices);
Tensor transpose(const Tensor& x);

/// Extension point for operations whose gradients are computed elsewhere (losses, encoders).
/// `backward(output_grad, input_index, input_grad)` accumulates into input_grad.
using CustomBackward =
    std::function<void(std::span<const double> output_grad, std::size_t input, std::span<double> input_grad)>;
Tensor custom(const char* op, std::vector<Tensor> inputs, Shape shape, std::vector<double> values,
              CustomBackward backward);

// Parameters and optimization.

struct Parameter {
  std::string name;
  Tensor tensor;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  Parameter(std::string name, Shape shape, std::vector<double> values);
  // Copies own fresh leaves; a copied model trains independently of its source.
  Parameter(const Parameter& other);
  Parameter& operator=(const Parameter& other);
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update using each parameter's accumulated gradient; step t >= 1.
/// Throws NumericalError naming the parameter on a non-finite gradient.
void adam_step(std::vector<Parameter>& params, const AdamConfig& config, int t);

void zero_grad(std::vector<Parameter>& params);

/// "DCKP", u32 count, then per parameter: u32 name length, name bytes, u32 rank,
/// u32 extents, f64 payload; little-endian.
void save_checkpoint(const std::filesystem::path& path, const std::vector<Parameter>& params);
/// Loads into existing parameters, matching by name and shape.
void load_checkpoint(const std::filesystem::path& path, std::vector<Parameter>& params);

// Finite-difference checking.

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates where the function is not smooth within the step
};

/// |a - n| / max(1e-8, |a| + |n|) for one coordinate.
double relative_error(double analytic, double numeric);

/// Central differences of f at x against `analytic`. A coordinate is skipped when the
/// differences at `step` and `step / 2` disagree by more than kink_tolerance (relative),
/// which marks a matching switch or other kink inside the stencil.
GradCheckResult grad_check(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& analytic, double step, double kink_tolerance = 1e-6);

/// Rebuilds the graph from perturbed copies of `inputs` and checks every input that
/// requires a gradient.
GradCheckResult grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& build,
                           const std::vector<Tensor>& inputs, double step, double kink_tolerance = 1e-6);

}  // namespace depthint::ad
