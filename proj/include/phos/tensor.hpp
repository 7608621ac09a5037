#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace phos {

/// Error for malformed shapes, dimension mismatches and misuse of the API.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward() touches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Accumulates d(loss)/d(parent) given d(loss)/d(this) in `grad`.
  std::function<void(TensorNode&)> backprop;
};

}  // namespace detail

class Tensor;

namespace detail {
/// Builds an op node. Parent edges and the backprop closure are recorded
/// only when some parent requires gradients.
Tensor make_op(Shape shape, std::vector<double> values,
               std::vector<std::shared_ptr<TensorNode>> parents,
               std::function<void(TensorNode&)> backprop);
}  // namespace detail

/// Dense row-major float64 tensor participating in reverse-mode
/// differentiation. Copies share the underlying node (shallow handle).
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->values.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->values; }
  std::span<double> mutable_values() { return node_->values; }
  double value_at(std::size_t flat) const { return node_->values[flat]; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const;
  std::span<double> mutable_grad();

  /// Value of a scalar (size-1) tensor.
  double item() const;

  /// Detached deep copy; does not track history.
  Tensor clone() const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

  static Tensor from_node(std::shared_ptr<detail::TensorNode> node);

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// Named trainable tensor. Names must be unique within a model.
struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Reverse-mode sweep from a scalar loss. Grads of every tensor reachable
/// from `loss` are reset to zero first, then repopulated, so repeated calls
/// never accumulate across sweeps.
void backward(const Tensor& loss);

}  // namespace phos
