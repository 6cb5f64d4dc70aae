#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace istanet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor from_vector(const Eigen::VectorXd& v);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool is_scalar() const { return values_.size() == 1; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // Value of a single-element tensor.
  double item() const;

  Eigen::Map<Eigen::VectorXd> vec() {
    return {values_.data(), static_cast<Eigen::Index>(values_.size())};
  }
  Eigen::Map<const Eigen::VectorXd> vec() const {
    return {values_.data(), static_cast<Eigen::Index>(values_.size())};
  }

  // Same values, new extents; product must match.
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  // Fixed alignment keeps Eigen's vectorized reductions address-independent,
  // so results are reproducible bit for bit.
  std::vector<double, Eigen::aligned_allocator<double>> values_;
};

class Tape;

// Handle to a node of a Tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradient record. Operations append nodes in execution order, so the node
// list is already topologically sorted and backward() walks it in reverse.
// A tape is single-threaded; independent tapes may be used concurrently.
//
// Operations that capture external matrices (matvec with a constant
// operator) keep a pointer to them: the matrix must outlive the tape.
class Tape {
 public:
  // Receives the node's output gradient; accumulates into parents.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  // With record == false no backward closures are kept (inference only).
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable input: receives a gradient in backward().
  Var leaf(Tensor value);
  // Input that never needs a gradient.
  Var constant(Tensor value);

  Var push(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);

  // Reverse sweep from a scalar loss. Gradients of every node reachable
  // from `loss` are the exact sum of contributions from all consumers.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Accumulate `g` into the gradient buffer of `v` (used by backward fns).
  void accumulate(Var v, const Tensor& g);
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;  // stable addresses: value() references survive growth
  bool record_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. All inputs must live on the same tape.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                // elementwise
Var scale(Var a, double c);
Var scale(Var a, Var c);              // c is a single-element var
Var reshape(Var a, Shape shape);

// y = M v with a caller-owned constant matrix (rows(M) x cols(M)).
Var matvec(const Eigen::MatrixXd& m, Var v);
// y = M^T v with a caller-owned constant matrix.
Var matvec_transposed(const Eigen::MatrixXd& m, Var v);
// y = M v where M is a recorded [rows, cols] tensor.
Var matvec(Var m, Var v);

Var relu(Var x);
// sign(x) * max(|x| - theta, 0); theta is a single-element var >= 0.
Var soft_threshold(Var x, Var theta);

// 3x3 convolution (cross-correlation), stride 1, zero padding 1, no bias.
// input [C_in, H, W], filters [C_out, C_in, 3, 3] -> [C_out, H, W].
Var conv2d_same(Var input, Var filters);

Var sum(Var a);                       // scalar
Var squared_distance(Var a, Var b);   // scalar sum (a - b)^2
Var mse(Var a, Var b);                // scalar mean (a - b)^2

// Plain-value reference kernels used by the ops above.
namespace kernels {

Tensor conv2d_same(const Tensor& input, const Tensor& filters);
double soft_threshold(double x, double theta);

}  // namespace kernels

}  // namespace istanet
