#include "istanet/tensor.hpp"

#include "istanet/errors.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace istanet {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (shape_size(shape_) != values_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                     std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, value); }

Tensor Tensor::from_vector(const Eigen::VectorXd& v) {
  return Tensor({static_cast<std::size_t>(v.size())},
                std::vector<double>(v.data(), v.data() + v.size()));
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape_));
  }
  return values_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.values_ = values_;
  return out;
}

// ---------------------------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw ContractError("operand belongs to a different tape");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  Node node{std::move(value), {}, needs, {}};
  if (needs && record_) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::grad(std::size_t id) const {
  static const Tensor empty;
  return nodes_[id].grad.size() ? nodes_[id].grad : empty;
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  Tensor& buf = grad_buffer(v);
  if (buf.size() != g.size()) {
    throw ShapeError("gradient of size " + std::to_string(g.size()) + " for node of shape " +
                     shape_string(buf.shape()));
  }
  buf.vec() += g.vec();
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("loss belongs to a different tape");
  if (!record_) throw ContractError("backward() on a non-recording tape");
  if (!nodes_[loss.id()].value.is_scalar()) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_string(nodes_[loss.id()].value.shape()));
  }
  grad_buffer(loss).vec().setConstant(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size()) n.backward(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " differ");
  }
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return *a.tape();
}

Var require_scalar(Var c, const char* op) {
  if (!c.value().is_scalar()) {
    throw ShapeError(std::string(op) + ": expected a scalar, got " + shape_string(c.shape()));
  }
  return c;
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out.vec() += b.value().vec();
  return tape_of(a).push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) t.accumulate(a, g);
    if (b.requires_grad()) t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  out.vec() -= b.value().vec();
  return tape_of(a).push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) t.accumulate(a, g);
    if (b.requires_grad()) t.grad_buffer(b).vec() -= g.vec();
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  out.vec().array() *= b.value().vec().array();
  return tape_of(a).push(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) t.grad_buffer(a).vec().array() += g.vec().array() * b.value().vec().array();
    if (b.requires_grad()) t.grad_buffer(b).vec().array() += g.vec().array() * a.value().vec().array();
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  out.vec() *= c;
  return tape_of(a).push(std::move(out), {a}, [a, c](Tape& t, const Tensor& g) {
    t.grad_buffer(a).vec() += c * g.vec();
  });
}

Var scale(Var a, Var c) {
  require_scalar(c, "scale");
  const double cv = c.value()[0];
  Tensor out = a.value();
  out.vec() *= cv;
  return tape_of(a).push(std::move(out), {a, c}, [a, c](Tape& t, const Tensor& g) {
    if (a.requires_grad()) t.grad_buffer(a).vec() += c.value()[0] * g.vec();
    if (c.requires_grad()) t.grad_buffer(c)[0] += g.vec().dot(a.value().vec());
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return tape_of(a).push(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    t.grad_buffer(a).vec() += g.vec();
  });
}

Var matvec(const Eigen::MatrixXd& m, Var v) {
  if (static_cast<std::size_t>(m.cols()) != v.size()) {
    throw ShapeError("matvec: matrix has " + std::to_string(m.cols()) + " columns, vector has " +
                     std::to_string(v.size()) + " entries");
  }
  Tensor out({static_cast<std::size_t>(m.rows())});
  out.vec().noalias() = m * v.value().vec();
  const Eigen::MatrixXd* mp = &m;
  return tape_of(v).push(std::move(out), {v}, [mp, v](Tape& t, const Tensor& g) {
    t.grad_buffer(v).vec().noalias() += mp->transpose() * g.vec();
  });
}

Var matvec_transposed(const Eigen::MatrixXd& m, Var v) {
  if (static_cast<std::size_t>(m.rows()) != v.size()) {
    throw ShapeError("matvec_transposed: matrix has " + std::to_string(m.rows()) +
                     " rows, vector has " + std::to_string(v.size()) + " entries");
  }
  Tensor out({static_cast<std::size_t>(m.cols())});
  out.vec().noalias() = m.transpose() * v.value().vec();
  const Eigen::MatrixXd* mp = &m;
  return tape_of(v).push(std::move(out), {v}, [mp, v](Tape& t, const Tensor& g) {
    t.grad_buffer(v).vec().noalias() += (*mp) * g.vec();
  });
}

namespace {
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}

Var matvec(Var m, Var v) {
  if (m.value().rank() != 2) throw ShapeError("matvec: matrix operand must be rank 2");
  const auto rows = static_cast<Eigen::Index>(m.shape()[0]);
  const auto cols = static_cast<Eigen::Index>(m.shape()[1]);
  if (static_cast<std::size_t>(cols) != v.size()) {
    throw ShapeError("matvec: matrix " + shape_string(m.shape()) + " times vector of " +
                     std::to_string(v.size()));
  }
  Eigen::Map<const RowMatrix> mm(m.value().data(), rows, cols);
  Tensor out({static_cast<std::size_t>(rows)});
  out.vec().noalias() = mm * v.value().vec();
  return tape_of(m).push(std::move(out), {m, v}, [m, v, rows, cols](Tape& t, const Tensor& g) {
    Eigen::Map<const RowMatrix> mm(m.value().data(), rows, cols);
    if (m.requires_grad()) {
      Eigen::Map<RowMatrix> gm(t.grad_buffer(m).data(), rows, cols);
      gm.noalias() += g.vec() * v.value().vec().transpose();
    }
    if (v.requires_grad()) t.grad_buffer(v).vec().noalias() += mm.transpose() * g.vec();
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& e : out.values()) e = e > 0.0 ? e : 0.0;
  return tape_of(x).push(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

double kernels::soft_threshold(double x, double theta) {
  if (x > theta) return x - theta;
  if (x < -theta) return x + theta;
  return 0.0;
}

Var soft_threshold(Var x, Var theta) {
  require_scalar(theta, "soft_threshold");
  const double th = theta.value()[0];
  if (!(th >= 0.0)) {
    throw DomainError("soft_threshold: threshold must be >= 0, got " + std::to_string(th));
  }
  Tensor out = x.value();
  for (double& e : out.values()) e = kernels::soft_threshold(e, th);
  return tape_of(x).push(std::move(out), {x, theta}, [x, theta, th](Tape& t, const Tensor& g) {
    const Tensor& xv = x.value();
    if (x.requires_grad()) {
      Tensor& gx = t.grad_buffer(x);
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (std::abs(xv[i]) > th) gx[i] += g[i];
      }
    }
    if (theta.requires_grad()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < xv.size(); ++i) {
        if (xv[i] > th) acc -= g[i];
        else if (xv[i] < -th) acc += g[i];
      }
      t.grad_buffer(theta)[0] += acc;
    }
  });
}

Var sum(Var a) {
  Tensor out = Tensor::scalar(a.value().vec().sum());
  return tape_of(a).push(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
    t.grad_buffer(a).vec().array() += g[0];
  });
}

Var squared_distance(Var a, Var b) {
  require_same_shape(a, b, "squared_distance");
  const double s = (a.value().vec() - b.value().vec()).squaredNorm();
  return tape_of(a).push(Tensor::scalar(s), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Eigen::VectorXd d = 2.0 * g[0] * (a.value().vec() - b.value().vec());
    if (a.requires_grad()) t.grad_buffer(a).vec() += d;
    if (b.requires_grad()) t.grad_buffer(b).vec() -= d;
  });
}

Var mse(Var a, Var b) {
  require_same_shape(a, b, "mse");
  return scale(squared_distance(a, b), 1.0 / static_cast<double>(a.size()));
}

}  // namespace istanet
