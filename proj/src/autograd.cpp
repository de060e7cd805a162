#include "graphprompt/autograd.hpp"

#include "graphprompt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace gprompt::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, true, false});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, false, false});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, Backward back) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw ContractError("autograd: variable belongs to a different tape");
    needs = needs || requires_grad(p.id());
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(back) : nullptr, needs, false});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var scalar) {
  if (scalar.value().size() != 1) throw ContractError("autograd: backward() needs a 1x1 output");
  for (Node& n : nodes_) n.has_grad = false;
  accumulate(scalar.id(), Matrix::Ones(1, 1));
  for (int id = scalar.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.has_grad && n.back) n.back(*this, id, n.grad);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string("autograd: shape mismatch in ") + op);
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw ValidationError("autograd: shape mismatch in matmul");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, int, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var transpose(Var a) {
  const int ia = a.id();
  return a.tape()->record(a.value().transpose(), {a},
                          [ia](Tape& t, int, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                          [ia, ib](Tape& t, int, const Matrix& g) {
                            if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                            if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                          });
}

Var scale(Var a, double s) {
  const int ia = a.id();
  return a.tape()->record(a.value() * s, {a}, [ia, s](Tape& t, int, const Matrix& g) { t.accumulate(ia, g * s); });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ValidationError("autograd: shape mismatch in add_row");
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [ia, ir](Tape& t, int, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("autograd: vstack of nothing");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ValidationError("autograd: shape mismatch in vstack");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    spans.emplace_back(p.id(), r);
    r += p.rows();
  }
  return parts.front().tape()->record(std::move(out), parts, [spans](Tape& t, int, const Matrix& g) {
    for (const auto& [id, start] : spans) {
      if (t.requires_grad(id)) t.accumulate(id, g.middleRows(start, t.value(id).rows()));
    }
  });
}

Var relu(Var a) {
  const int ia = a.id();
  return a.tape()->record(a.value().cwiseMax(0.0), {a}, [ia](Tape& t, int, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct((t.value(ia).array() > 0.0).cast<double>().matrix()));
  });
}

Var tanh(Var a) {
  const int ia = a.id();
  return a.tape()->record(a.value().array().tanh().matrix(), {a}, [ia](Tape& t, int self, const Matrix& g) {
    const Matrix& y = t.value(self);
    t.accumulate(ia, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var sigmoid(Var a) {
  const int ia = a.id();
  Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return a.tape()->record(std::move(y), {a}, [ia](Tape& t, int self, const Matrix& g) {
    const Matrix& y = t.value(self);
    t.accumulate(ia, g.cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  });
}

Var exp(Var a) {
  const int ia = a.id();
  return a.tape()->record(a.value().array().exp().matrix(), {a}, [ia](Tape& t, int self, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(t.value(self)));
  });
}

Var log(Var a) {
  const int ia = a.id();
  if ((a.value().array() <= 0.0).any()) throw NumericError("autograd: log of a non-positive value");
  return a.tape()->record(a.value().array().log().matrix(), {a}, [ia](Tape& t, int, const Matrix& g) {
    t.accumulate(ia, g.cwiseQuotient(t.value(ia)));
  });
}

Var sum(Var a) {
  const int ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, int, const Matrix& g) {
    const Matrix& x = t.value(ia);
    t.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var sum_rows(Var a) {
  const int ia = a.id();
  return a.tape()->record(a.value().colwise().sum(), {a}, [ia](Tape& t, int, const Matrix& g) {
    t.accumulate(ia, g.replicate(t.value(ia).rows(), 1));
  });
}

Var mean_rows(Var a) {
  if (a.rows() == 0) throw ValidationError("autograd: mean over zero rows");
  return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows()));
}

Var squared_norm(Var a) { return sum(mul(a, a)); }

Var normalize_rows(Var a, double min_norm) {
  const int ia = a.id();
  const Matrix& x = a.value();
  Vector norms = x.rowwise().norm();
  Vector clamped(norms.size());
  for (Eigen::Index i = 0; i < norms.size(); ++i) {
    if (!std::isfinite(norms(i)) || (min_norm <= 0.0 && !(norms(i) > 0.0))) {
      throw NumericError("cannot normalize a zero-norm row (row " + std::to_string(i) + ")");
    }
    clamped(i) = std::max(norms(i), min_norm);
  }
  Matrix y = clamped.cwiseInverse().asDiagonal() * x;
  return a.tape()->record(std::move(y), {a}, [ia, norms, clamped](Tape& t, int self, const Matrix& g) {
    const Matrix& y = t.value(self);
    // d(x/|x|) = (g - y (y·g)) / |x|; a clamped row is a plain scaling
    Vector dots = (y.cwiseProduct(g)).rowwise().sum();
    for (Eigen::Index i = 0; i < norms.size(); ++i) {
      if (norms(i) < clamped(i)) dots(i) = 0.0;
    }
    Matrix dx = g - dots.asDiagonal() * y;
    t.accumulate(ia, clamped.cwiseInverse().asDiagonal() * dx);
  });
}

Var gate_above(Var a, double threshold) {
  const int ia = a.id();
  Matrix mask = (a.value().array() > threshold).cast<double>().matrix();
  Matrix y = a.value().cwiseProduct(mask);
  return a.tape()->record(std::move(y), {a}, [ia, mask](Tape& t, int, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(mask));
  });
}

Var straight_through_step(Var a, double threshold) {
  const int ia = a.id();
  Matrix y = (a.value().array() > threshold).cast<double>().matrix();
  return a.tape()->record(std::move(y), {a}, [ia](Tape& t, int, const Matrix& g) { t.accumulate(ia, g); });
}

Var scatter(Var src, Eigen::Index rows, Eigen::Index cols, std::vector<Placement> placements) {
  Matrix out = Matrix::Zero(rows, cols);
  const Matrix& s = src.value();
  for (const Placement& p : placements) {
    if (p.src_row >= s.rows() || p.src_col >= s.cols() || p.dst_row >= rows || p.dst_col >= cols) {
      throw ValidationError("autograd: scatter placement out of range");
    }
    out(p.dst_row, p.dst_col) += s(p.src_row, p.src_col);
  }
  const int is = src.id();
  return src.tape()->record(std::move(out), {src},
                            [is, placements = std::move(placements)](Tape& t, int, const Matrix& g) {
                              const Matrix& s = t.value(is);
                              Matrix ds = Matrix::Zero(s.rows(), s.cols());
                              for (const Placement& p : placements) {
                                ds(p.src_row, p.src_col) += g(p.dst_row, p.dst_col);
                              }
                              t.accumulate(is, ds);
                            });
}

Var sym_normalize_adjacency(Var adjacency) {
  const Matrix& a = adjacency.value();
  if (a.rows() != a.cols()) throw ValidationError("autograd: adjacency must be square");
  const Eigen::Index n = a.rows();
  Matrix m = a + Matrix::Identity(n, n);
  Vector deg = m.rowwise().sum();
  if ((deg.array() <= 0.0).any()) throw NumericError("non-positive degree in adjacency normalization");
  Vector s = deg.array().rsqrt().matrix();
  Matrix y = s.asDiagonal() * m * s.asDiagonal();
  const int ia = adjacency.id();
  return adjacency.tape()->record(std::move(y), {adjacency}, [ia, m, s](Tape& t, int, const Matrix& g) {
    // y_ij = s_i m_ij s_j, s_i = deg_i^{-1/2}, deg_i = sum_k m_ik.
    Matrix dm = s.asDiagonal() * g * s.asDiagonal();
    Matrix gm = g.cwiseProduct(m);
    Vector ds = gm * s + gm.transpose() * s;
    Vector ddeg = (-0.5 * ds.array() * s.array().cube()).matrix();
    dm.colwise() += ddeg;
    t.accumulate(ia, dm);
  });
}

Var softmax_cross_entropy(Var logits, const std::vector<int>& targets, bool exclude_diagonal) {
  const Matrix& z = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != z.rows()) {
    throw ValidationError("cross entropy: target count does not match rows");
  }
  const Eigen::Index n = z.rows(), c = z.cols();
  Matrix prob = Matrix::Zero(n, c);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c || (exclude_diagonal && y == i)) throw ValidationError("cross entropy: invalid target");
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < c; ++j) {
      if (exclude_diagonal && j == i) continue;
      mx = std::max(mx, z(i, j));
    }
    double denom = 0.0;
    for (Eigen::Index j = 0; j < c; ++j) {
      if (exclude_diagonal && j == i) continue;
      prob(i, j) = std::exp(z(i, j) - mx);
      denom += prob(i, j);
    }
    prob.row(i) /= denom;
    total += -(z(i, y) - mx - std::log(denom));
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(n);
  const int iz = logits.id();
  return logits.tape()->record(std::move(out), {logits}, [iz, prob, targets, n](Tape& t, int, const Matrix& g) {
    Matrix d = prob;
    for (Eigen::Index i = 0; i < n; ++i) d(i, targets[static_cast<std::size_t>(i)]) -= 1.0;
    t.accumulate(iz, d * (g(0, 0) / static_cast<double>(n)));
  });
}

Var bce_with_logits(Var logits, const Matrix& targets) {
  const Matrix& z = logits.value();
  if (z.rows() != targets.rows() || z.cols() != targets.cols()) {
    throw ValidationError("binary cross entropy: shape mismatch");
  }
  // log(1 + e^z) - y z, computed stably.
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double v = z(i);
    total += std::max(v, 0.0) - v * targets(i) + std::log1p(std::exp(-std::abs(v)));
  }
  const double count = static_cast<double>(z.size());
  Matrix out(1, 1);
  out(0, 0) = total / count;
  const int iz = logits.id();
  return logits.tape()->record(std::move(out), {logits}, [iz, targets, count](Tape& t, int, const Matrix& g) {
    const Matrix& z = t.value(iz);
    Matrix p = (1.0 / (1.0 + (-z.array()).exp())).matrix();
    t.accumulate(iz, (p - targets) * (g(0, 0) / count));
  });
}

Var mean_squared_error(Var prediction, const Matrix& targets) {
  if (prediction.rows() != targets.rows() || prediction.cols() != targets.cols()) {
    throw ValidationError("mean squared error: shape mismatch");
  }
  Var diff = sub(prediction, prediction.tape()->constant(targets));
  return mean(mul(diff, diff));
}

}  // namespace gprompt::ad
