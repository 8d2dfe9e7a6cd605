#include "dynfilt/operators.hpp"

#include <cmath>
#include <span>
#include <string>

#include "dynfilt/errors.hpp"
#include "dynfilt/kernels.hpp"

namespace dynfilt {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::span<const double> view(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
std::span<double> view(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

void require_length(const Vector& v, Index expected, const char* what) {
  if (v.size() != expected) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(expected) +
                         ", got " + std::to_string(v.size()));
  }
}

}  // namespace

LinearOperator LinearOperator::dense(Matrix m) {
  if (m.rows() < 1 || m.cols() < 1) throw DimensionError("dense operator needs rows, cols >= 1");
  return LinearOperator(std::make_shared<const Storage>(std::move(m)));
}

LinearOperator LinearOperator::identity(Index n) {
  if (n < 1) throw DimensionError("identity operator needs n >= 1");
  return LinearOperator(std::make_shared<const Storage>(Identity{n}));
}

LinearOperator LinearOperator::implicit(Index rows, Index cols, ApplyFn forward, ApplyFn adjoint) {
  if (rows < 1 || cols < 1) throw DimensionError("implicit operator needs rows, cols >= 1");
  if (!forward || !adjoint) throw ArgumentError("implicit operator needs forward and adjoint");
  return LinearOperator(std::make_shared<const Storage>(
      Implicit{rows, cols, std::move(forward), std::move(adjoint)}));
}

Index LinearOperator::rows() const {
  return std::visit(Overloaded{[](const Matrix& m) { return m.rows(); },
                               [](const Identity& i) { return i.n; },
                               [](const Implicit& f) { return f.rows; }},
                    *storage_);
}

Index LinearOperator::cols() const {
  return std::visit(Overloaded{[](const Matrix& m) { return m.cols(); },
                               [](const Identity& i) { return i.n; },
                               [](const Implicit& f) { return f.cols; }},
                    *storage_);
}

void LinearOperator::apply(const Vector& x, Vector& y) const {
  require_length(x, cols(), "operator forward input");
  if (y.size() != rows()) y.resize(rows());
  std::visit(Overloaded{[&](const Matrix& m) {
                          kernels::gemv({m.data(), static_cast<std::size_t>(m.size())},
                                        static_cast<std::size_t>(m.rows()),
                                        static_cast<std::size_t>(m.cols()), view(x), view(y));
                        },
                        [&](const Identity&) { y = x; },
                        [&](const Implicit& f) { f.forward(x, y); }},
             *storage_);
}

void LinearOperator::apply_adjoint(const Vector& v, Vector& u) const {
  require_length(v, rows(), "operator adjoint input");
  if (u.size() != cols()) u.resize(cols());
  std::visit(Overloaded{[&](const Matrix& m) {
                          kernels::gemv_t({m.data(), static_cast<std::size_t>(m.size())},
                                          static_cast<std::size_t>(m.rows()),
                                          static_cast<std::size_t>(m.cols()), view(v), view(u));
                        },
                        [&](const Identity&) { u = v; },
                        [&](const Implicit& f) { f.adjoint(v, u); }},
             *storage_);
}

Vector LinearOperator::forward(const Vector& x) const {
  Vector y(rows());
  apply(x, y);
  return y;
}

Vector LinearOperator::adjoint(const Vector& v) const {
  Vector u(cols());
  apply_adjoint(v, u);
  return u;
}

bool LinearOperator::is_identity() const { return std::holds_alternative<Identity>(*storage_); }

bool LinearOperator::is_dense() const { return std::holds_alternative<Matrix>(*storage_); }

const Matrix& LinearOperator::matrix() const {
  if (const auto* m = std::get_if<Matrix>(storage_.get())) return *m;
  throw StateError("operator is not stored densely");
}

Matrix LinearOperator::to_dense() const {
  if (const auto* m = std::get_if<Matrix>(storage_.get())) return *m;
  if (is_identity()) return Matrix::Identity(rows(), cols());
  Matrix out(rows(), cols());
  Vector e = Vector::Zero(cols());
  Vector col(rows());
  for (Index j = 0; j < cols(); ++j) {
    e[j] = 1.0;
    apply(e, col);
    out.col(j) = col;
    e[j] = 0.0;
  }
  return out;
}

LinearOperator compose(const LinearOperator& outer, const LinearOperator& inner) {
  if (outer.cols() != inner.rows()) {
    throw DimensionError("compose: outer.cols (" + std::to_string(outer.cols()) +
                         ") != inner.rows (" + std::to_string(inner.rows()) + ")");
  }
  if (inner.is_identity()) return outer;
  if (outer.is_identity()) return inner;
  if (outer.is_dense() && inner.is_dense()) {
    return LinearOperator::dense(outer.matrix() * inner.matrix());
  }
  auto fwd = [outer, inner](const Vector& x, Vector& y) {
    Vector mid(inner.rows());
    inner.apply(x, mid);
    outer.apply(mid, y);
  };
  auto adj = [outer, inner](const Vector& v, Vector& u) {
    Vector mid(outer.cols());
    outer.apply_adjoint(v, mid);
    inner.apply_adjoint(mid, u);
  };
  return LinearOperator::implicit(outer.rows(), inner.cols(), std::move(fwd), std::move(adj));
}

LinearOperator gaussian_measurement(Index rows, Index cols, Rng& rng) {
  if (rows < 1 || cols < 1) {
    throw DimensionError("gaussian_measurement: M and N must be >= 1 (got " +
                         std::to_string(rows) + "x" + std::to_string(cols) + ")");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    double norm = m.col(j).norm();
    // A column of exact zeros has probability zero; redraw rather than divide by it.
    while (norm == 0.0) {
      for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
      norm = m.col(j).norm();
    }
    m.col(j) /= norm;
  }
  return LinearOperator::dense(std::move(m));
}

double operator_norm_sq(const LinearOperator& op, double tol, int max_iters) {
  if (!(tol > 0.0)) throw ArgumentError("operator_norm_sq: tol must be positive");
  if (op.is_identity()) return kNormSafetyFactor;

  // Fixed, non-degenerate start so the estimate is reproducible.
  Vector v(op.cols());
  for (Index i = 0; i < v.size(); ++i) v[i] = 1.0 + 0.5 * std::sin(1.0 + 0.7 * static_cast<double>(i));
  v.normalize();

  Vector av(op.rows());
  Vector w(op.cols());
  double lambda = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    op.apply(v, av);
    op.apply_adjoint(av, w);
    const double next = v.dot(w);  // Rayleigh quotient of op^T op
    const double wn = w.norm();
    if (!std::isfinite(next) || !std::isfinite(wn)) {
      throw NumericalError("operator_norm_sq: non-finite iterate");
    }
    if (wn == 0.0) return 0.0;
    if (it > 1 && std::abs(next - lambda) <= tol * next) return next * kNormSafetyFactor;
    lambda = next;
    v = w / wn;
  }
  throw NumericalError("operator_norm_sq: power iteration did not converge after " +
                       std::to_string(max_iters) + " iterations");
}

Vector soft_threshold(const Vector& u, const Vector& t) {
  require_length(t, u.size(), "soft_threshold thresholds");
  for (Index i = 0; i < t.size(); ++i) {
    if (!(t[i] >= 0.0)) throw ArgumentError("soft_threshold: thresholds must be >= 0");
  }
  Vector out(u.size());
  kernels::soft_threshold(view(u), view(t), view(out));
  return out;
}

Vector soft_threshold(const Vector& u, double t) {
  if (!(t >= 0.0)) throw ArgumentError("soft_threshold: threshold must be >= 0");
  Vector out(u.size());
  kernels::soft_threshold(view(u), t, view(out));
  return out;
}

}  // namespace dynfilt
