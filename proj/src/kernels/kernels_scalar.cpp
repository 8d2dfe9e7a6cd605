#include "kernels_impl.hpp"

#include <cmath>

namespace dynfilt::kernels::detail {

namespace {

void gemv_scalar(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t i = 0; i < rows; ++i) y[i] = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double xj = x[j];
    if (xj == 0.0) continue;
    const double* col = a + j * rows;
    for (std::size_t i = 0; i < rows; ++i) y[i] += col[i] * xj;
  }
}

void gemv_t_scalar(const double* a, std::size_t rows, std::size_t cols, const double* x,
                   double* y) {
  for (std::size_t j = 0; j < cols; ++j) {
    const double* col = a + j * rows;
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) acc += col[i] * x[i];
    y[j] = acc;
  }
}

inline double shrink(double u, double t) {
  const double mag = std::fabs(u) - t;
  if (mag <= 0.0) return 0.0;
  return std::copysign(mag, u);
}

void soft_threshold_scalar(const double* u, const double* t, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = shrink(u[i], t[i]);
}

void soft_threshold_uniform_scalar(const double* u, double t, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = shrink(u[i], t);
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, std::size_t n, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable kScalarTable{
    Backend::kScalar,     "scalar",
    &gemv_scalar,         &gemv_t_scalar,
    &soft_threshold_scalar, &soft_threshold_uniform_scalar,
    &dot_scalar,          &axpy_scalar,
};

}  // namespace dynfilt::kernels::detail
