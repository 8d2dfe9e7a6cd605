#pragma once

// Dense inner-loop kernels used by the operator and solver layers.
//
// Every kernel has a portable scalar reference implementation and, where the
// build and CPU allow, a vectorized variant. The variant is selected once at
// first use (overridable through DYNFILT_KERNELS=scalar|avx2 or set_backend)
// and the two are equivalence-tested against each other.
//
// Matrices are column-major with leading dimension equal to the row count,
// which is Eigen's default storage for MatrixXd.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace dynfilt::kernels {

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  Backend backend;
  const char* name;
  // y = A x. Columns with x[j] == 0 are skipped, so sparse x is cheap.
  void (*gemv)(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
  // y = A^T x.
  void (*gemv_t)(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
  // out[i] = sign(u[i]) * max(|u[i]| - t[i], 0).
  void (*soft_threshold)(const double* u, const double* t, std::size_t n, double* out);
  // Same with one threshold for every entry.
  void (*soft_threshold_uniform)(const double* u, double t, std::size_t n, double* out);
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, std::size_t n, double* y);
};

const KernelTable& scalar_table();

// nullptr when the binary was built without AVX2 support or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

std::vector<Backend> available_backends();
const KernelTable& table_for(Backend backend);

// The table every kernel call below dispatches through.
const KernelTable& active();

// Throws ArgumentError if the backend is not available on this machine.
void set_backend(Backend backend);
std::string_view backend_name(Backend backend);

void gemv(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y);
void gemv_t(std::span<const double> a, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y);
void soft_threshold(std::span<const double> u, std::span<const double> t, std::span<double> out);
void soft_threshold(std::span<const double> u, double t, std::span<double> out);
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace dynfilt::kernels
