#include <atomic>
#include <cstdlib>
#include <string>

#include "dynfilt/errors.hpp"
#include "kernels_impl.hpp"

namespace dynfilt::kernels {

namespace {

bool cpu_has_avx2_fma() {
#if defined(DYNFILT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* select_default() {
  const KernelTable* best = avx2_table();
  if (const char* env = std::getenv("DYNFILT_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && best != nullptr) return best;
  }
  return best != nullptr ? best : &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{select_default()};
  return table;
}

void check_span(std::size_t have, std::size_t need, const char* what) {
  if (have < need) throw DimensionError(std::string("kernel argument too short: ") + what);
}

}  // namespace

const KernelTable& scalar_table() { return detail::kScalarTable; }

const KernelTable* avx2_table() {
#if defined(DYNFILT_HAVE_AVX2)
  static const bool supported = cpu_has_avx2_fma();
  return supported ? &detail::kAvx2Table : nullptr;
#else
  return nullptr;
#endif
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out{Backend::kScalar};
  if (avx2_table() != nullptr) out.push_back(Backend::kAvx2);
  return out;
}

const KernelTable& table_for(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return scalar_table();
    case Backend::kAvx2:
      if (const KernelTable* t = avx2_table()) return *t;
      break;
  }
  throw ArgumentError("kernel backend not available on this machine: " +
                      std::string(backend_name(backend)));
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void set_backend(Backend backend) { current().store(&table_for(backend), std::memory_order_release); }

std::string_view backend_name(Backend backend) {
  return backend == Backend::kAvx2 ? "avx2" : "scalar";
}

void gemv(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y) {
  check_span(a.size(), rows * cols, "matrix");
  check_span(x.size(), cols, "x");
  check_span(y.size(), rows, "y");
  active().gemv(a.data(), rows, cols, x.data(), y.data());
}

void gemv_t(std::span<const double> a, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y) {
  check_span(a.size(), rows * cols, "matrix");
  check_span(x.size(), rows, "x");
  check_span(y.size(), cols, "y");
  active().gemv_t(a.data(), rows, cols, x.data(), y.data());
}

void soft_threshold(std::span<const double> u, std::span<const double> t, std::span<double> out) {
  check_span(t.size(), u.size(), "threshold");
  check_span(out.size(), u.size(), "out");
  active().soft_threshold(u.data(), t.data(), u.size(), out.data());
}

void soft_threshold(std::span<const double> u, double t, std::span<double> out) {
  check_span(out.size(), u.size(), "out");
  active().soft_threshold_uniform(u.data(), t, u.size(), out.data());
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_span(b.size(), a.size(), "b");
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_span(y.size(), x.size(), "y");
  active().axpy(alpha, x.data(), x.size(), y.data());
}

}  // namespace dynfilt::kernels
