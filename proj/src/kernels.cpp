#include "f0lab/kernels.hpp"

#include <atomic>

#include "kernels_detail.hpp"

namespace f0lab::kernels {

namespace detail {

// ---------------------------------------------------------------------------
// Scalar reference kernels. These define the semantics; the SIMD variants are
// checked against them.
// ---------------------------------------------------------------------------

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void matvec(const double* w, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(w + r * cols, x, cols);
}

void matvec_acc(const double* w, std::size_t rows, std::size_t cols,
                const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot(w + r * cols, x, cols);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void matvec_t_acc(const double* w, std::size_t rows, std::size_t cols,
                  const double* dy, double* dx) {
  for (std::size_t r = 0; r < rows; ++r) axpy(dy[r], w + r * cols, dx, cols);
}

void ger_acc(double* w, std::size_t rows, std::size_t cols,
             const double* dy, const double* x) {
  for (std::size_t r = 0; r < rows; ++r) axpy(dy[r], x, w + r * cols, cols);
}

double sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double sumsq(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double sq_diff_sum(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void acc_moments(const double* x, std::size_t n, double* sum_acc, double* sq_acc) {
  for (std::size_t i = 0; i < n; ++i) {
    sum_acc[i] += x[i];
    sq_acc[i] += x[i] * x[i];
  }
}

}  // namespace scalar

const KernelTable kScalarTable = {
    scalar::matvec, scalar::matvec_acc, scalar::matvec_t_acc, scalar::ger_acc,
    scalar::dot,    scalar::axpy,       scalar::sum,          scalar::sumsq,
    scalar::sq_diff_sum, scalar::acc_moments,
};

}  // namespace detail

namespace {

std::atomic<const detail::KernelTable*> g_table{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

const detail::KernelTable& table() {
  const detail::KernelTable* t = g_table.load(std::memory_order_acquire);
  if (t == nullptr) {
    select_best_backend();
    t = g_table.load(std::memory_order_acquire);
  }
  return *t;
}

}  // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
  }
  return "?";
}

bool backend_available(Backend b) {
  if (b == Backend::scalar) return true;
  return detail::avx2_supported() && detail::avx2_table() != nullptr;
}

Backend active_backend() {
  table();  // force init
  return g_backend.load(std::memory_order_acquire);
}

bool set_backend(Backend b) {
  if (!backend_available(b)) return false;
  const detail::KernelTable* t =
      b == Backend::avx2 ? detail::avx2_table() : &detail::kScalarTable;
  g_table.store(t, std::memory_order_release);
  g_backend.store(b, std::memory_order_release);
  return true;
}

void select_best_backend() {
  if (!set_backend(Backend::avx2)) set_backend(Backend::scalar);
}

void matvec(const double* w, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
  table().matvec(w, rows, cols, x, y);
}

void matvec_acc(const double* w, std::size_t rows, std::size_t cols,
                const double* x, double* y) {
  table().matvec_acc(w, rows, cols, x, y);
}

void matvec_t_acc(const double* w, std::size_t rows, std::size_t cols,
                  const double* dy, double* dx) {
  table().matvec_t_acc(w, rows, cols, dy, dx);
}

void ger_acc(double* w, std::size_t rows, std::size_t cols,
             const double* dy, const double* x) {
  table().ger_acc(w, rows, cols, dy, x);
}

double dot(const double* a, const double* b, std::size_t n) {
  return table().dot(a, b, n);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  table().axpy(a, x, y, n);
}

double sum(const double* x, std::size_t n) { return table().sum(x, n); }

double sumsq(const double* x, std::size_t n) { return table().sumsq(x, n); }

double sq_diff_sum(const double* a, const double* b, std::size_t n) {
  return table().sq_diff_sum(a, b, n);
}

void acc_moments(const double* x, std::size_t n, double* sum_acc, double* sq_acc) {
  table().acc_moments(x, n, sum_acc, sq_acc);
}

}  // namespace f0lab::kernels
