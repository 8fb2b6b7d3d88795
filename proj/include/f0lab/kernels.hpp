#pragma once

#include <cstddef>

// Dense double-precision kernels shared by the tree, neural and eval code.
// Every kernel has a scalar reference implementation and, on x86-64 with
// AVX2+FMA, a vectorized variant selected at runtime. The two variants are
// equivalence-tested; they may differ only by reduction order (last-ulp).
namespace f0lab::kernels {

enum class Backend { scalar, avx2 };

const char* backend_name(Backend b);
bool backend_available(Backend b);
Backend active_backend();

// Selects a backend for all subsequent kernel calls. Returns false (and
// leaves the selection unchanged) if the backend is unavailable on this CPU.
bool set_backend(Backend b);

// Picks the widest available backend. Called implicitly on first use.
void select_best_backend();

// y = W x, W row-major (rows x cols).
void matvec(const double* w, std::size_t rows, std::size_t cols,
            const double* x, double* y);

// y += W x.
void matvec_acc(const double* w, std::size_t rows, std::size_t cols,
                const double* x, double* y);

// dx += W^T dy.
void matvec_t_acc(const double* w, std::size_t rows, std::size_t cols,
                  const double* dy, double* dx);

// W += dy x^T (rank-1 update, gradient accumulation).
void ger_acc(double* w, std::size_t rows, std::size_t cols,
             const double* dy, const double* x);

double dot(const double* a, const double* b, std::size_t n);

// y += a x.
void axpy(double a, const double* x, double* y, std::size_t n);

double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);

// Sum of (a[i] - b[i])^2.
double sq_diff_sum(const double* a, const double* b, std::size_t n);

// sum_acc[i] += x[i]; sq_acc[i] += x[i]^2. Moment accumulation for
// split scoring.
void acc_moments(const double* x, std::size_t n,
                 double* sum_acc, double* sq_acc);

}  // namespace f0lab::kernels
