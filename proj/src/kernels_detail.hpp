#pragma once

#include <cstddef>

// Internal dispatch table shared by kernels.cpp and kernels_avx2.cpp.
namespace f0lab::kernels::detail {

struct KernelTable {
  void (*matvec)(const double*, std::size_t, std::size_t, const double*, double*);
  void (*matvec_acc)(const double*, std::size_t, std::size_t, const double*, double*);
  void (*matvec_t_acc)(const double*, std::size_t, std::size_t, const double*, double*);
  void (*ger_acc)(double*, std::size_t, std::size_t, const double*, const double*);
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*sumsq)(const double*, std::size_t);
  double (*sq_diff_sum)(const double*, const double*, std::size_t);
  void (*acc_moments)(const double*, std::size_t, double*, double*);
};

extern const KernelTable kScalarTable;

// Null on non-x86 builds.
const KernelTable* avx2_table();
bool avx2_supported();

}  // namespace f0lab::kernels::detail
