#pragma once

#include <cstddef>

namespace rha::kernels {

struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*max)(const double*, std::size_t);
  void (*add)(const double*, const double*, double*, std::size_t);
  void (*sub)(const double*, const double*, double*, std::size_t);
  void (*mul)(const double*, const double*, double*, std::size_t);
  void (*scale)(const double*, double, double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*relu)(const double*, double*, std::size_t);
};

const KernelTable& scalar_table();
#ifdef RHA_KERNELS_AVX2
const KernelTable& avx2_table();
#endif
#ifdef RHA_KERNELS_NEON
const KernelTable& neon_table();
#endif

}  // namespace rha::kernels
