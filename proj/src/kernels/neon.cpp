#ifdef RHA_KERNELS_NEON

#include <arm_neon.h>

#include "table.hpp"

namespace rha::kernels {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc2 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc2 = vfmaq_f64(acc2, vld1q_f64(a + i), vld1q_f64(b + i));
  double acc = vgetq_lane_f64(acc2, 0) + vgetq_lane_f64(acc2, 1);
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_neon(const double* a, std::size_t n) {
  float64x2_t acc2 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc2 = vaddq_f64(acc2, vld1q_f64(a + i));
  double acc = vgetq_lane_f64(acc2, 0) + vgetq_lane_f64(acc2, 1);
  for (; i < n; ++i) acc += a[i];
  return acc;
}

double max_neon(const double* a, std::size_t n) {
  std::size_t i = 0;
  double m = a[0];
  if (n >= 2) {
    float64x2_t m2 = vld1q_f64(a);
    for (i = 2; i + 2 <= n; i += 2) m2 = vmaxq_f64(m2, vld1q_f64(a + i));
    m = vmaxvq_f64(m2);
  }
  for (; i < n; ++i)
    if (a[i] > m) m = a[i];
  return m;
}

void add_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_neon(const double* a, double alpha, double* out, std::size_t n) {
  float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), av));
  for (; i < n; ++i) out[i] = a[i] * alpha;
}

// mul then add (no FMA) so results are bit-identical to the scalar path
void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t prod = vmulq_f64(av, vld1q_f64(x + i));
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void relu_neon(const double* a, double* out, std::size_t n) {
  float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmaxq_f64(vld1q_f64(a + i), zero));
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable t = {
      dot_neon, sum_neon, max_neon,   add_neon,  sub_neon,
      mul_neon, scale_neon, axpy_neon, relu_neon,
  };
  return t;
}

}  // namespace rha::kernels

#endif  // RHA_KERNELS_NEON
