#include "rha/kernels.hpp"

#include <cstdlib>
#include <stdexcept>

#include "table.hpp"

namespace rha::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(RHA_KERNELS_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
      return cpu_has_avx2();
    case Backend::kNeon:
#ifdef RHA_KERNELS_NEON
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend pick_default() {
  if (const char* env = std::getenv("RHA_KERNELS")) {
    std::string v(env);
    if (v == "scalar") return Backend::kScalar;
    if (v == "avx2" && backend_available(Backend::kAvx2)) return Backend::kAvx2;
    if (v == "neon" && backend_available(Backend::kNeon)) return Backend::kNeon;
    // unknown or unavailable value: fall through to auto-detection
  }
  if (backend_available(Backend::kAvx2)) return Backend::kAvx2;
  if (backend_available(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

struct Dispatch {
  Backend backend;
  const KernelTable* table;
  Dispatch() { set(pick_default()); }
  void set(Backend b) {
    backend = b;
    switch (b) {
#ifdef RHA_KERNELS_AVX2
      case Backend::kAvx2:
        table = &avx2_table();
        return;
#endif
#ifdef RHA_KERNELS_NEON
      case Backend::kNeon:
        table = &neon_table();
        return;
#endif
      default:
        table = &scalar_table();
        backend = Backend::kScalar;
        return;
    }
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

Backend active_backend() { return dispatch().backend; }

void force_backend(Backend b) {
  if (!backend_available(b))
    throw std::runtime_error("kernel backend unavailable: " + backend_name(b));
  dispatch().set(b);
}

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

double dot(const double* a, const double* b, std::size_t n) { return dispatch().table->dot(a, b, n); }
double sum(const double* a, std::size_t n) { return dispatch().table->sum(a, n); }
double max(const double* a, std::size_t n) { return dispatch().table->max(a, n); }

void add(const double* a, const double* b, double* out, std::size_t n) { dispatch().table->add(a, b, out, n); }
void sub(const double* a, const double* b, double* out, std::size_t n) { dispatch().table->sub(a, b, out, n); }
void mul(const double* a, const double* b, double* out, std::size_t n) { dispatch().table->mul(a, b, out, n); }
void scale(const double* a, double alpha, double* out, std::size_t n) { dispatch().table->scale(a, alpha, out, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { dispatch().table->axpy(alpha, x, y, n); }
void relu(const double* a, double* out, std::size_t n) { dispatch().table->relu(a, out, n); }

}  // namespace rha::kernels
