#pragma once

#include <cstddef>
#include <string>

namespace rha::kernels {

// Vectorized inner loops of the tensor engine. A scalar reference
// implementation always exists; AVX2 (x86-64) and NEON (aarch64) variants
// are selected at runtime when the CPU supports them. All variants operate
// on double precision and are equivalence-tested against the scalar path.
enum class Backend { kScalar, kAvx2, kNeon };

// Backend in use. Resolved once on first kernel call: the widest variant
// the CPU supports, unless the RHA_KERNELS environment variable
// ("scalar", "avx2", "neon") or force_backend() overrides it.
Backend active_backend();

// Throws std::runtime_error if the requested backend is unavailable.
void force_backend(Backend b);

std::string backend_name(Backend b);

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double max(const double* a, std::size_t n);  // n >= 1, finite inputs

void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(const double* a, double alpha, double* out, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);  // y += alpha*x
void relu(const double* a, double* out, std::size_t n);

}  // namespace rha::kernels
