#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rha/kernels.hpp"
#include "rha/rng.hpp"

using namespace rha;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

}  // namespace

TEST_CASE("scalar results on fixed inputs") {
  kernels::force_backend(kernels::Backend::kScalar);
  const double a[] = {1.0, -2.0, 3.0};
  const double b[] = {4.0, 5.0, -6.0};
  CHECK(kernels::dot(a, b, 3) == doctest::Approx(1 * 4 - 2 * 5 - 3 * 6));
  CHECK(kernels::sum(a, 3) == doctest::Approx(2.0));
  CHECK(kernels::max(a, 3) == 3.0);
  double out[3];
  kernels::relu(a, out, 3);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 3.0);
}

TEST_CASE("simd variants match the scalar reference") {
  const auto simd = []() -> std::vector<kernels::Backend> {
    std::vector<kernels::Backend> v;
    for (auto b : {kernels::Backend::kAvx2, kernels::Backend::kNeon}) {
      try {
        kernels::force_backend(b);
        v.push_back(b);
      } catch (const std::runtime_error&) {
      }
    }
    return v;
  }();
  if (simd.empty()) {
    MESSAGE("no SIMD backend on this host, scalar only");
    return;
  }

  Rng rng(0x5EED);
  // sizes straddle the vector width so tails get exercised
  for (std::size_t n : {1, 2, 3, 4, 5, 7, 8, 9, 16, 31, 64, 67, 256}) {
    auto a = random_vec(rng, n, 3.0);
    auto b = random_vec(rng, n, 3.0);
    const double alpha = rng.uniform(-2.0, 2.0);

    kernels::force_backend(kernels::Backend::kScalar);
    std::vector<double> add_ref(n), sub_ref(n), mul_ref(n), scale_ref(n), relu_ref(n), axpy_ref(b);
    kernels::add(a.data(), b.data(), add_ref.data(), n);
    kernels::sub(a.data(), b.data(), sub_ref.data(), n);
    kernels::mul(a.data(), b.data(), mul_ref.data(), n);
    kernels::scale(a.data(), alpha, scale_ref.data(), n);
    kernels::relu(a.data(), relu_ref.data(), n);
    kernels::axpy(alpha, a.data(), axpy_ref.data(), n);
    const double dot_ref = kernels::dot(a.data(), b.data(), n);
    const double sum_ref = kernels::sum(a.data(), n);
    const double max_ref = kernels::max(a.data(), n);

    for (auto backend : simd) {
      kernels::force_backend(backend);
      CAPTURE(kernels::backend_name(backend));
      CAPTURE(n);
      std::vector<double> got(n);
      kernels::add(a.data(), b.data(), got.data(), n);
      CHECK(got == add_ref);
      kernels::sub(a.data(), b.data(), got.data(), n);
      CHECK(got == sub_ref);
      kernels::mul(a.data(), b.data(), got.data(), n);
      CHECK(got == mul_ref);
      kernels::scale(a.data(), alpha, got.data(), n);
      CHECK(got == scale_ref);
      kernels::relu(a.data(), got.data(), n);
      CHECK(got == relu_ref);
      got = b;
      kernels::axpy(alpha, a.data(), got.data(), n);
      CHECK(got == axpy_ref);
      CHECK(kernels::max(a.data(), n) == max_ref);
      // reductions reassociate, so compare within a tight tolerance
      CHECK(kernels::dot(a.data(), b.data(), n) ==
            doctest::Approx(dot_ref).epsilon(1e-13));
      CHECK(kernels::sum(a.data(), n) == doctest::Approx(sum_ref).epsilon(1e-13));
    }
  }
  kernels::force_backend(kernels::Backend::kScalar);
}

TEST_CASE("forcing an unavailable backend throws") {
#ifndef __aarch64__
  CHECK_THROWS_AS(kernels::force_backend(kernels::Backend::kNeon), std::runtime_error);
#endif
  kernels::force_backend(kernels::Backend::kScalar);
  CHECK(kernels::active_backend() == kernels::Backend::kScalar);
}
