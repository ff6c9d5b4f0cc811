#include <cmath>
#include <vector>

#include "doctest.h"
#include "nnf/random.hpp"
#include "nnf/simd/kernels.hpp"

using namespace nnf;

namespace {

std::vector<const simd::KernelTable*> vector_tables() {
  std::vector<const simd::KernelTable*> out;
  if (auto* t = simd::avx2_table()) out.push_back(t);
  if (auto* t = simd::neon_table()) out.push_back(t);
  return out;
}

std::vector<double> draw(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-3.0, 3.0);
  return v;
}

// Reassociation bound for a length-n reduction of terms whose magnitudes sum to `mag`.
double bound(double mag, std::size_t n) { return 4.0 * static_cast<double>(n + 1) * 0x1.0p-52 * mag + 1e-300; }

}  // namespace

TEST_CASE("scalar table is always available and reports its isa") {
  CHECK(simd::scalar_table().isa == simd::Isa::scalar);
  CHECK(simd::isa_name(simd::Isa::avx2) == "avx2");
}

TEST_CASE("vector kernels agree with the scalar reference") {
  const auto& ref = simd::scalar_table();
  Rng rng(11);
  for (const auto* t : vector_tables()) {
    CAPTURE(simd::isa_name(t->isa));
    for (std::size_t n = 0; n < 70; ++n) {
      const auto a = draw(rng, n), b = draw(rng, n);
      double mag_ab = 0, mag_a = 0, mag_a2 = 0;
      for (std::size_t i = 0; i < n; ++i) {
        mag_ab += std::fabs(a[i] * b[i]);
        mag_a += std::fabs(a[i]);
        mag_a2 += a[i] * a[i];
      }
      CHECK(std::fabs(t->dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <= bound(mag_ab, n));
      CHECK(std::fabs(t->sum(a.data(), n) - ref.sum(a.data(), n)) <= bound(mag_a, n));
      CHECK(std::fabs(t->abs_sum(a.data(), n) - ref.abs_sum(a.data(), n)) <= bound(mag_a, n));
      CHECK(std::fabs(t->sum_squares(a.data(), n) - ref.sum_squares(a.data(), n)) <= bound(mag_a2, n));
      const double c = 0.25;
      double mag_dev = 0;
      for (double x : a) mag_dev += (x - c) * (x - c);
      CHECK(std::fabs(t->sum_sq_dev(a.data(), n, c) - ref.sum_sq_dev(a.data(), n, c)) <= bound(mag_dev, n));

      auto y1 = b, y2 = b;
      t->axpy(1.7, a.data(), y1.data(), n);
      ref.axpy(1.7, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::fabs(y1[i] - y2[i]) <= 1e-15 * (std::fabs(1.7 * a[i]) + std::fabs(b[i])));

      auto x1 = a, x2 = a, z1 = b, z2 = b;
      t->rotate(x1.data(), z1.data(), 0.6, 0.8, n);
      ref.rotate(x2.data(), z2.data(), 0.6, 0.8, n);
      for (std::size_t i = 0; i < n; ++i) {
        const double m = std::fabs(a[i]) + std::fabs(b[i]);
        CHECK(std::fabs(x1[i] - x2[i]) <= 1e-15 * m);
        CHECK(std::fabs(z1[i] - z2[i]) <= 1e-15 * m);
      }
    }
  }
}

TEST_CASE("override routes calls through the requested table") {
  simd::override_table(&simd::scalar_table());
  CHECK(simd::active().isa == simd::Isa::scalar);
  const std::vector<double> v{1, 2, 3};
  CHECK(simd::sum(v) == 6.0);
  simd::override_table(nullptr);
}
