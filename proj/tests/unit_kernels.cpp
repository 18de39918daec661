#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "pensieve/kernels.hpp"
#include "pensieve/rng.hpp"

using pensieve::CounterRng;
namespace kernels = pensieve::kernels;

namespace {

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("counter rng is a pure function of seed, stream, counter") {
  const CounterRng a(1, 2), b(1, 2);
  for (std::uint64_t c : {0ull, 1ull, 17ull, 1ull << 40}) {
    CHECK(a.word(c) == b.word(c));
    CHECK(a.uniform(c) == b.uniform(c));
    CHECK(a.normal(c) == b.normal(c));
  }
  // any counter is addressable without drawing earlier ones
  CHECK(a.word(1000) == CounterRng(1, 2).word(1000));
}

TEST_CASE("counter rng separates seeds and streams") {
  const CounterRng base(1, 2);
  CHECK(base.word(0) != CounterRng(1, 3).word(0));
  CHECK(base.word(0) != CounterRng(2, 2).word(0));
}

TEST_CASE("uniform draws live in the unit interval") {
  const CounterRng rng(99, 7);
  for (std::uint64_t c = 0; c < 10000; ++c) {
    const double u = rng.uniform(c);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("normal draws are finite with plausible moments") {
  const CounterRng rng(42, 0);
  const std::size_t n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const double x = rng.normal(c);
    REQUIRE(std::isfinite(x));
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);       // ~6 sigma of the sample mean
  CHECK(std::abs(var - 1.0) < 0.03);  // sample variance of 1e5 normals
}

TEST_CASE("inner_products matches an explicit scan in both modes") {
  const std::size_t count = 137, dim = 33;
  const CounterRng rng(3, 1);
  std::vector<float> records(count * dim);
  std::vector<double> query(dim);
  for (std::size_t i = 0; i < records.size(); ++i)
    records[i] = static_cast<float>(rng.normal(i));
  for (std::size_t i = 0; i < dim; ++i)
    query[i] = rng.normal(records.size() + i);

  std::vector<double> expected(count);
  for (std::size_t r = 0; r < count; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i)
      acc += static_cast<double>(records[r * dim + i]) * query[i];
    expected[r] = acc;
  }

  std::vector<double> serial(count), parallel(count);
  kernels::inner_products(kernels::Mode::Serial, records.data(), count, dim,
                          query.data(), serial.data());
  kernels::inner_products(kernels::Mode::Parallel, records.data(), count, dim,
                          query.data(), parallel.data());
  CHECK(bitwise_equal(serial, expected));
  CHECK(bitwise_equal(serial, parallel));
}

TEST_CASE("matvec matches an explicit product in both modes") {
  const std::size_t rows = 61, cols = 47;
  const CounterRng rng(4, 1);
  std::vector<double> w(rows * cols), x(cols);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(i);
  for (std::size_t i = 0; i < cols; ++i) x[i] = rng.normal(w.size() + i);

  std::vector<double> expected(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < cols; ++i) acc += w[r * cols + i] * x[i];
    expected[r] = acc;
  }

  std::vector<double> serial(rows), parallel(rows);
  kernels::matvec(kernels::Mode::Serial, w.data(), rows, cols, x.data(),
                  serial.data());
  kernels::matvec(kernels::Mode::Parallel, w.data(), rows, cols, x.data(),
                  parallel.data());
  CHECK(bitwise_equal(serial, expected));
  CHECK(bitwise_equal(serial, parallel));
}

TEST_CASE("gaussian_fill is bit-identical across modes and indexes draws") {
  const std::size_t n = 4097;
  const CounterRng rng(8, 0x6e6f6973);
  std::vector<double> serial(n), parallel(n);
  kernels::gaussian_fill(kernels::Mode::Serial, rng, n, serial.data());
  kernels::gaussian_fill(kernels::Mode::Parallel, rng, n, parallel.data());
  CHECK(bitwise_equal(serial, parallel));
  for (std::size_t i : {std::size_t{0}, std::size_t{1}, n - 1})
    CHECK(serial[i] == rng.normal(i));
}

TEST_CASE("scale_add is exact and mode-independent") {
  const std::size_t n = 1025;
  const CounterRng rng(5, 9);
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.normal(i);
    y[i] = rng.normal(n + i);
  }
  std::vector<double> expected(n);
  for (std::size_t i = 0; i < n; ++i) expected[i] = 0.3 * x[i] + 0.7 * y[i];

  std::vector<double> serial(n), parallel(n);
  kernels::scale_add(kernels::Mode::Serial, 0.3, x.data(), 0.7, y.data(), n,
                     serial.data());
  kernels::scale_add(kernels::Mode::Parallel, 0.3, x.data(), 0.7, y.data(), n,
                     parallel.data());
  CHECK(bitwise_equal(serial, expected));
  CHECK(bitwise_equal(serial, parallel));
}

TEST_CASE("default mode reflects the build configuration") {
#ifdef PENSIEVE_OPENMP
  CHECK(kernels::default_mode() == kernels::Mode::Parallel);
#else
  CHECK(kernels::default_mode() == kernels::Mode::Serial);
#endif
}
