// Times each data-parallel kernel in Serial and Parallel mode on a fixed
// workload and checks that the two modes produce bit-identical output.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "pensieve/kernels.hpp"
#include "pensieve/rng.hpp"

namespace {

using pensieve::CounterRng;
namespace kernels = pensieve::kernels;

double time_best_ms(int reps, const std::function<void()>& fn) {
  fn();  // warm up
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    const double ms =
        std::chrono::duration<double, std::milli>(stop - start).count();
    if (ms < best) best = ms;
  }
  return best;
}

bool report(const char* name, const char* size, int reps,
            const std::function<void(kernels::Mode, double*)>& run,
            std::size_t out_n) {
  std::vector<double> serial(out_n), parallel(out_n);
  const double serial_ms =
      time_best_ms(reps, [&] { run(kernels::Mode::Serial, serial.data()); });
  const double parallel_ms = time_best_ms(
      reps, [&] { run(kernels::Mode::Parallel, parallel.data()); });
  const bool match = std::memcmp(serial.data(), parallel.data(),
                                 out_n * sizeof(double)) == 0;
  std::printf("%-14s %-18s %10.3f %10.3f %9.2fx   %s\n", name, size, serial_ms,
              parallel_ms, serial_ms / parallel_ms,
              match ? "bit-identical" : "MISMATCH");
  return match;
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  if (argc > 1) reps = std::atoi(argv[1]);
  if (reps < 1) {
    std::fprintf(stderr, "usage: %s [reps >= 1]\n", argv[0]);
    return 2;
  }

  const CounterRng init(42, 0xbe7c);
  bool ok = true;

  {
    const std::size_t count = 20000, dim = 256;
    std::vector<float> records(count * dim);
    std::vector<double> query(dim);
    for (std::size_t i = 0; i < records.size(); ++i)
      records[i] = static_cast<float>(init.normal(i));
    for (std::size_t i = 0; i < dim; ++i)
      query[i] = init.normal(records.size() + i);
    ok &= report("inner_products", "20000x256", reps,
                 [&](kernels::Mode mode, double* out) {
                   kernels::inner_products(mode, records.data(), count, dim,
                                           query.data(), out);
                 },
                 count);
  }

  {
    const std::size_t rows = 2000, cols = 2000;
    std::vector<double> w(rows * cols), x(cols);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = init.normal(i);
    for (std::size_t i = 0; i < cols; ++i) x[i] = init.normal(w.size() + i);
    ok &= report("matvec", "2000x2000", reps,
                 [&](kernels::Mode mode, double* out) {
                   kernels::matvec(mode, w.data(), rows, cols, x.data(), out);
                 },
                 rows);
  }

  {
    const std::size_t n = 4'000'000;
    const CounterRng noise(7, 0x6e6f6973);
    ok &= report("gaussian_fill", "4000000", reps,
                 [&](kernels::Mode mode, double* out) {
                   kernels::gaussian_fill(mode, noise, n, out);
                 },
                 n);
  }

  {
    const std::size_t n = 4'000'000;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = init.uniform(i);
      y[i] = init.uniform(n + i);
    }
    ok &= report("scale_add", "4000000", reps,
                 [&](kernels::Mode mode, double* out) {
                   kernels::scale_add(mode, 0.777, x.data(), 0.223, y.data(), n,
                                      out);
                 },
                 n);
  }

  if (!ok) {
    std::fprintf(stderr, "serial/parallel outputs differ\n");
    return 1;
  }
  return 0;
}
