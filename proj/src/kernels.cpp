#include "pensieve/kernels.hpp"

#include <cstdint>

namespace pensieve::kernels {

Mode default_mode() {
#ifdef PENSIEVE_OPENMP
  return Mode::Parallel;
#else
  return Mode::Serial;
#endif
}

// Expands to an OpenMP loop pragma whose if-clause reads the local variable
// `mode`: Serial collapses the team to the calling thread. Either way each
// slot is computed by exactly the code in the loop body, so results match.
#ifdef PENSIEVE_OPENMP
#define PENSIEVE_OMP_FOR \
  _Pragma("omp parallel for schedule(static) if (mode == Mode::Parallel)")
#else
#define PENSIEVE_OMP_FOR
#endif

void inner_products(Mode mode, const float* records, std::size_t count,
                    std::size_t dim, const double* query, double* out) {
  (void)mode;
  PENSIEVE_OMP_FOR
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(count); ++r) {
    const float* row = records + static_cast<std::size_t>(r) * dim;
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      acc += static_cast<double>(row[i]) * query[i];
    }
    out[r] = acc;
  }
}

void matvec(Mode mode, const double* w, std::size_t rows, std::size_t cols,
            const double* x, double* out) {
  (void)mode;
  PENSIEVE_OMP_FOR
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
    const double* row = w + static_cast<std::size_t>(r) * cols;
    double acc = 0.0;
    for (std::size_t i = 0; i < cols; ++i) {
      acc += row[i] * x[i];
    }
    out[r] = acc;
  }
}

void gaussian_fill(Mode mode, const CounterRng& rng, std::size_t n,
                   double* out) {
  (void)mode;
  PENSIEVE_OMP_FOR
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    out[i] = rng.normal(static_cast<std::uint64_t>(i));
  }
}

void scale_add(Mode mode, double a, const double* x, double b, const double* y,
               std::size_t n, double* out) {
  (void)mode;
  PENSIEVE_OMP_FOR
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    out[i] = a * x[i] + b * y[i];
  }
}

#undef PENSIEVE_OMP_FOR

}  // namespace pensieve::kernels
