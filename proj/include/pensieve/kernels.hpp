#pragma once

#include <cstddef>

#include "pensieve/rng.hpp"

namespace pensieve::kernels {

// Execution mode for the data-parallel kernels below. Serial is the reference
// implementation; Parallel runs the same per-element arithmetic under OpenMP.
// Every kernel writes each output slot with a fixed operation order that does
// not depend on thread count, so the two modes are bit-identical.
enum class Mode { Serial, Parallel };

// Parallel when built with OpenMP, Serial otherwise.
Mode default_mode();

// out[r] = dot(records[r*dim .. (r+1)*dim), query), accumulated in double
// with ascending component order. Parallel over records.
void inner_products(Mode mode, const float* records, std::size_t count,
                    std::size_t dim, const double* query, double* out);

// out[r] = dot(w[r*cols .. (r+1)*cols), x). Parallel over rows.
void matvec(Mode mode, const double* w, std::size_t rows, std::size_t cols,
            const double* x, double* out);

// out[i] = rng.normal(i). Parallel over i; draws are counter-indexed so the
// fill order cannot change the values.
void gaussian_fill(Mode mode, const CounterRng& rng, std::size_t n,
                   double* out);

// out[i] = a * x[i] + b * y[i]. Parallel over i.
void scale_add(Mode mode, double a, const double* x, double b, const double* y,
               std::size_t n, double* out);

}  // namespace pensieve::kernels
