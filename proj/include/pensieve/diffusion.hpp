#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pensieve/kernels.hpp"

namespace pensieve {

// Forward-process noise schedule. alpha_bars[t-1] is the cumulative product
// of (1 - beta_i) for i <= t.
struct DiffusionSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  int T() const { return static_cast<int>(betas.size()); }

  // Accepts betas in [0, 1): a zero beta builds the degenerate schedule with
  // alpha_bar staying at 1 (noiseless identity step).
  static DiffusionSchedule from_betas(std::vector<double> betas);
};

// Linearly interpolated betas, endpoints inclusive; 0 < start <= end < 1.
DiffusionSchedule linear_schedule(int T = 1000, double beta_start = 1e-4,
                                  double beta_end = 0.02);

// Dense row-major tensor; the JSON form is {"shape": [...], "values": [...]}.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  void validate() const;  // shape product must equal value count

  static Tensor from_json_file(const std::string& path);
  void to_json_file(const std::string& path) const;
};

// Closed-form forward noising x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
// with eps drawn from the seeded counter generator. abar_t = 1 returns x0
// bit-exactly. t is 1-based, 1 <= t <= T.
Tensor diffuse(const Tensor& x0, int t, const DiffusionSchedule& schedule,
               std::uint64_t seed, kernels::Mode mode = kernels::default_mode());

}  // namespace pensieve
