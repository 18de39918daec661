#include "pensieve/diffusion.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "pensieve/errors.hpp"
#include "pensieve/rng.hpp"

namespace pensieve {

using nlohmann::json;

DiffusionSchedule DiffusionSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ContractError("schedule: at least one beta required");
  DiffusionSchedule s;
  s.betas = std::move(betas);
  s.alphas.reserve(s.betas.size());
  s.alpha_bars.reserve(s.betas.size());
  double prod = 1.0;
  for (double beta : s.betas) {
    if (!(beta >= 0.0 && beta < 1.0))
      throw ContractError("schedule: beta must be in [0, 1)");
    const double alpha = 1.0 - beta;
    prod *= alpha;
    s.alphas.push_back(alpha);
    s.alpha_bars.push_back(prod);
  }
  return s;
}

DiffusionSchedule linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw ContractError("linear_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ContractError("linear_schedule: need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(T));
  if (T == 1) {
    betas[0] = beta_start;
  } else {
    const double step = (beta_end - beta_start) / (T - 1);
    for (int i = 0; i < T; ++i) betas[static_cast<std::size_t>(i)] = beta_start + step * i;
  }
  return DiffusionSchedule::from_betas(std::move(betas));
}

void Tensor::validate() const {
  std::size_t prod = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw ContractError("tensor: negative dimension");
    prod *= static_cast<std::size_t>(d);
  }
  if (prod != values.size())
    throw ContractError("tensor: shape product does not match value count");
}

Tensor Tensor::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  json obj;
  try {
    obj = json::parse(is);
  } catch (const json::exception& e) {
    throw ContractError("tensor file '" + path + "': " + e.what());
  }
  Tensor t;
  try {
    t.shape = obj.at("shape").get<std::vector<std::int64_t>>();
    t.values = obj.at("values").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ContractError("tensor file '" + path + "': " + e.what());
  }
  t.validate();
  return t;
}

void Tensor::to_json_file(const std::string& path) const {
  json obj;
  obj["shape"] = shape;
  obj["values"] = values;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << obj.dump() << '\n';
  if (!os) throw IoError("write failed for '" + path + "'");
}

Tensor diffuse(const Tensor& x0, int t, const DiffusionSchedule& schedule,
               std::uint64_t seed, kernels::Mode mode) {
  x0.validate();
  if (x0.values.empty()) throw ContractError("diffuse: empty tensor");
  if (t < 1 || t > schedule.T())
    throw ContractError("diffuse: t out of range 1.." +
                        std::to_string(schedule.T()));
  const double abar = schedule.alpha_bars[static_cast<std::size_t>(t - 1)];
  Tensor out;
  out.shape = x0.shape;
  if (abar == 1.0) {
    out.values = x0.values;
    return out;
  }
  const std::size_t n = x0.values.size();
  std::vector<double> noise(n);
  const CounterRng rng(seed, streams::kDiffusionNoise);
  kernels::gaussian_fill(mode, rng, n, noise.data());
  out.values.resize(n);
  kernels::scale_add(mode, std::sqrt(abar), x0.values.data(),
                     std::sqrt(1.0 - abar), noise.data(), n, out.values.data());
  return out;
}

}  // namespace pensieve
