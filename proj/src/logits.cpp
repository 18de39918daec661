#include "pensieve/logits.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pensieve/errors.hpp"

namespace pensieve {

bool HeadVocab::contains(int candidate) const {
  return std::find(indices.begin(), indices.end(), candidate) != indices.end();
}

std::vector<double> softmax_over(std::span<const double> scores,
                                 std::span<const int> subset) {
  if (subset.empty()) throw ContractError("softmax_over: empty subset");
  double hi = kMasked;
  for (int i : subset) {
    if (i < 0 || static_cast<std::size_t>(i) >= scores.size())
      throw ContractError("softmax_over: subset index out of range");
    const double s = scores[i];
    if (std::isnan(s)) throw ContractError("softmax_over: NaN score");
    hi = std::max(hi, s);
  }
  if (!std::isfinite(hi))
    throw ContractError("softmax_over: no finite score in subset");
  std::vector<double> out;
  out.reserve(subset.size());
  double sum = 0.0;
  for (int i : subset) {
    const double e = std::exp(scores[i] - hi);
    out.push_back(e);
    sum += e;
  }
  for (double& p : out) p /= sum;
  return out;
}

HeadVocab head_vocab(const LogitsVector& base, int m) {
  if (m < 1) throw ContractError("head_vocab: m must be >= 1");
  const int v = static_cast<int>(base.size());
  if (v == 0) throw ContractError("head_vocab: empty logits");
  std::vector<int> order(base.size());
  std::iota(order.begin(), order.end(), 0);
  const int take = std::min(m, v);
  std::partial_sort(order.begin(), order.begin() + take, order.end(),
                    [&](int a, int b) {
                      if (base[a] != base[b]) return base[a] > base[b];
                      return a < b;
                    });
  order.resize(take);
  HeadVocab head;
  head.indices = std::move(order);
  head.m = m;
  head.cutoff = base[head.indices.back()];
  return head;
}

LogitsVector mask_to_head(const LogitsVector& scores, const HeadVocab& head) {
  LogitsVector out(scores.size(), kMasked);
  for (int i : head.indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= scores.size())
      throw ContractError("mask_to_head: head index out of range");
    out[i] = scores[i];
  }
  return out;
}

LogitsVector img_scores(const LogitsVector& base, const LogitsVector& txt) {
  if (base.size() != txt.size())
    throw ContractError("img_scores: length mismatch");
  LogitsVector out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] - txt[i];
  return out;
}

AdaptiveResult adaptive_coefficients(const LogitsVector& base,
                                     const LogitsVector& diffused,
                                     const HeadVocab& head, double beta_d,
                                     double beta_nn) {
  if (head.indices.empty()) throw ContractError("adaptive_coefficients: empty head");
  if (base.size() != diffused.size())
    throw ContractError("adaptive_coefficients: length mismatch");
  if (beta_d < 0.0 || beta_nn < 0.0)
    throw ContractError("adaptive_coefficients: negative beta");
  AdaptiveResult r;
  r.l_delta.reserve(head.indices.size());
  for (int i : head.indices) r.l_delta.push_back(base[i] - diffused[i]);
  std::vector<int> all(r.l_delta.size());
  std::iota(all.begin(), all.end(), 0);
  const std::vector<double> probs = softmax_over(r.l_delta, all);
  r.p_star = *std::max_element(probs.begin(), probs.end());
  r.alpha_d = beta_d * std::exp(r.p_star);
  r.alpha_nn = beta_nn * std::exp(1.0 - r.p_star);
  return r;
}

LogitsVector contrast(const LogitsVector& base,
                      const std::vector<LogitsVector>& knn,
                      const LogitsVector& diffused, const AdaptiveCoeffs& coeffs,
                      const HeadVocab& head) {
  if (knn.empty()) throw ContractError("contrast: empty reference list");
  if (base.size() != diffused.size())
    throw ContractError("contrast: length mismatch");
  for (const LogitsVector& r : knn) {
    if (r.size() != base.size()) throw ContractError("contrast: length mismatch");
  }
  const double k = static_cast<double>(knn.size());
  const double scale = coeffs.alpha_tau + coeffs.alpha_d + coeffs.alpha_nn;
  LogitsVector out(base.size(), kMasked);
  for (int i : head.indices) {
    double ref_sum = 0.0;
    for (const LogitsVector& r : knn) ref_sum += r[i];
    out[i] = scale * base[i] - (coeffs.alpha_nn / k) * ref_sum -
             coeffs.alpha_d * diffused[i];
  }
  return out;
}

namespace {

// KL(p || q) in nats with the 0 * ln 0 = 0 convention. q_i is never zero
// where p_i > 0 for the mixture arguments used below.
double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) acc += p[i] * std::log(p[i] / q[i]);
  }
  return acc;
}

}  // namespace

double jsd_distributions(std::span<const double> p, std::span<const double> q) {
  if (p.empty() || p.size() != q.size())
    throw ContractError("jsd_distributions: length mismatch");
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * (kl_divergence(p, m) + kl_divergence(q, m));
}

double jsd(const LogitsVector& p_logits, const LogitsVector& q_logits,
           const HeadVocab& head) {
  const std::vector<double> p = softmax_over(p_logits, head.indices);
  const std::vector<double> q = softmax_over(q_logits, head.indices);
  return jsd_distributions(p, q);
}

}  // namespace pensieve
