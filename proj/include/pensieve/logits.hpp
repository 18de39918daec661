#pragma once

#include <limits>
#include <span>
#include <vector>

namespace pensieve {

// Dense per-candidate confidence scores at one decoding step. Entries are
// finite except where explicitly masked.
using LogitsVector = std::vector<double>;

inline constexpr double kMasked = -std::numeric_limits<double>::infinity();

// Top-m candidate set of a base logits vector. indices are ordered by
// descending base score, ties by ascending candidate index; cutoff is the
// lowest included base score.
struct HeadVocab {
  std::vector<int> indices;
  int m = 0;
  double cutoff = 0.0;

  bool contains(int candidate) const;
};

struct AdaptiveCoeffs {
  double alpha_tau = 0.0;
  double alpha_d = 0.0;
  double alpha_nn = 0.0;
};

// adaptive_coefficients output plus the intermediates the breakdown records.
// l_delta follows head index order.
struct AdaptiveResult {
  double p_star = 0.0;
  double alpha_d = 0.0;
  double alpha_nn = 0.0;
  std::vector<double> l_delta;
};

// Probabilities over `subset`, in subset order, max-subtracted for stability.
// Entries masked to -inf get probability zero; the subset must be nonempty
// and contain at least one finite score.
std::vector<double> softmax_over(std::span<const double> scores,
                                 std::span<const int> subset);

// The min(m, V) highest-scoring candidate indices of `base`.
HeadVocab head_vocab(const LogitsVector& base, int m);

// Copy of `scores` with every candidate outside the head set to -inf.
LogitsVector mask_to_head(const LogitsVector& scores, const HeadVocab& head);

// Visual-branch contribution: elementwise base - txt.
LogitsVector img_scores(const LogitsVector& base, const LogitsVector& txt);

// Confidence-adaptive coefficients from the base/diffused gap on the head:
// p* = max softmax(base - diffused), alpha_d = beta_d * e^(p*),
// alpha_nn = beta_nn * e^(1 - p*).
AdaptiveResult adaptive_coefficients(const LogitsVector& base,
                                     const LogitsVector& diffused,
                                     const HeadVocab& head, double beta_d,
                                     double beta_nn);

// Contrastive combination on the head, -inf elsewhere:
// out_i = (alpha_tau + alpha_d + alpha_nn) * base_i
//         - (alpha_nn / k) * sum_j knn_j_i - alpha_d * diffused_i.
LogitsVector contrast(const LogitsVector& base,
                      const std::vector<LogitsVector>& knn,
                      const LogitsVector& diffused, const AdaptiveCoeffs& coeffs,
                      const HeadVocab& head);

// Jensen-Shannon divergence between two probability vectors, natural log,
// 0 * ln 0 = 0. Range [0, ln 2].
double jsd_distributions(std::span<const double> p, std::span<const double> q);

// JSD between softmax(p_logits) and softmax(q_logits) over the head.
double jsd(const LogitsVector& p_logits, const LogitsVector& q_logits,
           const HeadVocab& head);

}  // namespace pensieve
