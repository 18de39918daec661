#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pensieve/logits.hpp"
#include "pensieve/scorer.hpp"

namespace pensieve {

enum class Strategy { Greedy, Sample, TopK, Nucleus };

inline constexpr int kTopKCandidates = 50;
inline constexpr double kNucleusMass = 0.9;

Strategy strategy_from_string(const std::string& name);
std::string strategy_to_string(Strategy strategy);

struct DecodeConfig {
  double alpha_tau = 1.0;
  double beta_d = 0.1;
  double beta_nn = 0.1;
  int k = 4;
  int m = 50;
  int diffusion_step = 900;
  std::optional<double> jsd_threshold;  // unset: gate disabled
  Strategy strategy = Strategy::Greedy;
  int max_tokens = 64;
  std::uint64_t seed = 0;
  // base-only decoding over the same head-masked candidate set, for A/B runs
  bool baseline = false;

  void validate() const;

  // flat key-value JSON document
  static DecodeConfig from_json_file(const std::string& path);
  std::string to_json() const;
};

// Everything recorded about one decoding step. Columns are parallel to
// `candidates` (head order: descending base score; plus a trailing re-admitted
// end token when it fell outside the head). Missing quantities (baseline
// runs; per-head values on the re-admitted row) are NaN and render as empty
// CSV cells.
struct StepBreakdown {
  int step = 0;
  std::vector<int> candidates;
  std::vector<double> base;
  std::vector<double> txt;
  std::vector<double> img;
  std::vector<std::vector<double>> knn;  // knn[j] parallel to candidates
  std::vector<double> knn_mean;
  std::vector<double> l_delta;
  std::vector<double> combined;
  double p_star = 0.0;
  double alpha_d = 0.0;
  double alpha_nn = 0.0;
  double jsd_value = 0.0;
  bool gated = false;
  int chosen = -1;
};

struct DecodeOutput {
  std::vector<int> tokens;    // includes the terminating end token if hit
  std::string text;           // space-joined token names, end token omitted
  std::vector<StepBreakdown> steps;
  DecodeConfig config;
};

// The visual conditioning for one decode session: test input, its diffused
// counterpart, and the k retrieved references, in fixed order.
struct DecodeVisuals {
  VisualInput test;
  VisualInput diffused;
  std::vector<VisualInput> knn;
};

// One retrospect-then-compare step: k+2 scorer calls in the identical
// context, head vocabulary from base, adaptive coefficients, contrast,
// JSD gate, selection.
std::pair<int, StepBreakdown> decode_step(const Scorer& scorer,
                                          const DecodeVisuals& visuals,
                                          std::span<const int> context,
                                          const DecodeConfig& cfg, int step);

// Token choice over the finite entries of `combined`. Sampling strategies
// draw from a per-step substream of the run seed.
int select_token(const LogitsVector& combined, Strategy strategy,
                 std::uint64_t seed, int step);

DecodeOutput decode_sequence(const Scorer& scorer, const DecodeVisuals& visuals,
                             std::span<const int> prompt,
                             const DecodeConfig& cfg);

// ---- breakdown persistence and analysis ----

// columns: step, candidate, base, txt, img, knn_1..knn_k, knn_mean, l_delta,
// jsd, alpha_d, alpha_nn, combined, chosen
void write_breakdown_csv(std::ostream& os, const DecodeOutput& output,
                         const Scorer& scorer);

struct BreakdownRow {
  int step = 0;
  std::string candidate;
  double base, txt, img, knn_mean, l_delta, jsd_value, alpha_d, alpha_nn,
      combined;
  std::vector<double> knn;
  bool chosen = false;
};

struct BreakdownTable {
  int k = 0;
  std::vector<BreakdownRow> rows;
};

BreakdownTable read_breakdown_csv(std::istream& is);
BreakdownTable to_breakdown_table(const DecodeOutput& output,
                                  const Scorer& scorer);

// Per-step table of the top_n candidates by base score.
BreakdownTable analyze(const BreakdownTable& table, int top_n);

void render_breakdown_csv(std::ostream& os, const BreakdownTable& table);
// One table per step; `color` highlights the chosen row with ANSI codes.
void render_breakdown_markdown(std::ostream& os, const BreakdownTable& table,
                               bool color = false);

}  // namespace pensieve
