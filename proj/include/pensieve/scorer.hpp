#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pensieve/kernels.hpp"
#include "pensieve/logits.hpp"

namespace pensieve {

// A visual conditioning input. The toy scorer consumes `vec`; the trace
// scorer keys on `id` alone.
struct VisualInput {
  std::string id;
  std::vector<double> vec;
};

// The conditional scorer standing in for the model: deterministic, stateless
// across calls, fixed vocabulary. The decoder varies only `visual` between
// the per-step calls; `context` is shared verbatim.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual LogitsVector score(const VisualInput& visual,
                             std::span<const int> context) const = 0;
  virtual const std::vector<std::string>& vocabulary() const = 0;
  virtual std::optional<int> eos_id() const { return std::nullopt; }

  int vocab_size() const { return static_cast<int>(vocabulary().size()); }
  // id of a token name, or -1 when absent
  int token_id(const std::string& name) const;
};

struct ToyScorerParams {
  int vocab_size = 128;
  int visual_dim = 32;
  std::uint64_t seed = 0;
  double context_decay = 0.9;
};

// Affine scorer: logits = W_v * visual + W_c * bag(context) + b, with
// bag weighting position p of an L-token context by decay^(L-1-p). Linearity
// makes the base - txt decomposition exact. Token 0 is the end token.
class ToyScorer : public Scorer {
 public:
  explicit ToyScorer(const ToyScorerParams& params,
                     kernels::Mode mode = kernels::default_mode());

  LogitsVector score(const VisualInput& visual,
                     std::span<const int> context) const override;
  const std::vector<std::string>& vocabulary() const override { return vocab_; }
  std::optional<int> eos_id() const override { return 0; }

 private:
  ToyScorerParams params_;
  kernels::Mode mode_;
  std::vector<std::string> vocab_;
  std::vector<double> w_visual_;   // V x d row-major
  std::vector<double> w_context_;  // V x V row-major
  std::vector<double> bias_;       // V
};

// Recorded logits: per (visual_id, step), scores for named candidates; all
// other candidates take the fill value (explicit, or per-entry min named
// score minus 10).
class LogitTrace {
 public:
  // JSON Lines: a header object {vocabulary, fill_value?, eos?} followed by
  // one {visual_id, step, scores} object per entry.
  static LogitTrace load_jsonl(const std::string& path);

  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const std::optional<std::string>& eos_token() const { return eos_; }

  // Full logits vector for one entry; unknown (visual_id, step) is an error.
  LogitsVector logits_for(const std::string& visual_id, int step) const;

 private:
  struct Entry {
    std::vector<std::pair<int, double>> scores;  // token id -> score
    double fill = 0.0;
  };

  std::vector<std::string> vocabulary_;
  std::optional<double> fill_value_;
  std::optional<std::string> eos_;
  std::map<std::pair<std::string, int>, Entry> entries_;
};

// Replays a LogitTrace. The step index is derived from the context length:
// step = len(context) - base_context_length, so every one of the k+2 calls
// at a decoding step reads the same step regardless of which visual it is.
class TraceScorer : public Scorer {
 public:
  TraceScorer(LogitTrace trace, int base_context_length = 0);

  LogitsVector score(const VisualInput& visual,
                     std::span<const int> context) const override;
  const std::vector<std::string>& vocabulary() const override {
    return trace_.vocabulary();
  }
  std::optional<int> eos_id() const override { return eos_id_; }

 private:
  LogitTrace trace_;
  int base_context_length_;
  std::optional<int> eos_id_;
};

}  // namespace pensieve
