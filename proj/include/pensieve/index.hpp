#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "pensieve/kernels.hpp"

namespace pensieve {

// One retrievable reference. Embedding halves are unit vectors after
// build_index / load (ingestion normalizes); appearance may be absent, but
// uniformly so across one index. Captions are stored tokenized.
struct ReferenceRecord {
  std::string id;
  std::vector<double> semantic;
  std::vector<double> appearance;
  std::vector<std::vector<std::string>> captions;
  std::string split = "other";  // train | restval | other
  std::string image_ref;
};

struct RetrievalResult {
  std::string id;
  double similarity = 0.0;
  std::optional<double> rerank_score;
};

// unit vector in the direction of v; zero vector is an error
std::vector<double> l2_normalize(std::span<const double> v);

// Each half L2-normalized independently, then concatenated without
// renormalization, so the inner product of two ensembles is the sum of the
// per-half cosines, in [-2, 2].
std::vector<double> ensemble_embed(std::span<const double> semantic,
                                   std::span<const double> appearance);

// lowercase, strip punctuation, split on whitespace
std::vector<std::string> tokenize_text(const std::string& text);

// Question rewrite for caption-space matching: a leading "Is there /
// Are there / Is this / Is the" becomes "A photo of"; the trailing question
// mark is stripped either way.
std::string narrativize(const std::string& question);

// Clipped modified unigram precision times brevity penalty
// min(1, e^(1 - r/c)). Candidate must be nonempty.
double bleu1(const std::vector<std::string>& candidate,
             const std::vector<std::string>& reference);

// Immutable exact-search store over ensemble embeddings.
class ReferenceIndex {
 public:
  // Takes ownership, normalizes embedding halves, validates unique ids and
  // consistent dimensions (appearance present for all records or none).
  static ReferenceIndex build(std::vector<ReferenceRecord> records);

  std::size_t size() const { return records_.size(); }
  std::size_t semantic_dim() const { return semantic_dim_; }
  std::size_t appearance_dim() const { return appearance_dim_; }
  const std::vector<ReferenceRecord>& records() const { return records_; }
  const ReferenceRecord& record_by_id(const std::string& id) const;

  // Exact inner-product top-k over non-blocklisted records. A query of
  // semantic_dim scans semantic halves only (text-driven retrieval); one of
  // semantic_dim + appearance_dim scans both halves and sums the cosines.
  // Sorted by similarity descending, ties by ascending id.
  std::vector<RetrievalResult> search(
      std::span<const double> query, int k,
      const std::unordered_set<std::string>& blocklist = {},
      kernels::Mode mode = kernels::default_mode()) const;

  void save(const std::string& path) const;
  static ReferenceIndex load(const std::string& path);

 private:
  std::vector<ReferenceRecord> records_;
  std::size_t semantic_dim_ = 0;
  std::size_t appearance_dim_ = 0;
  // scan payloads, row r = records_[r], float32 as persisted
  std::vector<float> semantic_flat_;
  std::vector<float> appearance_flat_;
};

// One JSON object per line: id, semantic_embedding, appearance_embedding
// (optional), captions (array of strings, tokenized on ingestion), split
// (optional), image_ref (optional).
std::vector<ReferenceRecord> load_records_jsonl(const std::string& path);

// rerank_score := max BLEU@1 of the query tokens against each record's
// captions; stable sort descending so equal scores keep retrieval order.
std::vector<RetrievalResult> rerank_by_bleu1(
    std::vector<RetrievalResult> results,
    const std::vector<std::string>& query_tokens, const ReferenceIndex& index);

}  // namespace pensieve
