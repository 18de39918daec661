#pragma once

#include <span>
#include <string>
#include <vector>

namespace pensieve {

enum class Verdict { Yes, No, Unknown };

// Case-insensitive substring search; exactly one of "yes"/"no" present gives
// that label, both or neither is Unknown (always scored as incorrect).
Verdict parse_yes_no(const std::string& text);

struct VqaSample {
  std::string image_id;
  std::string question;
  Verdict gold = Verdict::Unknown;  // binary in valid data: Yes or No
  std::string prediction;
};

// Positive class is "yes". An Unknown prediction is wrong for accuracy and a
// miss for the positive class (false negative when gold is yes) but never a
// false positive.
struct PopeMetrics {
  long tp = 0, fp = 0, fn = 0, tn = 0, unknown = 0, total = 0;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

PopeMetrics pope_metrics(std::span<const VqaSample> samples);

// Per-subtask score: accuracy over questions, accuracy_plus over images
// (both questions of the pair correct), combined = 100*acc + 100*acc_plus.
struct SubtaskScore {
  double accuracy = 0.0, accuracy_plus = 0.0, combined = 0.0;
  long n_questions = 0, n_images = 0, n_correct = 0, n_pairs_correct = 0;
};

// Samples grouped by image_id; every image must carry exactly two questions.
SubtaskScore mme_score(std::span<const VqaSample> samples);

// JSON Lines, one {image_id, question, gold, prediction} object per line;
// gold must be literally yes or no (case-insensitive).
std::vector<VqaSample> load_vqa_jsonl(const std::string& path);

std::string pope_report_json(const PopeMetrics& m);
std::string pope_report_markdown(const PopeMetrics& m);
std::string mme_report_json(const SubtaskScore& s);
std::string mme_report_markdown(const SubtaskScore& s);

}  // namespace pensieve
