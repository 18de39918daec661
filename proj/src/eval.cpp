#include "pensieve/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>

#include "json.hpp"

#include "pensieve/errors.hpp"

namespace pensieve {

using nlohmann::json;

namespace {

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

bool is_correct(const VqaSample& s) {
  return parse_yes_no(s.prediction) == s.gold;
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

Verdict parse_yes_no(const std::string& text) {
  const std::string t = lowercase(text);
  const bool has_yes = t.find("yes") != std::string::npos;
  const bool has_no = t.find("no") != std::string::npos;
  if (has_yes && !has_no) return Verdict::Yes;
  if (has_no && !has_yes) return Verdict::No;
  return Verdict::Unknown;
}

PopeMetrics pope_metrics(std::span<const VqaSample> samples) {
  if (samples.empty()) throw ContractError("pope_metrics: no samples");
  PopeMetrics m;
  for (const VqaSample& s : samples) {
    if (s.gold == Verdict::Unknown)
      throw ContractError("pope_metrics: gold label must be yes or no");
    const Verdict pred = parse_yes_no(s.prediction);
    if (pred == Verdict::Unknown) ++m.unknown;
    if (s.gold == Verdict::Yes) {
      if (pred == Verdict::Yes) ++m.tp;
      else ++m.fn;  // No and Unknown both miss the positive class
    } else {
      if (pred == Verdict::No) ++m.tn;
      else if (pred == Verdict::Yes) ++m.fp;
      // Unknown with gold=no: wrong for accuracy, but not a false positive
    }
  }
  m.total = static_cast<long>(samples.size());
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.total);
  m.precision = (m.tp + m.fp) == 0
                    ? 0.0
                    : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  m.recall = (m.tp + m.fn) == 0
                 ? 0.0
                 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  m.f1 = (m.precision + m.recall) == 0.0
             ? 0.0
             : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

SubtaskScore mme_score(std::span<const VqaSample> samples) {
  if (samples.empty()) throw ContractError("mme_score: no samples");
  std::map<std::string, std::pair<int, int>> groups;  // image -> (count, correct)
  SubtaskScore score;
  for (const VqaSample& s : samples) {
    if (s.gold == Verdict::Unknown)
      throw ContractError("mme_score: gold label must be yes or no");
    auto& [count, correct] = groups[s.image_id];
    ++count;
    if (is_correct(s)) {
      ++correct;
      ++score.n_correct;
    }
  }
  for (const auto& [image_id, counts] : groups) {
    if (counts.first != 2)
      throw ContractError("mme_score: image '" + image_id + "' has " +
                          std::to_string(counts.first) +
                          " questions (exactly 2 required)");
    if (counts.second == 2) ++score.n_pairs_correct;
  }
  score.n_questions = static_cast<long>(samples.size());
  score.n_images = static_cast<long>(groups.size());
  score.accuracy = static_cast<double>(score.n_correct) /
                   static_cast<double>(score.n_questions);
  score.accuracy_plus = static_cast<double>(score.n_pairs_correct) /
                        static_cast<double>(score.n_images);
  score.combined = 100.0 * score.accuracy + 100.0 * score.accuracy_plus;
  return score;
}

std::vector<VqaSample> load_vqa_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::vector<VqaSample> samples;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fail = [&](const std::string& what) -> ContractError {
      return ContractError("vqa line " + std::to_string(lineno) + ": " + what);
    };
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(e.what());
    }
    if (!obj.is_object()) throw fail("expected an object");
    VqaSample s;
    for (const char* key : {"image_id", "question", "gold", "prediction"}) {
      if (!obj.contains(key) || !obj[key].is_string())
        throw fail(std::string("missing string field '") + key + "'");
    }
    s.image_id = obj["image_id"].get<std::string>();
    s.question = obj["question"].get<std::string>();
    s.prediction = obj["prediction"].get<std::string>();
    const std::string gold = lowercase(obj["gold"].get<std::string>());
    if (gold == "yes") s.gold = Verdict::Yes;
    else if (gold == "no") s.gold = Verdict::No;
    else throw fail("gold must be 'yes' or 'no', got '" + gold + "'");
    samples.push_back(std::move(s));
  }
  return samples;
}

std::string pope_report_json(const PopeMetrics& m) {
  json obj;
  obj["metric"] = "pope";
  obj["accuracy"] = m.accuracy;
  obj["precision"] = m.precision;
  obj["recall"] = m.recall;
  obj["f1"] = m.f1;
  obj["counts"] = {{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn},
                   {"unknown", m.unknown}, {"total", m.total}};
  return obj.dump(2) + "\n";
}

std::string pope_report_markdown(const PopeMetrics& m) {
  std::string out = "## Yes/No polling metrics\n\n";
  out += "| metric | value |\n|---|---|\n";
  out += "| accuracy | " + fmt4(m.accuracy) + " |\n";
  out += "| precision | " + fmt4(m.precision) + " |\n";
  out += "| recall | " + fmt4(m.recall) + " |\n";
  out += "| f1 | " + fmt4(m.f1) + " |\n\n";
  out += "TP " + std::to_string(m.tp) + ", FP " + std::to_string(m.fp) +
         ", FN " + std::to_string(m.fn) + ", TN " + std::to_string(m.tn) +
         ", unknown " + std::to_string(m.unknown) + ", total " +
         std::to_string(m.total) + "\n";
  return out;
}

std::string mme_report_json(const SubtaskScore& s) {
  json obj;
  obj["metric"] = "mme";
  obj["accuracy"] = s.accuracy;
  obj["accuracy_plus"] = s.accuracy_plus;
  obj["combined"] = s.combined;
  obj["counts"] = {{"questions", s.n_questions},
                   {"images", s.n_images},
                   {"correct", s.n_correct},
                   {"pairs_correct", s.n_pairs_correct}};
  return obj.dump(2) + "\n";
}

std::string mme_report_markdown(const SubtaskScore& s) {
  std::string out = "## Paired yes/no subtask score\n\n";
  out += "| metric | value |\n|---|---|\n";
  out += "| accuracy | " + fmt4(s.accuracy) + " |\n";
  out += "| accuracy+ | " + fmt4(s.accuracy_plus) + " |\n";
  out += "| combined | " + fmt4(s.combined) + " |\n\n";
  out += std::to_string(s.n_correct) + "/" + std::to_string(s.n_questions) +
         " questions correct, " + std::to_string(s.n_pairs_correct) + "/" +
         std::to_string(s.n_images) + " image pairs fully correct\n";
  return out;
}

}  // namespace pensieve
