#include "pensieve/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "json.hpp"

#include "pensieve/errors.hpp"
#include "pensieve/rng.hpp"

namespace pensieve {

using nlohmann::json;

int Scorer::token_id(const std::string& name) const {
  const std::vector<std::string>& vocab = vocabulary();
  const auto it = std::find(vocab.begin(), vocab.end(), name);
  return it == vocab.end() ? -1 : static_cast<int>(it - vocab.begin());
}

ToyScorer::ToyScorer(const ToyScorerParams& params, kernels::Mode mode)
    : params_(params), mode_(mode) {
  if (params.vocab_size < 2)
    throw ContractError("toy scorer: vocab_size must be >= 2");
  if (params.visual_dim < 1)
    throw ContractError("toy scorer: visual_dim must be >= 1");
  const std::size_t v = static_cast<std::size_t>(params.vocab_size);
  const std::size_t d = static_cast<std::size_t>(params.visual_dim);
  vocab_.reserve(v);
  vocab_.push_back("</s>");
  for (std::size_t i = 1; i < v; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "t%03zu", i);
    vocab_.push_back(name);
  }
  // 1/sqrt(fan-in) scaling keeps logits O(1) regardless of dimensions
  w_visual_.resize(v * d);
  w_context_.resize(v * v);
  bias_.resize(v);
  const CounterRng wv(params.seed, streams::kToyWeights);
  const CounterRng wc(params.seed, streams::kToyWeights + 1);
  const CounterRng wb(params.seed, streams::kToyWeights + 2);
  const double sv = 1.0 / std::sqrt(static_cast<double>(d));
  const double sc = 1.0 / std::sqrt(static_cast<double>(v));
  for (std::size_t i = 0; i < w_visual_.size(); ++i)
    w_visual_[i] = sv * wv.normal(i);
  for (std::size_t i = 0; i < w_context_.size(); ++i)
    w_context_[i] = sc * wc.normal(i);
  for (std::size_t i = 0; i < bias_.size(); ++i) bias_[i] = wb.normal(i);
}

LogitsVector ToyScorer::score(const VisualInput& visual,
                              std::span<const int> context) const {
  const std::size_t v = static_cast<std::size_t>(params_.vocab_size);
  const std::size_t d = static_cast<std::size_t>(params_.visual_dim);
  if (visual.vec.size() != d)
    throw ContractError("toy scorer: visual dimension mismatch for '" +
                        visual.id + "'");
  std::vector<double> bag(v, 0.0);
  double weight = 1.0;
  for (std::size_t p = context.size(); p-- > 0;) {
    const int tok = context[p];
    if (tok < 0 || static_cast<std::size_t>(tok) >= v)
      throw ContractError("toy scorer: context token out of vocabulary");
    bag[static_cast<std::size_t>(tok)] += weight;
    weight *= params_.context_decay;
  }
  std::vector<double> from_visual(v), from_context(v);
  kernels::matvec(mode_, w_visual_.data(), v, d, visual.vec.data(),
                  from_visual.data());
  kernels::matvec(mode_, w_context_.data(), v, v, bag.data(),
                  from_context.data());
  LogitsVector out(v);
  for (std::size_t i = 0; i < v; ++i)
    out[i] = from_visual[i] + from_context[i] + bias_[i];
  return out;
}

LogitTrace LogitTrace::load_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  LogitTrace trace;
  std::unordered_map<std::string, int> token_ids;
  std::unordered_map<std::string, int> max_step;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fail = [&](const std::string& what) -> ContractError {
      return ContractError("trace line " + std::to_string(lineno) + ": " + what);
    };
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(e.what());
    }
    if (!obj.is_object()) throw fail("expected an object");
    if (!have_header) {
      if (!obj.contains("vocabulary") || !obj["vocabulary"].is_array() ||
          obj["vocabulary"].empty())
        throw fail("header must declare a nonempty vocabulary");
      for (const json& tok : obj["vocabulary"]) {
        if (!tok.is_string()) throw fail("vocabulary entries must be strings");
        const std::string name = tok.get<std::string>();
        if (!token_ids.emplace(name, static_cast<int>(trace.vocabulary_.size())).second)
          throw fail("duplicate vocabulary token '" + name + "'");
        trace.vocabulary_.push_back(name);
      }
      if (obj.contains("fill_value") && !obj["fill_value"].is_null()) {
        if (!obj["fill_value"].is_number()) throw fail("fill_value must be a number");
        trace.fill_value_ = obj["fill_value"].get<double>();
      }
      if (obj.contains("eos") && !obj["eos"].is_null()) {
        if (!obj["eos"].is_string()) throw fail("eos must be a string");
        trace.eos_ = obj["eos"].get<std::string>();
        if (!token_ids.contains(*trace.eos_))
          throw fail("eos token not in vocabulary");
      }
      have_header = true;
      continue;
    }
    if (!obj.contains("visual_id") || !obj["visual_id"].is_string())
      throw fail("missing string field 'visual_id'");
    if (!obj.contains("step") || !obj["step"].is_number_integer())
      throw fail("missing integer field 'step'");
    if (!obj.contains("scores") || !obj["scores"].is_object() ||
        obj["scores"].empty())
      throw fail("missing nonempty object field 'scores'");
    const std::string visual_id = obj["visual_id"].get<std::string>();
    const int step = obj["step"].get<int>();
    if (step < 0) throw fail("step must be >= 0");
    Entry entry;
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& [name, val] : obj["scores"].items()) {
      const auto it = token_ids.find(name);
      if (it == token_ids.end())
        throw fail("candidate '" + name + "' not in vocabulary");
      if (!val.is_number()) throw fail("score for '" + name + "' must be a number");
      const double s = val.get<double>();
      entry.scores.emplace_back(it->second, s);
      lo = std::min(lo, s);
    }
    if (trace.fill_value_) {
      if (!(*trace.fill_value_ < lo))
        throw fail("fill_value must stay below every named score");
      entry.fill = *trace.fill_value_;
    } else {
      entry.fill = lo - 10.0;
    }
    if (!trace.entries_.emplace(std::make_pair(visual_id, step),
                                std::move(entry)).second)
      throw fail("duplicate entry for visual '" + visual_id + "' step " +
                 std::to_string(step));
    auto [it, fresh] = max_step.try_emplace(visual_id, step);
    if (!fresh) it->second = std::max(it->second, step);
  }
  if (!have_header) throw ContractError("trace '" + path + "': empty file");
  // steps must be contiguous from 0 so a replayed decode never hits a gap
  for (const auto& [visual_id, hi] : max_step) {
    for (int s = 0; s <= hi; ++s) {
      if (!trace.entries_.contains({visual_id, s}))
        throw ContractError("trace '" + path + "': visual '" + visual_id +
                            "' missing step " + std::to_string(s));
    }
  }
  return trace;
}

LogitsVector LogitTrace::logits_for(const std::string& visual_id,
                                    int step) const {
  const auto it = entries_.find({visual_id, step});
  if (it == entries_.end())
    throw ContractError("trace has no entry for visual '" + visual_id +
                        "' at step " + std::to_string(step));
  LogitsVector out(vocabulary_.size(), it->second.fill);
  for (const auto& [tok, score] : it->second.scores)
    out[static_cast<std::size_t>(tok)] = score;
  return out;
}

TraceScorer::TraceScorer(LogitTrace trace, int base_context_length)
    : trace_(std::move(trace)), base_context_length_(base_context_length) {
  if (base_context_length < 0)
    throw ContractError("trace scorer: negative base context length");
  if (trace_.eos_token()) {
    const auto& vocab = trace_.vocabulary();
    const auto it = std::find(vocab.begin(), vocab.end(), *trace_.eos_token());
    eos_id_ = static_cast<int>(it - vocab.begin());
  }
}

LogitsVector TraceScorer::score(const VisualInput& visual,
                                std::span<const int> context) const {
  const int step = static_cast<int>(context.size()) - base_context_length_;
  if (step < 0)
    throw ContractError("trace scorer: context shorter than base context");
  return trace_.logits_for(visual.id, step);
}

}  // namespace pensieve
