#include "pensieve/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "pensieve/errors.hpp"
#include "pensieve/rng.hpp"

namespace pensieve {

using nlohmann::json;

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "greedy") return Strategy::Greedy;
  if (name == "sample") return Strategy::Sample;
  if (name == "top_k") return Strategy::TopK;
  if (name == "nucleus") return Strategy::Nucleus;
  throw ContractError("unknown strategy '" + name +
                      "' (expected greedy, sample, top_k, or nucleus)");
}

std::string strategy_to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::Greedy: return "greedy";
    case Strategy::Sample: return "sample";
    case Strategy::TopK: return "top_k";
    case Strategy::Nucleus: return "nucleus";
  }
  return "greedy";
}

void DecodeConfig::validate() const {
  if (k < 1) throw ContractError("config: k must be >= 1");
  if (m < 1) throw ContractError("config: m must be >= 1");
  if (alpha_tau < 0.0 || beta_d < 0.0 || beta_nn < 0.0)
    throw ContractError("config: alpha_tau, beta_d, beta_nn must be >= 0");
  if (jsd_threshold && !(*jsd_threshold >= 0.0))
    throw ContractError("config: jsd_threshold must be >= 0");
  if (diffusion_step < 1)
    throw ContractError("config: diffusion_step must be >= 1");
  if (max_tokens < 0) throw ContractError("config: max_tokens must be >= 0");
}

DecodeConfig DecodeConfig::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  json obj;
  try {
    obj = json::parse(is);
  } catch (const json::exception& e) {
    throw ContractError("config '" + path + "': " + e.what());
  }
  if (!obj.is_object()) throw ContractError("config '" + path + "': expected an object");
  DecodeConfig cfg;
  for (const auto& [key, val] : obj.items()) {
    const auto as_number = [&]() {
      if (!val.is_number())
        throw ContractError("config: '" + key + "' must be a number");
      return val.template get<double>();
    };
    const auto as_int = [&]() {
      if (!val.is_number_integer())
        throw ContractError("config: '" + key + "' must be an integer");
      return val.template get<int>();
    };
    if (key == "alpha_tau") cfg.alpha_tau = as_number();
    else if (key == "beta_d") cfg.beta_d = as_number();
    else if (key == "beta_nn") cfg.beta_nn = as_number();
    else if (key == "k") cfg.k = as_int();
    else if (key == "m") cfg.m = as_int();
    else if (key == "diffusion_step") cfg.diffusion_step = as_int();
    else if (key == "max_tokens") cfg.max_tokens = as_int();
    else if (key == "jsd_threshold") {
      if (val.is_null()) cfg.jsd_threshold.reset();
      else if (val.is_number()) cfg.jsd_threshold = val.get<double>();
      else if (val.is_string() && val.get<std::string>() == "inf")
        cfg.jsd_threshold = std::numeric_limits<double>::infinity();
      else
        throw ContractError(
            "config: 'jsd_threshold' must be a number, \"inf\", or null");
    } else if (key == "strategy") {
      if (!val.is_string())
        throw ContractError("config: 'strategy' must be a string");
      cfg.strategy = strategy_from_string(val.get<std::string>());
    } else if (key == "seed") {
      if (!val.is_number_integer() && !val.is_number_unsigned())
        throw ContractError("config: 'seed' must be an integer");
      cfg.seed = val.get<std::uint64_t>();
    } else if (key == "baseline") {
      if (!val.is_boolean())
        throw ContractError("config: 'baseline' must be a boolean");
      cfg.baseline = val.get<bool>();
    } else {
      throw ContractError("config: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

std::string DecodeConfig::to_json() const {
  json obj;
  obj["alpha_tau"] = alpha_tau;
  obj["beta_d"] = beta_d;
  obj["beta_nn"] = beta_nn;
  obj["k"] = k;
  obj["m"] = m;
  obj["diffusion_step"] = diffusion_step;
  if (!jsd_threshold) obj["jsd_threshold"] = nullptr;
  else if (std::isinf(*jsd_threshold)) obj["jsd_threshold"] = "inf";
  else obj["jsd_threshold"] = *jsd_threshold;
  obj["strategy"] = strategy_to_string(strategy);
  obj["max_tokens"] = max_tokens;
  obj["seed"] = seed;
  obj["baseline"] = baseline;
  return obj.dump(2);
}

namespace {

// rethrows scorer failures with the step index attached
template <typename Fn>
auto with_step(int step, Fn&& fn) -> decltype(fn()) {
  const std::string tag = "decode step " + std::to_string(step) + ": ";
  try {
    return fn();
  } catch (const ContractError& e) {
    throw ContractError(tag + e.what());
  } catch (const IoError& e) {
    throw IoError(tag + e.what());
  }
}

}  // namespace

std::pair<int, StepBreakdown> decode_step(const Scorer& scorer,
                                          const DecodeVisuals& visuals,
                                          std::span<const int> context,
                                          const DecodeConfig& cfg, int step) {
  cfg.validate();
  const auto call = [&](const VisualInput& v) {
    return with_step(step, [&] {
      LogitsVector out = scorer.score(v, context);
      if (static_cast<int>(out.size()) != scorer.vocab_size())
        throw ContractError("scorer returned " + std::to_string(out.size()) +
                            " logits for vocabulary of " +
                            std::to_string(scorer.vocab_size()));
      return out;
    });
  };

  const LogitsVector base = call(visuals.test);
  const HeadVocab head = head_vocab(base, cfg.m);
  StepBreakdown bd;
  bd.step = step;
  bd.p_star = bd.alpha_d = bd.alpha_nn = bd.jsd_value = kNan;

  LogitsVector txt;
  std::vector<LogitsVector> knns;
  AdaptiveResult ad;
  LogitsVector selectable;
  if (cfg.baseline) {
    selectable = mask_to_head(base, head);
  } else {
    if (static_cast<int>(visuals.knn.size()) != cfg.k)
      throw ContractError("decode step " + std::to_string(step) +
                          ": expected " + std::to_string(cfg.k) +
                          " reference visuals, got " +
                          std::to_string(visuals.knn.size()));
    txt = call(visuals.diffused);
    knns.reserve(visuals.knn.size());
    for (const VisualInput& v : visuals.knn) knns.push_back(call(v));
    ad = adaptive_coefficients(base, txt, head, cfg.beta_d, cfg.beta_nn);
    bd.p_star = ad.p_star;
    bd.alpha_d = ad.alpha_d;
    bd.alpha_nn = ad.alpha_nn;
    bd.jsd_value = jsd(base, txt, head);
    if (cfg.jsd_threshold && bd.jsd_value < *cfg.jsd_threshold) {
      bd.gated = true;
      selectable = mask_to_head(base, head);
    } else {
      const AdaptiveCoeffs coeffs{cfg.alpha_tau, ad.alpha_d, ad.alpha_nn};
      selectable = contrast(base, knns, txt, coeffs, head);
    }
  }

  // the end token stays selectable even when ranked out of the head
  const std::optional<int> eos = scorer.eos_id();
  const bool readmitted = eos && !head.contains(*eos);
  if (readmitted) selectable[static_cast<std::size_t>(*eos)] = base[*eos];

  const int token = select_token(selectable, cfg.strategy, cfg.seed, step);

  bd.candidates = head.indices;
  if (readmitted) bd.candidates.push_back(*eos);
  const std::size_t rows = bd.candidates.size();
  const std::size_t head_rows = head.indices.size();
  bd.knn.assign(static_cast<std::size_t>(cfg.k), {});
  for (std::size_t r = 0; r < rows; ++r) {
    const int c = bd.candidates[r];
    bd.base.push_back(base[c]);
    bd.combined.push_back(selectable[c]);
    if (cfg.baseline) {
      bd.txt.push_back(kNan);
      bd.img.push_back(kNan);
      bd.knn_mean.push_back(kNan);
      bd.l_delta.push_back(kNan);
      for (auto& col : bd.knn) col.push_back(kNan);
    } else {
      bd.txt.push_back(txt[c]);
      bd.img.push_back(base[c] - txt[c]);
      double sum = 0.0;
      for (std::size_t j = 0; j < knns.size(); ++j) {
        bd.knn[j].push_back(knns[j][c]);
        sum += knns[j][c];
      }
      bd.knn_mean.push_back(sum / static_cast<double>(knns.size()));
      bd.l_delta.push_back(r < head_rows ? ad.l_delta[r] : kNan);
    }
  }
  bd.chosen = token;
  return {token, std::move(bd)};
}

int select_token(const LogitsVector& combined, Strategy strategy,
                 std::uint64_t seed, int step) {
  std::vector<int> finite;
  finite.reserve(combined.size());
  for (std::size_t i = 0; i < combined.size(); ++i) {
    if (std::isfinite(combined[i])) finite.push_back(static_cast<int>(i));
  }
  if (finite.empty())
    throw ContractError("select_token: no selectable candidate");
  if (strategy == Strategy::Greedy) {
    int best = finite[0];
    for (int i : finite) {
      if (combined[i] > combined[best]) best = i;
    }
    return best;
  }
  std::sort(finite.begin(), finite.end(), [&](int a, int b) {
    if (combined[a] != combined[b]) return combined[a] > combined[b];
    return a < b;
  });
  if (strategy == Strategy::TopK &&
      finite.size() > static_cast<std::size_t>(kTopKCandidates))
    finite.resize(kTopKCandidates);
  std::vector<double> probs = softmax_over(combined, finite);
  if (strategy == Strategy::Nucleus) {
    double cum = 0.0;
    std::size_t keep = probs.size();
    for (std::size_t i = 0; i < probs.size(); ++i) {
      cum += probs[i];
      if (cum >= kNucleusMass) {
        keep = i + 1;
        break;
      }
    }
    finite.resize(keep);
    probs.resize(keep);
    for (double& p : probs) p /= cum;
  }
  const double u = CounterRng(seed, streams::select(step)).uniform(0);
  double cum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return finite[i];
  }
  return finite.back();
}

DecodeOutput decode_sequence(const Scorer& scorer, const DecodeVisuals& visuals,
                             std::span<const int> prompt,
                             const DecodeConfig& cfg) {
  cfg.validate();
  for (int t : prompt) {
    if (t < 0 || t >= scorer.vocab_size())
      throw ContractError("decode: prompt token out of vocabulary");
  }
  DecodeOutput out;
  out.config = cfg;
  std::vector<int> context(prompt.begin(), prompt.end());
  const std::optional<int> eos = scorer.eos_id();
  for (int step = 0; step < cfg.max_tokens; ++step) {
    auto [token, bd] = decode_step(scorer, visuals, context, cfg, step);
    out.tokens.push_back(token);
    out.steps.push_back(std::move(bd));
    context.push_back(token);
    if (eos && token == *eos) break;
  }
  const std::vector<std::string>& vocab = scorer.vocabulary();
  for (int t : out.tokens) {
    if (eos && t == *eos) continue;
    if (!out.text.empty()) out.text += ' ';
    out.text += vocab[static_cast<std::size_t>(t)];
  }
  return out;
}

namespace {

std::string fmt_full(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

std::vector<std::string> header_columns(int k) {
  std::vector<std::string> cols = {"step", "candidate", "base", "txt", "img"};
  for (int j = 1; j <= k; ++j) cols.push_back("knn_" + std::to_string(j));
  for (const char* c : {"knn_mean", "l_delta", "jsd", "alpha_d", "alpha_nn",
                        "combined", "chosen"})
    cols.emplace_back(c);
  return cols;
}

void write_row(std::ostream& os, const BreakdownRow& row) {
  os << row.step << ',' << csv_escape(row.candidate) << ','
     << fmt_full(row.base) << ',' << fmt_full(row.txt) << ','
     << fmt_full(row.img);
  for (double v : row.knn) os << ',' << fmt_full(v);
  os << ',' << fmt_full(row.knn_mean) << ',' << fmt_full(row.l_delta) << ','
     << fmt_full(row.jsd_value) << ',' << fmt_full(row.alpha_d) << ','
     << fmt_full(row.alpha_nn) << ',' << fmt_full(row.combined) << ','
     << (row.chosen ? '1' : '0') << '\n';
}

// splits one CSV line, honoring double-quote escaping
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_cell(const std::string& s, int lineno) {
  if (s.empty()) return kNan;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw ContractError("breakdown line " + std::to_string(lineno) +
                        ": bad number '" + s + "'");
  return v;
}

}  // namespace

BreakdownTable to_breakdown_table(const DecodeOutput& output,
                                  const Scorer& scorer) {
  BreakdownTable table;
  table.k = output.config.k;
  const std::vector<std::string>& vocab = scorer.vocabulary();
  for (const StepBreakdown& bd : output.steps) {
    for (std::size_t r = 0; r < bd.candidates.size(); ++r) {
      BreakdownRow row;
      row.step = bd.step;
      row.candidate = vocab[static_cast<std::size_t>(bd.candidates[r])];
      row.base = bd.base[r];
      row.txt = bd.txt[r];
      row.img = bd.img[r];
      for (const auto& col : bd.knn) row.knn.push_back(col[r]);
      row.knn_mean = bd.knn_mean[r];
      row.l_delta = bd.l_delta[r];
      row.jsd_value = bd.jsd_value;
      row.alpha_d = bd.alpha_d;
      row.alpha_nn = bd.alpha_nn;
      row.combined = bd.combined[r];
      row.chosen = bd.candidates[r] == bd.chosen;
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

void render_breakdown_csv(std::ostream& os, const BreakdownTable& table) {
  const std::vector<std::string> cols = header_columns(table.k);
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) os << ',';
    os << cols[i];
  }
  os << '\n';
  for (const BreakdownRow& row : table.rows) write_row(os, row);
}

void write_breakdown_csv(std::ostream& os, const DecodeOutput& output,
                         const Scorer& scorer) {
  render_breakdown_csv(os, to_breakdown_table(output, scorer));
}

BreakdownTable read_breakdown_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line))
    throw ContractError("breakdown: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 12)
    throw ContractError("breakdown: too few columns");
  const int k = static_cast<int>(header.size()) - 12;
  const std::vector<std::string> expect = header_columns(k);
  for (std::size_t i = 0; i < expect.size(); ++i) {
    if (header[i] != expect[i])
      throw ContractError("breakdown: unexpected column '" + header[i] +
                          "' (expected '" + expect[i] + "')");
  }
  BreakdownTable table;
  table.k = k;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != expect.size())
      throw ContractError("breakdown line " + std::to_string(lineno) +
                          ": expected " + std::to_string(expect.size()) +
                          " fields, got " + std::to_string(f.size()));
    BreakdownRow row;
    try {
      row.step = std::stoi(f[0]);
    } catch (const std::exception&) {
      throw ContractError("breakdown line " + std::to_string(lineno) +
                          ": bad step '" + f[0] + "'");
    }
    row.candidate = f[1];
    row.base = parse_cell(f[2], lineno);
    row.txt = parse_cell(f[3], lineno);
    row.img = parse_cell(f[4], lineno);
    for (int j = 0; j < k; ++j)
      row.knn.push_back(parse_cell(f[5 + static_cast<std::size_t>(j)], lineno));
    const std::size_t at = 5 + static_cast<std::size_t>(k);
    row.knn_mean = parse_cell(f[at], lineno);
    row.l_delta = parse_cell(f[at + 1], lineno);
    row.jsd_value = parse_cell(f[at + 2], lineno);
    row.alpha_d = parse_cell(f[at + 3], lineno);
    row.alpha_nn = parse_cell(f[at + 4], lineno);
    row.combined = parse_cell(f[at + 5], lineno);
    if (f[at + 6] != "0" && f[at + 6] != "1")
      throw ContractError("breakdown line " + std::to_string(lineno) +
                          ": chosen must be 0 or 1");
    row.chosen = f[at + 6] == "1";
    table.rows.push_back(std::move(row));
  }
  return table;
}

BreakdownTable analyze(const BreakdownTable& table, int top_n) {
  if (top_n < 1) throw ContractError("analyze: top_n must be >= 1");
  BreakdownTable out;
  out.k = table.k;
  std::vector<int> steps;
  for (const BreakdownRow& row : table.rows) {
    if (std::find(steps.begin(), steps.end(), row.step) == steps.end())
      steps.push_back(row.step);
  }
  for (int step : steps) {
    std::vector<BreakdownRow> group;
    for (const BreakdownRow& row : table.rows) {
      if (row.step == step) group.push_back(row);
    }
    std::stable_sort(group.begin(), group.end(),
                     [](const BreakdownRow& a, const BreakdownRow& b) {
                       return a.base > b.base;
                     });
    if (group.size() > static_cast<std::size_t>(top_n))
      group.resize(static_cast<std::size_t>(top_n));
    for (BreakdownRow& row : group) out.rows.push_back(std::move(row));
  }
  return out;
}

void render_breakdown_markdown(std::ostream& os, const BreakdownTable& table,
                               bool color) {
  const char* hi = color ? "\x1b[1;36m" : "";
  const char* lo = color ? "\x1b[0m" : "";
  std::vector<int> steps;
  for (const BreakdownRow& row : table.rows) {
    if (std::find(steps.begin(), steps.end(), row.step) == steps.end())
      steps.push_back(row.step);
  }
  bool first = true;
  for (int step : steps) {
    std::vector<const BreakdownRow*> group;
    for (const BreakdownRow& row : table.rows) {
      if (row.step == step) group.push_back(&row);
    }
    if (!first) os << '\n';
    first = false;
    os << "### Step " << step;
    for (const BreakdownRow* row : group) {
      if (row->chosen) {
        os << " - chosen: " << row->candidate;
        break;
      }
    }
    const BreakdownRow* lead = group.front();
    if (!std::isnan(lead->jsd_value))
      os << " (jsd " << fmt_short(lead->jsd_value) << ", alpha_d "
         << fmt_short(lead->alpha_d) << ", alpha_nn "
         << fmt_short(lead->alpha_nn) << ")";
    os << "\n\n";
    os << "| candidate | base | txt | img |";
    for (int j = 1; j <= table.k; ++j) os << " knn_" << j << " |";
    os << " knn_mean | l_delta | combined | chosen |\n";
    os << "|---|---|---|---|";
    for (int j = 0; j < table.k; ++j) os << "---|";
    os << "---|---|---|---|\n";
    for (const BreakdownRow* row : group) {
      std::string name = row->candidate;
      std::size_t pos = 0;
      while ((pos = name.find('|', pos)) != std::string::npos) {
        name.replace(pos, 1, "\\|");
        pos += 2;
      }
      os << "| " << (row->chosen ? hi : "") << name;
      os << " | " << fmt_short(row->base) << " | " << fmt_short(row->txt)
         << " | " << fmt_short(row->img) << " |";
      for (double v : row->knn) os << ' ' << fmt_short(v) << " |";
      os << ' ' << fmt_short(row->knn_mean) << " | " << fmt_short(row->l_delta)
         << " | " << fmt_short(row->combined) << " | "
         << (row->chosen ? "*" : "") << (row->chosen ? lo : "") << " |\n";
    }
  }
}

}  // namespace pensieve
