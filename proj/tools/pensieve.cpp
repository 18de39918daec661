// Command-line surface for the retrospect-then-compare decoding pipeline:
// reference-index build/search, decoding with breakdown capture, breakdown
// analysis, forward diffusion, and yes/no evaluation reports.

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "pensieve/decoder.hpp"
#include "pensieve/diffusion.hpp"
#include "pensieve/errors.hpp"
#include "pensieve/eval.hpp"
#include "pensieve/index.hpp"
#include "pensieve/manifest.hpp"
#include "pensieve/scorer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join_argv(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

bool color_enabled() {
  return isatty(1) && std::getenv("PENSIEVE_NO_COLOR") == nullptr;
}

std::vector<double> load_query_vector(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw pensieve::IoError("cannot open '" + path + "'");
  json obj;
  try {
    obj = json::parse(is);
  } catch (const json::exception& e) {
    throw pensieve::ContractError("query file '" + path + "': " + e.what());
  }
  try {
    if (obj.is_array()) return obj.get<std::vector<double>>();
    if (obj.is_object() && obj.contains("values"))
      return obj["values"].get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw pensieve::ContractError("query file '" + path + "': " + e.what());
  }
  throw pensieve::ContractError("query file '" + path +
                                "': expected a number array or {values}");
}

std::unordered_set<std::string> load_blocklist(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw pensieve::IoError("cannot open '" + path + "'");
  std::unordered_set<std::string> ids;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    if (!line.empty()) ids.insert(line);
  }
  return ids;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw pensieve::IoError("cannot open '" + path + "' for writing");
  os << content;
  if (!os) throw pensieve::IoError("write failed for '" + path + "'");
}

// ---- index ----

struct IndexBuildOpts {
  std::string records;
  std::string out;
};

void run_index_build(const IndexBuildOpts& opt, const std::string& command) {
  std::vector<pensieve::ReferenceRecord> records =
      pensieve::load_records_jsonl(opt.records);
  const pensieve::ReferenceIndex index =
      pensieve::ReferenceIndex::build(std::move(records));
  index.save(opt.out);
  pensieve::RunManifest manifest;
  manifest.command = command;
  manifest.inputs.emplace_back("records", opt.records);
  manifest.write(opt.out + ".manifest.json");
  std::cout << "built index: " << index.size() << " records, semantic dim "
            << index.semantic_dim() << ", appearance dim "
            << index.appearance_dim() << "\n";
}

struct IndexSearchOpts {
  std::string index;
  std::string query;
  int k = 4;
  std::string blocklist;
  bool rerank = false;
  std::string query_text;
};

void run_index_search(const IndexSearchOpts& opt) {
  const pensieve::ReferenceIndex index = pensieve::ReferenceIndex::load(opt.index);
  const std::vector<double> query = load_query_vector(opt.query);
  std::unordered_set<std::string> blocklist;
  if (!opt.blocklist.empty()) blocklist = load_blocklist(opt.blocklist);
  std::vector<pensieve::RetrievalResult> results =
      index.search(query, opt.k, blocklist);
  if (opt.rerank) {
    const std::vector<std::string> tokens =
        pensieve::tokenize_text(pensieve::narrativize(opt.query_text));
    if (tokens.empty())
      throw pensieve::ContractError("query text has no tokens after narrativization");
    results = pensieve::rerank_by_bleu1(std::move(results), tokens, index);
  }
  char buf[64];
  for (std::size_t i = 0; i < results.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", results[i].similarity);
    std::cout << (i + 1) << '\t' << results[i].id << '\t' << buf;
    if (results[i].rerank_score) {
      std::snprintf(buf, sizeof(buf), "%.17g", *results[i].rerank_score);
      std::cout << '\t' << buf;
    }
    std::cout << '\n';
  }
}

// ---- decode ----

struct DecodeOpts {
  std::string scorer;
  std::string config;
  std::string out;
  std::string prompt;
  // config overrides, applied only when the flag was given
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::optional<double> jsd_threshold;
  std::optional<int> k, m, max_tokens;
  bool baseline = false;
  // trace scorer
  std::string trace;
  std::string test_id = "test";
  std::string diffused_id = "diffused";
  std::string knn_ids;
  // toy scorer
  std::string visual;
  int toy_vocab = 128;
  int toy_dim = 32;
  std::uint64_t toy_seed = 7;
  std::string index;
  std::string blocklist;
  std::string knn_visuals;
};

std::vector<int> parse_prompt(const pensieve::Scorer& scorer,
                              const std::string& prompt) {
  std::vector<int> out;
  std::istringstream is(prompt);
  std::string name;
  while (is >> name) {
    const int id = scorer.token_id(name);
    if (id < 0)
      throw pensieve::ContractError("prompt token '" + name +
                                    "' not in vocabulary");
    out.push_back(id);
  }
  return out;
}

void run_decode(const DecodeOpts& opt, const std::string& command) {
  pensieve::DecodeConfig cfg;
  if (!opt.config.empty())
    cfg = pensieve::DecodeConfig::from_json_file(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.strategy) cfg.strategy = pensieve::strategy_from_string(*opt.strategy);
  if (opt.k) cfg.k = *opt.k;
  if (opt.m) cfg.m = *opt.m;
  if (opt.max_tokens) cfg.max_tokens = *opt.max_tokens;
  if (opt.jsd_threshold) cfg.jsd_threshold = *opt.jsd_threshold;
  if (opt.baseline) cfg.baseline = true;
  cfg.validate();

  pensieve::RunManifest manifest;
  manifest.command = command;
  manifest.has_seed = true;
  manifest.seed = cfg.seed;
  if (!opt.config.empty()) manifest.inputs.emplace_back("config", opt.config);

  std::unique_ptr<pensieve::Scorer> scorer;
  pensieve::DecodeVisuals visuals;
  if (opt.scorer == "trace") {
    if (opt.trace.empty())
      throw pensieve::ContractError("--scorer trace requires --trace");
    manifest.inputs.emplace_back("trace", opt.trace);
    pensieve::LogitTrace trace = pensieve::LogitTrace::load_jsonl(opt.trace);
    // the prompt length anchors step 0 of the replay
    auto probe = std::make_unique<pensieve::TraceScorer>(trace, 0);
    const int prompt_len =
        static_cast<int>(parse_prompt(*probe, opt.prompt).size());
    scorer = std::make_unique<pensieve::TraceScorer>(std::move(trace), prompt_len);
    visuals.test.id = opt.test_id;
    visuals.diffused.id = opt.diffused_id;
    std::vector<std::string> ids = split_commas(opt.knn_ids);
    if (ids.empty()) {
      for (int j = 1; j <= cfg.k; ++j) ids.push_back("knn" + std::to_string(j));
    }
    for (const std::string& id : ids) visuals.knn.push_back({id, {}});
  } else {
    if (opt.visual.empty())
      throw pensieve::ContractError("--scorer toy requires --visual");
    manifest.inputs.emplace_back("visual", opt.visual);
    const pensieve::Tensor test = pensieve::Tensor::from_json_file(opt.visual);
    pensieve::ToyScorerParams params;
    params.vocab_size = opt.toy_vocab;
    params.visual_dim = opt.toy_dim;
    params.seed = opt.toy_seed;
    scorer = std::make_unique<pensieve::ToyScorer>(params);
    if (static_cast<int>(test.values.size()) != opt.toy_dim)
      throw pensieve::ContractError("visual dimension " +
                                    std::to_string(test.values.size()) +
                                    " does not match --toy-dim " +
                                    std::to_string(opt.toy_dim));
    visuals.test = {"test", test.values};
    // diffused branch: closed-form forward noising of the test visual
    const pensieve::DiffusionSchedule schedule = pensieve::linear_schedule();
    if (cfg.diffusion_step > schedule.T())
      throw pensieve::ContractError("diffusion_step exceeds schedule length");
    const pensieve::Tensor noised =
        pensieve::diffuse(test, cfg.diffusion_step, schedule, cfg.seed);
    visuals.diffused = {"diffused", noised.values};
    if (!cfg.baseline) {
      if (!opt.index.empty()) {
        manifest.inputs.emplace_back("index", opt.index);
        const pensieve::ReferenceIndex index =
            pensieve::ReferenceIndex::load(opt.index);
        std::unordered_set<std::string> blocklist;
        if (!opt.blocklist.empty()) {
          manifest.inputs.emplace_back("blocklist", opt.blocklist);
          blocklist = load_blocklist(opt.blocklist);
        }
        // query with the test visual split into per-half unit vectors
        std::vector<double> query;
        const std::size_t d1 = index.semantic_dim();
        const std::size_t d2 = index.appearance_dim();
        if (test.values.size() != d1 + d2)
          throw pensieve::ContractError(
              "visual dimension does not match index record dimension");
        if (d2 > 0) {
          query = pensieve::ensemble_embed(
              std::span(test.values).first(d1), std::span(test.values).last(d2));
        } else {
          query = pensieve::l2_normalize(test.values);
        }
        const std::vector<pensieve::RetrievalResult> hits =
            index.search(query, cfg.k, blocklist);
        if (static_cast<int>(hits.size()) < cfg.k)
          throw pensieve::ContractError(
              "index returned only " + std::to_string(hits.size()) +
              " references for k=" + std::to_string(cfg.k));
        for (const pensieve::RetrievalResult& hit : hits) {
          const pensieve::ReferenceRecord& rec = index.record_by_id(hit.id);
          std::vector<double> vec = rec.semantic;
          vec.insert(vec.end(), rec.appearance.begin(), rec.appearance.end());
          visuals.knn.push_back({rec.id, std::move(vec)});
        }
      } else if (!opt.knn_visuals.empty()) {
        for (const std::string& path : split_commas(opt.knn_visuals)) {
          manifest.inputs.emplace_back("knn_visual", path);
          const pensieve::Tensor t = pensieve::Tensor::from_json_file(path);
          visuals.knn.push_back({fs::path(path).stem().string(), t.values});
        }
      } else {
        throw pensieve::ContractError(
            "--scorer toy requires --index or --knn-visuals (or --baseline)");
      }
    }
  }

  const std::vector<int> prompt = parse_prompt(*scorer, opt.prompt);
  const pensieve::DecodeOutput output =
      pensieve::decode_sequence(*scorer, visuals, prompt, cfg);

  fs::create_directories(opt.out);
  write_text_file((fs::path(opt.out) / "tokens.txt").string(),
                  output.text + "\n");
  std::ostringstream csv;
  pensieve::write_breakdown_csv(csv, output, *scorer);
  write_text_file((fs::path(opt.out) / "breakdown.csv").string(), csv.str());
  manifest.config_json = cfg.to_json();
  manifest.write((fs::path(opt.out) / "manifest.json").string());
  std::cout << "decoded " << output.tokens.size() << " tokens -> " << opt.out
            << "\n";
}

// ---- analyze ----

struct AnalyzeOpts {
  std::string breakdown;
  int top = 8;
  std::string format = "markdown";
  std::string out;
};

void run_analyze(const AnalyzeOpts& opt, const std::string& command) {
  std::ifstream is(opt.breakdown, std::ios::binary);
  if (!is) throw pensieve::IoError("cannot open '" + opt.breakdown + "'");
  const pensieve::BreakdownTable table = pensieve::read_breakdown_csv(is);
  const pensieve::BreakdownTable top = pensieve::analyze(table, opt.top);
  std::ostringstream rendered;
  if (opt.format == "csv") {
    pensieve::render_breakdown_csv(rendered, top);
  } else {
    const bool color = opt.out.empty() && color_enabled();
    pensieve::render_breakdown_markdown(rendered, top, color);
  }
  if (opt.out.empty()) {
    std::cout << rendered.str();
  } else {
    write_text_file(opt.out, rendered.str());
    pensieve::RunManifest manifest;
    manifest.command = command;
    manifest.inputs.emplace_back("breakdown", opt.breakdown);
    manifest.write(opt.out + ".manifest.json");
  }
}

// ---- diffuse ----

struct DiffuseOpts {
  std::string in;
  std::string out;
  int t = 1;
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::uint64_t seed = 0;
};

void run_diffuse(const DiffuseOpts& opt, const std::string& command) {
  const pensieve::Tensor x0 = pensieve::Tensor::from_json_file(opt.in);
  const pensieve::DiffusionSchedule schedule =
      pensieve::linear_schedule(opt.T, opt.beta_start, opt.beta_end);
  const pensieve::Tensor xt = pensieve::diffuse(x0, opt.t, schedule, opt.seed);
  xt.to_json_file(opt.out);
  pensieve::RunManifest manifest;
  manifest.command = command;
  manifest.inputs.emplace_back("tensor", opt.in);
  manifest.has_seed = true;
  manifest.seed = opt.seed;
  manifest.write(opt.out + ".manifest.json");
  std::cout << "diffused " << xt.values.size() << " values at t=" << opt.t
            << " -> " << opt.out << "\n";
}

// ---- eval ----

struct EvalOpts {
  std::string metric;
  std::string in;
  std::string out;
  std::string md;
};

void run_eval(const EvalOpts& opt, const std::string& command) {
  const std::vector<pensieve::VqaSample> samples =
      pensieve::load_vqa_jsonl(opt.in);
  std::string report_json, report_md;
  if (opt.metric == "pope") {
    const pensieve::PopeMetrics m = pensieve::pope_metrics(samples);
    report_json = pensieve::pope_report_json(m);
    report_md = pensieve::pope_report_markdown(m);
  } else {
    const pensieve::SubtaskScore s = pensieve::mme_score(samples);
    report_json = pensieve::mme_report_json(s);
    report_md = pensieve::mme_report_markdown(s);
  }
  std::cout << report_json;
  if (!opt.out.empty()) {
    write_text_file(opt.out, report_json);
    pensieve::RunManifest manifest;
    manifest.command = command;
    manifest.inputs.emplace_back("samples", opt.in);
    manifest.write(opt.out + ".manifest.json");
  }
  if (!opt.md.empty()) write_text_file(opt.md, report_md);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrospect-then-compare decoding pipeline"};
  app.require_subcommand(1);
  const std::string command = join_argv(argc, argv);

  // index
  CLI::App* index_cmd = app.add_subcommand("index", "Reference index operations");
  index_cmd->require_subcommand(1);
  IndexBuildOpts build_opt;
  CLI::App* build_cmd = index_cmd->add_subcommand("build", "Build an index from records");
  build_cmd->add_option("--records", build_opt.records, "Records JSONL file")
      ->required();
  build_cmd->add_option("--out", build_opt.out, "Output index file")->required();
  build_cmd->callback([&] { run_index_build(build_opt, command); });

  IndexSearchOpts search_opt;
  CLI::App* search_cmd = index_cmd->add_subcommand("search", "Query an index");
  search_cmd->add_option("--index", search_opt.index, "Index file")->required();
  search_cmd->add_option("--query", search_opt.query, "Query embedding JSON")
      ->required();
  search_cmd->add_option("--k", search_opt.k, "Result count")
      ->check(CLI::PositiveNumber);
  search_cmd->add_option("--blocklist", search_opt.blocklist,
                         "File of record ids to exclude");
  search_cmd->add_flag("--rerank-bleu1", search_opt.rerank,
                       "Rerank results by unigram overlap with --query-text");
  search_cmd->add_option("--query-text", search_opt.query_text,
                         "Question text for reranking");
  search_cmd->callback([&] {
    if (search_opt.rerank && search_opt.query_text.empty())
      throw CLI::ValidationError("--rerank-bleu1 requires --query-text");
    run_index_search(search_opt);
  });

  // decode
  DecodeOpts decode_opt;
  CLI::App* decode_cmd = app.add_subcommand("decode", "Decode a sequence");
  decode_cmd->add_option("--scorer", decode_opt.scorer, "Scorer kind")
      ->required()
      ->check(CLI::IsMember({"toy", "trace"}));
  decode_cmd->add_option("--config", decode_opt.config, "Decode config JSON");
  decode_cmd->add_option("--out", decode_opt.out, "Output directory")->required();
  decode_cmd->add_option("--prompt", decode_opt.prompt,
                         "Space-separated prompt token names");
  std::uint64_t seed_val = 0;
  CLI::Option* seed_flag = decode_cmd->add_option("--seed", seed_val, "Run seed");
  std::string strategy_val, jsd_val;
  CLI::Option* strategy_flag =
      decode_cmd->add_option("--strategy", strategy_val,
                             "greedy, sample, top_k, or nucleus")
          ->check(CLI::IsMember({"greedy", "sample", "top_k", "nucleus"}));
  CLI::Option* jsd_flag = decode_cmd->add_option(
      "--jsd-threshold", jsd_val, "Gate threshold (number or 'inf')");
  int k_val = 0, m_val = 0, max_tokens_val = 0;
  CLI::Option* k_flag =
      decode_cmd->add_option("--k", k_val, "Reference count")
          ->check(CLI::PositiveNumber);
  CLI::Option* m_flag = decode_cmd->add_option("--m", m_val, "Head size")
                            ->check(CLI::PositiveNumber);
  CLI::Option* max_tokens_flag =
      decode_cmd->add_option("--max-tokens", max_tokens_val, "Token budget")
          ->check(CLI::NonNegativeNumber);
  decode_cmd->add_flag("--baseline", decode_opt.baseline,
                       "Base-only decoding for A/B runs");
  decode_cmd->add_option("--trace", decode_opt.trace, "Logit trace JSONL");
  decode_cmd->add_option("--test-id", decode_opt.test_id,
                         "Trace visual id of the test input");
  decode_cmd->add_option("--diffused-id", decode_opt.diffused_id,
                         "Trace visual id of the diffused input");
  decode_cmd->add_option("--knn-ids", decode_opt.knn_ids,
                         "Comma-separated trace visual ids of the references");
  decode_cmd->add_option("--visual", decode_opt.visual,
                         "Test visual tensor JSON (toy scorer)");
  decode_cmd->add_option("--toy-vocab", decode_opt.toy_vocab,
                         "Toy vocabulary size");
  decode_cmd->add_option("--toy-dim", decode_opt.toy_dim, "Toy visual dim");
  decode_cmd->add_option("--toy-seed", decode_opt.toy_seed, "Toy weight seed");
  decode_cmd->add_option("--index", decode_opt.index,
                         "Reference index for retrieval (toy scorer)");
  decode_cmd->add_option("--blocklist", decode_opt.blocklist,
                         "File of record ids to exclude from retrieval");
  decode_cmd->add_option("--knn-visuals", decode_opt.knn_visuals,
                         "Comma-separated reference tensor files (toy scorer)");
  decode_cmd->callback([&] {
    if (*seed_flag) decode_opt.seed = seed_val;
    if (*strategy_flag) decode_opt.strategy = strategy_val;
    if (*jsd_flag) {
      if (jsd_val == "inf") {
        decode_opt.jsd_threshold = std::numeric_limits<double>::infinity();
      } else {
        try {
          std::size_t used = 0;
          decode_opt.jsd_threshold = std::stod(jsd_val, &used);
          if (used != jsd_val.size()) throw std::invalid_argument(jsd_val);
        } catch (const std::exception&) {
          throw CLI::ValidationError(
              "--jsd-threshold expects a number or 'inf', got '" + jsd_val +
              "'");
        }
      }
    }
    if (*k_flag) decode_opt.k = k_val;
    if (*m_flag) decode_opt.m = m_val;
    if (*max_tokens_flag) decode_opt.max_tokens = max_tokens_val;
    run_decode(decode_opt, command);
  });

  // analyze
  AnalyzeOpts analyze_opt;
  CLI::App* analyze_cmd =
      app.add_subcommand("analyze", "Render per-step candidate tables");
  analyze_cmd->add_option("--breakdown", analyze_opt.breakdown,
                          "breakdown.csv from a decode run")
      ->required();
  analyze_cmd->add_option("--top", analyze_opt.top, "Candidates per step")
      ->check(CLI::PositiveNumber);
  analyze_cmd->add_option("--format", analyze_opt.format, "markdown or csv")
      ->check(CLI::IsMember({"markdown", "csv"}));
  analyze_cmd->add_option("--out", analyze_opt.out, "Output file (default stdout)");
  analyze_cmd->callback([&] { run_analyze(analyze_opt, command); });

  // diffuse
  DiffuseOpts diffuse_opt;
  CLI::App* diffuse_cmd =
      app.add_subcommand("diffuse", "Forward-noise a tensor");
  diffuse_cmd->add_option("--in", diffuse_opt.in, "Input tensor JSON")->required();
  diffuse_cmd->add_option("--out", diffuse_opt.out, "Output tensor JSON")
      ->required();
  diffuse_cmd->add_option("--t", diffuse_opt.t, "Diffusion step, 1-based")
      ->required()
      ->check(CLI::PositiveNumber);
  diffuse_cmd->add_option("--T", diffuse_opt.T, "Schedule length")
      ->check(CLI::PositiveNumber);
  diffuse_cmd->add_option("--beta-start", diffuse_opt.beta_start,
                          "First beta of the linear schedule");
  diffuse_cmd->add_option("--beta-end", diffuse_opt.beta_end,
                          "Last beta of the linear schedule");
  diffuse_cmd->add_option("--seed", diffuse_opt.seed, "Noise seed");
  diffuse_cmd->callback([&] {
    if (diffuse_opt.t > diffuse_opt.T)
      throw CLI::ValidationError("--t must not exceed --T");
    run_diffuse(diffuse_opt, command);
  });

  // eval
  EvalOpts eval_opt;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Yes/no evaluation reports");
  eval_cmd->add_option("--metric", eval_opt.metric, "pope or mme")
      ->required()
      ->check(CLI::IsMember({"pope", "mme"}));
  eval_cmd->add_option("--in", eval_opt.in, "Samples JSONL")->required();
  eval_cmd->add_option("--out", eval_opt.out, "JSON report file");
  eval_cmd->add_option("--md", eval_opt.md, "Markdown report file");
  eval_cmd->callback([&] { run_eval(eval_opt, command); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const pensieve::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const pensieve::ContractError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
