#include <string>
#include <vector>

#include "doctest.h"
#include "pensieve/errors.hpp"
#include "pensieve/scorer.hpp"
#include "test_util.hpp"

using namespace pensieve;

namespace {

ToyScorerParams small_params() {
  ToyScorerParams p;
  p.vocab_size = 24;
  p.visual_dim = 6;
  p.seed = 17;
  return p;
}

VisualInput visual_of(std::vector<double> vec) { return {"v", std::move(vec)}; }

}  // namespace

TEST_CASE("toy scorer vocabulary starts with the end token") {
  const ToyScorer scorer(small_params());
  CHECK(scorer.vocab_size() == 24);
  CHECK(scorer.vocabulary()[0] == "</s>");
  CHECK(scorer.vocabulary()[1] == "t001");
  CHECK(scorer.vocabulary()[23] == "t023");
  CHECK(scorer.eos_id() == 0);
  CHECK(scorer.token_id("t005") == 5);
  CHECK(scorer.token_id("zebra") == -1);
  CHECK_THROWS_AS(ToyScorer(ToyScorerParams{1, 4, 0, 0.9}), ContractError);
  CHECK_THROWS_AS(ToyScorer(ToyScorerParams{8, 0, 0, 0.9}), ContractError);
}

TEST_CASE("toy scorer is deterministic across instances and calls") {
  const ToyScorer a(small_params()), b(small_params());
  const VisualInput v = visual_of({0.5, -1.0, 0.25, 2.0, 0.0, -0.75});
  const std::vector<int> ctx{3, 1, 4};
  const LogitsVector la = a.score(v, ctx);
  CHECK(la == b.score(v, ctx));
  CHECK(la == a.score(v, ctx));  // stateless: a second call is identical

  ToyScorerParams other = small_params();
  other.seed = 18;
  CHECK(la != ToyScorer(other).score(v, ctx));
}

TEST_CASE("toy scorer is affine in the visual input") {
  const ToyScorer scorer(small_params());
  const std::vector<int> empty_ctx;
  const LogitsVector bias =
      scorer.score(visual_of({0, 0, 0, 0, 0, 0}), empty_ctx);
  const std::vector<double> v1{1.0, 0.5, -0.5, 2.0, 0.0, 1.5};
  const std::vector<double> v2{-0.3, 0.7, 1.1, -2.0, 0.4, 0.0};
  std::vector<double> sum(6);
  for (int i = 0; i < 6; ++i) sum[i] = v1[i] + v2[i];
  const LogitsVector s1 = scorer.score(visual_of(v1), empty_ctx);
  const LogitsVector s2 = scorer.score(visual_of(v2), empty_ctx);
  const LogitsVector s12 = scorer.score(visual_of(sum), empty_ctx);
  for (int i = 0; i < scorer.vocab_size(); ++i)
    CHECK(s12[i] == doctest::Approx(s1[i] + s2[i] - bias[i]).epsilon(1e-12));
}

TEST_CASE("toy scorer context bag decays with recency") {
  const ToyScorer scorer(small_params());
  const VisualInput v = visual_of({0.2, 0.4, -0.6, 0.8, -1.0, 1.2});
  const std::vector<int> none;
  const std::vector<int> just_a{4};
  const std::vector<int> just_b{9};
  const std::vector<int> b_then_a{9, 4};
  const LogitsVector s0 = scorer.score(v, none);
  const LogitsVector sa = scorer.score(v, just_a);
  const LogitsVector sb = scorer.score(v, just_b);
  const LogitsVector sba = scorer.score(v, b_then_a);
  // bag(b, a) = e_a + decay * e_b, so the b contribution shrinks by 0.9
  for (int i = 0; i < scorer.vocab_size(); ++i) {
    const double b_contrib = sb[i] - s0[i];
    CHECK(sba[i] == doctest::Approx(sa[i] + 0.9 * b_contrib).epsilon(1e-9));
  }
}

TEST_CASE("toy scorer rejects malformed inputs") {
  const ToyScorer scorer(small_params());
  CHECK_THROWS_AS(scorer.score(visual_of({1.0}), std::vector<int>{}),
                  ContractError);
  const VisualInput v = visual_of({0, 0, 0, 0, 0, 0});
  CHECK_THROWS_AS(scorer.score(v, std::vector<int>{24}), ContractError);
  CHECK_THROWS_AS(scorer.score(v, std::vector<int>{-1}), ContractError);
}

TEST_CASE("toy scorer output is mode-independent") {
  const ToyScorer serial(small_params(), kernels::Mode::Serial);
  const ToyScorer parallel(small_params(), kernels::Mode::Parallel);
  const VisualInput v = visual_of({0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  const std::vector<int> ctx{1, 2, 3, 2, 1};
  CHECK(serial.score(v, ctx) == parallel.score(v, ctx));
}

TEST_CASE("the recorded trace fixture loads with fills and eos") {
  const LogitTrace trace =
      LogitTrace::load_jsonl(testutil::data_path("fig2_trace.jsonl"));
  CHECK(trace.vocabulary().size() == 8);
  CHECK(trace.eos_token() == "</s>");
  const LogitsVector at_t = trace.logits_for("test", 1);
  REQUIRE(at_t.size() == 8);
  CHECK(at_t[0] == 13.297);  // _gray
  CHECK(at_t[1] == 13.5);    // _green
  CHECK(at_t[7] == 1.0);     // </s>
  // unnamed candidates sit 10 below the entry's lowest named score
  CHECK(at_t[5] == -9.0);  // _fog
  CHECK(at_t[6] == -9.0);  // _mist
  CHECK_THROWS_AS(trace.logits_for("nope", 0), ContractError);
  CHECK_THROWS_AS(trace.logits_for("test", 3), ContractError);
}

TEST_CASE("trace loading rejects malformed files") {
  const std::string dir = testutil::scratch_dir("trace_errors");
  const auto load = [&](const std::string& name, const std::string& content) {
    testutil::write_file(dir + "/" + name, content);
    return LogitTrace::load_jsonl(dir + "/" + name);
  };
  CHECK_THROWS_AS(LogitTrace::load_jsonl(dir + "/missing.jsonl"), IoError);
  CHECK_THROWS_AS(load("empty.jsonl", "\n\n"), ContractError);
  CHECK_THROWS_AS(load("noheader.jsonl",
                       R"({"visual_id": "a", "step": 0, "scores": {"x": 1}})"),
                  ContractError);
  CHECK_THROWS_AS(load("dupvocab.jsonl", R"({"vocabulary": ["x", "x"]})"),
                  ContractError);
  CHECK_THROWS_AS(load("badeos.jsonl", R"({"vocabulary": ["x"], "eos": "y"})"),
                  ContractError);
  CHECK_THROWS_AS(
      load("unknowntok.jsonl",
           "{\"vocabulary\": [\"x\"]}\n"
           R"({"visual_id": "a", "step": 0, "scores": {"y": 1.0}})"),
      ContractError);
  CHECK_THROWS_AS(
      load("dupentry.jsonl",
           "{\"vocabulary\": [\"x\"]}\n"
           "{\"visual_id\": \"a\", \"step\": 0, \"scores\": {\"x\": 1.0}}\n"
           R"({"visual_id": "a", "step": 0, "scores": {"x": 2.0}})"),
      ContractError);
  // steps must be contiguous from zero per visual
  CHECK_THROWS_AS(
      load("gap.jsonl",
           "{\"vocabulary\": [\"x\"]}\n"
           R"({"visual_id": "a", "step": 1, "scores": {"x": 1.0}})"),
      ContractError);
  // an explicit fill must undercut every named score
  CHECK_THROWS_AS(
      load("badfill.jsonl",
           "{\"vocabulary\": [\"x\", \"y\"], \"fill_value\": 2.0}\n"
           R"({"visual_id": "a", "step": 0, "scores": {"x": 1.0}})"),
      ContractError);
  const LogitTrace ok =
      load("explicitfill.jsonl",
           "{\"vocabulary\": [\"x\", \"y\"], \"fill_value\": -100.0}\n"
           R"({"visual_id": "a", "step": 0, "scores": {"x": 1.0}})");
  CHECK(ok.logits_for("a", 0) == LogitsVector{1.0, -100.0});
}

TEST_CASE("trace scorer maps context growth onto recorded steps") {
  const LogitTrace trace =
      LogitTrace::load_jsonl(testutil::data_path("fig2_trace.jsonl"));
  const TraceScorer scorer(trace, 2);
  CHECK(scorer.vocab_size() == 8);
  CHECK(scorer.eos_id() == 7);
  const VisualInput test{"test", {}};
  const std::vector<int> base_ctx{0, 1};
  const std::vector<int> grown{0, 1, 3};
  CHECK(scorer.score(test, base_ctx) == trace.logits_for("test", 0));
  CHECK(scorer.score(test, grown) == trace.logits_for("test", 1));
  CHECK_THROWS_AS(scorer.score(test, std::vector<int>{0}), ContractError);
  CHECK_THROWS_AS(TraceScorer(trace, -1), ContractError);
}
