// End-to-end checks of the command-line surface through a subprocess:
// subcommand wiring, exit-code conventions, and file outputs.

#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using testutil::CliResult;
using testutil::run_cli;

namespace {

const std::string kRecordsJsonl =
    R"({"id": "bus", "semantic_embedding": [1.0, 0.0, 0.0], "appearance_embedding": [1.0, 0.0], "captions": ["a red bus parked"], "split": "train"})"
    "\n"
    R"({"id": "truck", "semantic_embedding": [0.9, 0.1, 0.0], "appearance_embedding": [0.9, 0.1], "captions": ["a photo of trucks"], "split": "restval"})"
    "\n"
    R"({"id": "sky", "semantic_embedding": [0.0, 0.0, 1.0], "appearance_embedding": [0.0, 1.0], "captions": ["blue sky only"]})"
    "\n";

std::string fig2() { return testutil::data_path("fig2_trace.jsonl"); }

}  // namespace

TEST_CASE("cli help and usage errors") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("decode --help").exit_code == 0);
  CHECK(run_cli("frobnicate").exit_code == 2);
  CHECK(run_cli("").exit_code == 2);            // a subcommand is required
  CHECK(run_cli("decode").exit_code == 2);      // missing required flags
  CHECK(run_cli("index search --index x.pnsv").exit_code == 2);
}

TEST_CASE("index build and search round-trip through files") {
  const std::string dir = testutil::scratch_dir("cli_index");
  testutil::write_file(dir + "/records.jsonl", kRecordsJsonl);
  const std::string index = dir + "/refs.pnsv";

  const CliResult built =
      run_cli("index build --records " + dir + "/records.jsonl --out " + index);
  CHECK(built.exit_code == 0);
  CHECK(built.out.find("3 records") != std::string::npos);
  // the manifest sidecar records digests of every input
  const nlohmann::json manifest =
      nlohmann::json::parse(testutil::read_file(index + ".manifest.json"));
  CHECK(manifest["inputs"][0]["digest"].get<std::string>().starts_with("fnv1a:"));
  CHECK(manifest["tool_version"] == "0.1.0");

  testutil::write_file(dir + "/query.json", "[1.0, 0.0, 0.0, 1.0, 0.0]");
  const CliResult hits =
      run_cli("index search --index " + index + " --query " + dir +
              "/query.json --k 2");
  CHECK(hits.exit_code == 0);
  CHECK(hits.out.find("1\tbus\t") == 0);
  CHECK(hits.out.find("\ntruck\t") == std::string::npos);  // rank column first
  CHECK(hits.out.find("2\ttruck\t") != std::string::npos);

  testutil::write_file(dir + "/block.txt", "bus\n");
  const CliResult blocked =
      run_cli("index search --index " + index + " --query " + dir +
              "/query.json --k 1 --blocklist " + dir + "/block.txt");
  CHECK(blocked.exit_code == 0);
  CHECK(blocked.out.find("1\ttruck\t") == 0);

  // text-driven rerank appends a score column and reorders
  const CliResult reranked = run_cli(
      "index search --index " + index + " --query " + dir +
      "/query.json --k 3 --rerank-bleu1 --query-text \"Is there a photo of trucks?\"");
  CHECK(reranked.exit_code == 0);
  CHECK(reranked.out.find("1\ttruck\t") == 0);

  CHECK(run_cli("index search --index " + index + " --query " + dir +
                "/query.json --k 0").exit_code == 2);
  CHECK(run_cli("index search --index " + index + " --query " + dir +
                "/query.json --k 2 --rerank-bleu1").exit_code == 2);
  CHECK(run_cli("index search --index " + dir + "/absent.pnsv --query " + dir +
                "/query.json --k 1").exit_code == 3);
  testutil::write_file(dir + "/broken.jsonl", "{oops}\n");
  const CliResult bad_build =
      run_cli("index build --records " + dir + "/broken.jsonl --out " + dir +
              "/x.pnsv");
  CHECK(bad_build.exit_code == 4);
  CHECK(bad_build.err.find("line 1") != std::string::npos);
}

TEST_CASE("decode replays a trace deterministically") {
  const std::string dir = testutil::scratch_dir("cli_decode");
  const std::string common = "decode --scorer trace --trace " + fig2();

  const CliResult a = run_cli(common + " --out " + dir + "/a");
  REQUIRE(a.exit_code == 0);
  CHECK(testutil::read_file(dir + "/a/tokens.txt") == "_yellow _gray\n");
  const std::string breakdown = testutil::read_file(dir + "/a/breakdown.csv");
  CHECK(breakdown.starts_with("step,candidate,base,txt,img,knn_1"));
  CHECK(breakdown.find("13.297") != std::string::npos);

  // identical config and seed give byte-identical outputs
  const CliResult b = run_cli(common + " --out " + dir + "/b");
  REQUIRE(b.exit_code == 0);
  CHECK(testutil::read_file(dir + "/b/tokens.txt") ==
        testutil::read_file(dir + "/a/tokens.txt"));
  CHECK(testutil::read_file(dir + "/b/breakdown.csv") == breakdown);

  const nlohmann::json manifest = nlohmann::json::parse(
      testutil::read_file(dir + "/a/manifest.json"));
  CHECK(manifest["seed"] == 0);
  CHECK(manifest["config"]["k"] == 4);

  const CliResult base = run_cli(common + " --baseline --out " + dir + "/base");
  REQUIRE(base.exit_code == 0);
  CHECK(testutil::read_file(dir + "/base/tokens.txt") == "_yellow _green\n");
}

TEST_CASE("decode honors config files with flag overrides") {
  const std::string dir = testutil::scratch_dir("cli_decode_cfg");
  testutil::write_file(dir + "/cfg.json",
                       R"({"k": 4, "m": 50, "max_tokens": 1})");
  const CliResult one =
      run_cli("decode --scorer trace --trace " + fig2() + " --config " + dir +
              "/cfg.json --out " + dir + "/one");
  REQUIRE(one.exit_code == 0);
  CHECK(testutil::read_file(dir + "/one/tokens.txt") == "_yellow\n");

  // --max-tokens overrides the config file value
  const CliResult full =
      run_cli("decode --scorer trace --trace " + fig2() + " --config " + dir +
              "/cfg.json --max-tokens 10 --out " + dir + "/full");
  REQUIRE(full.exit_code == 0);
  CHECK(testutil::read_file(dir + "/full/tokens.txt") == "_yellow _gray\n");

  testutil::write_file(dir + "/bad.json", R"({"mystery": 1})");
  CHECK(run_cli("decode --scorer trace --trace " + fig2() + " --config " + dir +
                "/bad.json --out " + dir + "/x").exit_code == 4);
}

TEST_CASE("decode maps failures onto exit codes") {
  const std::string dir = testutil::scratch_dir("cli_decode_err");
  CHECK(run_cli("decode --scorer trace --trace " + dir +
                "/missing.jsonl --out " + dir + "/x").exit_code == 3);
  CHECK(run_cli("decode --scorer bogus --trace " + fig2() + " --out " + dir +
                "/x").exit_code == 2);
  CHECK(run_cli("decode --scorer trace --trace " + fig2() +
                " --strategy beam --out " + dir + "/x").exit_code == 2);
  CHECK(run_cli("decode --scorer trace --trace " + fig2() +
                " --jsd-threshold abc --out " + dir + "/x").exit_code == 2);
  CHECK(run_cli("decode --scorer trace --trace " + fig2() + " --m 0 --out " +
                dir + "/x").exit_code == 2);
  // a reference id absent from the trace is a data error at a specific step
  const CliResult missing_knn =
      run_cli("decode --scorer trace --trace " + fig2() +
              " --knn-ids nope1,nope2,nope3,nope4 --out " + dir + "/x");
  CHECK(missing_knn.exit_code == 4);
  CHECK(missing_knn.err.find("decode step 0") != std::string::npos);
  // prompt tokens must exist in the trace vocabulary
  CHECK(run_cli("decode --scorer trace --trace " + fig2() +
                " --prompt zebra --out " + dir + "/x").exit_code == 4);
}

TEST_CASE("decode runs the toy scorer over retrieved references") {
  const std::string dir = testutil::scratch_dir("cli_decode_toy");
  // toy visuals are 6-dimensional; index halves are 3 + 3
  std::string records;
  for (int r = 0; r < 6; ++r) {
    records += R"({"id": "ref)" + std::to_string(r) +
               R"(", "semantic_embedding": [)" + std::to_string(1.0 + r) +
               R"(, 1.0, 0.5], "appearance_embedding": [0.5, )" +
               std::to_string(1.0 + r) + R"(, 1.0]})" + "\n";
  }
  testutil::write_file(dir + "/records.jsonl", records);
  REQUIRE(run_cli("index build --records " + dir + "/records.jsonl --out " +
                  dir + "/refs.pnsv").exit_code == 0);
  testutil::write_file(dir + "/visual.json",
                       R"({"shape": [6], "values": [0.4, -0.2, 0.9, 0.1, 0.7, -0.5]})");

  const std::string cmd = "decode --scorer toy --visual " + dir +
                          "/visual.json --toy-dim 6 --toy-vocab 32 --index " +
                          dir + "/refs.pnsv --k 2 --m 8 --max-tokens 5 --out ";
  const CliResult a = run_cli(cmd + dir + "/a");
  REQUIRE(a.exit_code == 0);
  const CliResult b = run_cli(cmd + dir + "/b");
  REQUIRE(b.exit_code == 0);
  CHECK(testutil::read_file(dir + "/a/tokens.txt") ==
        testutil::read_file(dir + "/b/tokens.txt"));
  CHECK(testutil::read_file(dir + "/a/breakdown.csv") ==
        testutil::read_file(dir + "/b/breakdown.csv"));

  // k references must be retrievable after blocklisting
  testutil::write_file(dir + "/block.txt", "ref0\nref1\nref2\nref3\nref4\n");
  CHECK(run_cli("decode --scorer toy --visual " + dir +
                "/visual.json --toy-dim 6 --toy-vocab 32 --index " + dir +
                "/refs.pnsv --k 2 --blocklist " + dir + "/block.txt --out " +
                dir + "/x").exit_code == 4);
  // visual dimension must match the index record dimension
  testutil::write_file(dir + "/short.json",
                       R"({"shape": [2], "values": [0.4, -0.2]})");
  CHECK(run_cli("decode --scorer toy --visual " + dir +
                "/short.json --toy-dim 2 --index " + dir +
                "/refs.pnsv --k 2 --out " + dir + "/x").exit_code == 4);
}

TEST_CASE("analyze renders decode output tables") {
  const std::string dir = testutil::scratch_dir("cli_analyze");
  REQUIRE(run_cli("decode --scorer trace --trace " + fig2() + " --out " + dir +
                  "/run").exit_code == 0);

  const CliResult md =
      run_cli("analyze --breakdown " + dir + "/run/breakdown.csv --top 8");
  CHECK(md.exit_code == 0);
  CHECK(md.out.find("### Step 1 - chosen: _gray") != std::string::npos);
  CHECK(md.out.find("_mist") != std::string::npos);  // top 8 of 8 candidates
  CHECK(md.out.find("\x1b[") == std::string::npos);  // no color off a tty

  const CliResult top2 =
      run_cli("analyze --breakdown " + dir + "/run/breakdown.csv --top 2");
  CHECK(top2.exit_code == 0);
  CHECK(top2.out.find("_mist") == std::string::npos);

  const CliResult csv = run_cli("analyze --breakdown " + dir +
                                "/run/breakdown.csv --top 2 --format csv --out " +
                                dir + "/top.csv");
  CHECK(csv.exit_code == 0);
  CHECK(testutil::read_file(dir + "/top.csv")
            .starts_with("step,candidate,base"));
  CHECK(nlohmann::json::parse(
            testutil::read_file(dir + "/top.csv.manifest.json"))["inputs"]
            .size() == 1);

  CHECK(run_cli("analyze --breakdown " + dir + "/run/breakdown.csv --top 0")
            .exit_code == 2);
  CHECK(run_cli("analyze --breakdown " + dir + "/absent.csv --top 2")
            .exit_code == 3);
  testutil::write_file(dir + "/bad.csv", "who,what\n");
  CHECK(run_cli("analyze --breakdown " + dir + "/bad.csv --top 2").exit_code ==
        4);
}

TEST_CASE("diffuse noises a tensor reproducibly") {
  const std::string dir = testutil::scratch_dir("cli_diffuse");
  testutil::write_file(dir + "/x.json",
                       R"({"shape": [4], "values": [1.0, -1.0, 0.5, 2.0]})");
  const std::string cmd =
      "diffuse --in " + dir + "/x.json --t 900 --seed 11 --out ";
  REQUIRE(run_cli(cmd + dir + "/a.json").exit_code == 0);
  REQUIRE(run_cli(cmd + dir + "/b.json").exit_code == 0);
  CHECK(testutil::read_file(dir + "/a.json") ==
        testutil::read_file(dir + "/b.json"));
  const nlohmann::json noised =
      nlohmann::json::parse(testutil::read_file(dir + "/a.json"));
  CHECK(noised["values"].size() == 4);
  CHECK(noised["shape"] == nlohmann::json::array({4}));
  // a different seed moves the noise
  REQUIRE(run_cli("diffuse --in " + dir + "/x.json --t 900 --seed 12 --out " +
                  dir + "/c.json").exit_code == 0);
  CHECK(testutil::read_file(dir + "/c.json") !=
        testutil::read_file(dir + "/a.json"));

  CHECK(run_cli("diffuse --in " + dir + "/x.json --t 0 --out " + dir +
                "/x2.json").exit_code == 2);
  CHECK(run_cli("diffuse --in " + dir + "/x.json --t 1001 --out " + dir +
                "/x2.json").exit_code == 2);
  CHECK(run_cli("diffuse --in " + dir + "/x.json --t 5 --T 4 --out " + dir +
                "/x2.json").exit_code == 2);
  CHECK(run_cli("diffuse --in " + dir + "/missing.json --t 1 --out " + dir +
                "/x2.json").exit_code == 3);
}

TEST_CASE("eval scores yes-no answer files") {
  const std::string dir = testutil::scratch_dir("cli_eval");
  testutil::write_file(
      dir + "/pope.jsonl",
      R"({"image_id": "a", "question": "q1", "gold": "yes", "prediction": "Yes"})"
      "\n"
      R"({"image_id": "b", "question": "q2", "gold": "no", "prediction": "yes"})"
      "\n"
      R"({"image_id": "c", "question": "q3", "gold": "no", "prediction": "no"})"
      "\n");
  const CliResult pope = run_cli("eval --metric pope --in " + dir +
                                 "/pope.jsonl --out " + dir + "/pope.json");
  CHECK(pope.exit_code == 0);
  const nlohmann::json report = nlohmann::json::parse(pope.out);
  CHECK(report["metric"] == "pope");
  CHECK(report["counts"]["fp"] == 1);
  CHECK(nlohmann::json::parse(testutil::read_file(dir + "/pope.json")) ==
        report);

  testutil::write_file(
      dir + "/mme.jsonl",
      R"({"image_id": "img1", "question": "q1", "gold": "yes", "prediction": "yes"})"
      "\n"
      R"({"image_id": "img1", "question": "q2", "gold": "no", "prediction": "no"})"
      "\n");
  const CliResult mme = run_cli("eval --metric mme --in " + dir +
                                "/mme.jsonl --md " + dir + "/mme.md");
  CHECK(mme.exit_code == 0);
  CHECK(nlohmann::json::parse(mme.out)["combined"] == 200.0);
  CHECK(testutil::read_file(dir + "/mme.md").find("| combined | 200.0000 |") !=
        std::string::npos);

  CHECK(run_cli("eval --metric bogus --in " + dir + "/pope.jsonl").exit_code ==
        2);
  CHECK(run_cli("eval --metric pope --in " + dir + "/absent.jsonl").exit_code ==
        3);
  testutil::write_file(dir + "/badgold.jsonl",
                       R"({"image_id": "a", "question": "q", "gold": "huh", "prediction": "yes"})");
  CHECK(run_cli("eval --metric pope --in " + dir + "/badgold.jsonl").exit_code ==
        4);
  // an unpaired image is a data error for the paired metric
  testutil::write_file(
      dir + "/unpaired.jsonl",
      R"({"image_id": "solo", "question": "q", "gold": "yes", "prediction": "yes"})"
      "\n");
  CHECK(run_cli("eval --metric mme --in " + dir + "/unpaired.jsonl").exit_code ==
        4);
}
