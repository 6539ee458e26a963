#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>

#include "test_support.hpp"

namespace fedrec {
namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(FEDREC_CLI) + " " + args + " 2>/dev/null";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    meta_ = dir_ / "meta.jsonl";
    write(meta_,
          R"({"item_id": "m1", "title": "The Shawshank Redemption", "attributes": ["Thriller"]})" "\n"
          R"({"item_id": "m2", "title": "Ex Machina", "attributes": ["Sci-Fi", "Thriller"]})" "\n"
          R"({"item_id": "m3", "title": "Whiplash", "attributes": ["Drama"]})" "\n"
          R"({"item_id": "m4", "title": "Unchained", "attributes": ["Drama", "Western"]})" "\n");
  }
  std::string meta() const { return "--metadata " + meta_.string(); }

  testing::TempDir dir_;
  std::filesystem::path meta_;
};

TEST_F(Cli, RenderGoldens) {
  auto r = run("render " + meta() + " --what query --history m1,m2");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out,
            "query: The Shawshank Redemption, an item about Thriller; "
            "Ex Machina, an item about Sci-Fi, Thriller\n");
  r = run("render " + meta() + " --what passage --item m3");
  EXPECT_EQ(r.out, "passage: Whiplash, an item about Drama\n");
  r = run("render " + meta() + " --what passage --item m4 --no-attributes");
  EXPECT_EQ(r.out, "passage: Unchained\n");
  r = run("render " + meta() + " --what prompt --profile movies --history m1 --candidates m3,m4");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("[system]\nYou are a helpful movie fan and movie reviewer", 0), 0u);
  EXPECT_NE(r.out.find("1. Whiplash\n2. Unchained\n"), std::string::npos);
}

TEST_F(Cli, ParseAndValidationErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("render " + meta() + " --what poem").code, 2);
  EXPECT_EQ(run("render --metadata " + (dir_ / "absent.jsonl").string() + " --what query").code,
            2);
  write(dir_ / "bad.json", R"({"hybrid": {"lamda": 0.3}})");
  EXPECT_EQ(run("--config " + (dir_ / "bad.json").string() + " split").code, 2);
  write(dir_ / "masked.json", R"({"ablation": {"use_id": false, "use_text": false}})");
  EXPECT_EQ(run("--config " + (dir_ / "masked.json").string() + " evaluate").code, 2);
}

TEST_F(Cli, RuntimeErrorsExitThree) {
  EXPECT_EQ(run("render " + meta() + " --what query --history m9").code, 2);
  std::ifstream smoke(FEDREC_CONFIG_DIR "/smoke.json");
  auto cfg = nlohmann::json::parse(smoke);
  cfg["id"]["learning_rate"] = 1e300;
  write(dir_ / "diverge.json", cfg.dump());
  EXPECT_EQ(run("--config " + (dir_ / "diverge.json").string() + " train").code, 3);
}

TEST_F(Cli, RerankWritesOneOutcomePerLine) {
  const auto cands = dir_ / "cands.jsonl";
  write(cands,
        R"({"user_id": "u1", "items": ["m3", "m4", "m2"], "history": ["m1"], "ground_truth": "m2"})" "\n"
        R"({"user_id": "u2", "items": ["m3", "m4"], "history": ["m1"], "ground_truth": "m2"})" "\n");
  const auto r = run("rerank --candidates " + cands.string() + " " + meta() + " --client oracle --gate");
  ASSERT_EQ(r.code, 0);
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("source"), "reranked");
  EXPECT_EQ(j.at("items"), (nlohmann::json{"m2", "m3", "m4"}));
  std::getline(lines, line);
  j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("source"), "skipped");
  EXPECT_EQ(j.at("items"), (nlohmann::json{"m3", "m4"}));
}

TEST_F(Cli, IngestFiltersAndWritesSequences) {
  std::string tsv = "user_id\titem_id\ttimestamp\n";
  for (int u = 0; u < 6; ++u) {
    for (int i = 0; i < 5; ++i) {
      tsv += "u" + std::to_string(u) + "\ti" + std::to_string(i) + "\t" + std::to_string(10 * u + i) + "\n";
    }
  }
  tsv += "lonely\ti0\t99\n";
  write(dir_ / "x.tsv", tsv);
  std::string items;
  for (int i = 0; i < 5; ++i) {
    items += R"({"item_id": "i)" + std::to_string(i) + R"(", "title": "T)" + std::to_string(i) + "\"}\n";
  }
  write(dir_ / "items.jsonl", items);
  const auto r = run("--out " + (dir_ / "out").string() + " ingest --interactions " +
                     (dir_ / "x.tsv").string() + " --metadata " + (dir_ / "items.jsonl").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(std::filesystem::exists(dir_ / "out" / "sequences.jsonl"));
  std::ifstream seqs(dir_ / "out" / "sequences.jsonl");
  std::string line;
  int count = 0;
  while (std::getline(seqs, line)) ++count;
  EXPECT_EQ(count, 6);
}

TEST_F(Cli, SmokeConfigRunsEverySubcommand) {
  const std::string cfg = "--config " FEDREC_CONFIG_DIR "/smoke.json ";
  const auto out = dir_ / "run";
  EXPECT_EQ(run(cfg + "--out " + out.string() + " train").code, 0);
  EXPECT_TRUE(std::filesystem::exists(out / "metrics.jsonl"));
  auto r = run(cfg + "evaluate --model " + (out / "checkpoints").string());
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("stage-1"), std::string::npos);
  r = run(cfg + "sweep --grid 0,0.5,1");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("best lambda"), std::string::npos);
  r = run(cfg + "--seed 5 ablate");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("w/o rerank"), std::string::npos);
  EXPECT_EQ(run(cfg + "split").code, 0);
}

}  // namespace
}  // namespace fedrec
