#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ocr/json_io.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string output;  // stdout and stderr
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(OCR_BIN) + " " + args + " 2>&1";
  CliResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) r.output.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A tiny pipeline built once per test process.
class CliPipeline : public ::testing::Test {
 protected:
  static fs::path dir;

  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / ("ocr_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const std::string d = dir.string();
    const std::string small = " --set demos.n=8 --set manifold.em.n_init=1";
    ASSERT_EQ(run_cli("demo-collect --out " + d + "/demos.jsonl" + small).code, 0);
    ASSERT_EQ(run_cli("build-rec --demos " + d + "/demos.jsonl --out " + d + "/rec.jsonl").code, 0);
    ASSERT_EQ(run_cli("fit-manifold --demos " + d + "/demos.jsonl --out " + d + "/raw.json" + small).code, 0);
    ASSERT_EQ(run_cli("calibrate --manifold " + d + "/raw.json --demos " + d + "/demos.jsonl --out " + d + "/m.json").code, 0);
    ASSERT_EQ(run_cli("train-base --demos " + d + "/demos.jsonl --out " + d + "/base.jsonl").code, 0);
    ASSERT_EQ(run_cli("train-inverse --rec " + d + "/rec.jsonl --out " + d + "/inv.jsonl").code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir); }

  static std::string policy_args() {
    const std::string d = dir.string();
    return " --base " + d + "/base.jsonl --inverse " + d + "/inv.jsonl --manifold " + d + "/m.json";
  }
};

fs::path CliPipeline::dir;

}  // namespace

TEST(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(run_cli("").code, 2); }

TEST(Cli, UnknownFlagIsUsageError) {
  const CliResult r = run_cli("eval --bogus 1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("code=2"), std::string::npos) << r.output;
}

TEST(Cli, MissingRequiredFlag) {
  const CliResult r = run_cli("build-rec --out /tmp/x.jsonl");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("--demos"), std::string::npos) << r.output;
}

TEST(Cli, UnknownConfigKey) {
  const CliResult r = run_cli("demo-collect --out /tmp/never.jsonl --set plan.alfa=1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("plan.alfa"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists("/tmp/never.jsonl"));
}

TEST(Cli, EmptyDatasetIsMissingFile) {
  const fs::path empty = fs::temp_directory_path() / "ocr_cli_empty.jsonl";
  std::ofstream(empty).close();
  const CliResult r = run_cli("fit-manifold --demos " + empty.string() + " --out /tmp/ocr_cli_never.json");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find(empty.string()), std::string::npos) << r.output;
  fs::remove(empty);
}

TEST(Cli, MissingInputIsMissingFile) {
  const CliResult r = run_cli("calibrate --manifold /nonexistent/m.json --demos /nonexistent/d.jsonl --out /tmp/x.json");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("/nonexistent/"), std::string::npos) << r.output;
}

TEST_F(CliPipeline, EvalWritesReportAndCsvDeterministically) {
  const std::string d = dir.string();
  const std::string common = "eval --seeds 0..3 --region ood" + policy_args();
  ASSERT_EQ(run_cli(common + " --out " + d + "/a.json --csv " + d + "/a.csv").code, 0);
  ASSERT_EQ(run_cli(common + " --jobs 3 --out " + d + "/b.json --csv " + d + "/b.csv").code, 0);
  EXPECT_EQ(slurp(d + "/a.json"), slurp(d + "/b.json"));
  EXPECT_EQ(slurp(d + "/a.csv"), slurp(d + "/b.csv"));
  const ocr::Json j = ocr::read_json_file(d + "/a.json");
  EXPECT_EQ(j.at("n_seeds"), 4);
  EXPECT_EQ(j.at("meta").at("command"), "eval");
  EXPECT_EQ(slurp(d + "/a.csv").rfind("# meta: ", 0), 0u);
}

TEST_F(CliPipeline, FlagPrecedence) {
  const std::string d = dir.string();
  std::ofstream(d + "/cfg.json") << R"({"plan": {"alpha": 6.0, "d_max": 150.0}, "joint": {"exec_per_cycle": 4}})";
  const std::string args = "rollout --seed 1 --config " + d + "/cfg.json --set plan.alpha=5 --set joint.exec_per_cycle=2 --alpha 4" +
                           policy_args() + " --out " + d + "/t.jsonl";
  ASSERT_EQ(run_cli(args).code, 0);
  std::ifstream in(d + "/t.jsonl");
  std::string header;
  std::getline(in, header);
  const ocr::Json cfg = ocr::Json::parse(header).at("meta").at("config");
  EXPECT_EQ(cfg.at("plan").at("alpha"), 4.0);
  EXPECT_EQ(cfg.at("plan").at("d_max"), 150.0);
  EXPECT_EQ(cfg.at("joint").at("exec_per_cycle"), 2);
}

TEST_F(CliPipeline, RerunIsByteIdentical) {
  const std::string d = dir.string();
  ASSERT_EQ(run_cli("rollout --seed 2 --svg " + d + "/r1.svg --out " + d + "/r1.jsonl" + policy_args()).code, 0);
  ASSERT_EQ(run_cli("rollout --seed 2 --svg " + d + "/r2.svg --out " + d + "/r2.jsonl" + policy_args()).code, 0);
  EXPECT_EQ(slurp(d + "/r1.jsonl"), slurp(d + "/r2.jsonl"));
  EXPECT_EQ(slurp(d + "/r1.svg"), slurp(d + "/r2.svg"));
  ASSERT_EQ(run_cli("train-base --demos " + d + "/demos.jsonl --out " + d + "/base2.jsonl").code, 0);
  EXPECT_EQ(slurp(d + "/base.jsonl"), slurp(d + "/base2.jsonl"));
}

TEST_F(CliPipeline, AugmentAndReport) {
  const std::string d = dir.string();
  const CliResult a = run_cli("augment --seeds 500000..500003 --demos " + d + "/demos.jsonl --out " + d + "/aug.jsonl --out-policy " + d +
                    "/base_aug.jsonl" + policy_args());
  ASSERT_EQ(a.code, 0) << a.output;
  ASSERT_EQ(run_cli("train-base --demos " + d + "/demos.jsonl --aug " + d + "/aug.jsonl --out " + d + "/base_aug2.jsonl").code, 0);
  ASSERT_EQ(run_cli("eval --policy base --seeds 0..1 --base " + d + "/base_aug.jsonl --out " + d + "/e.json").code, 0);
  const CliResult r = run_cli("report --reports " + d + "/e.json --svg " + d + "/s.svg --csv " + d + "/s.csv");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(slurp(d + "/s.svg").find("<svg"), std::string::npos);
  EXPECT_NE(slurp(d + "/s.csv").find("policy,region"), std::string::npos);
}
