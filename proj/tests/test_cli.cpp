#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;  // stdout and stderr
};

Result run(const std::string& args) {
  const std::string cmd = std::string(WKLM_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("wklm_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Synthetic KB, documents and an ingested KB directory under dir_.
  void make_toy(int documents = 30) {
    ASSERT_EQ(run("make-synthetic --out " + q(dir_ / "syn") + " --seed 2 --documents " + std::to_string(documents))
                  .code,
              0);
    ASSERT_EQ(run("ingest-kb --entities " + q(dir_ / "syn" / "entities.jsonl") + " --triples " +
                  q(dir_ / "syn" / "triples.tsv") + " --out " + q(dir_ / "kb"))
                  .code,
              0);
  }

  Result build_corpus(const fs::path& out, const std::string& extra = "") {
    return run("build-corpus --kb " + q(dir_ / "kb") + " --docs " + q(dir_ / "syn" / "docs.jsonl") + " --out " +
               q(out) + " " + extra);
  }

  Result train(const fs::path& instances, const fs::path& out, const std::string& extra = "") {
    return run("train --instances " + q(instances) + " --model-config " + q(dir_ / "syn" / "model_config.json") +
               " --out " + q(out) + " " + extra);
  }

  fs::path dir_;
};

std::vector<std::vector<std::string>> read_tsv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, '\t')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("no-such-command").code, 1);
  EXPECT_EQ(run("ingest-kb --entities x.jsonl").code, 1);
  EXPECT_EQ(run("probe --kb a --templates b --checkpoint c --out d --scorer nonsense").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, DuplicateEntityIsDataError) {
  write_file(dir_ / "e.jsonl",
             "{\"id\":\"Q90\",\"name\":\"Paris\",\"aliases\":[],\"types\":[\"city\"]}\n"
             "{\"id\":\"Q90\",\"name\":\"Paris\",\"aliases\":[],\"types\":[\"city\"]}\n");
  write_file(dir_ / "t.tsv", "");
  const auto r = run("ingest-kb --entities " + q(dir_ / "e.jsonl") + " --triples " + q(dir_ / "t.tsv") + " --out " +
                     q(dir_ / "kb"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("Q90"), std::string::npos) << r.output;
}

TEST_F(Cli, MissingInputIsDataError) {
  EXPECT_EQ(run("ingest-kb --entities " + q(dir_ / "none.jsonl") + " --triples " + q(dir_ / "none.tsv") +
                " --out " + q(dir_ / "kb"))
                .code,
            2);
}

TEST_F(Cli, IngestIsDeterministic) {
  make_toy();
  ASSERT_EQ(run("ingest-kb --entities " + q(dir_ / "syn" / "entities.jsonl") + " --triples " +
                q(dir_ / "syn" / "triples.tsv") + " --out " + q(dir_ / "kb2"))
                .code,
            0);
  for (const auto* f : {"entities.jsonl", "triples.tsv", "type_index.json"})
    EXPECT_EQ(slurp(dir_ / "kb" / f), slurp(dir_ / "kb2" / f)) << f;
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "kb" / "manifest.json"));
  EXPECT_EQ(manifest["subcommand"], "ingest-kb");
  EXPECT_EQ(manifest["inputs"].size(), 2u);
}

TEST_F(Cli, BuildCorpusManifestRecordsDefaults) {
  make_toy();
  ASSERT_EQ(build_corpus(dir_ / "inst.jsonl").code, 0);
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "inst.jsonl.manifest.json"));
  EXPECT_EQ(manifest["config"]["chunk_size"], 512);
  EXPECT_EQ(manifest["config"]["replicas"], 10);
  EXPECT_DOUBLE_EQ(manifest["config"]["mask_ratio"].get<double>(), 0.05);
  EXPECT_EQ(manifest["config"]["seed"], 0);
}

TEST_F(Cli, FlagOverridesConfigFile) {
  make_toy();
  write_file(dir_ / "corpus.json", R"({"replicas": 3, "chunk_size": 64})");
  ASSERT_EQ(build_corpus(dir_ / "a.jsonl", "--config " + q(dir_ / "corpus.json")).code, 0);
  ASSERT_EQ(build_corpus(dir_ / "b.jsonl", "--config " + q(dir_ / "corpus.json") + " --replicas 2").code, 0);
  const auto a = nlohmann::json::parse(slurp(dir_ / "a.jsonl.manifest.json"));
  const auto b = nlohmann::json::parse(slurp(dir_ / "b.jsonl.manifest.json"));
  EXPECT_EQ(a["config"]["replicas"], 3);
  EXPECT_EQ(a["config"]["chunk_size"], 64);
  EXPECT_EQ(b["config"]["replicas"], 2);
  EXPECT_EQ(b["config"]["chunk_size"], 64);
}

TEST_F(Cli, OneReplicaGivesOneInstancePerChunk) {
  make_toy();
  ASSERT_EQ(build_corpus(dir_ / "inst.jsonl", "--replicas 1 --chunk-size 16").code, 0);
  const auto stats = nlohmann::json::parse(slurp(dir_ / "inst.jsonl.stats.json"));
  std::size_t lines = 0;
  std::istringstream in(slurp(dir_ / "inst.jsonl"));
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_GT(stats["chunks"].get<std::size_t>(), 0u);
  EXPECT_EQ(lines, stats["chunks"].get<std::size_t>());
  EXPECT_EQ(stats["instances"].get<std::size_t>(), lines);
}

TEST_F(Cli, MlmOnlyLogsZeroReplacementLoss) {
  make_toy(10);
  ASSERT_EQ(build_corpus(dir_ / "inst.jsonl", "--chunk-size 64").code, 0);
  const auto r = train(dir_ / "inst.jsonl", dir_ / "model", "--objective mlm_only --max-updates 5 --lr 1e-3 --mask-ratio 0.3");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto rows = read_tsv(dir_ / "model" / "trainlog.tsv");
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"update", "loss_repl", "loss_mlm", "acc_heldout", "seconds"}));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i][1], "0") << "row " << i;
    EXPECT_NE(rows[i][2], "0") << "row " << i;
  }
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "model" / "manifest.json"));
  EXPECT_EQ(manifest["config"]["train"]["objective"], "mlm_only");
}

TEST_F(Cli, BadTrainingFlagsAreUsageErrors) {
  make_toy(5);
  ASSERT_EQ(build_corpus(dir_ / "inst.jsonl", "--chunk-size 64").code, 0);
  EXPECT_EQ(train(dir_ / "inst.jsonl", dir_ / "m1", "--objective both").code, 1);
  EXPECT_EQ(train(dir_ / "inst.jsonl", dir_ / "m2", "--lr -1").code, 1);
}

TEST_F(Cli, UntrainedReplacementProbeIsAllTies) {
  make_toy(10);
  ASSERT_EQ(build_corpus(dir_ / "inst.jsonl", "--chunk-size 64").code, 0);
  ASSERT_EQ(train(dir_ / "inst.jsonl", dir_ / "model", "--max-updates 0").code, 0);
  const auto probe = [&](int k, const std::string& out) {
    return run("probe --kb " + q(dir_ / "kb") + " --templates " + q(dir_ / "syn" / "templates.json") +
               " --checkpoint " + q(dir_ / "model" / "model.bin") + " --scorer replacement --k " +
               std::to_string(k) + " --out " + q(dir_ / out));
  };
  // Every relation of the toy KB has 10 candidates and one answer per query,
  // so an all-tie ranking puts every target at rank 10.
  ASSERT_EQ(probe(9, "k9.tsv").code, 0);
  ASSERT_EQ(probe(10, "k10.tsv").code, 0);
  const auto k9 = read_tsv(dir_ / "k9.tsv");
  const auto k10 = read_tsv(dir_ / "k10.tsv");
  ASSERT_EQ(k9.size(), 5u);  // header, three relations, average
  EXPECT_EQ(k9[0], (std::vector<std::string>{"relation", "n_candidates", "avg_answers", "hits_at_k"}));
  for (std::size_t i = 1; i < k9.size(); ++i) {
    EXPECT_EQ(k9[i][1], "10");
    EXPECT_EQ(k9[i][3], "0") << k9[i][0];
    EXPECT_EQ(k10[i][3], "1") << k10[i][0];
  }
}

TEST_F(Cli, ProbeWithoutTemplateNamesRelation) {
  make_toy(5);
  ASSERT_EQ(build_corpus(dir_ / "inst.jsonl", "--chunk-size 64").code, 0);
  ASSERT_EQ(train(dir_ / "inst.jsonl", dir_ / "model", "--max-updates 0").code, 0);
  write_file(dir_ / "partial.json", R"({"R0": "[SUBJ] is in [OBJ] ."})");
  const auto r = run("probe --kb " + q(dir_ / "kb") + " --templates " + q(dir_ / "partial.json") + " --checkpoint " +
                     q(dir_ / "model" / "model.bin") + " --out " + q(dir_ / "r.tsv"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("R1"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("R2"), std::string::npos) << r.output;
}
