// End-to-end runs of the voicesep executable.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"
#include "voicesep/score_io.h"

namespace voicesep {
namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "voicesep_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_ / "train");
    fs::create_directories(dir_ / "test");
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static int run(const std::string& args) {
    const std::string cmd = std::string(VOICESEP_CLI) + " " + args + " >" + (dir_ / "stdout.txt").string() +
                            " 2>" + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  static std::string out() { return read_file(dir_ / "stdout.txt"); }
  static std::string p(const std::string& name) { return (dir_ / name).string(); }

  static fs::path dir_;
};

fs::path Cli::dir_;

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("graph --window"), 1);
  EXPECT_EQ(run("--help"), 0);
  write_file_atomic(p("bad.json"), "{\"divisions\": 4, \"measures\": [], \"notes\": []}");
  EXPECT_EQ(run("graph " + p("bad.json")), 2);
  write_file_atomic(p("broken.json"), "{");
  EXPECT_EQ(run("graph " + p("broken.json")), 2);
  EXPECT_EQ(run("graph " + p("missing.json")), 3);
  EXPECT_NE(read_file(p("stderr.txt")).find("missing.json"), std::string::npos);
}

TEST_F(Cli, GenerateGraphFeaturesExport) {
  ASSERT_EQ(run("generate --seed 5 --voices 2 --notes-per-voice 6 -o " + p("g.json")), 0);
  ASSERT_EQ(run("generate --seed 5 --voices 2 --notes-per-voice 6"), 0);
  EXPECT_EQ(out(), read_file(p("g.json")));

  ASSERT_EQ(run("graph " + p("g.json")), 0);
  const auto graph = nlohmann::json::parse(out());
  EXPECT_EQ(graph["num_nodes"], 12);
  EXPECT_EQ(graph["coverage"]["fraction"], 1.0);

  ASSERT_EQ(run("features " + p("g.json") + " --format csv -o " + p("f.csv")), 0);
  const std::string csv = read_file(p("f.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
  ASSERT_EQ(run("features " + p("g.json") + " -o " + p("f.bin")), 0);
  EXPECT_EQ(fs::file_size(p("f.bin")), 4 + 4 + 8 + 8 + 12u * 41u * 8u);

  ASSERT_EQ(run("export " + p("g.json") + " --format svg"), 0);
  EXPECT_NE(out().find("<svg"), std::string::npos);
  ASSERT_EQ(run("export " + p("g.json") + " --format dot"), 0);
  EXPECT_NE(out().find("digraph"), std::string::npos);
}

TEST_F(Cli, TrainPredictEval) {
  for (int i = 0; i < 3; ++i) {
    ASSERT_EQ(run("generate --seed " + std::to_string(i) + " --voices 2 --notes-per-voice 8 -o " +
                  p("train/p" + std::to_string(i) + ".json")),
              0);
  }
  ASSERT_EQ(run("generate --seed 10 --voices 2 --notes-per-voice 8 -o " + p("test/t.json")), 0);
  const nlohmann::json config = {{"train", "train"},
                                 {"test", "test"},
                                 {"model", {{"hidden", 16}, {"jk_hidden", 8}}},
                                 {"epochs", 2},
                                 {"checkpoint_dir", "run"}};
  write_file_atomic(p("config.json"), config.dump());
  ASSERT_EQ(run("train --config " + p("config.json") + " -q"), 0) << read_file(p("stderr.txt"));
  ASSERT_TRUE(fs::exists(p("run/best.ckpt")));
  ASSERT_TRUE(fs::exists(p("run/train_log.csv")));

  ASSERT_EQ(run("predict --checkpoint " + p("run/best.ckpt") + " " + p("test/t.json") + " -o " + p("voiced.json") +
                " --links " + p("links.json")),
            0)
      << read_file(p("stderr.txt"));
  const Score voiced = parse_score(read_file(p("voiced.json")));
  EXPECT_TRUE(voiced.fully_labeled());
  EXPECT_EQ(voiced.notes.size(), 16u);
  const auto links = nlohmann::json::parse(read_file(p("links.json")));
  ASSERT_TRUE(links["links"].is_array());

  // Idempotence: predicting on the voiced output gives the same links.
  ASSERT_EQ(run("predict --checkpoint " + p("run/best.ckpt") + " " + p("voiced.json") + " -o " + p("voiced2.json") +
                " --links " + p("links2.json")),
            0);
  EXPECT_EQ(read_file(p("links.json")), read_file(p("links2.json")));
  EXPECT_EQ(read_file(p("voiced.json")), read_file(p("voiced2.json")));

  ASSERT_EQ(run("eval --checkpoint " + p("run/best.ckpt") + " --config " + p("config.json")), 0);
  const auto report = nlohmann::json::parse(out());
  EXPECT_TRUE(report.contains("none"));
  EXPECT_TRUE(report.contains("la"));
  EXPECT_EQ(report["pieces"].size(), 1u);

  nlohmann::json mismatch = config;
  mismatch["model"]["hidden"] = 32;
  write_file_atomic(p("mismatch.json"), mismatch.dump());
  EXPECT_EQ(run("eval --checkpoint " + p("run/best.ckpt") + " --config " + p("mismatch.json")), 3);
}

TEST_F(Cli, SingleNoteIsOneVoice) {
  const nlohmann::json config = {{"train", "train1"}, {"model", {{"hidden", 8}, {"jk_hidden", 4}}},
                                 {"epochs", 1}, {"checkpoint_dir", "run1"}};
  fs::create_directories(dir_ / "train1");
  ASSERT_EQ(run("generate --seed 1 --voices 2 --notes-per-voice 4 -o " + p("train1/a.json")), 0);
  write_file_atomic(p("config1.json"), config.dump());
  ASSERT_EQ(run("train -q --config " + p("config1.json")), 0);
  write_file_atomic(p("one.json"),
                    R"({"divisions": 4, "measures": [{"index": 0, "onset": 0, "duration": 16}],
                        "notes": [{"id": "n", "onset": 0, "duration": 4, "pitch": 60}]})");
  ASSERT_EQ(run("predict --checkpoint " + p("run1/best.ckpt") + " " + p("one.json")), 0);
  const Score s = parse_score(out());
  ASSERT_EQ(s.notes.size(), 1u);
  EXPECT_EQ(s.notes[0].voice, 0);
}

}  // namespace
}  // namespace voicesep
