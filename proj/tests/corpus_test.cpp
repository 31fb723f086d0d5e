// The shipped synthetic corpus matches its manifest.

#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "json.hpp"
#include "voicesep/score_io.h"
#include "voicesep/synthetic.h"

namespace voicesep {
namespace {

namespace fs = std::filesystem;

const fs::path kCorpus = fs::path(VOICESEP_SOURCE_DIR) / "data" / "synthetic";

TEST(Corpus, RegeneratesFromManifest) {
  const auto manifest = nlohmann::json::parse(read_file(kCorpus / "manifest.json"));
  std::set<std::string> splits;
  std::size_t count = 0;
  for (const auto& entry : manifest.at("pieces")) {
    const std::string file = entry.at("file");
    const Score regenerated = generate_synthetic_score(entry.at("seed").get<std::uint64_t>(), entry.at("voices"),
                                                       entry.at("notes_per_voice"));
    EXPECT_EQ(serialize_score(regenerated), read_file(kCorpus / file)) << file;
    splits.insert(file.substr(0, file.find('/')));
    ++count;
  }
  EXPECT_EQ(splits, (std::set<std::string>{"train", "val", "test"}));
  EXPECT_EQ(count, 30u);
}

TEST(Corpus, EveryFileIsListed) {
  const auto manifest = nlohmann::json::parse(read_file(kCorpus / "manifest.json"));
  std::set<std::string> listed;
  for (const auto& entry : manifest.at("pieces")) listed.insert(entry.at("file").get<std::string>());
  for (const auto& e : fs::recursive_directory_iterator(kCorpus)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    EXPECT_TRUE(listed.count(fs::relative(e.path(), kCorpus).generic_string())) << e.path();
  }
}

TEST(Corpus, VoiceCountsStayInRange) {
  const auto manifest = nlohmann::json::parse(read_file(kCorpus / "manifest.json"));
  for (const auto& entry : manifest.at("pieces")) {
    const Score s = load_score(kCorpus / entry.at("file").get<std::string>());
    std::set<int> voices;
    for (const auto& n : s.notes) voices.insert(*n.voice);
    EXPECT_GE(voices.size(), 2u);
    EXPECT_LE(voices.size(), 4u);
  }
}

}  // namespace
}  // namespace voicesep
