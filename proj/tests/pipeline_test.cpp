// Piece preparation, experiment configs, training loop, evaluation and
// exports.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>

#include <gtest/gtest.h>

#include "test_util.h"
#include "voicesep/errors.h"
#include "voicesep/export.h"
#include "voicesep/pipeline.h"
#include "voicesep/score_io.h"
#include "voicesep/synthetic.h"

namespace voicesep {
namespace {

namespace fs = std::filesystem;
using testing::four_note_score;
using testing::link_of;

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::size_t count_matches(const std::string& text, const std::string& pattern) {
  const std::regex re(pattern);
  return static_cast<std::size_t>(std::distance(std::sregex_iterator(text.begin(), text.end(), re),
                                                std::sregex_iterator()));
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.model.hidden = 16;
  c.model.jk_hidden = 8;
  c.epochs = 3;
  c.patience = 0;
  return c;
}

TEST(Postprocess, Names) {
  for (auto m : {Postprocess::kNone, Postprocess::kGreedy, Postprocess::kLinearAssignment}) {
    EXPECT_EQ(parse_postprocess(postprocess_name(m)), m);
  }
  EXPECT_THROW(parse_postprocess("hungarian"), ConfigError);
}

TEST(Piece, LabeledScoresArePreprocessed) {
  Score s = four_note_score();
  s.notes.push_back({"extra", 0, 2, 55, 0});
  s.validate();
  const Piece p = prepare_piece("p", s);
  EXPECT_EQ(p.removed, std::vector<std::string>{"extra"});
  EXPECT_EQ(p.score.notes.size(), 4u);
  ASSERT_TRUE(p.graph.targets.has_value());
  EXPECT_EQ(p.features.rows(), 4);
}

TEST(Piece, OracleScoresGiveCoverage) {
  // A voice with a long rest loses one link to the window, so an oracle
  // recovers exactly the covered links.
  Score s;
  s.measures = {{0, 0, 16}, {1, 16, 16}, {2, 32, 16}, {3, 48, 16}, {4, 64, 16}};
  s.notes = {{"a", 0, 4, 60, 0}, {"b", 4, 4, 62, 0}, {"c", 64, 4, 64, 0}, {"d", 0, 8, 48, 1}, {"e", 8, 8, 50, 1}};
  s.validate();
  const Piece p = prepare_piece("p", s);
  const std::set<Link> truth(p.graph.targets->links.begin(), p.graph.targets->links.end());
  LinkScores oracle;
  for (const auto& c : p.graph.candidates) oracle.push_back({c, truth.count(c) ? 1.0 : 0.0});
  const auto coverage = coverage_report(p.graph).fraction;
  for (auto mode : {Postprocess::kNone, Postprocess::kGreedy, Postprocess::kLinearAssignment}) {
    const auto m = link_metrics(postprocess_links(oracle, p.score, mode, 0.5), p.graph.targets->links);
    EXPECT_DOUBLE_EQ(m.recall, coverage);
    EXPECT_DOUBLE_EQ(m.precision, 1.0);
    EXPECT_NEAR(m.f1, 2 * coverage / (1 + coverage), 1e-12);
  }
}

TEST(Config, ParsesAndValidates) {
  TempDir dir("voicesep_config_test");
  write_file_atomic(dir.path() / "a.json", serialize_score(generate_synthetic_score(1, 2, 6)));
  write_file_atomic(dir.path() / "b.json", serialize_score(generate_synthetic_score(2, 2, 6)));
  const nlohmann::json j = {{"train", {"a.json"}},
                            {"val", {"b.json"}},
                            {"model", {{"hidden", 8}, {"heterogeneous", false}}},
                            {"loss", {{"reg_mode", "fixed"}, {"fixed_alpha", 1.0}}},
                            {"laplacian", {{"k", 4}}},
                            {"epochs", 5},
                            {"postprocess", "la"}};
  const ExperimentConfig c = parse_experiment_config(j, dir.path());
  EXPECT_EQ(c.model.hidden, 8u);
  EXPECT_EQ(c.model.input_dim, 25u);
  EXPECT_FALSE(c.model.heterogeneous);
  EXPECT_EQ(c.loss.alpha(3), 1.0);
  EXPECT_EQ(c.postprocess, Postprocess::kLinearAssignment);
  const Splits s = resolve_splits(c);
  EXPECT_EQ(s.train.size(), 1u);
  EXPECT_EQ(s.val.size(), 1u);

  EXPECT_THROW(parse_experiment_config({{"epochz", 3}}, dir.path()), ConfigError);
  EXPECT_THROW(parse_experiment_config({{"loss", {{"reg_mode", "sometimes"}}}}, dir.path()), ConfigError);
  EXPECT_THROW(parse_experiment_config({{"model", {{"input_dim", 41}}}, {"laplacian", {{"k", 4}}}}, dir.path()),
               ConfigError);

  auto overlap = parse_experiment_config({{"train", {"a.json"}}, {"test", {"a.json"}}}, dir.path());
  EXPECT_THROW(resolve_splits(overlap), ConfigError);
  auto missing = parse_experiment_config({{"train", {"nope.json"}}}, dir.path());
  EXPECT_THROW(resolve_splits(missing), ConfigError);
  EXPECT_THROW(resolve_splits(parse_experiment_config(nlohmann::json::object(), dir.path())), ConfigError);
}

TEST(Config, CorpusSplitAndDataRoot) {
  TempDir dir("voicesep_corpus_test");
  fs::create_directories(dir.path() / "corpus");
  for (int i = 0; i < 10; ++i) {
    write_file_atomic(dir.path() / "corpus" / ("p" + std::to_string(i) + ".json"),
                      serialize_score(generate_synthetic_score(static_cast<std::uint64_t>(i), 2, 4)));
  }
  write_file_atomic(dir.path() / "corpus" / "manifest.json", "{}");
  const auto c = parse_experiment_config({{"corpus", "corpus"}, {"split_seed", 3}}, dir.path());
  const Splits s = resolve_splits(c);
  EXPECT_EQ(s.train.size(), 9u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(resolve_splits(c).val, s.val);

  ::setenv("VOICESEP_DATA_ROOT", dir.path().c_str(), 1);
  const auto rooted = parse_experiment_config({{"corpus", "corpus"}}, "/elsewhere");
  ::unsetenv("VOICESEP_DATA_ROOT");
  EXPECT_EQ(rooted.corpus.at(0), dir.path() / "corpus");
}

TEST(Training, RequiresData) {
  EXPECT_THROW(train_model(tiny_config(), {}, {}), ConfigError);
  const Piece unlabeled = prepare_piece("u", four_note_score(false));
  EXPECT_THROW(train_model(tiny_config(), {unlabeled}, {}), MissingVoiceError);
}

TEST(Training, DeterministicLog) {
  const std::vector<Piece> train = {prepare_piece("a", generate_synthetic_score(1, 2, 8)),
                                    prepare_piece("b", generate_synthetic_score(2, 3, 6))};
  const auto a = train_model(tiny_config(), train, {});
  const auto b = train_model(tiny_config(), train, {});
  ASSERT_EQ(a.log.size(), 3u);
  EXPECT_EQ(training_log_csv(a.log), training_log_csv(b.log));
  EXPECT_EQ(a.log[0].alpha, 0.02);
  EXPECT_GT(a.log[0].l_clf, 0.0);
  auto no_reg = tiny_config();
  no_reg.loss.mode = RegularizationMode::kNone;
  const auto c = train_model(no_reg, train, {});
  EXPECT_EQ(c.log[0].l_reg, 0.0);
  EXPECT_EQ(c.log[0].alpha, 0.0);
}

TEST(Training, WritesCheckpointAndLog) {
  TempDir dir("voicesep_train_test");
  auto config = tiny_config();
  config.checkpoint_dir = dir.path() / "run";
  const std::vector<Piece> train = {prepare_piece("a", generate_synthetic_score(1, 2, 8))};
  const auto result = train_model(config, train, {});
  ASSERT_TRUE(fs::exists(config.checkpoint_dir / "best.ckpt"));
  const std::string log = read_file(config.checkpoint_dir / "train_log.csv");
  EXPECT_EQ(log.substr(0, log.find('\n')), "epoch,l_clf,l_reg,alpha,val_precision,val_recall,val_f1");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 4);

  const LoadedModel loaded = load_model(config.checkpoint_dir / "best.ckpt", config.model);
  EXPECT_EQ(loaded.model.config(), config.model);
  for (std::size_t i = 0; i < loaded.model.params().size(); ++i) {
    EXPECT_EQ(loaded.model.params()[i].value, result.model.params()[i].value);
  }
  ModelConfig other = config.model;
  other.hidden = 32;
  EXPECT_THROW(load_model(config.checkpoint_dir / "best.ckpt", other), CheckpointError);
}

TEST(Training, EarlyStopping) {
  auto config = tiny_config();
  config.epochs = 50;
  config.target_f1 = 0.0;
  const std::vector<Piece> train = {prepare_piece("a", generate_synthetic_score(1, 2, 8))};
  EXPECT_EQ(train_model(config, train, {}).log.size(), 1u);
  config.target_f1.reset();
  config.patience = 2;
  const auto r = train_model(config, train, {});
  EXPECT_LE(r.log.size(), r.best_epoch + 2);
}

TEST(Evaluate, AllModesRespectDegreesWithLa) {
  const std::vector<Piece> pieces = {prepare_piece("a", generate_synthetic_score(3, 3, 10))};
  const VoiceModel model(tiny_config().model, 1);
  for (const auto& piece : pieces) {
    const auto la = infer_piece(model, piece, Postprocess::kLinearAssignment);
    EXPECT_NO_THROW(check_degrees(la.links, piece.score.notes.size()));
    const auto greedy = infer_piece(model, piece, Postprocess::kGreedy);
    EXPECT_NO_THROW(check_degrees(greedy.links, piece.score.notes.size()));
  }
  const auto agg = evaluate_pieces(model, pieces, Postprocess::kNone);
  EXPECT_EQ(agg.per_piece.size(), 1u);
  EXPECT_EQ(agg.micro.counts.target, pieces[0].graph.targets->links.size());
}

TEST(Export, FourNoteSvg) {
  const Score s = four_note_score();
  const std::vector<Link> links = {link_of(s, "u", "x"), link_of(s, "v", "w")};
  const std::string svg = export_svg(s, links);
  EXPECT_EQ(count_matches(svg, "<rect class=\"note\""), 4u);
  EXPECT_EQ(count_matches(svg, "<rect"), 4u);
  EXPECT_EQ(count_matches(svg, "<line class=\"link\""), 2u);
  std::set<std::string> colors;
  const std::regex fill("class=\"note\"[^>]*fill=\"(#[0-9a-f]+)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), fill); it != std::sregex_iterator(); ++it) {
    colors.insert((*it)[1]);
  }
  EXPECT_EQ(colors.size(), 2u);
}

TEST(Export, EmptySvg) {
  Score s;
  s.measures = {{0, 0, 16}};
  s.validate();
  const std::string svg = export_svg(s, {});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_EQ(count_matches(svg, "<rect"), 0u);
}

TEST(Export, Dot) {
  const Score s = four_note_score();
  const std::string dot = export_dot(s, build_score_graph(s));
  EXPECT_EQ(count_matches(dot, "\n  n\\d+ \\[label"), 4u);
  EXPECT_EQ(count_matches(dot, "->"), 12u);

  const Score big = generate_synthetic_score(1, 4, 80);
  const ScoreGraph g = build_score_graph(big);
  try {
    export_dot(big, g);
    FAIL();
  } catch (const SizeError& e) {
    EXPECT_NE(std::string(e.what()).find("measure range"), std::string::npos);
  }
  EXPECT_NO_THROW(export_dot(big, g, std::make_pair(0, 1)));
}

}  // namespace
}  // namespace voicesep
