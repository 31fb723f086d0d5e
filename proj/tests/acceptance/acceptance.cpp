// Acceptance runs. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.
//
//   voicesep_acceptance --source-dir <repo> [--only AC-4 ...]

#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "support/gradient_cases.h"
#include "voicesep/assignment.h"
#include "voicesep/diff/grad_check.h"
#include "voicesep/errors.h"
#include "voicesep/losses.h"
#include "voicesep/pipeline.h"
#include "voicesep/score_io.h"
#include "voicesep/synthetic.h"

namespace voicesep {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Pinned tolerances and budgets.
constexpr double kGradRelTolerance = 1e-4;
constexpr double kGradEps = 1e-5;
constexpr double kGradSeconds = 60.0;
constexpr int kAssignmentTrials = 1000;
constexpr double kAssignmentTolerance = 1e-9;
constexpr double kAssignmentSeconds = 30.0;
constexpr int kPermutationTrials = 100;
constexpr double kBceTolerance = 1e-9;
constexpr double kOverfitF1 = 0.99;
constexpr std::size_t kOverfitEpochs = 300;
constexpr double kOverfitSeconds = 300.0;
constexpr std::uint64_t kOverfitPieceSeed = 1;
constexpr std::size_t kMinTrainPieces = 20;
constexpr std::size_t kTestPieces = 5;
constexpr double kGeneralizationF1 = 0.85;
constexpr double kCoverage = 0.99;
constexpr double kInferenceSeconds = 10.0;
constexpr std::size_t kInferenceNotes = 1000;
constexpr double kAblationSlack = 0.02;
constexpr std::uint64_t kAblationSeeds[] = {0, 1, 2};

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Training progress on stderr, so long runs show signs of life.
EpochCallback progress(const std::string& label) {
  return [label](const EpochLog& e) {
    if (e.epoch % 10 == 0) {
      std::cerr << "  [" << label << "] epoch " << e.epoch << " clf " << e.l_clf << " reg " << e.l_reg << " val f1 "
                << e.val.f1 << std::endl;
    }
  };
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream out;
  out << std::setprecision(digits) << v;
  return out.str();
}

#ifndef VOICESEP_FLOAT32
Outcome gradient_correctness(const fs::path&) {
  const auto t0 = Clock::now();
  diff::GradCheckOptions opts;
  opts.eps = kGradEps;
  double worst = 0.0;
  std::string worst_name;
  auto track = [&](const diff::GradCheckReport& r, const std::string& name) {
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = name + ":" + r.worst_param + "[" + std::to_string(r.worst_index) + "]";
    }
  };

  const auto cases = testing::primitive_cases();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    diff::ParameterSet params;
    std::mt19937_64 rng(500 + i);
    cases[i].setup(params, rng);
    track(diff::grad_check([&](diff::Tape& t) { return cases[i].body(t, params); }, params, opts), cases[i].name);
  }

  // Encoder and predictor on a 16-note piece: every entry of a narrow model,
  // then a sample of entries of the full-size model.
  const Piece piece = prepare_piece("grad", generate_synthetic_score(4, 2, 8));
  const GraphInput input = make_graph_input(piece.graph, true);
  const auto batch = subsample_negatives(piece.graph.candidates, *piece.graph.targets, 1, 1);
  const auto ind = indicator_vectors(*piece.graph.targets, piece.graph.candidates, piece.graph.num_nodes);
  auto check_model = [&](VoiceModel& model, const diff::GradCheckOptions& o, const std::string& name) {
    auto loss = [&](diff::Tape& t) {
      const auto enc = model.encode(t, input, piece.features, {}, true);
      const auto probs = model.predict(t, enc.embeddings, piece.graph.candidates, {}, true);
      return total_loss(bce_loss(probs, batch), reg_loss(probs, piece.graph.candidates, ind, piece.graph.num_nodes),
                        0.5);
    };
    track(diff::grad_check(loss, model.params(), o), name);
  };
  ModelConfig narrow;
  narrow.hidden = 8;
  narrow.jk_hidden = 4;
  VoiceModel small(narrow, 3);
  check_model(small, opts, "model(narrow)");
  VoiceModel full(ModelConfig{}, 3);
  diff::GradCheckOptions sampled = opts;
  sampled.max_entries_per_param = 4;
  check_model(full, sampled, "model(full)");

  const double t = seconds_since(t0);
  return {worst < kGradRelTolerance && t < kGradSeconds,
          "max rel error " + fmt(worst) + " at " + worst_name + " (< " + fmt(kGradRelTolerance) + "), " +
              std::to_string(cases.size()) + " primitives + model, " + fmt(t, 3) + " s (< " + fmt(kGradSeconds) +
              " s)"};
}
#else
Outcome gradient_correctness(const fs::path&) { return {false, "requires the 64-bit build"}; }
#endif

double best_matching(const Eigen::MatrixXd& w, Eigen::Index row, std::vector<char>& used) {
  if (row == w.rows()) return 0.0;
  double best = best_matching(w, row + 1, used);
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    if (used[static_cast<std::size_t>(c)] || std::isnan(w(row, c))) continue;
    used[static_cast<std::size_t>(c)] = 1;
    best = std::max(best, w(row, c) + best_matching(w, row + 1, used));
    used[static_cast<std::size_t>(c)] = 0;
  }
  return best;
}

Outcome assignment_oracle(const fs::path&) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 8);
  int mismatches = 0;
  int degree_failures = 0;
  double worst_gap = 0.0;
  for (int trial = 0; trial < kAssignmentTrials; ++trial) {
    const int rows = dim(rng);
    const int cols = dim(rng);
    const double density = 0.3 + 0.7 * u(rng);
    const bool coarse = trial % 2 == 1;  // coarse weights produce ties
    Eigen::MatrixXd w = Eigen::MatrixXd::Constant(rows, cols, std::numeric_limits<double>::quiet_NaN());
    LinkScores scores;
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        if (u(rng) >= density) continue;
        double s = 0.01 + 0.98 * u(rng);
        if (coarse) s = std::round(s * 4.0) / 4.0 + 0.05;
        w(i, j) = s;
        // Sources are nodes 0..rows-1, destinations rows..rows+cols-1.
        scores.push_back({{static_cast<NodeIndex>(i), static_cast<NodeIndex>(rows + j)}, s});
      }
    }
    std::vector<char> used(static_cast<std::size_t>(cols), 0);
    const double optimum = best_matching(w, 0, used);

    const AssignmentMask mask = linear_assignment(scores);
    double total = 0.0;
    std::vector<Link> chosen;
    for (std::size_t k = 0; k < scores.size(); ++k) {
      if (!mask.selected[k]) continue;
      total += scores[k].score;
      chosen.push_back(scores[k].link);
    }
    try {
      check_degrees(chosen, static_cast<std::size_t>(rows + cols));
    } catch (const DegreeError&) {
      ++degree_failures;
    }
    const double gap = std::abs(total - optimum);
    worst_gap = std::max(worst_gap, gap);
    if (gap > kAssignmentTolerance) ++mismatches;
  }
  const double t = seconds_since(t0);
  return {mismatches == 0 && degree_failures == 0 && t < kAssignmentSeconds,
          std::to_string(kAssignmentTrials) + " problems, " + std::to_string(mismatches) + " optimum mismatches, " +
              std::to_string(degree_failures) + " degree violations, max gap " + fmt(worst_gap) + ", " + fmt(t, 3) +
              " s (< " + fmt(kAssignmentSeconds) + " s)"};
}

Outcome loss_identities(const fs::path&) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> size(2, 10);
  int nonzero_exact = 0;
  int zero_perturbed = 0;
  int perturbations = 0;
  for (int trial = 0; trial < kPermutationTrials; ++trial) {
    const int n = size(rng);
    // A random partial permutation: each node links to at most one later
    // node and receives from at most one.
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Link> candidates;
    for (NodeIndex i = 0; i < static_cast<NodeIndex>(n); ++i) {
      for (NodeIndex j = 0; j < static_cast<NodeIndex>(n); ++j) {
        if (i != j) candidates.push_back({i, j});
      }
    }
    GroundTruthLinks targets;
    std::bernoulli_distribution keep(0.7);
    for (int i = 0; i < n; ++i) {
      const auto dst = static_cast<NodeIndex>(perm[static_cast<std::size_t>(i)]);
      if (dst != static_cast<NodeIndex>(i) && keep(rng)) targets.links.push_back({static_cast<NodeIndex>(i), dst});
    }
    const auto ind = indicator_vectors(targets, candidates, static_cast<std::size_t>(n));
    diff::Matrix probs = diff::Matrix::Zero(static_cast<Eigen::Index>(candidates.size()), 1);
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      if (std::find(targets.links.begin(), targets.links.end(), candidates[k]) != targets.links.end()) {
        probs(static_cast<Eigen::Index>(k), 0) = 1.0;
      }
    }
    {
      diff::Tape tape;
      if (reg_loss(tape.constant(probs), candidates, ind, static_cast<std::size_t>(n)).item() != 0.0) ++nonzero_exact;
    }
    for (Eigen::Index k = 0; k < probs.rows(); ++k) {
      diff::Matrix perturbed = probs;
      perturbed(k, 0) += perturbed(k, 0) > 0.5 ? -0.5 : 0.5;
      diff::Tape tape;
      if (!(reg_loss(tape.constant(perturbed), candidates, ind, static_cast<std::size_t>(n)).item() > 0.0)) {
        ++zero_perturbed;
      }
      ++perturbations;
    }
  }

  diff::Tape tape;
  diff::Matrix half(2, 1);
  half << 0.5, 0.5;
  TrainingBatch batch;
  batch.indices = {0, 1};
  batch.labels = {1.0, 0.0};
  batch.n_positives = 1;
  batch.n_negatives = 1;
  const double bce = bce_loss(tape.constant(half), batch).item();
  const double bce_error = std::abs(bce - 2.0 * std::log(2.0));

  return {nonzero_exact == 0 && zero_perturbed == 0 && bce_error < kBceTolerance,
          std::to_string(kPermutationTrials) + " permutation configs, " + std::to_string(nonzero_exact) +
              " non-zero; " + std::to_string(perturbations) + " perturbations, " + std::to_string(zero_perturbed) +
              " not positive; bce " + fmt(bce, 10) + " (error " + fmt(bce_error) + " < " + fmt(kBceTolerance) + ")"};
}

Outcome overfit(const fs::path&) {
  const Piece piece = prepare_piece("overfit", generate_synthetic_score(kOverfitPieceSeed, 3, 70));
  ExperimentConfig config;
  config.epochs = kOverfitEpochs;
  config.patience = 0;
  config.target_f1 = kOverfitF1;
  config.postprocess = Postprocess::kNone;
  // Without normalization, 2 of 5 tried pieces reach the target in time and
  // the rest stall near 0.988; with layer norm all 5 do.
  config.model.layer_norm = true;
  const std::vector<Piece> pieces = {piece};
  const auto t0 = Clock::now();
  const TrainResult result = train_model(config, pieces, pieces, progress("overfit"));
  const double t = seconds_since(t0);
  const double f1 = evaluate_pieces(result.model, pieces, Postprocess::kNone).micro.f1;
  return {f1 >= kOverfitF1 && t < kOverfitSeconds,
          std::to_string(piece.score.notes.size()) + " notes, layer norm on, training F1 " + fmt(f1) + " (>= " + fmt(kOverfitF1) +
              ") after " + std::to_string(result.log.size()) + " epochs (<= " + std::to_string(kOverfitEpochs) +
              "), " + fmt(t, 4) + " s (< " + fmt(kOverfitSeconds) + " s)"};
}

struct CorpusRun {
  AggregateMetrics threshold;
  AggregateMetrics la;
  std::size_t la_pieces_valid = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double seconds = 0.0;
};

CorpusRun train_and_evaluate(ExperimentConfig config, const std::string& label) {
  config.checkpoint_dir.clear();
  const auto t0 = Clock::now();
  const Splits splits = resolve_splits(config);
  const auto train = load_pieces(splits.train, config.pieces);
  const auto val = load_pieces(splits.val, config.pieces);
  const auto test = load_pieces(splits.test, config.pieces);
  const TrainResult result = train_model(config, train, val, progress(label));

  CorpusRun run;
  run.n_train = train.size();
  run.n_test = test.size();
  run.threshold = evaluate_pieces(result.model, test, Postprocess::kNone);
  run.la = evaluate_pieces(result.model, test, Postprocess::kLinearAssignment);
  for (const auto& piece : test) {
    const auto links = infer_piece(result.model, piece, Postprocess::kLinearAssignment).links;
    try {
      check_degrees(links, piece.graph.num_nodes);
      ++run.la_pieces_valid;
    } catch (const DegreeError&) {
    }
  }
  run.seconds = seconds_since(t0);
  return run;
}

std::vector<fs::path> corpus_files(const fs::path& source_dir) {
  const fs::path root = source_dir / "data" / "synthetic";
  return expand_score_paths({root / "train", root / "val", root / "test"});
}

fs::path config_path(const fs::path& source_dir, const std::string& name) {
  return source_dir / "configs" / name;
}

Outcome generalization(const fs::path& source_dir) {
  const CorpusRun run = train_and_evaluate(load_experiment_config(config_path(source_dir, "synthetic.json")), "corpus");
  const bool enough = run.n_train >= kMinTrainPieces && run.n_test == kTestPieces;
  const bool f1_ok = run.threshold.micro.f1 >= kGeneralizationF1;
  const bool precision_ok = run.la.macro.precision >= run.threshold.macro.precision;
  const bool degrees_ok = run.la_pieces_valid == run.n_test;
  return {enough && f1_ok && precision_ok && degrees_ok,
          std::to_string(run.n_train) + " train / " + std::to_string(run.n_test) + " test pieces; threshold F1 " +
              fmt(run.threshold.micro.f1) + " (>= " + fmt(kGeneralizationF1) + "); macro precision LA " +
              fmt(run.la.macro.precision) + " vs threshold " + fmt(run.threshold.macro.precision) +
              "; LA F1 " + fmt(run.la.micro.f1) + "; degree-valid LA outputs " +
              std::to_string(run.la_pieces_valid) + "/" + std::to_string(run.n_test) + "; " + fmt(run.seconds, 4) +
              " s"};
}

Outcome coverage(const fs::path& source_dir) {
  const auto paths = corpus_files(source_dir);
  std::size_t targets = 0;
  std::size_t covered = 0;
  for (const auto& p : paths) {
    const Piece piece = prepare_piece(p.filename().string(), load_score(p));
    const CoverageReport r = coverage_report(piece.graph);
    targets += r.n_targets;
    covered += r.n_covered;
  }
  const double fraction = targets == 0 ? 1.0 : static_cast<double>(covered) / static_cast<double>(targets);
  return {!paths.empty() && fraction >= kCoverage,
          std::to_string(paths.size()) + " pieces, " + std::to_string(covered) + "/" + std::to_string(targets) +
              " target links in the candidate set = " + fmt(fraction, 6) + " (>= " + fmt(kCoverage) + ")"};
}

Outcome determinism(const fs::path& source_dir) {
  std::vector<Piece> train;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    train.push_back(prepare_piece("p" + std::to_string(seed), generate_synthetic_score(seed, 2 + seed, 16)));
  }
  ExperimentConfig config;
  config.epochs = 5;
  config.patience = 0;
  config.seed = 11;
  config.model.hidden = 32;
  config.model.jk_hidden = 16;
  const std::string log_a = training_log_csv(train_model(config, train, {}).log);
  const std::string log_b = training_log_csv(train_model(config, train, {}).log);
  const bool logs_equal = log_a == log_b;

  const auto paths = corpus_files(source_dir);
  std::size_t identical = 0;
  for (const auto& p : paths) {
    const std::string once = serialize_score(load_score(p));
    if (serialize_score(parse_score(once)) == once && once == read_file(p)) ++identical;
  }
  return {logs_equal && identical == paths.size() && !paths.empty(),
          std::string("training log ") + (logs_equal ? "identical" : "DIFFERS") + " across two runs (" +
              std::to_string(std::count(log_a.begin(), log_a.end(), '\n')) + " lines); " + std::to_string(identical) +
              "/" + std::to_string(paths.size()) + " score files round-trip byte-identically"};
}

Outcome throughput(const fs::path&) {
  Score raw = generate_synthetic_score(99, 4, static_cast<int>(kInferenceNotes / 4));
  for (auto& note : raw.notes) note.voice.reset();
  const VoiceModel model(ModelConfig{}, 0);
  const auto t0 = Clock::now();
  const Piece piece = prepare_piece("throughput", raw);
  const auto result = infer_piece(model, piece, Postprocess::kLinearAssignment);
  const VoiceAssignment voices = extract_voices(piece.score, result.links);
  const double t = seconds_since(t0);
  return {piece.score.notes.size() == kInferenceNotes && t < kInferenceSeconds,
          std::to_string(piece.score.notes.size()) + " notes, " + std::to_string(piece.graph.candidates.size()) +
              " candidates, " + std::to_string(voices.voices.size()) + " voices in " + fmt(t, 3) + " s (< " +
              fmt(kInferenceSeconds) + " s)"};
}

Outcome ablation(const fs::path& source_dir) {
  const std::map<std::string, std::string> variants = {
      {"full", "synthetic.json"}, {"homogeneous", "synthetic_homogeneous.json"}, {"no_reg", "synthetic_no_reg.json"}};
  std::map<std::string, double> mean_f1;
  std::ostringstream per_seed;
  for (const auto& [name, file] : variants) {
    const ExperimentConfig base = load_experiment_config(config_path(source_dir, file));
    double total = 0.0;
    per_seed << name << " [";
    for (std::uint64_t seed : kAblationSeeds) {
      ExperimentConfig config = base;
      config.seed = seed;
      const double f1 = train_and_evaluate(config, name + "/seed" + std::to_string(seed)).threshold.micro.f1;
      per_seed << (seed == kAblationSeeds[0] ? "" : " ") << fmt(f1);
      total += f1;
    }
    per_seed << "] ";
    mean_f1[name] = total / static_cast<double>(std::size(kAblationSeeds));
  }
  const double hetero_gap = mean_f1["full"] - mean_f1["homogeneous"];
  const double reg_gap = mean_f1["full"] - mean_f1["no_reg"];
  return {hetero_gap >= -kAblationSlack && reg_gap >= -kAblationSlack,
          "mean F1 heterogeneous " + fmt(mean_f1["full"]) + " vs homogeneous " + fmt(mean_f1["homogeneous"]) +
              " (gap " + fmt(hetero_gap) + "), ramped " + fmt(mean_f1["full"]) + " vs no regularization " +
              fmt(mean_f1["no_reg"]) + " (gap " + fmt(reg_gap) + "), slack " + fmt(kAblationSlack) + "; per seed " +
              per_seed.str()};
}

struct Criterion {
  const char* id;
  const char* title;
  std::function<Outcome(const fs::path&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {"AC-1", "gradient correctness", gradient_correctness},
      {"AC-2", "assignment oracle", assignment_oracle},
      {"AC-3", "loss identities", loss_identities},
      {"AC-4", "overfit one piece", overfit},
      {"AC-5", "small-corpus generalization", generalization},
      {"AC-6", "candidate coverage", coverage},
      {"AC-7", "determinism and round-trip", determinism},
      {"AC-8", "inference throughput", throughput},
      {"AC-9", "ablation direction", ablation},
  };
  return all;
}

}  // namespace
}  // namespace voicesep

int main(int argc, char** argv) {
  // Training allocates and frees many large matrices per step. Keeping them
  // on the heap instead of fresh mmaps cuts system time by about a third.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  using voicesep::criteria;
  CLI::App app{"voicesep acceptance runs"};
  std::string source_dir = VOICESEP_SOURCE_DIR;
  std::vector<std::string> only;
  app.add_option("--source-dir", source_dir, "Repository root (configs/ and data/)");
  app.add_option("--only", only, "Run only these criteria, e.g. AC-3");
  CLI11_PARSE(app, argc, argv);

  bool all_pass = true;
  for (const auto& c : criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    voicesep::Outcome outcome;
    try {
      outcome = c.run(source_dir);
    } catch (const std::exception& e) {
      outcome = {false, std::string("error: ") + e.what()};
    }
    all_pass = all_pass && outcome.pass;
    std::cout << c.id << " " << (outcome.pass ? "PASS" : "FAIL") << "  " << c.title << ": " << outcome.detail
              << std::endl;
  }
  return all_pass ? 0 : 1;
}
