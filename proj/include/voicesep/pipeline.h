// End-to-end pipeline: preparing pieces, training, evaluation and
// inference.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "voicesep/assignment.h"
#include "voicesep/diff/optimizer.h"
#include "voicesep/features.h"
#include "voicesep/graph.h"
#include "voicesep/losses.h"
#include "voicesep/metrics.h"
#include "voicesep/model.h"
#include "voicesep/preprocess.h"

namespace voicesep {

enum class Postprocess { kNone, kGreedy, kLinearAssignment };

Postprocess parse_postprocess(const std::string& name);
std::string postprocess_name(Postprocess mode);

struct PieceOptions {
  PreprocessOptions preprocess;
  GraphOptions graph;
  LaplacianOptions laplacian;
};

/// A score with everything the model needs precomputed.
struct Piece {
  std::string name;
  Score score;
  ScoreGraph graph;
  FeatureMatrix features;
  std::vector<std::string> removed;
};

/// Labeled scores are preprocessed to monophonic voices first; unlabeled
/// scores are used as they are.
Piece prepare_piece(std::string name, const Score& raw, const PieceOptions& options = {});

/// Turns scores into predicted links with the chosen postprocessing.
/// kNone thresholds every candidate independently; its output may violate
/// the one-in/one-out constraint.
std::vector<Link> postprocess_links(const LinkScores& scores, const Score& score, Postprocess mode,
                                    double threshold);

enum class RegularizationMode { kRamp, kFixed, kNone };

struct LossConfig {
  RegularizationMode mode = RegularizationMode::kRamp;
  double ramp_per_epoch = 0.02;
  double max_alpha = 1.0;
  double fixed_alpha = 1.0;

  double alpha(std::uint64_t epoch) const;
};

struct ExperimentConfig {
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> val;
  std::vector<std::filesystem::path> test;
  /// Used when `train` is empty: split into train/val by `split_seed`.
  std::vector<std::filesystem::path> corpus;
  std::uint64_t split_seed = 0;
  double val_fraction = 0.1;

  ModelConfig model;
  diff::AdamWConfig optimizer;
  LossConfig loss;
  PieceOptions pieces;
  bool pe_sign_flip = true;

  std::size_t epochs = 100;
  std::size_t patience = 20;
  /// Stop as soon as validation F1 reaches this value.
  std::optional<double> target_f1;
  std::uint64_t seed = 0;
  Postprocess postprocess = Postprocess::kNone;
  std::filesystem::path checkpoint_dir;
};

/// Parses the JSON experiment file. Relative paths resolve against the
/// VOICESEP_DATA_ROOT environment variable when set, else against
/// `base_dir`. Throws ConfigError on unknown keys or bad values.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Expands directories into their score files (sorted) and checks that
/// every file exists.
std::vector<std::filesystem::path> expand_score_paths(const std::vector<std::filesystem::path>& paths);

struct Splits {
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> val;
  std::vector<std::filesystem::path> test;
};

/// Resolves the config's split spec. Throws ConfigError when splits
/// overlap or the training split is empty.
Splits resolve_splits(const ExperimentConfig& config);

std::vector<Piece> load_pieces(const std::vector<std::filesystem::path>& paths, const PieceOptions& options);

struct EpochLog {
  std::size_t epoch = 0;
  double l_clf = 0.0;
  double l_reg = 0.0;
  double alpha = 0.0;
  MetricsReport val;
};

std::string training_log_csv(const std::vector<EpochLog>& log);

struct TrainResult {
  VoiceModel model;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_f1 = -1.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// One optimizer step per training piece per epoch. Validation uses the
/// training pieces when `val` is empty. The returned model holds the
/// weights of the best validation epoch. Throws ConfigError for an empty
/// training set and TrainingDivergedError on a non-finite loss.
TrainResult train_model(const ExperimentConfig& config, const std::vector<Piece>& train,
                        const std::vector<Piece>& val, const EpochCallback& on_epoch = {});

/// Loads the splits, trains, and writes best.ckpt and train_log.csv into
/// the checkpoint directory (when set).
TrainResult train_from_config(const ExperimentConfig& config, const EpochCallback& on_epoch = {});

struct PieceResult {
  LinkScores scores;
  std::vector<Link> links;
};

PieceResult infer_piece(const VoiceModel& model, const Piece& piece, Postprocess mode);

/// Metrics for every piece (targets restricted to nothing: all ground-truth
/// links count, including those outside the candidate window).
AggregateMetrics evaluate_pieces(const VoiceModel& model, const std::vector<Piece>& pieces, Postprocess mode);

// Checkpoints carry the model and graph configuration as metadata.
std::string checkpoint_metadata(const ModelConfig& model, const PieceOptions& pieces);
void save_model(const std::filesystem::path& path, const VoiceModel& model, const PieceOptions& pieces,
                const diff::AdamW* optimizer = nullptr);

struct LoadedModel {
  VoiceModel model;
  PieceOptions pieces;
};

/// Throws CheckpointError when the file is malformed or, if `expected` is
/// given, its model configuration differs.
LoadedModel load_model(const std::filesystem::path& path, const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace voicesep
