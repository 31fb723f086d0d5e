// Link-prediction network: a stack of relation-typed residual gated graph
// convolutions, jumping-knowledge aggregation with a bidirectional LSTM
// scorer, and an MLP over concatenated endpoint embeddings.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"
#include "voicesep/diff/tape.h"
#include "voicesep/features.h"
#include "voicesep/graph.h"
#include "voicesep/link_scores.h"

namespace voicesep {

struct ModelConfig {
  std::size_t input_dim = kFeatureColumns;
  std::size_t hidden = 128;
  std::size_t layers = 3;
  std::size_t jk_hidden = 64;
  std::size_t mlp_layers = 3;
  /// One weight group per relation type; false shares one group.
  bool heterogeneous = true;
  double dropout = 0.0;
  bool layer_norm = false;
  double threshold = 0.5;

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json model_config_to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Message-passing edges of one weight group. Messages flow src -> dst.
struct RelationEdges {
  std::vector<diff::Index> src;
  std::vector<diff::Index> dst;
};

struct GraphInput {
  std::size_t num_nodes = 0;
  std::vector<RelationEdges> relations;
};

/// Groups typed edges by relation (7 groups), or into a single group.
GraphInput make_graph_input(const ScoreGraph& graph, bool heterogeneous);

struct ForwardOptions {
  bool training = false;
  /// Required when training with dropout.
  std::mt19937_64* rng = nullptr;
};

struct EncoderOutput {
  diff::Var embeddings;              // |V| x hidden
  std::vector<diff::Var> layers;     // per-layer |V| x hidden
  diff::Var attention;               // |V| x layers, rows sum to 1
};

class VoiceModel {
 public:
  VoiceModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  diff::ParameterSet& params() { return params_; }
  const diff::ParameterSet& params() const { return params_; }
  std::size_t relation_groups() const { return config_.heterogeneous ? kNumRelations : 1; }

  /// Records the encoder on `tape`. With `track_grads` the parameters are
  /// bound for backward(); otherwise they enter the tape as constants and
  /// the model is not touched.
  EncoderOutput encode(diff::Tape& tape, const GraphInput& graph, const FeatureMatrix& features,
                       const ForwardOptions& options = {}, bool track_grads = false);
  EncoderOutput encode(diff::Tape& tape, const GraphInput& graph, const FeatureMatrix& features,
                       const ForwardOptions& options = {}) const;

  /// |candidates| x 1 probabilities. Throws ConsistencyError when a
  /// candidate references a node outside the embedding matrix.
  diff::Var predict(diff::Tape& tape, diff::Var embeddings, std::span<const Link> candidates,
                    const ForwardOptions& options = {}, bool track_grads = false);
  diff::Var predict(diff::Tape& tape, diff::Var embeddings, std::span<const Link> candidates,
                    const ForwardOptions& options = {}) const;

  /// Inference: encode + predict, returned in candidate order.
  LinkScores score_links(const ScoreGraph& graph, const FeatureMatrix& features) const;

 private:
  class Binder;

  EncoderOutput encode_impl(Binder& binder, const GraphInput& graph, const FeatureMatrix& features,
                            const ForwardOptions& options) const;
  diff::Var predict_impl(Binder& binder, diff::Var embeddings, std::span<const Link> candidates,
                         const ForwardOptions& options) const;

  ModelConfig config_;
  diff::ParameterSet params_;
};

/// Candidates scoring at least `threshold`, in candidate order.
std::vector<Link> threshold_links(const LinkScores& scores, double threshold = 0.5);

LinkScores to_link_scores(diff::Var probabilities, std::span<const Link> candidates);

}  // namespace voicesep
