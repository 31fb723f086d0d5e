#include "voicesep/model.h"

#include <map>
#include <string>

#include "voicesep/errors.h"

namespace voicesep {

using diff::Matrix;
using diff::Tape;
using diff::Var;

namespace {

std::string enc_name(std::size_t layer, std::size_t group, int w) {
  return "enc.l" + std::to_string(layer) + ".r" + std::to_string(group) + ".w" + std::to_string(w);
}

// Row-wise normalization to zero mean and unit variance, no affine terms.
Var layer_norm(Var x) {
  const auto d = static_cast<diff::Scalar>(x.cols());
  Var mean = diff::scale(diff::row_sum(x), 1 / d);
  Var centered = diff::add_col(x, diff::scale(mean, -1));
  Var var = diff::scale(diff::row_sum(diff::square(centered)), 1 / d);
  Var inv = diff::reciprocal(diff::sqrt(diff::add_constant(var, diff::Scalar(1e-5))));
  return diff::scale_rows(centered, inv);
}

}  // namespace

class VoiceModel::Binder {
 public:
  Binder(Tape& tape, const diff::ParameterSet& params, diff::ParameterSet* mutable_params)
      : tape_(tape), params_(params), mutable_(mutable_params) {}

  Var operator()(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    Var v = mutable_ != nullptr ? tape_.parameter(mutable_->at(name)) : tape_.constant(params_.at(name).value);
    cache_.emplace(name, v);
    return v;
  }

  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  const diff::ParameterSet& params_;
  diff::ParameterSet* mutable_;
  std::map<std::string, Var> cache_;
};

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim}, {"hidden", c.hidden},           {"layers", c.layers},
          {"jk_hidden", c.jk_hidden}, {"mlp_layers", c.mlp_layers},   {"heterogeneous", c.heterogeneous},
          {"dropout", c.dropout},     {"layer_norm", c.layer_norm},   {"threshold", c.threshold}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (!j.is_object()) throw ConfigError("model config must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "input_dim") c.input_dim = value.get<std::size_t>();
      else if (key == "hidden") c.hidden = value.get<std::size_t>();
      else if (key == "layers") c.layers = value.get<std::size_t>();
      else if (key == "jk_hidden") c.jk_hidden = value.get<std::size_t>();
      else if (key == "mlp_layers") c.mlp_layers = value.get<std::size_t>();
      else if (key == "heterogeneous") c.heterogeneous = value.get<bool>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "layer_norm") c.layer_norm = value.get<bool>();
      else if (key == "threshold") c.threshold = value.get<double>();
      else throw ConfigError("unknown model option '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("model option '" + key + "': " + e.what());
    }
  }
  if (c.hidden == 0 || c.layers == 0 || c.jk_hidden == 0 || c.mlp_layers == 0 || c.input_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (c.dropout < 0.0 || c.dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
  if (c.threshold < 0.0 || c.threshold > 1.0) throw ConfigError("threshold must be in [0,1]");
  return c;
}

GraphInput make_graph_input(const ScoreGraph& graph, bool heterogeneous) {
  GraphInput input;
  input.num_nodes = graph.num_nodes;
  input.relations.resize(heterogeneous ? kNumRelations : 1);
  for (const auto& e : graph.edges) {
    auto& group = input.relations[heterogeneous ? static_cast<std::size_t>(e.type) : 0];
    group.src.push_back(e.src);
    group.dst.push_back(e.dst);
  }
  return input;
}

VoiceModel::VoiceModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  std::mt19937_64 rng(seed);
  const auto hidden = static_cast<Eigen::Index>(config_.hidden);
  const auto jk = static_cast<Eigen::Index>(config_.jk_hidden);

  for (std::size_t l = 0; l < config_.layers; ++l) {
    const auto in = static_cast<Eigen::Index>(l == 0 ? config_.input_dim : config_.hidden);
    for (std::size_t r = 0; r < relation_groups(); ++r) {
      for (int w = 1; w <= 4; ++w) params_.add_glorot(enc_name(l, r, w), in, hidden, rng);
    }
    if (in != hidden) params_.add_glorot("enc.l" + std::to_string(l) + ".proj", in, hidden, rng);
  }

  for (const char* dir : {"fwd", "bwd"}) {
    const std::string prefix = std::string("jk.") + dir;
    params_.add_glorot(prefix + ".wih", hidden, 4 * jk, rng);
    params_.add_glorot(prefix + ".whh", jk, 4 * jk, rng);
    params_.add_zeros(prefix + ".b", 1, 4 * jk);
  }
  params_.add_glorot("jk.att.w", 2 * jk, 1, rng);
  params_.add_zeros("jk.att.b", 1, 1);

  const Eigen::Index first_out = config_.mlp_layers == 1 ? 1 : hidden;
  params_.add_glorot("mlp.0.wsrc", hidden, first_out, rng);
  params_.add_glorot("mlp.0.wdst", hidden, first_out, rng);
  params_.add_zeros("mlp.0.b", 1, first_out);
  for (std::size_t k = 1; k < config_.mlp_layers; ++k) {
    const Eigen::Index out = k + 1 == config_.mlp_layers ? 1 : hidden;
    params_.add_glorot("mlp." + std::to_string(k) + ".w", hidden, out, rng);
    params_.add_zeros("mlp." + std::to_string(k) + ".b", 1, out);
  }
}

EncoderOutput VoiceModel::encode(Tape& tape, const GraphInput& graph, const FeatureMatrix& features,
                                 const ForwardOptions& options, bool track_grads) {
  Binder binder(tape, params_, track_grads ? &params_ : nullptr);
  return encode_impl(binder, graph, features, options);
}

EncoderOutput VoiceModel::encode(Tape& tape, const GraphInput& graph, const FeatureMatrix& features,
                                 const ForwardOptions& options) const {
  Binder binder(tape, params_, nullptr);
  return encode_impl(binder, graph, features, options);
}

Var VoiceModel::predict(Tape& tape, Var embeddings, std::span<const Link> candidates, const ForwardOptions& options,
                        bool track_grads) {
  Binder binder(tape, params_, track_grads ? &params_ : nullptr);
  return predict_impl(binder, embeddings, candidates, options);
}

Var VoiceModel::predict(Tape& tape, Var embeddings, std::span<const Link> candidates,
                        const ForwardOptions& options) const {
  Binder binder(tape, params_, nullptr);
  return predict_impl(binder, embeddings, candidates, options);
}

EncoderOutput VoiceModel::encode_impl(Binder& p, const GraphInput& graph, const FeatureMatrix& features,
                                      const ForwardOptions& options) const {
  Tape& tape = p.tape();
  if (static_cast<std::size_t>(features.rows()) != graph.num_nodes) {
    throw ConsistencyError("feature rows (" + std::to_string(features.rows()) + ") do not match graph nodes (" +
                           std::to_string(graph.num_nodes) + ")");
  }
  if (static_cast<std::size_t>(features.cols()) != config_.input_dim) {
    throw ConsistencyError("expected " + std::to_string(config_.input_dim) + " feature columns, got " +
                           std::to_string(features.cols()));
  }
  if (graph.relations.size() != relation_groups()) {
    throw ConsistencyError("graph input has " + std::to_string(graph.relations.size()) +
                           " relation groups, model expects " + std::to_string(relation_groups()));
  }
  const bool use_dropout = options.training && config_.dropout > 0.0;
  if (use_dropout && options.rng == nullptr) throw ContractError("dropout requires an rng");

  Var h = tape.constant(features.cast<diff::Scalar>());
  EncoderOutput out;
  const auto inv_groups = diff::Scalar(1) / static_cast<diff::Scalar>(relation_groups());

  for (std::size_t l = 0; l < config_.layers; ++l) {
    Var acc;
    for (std::size_t r = 0; r < relation_groups(); ++r) {
      const auto& edges = graph.relations[r];
      Var hr = diff::matmul(h, p(enc_name(l, r, 1)));
      if (!edges.src.empty()) {
        Var neigh = diff::matmul(h, p(enc_name(l, r, 2)));
        Var gate_self = diff::matmul(h, p(enc_name(l, r, 3)));
        Var gate_neigh = diff::matmul(h, p(enc_name(l, r, 4)));
        Var gate = diff::sigmoid(diff::gather_rows(gate_self, edges.dst) + diff::gather_rows(gate_neigh, edges.src));
        Var messages = gate * diff::gather_rows(neigh, edges.src);
        hr = hr + diff::scatter_add_rows(messages, edges.dst, graph.num_nodes);
      }
      acc = r == 0 ? hr : acc + hr;
    }
    Var activated = diff::relu(diff::scale(acc, inv_groups));
    if (config_.layer_norm) activated = layer_norm(activated);
    const bool project = l == 0 && config_.input_dim != config_.hidden;
    Var residual = project ? diff::matmul(h, p("enc.l" + std::to_string(l) + ".proj")) : h;
    h = activated + residual;
    if (use_dropout) h = diff::dropout(h, static_cast<diff::Scalar>(config_.dropout), *options.rng);
    out.layers.push_back(h);
  }

  // Bidirectional LSTM over the layer sequence of every node.
  const auto jk = static_cast<Eigen::Index>(config_.jk_hidden);
  const std::size_t steps = out.layers.size();
  auto run_lstm = [&](const std::string& prefix, bool reverse) {
    std::vector<Var> hidden_states(steps);
    Var hs;
    Var cs;
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t t = reverse ? steps - 1 - s : s;
      Var gates = diff::matmul(out.layers[t], p(prefix + ".wih"));
      if (s > 0) gates = gates + diff::matmul(hs, p(prefix + ".whh"));
      gates = diff::add_row(gates, p(prefix + ".b"));
      Var in_gate = diff::sigmoid(diff::slice_cols(gates, 0, jk));
      Var forget_gate = diff::sigmoid(diff::slice_cols(gates, jk, jk));
      Var cell_in = diff::tanh(diff::slice_cols(gates, 2 * jk, jk));
      Var out_gate = diff::sigmoid(diff::slice_cols(gates, 3 * jk, jk));
      cs = s == 0 ? in_gate * cell_in : forget_gate * cs + in_gate * cell_in;
      hs = out_gate * diff::tanh(cs);
      hidden_states[t] = hs;
    }
    return hidden_states;
  };
  const auto forward_states = run_lstm("jk.fwd", false);
  const auto backward_states = run_lstm("jk.bwd", true);

  std::vector<Var> scores;
  for (std::size_t t = 0; t < steps; ++t) {
    const Var both[] = {forward_states[t], backward_states[t]};
    Var state = diff::concat_cols(both);
    scores.push_back(diff::add_row(diff::matmul(state, p("jk.att.w")), p("jk.att.b")));
  }
  out.attention = diff::softmax_rows(diff::concat_cols(scores));

  for (std::size_t t = 0; t < steps; ++t) {
    Var weighted = diff::scale_rows(out.layers[t], diff::slice_cols(out.attention, static_cast<Eigen::Index>(t), 1));
    out.embeddings = t == 0 ? weighted : out.embeddings + weighted;
  }
  return out;
}

Var VoiceModel::predict_impl(Binder& p, Var embeddings, std::span<const Link> candidates,
                             const ForwardOptions& options) const {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  std::vector<diff::Index> src;
  std::vector<diff::Index> dst;
  src.reserve(candidates.size());
  dst.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (c.src >= n || c.dst >= n) {
      throw ConsistencyError("candidate (" + std::to_string(c.src) + ", " + std::to_string(c.dst) +
                             ") references an unknown node");
    }
    src.push_back(c.src);
    dst.push_back(c.dst);
  }
  const bool use_dropout = options.training && config_.dropout > 0.0;

  // First layer on [h_u ; h_v] split into per-endpoint projections.
  Var from_src = diff::matmul(embeddings, p("mlp.0.wsrc"));
  Var from_dst = diff::matmul(embeddings, p("mlp.0.wdst"));
  Var z = diff::add_row(diff::gather_rows(from_src, src) + diff::gather_rows(from_dst, dst), p("mlp.0.b"));
  for (std::size_t k = 1; k < config_.mlp_layers; ++k) {
    z = diff::relu(z);
    if (use_dropout) z = diff::dropout(z, static_cast<diff::Scalar>(config_.dropout), *options.rng);
    const std::string prefix = "mlp." + std::to_string(k);
    z = diff::add_row(diff::matmul(z, p(prefix + ".w")), p(prefix + ".b"));
  }
  return diff::sigmoid(z);
}

LinkScores VoiceModel::score_links(const ScoreGraph& graph, const FeatureMatrix& features) const {
  Tape tape;
  const GraphInput input = make_graph_input(graph, config_.heterogeneous);
  const EncoderOutput enc = encode(tape, input, features);
  return to_link_scores(predict(tape, enc.embeddings, graph.candidates), graph.candidates);
}

LinkScores to_link_scores(Var probabilities, std::span<const Link> candidates) {
  const Matrix& values = probabilities.value();
  if (static_cast<std::size_t>(values.rows()) != candidates.size()) {
    throw ShapeError("probabilities do not match the candidate count");
  }
  LinkScores scores;
  scores.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scores.push_back({candidates[i], static_cast<double>(values(static_cast<Eigen::Index>(i), 0))});
  }
  return scores;
}

std::vector<Link> threshold_links(const LinkScores& scores, double threshold) {
  std::vector<Link> out;
  for (const auto& s : scores) {
    if (s.score >= threshold) out.push_back(s.link);
  }
  return out;
}

}  // namespace voicesep
