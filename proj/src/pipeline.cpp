#include "voicesep/pipeline.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "voicesep/diff/checkpoint.h"
#include "voicesep/errors.h"
#include "voicesep/score_io.h"

namespace voicesep {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (auto p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

fs::path resolve_path(const fs::path& p, const fs::path& base_dir) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("VOICESEP_DATA_ROOT"); root != nullptr && *root != '\0') {
    return fs::path(root) / p;
  }
  return base_dir.empty() ? p : base_dir / p;
}

std::vector<fs::path> path_list(const json& j, const char* key, const fs::path& base_dir) {
  std::vector<fs::path> out;
  if (!j.contains(key)) return out;
  const json& v = j.at(key);
  if (v.is_string()) {
    out.push_back(resolve_path(v.get<std::string>(), base_dir));
  } else if (v.is_array()) {
    for (const auto& e : v) {
      if (!e.is_string()) throw ConfigError(std::string(key) + " entries must be strings");
      out.push_back(resolve_path(e.get<std::string>(), base_dir));
    }
  } else {
    throw ConfigError(std::string(key) + " must be a path or a list of paths");
  }
  return out;
}

bool is_score_file(const fs::path& p) {
  const std::string name = p.filename().string();
  auto ends_with = [&](const std::string& suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".measures.json") || name == "manifest.json") return false;
  return ends_with(".json") || ends_with(".csv");
}

json graph_options_to_json(const GraphOptions& g) {
  return {{"window_measures", g.window_measures},
          {"during_inclusive", g.during_inclusive},
          {"silence_last_offset", g.silence_last_offset}};
}

GraphOptions graph_options_from_json(const json& j) {
  check_keys(j, "graph", {"window_measures", "during_inclusive", "silence_last_offset"});
  GraphOptions g;
  g.window_measures = get_or(j, "window_measures", g.window_measures, "graph");
  g.during_inclusive = get_or(j, "during_inclusive", g.during_inclusive, "graph");
  g.silence_last_offset = get_or(j, "silence_last_offset", g.silence_last_offset, "graph");
  if (g.window_measures < 0) throw ConfigError("graph.window_measures must be non-negative");
  return g;
}

LaplacianOptions laplacian_from_json(const json& j) {
  check_keys(j, "laplacian", {"k", "dense_limit"});
  LaplacianOptions l;
  l.k = get_or(j, "k", l.k, "laplacian");
  l.dense_limit = get_or(j, "dense_limit", l.dense_limit, "laplacian");
  return l;
}

json piece_options_to_json(const PieceOptions& p) {
  return {{"graph", graph_options_to_json(p.graph)},
          {"preprocess", {{"truncate_overlaps", p.preprocess.truncate_overlaps}}},
          {"laplacian", {{"k", p.laplacian.k}, {"dense_limit", p.laplacian.dense_limit}}}};
}

// Per-piece tensors reused across epochs.
struct TrainingItem {
  const Piece* piece;
  GraphInput input;
  IndicatorVectors indicators;
};

std::vector<diff::Matrix> snapshot(const diff::ParameterSet& params) {
  std::vector<diff::Matrix> out;
  for (const auto& p : params) out.push_back(p->value);
  return out;
}

}  // namespace

Postprocess parse_postprocess(const std::string& name) {
  if (name == "none") return Postprocess::kNone;
  if (name == "greedy") return Postprocess::kGreedy;
  if (name == "la") return Postprocess::kLinearAssignment;
  throw ConfigError("unknown postprocess '" + name + "' (expected none, greedy or la)");
}

std::string postprocess_name(Postprocess mode) {
  switch (mode) {
    case Postprocess::kNone: return "none";
    case Postprocess::kGreedy: return "greedy";
    case Postprocess::kLinearAssignment: return "la";
  }
  return "none";
}

Piece prepare_piece(std::string name, const Score& raw, const PieceOptions& options) {
  Piece piece;
  piece.name = std::move(name);
  if (raw.fully_labeled()) {
    auto pre = preprocess_monophonic(raw, options.preprocess);
    piece.score = std::move(pre.score);
    piece.removed = std::move(pre.removed);
  } else {
    piece.score = raw;
    piece.score.validate();
  }
  piece.graph = build_score_graph(piece.score, options.graph);
  piece.features = assemble_features(piece.score, piece.graph, options.laplacian);
  return piece;
}

std::vector<Link> postprocess_links(const LinkScores& scores, const Score& score, Postprocess mode,
                                    double threshold) {
  switch (mode) {
    case Postprocess::kNone: return threshold_links(scores, threshold);
    case Postprocess::kGreedy: return resolve_greedy(scores, score, threshold);
    case Postprocess::kLinearAssignment:
      return apply_mask_and_threshold(scores, linear_assignment(scores), threshold);
  }
  return {};
}

double LossConfig::alpha(std::uint64_t epoch) const {
  switch (mode) {
    case RegularizationMode::kRamp: return alpha_schedule(epoch, ramp_per_epoch, max_alpha);
    case RegularizationMode::kFixed: return fixed_alpha;
    case RegularizationMode::kNone: return 0.0;
  }
  return 0.0;
}

ExperimentConfig parse_experiment_config(const json& j, const fs::path& base_dir) {
  check_keys(j, "experiment",
             {"train", "val", "test", "corpus", "split_seed", "val_fraction", "model", "optimizer", "loss", "graph",
              "preprocess", "laplacian", "pe_sign_flip", "epochs", "patience", "target_f1", "seed", "postprocess",
              "checkpoint_dir"});
  ExperimentConfig c;
  c.train = path_list(j, "train", base_dir);
  c.val = path_list(j, "val", base_dir);
  c.test = path_list(j, "test", base_dir);
  c.corpus = path_list(j, "corpus", base_dir);
  c.split_seed = get_or(j, "split_seed", c.split_seed, "experiment");
  c.val_fraction = get_or(j, "val_fraction", c.val_fraction, "experiment");
  if (!(c.val_fraction >= 0.0 && c.val_fraction < 1.0)) throw ConfigError("val_fraction must be in [0, 1)");

  if (j.contains("graph")) c.pieces.graph = graph_options_from_json(j.at("graph"));
  if (j.contains("preprocess")) {
    check_keys(j.at("preprocess"), "preprocess", {"truncate_overlaps"});
    c.pieces.preprocess.truncate_overlaps =
        get_or(j.at("preprocess"), "truncate_overlaps", c.pieces.preprocess.truncate_overlaps, "preprocess");
  }
  if (j.contains("laplacian")) c.pieces.laplacian = laplacian_from_json(j.at("laplacian"));

  json model = j.value("model", json::object());
  const std::size_t width = kIntrinsicColumns + c.pieces.laplacian.k;
  if (model.is_object() && !model.contains("input_dim")) model["input_dim"] = width;
  c.model = model_config_from_json(model);
  if (c.model.input_dim != width) {
    throw ConfigError("model.input_dim must equal " + std::to_string(width) + " for the chosen laplacian.k");
  }

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    check_keys(o, "optimizer", {"lr", "weight_decay", "beta1", "beta2", "eps"});
    c.optimizer.lr = get_or(o, "lr", c.optimizer.lr, "optimizer");
    c.optimizer.weight_decay = get_or(o, "weight_decay", c.optimizer.weight_decay, "optimizer");
    c.optimizer.beta1 = get_or(o, "beta1", c.optimizer.beta1, "optimizer");
    c.optimizer.beta2 = get_or(o, "beta2", c.optimizer.beta2, "optimizer");
    c.optimizer.eps = get_or(o, "eps", c.optimizer.eps, "optimizer");
    if (!(c.optimizer.lr > 0.0)) throw ConfigError("optimizer.lr must be positive");
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    check_keys(l, "loss", {"reg_mode", "ramp_per_epoch", "max_alpha", "fixed_alpha"});
    const auto mode = get_or<std::string>(l, "reg_mode", "ramp", "loss");
    if (mode == "ramp") {
      c.loss.mode = RegularizationMode::kRamp;
    } else if (mode == "fixed") {
      c.loss.mode = RegularizationMode::kFixed;
    } else if (mode == "none") {
      c.loss.mode = RegularizationMode::kNone;
    } else {
      throw ConfigError("loss.reg_mode must be ramp, fixed or none");
    }
    c.loss.ramp_per_epoch = get_or(l, "ramp_per_epoch", c.loss.ramp_per_epoch, "loss");
    c.loss.max_alpha = get_or(l, "max_alpha", c.loss.max_alpha, "loss");
    c.loss.fixed_alpha = get_or(l, "fixed_alpha", c.loss.fixed_alpha, "loss");
    if (c.loss.ramp_per_epoch < 0.0) throw ConfigError("loss.ramp_per_epoch must be non-negative");
  }

  c.pe_sign_flip = get_or(j, "pe_sign_flip", c.pe_sign_flip, "experiment");
  c.epochs = get_or(j, "epochs", c.epochs, "experiment");
  c.patience = get_or(j, "patience", c.patience, "experiment");
  if (j.contains("target_f1") && !j.at("target_f1").is_null()) {
    c.target_f1 = get_or(j, "target_f1", 1.0, "experiment");
  }
  c.seed = get_or(j, "seed", c.seed, "experiment");
  c.postprocess = parse_postprocess(get_or<std::string>(j, "postprocess", "none", "experiment"));
  if (j.contains("checkpoint_dir")) {
    c.checkpoint_dir = resolve_path(get_or<std::string>(j, "checkpoint_dir", "", "experiment"), base_dir);
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  const std::string raw = read_file(path);
  json j;
  try {
    j = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

std::vector<fs::path> expand_score_paths(const std::vector<fs::path>& paths) {
  std::vector<fs::path> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.is_regular_file() && is_score_file(entry.path())) found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(p)) {
      out.push_back(p);
    } else {
      throw ConfigError("score path does not exist: " + p.string());
    }
  }
  return out;
}

Splits resolve_splits(const ExperimentConfig& config) {
  Splits s;
  s.test = expand_score_paths(config.test);
  if (!config.train.empty()) {
    s.train = expand_score_paths(config.train);
    s.val = expand_score_paths(config.val);
  } else {
    std::vector<fs::path> corpus = expand_score_paths(config.corpus);
    std::mt19937_64 rng(config.split_seed);
    for (std::size_t i = corpus.size(); i > 1; --i) std::swap(corpus[i - 1], corpus[rng() % i]);
    std::size_t n_val = static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(corpus.size())));
    if (config.val_fraction > 0.0 && corpus.size() > 1) n_val = std::max<std::size_t>(n_val, 1);
    n_val = std::min(n_val, corpus.size() > 0 ? corpus.size() - 1 : 0);
    s.val.assign(corpus.begin(), corpus.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(corpus.begin() + static_cast<std::ptrdiff_t>(n_val), corpus.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.train.begin(), s.train.end());
  }
  if (s.train.empty()) throw ConfigError("the training split is empty");

  auto canonical = [](const std::vector<fs::path>& v) {
    std::set<fs::path> out;
    for (const auto& p : v) out.insert(fs::weakly_canonical(p));
    return out;
  };
  const auto train = canonical(s.train);
  const auto val = canonical(s.val);
  const auto test = canonical(s.test);
  for (const auto& p : train) {
    if (val.count(p) || test.count(p)) throw ConfigError("splits overlap: " + p.string());
  }
  for (const auto& p : val) {
    if (test.count(p)) throw ConfigError("splits overlap: " + p.string());
  }
  return s;
}

std::vector<Piece> load_pieces(const std::vector<fs::path>& paths, const PieceOptions& options) {
  std::vector<Piece> out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    out.push_back(prepare_piece(p.filename().string(), load_score(p), options));
  }
  return out;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,l_clf,l_reg,alpha,val_precision,val_recall,val_f1\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.l_clf << ',' << e.l_reg << ',' << e.alpha << ',' << e.val.precision << ','
        << e.val.recall << ',' << e.val.f1 << '\n';
  }
  return out.str();
}

TrainResult train_model(const ExperimentConfig& config, const std::vector<Piece>& train,
                        const std::vector<Piece>& val, const EpochCallback& on_epoch) {
  if (train.empty()) throw ConfigError("no training pieces");
  TrainResult result{VoiceModel(config.model, config.seed), {}, 0, -1.0};
  VoiceModel& model = result.model;

  std::vector<TrainingItem> items;
  for (const auto& piece : train) {
    if (!piece.graph.targets) throw MissingVoiceError("training piece '" + piece.name + "' is not fully labeled");
    if (piece.features.cols() != static_cast<Eigen::Index>(config.model.input_dim)) {
      throw ConsistencyError("features of '" + piece.name + "' do not match the model input width");
    }
    items.push_back({&piece, make_graph_input(piece.graph, config.model.heterogeneous),
                     indicator_vectors(*piece.graph.targets, piece.graph.candidates, piece.graph.num_nodes)});
  }
  const std::vector<Piece>& val_pieces = val.empty() ? train : val;

  diff::AdamW optimizer(config.optimizer);
  optimizer.init(model.params());
  std::mt19937_64 dropout_rng(mix_seed({config.seed, 0xd50u}));
  std::vector<diff::Matrix> best = snapshot(model.params());
  std::size_t since_best = 0;

  if (!config.checkpoint_dir.empty()) fs::create_directories(config.checkpoint_dir);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(mix_seed({config.seed, epoch, 0x5u}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);

    EpochLog entry;
    entry.epoch = epoch;
    entry.alpha = config.loss.alpha(epoch);
    std::size_t counted = 0;
    for (std::size_t idx : order) {
      const TrainingItem& item = items[idx];
      const Piece& piece = *item.piece;
      if (piece.graph.candidates.empty()) continue;

      FeatureMatrix features = piece.features;
      if (config.pe_sign_flip) randomize_pe_signs(features, mix_seed({config.seed, epoch, idx, 0xf1u}));
      const TrainingBatch batch =
          subsample_negatives(piece.graph.candidates, *piece.graph.targets, mix_seed({config.seed, idx}), epoch);

      diff::Tape tape;
      ForwardOptions fwd{true, &dropout_rng};
      const EncoderOutput enc = model.encode(tape, item.input, features, fwd, true);
      const diff::Var probs = model.predict(tape, enc.embeddings, piece.graph.candidates, fwd, true);
      const diff::Var clf = bce_loss(probs, batch);
      diff::Var loss = clf;
      double reg_value = 0.0;
      if (config.loss.mode != RegularizationMode::kNone) {
        const diff::Var reg = reg_loss(probs, piece.graph.candidates, item.indicators, piece.graph.num_nodes);
        reg_value = static_cast<double>(reg.item());
        loss = total_loss(clf, reg, entry.alpha);
      }
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw TrainingDivergedError("non-finite loss at epoch " + std::to_string(epoch) + " on '" + piece.name + "'");
      }
      model.params().zero_grad();
      tape.backward(loss);
      optimizer.step(model.params());

      entry.l_clf += static_cast<double>(clf.item());
      entry.l_reg += reg_value;
      ++counted;
    }
    if (counted > 0) {
      entry.l_clf /= static_cast<double>(counted);
      entry.l_reg /= static_cast<double>(counted);
    }

    entry.val = evaluate_pieces(model, val_pieces, config.postprocess).micro;
    result.log.push_back(entry);

    if (entry.val.f1 > result.best_val_f1) {
      result.best_val_f1 = entry.val.f1;
      result.best_epoch = epoch;
      best = snapshot(model.params());
      since_best = 0;
      if (!config.checkpoint_dir.empty()) {
        save_model(config.checkpoint_dir / "best.ckpt", model, config.pieces, &optimizer);
      }
    } else {
      ++since_best;
    }
    if (!config.checkpoint_dir.empty()) {
      write_file_atomic(config.checkpoint_dir / "train_log.csv", training_log_csv(result.log));
    }
    if (on_epoch) on_epoch(entry);

    if (config.target_f1 && entry.val.f1 >= *config.target_f1) break;
    if (config.patience > 0 && since_best >= config.patience) break;
  }

  for (std::size_t i = 0; i < model.params().size(); ++i) model.params()[i].value = best[i];
  return result;
}

TrainResult train_from_config(const ExperimentConfig& config, const EpochCallback& on_epoch) {
  const Splits splits = resolve_splits(config);
  const auto train = load_pieces(splits.train, config.pieces);
  const auto val = load_pieces(splits.val, config.pieces);
  return train_model(config, train, val, on_epoch);
}

PieceResult infer_piece(const VoiceModel& model, const Piece& piece, Postprocess mode) {
  PieceResult r;
  r.scores = model.score_links(piece.graph, piece.features);
  r.links = postprocess_links(r.scores, piece.score, mode, model.config().threshold);
  return r;
}

AggregateMetrics evaluate_pieces(const VoiceModel& model, const std::vector<Piece>& pieces, Postprocess mode) {
  std::vector<MetricsReport> reports;
  reports.reserve(pieces.size());
  for (const auto& piece : pieces) {
    if (!piece.graph.targets) throw MissingVoiceError("piece '" + piece.name + "' has no ground truth");
    const PieceResult r = infer_piece(model, piece, mode);
    reports.push_back(link_metrics(r.links, piece.graph.targets->links));
  }
  return aggregate_metrics(std::move(reports));
}

std::string checkpoint_metadata(const ModelConfig& model, const PieceOptions& pieces) {
  json meta = piece_options_to_json(pieces);
  meta["model"] = model_config_to_json(model);
  meta["format"] = "voicesep-model";
  return meta.dump();
}

void save_model(const fs::path& path, const VoiceModel& model, const PieceOptions& pieces,
                const diff::AdamW* optimizer) {
  diff::save_checkpoint(path, checkpoint_metadata(model.config(), pieces), model.params(), optimizer);
}

LoadedModel load_model(const fs::path& path, const std::optional<ModelConfig>& expected) {
  const diff::CheckpointData data = diff::load_checkpoint(path);
  json meta;
  try {
    meta = json::parse(data.metadata);
  } catch (const json::parse_error& e) {
    throw CheckpointError("checkpoint metadata is not JSON: " + std::string(e.what()));
  }
  if (!meta.is_object() || meta.value("format", "") != "voicesep-model" || !meta.contains("model")) {
    throw CheckpointError("checkpoint metadata does not describe a voicesep model");
  }
  ModelConfig config;
  PieceOptions pieces;
  try {
    config = model_config_from_json(meta.at("model"));
    pieces.graph = graph_options_from_json(meta.at("graph"));
    pieces.preprocess.truncate_overlaps = meta.at("preprocess").at("truncate_overlaps").get<bool>();
    pieces.laplacian = laplacian_from_json(meta.at("laplacian"));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint metadata: ") + e.what());
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata: ") + e.what());
  }
  if (expected && !(*expected == config)) {
    throw CheckpointError("checkpoint model configuration differs from the requested one");
  }
  LoadedModel out{VoiceModel(config, 0), pieces};
  diff::restore_checkpoint(data, out.model.params());
  return out;
}

}  // namespace voicesep
