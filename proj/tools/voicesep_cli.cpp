// voicesep command-line interface.
//
// Exit codes: 0 success, 1 usage error, 2 invalid input or configuration,
// 3 runtime failure.

#include <malloc.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "voicesep/errors.h"
#include "voicesep/export.h"
#include "voicesep/features.h"
#include "voicesep/graph.h"
#include "voicesep/pipeline.h"
#include "voicesep/score_io.h"
#include "voicesep/synthetic.h"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace voicesep;

namespace {

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    write_file_atomic(out_path, text);
  }
}

std::optional<std::pair<int, int>> parse_measure_range(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto colon = s.find(':');
  try {
    if (colon == std::string::npos) {
      const int m = std::stoi(s);
      return std::make_pair(m, m);
    }
    return std::make_pair(std::stoi(s.substr(0, colon)), std::stoi(s.substr(colon + 1)));
  } catch (const std::exception&) {
    throw ConfigError("measure range must look like FIRST:LAST, got '" + s + "'");
  }
}

// Reads {"links": [[src_id, dst_id, score?], ...]} against a score.
std::vector<Link> read_links(const fs::path& path, const Score& score) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  std::map<std::string, NodeIndex> index;
  for (NodeIndex i = 0; i < score.notes.size(); ++i) index.emplace(score.notes[i].id, i);
  std::vector<Link> links;
  if (!j.is_object() || !j.contains("links") || !j["links"].is_array()) {
    throw ValidationError("links", "expected an array of [src, dst, score] entries");
  }
  for (const auto& e : j["links"]) {
    if (!e.is_array() || e.size() < 2 || !e[0].is_string() || !e[1].is_string()) {
      throw ValidationError("links", "each entry must start with two note ids");
    }
    const auto a = index.find(e[0].get<std::string>());
    const auto b = index.find(e[1].get<std::string>());
    if (a == index.end() || b == index.end()) throw ValidationError("links", "unknown note id in link");
    links.push_back({a->second, b->second});
  }
  return links;
}

ordered_json metrics_json(const MetricsReport& m) {
  return {{"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"n_predicted", m.counts.predicted},
          {"n_target", m.counts.target},
          {"n_correct", m.counts.correct}};
}

int run(int argc, char** argv) {
  CLI::App app{"Voice separation by link prediction on note graphs"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a seeded synthetic score");
  std::uint64_t gen_seed = 0;
  int gen_voices = 3;
  int gen_notes = 40;
  std::string gen_out;
  SyntheticConfig gen_config;
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--voices", gen_voices, "Number of voices")->check(CLI::Range(1, 16));
  gen->add_option("--notes-per-voice", gen_notes, "Notes per voice")->check(CLI::NonNegativeNumber);
  gen->add_option("--measure-duration", gen_config.measure_duration, "Ticks per measure");
  gen->add_option("--divisions", gen_config.divisions, "Ticks per quarter note");
  gen->add_option("--rest-probability", gen_config.rest_probability, "Chance of a rest before a note");
  gen->add_option("-o,--output", gen_out, "Output path (default stdout)");

  // graph
  auto* graph_cmd = app.add_subcommand("graph", "Build the typed note graph and candidate links");
  std::string graph_in;
  std::string graph_out;
  GraphOptions graph_options;
  bool graph_preprocess = true;
  graph_cmd->add_option("score", graph_in, "Score file (.json or .csv)")->required();
  graph_cmd->add_option("-o,--output", graph_out, "Output path (default stdout)");
  graph_cmd->add_option("--window", graph_options.window_measures, "Candidate window in measures");
  graph_cmd->add_flag("--during-inclusive", graph_options.during_inclusive, "Inclusive bound for During edges");
  graph_cmd->add_flag("--silence-last-offset", graph_options.silence_last_offset,
                      "Only the latest-ending notes before a gap emit Silence edges");
  graph_cmd->add_flag("!--no-preprocess", graph_preprocess, "Skip monophonic preprocessing of labeled scores");

  // features
  auto* feat_cmd = app.add_subcommand("features", "Compute the node feature matrix");
  std::string feat_in;
  std::string feat_out;
  std::string feat_format = "bin";
  LaplacianOptions feat_laplacian;
  feat_cmd->add_option("score", feat_in, "Score file")->required();
  feat_cmd->add_option("-o,--output", feat_out, "Output path")->required();
  feat_cmd->add_option("--format", feat_format, "bin or csv")->check(CLI::IsMember({"bin", "csv"}));
  feat_cmd->add_option("--k", feat_laplacian.k, "Positional encoding width");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model from an experiment config");
  std::string train_config;
  std::optional<std::size_t> train_epochs;
  std::optional<std::size_t> train_patience;
  std::optional<std::uint64_t> train_seed;
  std::string train_ckpt_dir;
  std::string train_reg_mode;
  bool train_quiet = false;
  train_cmd->add_option("--config", train_config, "Experiment config (JSON)")->required();
  train_cmd->add_option("--epochs", train_epochs, "Override the epoch budget");
  train_cmd->add_option("--patience", train_patience, "Override early-stopping patience");
  train_cmd->add_option("--seed", train_seed, "Override the training seed");
  train_cmd->add_option("--checkpoint-dir", train_ckpt_dir, "Override the checkpoint directory");
  train_cmd->add_option("--reg-mode", train_reg_mode, "ramp, fixed or none")
      ->check(CLI::IsMember({"ramp", "fixed", "none"}));
  train_cmd->add_flag("-q,--quiet", train_quiet, "Do not print per-epoch progress");

  // predict
  auto* pred_cmd = app.add_subcommand("predict", "Separate the voices of a score");
  std::string pred_ckpt;
  std::string pred_in;
  std::string pred_out;
  std::string pred_links;
  std::string pred_post = "la";
  pred_cmd->add_option("--checkpoint", pred_ckpt, "Model checkpoint")->required();
  pred_cmd->add_option("score", pred_in, "Score file")->required();
  pred_cmd->add_option("-o,--output", pred_out, "Voiced score output (default stdout)");
  pred_cmd->add_option("--links", pred_links, "Links JSON output");
  pred_cmd->add_option("--postprocess", pred_post, "none, greedy or la")
      ->check(CLI::IsMember({"none", "greedy", "la"}));

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Link metrics of a checkpoint on labeled scores");
  std::string eval_ckpt;
  std::string eval_config;
  std::vector<std::string> eval_paths;
  std::string eval_post = "both";
  std::string eval_out;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  eval_cmd->add_option("--config", eval_config, "Experiment config; evaluates its test split");
  eval_cmd->add_option("scores", eval_paths, "Score files or directories");
  eval_cmd->add_option("--postprocess", eval_post, "none, greedy, la or both")
      ->check(CLI::IsMember({"none", "greedy", "la", "both"}));
  eval_cmd->add_option("-o,--output", eval_out, "Report path (default stdout)");

  // export
  auto* exp_cmd = app.add_subcommand("export", "Render a score as SVG or its graph as DOT");
  std::string exp_in;
  std::string exp_links;
  std::string exp_format = "svg";
  std::string exp_out;
  std::string exp_measures;
  exp_cmd->add_option("score", exp_in, "Score file")->required();
  exp_cmd->add_option("--links", exp_links, "Links JSON to draw (SVG)");
  exp_cmd->add_option("--format", exp_format, "svg or dot")->check(CLI::IsMember({"svg", "dot"}));
  exp_cmd->add_option("--measures", exp_measures, "Measure range FIRST:LAST (DOT)");
  exp_cmd->add_option("-o,--output", exp_out, "Output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*gen) {
    const Score s = generate_synthetic_score(gen_seed, gen_voices, gen_notes, gen_config);
    emit(gen_out, serialize_score(s));
  } else if (*graph_cmd) {
    Score s = load_score(graph_in);
    if (graph_preprocess && s.fully_labeled()) s = preprocess_monophonic(s).score;
    const ScoreGraph g = build_score_graph(s, graph_options);
    ordered_json j;
    j["num_nodes"] = g.num_nodes;
    ordered_json counts = ordered_json::object();
    const auto ec = g.edge_counts();
    for (std::size_t r = 0; r < kNumRelations; ++r) {
      counts[std::string(relation_name(static_cast<RelationType>(r)))] = ec[r];
    }
    j["edge_counts"] = counts;
    j["edges"] = ordered_json::array();
    for (const auto& e : g.edges) {
      j["edges"].push_back({s.notes[e.src].id, std::string(relation_name(e.type)), s.notes[e.dst].id});
    }
    j["candidates"] = ordered_json::array();
    for (const auto& l : g.candidates) j["candidates"].push_back({s.notes[l.src].id, s.notes[l.dst].id});
    if (g.targets) {
      const auto cov = coverage_report(g);
      j["coverage"] = {{"n_targets", cov.n_targets}, {"n_covered", cov.n_covered}, {"fraction", cov.fraction}};
    }
    emit(graph_out, j.dump(2) + "\n");
  } else if (*feat_cmd) {
    Score s = load_score(feat_in);
    if (s.fully_labeled()) s = preprocess_monophonic(s).score;
    const ScoreGraph g = build_score_graph(s);
    const FeatureMatrix f = assemble_features(s, g, feat_laplacian);
    if (feat_format == "csv") {
      emit(feat_out, matrix_to_csv(f));
    } else {
      write_matrix_binary(feat_out, f);
    }
  } else if (*train_cmd) {
    ExperimentConfig config = load_experiment_config(train_config);
    if (train_epochs) config.epochs = *train_epochs;
    if (train_patience) config.patience = *train_patience;
    if (train_seed) config.seed = *train_seed;
    if (!train_ckpt_dir.empty()) config.checkpoint_dir = train_ckpt_dir;
    if (train_reg_mode == "ramp") config.loss.mode = RegularizationMode::kRamp;
    if (train_reg_mode == "fixed") config.loss.mode = RegularizationMode::kFixed;
    if (train_reg_mode == "none") config.loss.mode = RegularizationMode::kNone;
    if (config.checkpoint_dir.empty()) throw ConfigError("no checkpoint directory (set checkpoint_dir or --checkpoint-dir)");
    const TrainResult r = train_from_config(config, [&](const EpochLog& e) {
      if (train_quiet) return;
      std::fprintf(stderr, "epoch %zu  l_clf %.4f  l_reg %.4f  alpha %.2f  val P %.4f R %.4f F1 %.4f\n", e.epoch,
                   e.l_clf, e.l_reg, e.alpha, e.val.precision, e.val.recall, e.val.f1);
    });
    std::fprintf(stderr, "best epoch %zu, validation F1 %.4f, checkpoint %s\n", r.best_epoch, r.best_val_f1,
                 (config.checkpoint_dir / "best.ckpt").string().c_str());
  } else if (*pred_cmd) {
    const LoadedModel loaded = load_model(pred_ckpt);
    Score s = load_score(pred_in);
    // Existing voice labels are ignored so every note is kept as given.
    for (auto& n : s.notes) n.voice.reset();
    const Piece piece = prepare_piece(fs::path(pred_in).filename().string(), s, loaded.pieces);
    const PieceResult r = infer_piece(loaded.model, piece, parse_postprocess(pred_post));
    std::vector<Link> links = r.links;
    if (pred_post == "none") {
      // Raw thresholding can break the one-in/one-out rule; repair before
      // building voices.
      links = resolve_greedy(r.scores, piece.score, loaded.model.config().threshold);
    }
    const VoiceAssignment voices = extract_voices(piece.score, links);
    emit(pred_out, serialize_score(apply_voices(piece.score, voices)));
    if (!pred_links.empty()) {
      std::map<Link, double> score_of;
      for (const auto& sl : r.scores) score_of.emplace(sl.link, sl.score);
      ordered_json j;
      j["links"] = ordered_json::array();
      for (const auto& l : links) {
        j["links"].push_back({piece.score.notes[l.src].id, piece.score.notes[l.dst].id, score_of.at(l)});
      }
      write_file_atomic(pred_links, j.dump(2) + "\n");
    }
  } else if (*eval_cmd) {
    const LoadedModel loaded = load_model(eval_ckpt);
    std::vector<fs::path> paths;
    if (!eval_config.empty()) {
      const ExperimentConfig config = load_experiment_config(eval_config);
      if (!(config.model == loaded.model.config())) {
        throw CheckpointError("checkpoint model configuration differs from " + eval_config);
      }
      paths = resolve_splits(config).test;
    }
    for (const auto& p : eval_paths) paths.push_back(p);
    paths = expand_score_paths(paths);
    if (paths.empty()) throw ConfigError("no scores to evaluate");
    const auto pieces = load_pieces(paths, loaded.pieces);

    std::vector<Postprocess> modes;
    if (eval_post == "both") {
      modes = {Postprocess::kNone, Postprocess::kLinearAssignment};
    } else {
      modes = {parse_postprocess(eval_post)};
    }
    ordered_json report;
    report["pieces"] = ordered_json::array();
    for (const auto& p : pieces) report["pieces"].push_back(p.name);
    for (Postprocess mode : modes) {
      const AggregateMetrics m = evaluate_pieces(loaded.model, pieces, mode);
      ordered_json row;
      row["micro"] = metrics_json(m.micro);
      row["macro"] = metrics_json(m.macro);
      row["per_piece"] = ordered_json::array();
      for (const auto& r : m.per_piece) row["per_piece"].push_back(metrics_json(r));
      report[postprocess_name(mode)] = row;
      std::fprintf(stderr, "%-6s micro P %.4f R %.4f F1 %.4f | macro P %.4f R %.4f F1 %.4f\n",
                   postprocess_name(mode).c_str(), m.micro.precision, m.micro.recall, m.micro.f1, m.macro.precision,
                   m.macro.recall, m.macro.f1);
    }
    emit(eval_out, report.dump(2) + "\n");
  } else if (*exp_cmd) {
    const Score s = load_score(exp_in);
    if (exp_format == "svg") {
      std::vector<Link> links;
      if (!exp_links.empty()) links = read_links(exp_links, s);
      emit(exp_out, export_svg(s, links));
    } else {
      const ScoreGraph g = build_score_graph(s);
      emit(exp_out, export_dot(s, g, parse_measure_range(exp_measures)));
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Training allocates and frees many large matrices per step. Keeping them
  // on the heap instead of fresh mmaps cuts system time by about a third.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  try {
    return run(argc, argv);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
