#include "voicesep/graph.h"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "voicesep/errors.h"
#include "voicesep/preprocess.h"

namespace voicesep {

std::string_view relation_name(RelationType r) {
  switch (r) {
    case RelationType::kOnset: return "onset";
    case RelationType::kDuring: return "during";
    case RelationType::kFollow: return "follow";
    case RelationType::kSilence: return "silence";
    case RelationType::kDuringRev: return "during_rev";
    case RelationType::kFollowRev: return "follow_rev";
    case RelationType::kSilenceRev: return "silence_rev";
  }
  return "unknown";
}

RelationType inverse(RelationType r) {
  switch (r) {
    case RelationType::kOnset: return RelationType::kOnset;
    case RelationType::kDuring: return RelationType::kDuringRev;
    case RelationType::kFollow: return RelationType::kFollowRev;
    case RelationType::kSilence: return RelationType::kSilenceRev;
    case RelationType::kDuringRev: return RelationType::kDuring;
    case RelationType::kFollowRev: return RelationType::kFollow;
    case RelationType::kSilenceRev: return RelationType::kSilence;
  }
  return r;
}

std::array<std::size_t, kNumRelations> ScoreGraph::edge_counts() const {
  std::array<std::size_t, kNumRelations> counts{};
  for (const auto& e : edges) ++counts[static_cast<std::size_t>(e.type)];
  return counts;
}

std::vector<TypedEdge> build_typed_edges(const Score& score, const GraphOptions& options) {
  const auto& notes = score.notes;
  const std::size_t n = notes.size();

  // Node indices sorted by onset; notes are canonical already but the
  // function accepts any order.
  std::vector<NodeIndex> order(n);
  for (NodeIndex i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](NodeIndex a, NodeIndex b) { return notes[a].onset < notes[b].onset; });
  std::vector<Tick> onsets(n);
  for (std::size_t k = 0; k < n; ++k) onsets[k] = notes[order[k]].onset;

  std::vector<TypedEdge> edges;
  auto add_pair = [&](NodeIndex u, RelationType r, NodeIndex v) {
    edges.push_back({u, r, v});
    if (r != RelationType::kOnset) edges.push_back({v, inverse(r), u});
  };

  // Silence sources per target onset, for the last-offset restriction.
  std::map<Tick, std::vector<NodeIndex>> silence_sources;

  for (NodeIndex u = 0; u < n; ++u) {
    const Tick on_u = notes[u].onset;
    const Tick off_u = notes[u].offset();

    // Notes starting inside [on_u, off_u].
    auto first = std::lower_bound(onsets.begin(), onsets.end(), on_u);
    for (auto it = first; it != onsets.end() && *it <= off_u; ++it) {
      const NodeIndex v = order[static_cast<std::size_t>(it - onsets.begin())];
      if (v == u) continue;
      const Tick on_v = notes[v].onset;
      if (on_v == on_u) {
        edges.push_back({u, RelationType::kOnset, v});
        continue;
      }
      const bool during = options.during_inclusive ? on_v <= off_u : on_v < off_u;
      if (during) add_pair(u, RelationType::kDuring, v);
      if (on_v == off_u) add_pair(u, RelationType::kFollow, v);
    }

    // First onset strictly after the offset: only notes at that onset have
    // no other onset between them and the end of u.
    auto next = std::upper_bound(onsets.begin(), onsets.end(), off_u);
    if (next != onsets.end()) silence_sources[*next].push_back(u);
  }

  for (auto& [target_onset, sources] : silence_sources) {
    if (options.silence_last_offset) {
      Tick latest = 0;
      for (NodeIndex u : sources) latest = std::max(latest, notes[u].offset());
      std::erase_if(sources, [&](NodeIndex u) { return notes[u].offset() != latest; });
    }
    auto lo = std::lower_bound(onsets.begin(), onsets.end(), target_onset);
    auto hi = std::upper_bound(onsets.begin(), onsets.end(), target_onset);
    for (NodeIndex u : sources) {
      for (auto it = lo; it != hi; ++it) {
        add_pair(u, RelationType::kSilence, order[static_cast<std::size_t>(it - onsets.begin())]);
      }
    }
  }

  std::sort(edges.begin(), edges.end(), [](const TypedEdge& a, const TypedEdge& b) {
    return std::tie(a.type, a.src, a.dst) < std::tie(b.type, b.src, b.dst);
  });
  return edges;
}

std::vector<Link> build_candidate_links(const Score& score, int window_measures) {
  if (window_measures < 0) throw ConfigError("window_measures must be nonnegative");
  const auto& notes = score.notes;
  const std::size_t n = notes.size();

  std::vector<NodeIndex> order(n);
  for (NodeIndex i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](NodeIndex a, NodeIndex b) {
    return std::tie(notes[a].onset, notes[a].id) < std::tie(notes[b].onset, notes[b].id);
  });
  std::vector<std::size_t> measure(n);
  for (NodeIndex i = 0; i < n; ++i) measure[i] = score.measure_position(notes[i].onset);

  std::vector<Tick> onsets(n);
  for (std::size_t k = 0; k < n; ++k) onsets[k] = notes[order[k]].onset;

  std::vector<Link> out;
  for (NodeIndex u : order) {
    const std::size_t last_measure = measure[u] + static_cast<std::size_t>(window_measures);
    auto it = std::lower_bound(onsets.begin(), onsets.end(), notes[u].offset());
    for (; it != onsets.end(); ++it) {
      const NodeIndex v = order[static_cast<std::size_t>(it - onsets.begin())];
      if (measure[v] > last_measure) break;
      out.push_back({u, v});
    }
  }
  return out;
}

ScoreGraph build_score_graph(const Score& score, const GraphOptions& options) {
  ScoreGraph graph;
  graph.num_nodes = score.notes.size();
  graph.edges = build_typed_edges(score, options);
  graph.candidates = build_candidate_links(score, options.window_measures);
  if (score.fully_labeled()) graph.targets = derive_ground_truth_links(score);
  return graph;
}

CoverageReport coverage_report(const ScoreGraph& graph) {
  if (!graph.targets) throw StateError("coverage requires ground-truth targets");
  std::set<Link> candidates(graph.candidates.begin(), graph.candidates.end());
  CoverageReport report;
  report.n_targets = graph.targets->links.size();
  for (const auto& link : graph.targets->links) report.n_covered += candidates.count(link);
  report.fraction = report.n_targets == 0
                        ? 1.0
                        : static_cast<double>(report.n_covered) / static_cast<double>(report.n_targets);
  return report;
}

}  // namespace voicesep
