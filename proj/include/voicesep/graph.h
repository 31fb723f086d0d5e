// Heterogeneous note graph: typed edges between notes and the candidate
// link set the predictor scores.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "voicesep/score.h"

namespace voicesep {

enum class RelationType : std::uint8_t {
  kOnset = 0,
  kDuring,
  kFollow,
  kSilence,
  kDuringRev,
  kFollowRev,
  kSilenceRev,
};

inline constexpr std::size_t kNumRelations = 7;

std::string_view relation_name(RelationType r);

/// Inverse type of a base relation; kOnset is its own inverse.
RelationType inverse(RelationType r);

struct TypedEdge {
  NodeIndex src = 0;
  RelationType type = RelationType::kOnset;
  NodeIndex dst = 0;

  bool operator==(const TypedEdge&) const = default;
};

struct GraphOptions {
  /// Candidate window: measure_position(v) <= measure_position(u) + window.
  int window_measures = 2;
  /// Use on(v) <= on(u)+dur(u) for During, so it overlaps with Follow.
  bool during_inclusive = false;
  /// Only notes whose offset is the latest before a gap emit Silence edges.
  bool silence_last_offset = false;
};

struct ScoreGraph {
  std::size_t num_nodes = 0;
  /// Sorted by (type, src, dst).
  std::vector<TypedEdge> edges;
  /// Ordered by (src onset, src id, dst onset, dst id).
  std::vector<Link> candidates;
  std::optional<GroundTruthLinks> targets;

  std::array<std::size_t, kNumRelations> edge_counts() const;
};

/// All typed edges of a valid score, base types pointing forward in time
/// plus their inverses.
std::vector<TypedEdge> build_typed_edges(const Score& score, const GraphOptions& options = {});

/// Candidate links: non-overlapping pairs within the measure window.
/// Throws ConfigError when window_measures < 0.
std::vector<Link> build_candidate_links(const Score& score, int window_measures = 2);

/// Builds edges and candidates, and ground-truth links when every note has
/// a voice label.
ScoreGraph build_score_graph(const Score& score, const GraphOptions& options = {});

struct CoverageReport {
  std::size_t n_targets = 0;
  std::size_t n_covered = 0;
  double fraction = 1.0;
};

/// Share of ground-truth links present in the candidate set. Throws
/// StateError if the graph has no targets.
CoverageReport coverage_report(const ScoreGraph& graph);

}  // namespace voicesep
