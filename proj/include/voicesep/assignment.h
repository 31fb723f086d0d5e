// Postprocessing of predicted link scores: optimal partial assignment,
// greedy conflict resolution, and extraction of voice trajectories.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "voicesep/link_scores.h"
#include "voicesep/score.h"

namespace voicesep {

/// selected[i] refers to the i-th entry of the LinkScores it was built
/// from. At most one selected entry per source and per destination.
struct AssignmentMask {
  std::vector<std::uint8_t> selected;
};

/// Maximum-weight partial matching of a dense rows x cols weight matrix.
/// NaN entries are forbidden. Returns the matched column per row or -1.
/// Only strictly positive weights are ever matched.
std::vector<int> max_weight_matching(const Eigen::MatrixXd& weights);

/// Exact optimum of sum(score * selected) under <=1 outgoing and <=1
/// incoming selected link per note.
AssignmentMask linear_assignment(const LinkScores& scores);

/// Selected links scoring at least `threshold`, in candidate order.
std::vector<Link> apply_mask_and_threshold(const LinkScores& scores, const AssignmentMask& mask,
                                           double threshold = 0.5);

/// Accepts links by descending score (ties by source id, then destination
/// id) while both endpoints have a free slot and the score reaches the
/// threshold.
std::vector<Link> resolve_greedy(const LinkScores& scores, const Score& score, double threshold = 0.5);

/// Throws DegreeError when any node has more than one outgoing or incoming
/// link, or the links form a cycle.
void check_degrees(std::span<const Link> links, std::size_t num_nodes);

struct VoiceAssignment {
  /// Note indices of each voice in time order; voices ordered by first onset.
  std::vector<std::vector<NodeIndex>> voices;
  std::vector<int> voice_of;
};

/// Follows link paths into voices; unlinked notes become singleton voices.
/// Throws DegreeError on degree violations and ConsistencyError when a link
/// joins overlapping notes.
VoiceAssignment extract_voices(const Score& score, std::span<const Link> links);

/// Copy of `score` with every note's voice set from `assignment`.
Score apply_voices(const Score& score, const VoiceAssignment& assignment);

}  // namespace voicesep
