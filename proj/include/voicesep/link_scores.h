#pragma once

#include <vector>

#include "voicesep/score.h"

namespace voicesep {

/// Predicted probability for one candidate link.
struct ScoredLink {
  Link link;
  double score = 0.0;
};

/// Scores in candidate order. Pairs outside the candidate set implicitly
/// score zero.
using LinkScores = std::vector<ScoredLink>;

}  // namespace voicesep
