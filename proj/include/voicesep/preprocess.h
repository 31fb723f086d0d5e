// Monophonic enforcement and ground-truth link derivation.

#pragma once

#include <string>
#include <vector>

#include "voicesep/score.h"

namespace voicesep {

struct PreprocessOptions {
  /// Shorten a note that is still sounding when the next note of its voice
  /// starts.
  bool truncate_overlaps = true;
};

struct PreprocessResult {
  Score score;
  std::vector<std::string> removed;
};

/// Within each voice keeps only the highest note among notes with equal
/// onsets (ties: longest, then smallest id) and optionally truncates
/// overlaps. Throws MissingVoiceError if any note is unlabeled.
PreprocessResult preprocess_monophonic(const Score& score,
                                       const PreprocessOptions& options = {});

/// Pairs of consecutive notes per voice. Throws NotMonophonicError when a
/// voice holds two notes with the same onset.
GroundTruthLinks derive_ground_truth_links(const Score& score);

}  // namespace voicesep
