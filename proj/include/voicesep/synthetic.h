// Seeded generator of small polyphonic scores with known voices.

#pragma once

#include <cstdint>
#include <vector>

#include "voicesep/score.h"

namespace voicesep {

struct SyntheticConfig {
  int divisions = 4;
  Tick measure_duration = 16;
  int pitch_low = 36;
  int pitch_high = 84;
  /// Largest melodic step in semitones.
  int max_step = 4;
  /// Half-width of each voice's pitch band around its register center.
  /// Bands of neighbouring voices overlap, so voices may cross.
  int band_half_width = 9;
  /// Note durations, drawn uniformly (repeat entries to weight them).
  std::vector<Tick> durations = {2, 4, 4, 4, 8};
  double rest_probability = 0.06;
  std::vector<Tick> rest_durations = {2, 4};
};

/// Deterministic for a fixed (seed, arguments). Each voice is a bounded
/// random walk in pitch. Throws ConfigError on infeasible settings.
Score generate_synthetic_score(std::uint64_t seed, int n_voices, int n_notes_per_voice,
                               const SyntheticConfig& config = {});

}  // namespace voicesep
