#include "voicesep/synthetic.h"

#include <algorithm>
#include <random>
#include <string>

#include "voicesep/errors.h"

namespace voicesep {
namespace {

// mt19937_64 output is fully specified by the standard; the std
// distributions are not, so draws go through these helpers to keep
// generated files identical across standard libraries.
std::uint64_t draw_index(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

int draw_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(draw_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

double draw_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void check_config(int n_voices, int n_notes_per_voice, const SyntheticConfig& c) {
  if (n_voices < 1) throw ConfigError("n_voices must be at least 1");
  if (n_notes_per_voice < 0) throw ConfigError("n_notes_per_voice must be nonnegative");
  if (c.divisions <= 0 || c.measure_duration <= 0) throw ConfigError("divisions and measure_duration must be positive");
  if (c.pitch_low < 0 || c.pitch_high > 127 || c.pitch_low >= c.pitch_high) {
    throw ConfigError("pitch range must satisfy 0 <= pitch_low < pitch_high <= 127");
  }
  if (c.max_step < 0) throw ConfigError("max_step must be nonnegative");
  if (c.pitch_high - c.pitch_low < 2 * c.max_step || c.band_half_width < c.max_step) {
    throw ConfigError("pitch range too narrow for step size " + std::to_string(c.max_step));
  }
  if (c.durations.empty()) throw ConfigError("durations must be nonempty");
  for (Tick d : c.durations) {
    if (d <= 0) throw ConfigError("durations must be positive");
  }
  if (c.rest_probability < 0.0 || c.rest_probability >= 1.0) throw ConfigError("rest_probability must be in [0,1)");
  if (c.rest_probability > 0.0) {
    if (c.rest_durations.empty()) throw ConfigError("rest_durations must be nonempty");
    for (Tick d : c.rest_durations) {
      if (d <= 0) throw ConfigError("rest_durations must be positive");
    }
  }
}

}  // namespace

Score generate_synthetic_score(std::uint64_t seed, int n_voices, int n_notes_per_voice,
                               const SyntheticConfig& config) {
  check_config(n_voices, n_notes_per_voice, config);
  std::mt19937_64 rng(seed);

  Score score;
  score.divisions = config.divisions;

  const int band = config.band_half_width;
  // Register centers from top voice to bottom, clipped so every band fits.
  const int top = std::max(config.pitch_low + band, config.pitch_high - band);
  const int bottom = std::min(config.pitch_high - band, config.pitch_low + band);
  Tick end = 0;
  for (int v = 0; v < n_voices; ++v) {
    int center = (top + bottom) / 2;
    if (n_voices > 1) center = top - (top - bottom) * v / (n_voices - 1);
    const int lo = std::max(config.pitch_low, center - band);
    const int hi = std::min(config.pitch_high, center + band);

    int pitch = std::clamp(center + draw_int(rng, -3, 3), lo, hi);
    Tick t = 0;
    for (int i = 0; i < n_notes_per_voice; ++i) {
      if (i > 0) {
        if (draw_unit(rng) < config.rest_probability) {
          t += config.rest_durations[draw_index(rng, config.rest_durations.size())];
        }
        const int step = draw_int(rng, -config.max_step, config.max_step);
        pitch = (pitch + step < lo || pitch + step > hi) ? pitch - step : pitch + step;
      }
      const Tick duration = config.durations[draw_index(rng, config.durations.size())];
      Note note;
      note.id = "v" + std::to_string(v) + "n" + std::to_string(i);
      note.onset = t;
      note.duration = duration;
      note.pitch = pitch;
      note.voice = v;
      score.notes.push_back(std::move(note));
      t += duration;
    }
    end = std::max(end, t);
  }

  const Tick n_measures = std::max<Tick>(1, (end + config.measure_duration - 1) / config.measure_duration);
  for (Tick m = 0; m < n_measures; ++m) {
    score.measures.push_back({static_cast<int>(m), m * config.measure_duration, config.measure_duration});
  }
  score.validate();
  return score;
}

}  // namespace voicesep
