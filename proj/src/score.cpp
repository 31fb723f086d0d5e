#include "voicesep/score.h"

#include <algorithm>
#include <set>
#include <string>

#include "voicesep/errors.h"

namespace voicesep {

bool canonical_note_less(const Note& a, const Note& b) {
  if (a.onset != b.onset) return a.onset < b.onset;
  if (a.pitch != b.pitch) return a.pitch < b.pitch;
  return a.id < b.id;
}

void Score::validate() {
  if (divisions <= 0) throw ValidationError("divisions", "must be a positive integer");
  if (measures.empty()) throw ValidationError("measures", "at least one measure is required");

  for (std::size_t i = 0; i < measures.size(); ++i) {
    const auto& m = measures[i];
    const std::string field = "measures[" + std::to_string(i) + "]";
    if (m.duration <= 0) throw ValidationError(field + ".duration", "must be positive");
    if (i == 0) {
      if (m.onset != 0) throw ValidationError(field + ".onset", "first measure must start at 0");
      continue;
    }
    const auto& prev = measures[i - 1];
    if (m.onset != prev.end()) {
      throw ValidationError(field + ".onset",
                            "measures must tile the timeline (expected onset " +
                                std::to_string(prev.end()) + ", got " + std::to_string(m.onset) +
                                ")");
    }
    if (m.index != prev.index + 1) {
      throw ValidationError(field + ".index", "measure indices must be consecutive");
    }
  }

  const Tick end = measures.back().end();
  std::set<std::string> ids;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    const auto& n = notes[i];
    const std::string field = "notes[" + std::to_string(i) + "]";
    if (n.id.empty()) throw ValidationError(field + ".id", "must be a nonempty string");
    if (!ids.insert(n.id).second) throw ValidationError(field + ".id", "duplicate id '" + n.id + "'");
    if (n.onset < 0) throw ValidationError(field + ".onset", "must be nonnegative");
    if (n.duration < 1) throw ValidationError(field + ".duration", "must be at least 1 tick");
    if (n.pitch < 0 || n.pitch > 127) {
      throw ValidationError(field + ".pitch", "must be in [0,127], got " + std::to_string(n.pitch));
    }
    if (n.voice && *n.voice < 0) throw ValidationError(field + ".voice", "must be nonnegative");
    if (n.onset >= end) {
      throw ValidationError(field + ".onset", "note '" + n.id + "' starts after the last measure");
    }
  }

  std::sort(notes.begin(), notes.end(), canonical_note_less);
}

std::size_t Score::measure_position(Tick onset) const {
  auto it = std::upper_bound(measures.begin(), measures.end(), onset,
                             [](Tick t, const Measure& m) { return t < m.onset; });
  if (it == measures.begin() || onset >= measures.back().end()) {
    throw ValidationError("onset", "tick " + std::to_string(onset) + " lies outside the measure map");
  }
  return static_cast<std::size_t>(std::distance(measures.begin(), it) - 1);
}

bool Score::fully_labeled() const {
  return std::all_of(notes.begin(), notes.end(), [](const Note& n) { return n.voice.has_value(); });
}

std::size_t Score::num_voices() const {
  std::set<int> voices;
  for (const auto& n : notes) {
    if (n.voice) voices.insert(*n.voice);
  }
  return voices.size();
}

}  // namespace voicesep
