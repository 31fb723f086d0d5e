// Quantized score model: notes on an integer tick grid plus a measure map.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace voicesep {

using Tick = std::int64_t;
using NodeIndex = std::size_t;

struct Measure {
  int index = 0;
  Tick onset = 0;
  Tick duration = 0;

  Tick end() const { return onset + duration; }
  bool operator==(const Measure&) const = default;
};

struct Note {
  std::string id;
  Tick onset = 0;
  Tick duration = 1;
  int pitch = 60;
  std::optional<int> voice;

  Tick offset() const { return onset + duration; }
  bool operator==(const Note&) const = default;
};

/// A piece of quantized music. After validate() the notes are sorted by
/// (onset, pitch, id) and a note's position in `notes` is its node index
/// in every downstream structure.
struct Score {
  int divisions = 4;
  std::vector<Measure> measures;
  std::vector<Note> notes;

  bool operator==(const Score&) const = default;

  /// Checks every invariant and sorts notes into canonical order.
  /// Throws ValidationError naming the offending field.
  void validate();

  /// Position (0-based) of the measure containing `onset`.
  std::size_t measure_position(Tick onset) const;

  const Measure& measure_of(const Note& note) const {
    return measures[measure_position(note.onset)];
  }

  bool fully_labeled() const;
  std::size_t num_voices() const;
};

/// Directed link between two notes, as node indices into Score::notes.
struct Link {
  NodeIndex src = 0;
  NodeIndex dst = 0;

  auto operator<=>(const Link&) const = default;
};

/// Consecutive same-voice note pairs. Sorted by (src, dst).
struct GroundTruthLinks {
  std::vector<Link> links;
};

/// Sort comparator for canonical note order.
bool canonical_note_less(const Note& a, const Note& b);

}  // namespace voicesep
