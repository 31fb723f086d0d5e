// Shared fixtures for the unit tests.

#pragma once

#include <string>

#include "voicesep/score.h"

namespace voicesep::testing {

// Two measures of 16 ticks; u and x form voice 0, v and w voice 1.
inline Score four_note_score(bool labeled = true) {
  Score s;
  s.divisions = 4;
  s.measures = {{0, 0, 16}, {1, 16, 16}};
  s.notes = {{"u", 0, 8, 60, 0}, {"v", 0, 4, 67, 1}, {"w", 4, 4, 64, 1}, {"x", 12, 4, 62, 0}};
  if (!labeled) {
    for (auto& n : s.notes) n.voice.reset();
  }
  s.validate();
  return s;
}

inline NodeIndex index_of(const Score& s, const std::string& id) {
  for (NodeIndex i = 0; i < s.notes.size(); ++i) {
    if (s.notes[i].id == id) return i;
  }
  return s.notes.size();
}

inline Link link_of(const Score& s, const std::string& a, const std::string& b) {
  return {index_of(s, a), index_of(s, b)};
}

}  // namespace voicesep::testing
