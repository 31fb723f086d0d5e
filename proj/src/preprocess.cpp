#include "voicesep/preprocess.h"

#include <algorithm>
#include <map>

#include "voicesep/errors.h"

namespace voicesep {
namespace {

// Node indices grouped by voice, each group sorted by onset.
std::map<int, std::vector<NodeIndex>> notes_by_voice(const Score& score) {
  std::map<int, std::vector<NodeIndex>> groups;
  for (NodeIndex i = 0; i < score.notes.size(); ++i) {
    const auto& note = score.notes[i];
    if (!note.voice) throw MissingVoiceError("note '" + note.id + "' has no voice label");
    groups[*note.voice].push_back(i);
  }
  for (auto& [voice, members] : groups) {
    std::stable_sort(members.begin(), members.end(), [&](NodeIndex a, NodeIndex b) {
      return score.notes[a].onset < score.notes[b].onset;
    });
  }
  return groups;
}

}  // namespace

PreprocessResult preprocess_monophonic(const Score& score, const PreprocessOptions& options) {
  std::map<int, std::vector<Note>> voices;
  for (const auto& note : score.notes) {
    if (!note.voice) throw MissingVoiceError("note '" + note.id + "' has no voice label");
    voices[*note.voice].push_back(note);
  }

  PreprocessResult result;
  result.score.divisions = score.divisions;
  result.score.measures = score.measures;

  for (auto& [voice, notes] : voices) {
    // Highest pitch first within an onset, then longest, then smallest id.
    std::sort(notes.begin(), notes.end(), [](const Note& a, const Note& b) {
      if (a.onset != b.onset) return a.onset < b.onset;
      if (a.pitch != b.pitch) return a.pitch > b.pitch;
      if (a.duration != b.duration) return a.duration > b.duration;
      return a.id < b.id;
    });
    std::vector<Note> kept;
    for (auto& note : notes) {
      if (!kept.empty() && kept.back().onset == note.onset) {
        result.removed.push_back(note.id);
        continue;
      }
      kept.push_back(std::move(note));
    }
    if (options.truncate_overlaps) {
      for (std::size_t i = 0; i + 1 < kept.size(); ++i) {
        if (kept[i].offset() > kept[i + 1].onset) kept[i].duration = kept[i + 1].onset - kept[i].onset;
      }
    }
    for (auto& note : kept) result.score.notes.push_back(std::move(note));
  }

  std::sort(result.removed.begin(), result.removed.end());
  result.score.validate();
  return result;
}

GroundTruthLinks derive_ground_truth_links(const Score& score) {
  GroundTruthLinks out;
  for (const auto& [voice, members] : notes_by_voice(score)) {
    for (std::size_t i = 0; i + 1 < members.size(); ++i) {
      const auto& a = score.notes[members[i]];
      const auto& b = score.notes[members[i + 1]];
      if (a.onset == b.onset) {
        throw NotMonophonicError("voice " + std::to_string(voice) + " has notes '" + a.id + "' and '" +
                                 b.id + "' at the same onset");
      }
      out.links.push_back({members[i], members[i + 1]});
    }
  }
  std::sort(out.links.begin(), out.links.end());
  return out;
}

}  // namespace voicesep
