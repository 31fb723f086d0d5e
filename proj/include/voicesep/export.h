// Visual exports of a score and its links.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>

#include "voicesep/graph.h"
#include "voicesep/score.h"

namespace voicesep {

struct SvgOptions {
  double pixels_per_tick = 8.0;
  double pixels_per_semitone = 6.0;
  double margin = 20.0;
};

/// Piano-roll SVG: one <rect class="note"> per note, colored by voice,
/// and one <line class="link"> arrow per link.
std::string export_svg(const Score& score, std::span<const Link> links, const SvgOptions& options = {});

inline constexpr std::size_t kDotNodeLimit = 300;

/// Graphviz DOT of the typed edges, optionally restricted to an inclusive
/// range of measure indices. Throws SizeError when more than 300 notes
/// remain.
std::string export_dot(const Score& score, const ScoreGraph& graph,
                       std::optional<std::pair<int, int>> measures = std::nullopt);

}  // namespace voicesep
