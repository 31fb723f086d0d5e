#include "voicesep/export.h"

#include <algorithm>
#include <array>
#include <sstream>

#include "voicesep/errors.h"

namespace voicesep {
namespace {

constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                                  "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string escape_dot(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string export_svg(const Score& score, std::span<const Link> links, const SvgOptions& options) {
  const auto& notes = score.notes;
  int lo = 127;
  int hi = 0;
  for (const auto& n : notes) {
    lo = std::min(lo, n.pitch);
    hi = std::max(hi, n.pitch);
  }
  if (notes.empty()) lo = hi = 60;
  const Tick end = score.measures.empty() ? 0 : score.measures.back().end();
  const double m = options.margin;
  const double width = 2 * m + static_cast<double>(end) * options.pixels_per_tick;
  const double height = 2 * m + static_cast<double>(hi - lo + 1) * options.pixels_per_semitone;

  auto x_of = [&](Tick t) { return m + static_cast<double>(t) * options.pixels_per_tick; };
  auto y_of = [&](int pitch) { return m + static_cast<double>(hi - pitch) * options.pixels_per_semitone; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" style=\"background:white\">\n";
  out << "  <defs><marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"10\" refY=\"5\" markerWidth=\"6\" "
         "markerHeight=\"6\" orient=\"auto\"><path d=\"M 0 0 L 10 5 L 0 10 z\" fill=\"#333\"/></marker></defs>\n";
  for (const auto& meas : score.measures) {
    out << "  <line class=\"barline\" x1=\"" << x_of(meas.onset) << "\" y1=\"" << m << "\" x2=\"" << x_of(meas.onset)
        << "\" y2=\"" << height - m << "\" stroke=\"#ccc\"/>\n";
  }
  for (const auto& n : notes) {
    const char* color = n.voice ? kPalette[static_cast<std::size_t>(*n.voice) % kPalette.size()] : "#999999";
    out << "  <rect class=\"note\" data-id=\"" << escape_xml(n.id) << "\" x=\"" << x_of(n.onset) << "\" y=\""
        << y_of(n.pitch) << "\" width=\"" << static_cast<double>(n.duration) * options.pixels_per_tick
        << "\" height=\"" << options.pixels_per_semitone << "\" fill=\"" << color << "\"/>\n";
  }
  const double half = options.pixels_per_semitone / 2;
  for (const auto& l : links) {
    if (l.src >= notes.size() || l.dst >= notes.size()) throw ConsistencyError("link references an unknown note");
    const auto& a = notes[l.src];
    const auto& b = notes[l.dst];
    out << "  <line class=\"link\" x1=\"" << x_of(a.offset()) << "\" y1=\"" << y_of(a.pitch) + half << "\" x2=\""
        << x_of(b.onset) << "\" y2=\"" << y_of(b.pitch) + half
        << "\" stroke=\"#333\" stroke-width=\"1\" marker-end=\"url(#arrow)\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string export_dot(const Score& score, const ScoreGraph& graph, std::optional<std::pair<int, int>> measures) {
  const auto& notes = score.notes;
  if (graph.num_nodes != notes.size()) throw ConsistencyError("graph does not match the score");
  std::vector<char> keep(notes.size(), 1);
  if (measures) {
    for (std::size_t i = 0; i < notes.size(); ++i) {
      const int idx = score.measure_of(notes[i]).index;
      keep[i] = idx >= measures->first && idx <= measures->second;
    }
  }
  const auto kept = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), 1));
  if (kept > kDotNodeLimit) {
    throw SizeError("graph has " + std::to_string(kept) + " notes; DOT export is limited to " +
                    std::to_string(kDotNodeLimit) + ", pass a measure range");
  }

  std::ostringstream out;
  out << "digraph score {\n  rankdir=LR;\n  node [shape=box];\n";
  for (std::size_t i = 0; i < notes.size(); ++i) {
    if (!keep[i]) continue;
    out << "  n" << i << " [label=\"" << escape_dot(notes[i].id) << "\\np" << notes[i].pitch << " @" << notes[i].onset
        << "\"];\n";
  }
  for (const auto& e : graph.edges) {
    if (!keep[e.src] || !keep[e.dst]) continue;
    out << "  n" << e.src << " -> n" << e.dst << " [label=\"" << relation_name(e.type) << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace voicesep
