#include "voicesep/assignment.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include "voicesep/errors.h"

namespace voicesep {
namespace {

// Minimum-cost assignment of every row of an n x m cost matrix (n <= m)
// using shortest augmenting paths with potentials. Returns the column of
// each row. `cost(i, j)` is 0-based.
template <typename Cost>
std::vector<int> hungarian_rows(int n, int m, Cost cost) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(m) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(m) + 1, 0);
  std::vector<double> minv(static_cast<std::size_t>(m) + 1);
  std::vector<char> used(static_cast<std::size_t>(m) + 1);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

std::vector<int> max_weight_matching(const Eigen::MatrixXd& weights) {
  const int rows = static_cast<int>(weights.rows());
  const int cols = static_cast<int>(weights.cols());
  if (rows == 0) return {};

  double largest = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    const double w = weights.data()[i];
    if (!std::isnan(w)) largest = std::max(largest, std::abs(w));
  }
  // Larger than any achievable total, so a forbidden cell never beats the
  // zero-cost slack column every row owns.
  const double forbidden = (largest + 1.0) * (rows + cols + 1);

  // Columns [cols, cols + rows) are slack: choosing one leaves the row
  // unmatched at zero gain.
  auto cost = [&](int i, int j) {
    if (j >= cols) return 0.0;
    const double w = weights(i, j);
    if (std::isnan(w) || w <= 0.0) return std::isnan(w) ? forbidden : 0.0;
    return -w;
  };
  std::vector<int> assignment = hungarian_rows(rows, cols + rows, cost);
  for (int i = 0; i < rows; ++i) {
    int& j = assignment[static_cast<std::size_t>(i)];
    if (j >= cols || (j >= 0 && !(weights(i, j) > 0.0))) j = -1;
  }
  return assignment;
}

AssignmentMask linear_assignment(const LinkScores& scores) {
  AssignmentMask mask;
  mask.selected.assign(scores.size(), 0);
  if (scores.empty()) return mask;

  // Compact to the sources and destinations that occur in the candidates.
  std::map<NodeIndex, int> row_of;
  std::map<NodeIndex, int> col_of;
  for (const auto& s : scores) {
    row_of.emplace(s.link.src, 0);
    col_of.emplace(s.link.dst, 0);
  }
  int next = 0;
  for (auto& [node, idx] : row_of) idx = next++;
  next = 0;
  for (auto& [node, idx] : col_of) idx = next++;

  Eigen::MatrixXd weights = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(row_of.size()),
                                                      static_cast<Eigen::Index>(col_of.size()),
                                                      std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> entry(row_of.size() * col_of.size(), scores.size());
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const int r = row_of.at(scores[k].link.src);
    const int c = col_of.at(scores[k].link.dst);
    weights(r, c) = scores[k].score;
    entry[static_cast<std::size_t>(r) * col_of.size() + static_cast<std::size_t>(c)] = k;
  }

  const auto matching = max_weight_matching(weights);
  for (std::size_t r = 0; r < matching.size(); ++r) {
    if (matching[r] < 0) continue;
    mask.selected[entry[r * col_of.size() + static_cast<std::size_t>(matching[r])]] = 1;
  }
  return mask;
}

std::vector<Link> apply_mask_and_threshold(const LinkScores& scores, const AssignmentMask& mask, double threshold) {
  if (mask.selected.size() != scores.size()) throw ConsistencyError("mask does not match the scores");
  std::vector<Link> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask.selected[i] && scores[i].score >= threshold) out.push_back(scores[i].link);
  }
  return out;
}

std::vector<Link> resolve_greedy(const LinkScores& scores, const Score& score, double threshold) {
  const auto& notes = score.notes;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& l = scores[i].link;
    if (l.src >= notes.size() || l.dst >= notes.size()) throw ConsistencyError("link references an unknown note");
    if (scores[i].score >= threshold) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& la = scores[a].link;
    const auto& lb = scores[b].link;
    if (scores[a].score != scores[b].score) return scores[a].score > scores[b].score;
    return std::tie(notes[la.src].id, notes[la.dst].id) < std::tie(notes[lb.src].id, notes[lb.dst].id);
  });

  std::vector<char> out_taken(notes.size(), 0);
  std::vector<char> in_taken(notes.size(), 0);
  std::vector<std::size_t> accepted;
  for (std::size_t i : order) {
    const auto& l = scores[i].link;
    if (out_taken[l.src] || in_taken[l.dst]) continue;
    out_taken[l.src] = in_taken[l.dst] = 1;
    accepted.push_back(i);
  }
  std::sort(accepted.begin(), accepted.end());
  std::vector<Link> links;
  for (std::size_t i : accepted) links.push_back(scores[i].link);
  return links;
}

void check_degrees(std::span<const Link> links, std::size_t num_nodes) {
  std::vector<int> next(num_nodes, -1);
  std::vector<int> indegree(num_nodes, 0);
  for (const auto& l : links) {
    if (l.src >= num_nodes || l.dst >= num_nodes) throw DegreeError("link references an unknown node");
    if (l.src == l.dst) throw DegreeError("self link on node " + std::to_string(l.src));
    if (next[l.src] != -1) throw DegreeError("node " + std::to_string(l.src) + " has more than one outgoing link");
    if (++indegree[l.dst] > 1) throw DegreeError("node " + std::to_string(l.dst) + " has more than one incoming link");
    next[l.src] = static_cast<int>(l.dst);
  }
  // With in/out degree <= 1, a component without a head is a cycle.
  std::vector<char> seen(num_nodes, 0);
  for (std::size_t s = 0; s < num_nodes; ++s) {
    if (indegree[s] != 0) continue;
    for (int v = static_cast<int>(s); v != -1; v = next[static_cast<std::size_t>(v)]) seen[static_cast<std::size_t>(v)] = 1;
  }
  for (std::size_t i = 0; i < num_nodes; ++i) {
    if (!seen[i]) throw DegreeError("links form a cycle through node " + std::to_string(i));
  }
}

VoiceAssignment extract_voices(const Score& score, std::span<const Link> links) {
  const std::size_t n = score.notes.size();
  check_degrees(links, n);
  std::vector<int> next(n, -1);
  std::vector<char> has_prev(n, 0);
  for (const auto& l : links) {
    const auto& a = score.notes[l.src];
    const auto& b = score.notes[l.dst];
    if (a.offset() > b.onset) {
      throw ConsistencyError("link '" + a.id + "' -> '" + b.id + "' joins overlapping notes");
    }
    next[l.src] = static_cast<int>(l.dst);
    has_prev[l.dst] = 1;
  }

  VoiceAssignment out;
  for (NodeIndex s = 0; s < n; ++s) {
    if (has_prev[s]) continue;
    std::vector<NodeIndex> voice;
    for (int v = static_cast<int>(s); v != -1; v = next[static_cast<std::size_t>(v)]) {
      voice.push_back(static_cast<NodeIndex>(v));
    }
    out.voices.push_back(std::move(voice));
  }
  std::stable_sort(out.voices.begin(), out.voices.end(), [&](const auto& a, const auto& b) {
    return score.notes[a.front()].onset < score.notes[b.front()].onset;
  });
  out.voice_of.assign(n, -1);
  for (std::size_t v = 0; v < out.voices.size(); ++v) {
    for (NodeIndex i : out.voices[v]) out.voice_of[i] = static_cast<int>(v);
  }
  return out;
}

Score apply_voices(const Score& score, const VoiceAssignment& assignment) {
  if (assignment.voice_of.size() != score.notes.size()) throw ConsistencyError("assignment does not match the score");
  Score out = score;
  for (std::size_t i = 0; i < out.notes.size(); ++i) out.notes[i].voice = assignment.voice_of[i];
  return out;
}

}  // namespace voicesep
