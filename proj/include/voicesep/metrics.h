#pragma once

#include <span>
#include <vector>

#include "voicesep/score.h"

namespace voicesep {

struct LinkCounts {
  std::size_t predicted = 0;
  std::size_t target = 0;
  std::size_t correct = 0;
};

/// Binary precision/recall/F1 for the positive (linked) class.
///
/// Degenerate cases: with no predictions precision is 1 if there are also
/// no targets and 0 otherwise; with no targets recall is 1. F1 is
/// 2PR/(P+R), or 0 when P+R = 0.
struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  LinkCounts counts;
};

MetricsReport metrics_from_counts(const LinkCounts& counts);
MetricsReport link_metrics(std::span<const Link> predicted, std::span<const Link> targets);

struct AggregateMetrics {
  std::vector<MetricsReport> per_piece;
  /// Pooled over all links of all pieces.
  MetricsReport micro;
  /// Unweighted mean of per-piece precision, recall and F1; counts summed.
  MetricsReport macro;
};

AggregateMetrics aggregate_metrics(std::vector<MetricsReport> per_piece);

}  // namespace voicesep
