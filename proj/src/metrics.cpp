#include "voicesep/metrics.h"

#include <set>

namespace voicesep {

MetricsReport metrics_from_counts(const LinkCounts& c) {
  MetricsReport r;
  r.counts = c;
  if (c.predicted == 0) {
    r.precision = c.target == 0 ? 1.0 : 0.0;
  } else {
    r.precision = static_cast<double>(c.correct) / static_cast<double>(c.predicted);
  }
  r.recall = c.target == 0 ? 1.0 : static_cast<double>(c.correct) / static_cast<double>(c.target);
  const double sum = r.precision + r.recall;
  r.f1 = sum > 0.0 ? 2.0 * r.precision * r.recall / sum : 0.0;
  return r;
}

MetricsReport link_metrics(std::span<const Link> predicted, std::span<const Link> targets) {
  const std::set<Link> pred(predicted.begin(), predicted.end());
  const std::set<Link> truth(targets.begin(), targets.end());
  LinkCounts c;
  c.predicted = pred.size();
  c.target = truth.size();
  for (const auto& l : pred) c.correct += truth.count(l);
  return metrics_from_counts(c);
}

AggregateMetrics aggregate_metrics(std::vector<MetricsReport> per_piece) {
  AggregateMetrics out;
  out.per_piece = std::move(per_piece);
  LinkCounts pooled;
  for (const auto& r : out.per_piece) {
    pooled.predicted += r.counts.predicted;
    pooled.target += r.counts.target;
    pooled.correct += r.counts.correct;
    out.macro.precision += r.precision;
    out.macro.recall += r.recall;
    out.macro.f1 += r.f1;
  }
  out.micro = metrics_from_counts(pooled);
  out.macro.counts = pooled;
  if (!out.per_piece.empty()) {
    const auto n = static_cast<double>(out.per_piece.size());
    out.macro.precision /= n;
    out.macro.recall /= n;
    out.macro.f1 /= n;
  }
  return out;
}

}  // namespace voicesep
