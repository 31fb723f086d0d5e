#include "voicesep/losses.h"

#include <algorithm>
#include <random>
#include <set>

#include "voicesep/errors.h"

namespace voicesep {

using diff::Matrix;
using diff::Scalar;
using diff::Var;

TrainingBatch subsample_negatives(std::span<const Link> candidates, const GroundTruthLinks& targets,
                                  std::uint64_t seed, std::uint64_t epoch) {
  const std::set<Link> target_set(targets.links.begin(), targets.links.end());
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    (target_set.count(candidates[i]) ? positives : negatives).push_back(i);
  }

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  const std::size_t take = std::min(positives.size(), negatives.size());
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (negatives.size() - i));
    std::swap(negatives[i], negatives[j]);
  }
  negatives.resize(take);
  std::sort(negatives.begin(), negatives.end());

  TrainingBatch batch;
  batch.n_positives = positives.size();
  batch.n_negatives = negatives.size();
  batch.indices = positives;
  batch.indices.insert(batch.indices.end(), negatives.begin(), negatives.end());
  batch.labels.assign(positives.size(), 1.0);
  batch.labels.resize(batch.indices.size(), 0.0);
  return batch;
}

IndicatorVectors indicator_vectors(const GroundTruthLinks& targets, std::span<const Link> candidates,
                                   std::size_t num_nodes, bool covered_only) {
  const std::set<Link> candidate_set(candidates.begin(), candidates.end());
  IndicatorVectors out{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_nodes)),
                       Eigen::VectorXd::Zero(static_cast<Eigen::Index>(num_nodes))};
  for (const auto& link : targets.links) {
    if (link.src >= num_nodes || link.dst >= num_nodes) throw ConsistencyError("target link references an unknown node");
    if (covered_only && !candidate_set.count(link)) continue;
    out.sources(static_cast<Eigen::Index>(link.src)) = 1.0;
    out.destinations(static_cast<Eigen::Index>(link.dst)) = 1.0;
  }
  return out;
}

Var bce_loss(Var probabilities, const TrainingBatch& batch) {
  diff::Tape& tape = *probabilities.tape();
  if (batch.indices.empty()) return tape.constant(Matrix::Zero(1, 1));
  Var p = diff::clamp(diff::gather_rows(probabilities, batch.indices), Scalar(kProbabilityClamp),
                      Scalar(1 - kProbabilityClamp));
  Matrix y(static_cast<Eigen::Index>(batch.labels.size()), 1);
  for (std::size_t i = 0; i < batch.labels.size(); ++i) y(static_cast<Eigen::Index>(i), 0) = static_cast<Scalar>(batch.labels[i]);
  Var labels = tape.constant(y);
  Var not_labels = tape.constant(Matrix::Ones(y.rows(), 1) - y);
  Var log_p = diff::log(p);
  Var log_not_p = diff::log(diff::add_constant(diff::scale(p, -1), 1));
  return diff::scale(diff::sum(labels * log_p + not_labels * log_not_p), -1);
}

Var reg_loss(Var probabilities, std::span<const Link> candidates, const IndicatorVectors& indicators,
             std::size_t num_nodes) {
  if (num_nodes == 0) throw ContractError("regularization loss needs at least one node");
  if (static_cast<std::size_t>(probabilities.rows()) != candidates.size() || probabilities.cols() != 1) {
    throw ShapeError("probabilities must be |candidates| x 1");
  }
  if (static_cast<std::size_t>(indicators.sources.size()) != num_nodes ||
      static_cast<std::size_t>(indicators.destinations.size()) != num_nodes) {
    throw ShapeError("indicator vectors must have one entry per node");
  }
  diff::Tape& tape = *probabilities.tape();
  std::vector<diff::Index> src;
  std::vector<diff::Index> dst;
  for (const auto& c : candidates) {
    src.push_back(c.src);
    dst.push_back(c.dst);
  }
  Var sources = tape.constant(indicators.sources.cast<Scalar>());
  Var destinations = tape.constant(indicators.destinations.cast<Scalar>());

  Var row_sums = diff::scatter_add_rows(probabilities, src, num_nodes);
  Var col_sums = diff::scatter_add_rows(probabilities, dst, num_nodes);
  Var squared = diff::square(probabilities);
  Var row_norms = diff::sqrt(diff::scatter_add_rows(squared, src, num_nodes));
  Var col_norms = diff::sqrt(diff::scatter_add_rows(squared, dst, num_nodes));

  Var assignment = diff::l2_norm(sources - row_sums) + diff::l2_norm(destinations - col_sums);
  Var sparsity = diff::l2_norm(sources - row_norms) + diff::l2_norm(destinations - col_norms);
  return diff::scale(assignment + sparsity, Scalar(1) / static_cast<Scalar>(num_nodes));
}

double alpha_schedule(std::uint64_t epoch, double ramp_per_epoch, double max_alpha) {
  if (ramp_per_epoch < 0.0) throw ConfigError("alpha ramp must be nonnegative");
  return std::min(max_alpha, static_cast<double>(epoch) * ramp_per_epoch);
}

Var total_loss(Var classification, Var regularization, double alpha) {
  if (alpha == 0.0) return classification;
  return classification + diff::scale(regularization, static_cast<Scalar>(alpha));
}

}  // namespace voicesep
