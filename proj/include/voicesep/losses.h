// Training objectives: subsampled binary cross-entropy, the assignment
// regularizer over the full candidate set, and the regularizer weight
// schedule.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "voicesep/diff/tape.h"
#include "voicesep/score.h"

namespace voicesep {

struct TrainingBatch {
  /// Positions in the candidate list, positives first, each part ascending.
  std::vector<std::size_t> indices;
  /// 1 for positives, 0 for negatives, aligned with `indices`.
  std::vector<double> labels;
  std::size_t n_positives = 0;
  std::size_t n_negatives = 0;
};

/// All covered targets plus an equal-size uniform sample (without
/// replacement) of the other candidates, fresh for every (seed, epoch).
TrainingBatch subsample_negatives(std::span<const Link> candidates, const GroundTruthLinks& targets,
                                  std::uint64_t seed, std::uint64_t epoch);

struct IndicatorVectors {
  Eigen::VectorXd sources;       // 1 where a node starts a target link
  Eigen::VectorXd destinations;  // 1 where a node ends a target link
};

/// Indicators of the target links; with `covered_only` only links present
/// in `candidates` count.
IndicatorVectors indicator_vectors(const GroundTruthLinks& targets, std::span<const Link> candidates,
                                   std::size_t num_nodes, bool covered_only = true);

inline constexpr double kProbabilityClamp = 1e-7;

/// Summed BCE over the batch; `probabilities` is |candidates| x 1.
diff::Var bce_loss(diff::Var probabilities, const TrainingBatch& batch);

/// (||s - rowsum(A)|| + ||t - colsum(A)|| + ||s - sqrt(rowsum(A^2))|| +
///  ||t - sqrt(colsum(A^2))||) / N, where A holds `probabilities` at the
/// candidate positions and zero elsewhere. Throws ContractError for N = 0.
diff::Var reg_loss(diff::Var probabilities, std::span<const Link> candidates, const IndicatorVectors& indicators,
                   std::size_t num_nodes);

/// min(max_alpha, epoch * ramp). Throws ConfigError for a negative ramp.
double alpha_schedule(std::uint64_t epoch, double ramp_per_epoch = 0.02, double max_alpha = 1.0);

diff::Var total_loss(diff::Var classification, diff::Var regularization, double alpha);

}  // namespace voicesep
