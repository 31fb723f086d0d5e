// Per-note input features: pitch class, octave, normalized duration, and
// Laplacian positional encoding.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "voicesep/graph.h"
#include "voicesep/score.h"

namespace voicesep {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::size_t kPitchClassColumns = 12;
inline constexpr std::size_t kOctaveColumns = 8;
inline constexpr std::size_t kIntrinsicColumns = kPitchClassColumns + kOctaveColumns + 1;
inline constexpr std::size_t kDurationColumn = kPitchClassColumns + kOctaveColumns;
inline constexpr std::size_t kDefaultPeDim = 20;
inline constexpr std::size_t kFeatureColumns = kIntrinsicColumns + kDefaultPeDim;

/// 1 - tanh(note_duration / measure_duration).
double duration_feature(Tick note_duration, Tick measure_duration);

/// clamp(floor(pitch / 12) - 1, 0, 7).
int octave_index(int pitch);

/// |V| x 21: pitch-class one-hot, octave one-hot, duration scalar.
FeatureMatrix intrinsic_features(const Score& score);

struct LaplacianOptions {
  std::size_t k = kDefaultPeDim;
  /// Graphs above this size use the Lanczos solver.
  std::size_t dense_limit = 2000;
  double nullspace_tolerance = 1e-8;
  double residual_tolerance = 1e-6;
};

struct LaplacianSpectrum {
  Eigen::VectorXd eigenvalues;  // retained, ascending
  FeatureMatrix eigenvectors;   // |V| x retained, unit columns
};

/// Symmetric normalized Laplacian of the undirected union of all typed
/// edges. Rows and columns of isolated nodes are zero.
Eigen::MatrixXd normalized_laplacian(const ScoreGraph& graph);

/// Smallest non-null eigenpairs (at most k). Throws NumericalError when a
/// retained pair's residual exceeds the tolerance.
LaplacianSpectrum laplacian_spectrum(const ScoreGraph& graph, const LaplacianOptions& options = {});

/// |V| x k positional encoding, zero-padded, each column's first nonzero
/// entry positive.
FeatureMatrix laplacian_pe(const ScoreGraph& graph, const LaplacianOptions& options = {});

/// Flips the sign of each positional-encoding column independently with
/// probability 1/2. Used once per piece per training epoch.
void randomize_pe_signs(FeatureMatrix& features, std::uint64_t seed,
                        std::size_t pe_offset = kIntrinsicColumns);

/// [intrinsic | PE]. Throws ConsistencyError when the graph does not match
/// the score.
FeatureMatrix assemble_features(const Score& score, const ScoreGraph& graph,
                                const LaplacianOptions& options = {});

/// Binary matrix file: "VSFM", u32 version (1), u64 rows, u64 cols, then
/// row-major little-endian float64 values.
void write_matrix_binary(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix read_matrix_binary(const std::filesystem::path& path);
std::string matrix_to_csv(const FeatureMatrix& m);

}  // namespace voicesep
