#include "voicesep/features.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include "voicesep/errors.h"
#include "voicesep/score_io.h"

namespace voicesep {
namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;

// Undirected simple adjacency as sorted neighbour lists.
std::vector<std::vector<NodeIndex>> undirected_neighbours(const ScoreGraph& graph) {
  std::vector<std::set<NodeIndex>> sets(graph.num_nodes);
  for (const auto& e : graph.edges) {
    if (e.src == e.dst) continue;
    sets[e.src].insert(e.dst);
    sets[e.dst].insert(e.src);
  }
  std::vector<std::vector<NodeIndex>> out(graph.num_nodes);
  for (std::size_t i = 0; i < sets.size(); ++i) out[i].assign(sets[i].begin(), sets[i].end());
  return out;
}

SparseMatrix sparse_laplacian(const std::vector<std::vector<NodeIndex>>& adj) {
  const auto n = static_cast<Eigen::Index>(adj.size());
  std::vector<Eigen::Triplet<double>> entries;
  for (std::size_t i = 0; i < adj.size(); ++i) {
    if (adj[i].empty()) continue;
    entries.emplace_back(i, i, 1.0);
    const double di = static_cast<double>(adj[i].size());
    for (NodeIndex j : adj[i]) {
      const double dj = static_cast<double>(adj[j].size());
      entries.emplace_back(i, j, -1.0 / std::sqrt(di * dj));
    }
  }
  SparseMatrix L(n, n);
  L.setFromTriplets(entries.begin(), entries.end());
  return L;
}

// Orthonormal basis of the Laplacian nullspace: sqrt-degree vectors of
// each connected component with edges, unit vectors for isolated nodes.
Eigen::MatrixXd nullspace_basis(const std::vector<std::vector<NodeIndex>>& adj) {
  const std::size_t n = adj.size();
  std::vector<int> component(n, -1);
  int count = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (component[s] >= 0) continue;
    std::vector<NodeIndex> stack{s};
    component[s] = count;
    while (!stack.empty()) {
      NodeIndex u = stack.back();
      stack.pop_back();
      for (NodeIndex v : adj[u]) {
        if (component[v] < 0) {
          component[v] = count;
          stack.push_back(v);
        }
      }
    }
    ++count;
  }
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), count);
  for (std::size_t i = 0; i < n; ++i) {
    basis(static_cast<Eigen::Index>(i), component[i]) =
        adj[i].empty() ? 1.0 : std::sqrt(static_cast<double>(adj[i].size()));
  }
  for (int c = 0; c < count; ++c) basis.col(c).normalize();
  return basis;
}

void orthogonalize(Eigen::VectorXd& v, const Eigen::MatrixXd& basis, Eigen::Index cols) {
  // Two passes of classical Gram-Schmidt.
  for (int pass = 0; pass < 2; ++pass) {
    if (cols == 0) return;
    auto block = basis.leftCols(cols);
    v -= block * (block.transpose() * v);
  }
}

// Lanczos with full reorthogonalization on 2I - L restricted to the
// complement of the nullspace; its largest eigenvalues are the smallest
// non-null eigenvalues of L.
LaplacianSpectrum lanczos_spectrum(const SparseMatrix& L, const Eigen::MatrixXd& nullspace,
                                   const LaplacianOptions& options) {
  const Eigen::Index n = L.rows();
  const Eigen::Index available = n - nullspace.cols();
  const Eigen::Index want = std::min<Eigen::Index>(static_cast<Eigen::Index>(options.k), available);
  LaplacianSpectrum out;
  if (want <= 0) {
    out.eigenvalues.resize(0);
    out.eigenvectors = FeatureMatrix::Zero(n, 0);
    return out;
  }

  const Eigen::Index max_steps = available;
  const Eigen::Index basis_cols = nullspace.cols() + max_steps;
  Eigen::MatrixXd Q(n, std::min<Eigen::Index>(basis_cols, nullspace.cols() + 64));
  Q.leftCols(nullspace.cols()) = nullspace;
  const Eigen::Index offset = nullspace.cols();

  std::mt19937_64 rng(0x5eed);
  auto random_start = [&]() {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
    return v;
  };

  std::vector<double> alpha;
  std::vector<double> beta;  // beta[j] couples step j and j+1
  Eigen::VectorXd q = random_start();
  orthogonalize(q, Q, offset);
  q.normalize();

  Eigen::Index steps = 0;
  while (steps < max_steps) {
    if (offset + steps >= Q.cols()) {
      Eigen::MatrixXd grown(n, std::min<Eigen::Index>(basis_cols, 2 * Q.cols()));
      grown.leftCols(offset + steps) = Q.leftCols(offset + steps);
      Q.swap(grown);
    }
    Q.col(offset + steps) = q;
    ++steps;

    Eigen::VectorXd w = 2.0 * q - L * q;
    const double a = q.dot(w);
    alpha.push_back(a);
    orthogonalize(w, Q, offset + steps);
    double b = w.norm();

    const bool check = steps >= want && (steps % 10 == 0 || steps == max_steps || b < 1e-10);
    if (check) {
      Eigen::MatrixXd T = Eigen::MatrixXd::Zero(steps, steps);
      for (Eigen::Index i = 0; i < steps; ++i) {
        T(i, i) = alpha[static_cast<std::size_t>(i)];
        if (i + 1 < steps) T(i, i + 1) = T(i + 1, i) = beta[static_cast<std::size_t>(i)];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri(T);
      bool converged = true;
      for (Eigen::Index i = 0; i < want; ++i) {
        const double estimate = std::abs(b * tri.eigenvectors()(steps - 1, steps - 1 - i));
        if (estimate > 0.1 * options.residual_tolerance) converged = false;
      }
      if (converged || steps == max_steps) {
        const auto basis = Q.middleCols(offset, steps);
        out.eigenvalues.resize(want);
        out.eigenvectors.resize(n, want);
        for (Eigen::Index i = 0; i < want; ++i) {
          Eigen::VectorXd x = basis * tri.eigenvectors().col(steps - 1 - i);
          x.normalize();
          out.eigenvalues(i) = 2.0 - tri.eigenvalues()(steps - 1 - i);
          out.eigenvectors.col(i) = x;
        }
        return out;
      }
    }

    if (b < 1e-10) {
      // Invariant subspace exhausted; continue from a fresh direction.
      w = random_start();
      orthogonalize(w, Q, offset + steps);
      b = 0.0;
      q = w.normalized();
    } else {
      q = w / b;
    }
    beta.push_back(b);
  }
  return out;
}

}  // namespace

double duration_feature(Tick note_duration, Tick measure_duration) {
  return 1.0 - std::tanh(static_cast<double>(note_duration) / static_cast<double>(measure_duration));
}

int octave_index(int pitch) { return std::clamp(pitch / 12 - 1, 0, 7); }

FeatureMatrix intrinsic_features(const Score& score) {
  FeatureMatrix x = FeatureMatrix::Zero(static_cast<Eigen::Index>(score.notes.size()), kIntrinsicColumns);
  for (std::size_t i = 0; i < score.notes.size(); ++i) {
    const auto& note = score.notes[i];
    const auto row = static_cast<Eigen::Index>(i);
    x(row, note.pitch % 12) = 1.0;
    x(row, kPitchClassColumns + octave_index(note.pitch)) = 1.0;
    x(row, kDurationColumn) = duration_feature(note.duration, score.measure_of(note).duration);
  }
  return x;
}

Eigen::MatrixXd normalized_laplacian(const ScoreGraph& graph) {
  return Eigen::MatrixXd(sparse_laplacian(undirected_neighbours(graph)));
}

LaplacianSpectrum laplacian_spectrum(const ScoreGraph& graph, const LaplacianOptions& options) {
  const auto adj = undirected_neighbours(graph);
  const SparseMatrix L = sparse_laplacian(adj);
  const auto n = static_cast<Eigen::Index>(graph.num_nodes);

  LaplacianSpectrum spectrum;
  if (graph.num_nodes <= options.dense_limit) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver{Eigen::MatrixXd(L)};
    if (solver.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n && keep.size() < options.k; ++i) {
      if (solver.eigenvalues()(i) >= options.nullspace_tolerance) keep.push_back(i);
    }
    spectrum.eigenvalues.resize(static_cast<Eigen::Index>(keep.size()));
    spectrum.eigenvectors.resize(n, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
      spectrum.eigenvalues(static_cast<Eigen::Index>(c)) = solver.eigenvalues()(keep[c]);
      spectrum.eigenvectors.col(static_cast<Eigen::Index>(c)) = solver.eigenvectors().col(keep[c]);
    }
  } else {
    spectrum = lanczos_spectrum(L, nullspace_basis(adj), options);
  }

  for (Eigen::Index c = 0; c < spectrum.eigenvalues.size(); ++c) {
    const Eigen::VectorXd x = spectrum.eigenvectors.col(c);
    const double residual = (L * x - spectrum.eigenvalues(c) * x).norm();
    if (!(residual <= options.residual_tolerance)) {
      throw NumericalError("eigenpair " + std::to_string(c) + " residual " + std::to_string(residual) +
                           " exceeds tolerance");
    }
  }
  return spectrum;
}

FeatureMatrix laplacian_pe(const ScoreGraph& graph, const LaplacianOptions& options) {
  const auto spectrum = laplacian_spectrum(graph, options);
  FeatureMatrix pe = FeatureMatrix::Zero(static_cast<Eigen::Index>(graph.num_nodes),
                                         static_cast<Eigen::Index>(options.k));
  for (Eigen::Index c = 0; c < spectrum.eigenvectors.cols(); ++c) {
    Eigen::VectorXd x = spectrum.eigenvectors.col(c);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (std::abs(x(i)) > 1e-9) {
        if (x(i) < 0) x = -x;
        break;
      }
    }
    pe.col(c) = x;
  }
  return pe;
}

void randomize_pe_signs(FeatureMatrix& features, std::uint64_t seed, std::size_t pe_offset) {
  std::mt19937_64 rng(seed);
  for (auto c = static_cast<Eigen::Index>(pe_offset); c < features.cols(); ++c) {
    if (rng() & 1u) features.col(c) = -features.col(c);
  }
}

FeatureMatrix assemble_features(const Score& score, const ScoreGraph& graph, const LaplacianOptions& options) {
  if (graph.num_nodes != score.notes.size()) {
    throw ConsistencyError("graph has " + std::to_string(graph.num_nodes) + " nodes but score has " +
                           std::to_string(score.notes.size()) + " notes");
  }
  for (const auto& e : graph.edges) {
    if (e.src >= graph.num_nodes || e.dst >= graph.num_nodes) {
      throw ConsistencyError("graph edge references an unknown node");
    }
  }
  const FeatureMatrix intrinsic = intrinsic_features(score);
  const FeatureMatrix pe = laplacian_pe(graph, options);
  FeatureMatrix x(intrinsic.rows(), intrinsic.cols() + pe.cols());
  x << intrinsic, pe;
  return x;
}

void write_matrix_binary(const std::filesystem::path& path, const FeatureMatrix& m) {
  static_assert(std::endian::native == std::endian::little, "matrix files are little-endian");
  std::string buffer = "VSFM";
  auto append = [&buffer](const auto& value) {
    const char* bytes = reinterpret_cast<const char*>(&value);
    buffer.append(bytes, sizeof(value));
  };
  append(std::uint32_t{1});
  append(static_cast<std::uint64_t>(m.rows()));
  append(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) append(m(i, j));
  }
  write_file_atomic(path, buffer);
}

FeatureMatrix read_matrix_binary(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  constexpr std::size_t kHeader = 4 + 4 + 8 + 8;
  if (data.size() < kHeader || data.compare(0, 4, "VSFM") != 0) {
    throw ParseError("'" + path.string() + "' is not a matrix file");
  }
  std::uint32_t version = 0;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::memcpy(&version, data.data() + 4, 4);
  std::memcpy(&rows, data.data() + 8, 8);
  std::memcpy(&cols, data.data() + 16, 8);
  if (version != 1) throw ParseError("unsupported matrix file version " + std::to_string(version));
  if (data.size() != kHeader + rows * cols * sizeof(double)) throw ParseError("matrix file size mismatch");
  FeatureMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::memcpy(m.data(), data.data() + kHeader, rows * cols * sizeof(double));
  return m;
}

std::string matrix_to_csv(const FeatureMatrix& m) {
  std::ostringstream out;
  out.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace voicesep
