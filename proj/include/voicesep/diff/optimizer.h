#pragma once

#include <cstdint>
#include <vector>

#include "voicesep/diff/tape.h"

namespace voicesep::diff {

struct AdamWConfig {
  double lr = 0.003;
  double weight_decay = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay and bias correction.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  /// Allocates zeroed moments for every parameter of `params`.
  void init(const ParameterSet& params);
  bool initialized() const { return initialized_; }

  /// One update from the gradients currently stored in `params`. Throws
  /// StateError if init() was not called for a parameter set of this shape.
  void step(ParameterSet& params);

  const AdamWConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_; }

  // Raw state, for checkpointing.
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void restore(std::uint64_t step, std::vector<Matrix> m, std::vector<Matrix> v);

 private:
  AdamWConfig config_;
  bool initialized_ = false;
  std::uint64_t step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace voicesep::diff
