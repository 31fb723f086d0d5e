// Central finite-difference check of reverse-mode gradients.

#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "voicesep/diff/tape.h"

namespace voicesep::diff {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Entries checked per parameter; 0 checks every entry.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
  /// Denominator floor of the relative error. With eps = 1e-5 the central
  /// difference of a loss of magnitude ~50 carries ~1e-9 of rounding noise,
  /// so gradients below this floor cannot be resolved anyway.
  double floor = 1e-5;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

/// `loss` builds the scalar loss on the given tape from `params`; it is
/// called once for the analytic gradient and twice per checked entry.
/// Relative error: |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckReport grad_check(const std::function<Var(Tape&)>& loss, ParameterSet& params,
                           const GradCheckOptions& options = {});

}  // namespace voicesep::diff
