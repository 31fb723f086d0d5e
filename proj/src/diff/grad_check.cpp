#include "voicesep/diff/grad_check.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace voicesep::diff {
namespace {

double evaluate(const std::function<Var(Tape&)>& loss) {
  Tape tape;
  return static_cast<double>(loss(tape).item());
}

}  // namespace

GradCheckReport grad_check(const std::function<Var(Tape&)>& loss, ParameterSet& params,
                           const GradCheckOptions& options) {
  params.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (auto& param : params) {
    Parameter& p = *param;
    std::vector<Eigen::Index> entries(static_cast<std::size_t>(p.value.size()));
    std::iota(entries.begin(), entries.end(), Eigen::Index{0});
    if (options.max_entries_per_param > 0 && entries.size() > options.max_entries_per_param) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_param);
    }
    for (Eigen::Index k : entries) {
      Scalar& x = p.value.data()[k];
      const Scalar saved = x;
      x = saved + static_cast<Scalar>(options.eps);
      const double up = evaluate(loss);
      x = saved - static_cast<Scalar>(options.eps);
      const double down = evaluate(loss);
      x = saved;

      const double numeric = (up - down) / (2.0 * options.eps);
      const double analytic = static_cast<double>(p.grad.data()[k]);
      const double abs_err = std::abs(analytic - numeric);
      const double rel_err = abs_err / std::max({std::abs(analytic), std::abs(numeric), options.floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel_err > report.max_rel_error) {
        report.max_rel_error = rel_err;
        report.worst_param = p.name;
        report.worst_index = static_cast<std::size_t>(k);
      }
      ++report.entries_checked;
    }
  }
  return report;
}

}  // namespace voicesep::diff
