#include "voicesep/diff/optimizer.h"

#include <cmath>

#include "voicesep/errors.h"

namespace voicesep::diff {

void AdamW::init(const ParameterSet& params) {
  m_.clear();
  v_.clear();
  for (const auto& p : params) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  step_ = 0;
  initialized_ = true;
}

void AdamW::restore(std::uint64_t step, std::vector<Matrix> m, std::vector<Matrix> v) {
  if (m.size() != v.size()) throw StateError("moment vectors differ in length");
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
  initialized_ = true;
}

void AdamW::step(ParameterSet& params) {
  if (!initialized_) throw StateError("AdamW::step before init()");
  if (m_.size() != params.size()) throw StateError("optimizer state does not match the parameter set");
  ++step_;
  const double t = static_cast<double>(step_);
  const double bias1 = 1.0 - std::pow(config_.beta1, t);
  const double bias2 = 1.0 - std::pow(config_.beta2, t);
  const auto b1 = static_cast<Scalar>(config_.beta1);
  const auto b2 = static_cast<Scalar>(config_.beta2);
  const auto decay = static_cast<Scalar>(1.0 - config_.lr * config_.weight_decay);
  const auto step_size = static_cast<Scalar>(config_.lr / bias1);
  const auto root_bias2 = static_cast<Scalar>(std::sqrt(bias2));
  const auto eps = static_cast<Scalar>(config_.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    Matrix& m = m_[i];
    Matrix& v = v_[i];
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols() || p.grad.size() != p.value.size()) {
      throw StateError("optimizer state shape mismatch for '" + p.name + "'");
    }
    m = b1 * m + (Scalar(1) - b1) * p.grad;
    v = b2 * v + (Scalar(1) - b2) * p.grad.cwiseProduct(p.grad);
    p.value *= decay;
    p.value.array() -= step_size * m.array() / (v.array().sqrt() / root_bias2 + eps);
  }
}

}  // namespace voicesep::diff
