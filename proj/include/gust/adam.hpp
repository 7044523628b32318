#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gust/autodiff.hpp"
#include "gust/errors.hpp"

namespace gust {

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for a fixed, ordered list of parameters.
class AdamState {
 public:
  explicit AdamState(std::span<Parameter* const> params, AdamOptions options = {})
      : options_(options) {
    first_.reserve(params.size());
    second_.reserve(params.size());
    for (const Parameter* p : params) {
      first_.emplace_back(p->value.rows(), p->value.cols());
      second_.emplace_back(p->value.rows(), p->value.cols());
    }
  }

  const AdamOptions& options() const { return options_; }
  std::int64_t step_count() const { return step_count_; }
  const Matrix& first_moment(std::size_t i) const { return first_.at(i); }
  const Matrix& second_moment(std::size_t i) const { return second_.at(i); }

  friend void adam_step(std::span<Parameter* const> params, AdamState& state);

 private:
  AdamOptions options_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  std::int64_t step_count_ = 0;
};

/// One bias-corrected Adam update. A non-finite gradient anywhere aborts the
/// whole step before any parameter is touched.
inline void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (params.size() != state.first_.size()) {
    throw DimensionError("adam_step: state tracks " + std::to_string(state.first_.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (!p.grad.same_shape(state.first_[i])) {
      throw DimensionError("adam_step: gradient of '" + p.name + "' has shape " +
                           p.grad.shape() + ", state expects " + state.first_[i].shape());
    }
    if (!p.grad.all_finite()) {
      throw NumericError("adam_step: non-finite gradient in parameter '" + p.name + "'");
    }
  }

  const AdamOptions& o = state.options_;
  ++state.step_count_;
  const double t = static_cast<double>(state.step_count_);
  const double bias1 = 1.0 - std::pow(o.beta1, t);
  const double bias2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i]->value.values();
    auto grad = params[i]->grad.values();
    auto m = state.first_[i].values();
    auto v = state.second_[i].values();
    for (std::size_t k = 0; k < value.size(); ++k) {
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * grad[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * grad[k] * grad[k];
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      value[k] -= o.lr * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

}  // namespace gust
