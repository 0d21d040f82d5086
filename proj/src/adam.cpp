#include "pathcv/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pathcv/errors.hpp"

namespace pathcv {

AdamState::AdamState(std::size_t dim, double learning_rate)
    : lr(learning_rate),
      m(Vector::Zero(static_cast<Eigen::Index>(dim))),
      v(Vector::Zero(static_cast<Eigen::Index>(dim))) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("Adam learning rate must be positive");
}

void adam_step(AdamState& state, Vector& lambda, const Vector& gradient, std::int64_t iteration) {
  if (gradient.size() != lambda.size() || state.m.size() != lambda.size()) {
    throw ArityError("adam_step: shape mismatch");
  }
  if (!gradient.allFinite()) {
    throw NumericError("non-finite gradient at iteration " + std::to_string(iteration));
  }
  state.t += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * gradient;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  lambda.array() += state.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

}  // namespace pathcv
