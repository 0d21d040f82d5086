#pragma once

#include <cstdint>

#include "pathcv/types.hpp"

namespace pathcv {

/// Bias-corrected Adam moments. Steps are taken in the ascent direction.
struct AdamState {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Vector m;
  Vector v;
  std::int64_t t = 0;

  explicit AdamState(std::size_t dim, double learning_rate = 0.01);
};

/// lambda += lr * mhat / (sqrt(vhat) + eps). Throws NumericError naming
/// `iteration` if the gradient has a non-finite entry.
void adam_step(AdamState& state, Vector& lambda, const Vector& gradient, std::int64_t iteration);

}  // namespace pathcv
