#pragma once

#include <cstdint>
#include <span>

#include "pathcv/estimators.hpp"

namespace pathcv {

inline constexpr std::size_t kElboSamples = 500;
inline constexpr std::size_t kVarianceReplicates = 100;
inline constexpr std::size_t kLppdSamples = 1000;

struct ElboEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// (1/n) sum_i r(T(eps_i; lambda); lambda) on the full train split, with
/// the standard error of that mean.
ElboEstimate eval_elbo(const Model& model, const Family& family, std::span<const double> lambda, Rng& rng,
                       std::size_t n = kElboSamples);

struct VarianceRatioReport {
  double var_nocv = 0.0;
  double var_cv = 0.0;
  double ratio = 0.0;
  std::size_t replicates = 0;
  std::int64_t iteration = 0;
};

/// Draws `replicates` independent L-sample gradient estimates ghat_j, forms
/// the paired CV-adjusted estimate of each with `estimator` (its current
/// state, not updated), and reports (1/R) sum_j |g_j - mean|^2 for both.
/// batch_size 0 means the full train split; otherwise each replicate draws
/// its own minibatch, shared by the pair.
VarianceRatioReport variance_ratio(const Model& model, const Family& family, std::span<const double> lambda,
                                   const GradientEstimator& estimator, std::size_t num_samples, Rng& rng,
                                   std::size_t batch_size = 0, std::size_t replicates = kVarianceReplicates,
                                   std::int64_t iteration = 0);

/// (1/R) sum_j |g_j - mean|^2 over rows.
double replicate_variance(const RowMatrix& estimates);

/// log((1/n) sum exp(x_i)), stabilized.
double log_mean_exp(std::span<const double> x);

/// sum over test rows of log((1/|Z|) sum_z p(x | z)), z ~ q_lambda.
double test_lppd(const Model& model, const Family& family, std::span<const double> lambda, Rng& rng,
                 std::size_t n_z = kLppdSamples);
/// Same with the latent samples given as rows.
double test_lppd_from_samples(const Model& model, const RowMatrix& z);

}  // namespace pathcv
