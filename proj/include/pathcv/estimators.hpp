#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>

#include "pathcv/cv.hpp"

namespace pathcv {

enum class EstimatorKind { nocv, zvcv_gd, quadcv };

std::string_view to_string(EstimatorKind kind) noexcept;
EstimatorKind parse_estimator_kind(std::string_view name);

/// Everything an estimator sees at one outer iteration. `grads` are the
/// pathwise gradients at `eps`; the two RNGs feed QuadCV's auxiliary batches.
struct StepInput {
  const Model& model;
  const Family& family;
  std::span<const double> lambda;
  const EpsBatch& eps;
  const GradBatch& grads;
  const Minibatch& batch;
  Rng* location_rng = nullptr;
  Rng* expectation_rng = nullptr;
  std::int64_t iteration = 0;
};

struct StepResult {
  Vector gradient;
  CvMatrix cv;
  BetaCoefficients beta;
  bool has_cv = false;
  Vector location;  // QuadCV z0 used for this step
};

class GradientEstimator {
 public:
  virtual ~GradientEstimator() = default;
  virtual EstimatorKind kind() const noexcept = 0;
  /// The CV-adjusted gradient. Does not change estimator state.
  virtual StepResult estimate(const StepInput& in) const = 0;
  /// State update after the ascent step, from the same inputs.
  virtual void update(const StepInput& in, const StepResult& step);
  virtual std::unique_ptr<GradientEstimator> clone() const = 0;
};

/// Plain Monte Carlo mean of the pathwise gradients.
class NoCvEstimator final : public GradientEstimator {
 public:
  EstimatorKind kind() const noexcept override { return EstimatorKind::nocv; }
  StepResult estimate(const StepInput& in) const override;
  std::unique_ptr<GradientEstimator> clone() const override;
};

/// ZVCV features with per-dimension beta fitted by a few GD steps on the
/// same samples.
class ZvcvGdEstimator final : public GradientEstimator {
 public:
  static constexpr double kDefaultLr = 1e-3;
  static constexpr std::size_t kDefaultSteps = 4;

  explicit ZvcvGdEstimator(int order = 1, double lr = kDefaultLr, std::size_t steps = kDefaultSteps);

  EstimatorKind kind() const noexcept override { return EstimatorKind::zvcv_gd; }
  StepResult estimate(const StepInput& in) const override;
  std::unique_ptr<GradientEstimator> clone() const override;

  int order() const noexcept { return order_; }

 private:
  int order_;
  double lr_;
  std::size_t steps_;
};

/// Quadratic-surrogate CV with a lagged scalar beta and a surrogate refitted
/// by one GD step per iteration.
class QuadCvEstimator final : public GradientEstimator {
 public:
  QuadCvEstimator(std::size_t latent_dim, ExpectationMode mode, double gamma_v,
                  HessianMode hessian = HessianMode::diagonal, std::size_t n_aux = kQuadAuxSamples);

  EstimatorKind kind() const noexcept override { return EstimatorKind::quadcv; }
  StepResult estimate(const StepInput& in) const override;
  void update(const StepInput& in, const StepResult& step) override;
  std::unique_ptr<GradientEstimator> clone() const override;

  const QuadParams& surrogate() const noexcept { return v_; }
  void set_surrogate(QuadParams v) { v_ = std::move(v); }
  const BetaCoefficients& beta() const noexcept { return beta_; }
  void set_beta(double beta, std::int64_t fitted_at);
  ExpectationMode mode() const noexcept { return mode_; }

 private:
  QuadParams v_;
  BetaCoefficients beta_;
  ExpectationMode mode_;
  double gamma_v_;
  std::size_t n_aux_;
};

}  // namespace pathcv
