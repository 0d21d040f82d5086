#include "pathcv/estimators.hpp"

#include <stdexcept>
#include <string>

#include "pathcv/errors.hpp"

namespace pathcv {

std::string_view to_string(EstimatorKind kind) noexcept {
  switch (kind) {
    case EstimatorKind::nocv: return "nocv";
    case EstimatorKind::zvcv_gd: return "zvcv_gd";
    case EstimatorKind::quadcv: return "quadcv";
  }
  return "unknown";
}

EstimatorKind parse_estimator_kind(std::string_view name) {
  if (name == "nocv") return EstimatorKind::nocv;
  if (name == "zvcv_gd" || name == "zvcv") return EstimatorKind::zvcv_gd;
  if (name == "quadcv" || name == "quad") return EstimatorKind::quadcv;
  throw std::invalid_argument("unknown estimator '" + std::string(name) + "'");
}

void GradientEstimator::update(const StepInput&, const StepResult&) {}

StepResult NoCvEstimator::estimate(const StepInput& in) const {
  StepResult out;
  out.gradient = in.grads.colwise().mean().transpose();
  return out;
}

std::unique_ptr<GradientEstimator> NoCvEstimator::clone() const {
  return std::make_unique<NoCvEstimator>(*this);
}

ZvcvGdEstimator::ZvcvGdEstimator(int order, double lr, std::size_t steps)
    : order_(order), lr_(lr), steps_(steps) {
  if (order != 1 && order != 2) throw std::invalid_argument("zvcv order must be 1 or 2");
  if (!(lr > 0.0)) throw std::invalid_argument("zvcv inner lr must be positive");
}

StepResult ZvcvGdEstimator::estimate(const StepInput& in) const {
  StepResult out;
  out.cv = zvcv_cv_matrix(in.eps, order_);
  out.beta = solve_beta_gd(in.grads, out.cv, lr_, steps_);
  out.beta.fitted_at = in.iteration;
  out.has_cv = true;
  out.gradient = cv_adjusted_estimate(in.grads, out.cv, out.beta);
  return out;
}

std::unique_ptr<GradientEstimator> ZvcvGdEstimator::clone() const {
  return std::make_unique<ZvcvGdEstimator>(*this);
}

QuadCvEstimator::QuadCvEstimator(std::size_t latent_dim, ExpectationMode mode, double gamma_v,
                                 HessianMode hessian, std::size_t n_aux)
    : v_(QuadParams::zeros(latent_dim, hessian)),
      beta_(BetaCoefficients::zero(CvKind::quad, 0, 1)),
      mode_(mode),
      gamma_v_(gamma_v),
      n_aux_(n_aux) {
  if (!(gamma_v >= 0.0)) throw std::invalid_argument("gamma_v must be >= 0");
  if (n_aux == 0) throw std::invalid_argument("QuadCV auxiliary sample count must be >= 1");
  beta_.provenance = Provenance::lagged;
}

void QuadCvEstimator::set_beta(double beta, std::int64_t fitted_at) {
  beta_.beta(0, 0) = beta;
  beta_.fitted_at = fitted_at;
}

StepResult QuadCvEstimator::estimate(const StepInput& in) const {
  if (in.family.latent_dim() != v_.dim()) throw ArityError("QuadCV surrogate dimension mismatch");
  QuadParams v = v_;
  if (mode_ == ExpectationMode::closed_form) {
    if (!in.family.has_closed_form_moments()) {
      throw CapabilityError("closed-form QuadCV expectation needs a Gaussian family");
    }
    // E T(eps; lambda) = mu for both Gaussian families.
    const Slice& mu = in.family.slice("mu");
    v.z0 = as_vector(in.lambda.subspan(mu.offset, mu.size));
  } else {
    if (in.location_rng == nullptr || in.expectation_rng == nullptr) {
      throw std::invalid_argument("empirical QuadCV needs location and expectation RNGs");
    }
    v.z0 = estimate_location(in.family, in.lambda, *in.location_rng, n_aux_);
  }
  Vector expectation = mode_ == ExpectationMode::closed_form
                           ? quad_expected_grad_closed_form(v, in.family, in.lambda)
                           : quad_expected_grad_empirical(v, in.family, in.lambda, *in.expectation_rng, n_aux_);
  ad::Tape tape;
  StepResult out;
  out.cv = quad_cv_batch(v, in.family, in.lambda, in.eps, expectation, tape);
  out.beta = beta_;
  out.has_cv = true;
  out.location = v.z0;
  out.gradient = cv_adjusted_estimate(in.grads, out.cv, out.beta);
  return out;
}

void QuadCvEstimator::update(const StepInput& in, const StepResult& step) {
  // beta for the next iteration from this iteration's (c, I); left unchanged
  // while the CVs are identically zero (e.g. a zero surrogate at the start).
  if (step.cv.values.squaredNorm() > 0.0) {
    BetaCoefficients fitted = solve_beta_esn(in.grads, step.cv);
    beta_.beta = fitted.beta;
    beta_.fitted_at = in.iteration;
  }
  QuadParams v = v_;
  v.z0 = step.location;
  ad::Tape tape;
  v_ = quad_update_v(v, in.model, in.family, in.lambda, in.eps, in.batch, gamma_v_, tape);
}

std::unique_ptr<GradientEstimator> QuadCvEstimator::clone() const {
  return std::make_unique<QuadCvEstimator>(*this);
}

}  // namespace pathcv
