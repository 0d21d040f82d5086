#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "pathcv/errors.hpp"
#include "pathcv/estimators.hpp"

using namespace pathcv;

namespace {

struct Setup {
  HierPoisson model = fixtures::frisk(6);
  Family family = Family::mean_field(37);
  Vector lambda = fixtures::params(family, 7);
  EpsBatch eps = sample_base(37, 10, 8);
  Minibatch batch = model.full_batch();
  GradBatch grads = pathwise_grad_batch(model, family, as_span(lambda), eps, batch);

  StepInput input(Rng* loc = nullptr, Rng* expect = nullptr, std::int64_t k = 0) const {
    return StepInput{model, family, as_span(lambda), eps, grads, batch, loc, expect, k};
  }
};

}  // namespace

TEST_CASE("estimator names") {
  CHECK(parse_estimator_kind("nocv") == EstimatorKind::nocv);
  CHECK(parse_estimator_kind("zvcv_gd") == EstimatorKind::zvcv_gd);
  CHECK(parse_estimator_kind("quadcv") == EstimatorKind::quadcv);
  CHECK(to_string(EstimatorKind::zvcv_gd) == "zvcv_gd");
  CHECK_THROWS(parse_estimator_kind("bogus"));
}

TEST_CASE("no-CV estimate is the sample mean") {
  Setup s;
  NoCvEstimator e;
  StepResult r = e.estimate(s.input());
  CHECK(r.gradient == Vector(s.grads.colwise().mean().transpose()));
  CHECK_FALSE(r.has_cv);
}

TEST_CASE("ZVCV with zero inner steps is the no-CV estimate bit for bit") {
  Setup s;
  StepResult a = NoCvEstimator().estimate(s.input());
  StepResult b = ZvcvGdEstimator(1, 1e-3, 0).estimate(s.input());
  CHECK(a.gradient == b.gradient);
  StepResult c = ZvcvGdEstimator(2, 1e-3, 0).estimate(s.input());
  CHECK(a.gradient == c.gradient);
}

TEST_CASE("ZVCV estimate uses the fitted coefficients on the same samples") {
  Setup s;
  ZvcvGdEstimator e;
  StepResult r = e.estimate(s.input(nullptr, nullptr, 12));
  REQUIRE(r.has_cv);
  CHECK(r.beta.provenance == Provenance::same_samples);
  BetaCoefficients expected = solve_beta_gd(s.grads, r.cv, ZvcvGdEstimator::kDefaultLr, ZvcvGdEstimator::kDefaultSteps);
  CHECK(r.beta.beta == expected.beta);
  CHECK(r.gradient == cv_adjusted_estimate(s.grads, r.cv, expected));
}

TEST_CASE("QuadCV coefficient is lagged by one iteration") {
  Setup s;
  QuadCvEstimator e(37, ExpectationMode::closed_form, 0.01);
  CHECK(e.beta().provenance == Provenance::lagged);

  // Iteration 0: the surrogate is zero, so every CV is zero and beta stays 0.
  StepResult r0 = e.estimate(s.input(nullptr, nullptr, 0));
  CHECK(r0.cv.values.isZero());
  CHECK(r0.gradient == Vector(s.grads.colwise().mean().transpose()));
  e.update(s.input(nullptr, nullptr, 0), r0);
  CHECK(e.beta().beta(0, 0) == 0.0);
  CHECK(e.surrogate().b.norm() > 0.0);

  // Iteration 1: the coefficient applied was fitted before this iteration.
  Setup s1;
  s1.eps = sample_base(37, 10, 9);
  s1.grads = pathwise_grad_batch(s1.model, s1.family, as_span(s1.lambda), s1.eps, s1.batch);
  StepResult r1 = e.estimate(s1.input(nullptr, nullptr, 1));
  CHECK(r1.beta.fitted_at < 1);
  CHECK(r1.beta.beta(0, 0) == 0.0);
  e.update(s1.input(nullptr, nullptr, 1), r1);
  CHECK(e.beta().fitted_at == 1);
  CHECK(e.beta().beta(0, 0) == solve_beta_esn(s1.grads, r1.cv).beta(0, 0));

  // Iteration 2 applies the coefficient fitted at iteration 1.
  StepResult r2 = e.estimate(s.input(nullptr, nullptr, 2));
  CHECK(r2.beta.fitted_at == 1);
  CHECK(r2.beta.provenance == Provenance::lagged);
  CHECK(r2.gradient == cv_adjusted_estimate(s.grads, r2.cv, e.beta()));
}

TEST_CASE("QuadCV estimate does not change state") {
  Setup s;
  QuadCvEstimator e(37, ExpectationMode::closed_form, 0.01);
  e.update(s.input(), e.estimate(s.input()));
  QuadParams before = e.surrogate();
  StepResult a = e.estimate(s.input());
  StepResult b = e.estimate(s.input());
  CHECK(a.gradient == b.gradient);
  CHECK(e.surrogate().b == before.b);
}

TEST_CASE("QuadCV closed form centers the surrogate at the mean") {
  Setup s;
  QuadCvEstimator e(37, ExpectationMode::closed_form, 0.01);
  StepResult r = e.estimate(s.input());
  CHECK(r.location == Vector(s.lambda.head(37)));
}

TEST_CASE("QuadCV empirical mode needs its RNGs and is reproducible") {
  Setup s;
  QuadCvEstimator e(37, ExpectationMode::empirical, 0.01);
  CHECK_THROWS(e.estimate(s.input()));
  Rng a1(1), a2(2), b1(1), b2(2);
  StepResult x = e.estimate(s.input(&a1, &a2));
  StepResult y = e.estimate(s.input(&b1, &b2));
  CHECK(x.gradient == y.gradient);
  CHECK(x.location == y.location);
}

TEST_CASE("closed-form QuadCV is unavailable for real NVP") {
  HierPoisson model = fixtures::frisk(1);
  Family f = Family::real_nvp(37);
  Vector lambda = fixtures::params(f, 1);
  EpsBatch eps = sample_base(37, 2, 1);
  Minibatch batch = model.full_batch();
  GradBatch g = pathwise_grad_batch(model, f, as_span(lambda), eps, batch);
  QuadCvEstimator e(37, ExpectationMode::closed_form, 0.01);
  CHECK_THROWS_AS(e.estimate(StepInput{model, f, as_span(lambda), eps, g, batch}), CapabilityError);
}

TEST_CASE("clones carry state") {
  Setup s;
  QuadCvEstimator e(37, ExpectationMode::closed_form, 0.01);
  e.set_beta(0.75, 3);
  std::unique_ptr<GradientEstimator> c = e.clone();
  auto* q = dynamic_cast<QuadCvEstimator*>(c.get());
  REQUIRE(q != nullptr);
  CHECK(q->beta().beta(0, 0) == 0.75);
  CHECK(q->beta().fitted_at == 3);
}
