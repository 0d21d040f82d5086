#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "pathcv/errors.hpp"
#include "pathcv/eval.hpp"

using namespace pathcv;

namespace {

/// Order-1 ZVCV with coefficients supplied by the caller.
class FixedZvcv final : public GradientEstimator {
 public:
  explicit FixedZvcv(Matrix beta) : beta_(BetaCoefficients::zero(CvKind::zvcv, 0, 0)) { beta_.beta = std::move(beta); }
  EstimatorKind kind() const noexcept override { return EstimatorKind::zvcv_gd; }
  StepResult estimate(const StepInput& in) const override {
    StepResult r;
    r.cv = zvcv_cv_matrix(in.eps, 1);
    r.beta = beta_;
    r.has_cv = true;
    r.gradient = cv_adjusted_estimate(in.grads, r.cv, beta_);
    return r;
  }
  std::unique_ptr<GradientEstimator> clone() const override { return std::make_unique<FixedZvcv>(*this); }

 private:
  BetaCoefficients beta_;
};

ConjugateGaussian single_observation() {
  RowMatrix x(1, 1);
  x << 0.0;
  return ConjugateGaussian(fixtures::rows_to_dataset(x, Vector::Zero(1)));
}

}  // namespace

TEST_CASE("ELBO at the exact posterior is the log evidence") {
  ConjugateGaussian m = single_observation();
  Family f = Family::mean_field(1);
  std::vector<double> lambda{0.0, 0.5 * std::log(0.5)};
  Rng rng(1);
  ElboEstimate e = eval_elbo(m, f, lambda, rng);
  double evidence = -0.5 * std::log(4.0 * std::numbers::pi);
  CHECK(std::abs(e.value - evidence) <= std::max(3.0 * e.std_error, 1e-12));
  CHECK(m.log_evidence() == doctest::Approx(evidence).epsilon(1e-15));
}

TEST_CASE("ELBO is zero when q is the prior and there is no data") {
  ConjugateGaussian m(fixtures::rows_to_dataset(RowMatrix(0, 2), Vector(0)));
  Family f = Family::mean_field(2);
  Rng rng(2);
  ElboEstimate e = eval_elbo(m, f, std::vector<double>(4, 0.0), rng);
  CHECK(std::abs(e.value) <= 1e-12);
}

TEST_CASE("ELBO lower-bounds the evidence") {
  ConjugateGaussian m = ConjugateGaussian::synthetic(3, 10, 4);
  Family f = Family::mean_field(3);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Vector lambda = fixtures::params(f, seed, 0.3);
    Rng rng(seed);
    ElboEstimate e = eval_elbo(m, f, as_span(lambda), rng);
    CHECK(e.value <= m.log_evidence() + 3.0 * e.std_error);
  }
}

TEST_CASE("ELBO standard error matches the known integrand variance") {
  // No data, q = N(0, s^2): r(eps) = (1 - s^2) eps^2 / 2 + log s, so
  // Var r = (1 - s^2)^2 / 2 and the sample variance has relative SD sqrt(14 / n).
  ConjugateGaussian m(fixtures::rows_to_dataset(RowMatrix(0, 1), Vector(0)));
  Family f = Family::mean_field(1);
  const double s = 0.5;
  std::vector<double> lambda{0.0, std::log(s)};
  const double var = 0.5 * (1 - s * s) * (1 - s * s);
  for (std::uint64_t seed : {5u, 6u, 7u}) {
    Rng rng(seed);
    ElboEstimate e = eval_elbo(m, f, lambda, rng, 500);
    double ratio = e.std_error * e.std_error * 500.0 / var;
    CHECK(std::abs(ratio - 1.0) <= 3.0 * std::sqrt(14.0 / 500.0));
    CHECK(std::abs(e.value - (0.5 * (1 - s * s) + std::log(s))) <= 3.0 * std::sqrt(var / 500.0));
  }
}

TEST_CASE("variance ratio is exactly one without control variates") {
  HierPoisson m = fixtures::frisk(3);
  Family f = Family::mean_field(37);
  Vector lambda = fixtures::params(f, 2);
  Rng rng(3);
  VarianceRatioReport r = variance_ratio(m, f, as_span(lambda), ZvcvGdEstimator(1, 1e-3, 0), 10, rng, 0, 20);
  CHECK(r.ratio == 1.0);
  CHECK(r.replicates == 20);
  Rng rng2(3);
  QuadCvEstimator zero_surrogate(37, ExpectationMode::closed_form, 0.01);
  CHECK(variance_ratio(m, f, as_span(lambda), zero_surrogate, 10, rng2, 0, 20).ratio == 1.0);
  CHECK_THROWS_AS(variance_ratio(m, f, as_span(lambda), NoCvEstimator(), 10, rng, 0, 1), ArityError);
}

TEST_CASE("variance ratio with minibatches") {
  LogisticRegression m = fixtures::logistic(60, 5, 2);
  Family f = Family::mean_field(6);
  Vector lambda = fixtures::params(f, 2);
  Rng rng(4);
  VarianceRatioReport r = variance_ratio(m, f, as_span(lambda), ZvcvGdEstimator(), 10, rng, 10, 30);
  CHECK(r.var_nocv > 0.0);
  CHECK(std::isfinite(r.ratio));
}

TEST_CASE("exact quadratic surrogate removes all variance") {
  const std::size_t d = 3;
  Vector b(3), m(3);
  b << 0.4, -1.0, 0.3;
  m << 0.2, 0.0, -0.3;
  Matrix a(3, 3);
  a << -2.0, 0.4, 0.1, 0.4, -1.0, 0.2, 0.1, 0.2, -1.5;
  QuadraticTarget target(b, a, m);
  Family f = Family::mean_field(d);
  Vector lambda(6);
  lambda << 0.5, -0.2, 0.1, -0.4, 0.2, 0.0;
  // The estimator centers the surrogate at mu; shift b accordingly.
  QuadParams v = QuadParams::zeros(d, HessianMode::full);
  v.hess_full = a;
  v.b = b + a * (lambda.head(3) - m);
  QuadCvEstimator e(d, ExpectationMode::closed_form, 0.0, HessianMode::full);
  e.set_surrogate(v);
  e.set_beta(1.0, -1);
  Rng rng(5);
  VarianceRatioReport r = variance_ratio(target, f, as_span(lambda), e, 10, rng);
  CHECK(r.var_nocv > 1e-3);
  CHECK(r.ratio <= 1e-10);
}

TEST_CASE("affine integrand with the oracle order-1 coefficients removes all variance") {
  const std::size_t d = 4;
  Vector b(4);
  b << 1.0, -2.0, 0.5, 3.0;
  QuadraticTarget linear(b, Matrix::Zero(4, 4), Vector::Zero(4));
  Family f = Family::mean_field(d);
  Vector lambda(8);
  lambda << 0.1, 0.2, -0.3, 0.0, -0.5, 0.3, 0.0, 0.2;
  // I_logsigma_j = b_j sigma_j eps_j + 1; the feature is -eps_j.
  Matrix beta = Matrix::Zero(8, 4);
  for (Eigen::Index j = 0; j < 4; ++j) beta(4 + j, j) = b[j] * std::exp(lambda[4 + j]);
  Rng rng(6);
  VarianceRatioReport r = variance_ratio(linear, f, as_span(lambda), FixedZvcv(beta), 10, rng);
  CHECK(r.var_nocv > 1e-2);
  CHECK(r.ratio <= 1e-10);
}

TEST_CASE("replicate variance") {
  RowMatrix g(2, 1);
  g << 1.0, 3.0;
  CHECK(replicate_variance(g) == 1.0);
  RowMatrix same = RowMatrix::Constant(5, 3, 2.0);
  CHECK(replicate_variance(same) == 0.0);
}

TEST_CASE("log-mean-exp") {
  std::vector<double> x{-1.0, 0.5, 2.0};
  double direct = std::log((std::exp(-1.0) + std::exp(0.5) + std::exp(2.0)) / 3.0);
  CHECK(log_mean_exp(x) == doctest::Approx(direct).epsilon(1e-15));
  std::vector<double> shifted{999.0, 1000.5, 1002.0};
  CHECK(log_mean_exp(shifted) == doctest::Approx(direct + 1000.0).epsilon(1e-15));
  std::vector<double> tiny{-2000.0, -2001.0};
  CHECK(std::isfinite(log_mean_exp(tiny)));
  CHECK_THROWS(log_mean_exp(std::vector<double>{}));
}

TEST_CASE("lppd with a single latent sample at the target") {
  Dataset d = load_redwine_csv(synthetic_redwine_csv(2, 1));
  d.train = {0};
  d.test = {1};
  BayesianNN m(d);
  RowMatrix z = RowMatrix::Zero(1, 653);
  z(0, 652) = d.targets[1];  // output bias; all weights zero
  CHECK(test_lppd_from_samples(m, z) == doctest::Approx(-0.5 * fixtures::kLog2Pi).epsilon(1e-15));
  RowMatrix dup(4, 653);
  dup.rowwise() = z.row(0);
  CHECK(test_lppd_from_samples(m, dup) == doctest::Approx(test_lppd_from_samples(m, z)).epsilon(1e-15));
}

TEST_CASE("lppd at the exact posterior matches the posterior predictive") {
  ConjugateGaussian full = ConjugateGaussian::synthetic(2, 30, 8);
  Dataset d = full.data();
  split_dataset(d, 20, 10, 4);
  ConjugateGaussian m(d);
  Family f = Family::mean_field(2);
  Vector lambda(4);
  lambda.head(2) = m.posterior_mean();
  lambda.tail(2).setConstant(0.5 * std::log(m.posterior_variance()));

  Rng rng(9);
  Rng copy = rng;
  double value = test_lppd(m, f, as_span(lambda), rng, 1000);

  EpsBatch eps = sample_base(2, 1000, copy);
  RowMatrix z(1000, 2);
  for (Eigen::Index s = 0; s < 1000; ++s) z.row(s) = lambda.head(2).transpose() +
      (lambda.tail(2).array().exp() * eps.eps.row(s).transpose().array()).matrix().transpose();
  CHECK(test_lppd_from_samples(m, z) == doctest::Approx(value).epsilon(1e-13));

  double exact = 0.0, var = 0.0;
  for (std::size_t i : m.data().test) {
    exact += m.log_predictive(m.data().row(i));
    Vector w(1000);
    for (Eigen::Index s = 0; s < 1000; ++s) w[s] = std::exp(m.log_likelihood(row_span(z, s), i));
    double mean = w.mean();
    double sd = std::sqrt((w.array() - mean).square().sum() / 999.0);
    var += std::pow(sd / (mean * std::sqrt(1000.0)), 2);
  }
  CHECK(std::abs(value - exact) <= 3.0 * std::sqrt(var));
}

TEST_CASE("lppd needs a test split") {
  HierPoisson m = fixtures::frisk(1);
  Family f = Family::mean_field(37);
  Rng rng(1);
  CHECK_THROWS_AS(test_lppd(m, f, std::vector<double>(74, 0.0), rng), CapabilityError);
  CHECK_THROWS_AS(test_lppd_from_samples(m, RowMatrix::Zero(1, 37)), CapabilityError);
}
