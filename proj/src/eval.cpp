#include "pathcv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pathcv/errors.hpp"

namespace pathcv {

ElboEstimate eval_elbo(const Model& model, const Family& family, std::span<const double> lambda, Rng& rng,
                       std::size_t n) {
  if (n == 0) throw std::invalid_argument("eval_elbo needs at least one sample");
  EpsBatch eps = sample_base(family.base_dim(), n, rng);
  Minibatch batch = model.full_batch();
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = integrand_r<double>(model, family, lambda, eps.row(i), batch);
    sum += r;
    sum_sq += r * r;
  }
  const double dn = static_cast<double>(n);
  ElboEstimate out;
  out.value = sum / dn;
  if (n > 1) {
    double var = std::max(0.0, (sum_sq - dn * out.value * out.value) / (dn - 1.0));
    out.std_error = std::sqrt(var / dn);
  }
  return out;
}

double replicate_variance(const RowMatrix& estimates) {
  if (estimates.rows() == 0) throw ArityError("replicate_variance: no replicates");
  Eigen::RowVectorXd mean = estimates.colwise().mean();
  return (estimates.rowwise() - mean).squaredNorm() / static_cast<double>(estimates.rows());
}

VarianceRatioReport variance_ratio(const Model& model, const Family& family, std::span<const double> lambda,
                                   const GradientEstimator& estimator, std::size_t num_samples, Rng& rng,
                                   std::size_t batch_size, std::size_t replicates, std::int64_t iteration) {
  if (replicates < 2) throw ArityError("variance_ratio needs at least 2 replicates");
  if (num_samples == 0) throw std::invalid_argument("variance_ratio needs L >= 1");
  const auto d = static_cast<Eigen::Index>(family.param_dim());
  RowMatrix plain(static_cast<Eigen::Index>(replicates), d);
  RowMatrix adjusted(static_cast<Eigen::Index>(replicates), d);
  ad::Tape tape;
  for (std::size_t j = 0; j < replicates; ++j) {
    EpsBatch eps = sample_base(family.base_dim(), num_samples, rng);
    Minibatch batch = batch_size == 0 ? model.full_batch() : sample_minibatch(model.data(), batch_size, rng);
    Rng location_rng(rng());
    Rng expectation_rng(rng());
    GradBatch grads = pathwise_grad_batch(model, family, lambda, eps, batch, tape);
    StepInput in{model, family, lambda, eps, grads, batch, &location_rng, &expectation_rng, iteration};
    auto r = static_cast<Eigen::Index>(j);
    plain.row(r) = grads.colwise().mean();
    adjusted.row(r) = estimator.estimate(in).gradient.transpose();
  }
  VarianceRatioReport out;
  out.var_nocv = replicate_variance(plain);
  out.var_cv = replicate_variance(adjusted);
  out.ratio = out.var_cv / out.var_nocv;
  out.replicates = replicates;
  out.iteration = iteration;
  return out;
}

double log_mean_exp(std::span<const double> x) {
  if (x.empty()) throw ArityError("log_mean_exp of an empty sequence");
  double m = *std::max_element(x.begin(), x.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s / static_cast<double>(x.size()));
}

double test_lppd_from_samples(const Model& model, const RowMatrix& z) {
  const Dataset& data = model.data();
  if (data.test.empty()) throw CapabilityError("test lppd needs a non-empty test split");
  if (z.rows() == 0) throw ArityError("test lppd needs at least one latent sample");
  std::vector<double> terms(static_cast<std::size_t>(z.rows()));
  double total = 0.0;
  for (std::size_t i : data.test) {
    for (Eigen::Index s = 0; s < z.rows(); ++s) {
      terms[static_cast<std::size_t>(s)] = model.log_likelihood(row_span(z, s), i);
    }
    total += log_mean_exp(terms);
  }
  return total;
}

double test_lppd(const Model& model, const Family& family, std::span<const double> lambda, Rng& rng,
                 std::size_t n_z) {
  if (model.data().test.empty()) throw CapabilityError("test lppd needs a non-empty test split");
  if (n_z == 0) throw std::invalid_argument("test lppd needs |Z| >= 1");
  EpsBatch eps = sample_base(family.base_dim(), n_z, rng);
  RowMatrix z(static_cast<Eigen::Index>(n_z), static_cast<Eigen::Index>(family.latent_dim()));
  for (std::size_t s = 0; s < n_z; ++s) {
    std::vector<double> zs = family.transform<double>(lambda, eps.row(s));
    std::copy(zs.begin(), zs.end(), row_span(z, static_cast<Eigen::Index>(s)).begin());
  }
  return test_lppd_from_samples(model, z);
}

}  // namespace pathcv
