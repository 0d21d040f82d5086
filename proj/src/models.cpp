#include "pathcv/models.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "pathcv/errors.hpp"

namespace pathcv {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356;

double normal_log_norm(double scale) { return -0.5 * kLog2Pi - std::log(scale); }

}  // namespace

Minibatch full_batch(const Dataset& data) { return Minibatch{data.train, 1.0}; }

Minibatch sample_minibatch(const Dataset& data, std::size_t batch_size, Rng& rng) {
  const std::size_t n = data.train.size();
  if (batch_size == 0 || batch_size > n) {
    throw std::invalid_argument("batch size must be in [1, " + std::to_string(n) + "]");
  }
  std::vector<std::size_t> pool = data.train;
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(batch_size);
  return Minibatch{std::move(pool), static_cast<double>(n) / static_cast<double>(batch_size)};
}

std::vector<double> log_joint_gradient(const Model& model, std::span<const double> z,
                                       const Minibatch& batch, ad::Tape& tape) {
  auto f = [&](std::span<const ad::Var> zv) { return model.log_joint(zv, batch); };
  return ad::grad(tape, f, z).gradient;
}

// ---- logistic regression ------------------------------------------------------

LogisticRegression::LogisticRegression(Dataset data) : data_(std::move(data)) {
  for (Eigen::Index i = 0; i < data_.targets.size(); ++i) {
    double y = data_.targets[i];
    if (y != 0.0 && y != 1.0) throw SchemaError("logistic regression needs 0/1 targets");
  }
}

template <class T>
T LogisticRegression::evaluate(std::span<const T> z, const Minibatch& batch) const {
  if (z.size() != latent_dim()) throw ArityError("logistic: z has the wrong length");
  const double var = kPriorScale * kPriorScale;
  T prior = static_cast<double>(z.size()) * normal_log_norm(kPriorScale) - 0.5 / var * ad::dot(z, z);
  std::span<const T> w = z.subspan(1);
  T lik = 0.0;
  for (std::size_t i : batch.indices) {
    T eta = z[0] + ad::dot(w, data_.row(i));
    lik += data_.targets[static_cast<Eigen::Index>(i)] == 1.0 ? -ad::softplus(-eta) : -ad::softplus(eta);
  }
  return batch.scale * lik + prior;
}

double LogisticRegression::log_likelihood(std::span<const double> z, std::size_t row) const {
  double eta = z[0] + ad::dot(z.subspan(1), data_.row(row));
  return data_.targets[static_cast<Eigen::Index>(row)] == 1.0 ? -ad::softplus(-eta) : -ad::softplus(eta);
}

// ---- hierarchical Poisson -------------------------------------------------------

HierPoisson::HierPoisson(Dataset data) : data_(std::move(data)) {
  if (data_.cols() != 3) throw SchemaError("hierarchical Poisson needs (eth, precinct, exposure) columns");
  log_exposure_.resize(data_.rows());
  log_factorial_.resize(data_.rows());
  for (std::size_t i = 0; i < data_.rows(); ++i) {
    auto r = static_cast<Eigen::Index>(i);
    double eth = data_.features(r, 0), pre = data_.features(r, 1), exposure = data_.features(r, 2);
    if (eth < 0 || eth > static_cast<double>(kFreeEthnicities) || pre < 0 ||
        pre >= static_cast<double>(kPrecincts) || !(exposure > 0.0)) {
      throw SchemaError("hierarchical Poisson: row " + std::to_string(i) + " out of range");
    }
    log_exposure_[i] = std::log(exposure);
    log_factorial_[i] = std::lgamma(data_.targets[r] + 1.0);
  }
}

template <class T>
T HierPoisson::log_rate(std::span<const T> z, std::size_t row) const {
  auto r = static_cast<Eigen::Index>(row);
  auto eth = static_cast<std::size_t>(data_.features(r, 0));
  auto pre = static_cast<std::size_t>(data_.features(r, 1));
  T eta = z[mu_index()] + z[kFreeEthnicities + pre] + log_exposure_[row];
  if (eth < kFreeEthnicities) eta = eta + z[eth];
  if (ad::value(eta) > ad::kClampBound) {
    throw NumericError("Poisson rate overflow: log rate " + std::to_string(ad::value(eta)));
  }
  return eta;
}

template <class T>
T HierPoisson::evaluate(std::span<const T> z, const Minibatch& batch) const {
  if (z.size() != latent_dim()) throw ArityError("hier_poisson: z has the wrong length");
  const std::size_t m = mu_index();
  const T& log_sa = z[m + 1];
  const T& log_sb = z[m + 2];
  const double var = kPriorScale * kPriorScale;
  T prior = 3.0 * normal_log_norm(kPriorScale) -
            0.5 / var * (ad::square(z[m]) + ad::square(log_sa) + ad::square(log_sb));
  std::span<const T> alpha = z.subspan(0, kFreeEthnicities);
  std::span<const T> beta = z.subspan(kFreeEthnicities, kPrecincts);
  constexpr double kHalfLog2Pi = 0.5 * kLog2Pi;
  prior += -static_cast<double>(kFreeEthnicities) * (kHalfLog2Pi + log_sa) -
           0.5 * ad::exp(-2.0 * log_sa) * ad::dot(alpha, alpha);
  prior += -static_cast<double>(kPrecincts) * (kHalfLog2Pi + log_sb) -
           0.5 * ad::exp(-2.0 * log_sb) * ad::dot(beta, beta);

  T lik = 0.0;
  for (std::size_t i : batch.indices) {
    T eta = log_rate(z, i);
    double y = data_.targets[static_cast<Eigen::Index>(i)];
    lik += y * eta - ad::exp(eta) - log_factorial_[i];
  }
  return batch.scale * lik + prior;
}

double HierPoisson::log_likelihood(std::span<const double> z, std::size_t row) const {
  double eta = log_rate(z, row);
  return data_.targets[static_cast<Eigen::Index>(row)] * eta - ad::exp(eta) - log_factorial_[row];
}

// ---- Bayesian neural network ------------------------------------------------------

BayesianNN::BayesianNN(Dataset data) : data_(std::move(data)) {
  if (data_.cols() == 0) throw SchemaError("bnn needs at least one feature column");
}

template <class T>
T BayesianNN::predict(std::span<const T> z, std::size_t row) const {
  const std::size_t p = data_.cols();
  std::span<const T> w = z.subspan(2);
  std::span<const T> w1 = w.subspan(0, kHidden * p);
  std::span<const T> b1 = w.subspan(kHidden * p, kHidden);
  std::span<const T> w2 = w.subspan(kHidden * (p + 1), kHidden);
  const T& b2 = w[kHidden * (p + 2)];
  std::span<const double> x = data_.row(row);
  std::vector<T> hidden(kHidden);
  for (std::size_t h = 0; h < kHidden; ++h) {
    hidden[h] = ad::relu(ad::dot(w1.subspan(h * p, p), x) + b1[h]);
  }
  return ad::dot(w2, std::span<const T>(hidden)) + b2;
}

template <class T>
T BayesianNN::evaluate(std::span<const T> z, const Minibatch& batch) const {
  if (z.size() != latent_dim()) throw ArityError("bnn: z has the wrong length");
  const T& log_a2 = z[0];
  const T& log_t2 = z[1];
  std::span<const T> w = z.subspan(2);
  constexpr double kHalfLog2Pi = 0.5 * kLog2Pi;
  const double nw = static_cast<double>(w.size());
  T prior = -nw * kHalfLog2Pi - 0.5 * nw * log_a2 - 0.5 * ad::exp(-log_a2) * ad::dot(w, w);

  T sse = 0.0;
  for (std::size_t i : batch.indices) {
    T resid = data_.targets[static_cast<Eigen::Index>(i)] - predict(z, i);
    sse += ad::square(resid);
  }
  const double nb = static_cast<double>(batch.indices.size());
  T lik = -nb * kHalfLog2Pi - 0.5 * nb * log_t2 - 0.5 * ad::exp(-log_t2) * sse;
  return batch.scale * lik + prior;
}

double BayesianNN::log_likelihood(std::span<const double> z, std::size_t row) const {
  double resid = data_.targets[static_cast<Eigen::Index>(row)] - predict(z, row);
  return -0.5 * kLog2Pi - 0.5 * z[1] - 0.5 * ad::exp(-z[1]) * resid * resid;
}

// ---- conjugate Gaussian -----------------------------------------------------------

ConjugateGaussian::ConjugateGaussian(Dataset data) : data_(std::move(data)) {
  if (data_.cols() == 0) throw SchemaError("conjugate Gaussian needs dimension >= 1");
}

ConjugateGaussian ConjugateGaussian::synthetic(std::size_t dim, std::size_t observations,
                                               std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::synthetic, 4);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset data;
  data.features.resize(static_cast<Eigen::Index>(observations), static_cast<Eigen::Index>(dim));
  data.targets = Vector::Zero(static_cast<Eigen::Index>(observations));
  std::vector<double> truth(dim);
  for (double& t : truth) t = normal(rng);
  for (std::size_t i = 0; i < observations; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = truth[j] + normal(rng);
    }
  }
  data.train.resize(observations);
  for (std::size_t i = 0; i < observations; ++i) data.train[i] = i;
  data.metadata["format"] = "synthetic_conjugate";
  return ConjugateGaussian(std::move(data));
}

template <class T>
T ConjugateGaussian::evaluate(std::span<const T> z, const Minibatch& batch) const {
  const std::size_t d = latent_dim();
  if (z.size() != d) throw ArityError("toy_gaussian: z has the wrong length");
  const double dd = static_cast<double>(d);
  T zz = ad::dot(z, z);
  T prior = -0.5 * dd * kLog2Pi - 0.5 * zz;
  if (batch.indices.empty()) return prior;
  // sum_i |x_i - z|^2 = sum_i |x_i|^2 - 2 z . sum_i x_i + n |z|^2
  std::vector<double> sx(d, 0.0);
  double sq = 0.0;
  for (std::size_t i : batch.indices) {
    std::span<const double> x = data_.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      sx[j] += x[j];
      sq += x[j] * x[j];
    }
  }
  const double n = static_cast<double>(batch.indices.size());
  T lik = -0.5 * n * dd * kLog2Pi - 0.5 * (sq - 2.0 * ad::dot(z, std::span<const double>(sx)) + n * zz);
  return batch.scale * lik + prior;
}

double ConjugateGaussian::log_likelihood(std::span<const double> z, std::size_t row) const {
  std::span<const double> x = data_.row(row);
  double s = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) s += (x[j] - z[j]) * (x[j] - z[j]);
  return -0.5 * static_cast<double>(z.size()) * kLog2Pi - 0.5 * s;
}

Vector ConjugateGaussian::posterior_mean() const {
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(latent_dim()));
  for (std::size_t i : data_.train) sum += data_.features.row(static_cast<Eigen::Index>(i)).transpose();
  return sum / (1.0 + static_cast<double>(data_.train.size()));
}

double ConjugateGaussian::posterior_variance() const {
  return 1.0 / (1.0 + static_cast<double>(data_.train.size()));
}

double ConjugateGaussian::log_evidence() const {
  const double n = static_cast<double>(data_.train.size());
  double total = 0.0;
  for (std::size_t j = 0; j < latent_dim(); ++j) {
    double s = 0.0, sq = 0.0;
    for (std::size_t i : data_.train) {
      double x = data_.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      s += x;
      sq += x * x;
    }
    total += -0.5 * n * kLog2Pi - 0.5 * std::log1p(n) - 0.5 * (sq - s * s / (1.0 + n));
  }
  return total;
}

double ConjugateGaussian::log_predictive(std::span<const double> x) const {
  Vector m = posterior_mean();
  double v = 1.0 + posterior_variance();
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - m[static_cast<Eigen::Index>(j)]) * (x[j] - m[static_cast<Eigen::Index>(j)]);
  return -0.5 * static_cast<double>(x.size()) * (kLog2Pi + std::log(v)) - 0.5 * s / v;
}

// ---- quadratic target ---------------------------------------------------------------

QuadraticTarget::QuadraticTarget(Vector b, Matrix a, Vector m, double c0)
    : b_(std::move(b)), a_(std::move(a)), m_(std::move(m)), c0_(c0) {
  if (a_.rows() != b_.size() || a_.cols() != b_.size() || m_.size() != b_.size()) {
    throw ArityError("quadratic target: inconsistent shapes");
  }
  if ((a_ - a_.transpose()).norm() > 1e-12 * (1.0 + a_.norm())) {
    throw std::invalid_argument("quadratic target: A must be symmetric");
  }
}

template <class T>
T QuadraticTarget::evaluate(std::span<const T> z, const Minibatch&) const {
  const std::size_t d = latent_dim();
  if (z.size() != d) throw ArityError("quadratic: z has the wrong length");
  std::vector<T> diff(d);
  for (std::size_t j = 0; j < d; ++j) diff[j] = z[j] - m_[static_cast<Eigen::Index>(j)];
  std::span<const T> dv(diff);
  std::vector<T> ad_(d);
  for (std::size_t j = 0; j < d; ++j) {
    ad_[j] = ad::dot(dv, std::span<const double>(a_.col(static_cast<Eigen::Index>(j)).data(), d));
  }
  return c0_ + ad::dot(dv, as_span(b_)) + 0.5 * ad::dot(dv, std::span<const T>(ad_));
}

double QuadraticTarget::log_likelihood(std::span<const double>, std::size_t) const {
  throw CapabilityError("quadratic target has no likelihood");
}

template double LogisticRegression::evaluate<double>(std::span<const double>, const Minibatch&) const;
template ad::Var LogisticRegression::evaluate<ad::Var>(std::span<const ad::Var>, const Minibatch&) const;
template double HierPoisson::evaluate<double>(std::span<const double>, const Minibatch&) const;
template ad::Var HierPoisson::evaluate<ad::Var>(std::span<const ad::Var>, const Minibatch&) const;
template double HierPoisson::log_rate<double>(std::span<const double>, std::size_t) const;
template ad::Var HierPoisson::log_rate<ad::Var>(std::span<const ad::Var>, std::size_t) const;
template double BayesianNN::evaluate<double>(std::span<const double>, const Minibatch&) const;
template ad::Var BayesianNN::evaluate<ad::Var>(std::span<const ad::Var>, const Minibatch&) const;
template double BayesianNN::predict<double>(std::span<const double>, std::size_t) const;
template ad::Var BayesianNN::predict<ad::Var>(std::span<const ad::Var>, std::size_t) const;
template double ConjugateGaussian::evaluate<double>(std::span<const double>, const Minibatch&) const;
template ad::Var ConjugateGaussian::evaluate<ad::Var>(std::span<const ad::Var>, const Minibatch&) const;
template double QuadraticTarget::evaluate<double>(std::span<const double>, const Minibatch&) const;
template ad::Var QuadraticTarget::evaluate<ad::Var>(std::span<const ad::Var>, const Minibatch&) const;

}  // namespace pathcv
