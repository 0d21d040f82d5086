#pragma once

#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "pathcv/autodiff.hpp"
#include "pathcv/datasets.hpp"
#include "pathcv/families.hpp"
#include "pathcv/random.hpp"

namespace pathcv {

/// Row indices into the train split plus the likelihood scale N/B.
struct Minibatch {
  std::vector<std::size_t> indices;
  double scale = 1.0;
};

/// Every train row, scale 1.
Minibatch full_batch(const Dataset& data);
/// B distinct train rows drawn without replacement, scale N_train / B.
Minibatch sample_minibatch(const Dataset& data, std::size_t batch_size, Rng& rng);

/// Target log-joint f(z) = scale * sum_{i in batch} log p(x_i | z) + log p(z).
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string_view name() const noexcept = 0;
  virtual std::size_t latent_dim() const noexcept = 0;
  virtual const Dataset& data() const noexcept = 0;

  virtual double log_joint(std::span<const double> z, const Minibatch& batch) const = 0;
  virtual ad::Var log_joint(std::span<const ad::Var> z, const Minibatch& batch) const = 0;

  /// log p(x_row | z); used for the predictive density on held-out rows.
  virtual double log_likelihood(std::span<const double> z, std::size_t row) const = 0;

  Minibatch full_batch() const { return pathcv::full_batch(data()); }
};

/// Dispatches the two virtual log_joint overloads to `Derived::evaluate<T>`.
template <class Derived>
class ModelBase : public Model {
 public:
  double log_joint(std::span<const double> z, const Minibatch& batch) const override {
    return self().template evaluate<double>(z, batch);
  }
  ad::Var log_joint(std::span<const ad::Var> z, const Minibatch& batch) const override {
    return self().template evaluate<ad::Var>(z, batch);
  }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

/// Bayesian logistic regression; z = [w0, w (p)], w0, w ~ N(0, 10^2).
class LogisticRegression final : public ModelBase<LogisticRegression> {
 public:
  static constexpr double kPriorScale = 10.0;

  explicit LogisticRegression(Dataset data);

  std::string_view name() const noexcept override { return "logistic"; }
  std::size_t latent_dim() const noexcept override { return data_.cols() + 1; }
  const Dataset& data() const noexcept override { return data_; }
  double log_likelihood(std::span<const double> z, std::size_t row) const override;

  template <class T>
  T evaluate(std::span<const T> z, const Minibatch& batch) const;

 private:
  Dataset data_;
};

/// Hierarchical Poisson regression on ethnicity x precinct counts.
///
/// z = [alpha_1, alpha_2, beta_1..beta_32, mu, log sigma_alpha, log sigma_beta].
/// The third ethnicity group is the reference level (alpha_3 = 0).
/// log rate_ep = mu + alpha_e + beta_p + log N_ep.
class HierPoisson final : public ModelBase<HierPoisson> {
 public:
  static constexpr std::size_t kFreeEthnicities = 2;
  static constexpr std::size_t kPrecincts = 32;
  static constexpr double kPriorScale = 10.0;

  explicit HierPoisson(Dataset data);

  std::string_view name() const noexcept override { return "hier_poisson"; }
  std::size_t latent_dim() const noexcept override { return kFreeEthnicities + kPrecincts + 3; }
  const Dataset& data() const noexcept override { return data_; }
  double log_likelihood(std::span<const double> z, std::size_t row) const override;

  std::size_t mu_index() const noexcept { return kFreeEthnicities + kPrecincts; }

  template <class T>
  T evaluate(std::span<const T> z, const Minibatch& batch) const;

  template <class T>
  T log_rate(std::span<const T> z, std::size_t row) const;

 private:
  Dataset data_;
  std::vector<double> log_exposure_;
  std::vector<double> log_factorial_;
};

/// One-hidden-layer ReLU regression network with Gaussian noise.
///
/// z = [log alpha^2, log tau^2, W1 (H x p, row-major), b1 (H), W2 (H), b2].
/// w_i ~ N(0, alpha^2); the log-variances have flat improper priors that
/// contribute 0 to log p(z).
class BayesianNN final : public ModelBase<BayesianNN> {
 public:
  static constexpr std::size_t kHidden = 50;

  explicit BayesianNN(Dataset data);

  std::string_view name() const noexcept override { return "bnn"; }
  std::size_t latent_dim() const noexcept override { return 2 + weight_count(); }
  const Dataset& data() const noexcept override { return data_; }
  double log_likelihood(std::span<const double> z, std::size_t row) const override;

  std::size_t weight_count() const noexcept { return (data_.cols() + 1) * kHidden + kHidden + 1; }

  template <class T>
  T evaluate(std::span<const T> z, const Minibatch& batch) const;

  template <class T>
  T predict(std::span<const T> z, std::size_t row) const;

 private:
  Dataset data_;
};

/// z ~ N(0, I_d), x_i | z ~ N(z, I_d). Observations are the feature rows.
/// Exposes the exact posterior, evidence and predictive density.
class ConjugateGaussian final : public ModelBase<ConjugateGaussian> {
 public:
  explicit ConjugateGaussian(Dataset data);
  /// `observations` rows drawn from N(z_true, I) with z_true ~ N(0, I).
  static ConjugateGaussian synthetic(std::size_t dim, std::size_t observations, std::uint64_t seed);

  std::string_view name() const noexcept override { return "toy_gaussian"; }
  std::size_t latent_dim() const noexcept override { return data_.cols(); }
  const Dataset& data() const noexcept override { return data_; }
  double log_likelihood(std::span<const double> z, std::size_t row) const override;

  template <class T>
  T evaluate(std::span<const T> z, const Minibatch& batch) const;

  /// Posterior over z given the train rows.
  Vector posterior_mean() const;
  double posterior_variance() const;
  double log_evidence() const;
  /// log N(x; posterior_mean, (1 + posterior_variance) I).
  double log_predictive(std::span<const double> x) const;

 private:
  Dataset data_;
};

/// f(z) = c0 + b'(z - m) + 0.5 (z - m)' A (z - m) with symmetric A.
/// Has no data; batches are ignored.
class QuadraticTarget final : public ModelBase<QuadraticTarget> {
 public:
  QuadraticTarget(Vector b, Matrix a, Vector m, double c0 = 0.0);

  std::string_view name() const noexcept override { return "quadratic"; }
  std::size_t latent_dim() const noexcept override { return static_cast<std::size_t>(b_.size()); }
  const Dataset& data() const noexcept override { return empty_; }
  double log_likelihood(std::span<const double> z, std::size_t row) const override;

  template <class T>
  T evaluate(std::span<const T> z, const Minibatch& batch) const;

  const Vector& linear() const noexcept { return b_; }
  const Matrix& hessian() const noexcept { return a_; }
  const Vector& center() const noexcept { return m_; }

 private:
  Vector b_;
  Matrix a_;
  Vector m_;
  double c0_;
  Dataset empty_;
};

/// r(T(eps; lambda); lambda) = log_joint(z) - log q(z; lambda).
template <class T>
T integrand_r(const Model& model, const Family& family, std::span<const T> lambda,
              std::span<const double> eps, const Minibatch& batch) {
  FlowSample<T> s = family.sample_with_log_density<T>(lambda, eps);
  return model.log_joint(std::span<const T>(s.z), batch) - s.log_density;
}

/// Gradient of the log-joint with respect to z.
std::vector<double> log_joint_gradient(const Model& model, std::span<const double> z,
                                       const Minibatch& batch, ad::Tape& tape);

}  // namespace pathcv
