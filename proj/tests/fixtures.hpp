#pragma once

// Small synthetic models shared by the test binaries.

#include <cmath>
#include <numbers>
#include <sstream>

#include "pathcv/cv.hpp"
#include "pathcv/datasets.hpp"
#include "pathcv/families.hpp"
#include "pathcv/models.hpp"

namespace fixtures {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline pathcv::Dataset rows_to_dataset(const pathcv::RowMatrix& x, const pathcv::Vector& y) {
  pathcv::Dataset d;
  d.features = x;
  d.targets = y;
  d.train.resize(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < d.train.size(); ++i) d.train[i] = i;
  return d;
}

inline pathcv::LogisticRegression logistic(std::size_t rows, std::size_t width, std::uint64_t seed) {
  return pathcv::LogisticRegression(pathcv::parse_libsvm(pathcv::synthetic_libsvm(rows, width, seed)));
}

inline pathcv::HierPoisson frisk(std::uint64_t seed) {
  return pathcv::HierPoisson(pathcv::load_frisk_csv(pathcv::synthetic_frisk_csv(seed)));
}

inline pathcv::BayesianNN bnn(std::size_t rows, std::uint64_t seed) {
  pathcv::Dataset d = pathcv::load_redwine_csv(pathcv::synthetic_redwine_csv(rows, seed));
  pathcv::standardize_features(d);
  return pathcv::BayesianNN(std::move(d));
}

/// Random parameter vector near the family's initialization.
inline pathcv::Vector params(const pathcv::Family& f, std::uint64_t seed, double jitter = 0.1) {
  pathcv::Rng rng(seed);
  pathcv::Vector v = f.initial_params(rng);
  std::normal_distribution<double> n(0.0, jitter);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += n(rng);
  return v;
}

/// Mean pathwise gradient against central differences of the mean integrand,
/// over the listed coordinates (all when empty).
inline double pathwise_fd_error(const pathcv::Model& model, const pathcv::Family& family,
                                const pathcv::Vector& lambda, const pathcv::EpsBatch& eps,
                                const pathcv::Minibatch& batch, std::vector<std::size_t> coords,
                                double step) {
  if (coords.empty()) {
    coords.resize(static_cast<std::size_t>(lambda.size()));
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  }
  pathcv::Vector g = pathcv::pathwise_grad_batch(model, family, pathcv::as_span(lambda), eps, batch)
                         .colwise()
                         .mean()
                         .transpose();
  auto mean_r = [&](const pathcv::Vector& lam) {
    double s = 0.0;
    for (std::size_t l = 0; l < eps.size(); ++l)
      s += pathcv::integrand_r<double>(model, family, pathcv::as_span(lam), eps.row(l), batch);
    return s / static_cast<double>(eps.size());
  };
  pathcv::Vector probe = lambda;
  double worst = 0.0;
  for (std::size_t c : coords) {
    auto i = static_cast<Eigen::Index>(c);
    probe[i] = lambda[i] + step;
    double up = mean_r(probe);
    probe[i] = lambda[i] - step;
    double down = mean_r(probe);
    probe[i] = lambda[i];
    double fd = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(g[i] - fd) / (std::abs(fd) + 1e-12));
  }
  return worst;
}

}  // namespace fixtures
