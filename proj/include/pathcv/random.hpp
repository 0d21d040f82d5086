#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "pathcv/types.hpp"

namespace pathcv {

using Rng = std::mt19937_64;

/// Purpose tags for deterministic substreams. Every random draw in a run comes
/// from a stream keyed by (seed, purpose, repetition, iteration) so that the
/// estimator, the QuadCV auxiliary batches and the evaluators never share
/// samples.
enum class Stream : std::uint64_t {
  init = 1,
  estimator = 2,
  minibatch = 3,
  quad_location = 4,
  quad_expectation = 5,
  eval_elbo = 6,
  eval_variance = 7,
  eval_lppd = 8,
  split = 9,
  synthetic = 10,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t seed, Stream purpose, std::uint64_t repetition = 0,
                          std::uint64_t iteration = 0) noexcept;
Rng make_rng(std::uint64_t seed, Stream purpose, std::uint64_t repetition = 0,
             std::uint64_t iteration = 0);

/// L x dim matrix of i.i.d. standard normal base draws.
struct EpsBatch {
  RowMatrix eps;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(eps.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(eps.cols()); }
  std::span<const double> row(std::size_t l) const {
    return row_span(eps, static_cast<Eigen::Index>(l));
  }
};

EpsBatch sample_base(std::size_t dim, std::size_t num_samples, Rng& rng);
/// Same as above with a fresh generator seeded by `seed`.
EpsBatch sample_base(std::size_t dim, std::size_t num_samples, std::uint64_t seed);

}  // namespace pathcv
