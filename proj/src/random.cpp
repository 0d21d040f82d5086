#include "pathcv/random.hpp"

#include <stdexcept>

namespace pathcv {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, Stream purpose, std::uint64_t repetition,
                          std::uint64_t iteration) noexcept {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = splitmix64(h ^ repetition);
  return splitmix64(h ^ iteration);
}

Rng make_rng(std::uint64_t seed, Stream purpose, std::uint64_t repetition,
             std::uint64_t iteration) {
  return Rng(derive_seed(seed, purpose, repetition, iteration));
}

EpsBatch sample_base(std::size_t dim, std::size_t num_samples, Rng& rng) {
  if (num_samples < 1) throw std::invalid_argument("sample_base: need at least one sample");
  EpsBatch batch;
  batch.eps.resize(static_cast<Eigen::Index>(num_samples), static_cast<Eigen::Index>(dim));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < batch.eps.size(); ++i) batch.eps.data()[i] = normal(rng);
  return batch;
}

EpsBatch sample_base(std::size_t dim, std::size_t num_samples, std::uint64_t seed) {
  Rng rng(seed);
  EpsBatch batch = sample_base(dim, num_samples, rng);
  batch.seed = seed;
  return batch;
}

}  // namespace pathcv
