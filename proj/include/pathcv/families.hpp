#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pathcv/autodiff.hpp"
#include "pathcv/random.hpp"
#include "pathcv/types.hpp"

namespace pathcv {

enum class FamilyKind { mean_field_gaussian, rank5_gaussian, real_nvp };

std::string_view to_string(FamilyKind kind) noexcept;
FamilyKind parse_family_kind(std::string_view name);

/// Named contiguous slice of the flat variational parameter vector.
struct Slice {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct GaussianMoments {
  Vector mean;
  Matrix cov;
};

/// A transformed sample together with log q(z; lambda) at that sample.
template <class T>
struct FlowSample {
  std::vector<T> z;
  T log_density;
};

/// Variational family q_lambda(z) = law of T(eps; lambda), eps ~ N(0, I).
///
/// Parameter layouts:
///  - mean-field: [mu (d), log_sigma (d)]
///  - rank-5:     [mu (d), log_sigma (d), factor (d x 5, row-major)];
///                base is [eps (d), u (5)] and z = mu + F u + sigma * eps
///  - real NVP:   two affine coupling layers. Layer 0 conditions on even
///                coordinates and updates odd ones, layer 1 the reverse.
///                Each layer owns a scale net and a shift net, both
///                in -> 8 -> 16 -> 16 -> out with ReLU hidden units; the
///                scale output passes through tanh. Dense weights are
///                stored row-major (out x in) followed by the bias.
class Family {
 public:
  static constexpr std::size_t kFactorRank = 5;
  static constexpr std::array<std::size_t, 3> kHiddenSizes{8, 16, 16};

  static Family mean_field(std::size_t latent_dim);
  static Family rank5(std::size_t latent_dim);
  static Family real_nvp(std::size_t latent_dim);
  static Family make(FamilyKind kind, std::size_t latent_dim);

  FamilyKind kind() const noexcept { return kind_; }
  std::size_t latent_dim() const noexcept { return latent_dim_; }
  std::size_t base_dim() const noexcept;
  std::size_t param_dim() const noexcept { return param_dim_; }
  const std::vector<Slice>& layout() const noexcept { return layout_; }
  const Slice& slice(std::string_view name) const;
  bool has_closed_form_moments() const noexcept { return kind_ != FamilyKind::real_nvp; }

  /// z = T(eps; lambda).
  template <class T>
  std::vector<T> transform(std::span<const T> lambda, std::span<const double> eps) const;

  /// z = T(eps; lambda) and log q(z; lambda), computed along the forward
  /// path (base log-density minus log-determinant where T is a bijection).
  template <class T>
  FlowSample<T> sample_with_log_density(std::span<const T> lambda,
                                        std::span<const double> eps) const;

  /// log q(z; lambda) at an arbitrary point. Real NVP inverts the flow.
  template <class T>
  T log_density(std::span<const T> lambda, std::span<const T> z) const;

  /// Real NVP only: eps = T^{-1}(z; lambda).
  std::vector<double> inverse(std::span<const double> lambda, std::span<const double> z) const;

  /// Closed-form mean and covariance; absent for real NVP.
  std::optional<GaussianMoments> mean_cov(std::span<const double> lambda) const;

  /// Initial parameters: N(0, 0.5^2) for the Gaussian families, Glorot-normal
  /// weights and zero biases for real NVP.
  Vector initial_params(Rng& rng) const;

 private:
  struct Net {
    std::size_t offset = 0;
    std::vector<std::size_t> sizes;  // layer widths including input and output
  };
  struct Coupling {
    std::vector<std::size_t> cond;   // conditioning coordinates
    std::vector<std::size_t> trans;  // transformed coordinates
    Net scale;
    Net shift;
  };

  Family(FamilyKind kind, std::size_t latent_dim);

  template <class T>
  static std::vector<T> run_net(const Net& net, std::span<const T> lambda,
                                std::vector<T> input, bool tanh_out);

  FamilyKind kind_;
  std::size_t latent_dim_;
  std::size_t param_dim_ = 0;
  std::vector<Slice> layout_;
  std::vector<Coupling> couplings_;
};

/// log N(x; 0, 1) summed over coordinates.
double standard_normal_log_density(std::span<const double> x);

}  // namespace pathcv
