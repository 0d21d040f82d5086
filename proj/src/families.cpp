#include "pathcv/families.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pathcv {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

template <class T>
std::vector<T> gather(const std::vector<T>& x, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(x[i]);
  return out;
}

template <class T>
std::vector<T> to_scalars(std::span<const double> xs) {
  return std::vector<T>(xs.begin(), xs.end());
}

}  // namespace

std::string_view to_string(FamilyKind kind) noexcept {
  switch (kind) {
    case FamilyKind::mean_field_gaussian: return "mean_field_gaussian";
    case FamilyKind::rank5_gaussian: return "rank5_gaussian";
    case FamilyKind::real_nvp: return "real_nvp";
  }
  return "unknown";
}

FamilyKind parse_family_kind(std::string_view name) {
  if (name == "mean_field_gaussian" || name == "mean_field") return FamilyKind::mean_field_gaussian;
  if (name == "rank5_gaussian" || name == "rank5") return FamilyKind::rank5_gaussian;
  if (name == "real_nvp" || name == "nvp") return FamilyKind::real_nvp;
  throw std::invalid_argument("unknown variational family '" + std::string(name) + "'");
}

double standard_normal_log_density(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += -kHalfLog2Pi - 0.5 * v * v;
  return s;
}

Family::Family(FamilyKind kind, std::size_t latent_dim) : kind_(kind), latent_dim_(latent_dim) {
  if (latent_dim == 0) throw std::invalid_argument("variational family needs latent_dim >= 1");
  const std::size_t d = latent_dim;
  switch (kind) {
    case FamilyKind::mean_field_gaussian:
      layout_ = {{"mu", 0, d}, {"log_sigma", d, d}};
      param_dim_ = 2 * d;
      break;
    case FamilyKind::rank5_gaussian:
      layout_ = {{"mu", 0, d}, {"log_sigma", d, d}, {"factor", 2 * d, kFactorRank * d}};
      param_dim_ = 2 * d + kFactorRank * d;
      break;
    case FamilyKind::real_nvp: {
      std::size_t offset = 0;
      for (std::size_t layer = 0; layer < 2; ++layer) {
        Coupling c;
        for (std::size_t i = 0; i < d; ++i) {
          // Layer 0 conditions on even coordinates (ceil(d/2) of them).
          bool conditioning = (i % 2 == 0) == (layer == 0);
          (conditioning ? c.cond : c.trans).push_back(i);
        }
        auto make_net = [&](const std::string& name) {
          Net net;
          net.offset = offset;
          net.sizes = {c.cond.size(), kHiddenSizes[0], kHiddenSizes[1], kHiddenSizes[2],
                       c.trans.size()};
          std::size_t count = 0;
          for (std::size_t k = 0; k + 1 < net.sizes.size(); ++k) {
            count += net.sizes[k] * net.sizes[k + 1] + net.sizes[k + 1];
          }
          layout_.push_back({name, offset, count});
          offset += count;
          return net;
        };
        std::string prefix = "coupling" + std::to_string(layer);
        c.scale = make_net(prefix + ".scale");
        c.shift = make_net(prefix + ".shift");
        couplings_.push_back(std::move(c));
      }
      param_dim_ = offset;
      break;
    }
  }
}

Family Family::mean_field(std::size_t latent_dim) {
  return Family(FamilyKind::mean_field_gaussian, latent_dim);
}
Family Family::rank5(std::size_t latent_dim) { return Family(FamilyKind::rank5_gaussian, latent_dim); }
Family Family::real_nvp(std::size_t latent_dim) { return Family(FamilyKind::real_nvp, latent_dim); }
Family Family::make(FamilyKind kind, std::size_t latent_dim) { return Family(kind, latent_dim); }

std::size_t Family::base_dim() const noexcept {
  return kind_ == FamilyKind::rank5_gaussian ? latent_dim_ + kFactorRank : latent_dim_;
}

const Slice& Family::slice(std::string_view name) const {
  for (const Slice& s : layout_) {
    if (s.name == name) return s;
  }
  throw std::out_of_range("no parameter slice named '" + std::string(name) + "'");
}

template <class T>
std::vector<T> Family::run_net(const Net& net, std::span<const T> lambda, std::vector<T> input,
                               bool tanh_out) {
  std::vector<T> x = std::move(input);
  std::size_t off = net.offset;
  const std::size_t layers = net.sizes.size() - 1;
  for (std::size_t k = 0; k < layers; ++k) {
    const std::size_t in = net.sizes[k];
    const std::size_t out = net.sizes[k + 1];
    std::vector<T> y(out);
    std::span<const T> xs(x);
    for (std::size_t o = 0; o < out; ++o) {
      T pre = ad::dot(lambda.subspan(off + o * in, in), xs) + lambda[off + out * in + o];
      if (k + 1 < layers) {
        y[o] = ad::relu(pre);
      } else {
        y[o] = tanh_out ? ad::tanh(pre) : pre;
      }
    }
    off += out * in + out;
    x = std::move(y);
  }
  return x;
}

template <class T>
std::vector<T> Family::transform(std::span<const T> lambda, std::span<const double> eps) const {
  return sample_with_log_density<T>(lambda, eps).z;
}

template <class T>
FlowSample<T> Family::sample_with_log_density(std::span<const T> lambda,
                                              std::span<const double> eps) const {
  if (lambda.size() != param_dim_) throw ArityError("variational parameter length mismatch");
  if (eps.size() != base_dim()) throw ArityError("base sample dimension mismatch");
  const std::size_t d = latent_dim_;
  FlowSample<T> out;
  out.z.resize(d);
  switch (kind_) {
    case FamilyKind::mean_field_gaussian: {
      for (std::size_t j = 0; j < d; ++j) out.z[j] = lambda[j] + ad::exp(lambda[d + j]) * eps[j];
      out.log_density = T(standard_normal_log_density(eps)) - ad::sum(lambda.subspan(d, d));
      return out;
    }
    case FamilyKind::rank5_gaussian: {
      std::span<const double> u = eps.subspan(d, kFactorRank);
      for (std::size_t j = 0; j < d; ++j) {
        out.z[j] = lambda[j] + ad::dot(lambda.subspan(2 * d + j * kFactorRank, kFactorRank), u) +
                   ad::exp(lambda[d + j]) * eps[j];
      }
      out.log_density = log_density<T>(lambda, std::span<const T>(out.z));
      return out;
    }
    case FamilyKind::real_nvp: {
      std::vector<T> x = to_scalars<T>(eps);
      std::vector<T> scales;
      for (const Coupling& c : couplings_) {
        std::vector<T> xa = gather(x, c.cond);
        std::vector<T> s = run_net<T>(c.scale, lambda, xa, true);
        std::vector<T> t = run_net<T>(c.shift, lambda, std::move(xa), false);
        for (std::size_t j = 0; j < c.trans.size(); ++j) {
          T& xj = x[c.trans[j]];
          xj = xj * ad::exp(s[j]) + t[j];
          scales.push_back(s[j]);
        }
      }
      out.z = std::move(x);
      out.log_density = T(standard_normal_log_density(eps)) - ad::sum(std::span<const T>(scales));
      return out;
    }
  }
  throw std::logic_error("unreachable");
}

template <class T>
T Family::log_density(std::span<const T> lambda, std::span<const T> z) const {
  if (lambda.size() != param_dim_) throw ArityError("variational parameter length mismatch");
  if (z.size() != latent_dim_) throw ArityError("latent dimension mismatch");
  const std::size_t d = latent_dim_;
  switch (kind_) {
    case FamilyKind::mean_field_gaussian: {
      T total(0.0);
      for (std::size_t j = 0; j < d; ++j) {
        T scaled = (z[j] - lambda[j]) * ad::exp(-lambda[d + j]);
        total = total - kHalfLog2Pi - lambda[d + j] - 0.5 * ad::square(scaled);
      }
      return total;
    }
    case FamilyKind::rank5_gaussian: {
      // Woodbury: Sigma = D + F F^T, D = diag(sigma^2).
      constexpr std::size_t K = kFactorRank;
      std::vector<T> inv_var(d), resid(d), scaled_resid(d);
      std::array<std::vector<T>, K> col, col_scaled;
      for (std::size_t k = 0; k < K; ++k) {
        col[k].resize(d);
        col_scaled[k].resize(d);
      }
      for (std::size_t j = 0; j < d; ++j) {
        inv_var[j] = ad::exp(-2.0 * lambda[d + j]);
        resid[j] = z[j] - lambda[j];
        scaled_resid[j] = resid[j] * inv_var[j];
        for (std::size_t k = 0; k < K; ++k) {
          col[k][j] = lambda[2 * d + j * K + k];
          col_scaled[k][j] = col[k][j] * inv_var[j];
        }
      }
      std::array<std::array<T, K>, K> m{};
      std::array<T, K> w{};
      for (std::size_t a = 0; a < K; ++a) {
        w[a] = ad::dot(std::span<const T>(col_scaled[a]), std::span<const T>(resid));
        for (std::size_t b = 0; b <= a; ++b) {
          m[a][b] = ad::dot(std::span<const T>(col[a]), std::span<const T>(col_scaled[b]));
          if (a == b) m[a][b] = m[a][b] + 1.0;
        }
      }
      // Cholesky of the K x K capacitance matrix, then forward substitution.
      std::array<std::array<T, K>, K> chol{};
      std::array<T, K> y{};
      T log_det_m(0.0);
      T quad_correction(0.0);
      for (std::size_t a = 0; a < K; ++a) {
        for (std::size_t b = 0; b <= a; ++b) {
          T acc = m[a][b];
          for (std::size_t c = 0; c < b; ++c) acc = acc - chol[a][c] * chol[b][c];
          chol[a][b] = (a == b) ? ad::sqrt(acc) : acc / chol[b][b];
        }
        log_det_m = log_det_m + 2.0 * ad::log(chol[a][a]);
        T acc = w[a];
        for (std::size_t c = 0; c < a; ++c) acc = acc - chol[a][c] * y[c];
        y[a] = acc / chol[a][a];
        quad_correction = quad_correction + ad::square(y[a]);
      }
      T quad = ad::dot(std::span<const T>(resid), std::span<const T>(scaled_resid)) - quad_correction;
      T log_det = 2.0 * ad::sum(lambda.subspan(d, d)) + log_det_m;
      return -kHalfLog2Pi * static_cast<double>(d) - 0.5 * log_det - 0.5 * quad;
    }
    case FamilyKind::real_nvp: {
      std::vector<T> y(z.begin(), z.end());
      std::vector<T> scales;
      for (auto c = couplings_.rbegin(); c != couplings_.rend(); ++c) {
        std::vector<T> ya = gather(y, c->cond);
        std::vector<T> s = run_net<T>(c->scale, lambda, ya, true);
        std::vector<T> t = run_net<T>(c->shift, lambda, std::move(ya), false);
        for (std::size_t j = 0; j < c->trans.size(); ++j) {
          T& yj = y[c->trans[j]];
          yj = (yj - t[j]) * ad::exp(-s[j]);
          scales.push_back(s[j]);
        }
      }
      T total(0.0);
      for (const T& v : y) total = total - kHalfLog2Pi - 0.5 * ad::square(v);
      return total - ad::sum(std::span<const T>(scales));
    }
  }
  throw std::logic_error("unreachable");
}

std::vector<double> Family::inverse(std::span<const double> lambda, std::span<const double> z) const {
  if (kind_ != FamilyKind::real_nvp) throw CapabilityError("inverse is only defined for real NVP");
  if (lambda.size() != param_dim_) throw ArityError("variational parameter length mismatch");
  if (z.size() != latent_dim_) throw ArityError("latent dimension mismatch");
  std::vector<double> y(z.begin(), z.end());
  for (auto c = couplings_.rbegin(); c != couplings_.rend(); ++c) {
    std::vector<double> ya = gather(y, c->cond);
    std::vector<double> s = run_net<double>(c->scale, lambda, ya, true);
    std::vector<double> t = run_net<double>(c->shift, lambda, std::move(ya), false);
    for (std::size_t j = 0; j < c->trans.size(); ++j) {
      double& yj = y[c->trans[j]];
      yj = ad::checked(ad::Op::mul, (yj - t[j]) * ad::exp(-s[j]));
    }
  }
  return y;
}

std::optional<GaussianMoments> Family::mean_cov(std::span<const double> lambda) const {
  if (lambda.size() != param_dim_) throw ArityError("variational parameter length mismatch");
  if (kind_ == FamilyKind::real_nvp) return std::nullopt;
  const auto d = static_cast<Eigen::Index>(latent_dim_);
  GaussianMoments out;
  out.mean = as_vector(lambda.subspan(0, latent_dim_));
  Vector log_sigma = as_vector(lambda.subspan(latent_dim_, latent_dim_));
  out.cov = (2.0 * log_sigma).array().exp().matrix().asDiagonal();
  if (kind_ == FamilyKind::rank5_gaussian) {
    Eigen::Map<const RowMatrix> factor(lambda.data() + 2 * latent_dim_, d,
                                       static_cast<Eigen::Index>(kFactorRank));
    out.cov += factor * factor.transpose();
  }
  return out;
}

Vector Family::initial_params(Rng& rng) const {
  Vector lambda = Vector::Zero(static_cast<Eigen::Index>(param_dim_));
  if (kind_ != FamilyKind::real_nvp) {
    std::normal_distribution<double> normal(0.0, 0.5);
    for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda[i] = normal(rng);
    return lambda;
  }
  for (const Coupling& c : couplings_) {
    for (const Net* net : {&c.scale, &c.shift}) {
      std::size_t off = net->offset;
      for (std::size_t k = 0; k + 1 < net->sizes.size(); ++k) {
        const std::size_t in = net->sizes[k];
        const std::size_t out = net->sizes[k + 1];
        std::normal_distribution<double> normal(0.0,
                                                std::sqrt(2.0 / static_cast<double>(in + out)));
        for (std::size_t i = 0; i < in * out; ++i) lambda[static_cast<Eigen::Index>(off + i)] = normal(rng);
        off += in * out + out;  // biases stay zero
      }
    }
  }
  return lambda;
}

template std::vector<double> Family::transform<double>(std::span<const double>,
                                                       std::span<const double>) const;
template std::vector<ad::Var> Family::transform<ad::Var>(std::span<const ad::Var>,
                                                         std::span<const double>) const;
template FlowSample<double> Family::sample_with_log_density<double>(std::span<const double>,
                                                                    std::span<const double>) const;
template FlowSample<ad::Var> Family::sample_with_log_density<ad::Var>(
    std::span<const ad::Var>, std::span<const double>) const;
template double Family::log_density<double>(std::span<const double>, std::span<const double>) const;
template ad::Var Family::log_density<ad::Var>(std::span<const ad::Var>,
                                              std::span<const ad::Var>) const;

}  // namespace pathcv
