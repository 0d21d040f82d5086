#include "pathcv/cv.hpp"

#include <stdexcept>

#include "pathcv/errors.hpp"

namespace pathcv {

namespace {

void check_rows(const GradBatch& grads, const CvMatrix& cv) {
  if (grads.rows() != cv.values.rows()) throw ArityError("gradient and CV batches differ in length");
  if (grads.rows() == 0) throw ArityError("empty gradient batch");
  if (cv.kind == CvKind::quad && cv.values.cols() != grads.cols()) {
    throw ArityError("quad CV width must equal d_lambda");
  }
}

void check_beta(const GradBatch& grads, const CvMatrix& cv, const BetaCoefficients& beta) {
  check_rows(grads, cv);
  if (beta.kind != cv.kind) throw ArityError("beta and CV kinds differ");
  if (cv.kind == CvKind::zvcv) {
    if (beta.beta.rows() != grads.cols() || beta.beta.cols() != cv.values.cols()) {
      throw ArityError("zvcv beta must be d_lambda x J");
    }
  } else if (beta.beta.size() != 1) {
    throw ArityError("quad beta must be a scalar");
  }
}

double quad_scalar(const BetaCoefficients& beta) { return beta.beta(0, 0); }

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + " produced non-finite values");
}

}  // namespace

BetaCoefficients BetaCoefficients::zero(CvKind kind, std::size_t param_dim, std::size_t features) {
  BetaCoefficients out;
  out.kind = kind;
  out.beta = kind == CvKind::zvcv
                 ? Matrix::Zero(static_cast<Eigen::Index>(param_dim), static_cast<Eigen::Index>(features))
                 : Matrix::Zero(1, 1);
  return out;
}

GradBatch pathwise_grad_batch(const Model& model, const Family& family, std::span<const double> lambda,
                              const EpsBatch& eps, const Minibatch& batch, ad::Tape& tape) {
  if (lambda.size() != family.param_dim()) throw ArityError("lambda length does not match the family");
  if (eps.dim() != family.base_dim()) throw ArityError("base sample dimension does not match the family");
  GradBatch out(static_cast<Eigen::Index>(eps.size()), static_cast<Eigen::Index>(lambda.size()));
  for (std::size_t l = 0; l < eps.size(); ++l) {
    std::span<const double> e = eps.row(l);
    auto f = [&](std::span<const ad::Var> lam) { return integrand_r<ad::Var>(model, family, lam, e, batch); };
    ad::ValueAndGradient vg = ad::grad(tape, f, lambda);
    std::copy(vg.gradient.begin(), vg.gradient.end(), row_span(out, static_cast<Eigen::Index>(l)).begin());
  }
  return out;
}

GradBatch pathwise_grad_batch(const Model& model, const Family& family, std::span<const double> lambda,
                              const EpsBatch& eps, const Minibatch& batch) {
  ad::Tape tape;
  return pathwise_grad_batch(model, family, lambda, eps, batch, tape);
}

// ---- ZVCV -----------------------------------------------------------------------

std::size_t zvcv_feature_count(std::size_t dim, int order) {
  if (order == 1) return dim;
  if (order == 2) return dim + dim + dim * (dim - 1) / 2;
  throw std::invalid_argument("zvcv order must be 1 or 2");
}

std::vector<double> zvcv_features(std::span<const double> eps, int order, std::size_t order2_cap) {
  const std::size_t d = eps.size();
  if (order == 2 && d > order2_cap) {
    throw CapabilityError("second-order zvcv is limited to dimension " + std::to_string(order2_cap));
  }
  std::vector<double> out;
  out.reserve(zvcv_feature_count(d, order));
  for (double e : eps) out.push_back(-e);
  if (order == 2) {
    for (double e : eps) out.push_back(2.0 - 2.0 * e * e);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i + 1; j < d; ++j) out.push_back(-2.0 * eps[i] * eps[j]);
    }
  }
  return out;
}

CvMatrix zvcv_cv_matrix(const EpsBatch& eps, int order, std::size_t order2_cap) {
  CvMatrix cv;
  cv.kind = CvKind::zvcv;
  cv.order = order;
  cv.values.resize(static_cast<Eigen::Index>(eps.size()),
                   static_cast<Eigen::Index>(zvcv_feature_count(eps.dim(), order)));
  for (std::size_t l = 0; l < eps.size(); ++l) {
    std::vector<double> f = zvcv_features(eps.row(l), order, order2_cap);
    std::copy(f.begin(), f.end(), row_span(cv.values, static_cast<Eigen::Index>(l)).begin());
  }
  return cv;
}

// ---- beta selection and adjustment ----------------------------------------------------

RowMatrix apply_cv(const GradBatch& grads, const CvMatrix& cv, const BetaCoefficients& beta) {
  check_beta(grads, cv, beta);
  if (cv.kind == CvKind::zvcv) return grads + cv.values * beta.beta.transpose();
  return grads + quad_scalar(beta) * cv.values;
}

Vector cv_adjusted_estimate(const GradBatch& grads, const CvMatrix& cv, const BetaCoefficients& beta) {
  return apply_cv(grads, cv, beta).colwise().mean().transpose();
}

double ls_objective(const GradBatch& grads, const CvMatrix& cv, const BetaCoefficients& beta) {
  RowMatrix r = apply_cv(grads, cv, beta);
  if (beta.alpha.size() == grads.cols()) r.rowwise() += beta.alpha.transpose();
  return r.squaredNorm() / static_cast<double>(grads.rows());
}

BetaCoefficients solve_beta_gd(const GradBatch& grads, const CvMatrix& cv, double lr, std::size_t steps) {
  check_rows(grads, cv);
  if (!(lr > 0.0)) throw std::invalid_argument("solve_beta_gd: lr must be positive");
  const double inv_l = 1.0 / static_cast<double>(grads.rows());
  BetaCoefficients out = BetaCoefficients::zero(cv.kind, static_cast<std::size_t>(grads.cols()),
                                                static_cast<std::size_t>(cv.values.cols()));
  out.alpha = -grads.colwise().mean().transpose();
  out.provenance = Provenance::same_samples;
  for (std::size_t m = 0; m < steps; ++m) {
    RowMatrix r = apply_cv(grads, cv, out);
    r.rowwise() += out.alpha.transpose();
    Vector d_alpha = 2.0 * inv_l * r.colwise().sum().transpose();
    if (cv.kind == CvKind::zvcv) {
      Matrix d_beta = 2.0 * inv_l * (r.transpose() * cv.values);
      out.beta -= lr * d_beta;
    } else {
      out.beta(0, 0) -= lr * 2.0 * inv_l * r.cwiseProduct(cv.values).sum();
    }
    out.alpha -= lr * d_alpha;
  }
  check_finite(out.beta, "solve_beta_gd");
  return out;
}

BetaCoefficients solve_beta_ols(const GradBatch& grads, const CvMatrix& cv, double ridge) {
  check_rows(grads, cv);
  if (!(ridge >= 0.0)) throw std::invalid_argument("solve_beta_ols: ridge must be >= 0");
  const Eigen::RowVectorXd h_mean = grads.colwise().mean();
  const Eigen::RowVectorXd c_mean = cv.values.colwise().mean();
  const Matrix hc = grads.rowwise() - h_mean;
  const Matrix cc = cv.values.rowwise() - c_mean;
  BetaCoefficients out;
  out.kind = cv.kind;
  out.provenance = Provenance::same_samples;
  if (cv.kind == CvKind::zvcv) {
    const auto j = cc.cols();
    Matrix beta_t;  // J x d_lambda
    if (ridge == 0.0) {
      Eigen::ColPivHouseholderQR<Matrix> qr(cc);
      if (qr.rank() < j) {
        throw RankError("OLS design has rank " + std::to_string(qr.rank()) + " < " + std::to_string(j));
      }
      beta_t = -qr.solve(hc);
    } else {
      Matrix normal = cc.transpose() * cc;
      normal.diagonal().array() += ridge;
      beta_t = -normal.ldlt().solve(cc.transpose() * hc);
    }
    out.beta = beta_t.transpose();
    out.alpha = -(h_mean.transpose() + out.beta * c_mean.transpose());
  } else {
    double denom = cc.squaredNorm() + ridge;
    if (denom == 0.0) throw RankError("OLS design is identically zero");
    double b = -(cc.cwiseProduct(hc)).sum() / denom;
    out.beta = Matrix::Constant(1, 1, b);
    out.alpha = -(h_mean.transpose() + b * c_mean.transpose());
  }
  check_finite(out.beta, "solve_beta_ols");
  return out;
}

BetaCoefficients solve_beta_esn(const GradBatch& grads, const CvMatrix& cv) {
  check_rows(grads, cv);
  BetaCoefficients out;
  out.kind = cv.kind;
  out.provenance = Provenance::same_samples;
  if (cv.kind == CvKind::zvcv) {
    Eigen::ColPivHouseholderQR<Matrix> qr(Matrix(cv.values));
    if (qr.rank() < cv.values.cols()) throw RankError("E[C'C] is singular");
    Matrix beta_t = -qr.solve(Matrix(grads));
    out.beta = beta_t.transpose();
  } else {
    double cc = cv.values.squaredNorm();
    if (cc == 0.0) throw RankError("E[C'C] is zero");
    out.beta = Matrix::Constant(1, 1, -cv.values.cwiseProduct(grads).sum() / cc);
  }
  check_finite(out.beta, "solve_beta_esn");
  return out;
}

double variance_pairwise(const GradBatch& grads, const CvMatrix& cv, const BetaCoefficients& beta) {
  if (grads.rows() < 2) throw ArityError("variance_pairwise needs at least 2 samples");
  RowMatrix a = apply_cv(grads, cv, beta);
  const Eigen::Index n = a.rows();
  double total = 0.0;
  for (Eigen::Index l = 1; l < n; ++l) {
    for (Eigen::Index k = 0; k < l; ++k) total += (a.row(l) - a.row(k)).squaredNorm();
  }
  return total / (static_cast<double>(n) * static_cast<double>(n - 1));
}

// ---- QuadCV ---------------------------------------------------------------------

QuadParams QuadParams::zeros(std::size_t dim, HessianMode mode) {
  if (mode == HessianMode::full && dim > kFullHessianCap) {
    throw CapabilityError("full quadratic Hessian is limited to dimension " + std::to_string(kFullHessianCap));
  }
  QuadParams v;
  v.mode = mode;
  const auto d = static_cast<Eigen::Index>(dim);
  v.b = Vector::Zero(d);
  v.z0 = Vector::Zero(d);
  if (mode == HessianMode::diagonal) {
    v.hess_diag = Vector::Zero(d);
  } else {
    v.hess_full = Matrix::Zero(d, d);
  }
  return v;
}

Vector QuadParams::hess_times(const Vector& x) const {
  return mode == HessianMode::diagonal ? Vector(hess_diag.cwiseProduct(x)) : Vector(hess_full * x);
}

double QuadParams::hess_entry(std::size_t j) const {
  auto i = static_cast<Eigen::Index>(j);
  return mode == HessianMode::diagonal ? hess_diag[i] : hess_full(i, i);
}

Vector QuadParams::gradient(std::span<const double> z) const {
  if (z.size() != dim()) throw ArityError("quadratic surrogate: z has the wrong length");
  return b + hess_times(as_vector(z) - z0);
}

Vector estimate_location(const Family& family, std::span<const double> lambda, Rng& rng, std::size_t n) {
  EpsBatch eps = sample_base(family.base_dim(), n, rng);
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(family.latent_dim()));
  for (std::size_t l = 0; l < n; ++l) {
    std::vector<double> z = family.transform<double>(lambda, eps.row(l));
    mean += as_vector(z);
  }
  return mean / static_cast<double>(n);
}

Vector quad_surrogate_grad(const QuadParams& v, const Family& family, std::span<const double> lambda,
                           std::span<const double> eps, ad::Tape& tape) {
  auto f = [&](std::span<const ad::Var> lam) {
    std::vector<ad::Var> z = family.transform<ad::Var>(lam, eps);
    std::vector<double> zv(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) zv[j] = z[j].val;
    Vector g = v.gradient(zv);
    return ad::dot(std::span<const ad::Var>(z), as_span(g));
  };
  std::vector<double> grad = ad::grad(tape, f, lambda).gradient;
  return as_vector(grad);
}

Vector quad_expected_grad_closed_form(const QuadParams& v, const Family& family,
                                      std::span<const double> lambda) {
  if (!family.has_closed_form_moments()) {
    throw CapabilityError("closed-form QuadCV expectation needs a Gaussian family");
  }
  const std::size_t d = family.latent_dim();
  Vector out = Vector::Zero(static_cast<Eigen::Index>(family.param_dim()));
  const Slice& mu_s = family.slice("mu");
  const Slice& ls_s = family.slice("log_sigma");
  Vector mu = as_vector(lambda.subspan(mu_s.offset, d));
  out.segment(static_cast<Eigen::Index>(mu_s.offset), static_cast<Eigen::Index>(d)) = v.b + v.hess_times(mu - v.z0);
  for (std::size_t j = 0; j < d; ++j) {
    double sigma = ad::exp(lambda[ls_s.offset + j]);
    out[static_cast<Eigen::Index>(ls_s.offset + j)] = v.hess_entry(j) * sigma * sigma;
  }
  if (family.kind() == FamilyKind::rank5_gaussian) {
    const Slice& f_s = family.slice("factor");
    const std::size_t k = Family::kFactorRank;
    Eigen::Map<const RowMatrix> factor(lambda.data() + f_s.offset, static_cast<Eigen::Index>(d),
                                       static_cast<Eigen::Index>(k));
    RowMatrix bf(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k));
    if (v.mode == HessianMode::diagonal) {
      bf = v.hess_diag.asDiagonal() * factor;
    } else {
      bf = v.hess_full * factor;
    }
    std::copy(bf.data(), bf.data() + bf.size(), out.data() + f_s.offset);
  }
  return out;
}

Vector quad_expected_grad_empirical(const QuadParams& v, const Family& family,
                                    std::span<const double> lambda, Rng& rng, std::size_t n) {
  EpsBatch eps = sample_base(family.base_dim(), n, rng);
  ad::Tape tape;
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(family.param_dim()));
  for (std::size_t l = 0; l < n; ++l) mean += quad_surrogate_grad(v, family, lambda, eps.row(l), tape);
  return mean / static_cast<double>(n);
}

CvMatrix quad_cv_batch(const QuadParams& v, const Family& family, std::span<const double> lambda,
                       const EpsBatch& eps, const Vector& expectation, ad::Tape& tape) {
  if (expectation.size() != static_cast<Eigen::Index>(family.param_dim())) {
    throw ArityError("QuadCV expectation must have length d_lambda");
  }
  CvMatrix cv;
  cv.kind = CvKind::quad;
  cv.order = 0;
  cv.values.resize(static_cast<Eigen::Index>(eps.size()), expectation.size());
  for (std::size_t l = 0; l < eps.size(); ++l) {
    cv.values.row(static_cast<Eigen::Index>(l)) =
        (expectation - quad_surrogate_grad(v, family, lambda, eps.row(l), tape)).transpose();
  }
  return cv;
}

CvMatrix quad_cv_batch(const QuadParams& v, const Family& family, std::span<const double> lambda,
                       const EpsBatch& eps, ExpectationMode mode, Rng* rng, std::size_t n_expect) {
  Vector expectation;
  if (mode == ExpectationMode::closed_form) {
    expectation = quad_expected_grad_closed_form(v, family, lambda);
  } else {
    if (rng == nullptr) throw std::invalid_argument("empirical QuadCV expectation needs an RNG");
    expectation = quad_expected_grad_empirical(v, family, lambda, *rng, n_expect);
  }
  ad::Tape tape;
  return quad_cv_batch(v, family, lambda, eps, expectation, tape);
}

double quad_objective(const QuadParams& v, const RowMatrix& z, const RowMatrix& grad_f) {
  if (z.rows() != grad_f.rows() || z.rows() == 0) throw ArityError("quad_objective: batch mismatch");
  double total = 0.0;
  for (Eigen::Index l = 0; l < z.rows(); ++l) {
    total += (grad_f.row(l).transpose() - v.gradient(row_span(z, l))).squaredNorm();
  }
  return total / (2.0 * static_cast<double>(z.rows()));
}

QuadParams quad_update_v(const QuadParams& v, const RowMatrix& z, const RowMatrix& grad_f, double lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("quad_update_v: lr must be >= 0");
  if (z.rows() != grad_f.rows() || z.rows() == 0) throw ArityError("quad_update_v: batch mismatch");
  const double inv_l = 1.0 / static_cast<double>(z.rows());
  const auto d = static_cast<Eigen::Index>(v.dim());
  Vector d_b = Vector::Zero(d);
  Vector d_diag = Vector::Zero(d);
  Matrix d_full = v.mode == HessianMode::full ? Matrix::Zero(d, d) : Matrix();
  for (Eigen::Index l = 0; l < z.rows(); ++l) {
    Vector dz = z.row(l).transpose() - v.z0;
    Vector e = grad_f.row(l).transpose() - v.b - v.hess_times(dz);
    d_b -= inv_l * e;
    if (v.mode == HessianMode::diagonal) {
      d_diag -= inv_l * e.cwiseProduct(dz);
    } else {
      d_full -= inv_l * e * dz.transpose();
    }
  }
  QuadParams out = v;
  out.b -= lr * d_b;
  if (v.mode == HessianMode::diagonal) {
    out.hess_diag -= lr * d_diag;
  } else {
    out.hess_full -= lr * 0.5 * (d_full + d_full.transpose());
  }
  if (!out.b.allFinite() || !(out.mode == HessianMode::diagonal ? out.hess_diag.allFinite()
                                                                : out.hess_full.allFinite())) {
    throw NumericError("quad_update_v produced non-finite surrogate parameters");
  }
  return out;
}

void model_gradients_at(const Model& model, const Family& family, std::span<const double> lambda,
                        const EpsBatch& eps, const Minibatch& batch, ad::Tape& tape, RowMatrix& z,
                        RowMatrix& grad_f) {
  const auto d = static_cast<Eigen::Index>(family.latent_dim());
  z.resize(static_cast<Eigen::Index>(eps.size()), d);
  grad_f.resize(static_cast<Eigen::Index>(eps.size()), d);
  for (std::size_t l = 0; l < eps.size(); ++l) {
    auto r = static_cast<Eigen::Index>(l);
    std::vector<double> zl = family.transform<double>(lambda, eps.row(l));
    std::vector<double> gl = log_joint_gradient(model, zl, batch, tape);
    std::copy(zl.begin(), zl.end(), row_span(z, r).begin());
    std::copy(gl.begin(), gl.end(), row_span(grad_f, r).begin());
  }
}

QuadParams quad_update_v(const QuadParams& v, const Model& model, const Family& family,
                         std::span<const double> lambda, const EpsBatch& eps, const Minibatch& batch,
                         double lr, ad::Tape& tape) {
  RowMatrix z, grad_f;
  model_gradients_at(model, family, lambda, eps, batch, tape, z, grad_f);
  return quad_update_v(v, z, grad_f, lr);
}

}  // namespace pathcv
