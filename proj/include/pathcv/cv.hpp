#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pathcv/autodiff.hpp"
#include "pathcv/families.hpp"
#include "pathcv/models.hpp"
#include "pathcv/random.hpp"
#include "pathcv/types.hpp"

namespace pathcv {

/// L x d_lambda; row l is I(eps_l; lambda) = grad_lambda r(T(eps_l; lambda); lambda).
using GradBatch = RowMatrix;

enum class CvKind { zvcv, quad };
/// Whether beta was fitted on the samples it is applied to, or on earlier ones.
enum class Provenance { same_samples, lagged };

/// Per-sample control variates.
///
/// zvcv: row l holds the J Stein features of eps_l. The CV matrix of sample l
///       is the block diagonal diag(f_l', ..., f_l') of size d_lambda x
///       (d_lambda J); it is never formed, beta is kept as d_lambda x J.
/// quad: row l holds the single d_lambda-vector c(eps_l); beta is a scalar.
struct CvMatrix {
  CvKind kind = CvKind::zvcv;
  int order = 1;
  RowMatrix values;

  std::size_t size() const noexcept { return static_cast<std::size_t>(values.rows()); }
};

struct BetaCoefficients {
  CvKind kind = CvKind::zvcv;
  Matrix beta;   // d_lambda x J (zvcv) or 1 x 1 (quad)
  Vector alpha;  // least-squares intercept; empty for the moment-matching solver
  Provenance provenance = Provenance::same_samples;
  std::int64_t fitted_at = -1;

  static BetaCoefficients zero(CvKind kind, std::size_t param_dim, std::size_t features);
};

GradBatch pathwise_grad_batch(const Model& model, const Family& family, std::span<const double> lambda,
                              const EpsBatch& eps, const Minibatch& batch, ad::Tape& tape);
GradBatch pathwise_grad_batch(const Model& model, const Family& family, std::span<const double> lambda,
                              const EpsBatch& eps, const Minibatch& batch);

// ---- ZVCV -----------------------------------------------------------------------

inline constexpr std::size_t kZvcvOrder2Cap = 64;

std::size_t zvcv_feature_count(std::size_t dim, int order);
/// Order 1: -eps. Order 2 appends 2 - 2 eps_i^2 for each i, then -2 eps_i eps_j
/// for i < j in lexicographic order.
std::vector<double> zvcv_features(std::span<const double> eps, int order,
                                  std::size_t order2_cap = kZvcvOrder2Cap);
CvMatrix zvcv_cv_matrix(const EpsBatch& eps, int order, std::size_t order2_cap = kZvcvOrder2Cap);

// ---- beta selection and adjustment ----------------------------------------------------

/// Row l: I(eps_l) + C(eps_l) beta. The intercept is not added.
RowMatrix apply_cv(const GradBatch& grads, const CvMatrix& cv, const BetaCoefficients& beta);
/// (1/L) sum_l [I(eps_l) + C(eps_l) beta].
Vector cv_adjusted_estimate(const GradBatch& grads, const CvMatrix& cv, const BetaCoefficients& beta);

/// (1/L) sum_l |I(eps_l) + alpha + C(eps_l) beta|^2.
double ls_objective(const GradBatch& grads, const CvMatrix& cv, const BetaCoefficients& beta);
/// `steps` gradient-descent steps on ls_objective starting from
/// alpha = -mean(I), beta = 0.
BetaCoefficients solve_beta_gd(const GradBatch& grads, const CvMatrix& cv, double lr, std::size_t steps);
/// Exact minimizer of sum_l |I + alpha + C beta|^2 + ridge |beta|^2.
BetaCoefficients solve_beta_ols(const GradBatch& grads, const CvMatrix& cv, double ridge);
/// beta = -E[C'C]^{-1} E[C'I] with empirical moments and no intercept.
BetaCoefficients solve_beta_esn(const GradBatch& grads, const CvMatrix& cv);

/// (1 / (L (L-1))) sum_{l > l'} |a_l - a_l'|^2 over adjusted samples a.
double variance_pairwise(const GradBatch& grads, const CvMatrix& cv, const BetaCoefficients& beta);

// ---- QuadCV ---------------------------------------------------------------------

enum class HessianMode { diagonal, full };
enum class ExpectationMode { closed_form, empirical };

inline constexpr std::size_t kFullHessianCap = 256;
inline constexpr std::size_t kQuadAuxSamples = 100;

/// f~(z) = b'(z - z0) + 0.5 (z - z0)' B (z - z0).
struct QuadParams {
  HessianMode mode = HessianMode::diagonal;
  Vector b;
  Vector hess_diag;  // diagonal mode
  Matrix hess_full;  // full mode, symmetric
  Vector z0;

  static QuadParams zeros(std::size_t dim, HessianMode mode = HessianMode::diagonal);
  std::size_t dim() const noexcept { return static_cast<std::size_t>(b.size()); }
  /// b + B (z - z0).
  Vector gradient(std::span<const double> z) const;
  /// B x.
  Vector hess_times(const Vector& x) const;
  double hess_entry(std::size_t j) const;
};

/// Mean of T(eps; lambda) over `n` fresh base draws.
Vector estimate_location(const Family& family, std::span<const double> lambda, Rng& rng,
                         std::size_t n = kQuadAuxSamples);

/// grad_lambda f~(T(eps; lambda)) = J_T' (b + B (T - z0)).
Vector quad_surrogate_grad(const QuadParams& v, const Family& family, std::span<const double> lambda,
                           std::span<const double> eps, ad::Tape& tape);
/// E grad_lambda f~(T) for the Gaussian families.
Vector quad_expected_grad_closed_form(const QuadParams& v, const Family& family,
                                      std::span<const double> lambda);
Vector quad_expected_grad_empirical(const QuadParams& v, const Family& family,
                                    std::span<const double> lambda, Rng& rng,
                                    std::size_t n = kQuadAuxSamples);

/// Rows c(eps_l) = E grad f~ - grad f~(T(eps_l)). Empirical mode draws the
/// expectation batch from `rng` and never touches `eps`.
CvMatrix quad_cv_batch(const QuadParams& v, const Family& family, std::span<const double> lambda,
                       const EpsBatch& eps, ExpectationMode mode, Rng* rng = nullptr,
                       std::size_t n_expect = kQuadAuxSamples);
/// Same, with the expectation supplied.
CvMatrix quad_cv_batch(const QuadParams& v, const Family& family, std::span<const double> lambda,
                       const EpsBatch& eps, const Vector& expectation, ad::Tape& tape);

/// (1/(2L)) sum_l |g_l - (b + B (z_l - z0))|^2 for rows z_l and gradients g_l.
double quad_objective(const QuadParams& v, const RowMatrix& z, const RowMatrix& grad_f);
/// One gradient step on quad_objective over (b, B); z0 is left as is.
QuadParams quad_update_v(const QuadParams& v, const RowMatrix& z, const RowMatrix& grad_f, double lr);
/// Same, evaluating z = T(eps_l; lambda) and grad_z log_joint at each sample.
QuadParams quad_update_v(const QuadParams& v, const Model& model, const Family& family,
                         std::span<const double> lambda, const EpsBatch& eps, const Minibatch& batch,
                         double lr, ad::Tape& tape);

/// Transformed samples and log-joint gradients at them, as consumed by quad_update_v.
void model_gradients_at(const Model& model, const Family& family, std::span<const double> lambda,
                        const EpsBatch& eps, const Minibatch& batch, ad::Tape& tape, RowMatrix& z,
                        RowMatrix& grad_f);

}  // namespace pathcv
