#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pathcv/config.hpp"
#include "pathcv/estimators.hpp"
#include "pathcv/eval.hpp"
#include "pathcv/models.hpp"

namespace pathcv {

// ---- checkpoints ----------------------------------------------------------------
//
// One text line "d_lambda=<n> family=<kind>\n" followed by n little-endian
// IEEE-754 doubles.

struct Checkpoint {
  FamilyKind family = FamilyKind::mean_field_gaussian;
  Vector lambda;
};

void write_checkpoint(const std::string& path, FamilyKind family, const Vector& lambda);
Checkpoint read_checkpoint(const std::string& path);

// ---- trace ----------------------------------------------------------------------

inline constexpr std::string_view kTraceHeader =
    "run_id,repetition,iteration,wall_ms,elbo,variance_ratio,test_lppd,estimator,family,model,"
    "num_samples,seed";

struct TraceRow {
  std::string run_id;
  std::size_t repetition = 0;
  std::size_t iteration = 0;
  double wall_ms = 0.0;
  double elbo = 0.0;  // NaN marks a failed repetition
  std::optional<double> variance_ratio;
  std::optional<double> test_lppd;
  std::string estimator;
  std::string family;
  std::string model;
  std::size_t num_samples = 0;
  std::uint64_t seed = 0;
};

/// CSV line without the trailing newline; absent optionals are empty fields.
std::string format_trace_row(const TraceRow& row);

// ---- experiment -----------------------------------------------------------------

/// Loads (or synthesizes) the dataset, applies the split and builds the model.
std::unique_ptr<Model> make_model(const RunConfig& config);
std::unique_ptr<GradientEstimator> make_estimator(const RunConfig& config, std::size_t latent_dim);

struct RunSummary {
  std::string trace_path;
  std::vector<std::string> checkpoints;
  std::vector<Vector> final_params;   // per repetition; empty when it failed
  std::vector<std::string> failures;  // one message per failed repetition
};

/// For each repetition: initialize lambda, then per iteration sample eps,
/// compute the pathwise gradients, form the estimator's gradient, take an
/// Adam ascent step and update the estimator state. Evaluation rows are
/// written at every multiple of eval_every and at the last iteration.
/// A NumericError ends the repetition with a failure row.
RunSummary run_experiment(const RunConfig& config);

/// Number of estimator updates run at a fixed lambda before a one-off
/// variance-ratio measurement, so QuadCV's surrogate and beta are fitted.
inline constexpr std::size_t kVarianceWarmup = 200;

/// One-off variance ratio at a fixed lambda (the `variance` CLI command).
VarianceRatioReport measure_variance_ratio(const RunConfig& config, const Vector& lambda,
                                           std::size_t warmup = kVarianceWarmup);

}  // namespace pathcv
