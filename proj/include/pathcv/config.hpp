#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "pathcv/cv.hpp"
#include "pathcv/estimators.hpp"
#include "pathcv/families.hpp"

namespace pathcv {

enum class ModelKind { logistic, hier_poisson, bnn, toy_gaussian };

std::string_view to_string(ModelKind kind) noexcept;
ModelKind parse_model_kind(std::string_view name);

enum class ExpectationChoice { automatic, closed_form, empirical };

/// Experiment configuration. Optional fields have defaults that depend on
/// other fields and are filled in by finalize_config().
///
/// File format: a flat YAML mapping whose keys are the field names below.
struct RunConfig {
  ModelKind model = ModelKind::toy_gaussian;
  FamilyKind family = FamilyKind::mean_field_gaussian;
  EstimatorKind estimator = EstimatorKind::nocv;

  std::size_t num_samples = 10;
  std::optional<std::size_t> iterations;  // 5000, or 10000 for bnn
  std::size_t eval_every = 50;
  std::size_t variance_every = 50;        // 0 disables the variance ratio
  std::size_t repetitions = 5;
  std::uint64_t seed = 0;
  std::optional<double> gamma_lambda;     // 0.01, or 0.001 for bnn with real_nvp

  double inner_lr = ZvcvGdEstimator::kDefaultLr;
  std::size_t inner_steps = ZvcvGdEstimator::kDefaultSteps;
  int zvcv_order = 1;
  std::optional<double> gamma_v;          // defaults to gamma_lambda
  ExpectationChoice quad_expectation = ExpectationChoice::automatic;
  HessianMode quad_hessian = HessianMode::diagonal;
  std::size_t quad_aux_samples = kQuadAuxSamples;

  std::size_t elbo_samples = 500;
  std::size_t vr_replicates = 100;
  std::size_t lppd_samples = 1000;
  bool lppd = false;

  std::size_t batch_size = 0;             // 0 = full batch
  std::string data_path;
  bool synthetic = false;
  std::size_t synthetic_rows = 0;         // 0 = model-specific default
  std::optional<double> train_fraction;
  std::optional<std::size_t> train_size;
  std::optional<std::size_t> test_size;
  double frisk_arrest_scale = 15.0;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::size_t> latent_dim;  // asserted against the built model
  std::size_t toy_dim = 1;
  std::size_t toy_observations = 10;

  std::string out_dir = "runs";
  std::string run_id;

  std::size_t resolved_iterations() const;
  double resolved_gamma_lambda() const;
  double resolved_gamma_v() const;
  ExpectationMode resolved_expectation() const;
};

/// Parses YAML text. Unknown keys and type mismatches raise ConfigError
/// carrying the key. Does not validate cross-field constraints.
RunConfig parse_config(std::string_view text);
/// Fills dependent defaults and validates; raises ConfigError.
void finalize_config(RunConfig& config);
/// parse_config + finalize_config on a file.
RunConfig load_config(const std::string& path);

/// Resolved configuration as YAML, one key per line.
std::string dump_config(const RunConfig& config);

}  // namespace pathcv
