#include "pathcv/config.hpp"

#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include <yaml-cpp/yaml.h>

#include "pathcv/datasets.hpp"
#include "pathcv/errors.hpp"

namespace pathcv {

std::string_view to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::logistic: return "logistic";
    case ModelKind::hier_poisson: return "hier_poisson";
    case ModelKind::bnn: return "bnn";
    case ModelKind::toy_gaussian: return "toy_gaussian";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "logistic" || name == "logistic_a1a") return ModelKind::logistic;
  if (name == "hier_poisson" || name == "hier_poisson_frisk" || name == "frisk") return ModelKind::hier_poisson;
  if (name == "bnn" || name == "bnn_redwine") return ModelKind::bnn;
  if (name == "toy_gaussian" || name == "toy") return ModelKind::toy_gaussian;
  throw std::invalid_argument("unknown model '" + std::string(name) + "'");
}

namespace {

std::string_view to_string(ExpectationChoice c) {
  switch (c) {
    case ExpectationChoice::automatic: return "auto";
    case ExpectationChoice::closed_form: return "closed_form";
    case ExpectationChoice::empirical: return "empirical";
  }
  return "auto";
}

std::string_view to_string(HessianMode m) { return m == HessianMode::diagonal ? "diagonal" : "full"; }

template <class T>
T scalar_as(const std::string& key, const YAML::Node& node, const char* type_name) {
  if (!node.IsScalar()) throw ConfigError(key, "key '" + key + "': expected " + type_name);
  try {
    return node.as<T>();
  } catch (const YAML::BadConversion&) {
    throw ConfigError(key, "key '" + key + "': expected " + type_name + ", got '" + node.Scalar() + "'");
  }
}

std::size_t count_as(const std::string& key, const YAML::Node& node) {
  auto v = scalar_as<long long>(key, node, "a non-negative integer");
  if (v < 0) throw ConfigError(key, "key '" + key + "': expected a non-negative integer");
  return static_cast<std::size_t>(v);
}

std::uint64_t seed_as(const std::string& key, const YAML::Node& node) {
  return scalar_as<std::uint64_t>(key, node, "an unsigned integer");
}

template <class F>
auto enum_as(const std::string& key, const YAML::Node& node, F parse) {
  auto text = scalar_as<std::string>(key, node, "a string");
  try {
    return parse(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, "key '" + key + "': " + e.what());
  }
}

using Setter = std::function<void(RunConfig&, const std::string&, const YAML::Node&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.model = enum_as(k, n, parse_model_kind); }},
      {"family", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.family = enum_as(k, n, parse_family_kind); }},
      {"estimator", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.estimator = enum_as(k, n, parse_estimator_kind); }},
      {"num_samples", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.num_samples = count_as(k, n); }},
      {"iterations", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.iterations = count_as(k, n); }},
      {"eval_every", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.eval_every = count_as(k, n); }},
      {"variance_every", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.variance_every = count_as(k, n); }},
      {"repetitions", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.repetitions = count_as(k, n); }},
      {"seed", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.seed = seed_as(k, n); }},
      {"gamma_lambda", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.gamma_lambda = scalar_as<double>(k, n, "a number"); }},
      {"inner_lr", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.inner_lr = scalar_as<double>(k, n, "a number"); }},
      {"inner_steps", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.inner_steps = count_as(k, n); }},
      {"zvcv_order", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.zvcv_order = scalar_as<int>(k, n, "an integer"); }},
      {"gamma_v", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.gamma_v = scalar_as<double>(k, n, "a number"); }},
      {"quad_expectation", [](RunConfig& c, const std::string& k, const YAML::Node& n) {
         c.quad_expectation = enum_as(k, n, [](const std::string& s) {
           if (s == "auto") return ExpectationChoice::automatic;
           if (s == "closed_form") return ExpectationChoice::closed_form;
           if (s == "empirical") return ExpectationChoice::empirical;
           throw std::invalid_argument("expected auto, closed_form or empirical");
         });
       }},
      {"quad_hessian", [](RunConfig& c, const std::string& k, const YAML::Node& n) {
         c.quad_hessian = enum_as(k, n, [](const std::string& s) {
           if (s == "diagonal") return HessianMode::diagonal;
           if (s == "full") return HessianMode::full;
           throw std::invalid_argument("expected diagonal or full");
         });
       }},
      {"quad_aux_samples", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.quad_aux_samples = count_as(k, n); }},
      {"elbo_samples", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.elbo_samples = count_as(k, n); }},
      {"vr_replicates", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.vr_replicates = count_as(k, n); }},
      {"lppd_samples", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.lppd_samples = count_as(k, n); }},
      {"lppd", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.lppd = scalar_as<bool>(k, n, "a boolean"); }},
      {"batch_size", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.batch_size = count_as(k, n); }},
      {"data_path", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.data_path = scalar_as<std::string>(k, n, "a string"); }},
      {"synthetic", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.synthetic = scalar_as<bool>(k, n, "a boolean"); }},
      {"synthetic_rows", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.synthetic_rows = count_as(k, n); }},
      {"train_fraction", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.train_fraction = scalar_as<double>(k, n, "a number"); }},
      {"train_size", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.train_size = count_as(k, n); }},
      {"test_size", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.test_size = count_as(k, n); }},
      {"frisk_arrest_scale", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.frisk_arrest_scale = scalar_as<double>(k, n, "a number"); }},
      {"split_seed", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.split_seed = seed_as(k, n); }},
      {"latent_dim", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.latent_dim = count_as(k, n); }},
      {"toy_dim", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.toy_dim = count_as(k, n); }},
      {"toy_observations", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.toy_observations = count_as(k, n); }},
      {"out_dir", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.out_dir = scalar_as<std::string>(k, n, "a string"); }},
      {"run_id", [](RunConfig& c, const std::string& k, const YAML::Node& n) { c.run_id = scalar_as<std::string>(k, n, "a string"); }},
  };
  return table;
}

void require(bool ok, const char* key, const std::string& message) {
  if (!ok) throw ConfigError(key, message);
}

}  // namespace

std::size_t RunConfig::resolved_iterations() const {
  return iterations.value_or(model == ModelKind::bnn ? 10000 : 5000);
}

double RunConfig::resolved_gamma_lambda() const {
  if (gamma_lambda) return *gamma_lambda;
  return model == ModelKind::bnn && family == FamilyKind::real_nvp ? 0.001 : 0.01;
}

double RunConfig::resolved_gamma_v() const { return gamma_v.value_or(resolved_gamma_lambda()); }

ExpectationMode RunConfig::resolved_expectation() const {
  switch (quad_expectation) {
    case ExpectationChoice::closed_form: return ExpectationMode::closed_form;
    case ExpectationChoice::empirical: return ExpectationMode::empirical;
    case ExpectationChoice::automatic: break;
  }
  return family == FamilyKind::real_nvp ? ExpectationMode::empirical : ExpectationMode::closed_form;
}

RunConfig parse_config(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError("", std::string("malformed config: ") + e.what());
  }
  RunConfig config;
  if (root.IsNull()) return config;
  if (!root.IsMap()) throw ConfigError("", "config must be a mapping of key: value pairs");
  const auto& table = setters();
  for (const auto& entry : root) {
    auto key = entry.first.as<std::string>();
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError(key, "unknown config key '" + key + "'");
    it->second(config, key, entry.second);
  }
  return config;
}

void finalize_config(RunConfig& c) {
  if (!c.iterations) c.iterations = c.resolved_iterations();
  if (!c.gamma_lambda) c.gamma_lambda = c.resolved_gamma_lambda();
  if (!c.gamma_v) c.gamma_v = c.resolved_gamma_v();

  require(c.num_samples >= 1, "num_samples", "num_samples must be >= 1");
  require(*c.iterations >= 1, "iterations", "iterations must be >= 1");
  require(c.eval_every >= 1, "eval_every", "eval_every must be >= 1");
  require(c.repetitions >= 1, "repetitions", "repetitions must be >= 1");
  require(*c.gamma_lambda > 0.0, "gamma_lambda", "gamma_lambda must be positive");
  require(c.inner_lr > 0.0, "inner_lr", "inner_lr must be positive");
  require(c.zvcv_order == 1 || c.zvcv_order == 2, "zvcv_order", "zvcv_order must be 1 or 2");
  require(*c.gamma_v >= 0.0, "gamma_v", "gamma_v must be >= 0");
  require(c.quad_aux_samples >= 1, "quad_aux_samples", "quad_aux_samples must be >= 1");
  require(c.elbo_samples >= 1, "elbo_samples", "elbo_samples must be >= 1");
  require(c.vr_replicates >= 2, "vr_replicates", "vr_replicates must be >= 2");
  require(c.lppd_samples >= 1, "lppd_samples", "lppd_samples must be >= 1");
  require(c.frisk_arrest_scale > 0.0, "frisk_arrest_scale", "frisk_arrest_scale must be positive");
  require(c.toy_dim >= 1, "toy_dim", "toy_dim must be >= 1");
  if (c.train_fraction) {
    require(*c.train_fraction > 0.0 && *c.train_fraction <= 1.0, "train_fraction",
            "train_fraction must be in (0, 1]");
  }
  require(c.train_size.has_value() == c.test_size.has_value(), c.train_size ? "test_size" : "train_size",
          "train_size and test_size must be given together");

  if (c.estimator == EstimatorKind::quadcv && c.family == FamilyKind::real_nvp &&
      c.quad_expectation == ExpectationChoice::closed_form) {
    throw ConfigError("quad_expectation",
                      "closed-form QuadCV expectation needs the mean and covariance of q; "
                      "real_nvp has neither (use empirical)");
  }
  if (c.model != ModelKind::toy_gaussian && !c.synthetic) {
    require(!c.data_path.empty(), "data_path",
            "data_path is required for model " + std::string(to_string(c.model)) + " (or set synthetic: true)");
  }
  if (c.model == ModelKind::hier_poisson) {
    require(!c.lppd, "lppd", "hier_poisson has no test split, so lppd is unavailable");
  }
  if (c.run_id.empty()) {
    std::ostringstream id;
    id << to_string(c.model) << '_' << to_string(c.family) << '_' << to_string(c.estimator) << "_L"
       << c.num_samples << "_s" << c.seed;
    c.run_id = id.str();
  }
}

RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError("", e.what());
  }
  RunConfig config = parse_config(text);
  finalize_config(config);
  return config;
}

std::string dump_config(const RunConfig& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "model" << YAML::Value << std::string(to_string(c.model));
  out << YAML::Key << "family" << YAML::Value << std::string(to_string(c.family));
  out << YAML::Key << "estimator" << YAML::Value << std::string(to_string(c.estimator));
  out << YAML::Key << "num_samples" << YAML::Value << c.num_samples;
  out << YAML::Key << "iterations" << YAML::Value << c.resolved_iterations();
  out << YAML::Key << "eval_every" << YAML::Value << c.eval_every;
  out << YAML::Key << "variance_every" << YAML::Value << c.variance_every;
  out << YAML::Key << "repetitions" << YAML::Value << c.repetitions;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "gamma_lambda" << YAML::Value << c.resolved_gamma_lambda();
  out << YAML::Key << "inner_lr" << YAML::Value << c.inner_lr;
  out << YAML::Key << "inner_steps" << YAML::Value << c.inner_steps;
  out << YAML::Key << "zvcv_order" << YAML::Value << c.zvcv_order;
  out << YAML::Key << "gamma_v" << YAML::Value << c.resolved_gamma_v();
  out << YAML::Key << "quad_expectation" << YAML::Value << std::string(to_string(c.quad_expectation));
  out << YAML::Key << "quad_hessian" << YAML::Value << std::string(to_string(c.quad_hessian));
  out << YAML::Key << "quad_aux_samples" << YAML::Value << c.quad_aux_samples;
  out << YAML::Key << "elbo_samples" << YAML::Value << c.elbo_samples;
  out << YAML::Key << "vr_replicates" << YAML::Value << c.vr_replicates;
  out << YAML::Key << "lppd_samples" << YAML::Value << c.lppd_samples;
  out << YAML::Key << "lppd" << YAML::Value << c.lppd;
  out << YAML::Key << "batch_size" << YAML::Value << c.batch_size;
  if (!c.data_path.empty()) out << YAML::Key << "data_path" << YAML::Value << c.data_path;
  out << YAML::Key << "synthetic" << YAML::Value << c.synthetic;
  out << YAML::Key << "synthetic_rows" << YAML::Value << c.synthetic_rows;
  if (c.train_fraction) out << YAML::Key << "train_fraction" << YAML::Value << *c.train_fraction;
  if (c.train_size) out << YAML::Key << "train_size" << YAML::Value << *c.train_size;
  if (c.test_size) out << YAML::Key << "test_size" << YAML::Value << *c.test_size;
  out << YAML::Key << "frisk_arrest_scale" << YAML::Value << c.frisk_arrest_scale;
  if (c.split_seed) out << YAML::Key << "split_seed" << YAML::Value << *c.split_seed;
  if (c.latent_dim) out << YAML::Key << "latent_dim" << YAML::Value << *c.latent_dim;
  out << YAML::Key << "toy_dim" << YAML::Value << c.toy_dim;
  out << YAML::Key << "toy_observations" << YAML::Value << c.toy_observations;
  out << YAML::Key << "out_dir" << YAML::Value << c.out_dir;
  out << YAML::Key << "run_id" << YAML::Value << c.run_id;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace pathcv
