// Command-line front end: run experiments, validate configs, measure
// variance ratios at a saved lambda.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pathcv/config.hpp"
#include "pathcv/errors.hpp"
#include "pathcv/runner.hpp"

namespace {

struct Overrides {
  std::optional<std::string> model, family, estimator, out;
  std::optional<std::size_t> num_samples, iters, reps;
  std::optional<std::uint64_t> seed;
};

pathcv::RunConfig build_config(const std::string& path, const Overrides& o) {
  pathcv::RunConfig c = pathcv::parse_config(pathcv::read_text_file(path));
  auto set_enum = [](const char* key, const std::string& value, auto parse, auto& field) {
    try {
      field = parse(value);
    } catch (const std::invalid_argument& e) {
      throw pathcv::ConfigError(key, e.what());
    }
  };
  if (o.model) set_enum("model", *o.model, pathcv::parse_model_kind, c.model);
  if (o.family) set_enum("family", *o.family, pathcv::parse_family_kind, c.family);
  if (o.estimator) set_enum("estimator", *o.estimator, pathcv::parse_estimator_kind, c.estimator);
  if (o.num_samples) c.num_samples = *o.num_samples;
  if (o.iters) c.iterations = *o.iters;
  if (o.reps) c.repetitions = *o.reps;
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  pathcv::finalize_config(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pathwise-gradient variational inference with control variates"};
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint_path;
  Overrides o;

  auto* run = app.add_subcommand("run", "Run an experiment and write its trace CSV");
  run->add_option("--config", config_path, "YAML config file")->required()->check(CLI::ExistingFile);
  run->add_option("--model", o.model, "logistic | hier_poisson | bnn | toy_gaussian");
  run->add_option("--family", o.family, "mean_field_gaussian | rank5_gaussian | real_nvp");
  run->add_option("--estimator", o.estimator, "nocv | zvcv_gd | quadcv");
  run->add_option("--num-samples", o.num_samples, "gradient samples L per iteration");
  run->add_option("--iters", o.iters, "Adam iterations");
  run->add_option("--reps", o.reps, "repetitions");
  run->add_option("--seed", o.seed, "base seed");
  run->add_option("--out", o.out, "output directory");

  auto* validate = app.add_subcommand("validate", "Check a config and print it with defaults resolved");
  validate->add_option("--config", config_path, "YAML config file")->required()->check(CLI::ExistingFile);

  auto* variance = app.add_subcommand("variance", "Variance ratio of the configured estimator at a checkpoint");
  variance->add_option("--config", config_path, "YAML config file")->required()->check(CLI::ExistingFile);
  variance->add_option("--checkpoint", checkpoint_path, "lambda checkpoint")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      pathcv::RunConfig c = build_config(config_path, o);
      pathcv::RunSummary s = pathcv::run_experiment(c);
      for (const auto& f : s.failures) std::cerr << "warning: " << f << '\n';
      std::cout << s.trace_path << '\n';
    } else if (*validate) {
      pathcv::RunConfig c = build_config(config_path, o);
      std::cout << pathcv::dump_config(c);
    } else if (*variance) {
      pathcv::RunConfig c = build_config(config_path, o);
      pathcv::Checkpoint cp = pathcv::read_checkpoint(checkpoint_path);
      if (cp.family != c.family) {
        throw pathcv::ConfigError("family", "checkpoint family " + std::string(pathcv::to_string(cp.family)) +
                                                " differs from the config's");
      }
      pathcv::VarianceRatioReport r = pathcv::measure_variance_ratio(c, cp.lambda);
      nlohmann::json out = {{"estimator", pathcv::to_string(c.estimator)},
                            {"num_samples", c.num_samples},
                            {"replicates", r.replicates},
                            {"var_nocv", r.var_nocv},
                            {"var_cv", r.var_cv},
                            {"ratio", r.ratio}};
      std::cout << out.dump(2) << '\n';
    }
  } catch (const pathcv::ConfigError& e) {
    std::cerr << "config error";
    if (!e.key().empty()) std::cerr << " [" << e.key() << "]";
    std::cerr << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
