#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "pathcv/adam.hpp"
#include "pathcv/config.hpp"
#include "pathcv/errors.hpp"
#include "pathcv/runner.hpp"

using namespace pathcv;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("pathcv_runner_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

RunConfig toy_config(const fs::path& out) {
  RunConfig c = parse_config(
      "model: toy_gaussian\n"
      "family: mean_field_gaussian\n"
      "estimator: nocv\n"
      "toy_dim: 2\n"
      "iterations: 10\n"
      "eval_every: 5\n"
      "variance_every: 5\n"
      "vr_replicates: 5\n"
      "elbo_samples: 20\n"
      "repetitions: 2\n"
      "seed: 3\n");
  c.out_dir = out.string();
  return c;
}

std::string config_error_key(const std::string& text) {
  try {
    RunConfig c = parse_config(text);
    finalize_config(c);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<none>";
}

std::string config_error_message(const std::string& text) {
  try {
    RunConfig c = parse_config(text);
    finalize_config(c);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "<none>";
}

}  // namespace

TEST_CASE("Adam first step is lr times the gradient sign") {
  AdamState s(3, 0.01);
  Vector lambda = Vector::Zero(3);
  Vector g(3);
  g << 2.0, -0.5, 1e-3;
  adam_step(s, lambda, g, 0);
  for (int j = 0; j < 3; ++j) {
    double expected = 0.01 * g[j] / (std::abs(g[j]) + 1e-8);
    CHECK(lambda[j] == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(s.t == 1);
}

TEST_CASE("Adam with zero gradients leaves lambda alone") {
  AdamState s(2, 0.1);
  Vector lambda(2);
  lambda << 0.3, -0.7;
  Vector before = lambda;
  for (int k = 0; k < 50; ++k) adam_step(s, lambda, Vector::Zero(2), k);
  CHECK(lambda == before);
}

TEST_CASE("Adam rejects non-finite gradients and names the iteration") {
  AdamState s(2);
  Vector lambda = Vector::Zero(2);
  Vector g(2);
  g << 1.0, std::nan("");
  try {
    adam_step(s, lambda, g, 17);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("17") != std::string::npos);
  }
}

TEST_CASE("Adam matches the bias-corrected recursion") {
  AdamState s(1, 0.05);
  Vector lambda = Vector::Zero(1);
  double m = 0.0, v = 0.0, x = 0.0;
  const double grads[4] = {1.0, -2.0, 0.5, 3.0};
  for (int t = 1; t <= 4; ++t) {
    double g = grads[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x += 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    adam_step(s, lambda, Vector::Constant(1, g), t - 1);
    CHECK(lambda[0] == doctest::Approx(x).epsilon(1e-14));
  }
}

TEST_CASE("config defaults") {
  RunConfig c = parse_config("model: toy_gaussian\nfamily: mean_field_gaussian\nestimator: quadcv\n");
  finalize_config(c);
  CHECK(c.num_samples == 10);
  CHECK(c.resolved_iterations() == 5000);
  CHECK(c.resolved_gamma_lambda() == 0.01);
  CHECK(c.resolved_gamma_v() == 0.01);
  CHECK(c.resolved_expectation() == ExpectationMode::closed_form);
  CHECK(c.inner_lr == 1e-3);
  CHECK(c.inner_steps == 4);
  CHECK(c.elbo_samples == 500);
  CHECK(c.vr_replicates == 100);
  CHECK(c.lppd_samples == 1000);
  CHECK(c.quad_aux_samples == 100);
  CHECK(c.run_id == "toy_gaussian_mean_field_gaussian_quadcv_L10_s0");

  RunConfig b = parse_config("model: bnn\nfamily: real_nvp\nestimator: quadcv\nsynthetic: true\n");
  finalize_config(b);
  CHECK(b.resolved_iterations() == 10000);
  CHECK(b.resolved_gamma_lambda() == 0.001);
  CHECK(b.resolved_expectation() == ExpectationMode::empirical);
}

TEST_CASE("config errors carry the key") {
  CHECK(config_error_key("model: toy_gaussian\nbogus: 1\n") == "bogus");
  CHECK(config_error_key("model: toy_gaussian\nnum_samples: ten\n") == "num_samples");
  CHECK(config_error_key("model: toy_gaussian\nlppd: maybe\n") == "lppd");
  CHECK(config_error_key("model: logistic\n") == "data_path");
  CHECK(config_error_key("model: toy_gaussian\ngamma_lambda: -1\n") == "gamma_lambda");
  CHECK(config_error_message("model: toy_gaussian\ngamma_lambda: -1\n") == "gamma_lambda must be positive");
  CHECK(config_error_key("model: toy_gaussian\nfamily: real_nvp\nestimator: quadcv\nquad_expectation: closed_form\n") ==
        "quad_expectation");
  CHECK(config_error_key("model: hier_poisson\nsynthetic: true\nlppd: true\n") == "lppd");
  CHECK(config_error_key("model: toy_gaussian\nfamily: tophat\n") == "family");
  CHECK(config_error_key("model: toy_gaussian\nzvcv_order: 3\n") == "zvcv_order");
  CHECK(config_error_key("model: toy_gaussian\n") == "<none>");
  CHECK_THROWS_AS(load_config("/nonexistent/config.yaml"), ConfigError);
}

TEST_CASE("dumped config parses back to the same values") {
  RunConfig c = parse_config("model: toy_gaussian\nestimator: zvcv_gd\nzvcv_order: 2\nseed: 12\ngamma_v: 0.5\n");
  finalize_config(c);
  RunConfig d = parse_config(dump_config(c));
  finalize_config(d);
  CHECK(d.estimator == EstimatorKind::zvcv_gd);
  CHECK(d.zvcv_order == 2);
  CHECK(d.seed == 12);
  CHECK(d.resolved_gamma_v() == 0.5);
  CHECK(d.run_id == c.run_id);
}

TEST_CASE("trace rows") {
  TraceRow r;
  r.run_id = "x";
  r.repetition = 1;
  r.iteration = 50;
  r.wall_ms = 1.5;
  r.elbo = -3.25;
  r.variance_ratio = 0.5;
  r.estimator = "quadcv";
  r.family = "mean_field_gaussian";
  r.model = "toy_gaussian";
  r.num_samples = 10;
  r.seed = 7;
  CHECK(format_trace_row(r) == "x,1,50,1.5,-3.25,0.5,,quadcv,mean_field_gaussian,toy_gaussian,10,7");
  r.elbo = std::nan("");
  r.variance_ratio.reset();
  CHECK(format_trace_row(r) == "x,1,50,1.5,nan,,,quadcv,mean_field_gaussian,toy_gaussian,10,7");
}

TEST_CASE("run writes one row per evaluation point") {
  fs::path out = scratch_dir("count");
  RunSummary s = run_experiment(toy_config(out));
  std::vector<std::string> lines = read_lines(s.trace_path);
  REQUIRE(lines.size() == 1 + 2 * (10 / 5 + 1));
  CHECK(lines[0] == kTraceHeader);
  std::vector<std::string> iters;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = fields(lines[i]);
    REQUIRE(f.size() == 12);
    iters.push_back(f[2]);
    CHECK_FALSE(f[5].empty());
    CHECK(f[6].empty());
  }
  CHECK(iters == std::vector<std::string>{"0", "5", "10", "0", "5", "10"});
  CHECK(s.checkpoints.size() == 2);
  CHECK(s.failures.empty());
}

TEST_CASE("the last iteration is evaluated when it is not a multiple of eval_every") {
  fs::path out = scratch_dir("tail");
  RunConfig c = toy_config(out);
  c.iterations = 7;
  c.repetitions = 1;
  std::vector<std::string> lines = read_lines(run_experiment(c).trace_path);
  REQUIRE(lines.size() == 4);
  CHECK(fields(lines[3])[2] == "7");
}

TEST_CASE("ZVCV with zero inner steps follows the no-CV trajectory") {
  fs::path out = scratch_dir("equiv");
  RunConfig a = toy_config(out);
  a.run_id = "a";
  RunConfig b = a;
  b.run_id = "b";
  b.estimator = EstimatorKind::zvcv_gd;
  b.inner_steps = 0;
  RunSummary sa = run_experiment(a), sb = run_experiment(b);
  for (std::size_t r = 0; r < 2; ++r) CHECK(sa.final_params[r] == sb.final_params[r]);
}

TEST_CASE("runs are reproducible apart from wall time") {
  fs::path out = scratch_dir("repro");
  for (EstimatorKind k : {EstimatorKind::nocv, EstimatorKind::zvcv_gd, EstimatorKind::quadcv}) {
    RunConfig c = toy_config(out);
    c.estimator = k;
    c.run_id = "first";
    RunSummary s1 = run_experiment(c);
    std::vector<std::string> l1 = read_lines(s1.trace_path);
    c.run_id = "second";
    RunSummary s2 = run_experiment(c);
    std::vector<std::string> l2 = read_lines(s2.trace_path);
    REQUIRE(l1.size() == l2.size());
    for (std::size_t i = 1; i < l1.size(); ++i) {
      auto f1 = fields(l1[i]), f2 = fields(l2[i]);
      for (std::size_t j = 1; j < f1.size(); ++j) {
        if (j != 3) CHECK(f1[j] == f2[j]);
      }
    }
    for (std::size_t r = 0; r < 2; ++r) CHECK(s1.final_params[r] == s2.final_params[r]);
  }
}

TEST_CASE("empirical QuadCV runs on real NVP with minibatches") {
  fs::path out = scratch_dir("nvp");
  RunConfig c = parse_config(
      "model: logistic\nfamily: real_nvp\nestimator: quadcv\nsynthetic: true\nsynthetic_rows: 60\n"
      "latent_dim: 6\nbatch_size: 10\niterations: 4\neval_every: 2\nvariance_every: 2\nvr_replicates: 4\n"
      "elbo_samples: 10\nlppd: true\nlppd_samples: 10\nrepetitions: 1\n");
  c.out_dir = out.string();
  RunSummary s = run_experiment(c);
  std::vector<std::string> lines = read_lines(s.trace_path);
  REQUIRE(lines.size() == 4);
  for (std::size_t i = 1; i < lines.size(); ++i) CHECK_FALSE(fields(lines[i])[6].empty());
}

TEST_CASE("a numeric failure ends the repetition with a failure row") {
  fs::path out = scratch_dir("fail");
  RunConfig c = parse_config(
      "model: hier_poisson\nfamily: mean_field_gaussian\nestimator: nocv\nsynthetic: true\n"
      "gamma_lambda: 200\niterations: 20\neval_every: 10\nvariance_every: 0\nelbo_samples: 5\nrepetitions: 2\n");
  c.out_dir = out.string();
  RunSummary s = run_experiment(c);
  CHECK(s.failures.size() == 2);
  CHECK(s.checkpoints.empty());
  std::vector<std::string> lines = read_lines(s.trace_path);
  std::size_t nan_rows = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) nan_rows += fields(lines[i])[4] == "nan";
  CHECK(nan_rows == 2);
}

TEST_CASE("checkpoint round trip") {
  fs::path out = scratch_dir("ckpt");
  Vector lambda(5);
  lambda << 0.1, -2.5, 1e-300, 3.0e10, -0.0;
  std::string path = (out / "x.ckpt").string();
  write_checkpoint(path, FamilyKind::rank5_gaussian, lambda);
  Checkpoint c = read_checkpoint(path);
  CHECK(c.family == FamilyKind::rank5_gaussian);
  CHECK(c.lambda == lambda);
  CHECK(std::signbit(c.lambda[4]));

  std::string truncated = (out / "t.ckpt").string();
  {
    std::ofstream o(truncated, std::ios::binary);
    o << "d_lambda=5 family=mean_field_gaussian\n" << std::string(16, '\0');
  }
  CHECK_THROWS_AS(read_checkpoint(truncated), ArityError);
  std::string bad = (out / "b.ckpt").string();
  {
    std::ofstream o(bad, std::ios::binary);
    o << "hello\n";
  }
  CHECK_THROWS_AS(read_checkpoint(bad), ParseError);
}

TEST_CASE("one-off variance ratio at a checkpoint") {
  fs::path out = scratch_dir("vr");
  RunConfig c = toy_config(out);
  c.estimator = EstimatorKind::quadcv;
  c.iterations = 200;
  c.eval_every = 200;
  c.repetitions = 1;
  RunSummary s = run_experiment(c);
  Checkpoint cp = read_checkpoint(s.checkpoints[0]);
  c.vr_replicates = 50;
  VarianceRatioReport r = measure_variance_ratio(c, cp.lambda, 100);
  CHECK(r.replicates == 50);
  CHECK(r.ratio < 0.5);
  CHECK_THROWS_AS(measure_variance_ratio(c, Vector::Zero(3), 0), ArityError);
}

TEST_CASE("model construction checks") {
  RunConfig c = parse_config("model: logistic\nsynthetic: true\nlatent_dim: 21\n");
  finalize_config(c);
  CHECK(make_model(c)->latent_dim() == 21);

  RunConfig f = parse_config("model: hier_poisson\nsynthetic: true\n");
  finalize_config(f);
  auto m = make_model(f);
  CHECK(m->latent_dim() == 37);
  CHECK(m->data().test.empty());
  f.latent_dim = 30;
  CHECK_THROWS_AS(make_model(f), ConfigError);

  RunConfig b = parse_config("model: bnn\nsynthetic: true\nsynthetic_rows: 300\n");
  finalize_config(b);
  auto bn = make_model(b);
  CHECK(bn->latent_dim() == 653);
  CHECK(bn->data().train.size() == 100);
  CHECK(bn->data().test.size() == 100);
}
