#include "pathcv/runner.hpp"

#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "pathcv/adam.hpp"
#include "pathcv/errors.hpp"

namespace pathcv {

namespace {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

}  // namespace

// ---- checkpoints ----------------------------------------------------------------

void write_checkpoint(const std::string& path, FamilyKind family, const Vector& lambda) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << "d_lambda=" << lambda.size() << " family=" << to_string(family) << '\n';
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(lambda[i]);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
    out.write(bytes, 8);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::string header;
  std::getline(in, header);
  std::istringstream fields(header);
  std::string size_field, family_field;
  fields >> size_field >> family_field;
  if (size_field.rfind("d_lambda=", 0) != 0 || family_field.rfind("family=", 0) != 0) {
    throw ParseError(1, "checkpoint header must be 'd_lambda=<n> family=<kind>'");
  }
  std::size_t n = 0;
  std::string_view count = std::string_view(size_field).substr(9);
  auto [ptr, ec] = std::from_chars(count.data(), count.data() + count.size(), n);
  if (ec != std::errc() || ptr != count.data() + count.size()) throw ParseError(1, "bad d_lambda value");
  Checkpoint cp;
  try {
    cp.family = parse_family_kind(family_field.substr(7));
  } catch (const std::invalid_argument& e) {
    throw ParseError(1, e.what());
  }
  cp.lambda.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
      throw ArityError("checkpoint holds fewer than " + std::to_string(n) + " values");
    }
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    cp.lambda[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ArityError("checkpoint has trailing bytes");
  return cp;
}

// ---- trace ----------------------------------------------------------------------

std::string format_trace_row(const TraceRow& r) {
  std::ostringstream out;
  out << r.run_id << ',' << r.repetition << ',' << r.iteration << ',' << format_double(r.wall_ms) << ','
      << format_double(r.elbo) << ',' << (r.variance_ratio ? format_double(*r.variance_ratio) : "") << ','
      << (r.test_lppd ? format_double(*r.test_lppd) : "") << ',' << r.estimator << ',' << r.family << ','
      << r.model << ',' << r.num_samples << ',' << r.seed;
  return out.str();
}

// ---- experiment -----------------------------------------------------------------

std::unique_ptr<Model> make_model(const RunConfig& c) {
  const std::uint64_t data_seed = c.split_seed.value_or(c.seed);
  auto text = [&](auto synthesize) { return c.synthetic ? synthesize() : read_text_file(c.data_path); };
  std::unique_ptr<Model> model;
  switch (c.model) {
    case ModelKind::logistic: {
      std::size_t width = c.latent_dim ? *c.latent_dim - 1 : 20;
      Dataset data = parse_libsvm(text([&] {
        return synthetic_libsvm(c.synthetic_rows ? c.synthetic_rows : 200, width, data_seed);
      }));
      if (c.train_size) {
        split_dataset(data, *c.train_size, *c.test_size, data_seed);
      } else {
        split_dataset(data, c.train_fraction.value_or(0.9), data_seed);
      }
      model = std::make_unique<LogisticRegression>(std::move(data));
      break;
    }
    case ModelKind::hier_poisson: {
      Dataset data = load_frisk_csv(text([&] { return synthetic_frisk_csv(data_seed); }), c.frisk_arrest_scale);
      model = std::make_unique<HierPoisson>(std::move(data));
      break;
    }
    case ModelKind::bnn: {
      Dataset data = load_redwine_csv(text([&] {
        return synthetic_redwine_csv(c.synthetic_rows ? c.synthetic_rows : 200, data_seed);
      }));
      if (c.train_size) {
        split_dataset(data, *c.train_size, *c.test_size, data_seed);
      } else if (c.batch_size == 0 && !c.train_fraction && data.rows() >= 200) {
        split_dataset(data, 100, 100, data_seed);
      } else {
        split_dataset(data, c.train_fraction.value_or(0.9), data_seed);
      }
      standardize_features(data);
      model = std::make_unique<BayesianNN>(std::move(data));
      break;
    }
    case ModelKind::toy_gaussian: {
      auto toy = ConjugateGaussian::synthetic(c.toy_dim, c.toy_observations, data_seed);
      if (c.train_fraction || c.train_size) {
        Dataset data = toy.data();
        if (c.train_size) {
          split_dataset(data, *c.train_size, *c.test_size, data_seed);
        } else {
          split_dataset(data, *c.train_fraction, data_seed);
        }
        model = std::make_unique<ConjugateGaussian>(std::move(data));
      } else {
        model = std::make_unique<ConjugateGaussian>(std::move(toy));
      }
      break;
    }
  }
  if (c.latent_dim && *c.latent_dim != model->latent_dim()) {
    throw ConfigError("latent_dim", "configured latent_dim " + std::to_string(*c.latent_dim) +
                                        " does not match the model's " + std::to_string(model->latent_dim()));
  }
  if (c.batch_size > model->data().train.size()) {
    throw ConfigError("batch_size", "batch_size exceeds the training split");
  }
  return model;
}

std::unique_ptr<GradientEstimator> make_estimator(const RunConfig& c, std::size_t latent_dim) {
  switch (c.estimator) {
    case EstimatorKind::nocv: return std::make_unique<NoCvEstimator>();
    case EstimatorKind::zvcv_gd: return std::make_unique<ZvcvGdEstimator>(c.zvcv_order, c.inner_lr, c.inner_steps);
    case EstimatorKind::quadcv:
      return std::make_unique<QuadCvEstimator>(latent_dim, c.resolved_expectation(), c.resolved_gamma_v(),
                                               c.quad_hessian, c.quad_aux_samples);
  }
  throw std::logic_error("unhandled estimator kind");
}

namespace {

/// One outer iteration: estimate, ascend, update estimator state.
void training_step(const RunConfig& c, const Model& model, const Family& family, GradientEstimator& estimator,
                   AdamState& adam, Vector& lambda, std::size_t rep, std::size_t k, ad::Tape& tape) {
  Rng eps_rng = make_rng(c.seed, Stream::estimator, rep, k);
  EpsBatch eps = sample_base(family.base_dim(), c.num_samples, eps_rng);
  Minibatch batch;
  if (c.batch_size == 0) {
    batch = model.full_batch();
  } else {
    Rng batch_rng = make_rng(c.seed, Stream::minibatch, rep, k);
    batch = sample_minibatch(model.data(), c.batch_size, batch_rng);
  }
  Rng location_rng = make_rng(c.seed, Stream::quad_location, rep, k);
  Rng expectation_rng = make_rng(c.seed, Stream::quad_expectation, rep, k);
  const Vector lambda_k = lambda;
  GradBatch grads = pathwise_grad_batch(model, family, as_span(lambda_k), eps, batch, tape);
  StepInput in{model, family, as_span(lambda_k), eps, grads, batch, &location_rng, &expectation_rng,
               static_cast<std::int64_t>(k)};
  StepResult step = estimator.estimate(in);
  adam_step(adam, lambda, step.gradient, static_cast<std::int64_t>(k));
  estimator.update(in, step);
}

}  // namespace

RunSummary run_experiment(const RunConfig& config) {
  RunConfig c = config;
  finalize_config(c);
  std::unique_ptr<Model> model = make_model(c);
  const Family family = Family::make(c.family, model->latent_dim());
  const std::size_t iterations = c.resolved_iterations();
  const bool have_test = !model->data().test.empty();

  std::filesystem::create_directories(c.out_dir);
  RunSummary summary;
  summary.trace_path = (std::filesystem::path(c.out_dir) / (c.run_id + ".csv")).string();
  std::ofstream trace(summary.trace_path, std::ios::binary | std::ios::trunc);
  if (!trace) throw std::runtime_error("cannot write trace '" + summary.trace_path + "'");
  trace << kTraceHeader << '\n';

  TraceRow base;
  base.run_id = c.run_id;
  base.estimator = std::string(to_string(c.estimator));
  base.family = std::string(to_string(c.family));
  base.model = std::string(to_string(c.model));
  base.num_samples = c.num_samples;
  base.seed = c.seed;

  ad::Tape tape;
  for (std::size_t rep = 0; rep < c.repetitions; ++rep) {
    Rng init_rng = make_rng(c.seed, Stream::init, rep);
    Vector lambda = family.initial_params(init_rng);
    auto estimator = make_estimator(c, model->latent_dim());
    AdamState adam(family.param_dim(), c.resolved_gamma_lambda());
    double wall_ms = 0.0;
    std::size_t k = 0;
    try {
      for (k = 0;; ++k) {
        if (k % c.eval_every == 0 || k == iterations) {
          TraceRow row = base;
          row.repetition = rep;
          row.iteration = k;
          row.wall_ms = wall_ms;
          Rng elbo_rng = make_rng(c.seed, Stream::eval_elbo, rep, k);
          row.elbo = eval_elbo(*model, family, as_span(lambda), elbo_rng, c.elbo_samples).value;
          if (c.variance_every > 0 && k % c.variance_every == 0) {
            Rng vr_rng = make_rng(c.seed, Stream::eval_variance, rep, k);
            row.variance_ratio = variance_ratio(*model, family, as_span(lambda), *estimator, c.num_samples, vr_rng,
                                                c.batch_size, c.vr_replicates, static_cast<std::int64_t>(k))
                                     .ratio;
          }
          if (c.lppd && have_test) {
            Rng lppd_rng = make_rng(c.seed, Stream::eval_lppd, rep, k);
            row.test_lppd = test_lppd(*model, family, as_span(lambda), lppd_rng, c.lppd_samples);
          }
          trace << format_trace_row(row) << '\n';
          trace.flush();
        }
        if (k == iterations) break;
        auto start = std::chrono::steady_clock::now();
        training_step(c, *model, family, *estimator, adam, lambda, rep, k, tape);
        wall_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      }
      std::string ckpt = (std::filesystem::path(c.out_dir) / (c.run_id + "_rep" + std::to_string(rep) + ".ckpt")).string();
      write_checkpoint(ckpt, c.family, lambda);
      summary.checkpoints.push_back(ckpt);
      summary.final_params.push_back(lambda);
    } catch (const NumericError& e) {
      TraceRow row = base;
      row.repetition = rep;
      row.iteration = k;
      row.wall_ms = wall_ms;
      row.elbo = std::numeric_limits<double>::quiet_NaN();
      trace << format_trace_row(row) << '\n';
      trace.flush();
      summary.failures.push_back("repetition " + std::to_string(rep) + " failed at iteration " +
                                 std::to_string(k) + ": " + e.what());
      summary.final_params.emplace_back();
    }
  }
  return summary;
}

VarianceRatioReport measure_variance_ratio(const RunConfig& config, const Vector& lambda, std::size_t warmup) {
  RunConfig c = config;
  finalize_config(c);
  std::unique_ptr<Model> model = make_model(c);
  const Family family = Family::make(c.family, model->latent_dim());
  if (static_cast<std::size_t>(lambda.size()) != family.param_dim()) {
    throw ArityError("checkpoint has " + std::to_string(lambda.size()) + " parameters, family expects " +
                     std::to_string(family.param_dim()));
  }
  auto estimator = make_estimator(c, model->latent_dim());
  if (estimator->kind() == EstimatorKind::quadcv) {
    // Fit the surrogate and beta at this lambda without moving it.
    ad::Tape tape;
    const std::size_t rep = c.repetitions;  // a stream no training repetition uses
    for (std::size_t k = 0; k < warmup; ++k) {
      Rng eps_rng = make_rng(c.seed, Stream::estimator, rep, k);
      EpsBatch eps = sample_base(family.base_dim(), c.num_samples, eps_rng);
      Minibatch batch = model->full_batch();
      if (c.batch_size > 0) {
        Rng batch_rng = make_rng(c.seed, Stream::minibatch, rep, k);
        batch = sample_minibatch(model->data(), c.batch_size, batch_rng);
      }
      Rng location_rng = make_rng(c.seed, Stream::quad_location, rep, k);
      Rng expectation_rng = make_rng(c.seed, Stream::quad_expectation, rep, k);
      GradBatch grads = pathwise_grad_batch(*model, family, as_span(lambda), eps, batch, tape);
      StepInput in{*model, family, as_span(lambda), eps, grads, batch, &location_rng, &expectation_rng,
                   static_cast<std::int64_t>(k)};
      estimator->update(in, estimator->estimate(in));
    }
  }
  Rng vr_rng = make_rng(c.seed, Stream::eval_variance, c.repetitions, warmup);
  return variance_ratio(*model, family, as_span(lambda), *estimator, c.num_samples, vr_rng, c.batch_size,
                        c.vr_replicates, static_cast<std::int64_t>(warmup));
}

}  // namespace pathcv
