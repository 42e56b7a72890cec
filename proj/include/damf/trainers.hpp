#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "damf/estimators.hpp"
#include "damf/optim.hpp"
#include "damf/rng.hpp"
#include "damf/types.hpp"

namespace damf {

inline constexpr int kLogCadence = 50;
inline constexpr int kEarlyStopPatience = 10;

struct TraceRecord {
  int iteration = 0;
  double naive = 0.0;
  double pmd = 0.0;
  double complexity = 0.0;
  double confidence = 0.0;
  double bound = 0.0;
  std::optional<double> ideal;
};

struct TrainTrace {
  std::vector<TraceRecord> records;
};

struct TraceOptions {
  double confidence = 0.05;                 // delta for the logged bound
  int cadence = kLogCadence;
  const Matrix* true_ratings = nullptr;     // enables the ideal-loss column
};

// One bound evaluation: all four Theorem-style components on clipped
// predictions. The MNAR side of the PMD term is the full observed set; the
// MCAR side is a fresh uniform sample of the same size M.
inline TraceRecord trace_bound(const FactorModel& model, const FactorModel& adversary,
                               const InteractionSet& data, const BoundConfig& bound_cfg,
                               Rng& rng, const Matrix* true_ratings = nullptr) {
  const RatingScale& scale = data.scale();
  TraceRecord rec;
  rec.naive = naive_loss(data, model, &scale);

  LossBatch mnar_full;
  mnar_full.pairs.reserve(data.size());
  for (const Triple& t : data.triples()) mnar_full.pairs.emplace_back(t.user, t.item);
  LossBatch mcar_sample = sample_uniform_pairs(data.num_users(), data.num_items(),
                                               static_cast<int>(data.size()), rng);
  rec.pmd = std::max(0.0, pmd_gap(model, adversary, mcar_sample, mnar_full, &scale));

  const double rad =
      complexity_surrogate(bound_cfg.max_norm_bound, data.num_users(), data.num_items(),
                           data.size());
  rec.complexity = complexity_term(bound_cfg.lipschitz, rad, rad);
  rec.confidence = confidence_term(scale.loss_bound(), bound_cfg.confidence, data.size());
  rec.bound = bound_value(rec.naive, rec.pmd, rec.complexity, rec.confidence).total();
  if (true_ratings) rec.ideal = ideal_loss(*true_ratings, model, &scale);
  return rec;
}

namespace detail {

// Stop once the validation naive loss fails to improve for
// kEarlyStopPatience consecutive checks.
struct EarlyStop {
  double best = std::numeric_limits<double>::infinity();
  int stall = 0;

  bool update(double value) {
    if (value < best - 1e-12) {
      best = value;
      stall = 0;
    } else {
      ++stall;
    }
    return stall >= kEarlyStopPatience;
  }
};

struct ModelOptimizer {
  AdamState user_state;
  AdamState item_state;

  explicit ModelOptimizer(const FactorModel& model)
      : user_state(model.user_factors().rows(), model.user_factors().cols()),
        item_state(model.item_factors().rows(), model.item_factors().cols()) {}

  void descend(FactorModel& model, const FactorGradients& g, double lr) {
    adam_step(model.user_factors(), g.user, user_state, lr);
    adam_step(model.item_factors(), g.item, item_state, lr);
  }

  void ascend(FactorModel& model, const FactorGradients& g, double lr) {
    adam_step_ascend(model.user_factors(), g.user, user_state, lr);
    adam_step_ascend(model.item_factors(), g.item, item_state, lr);
  }
};

}  // namespace detail

// Weights per observed pair for the three weighted trainers: 1 for the
// naive loss, 1/P_hat for IPS and DR.
enum class BatchWeighting { Uniform, InversePropensity };

namespace detail {

inline std::vector<double> batch_weights(const LossBatch& batch, BatchWeighting weighting,
                                         const PropensityMap* propensity) {
  std::vector<double> w(batch.size(), 1.0);
  if (weighting == BatchWeighting::InversePropensity) {
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const double p = propensity->at(batch.pairs[b].first, batch.pairs[b].second);
      if (!(p > 0.0))
        throw std::invalid_argument("train: nonpositive propensity on an observed pair");
      w[b] = 1.0 / p;
    }
  }
  return w;
}

inline FactorModel train_weighted_mf(const InteractionSet& data, const TrainConfig& config,
                                     BatchWeighting weighting, const PropensityMap* propensity,
                                     const InteractionSet* validation) {
  config.validate();
  FactorModel model = init_factors(data.num_users(), data.num_items(), config.dim,
                                   config.seed, rng_stream::kInitModel);
  ModelOptimizer opt(model);
  Rng rng_batch(config.seed, rng_stream::kMnarBatch);
  EarlyStop stopper;
  for (int it = 1; it <= config.max_iterations; ++it) {
    const LossBatch batch = sample_observed_batch(data, config.batch_size, rng_batch);
    const std::vector<double> weights = batch_weights(batch, weighting, propensity);
    for (int step = 0; step < config.inner_steps; ++step)
      opt.descend(model, grad_weighted_mf(model, batch, weights, config.l2),
                  config.learning_rate);
    if (validation && it % kLogCadence == 0 &&
        stopper.update(naive_loss(*validation, model)))
      break;
  }
  return model;
}

}  // namespace detail

// Naive matrix factorization: mini-batch Adam on Eq.-(2)-style loss + L2.
inline FactorModel train_mf(const InteractionSet& data, const TrainConfig& config,
                            const InteractionSet* validation = nullptr) {
  return detail::train_weighted_mf(data, config, BatchWeighting::Uniform, nullptr, validation);
}

// IPS-weighted matrix factorization. Batch losses are weighted by 1/P_hat,
// which matches the IPS objective up to the positive constant mn/M (the
// constant only rescales the data term against the L2 penalty, and makes
// P_hat = 1 collapse to the naive trainer exactly).
inline FactorModel train_mf_ips(const InteractionSet& data, const PropensityMap& propensity,
                                const TrainConfig& config,
                                const InteractionSet* validation = nullptr) {
  return detail::train_weighted_mf(data, config, BatchWeighting::InversePropensity,
                                   &propensity, validation);
}

// Doubly robust joint learning: an imputation factor model fits the current
// squared errors on observed pairs while the prediction model descends the
// DR objective. With loss imputation the imputation term is constant in the
// prediction parameters, so the prediction updates coincide with IPS updates
// on the shared batch schedule; the imputation model rides along and is
// what dr_loss-based model selection consumes.
inline FactorModel train_mf_dr(const InteractionSet& data, const PropensityMap& propensity,
                               const TrainConfig& config,
                               const InteractionSet* validation = nullptr) {
  config.validate();
  FactorModel model = init_factors(data.num_users(), data.num_items(), config.dim,
                                   config.seed, rng_stream::kInitModel);
  FactorModel imputation = init_factors(data.num_users(), data.num_items(), config.dim,
                                        config.seed, rng_stream::kInitAuxiliary);
  detail::ModelOptimizer opt(model);
  detail::ModelOptimizer opt_imp(imputation);
  Rng rng_batch(config.seed, rng_stream::kMnarBatch);
  detail::EarlyStop stopper;
  for (int it = 1; it <= config.max_iterations; ++it) {
    const LossBatch batch = sample_observed_batch(data, config.batch_size, rng_batch);
    const std::vector<double> weights =
        detail::batch_weights(batch, BatchWeighting::InversePropensity, &propensity);
    const std::vector<double> ones(batch.size(), 1.0);
    for (int step = 0; step < config.inner_steps; ++step) {
      LossBatch error_batch = batch;
      for (std::size_t b = 0; b < batch.size(); ++b)
        error_batch.ratings[b] =
            point_loss(batch.ratings[b], model.predict(batch.pairs[b].first,
                                                       batch.pairs[b].second));
      opt_imp.descend(imputation, grad_weighted_mf(imputation, error_batch, ones, config.l2),
                      config.learning_rate);
      opt.descend(model, grad_weighted_mf(model, batch, weights, config.l2),
                  config.learning_rate);
    }
    if (validation && it % kLogCadence == 0 &&
        stopper.update(naive_loss(*validation, model)))
      break;
  }
  return model;
}

// CausE: MNAR and MCAR factor models trained on their own naive losses with
// a Frobenius penalty beta (||U_mcar - U_mnar||^2 + ||V_mcar - V_mnar||^2)
// tying them together; the MNAR model is the final predictor. Pass
// mcar_model_out to also receive the auxiliary model.
inline FactorModel train_cause(const InteractionSet& mnar, const InteractionSet& mcar,
                               const TrainConfig& config,
                               const InteractionSet* validation = nullptr,
                               std::optional<FactorModel>* mcar_model_out = nullptr) {
  config.validate();
  if (mnar.num_users() != mcar.num_users() || mnar.num_items() != mcar.num_items())
    throw std::invalid_argument("train_cause: datasets disagree on (m, n)");
  FactorModel model_mnar = init_factors(mnar.num_users(), mnar.num_items(), config.dim,
                                        config.seed, rng_stream::kInitModel);
  FactorModel model_mcar = init_factors(mnar.num_users(), mnar.num_items(), config.dim,
                                        config.seed, rng_stream::kInitAuxiliary);
  detail::ModelOptimizer opt_mnar(model_mnar);
  detail::ModelOptimizer opt_mcar(model_mcar);
  Rng rng_mnar(config.seed, rng_stream::kMnarBatch);
  Rng rng_mcar(config.seed, rng_stream::kMcarBatch);
  detail::EarlyStop stopper;
  for (int it = 1; it <= config.max_iterations; ++it) {
    const LossBatch batch_mnar = sample_observed_batch(mnar, config.batch_size, rng_mnar);
    const LossBatch batch_mcar = sample_observed_batch(mcar, config.batch_size, rng_mcar);
    const std::vector<double> ones_mnar(batch_mnar.size(), 1.0);
    const std::vector<double> ones_mcar(batch_mcar.size(), 1.0);
    for (int step = 0; step < config.inner_steps; ++step) {
      FactorGradients g_mnar = grad_weighted_mf(model_mnar, batch_mnar, ones_mnar, config.l2);
      FactorGradients g_mcar = grad_weighted_mf(model_mcar, batch_mcar, ones_mcar, config.l2);
      if (config.tradeoff != 0.0) {
        const double coef = 2.0 * config.tradeoff;
        g_mnar.user += coef * (model_mnar.user_factors() - model_mcar.user_factors());
        g_mnar.item += coef * (model_mnar.item_factors() - model_mcar.item_factors());
        g_mcar.user += coef * (model_mcar.user_factors() - model_mnar.user_factors());
        g_mcar.item += coef * (model_mcar.item_factors() - model_mnar.item_factors());
      }
      opt_mnar.descend(model_mnar, g_mnar, config.learning_rate);
      opt_mcar.descend(model_mcar, g_mcar, config.learning_rate);
    }
    if (validation && it % kLogCadence == 0 &&
        stopper.update(naive_loss(*validation, model_mnar)))
      break;
  }
  if (mcar_model_out) *mcar_model_out = std::move(model_mcar);
  return model_mnar;
}

struct DamfResult {
  FactorModel model;
  FactorModel adversary;
  TrainTrace trace;
};

namespace detail {

// Keep the adversary inside the max-norm hypothesis class the theory's sup
// ranges over: an entrywise factor cap of sqrt(A/d) guarantees
// |U'_u . V'_i| <= A. Without this the ascent is unbounded and drags the
// model off the rating scale through the discrepancy term.
inline void project_factor_box(FactorModel& model, double prediction_cap) {
  const double cap = std::sqrt(prediction_cap / static_cast<double>(model.dim()));
  model.user_factors() = model.user_factors().cwiseMax(-cap).cwiseMin(cap);
  model.item_factors() = model.item_factors().cwiseMax(-cap).cwiseMin(cap);
}

}  // namespace detail

// Domain adversarial matrix factorization. Each outer iteration samples an
// MNAR batch and takes k descent steps on
//   batch naive loss + beta * pmd_gap + l2 * (||U||_F^2 + ||V||_F^2)
// with the adversary frozen, then samples a uniform MCAR batch and takes k
// ascent steps of the adversary on the gap with the model frozen. The
// adversary's Adam state is warm across outer iterations. RNG streams are
// separated per consumer, so beta = 0 reproduces train_mf exactly.
inline DamfResult train_damf(const InteractionSet& data, const TrainConfig& config,
                             const TraceOptions& trace_opts = TraceOptions(),
                             const InteractionSet* validation = nullptr) {
  config.validate();
  if (trace_opts.true_ratings &&
      (trace_opts.true_ratings->rows() != data.num_users() ||
       trace_opts.true_ratings->cols() != data.num_items()))
    throw std::invalid_argument("train_damf: true-rating matrix shape mismatch");

  FactorModel model = init_factors(data.num_users(), data.num_items(), config.dim,
                                   config.seed, rng_stream::kInitModel);
  FactorModel adversary = init_factors(data.num_users(), data.num_items(), config.dim,
                                       config.seed, rng_stream::kInitAuxiliary);
  detail::ModelOptimizer opt(model);
  detail::ModelOptimizer opt_adv(adversary);
  Rng rng_mnar(config.seed, rng_stream::kMnarBatch);
  Rng rng_mcar(config.seed, rng_stream::kMcarBatch);
  Rng rng_trace(config.seed, rng_stream::kTrace);
  const BoundConfig bound_cfg = BoundConfig::for_scale(data.scale(), trace_opts.confidence);

  TrainTrace trace;
  detail::EarlyStop stopper;
  // Eq.-(7)-style updates need an MCAR batch before the first adversary
  // refresh; prime one from the MCAR stream.
  LossBatch mcar_batch = sample_uniform_pairs(data.num_users(), data.num_items(),
                                              config.batch_size, rng_mcar);
  for (int it = 1; it <= config.max_iterations; ++it) {
    const LossBatch mnar_batch = sample_observed_batch(data, config.batch_size, rng_mnar);
    const std::vector<double> ones(mnar_batch.size(), 1.0);
    for (int step = 0; step < config.inner_steps; ++step) {
      FactorGradients g = grad_weighted_mf(model, mnar_batch, ones, config.l2);
      if (config.tradeoff != 0.0) {
        const FactorGradients g_disc =
            grad_discrepancy(model, adversary, mcar_batch, mnar_batch, GradTarget::Model);
        g.user += config.tradeoff * g_disc.user;
        g.item += config.tradeoff * g_disc.item;
      }
      opt.descend(model, g, config.learning_rate);
    }
    mcar_batch = sample_uniform_pairs(data.num_users(), data.num_items(),
                                      config.batch_size, rng_mcar);
    for (int step = 0; step < config.inner_steps; ++step) {
      opt_adv.ascend(adversary,
                     grad_discrepancy(model, adversary, mcar_batch, mnar_batch,
                                      GradTarget::Adversary),
                     config.learning_rate);
      detail::project_factor_box(adversary, bound_cfg.max_norm_bound);
    }

    if (it == 1 || it % trace_opts.cadence == 0) {
      TraceRecord rec = trace_bound(model, adversary, data, bound_cfg, rng_trace,
                                    trace_opts.true_ratings);
      rec.iteration = it;
      trace.records.push_back(rec);
    }
    if (validation && it % kLogCadence == 0 &&
        stopper.update(naive_loss(*validation, model)))
      break;
  }
  return DamfResult{std::move(model), std::move(adversary), std::move(trace)};
}

}  // namespace damf
