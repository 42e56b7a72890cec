#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "damf/optim.hpp"
#include "damf/types.hpp"

namespace damf {

// Squared loss; symmetric, zero iff arguments are equal.
inline double point_loss(double r, double r_hat) {
  const double d = r - r_hat;
  return d * d;
}

namespace detail {
inline double prediction(const FactorModel& model, int u, int i, const RatingScale* clip) {
  const double p = model.user_factors().row(u).dot(model.item_factors().row(i));
  return clip ? clip->clip(p) : p;
}
}  // namespace detail

// Full-matrix average loss; computable only when the true rating matrix is
// known (synthetic data). Pass a scale to evaluate on clipped predictions.
inline double ideal_loss(const Matrix& true_ratings, const FactorModel& model,
                         const RatingScale* clip = nullptr) {
  if (true_ratings.rows() != model.num_users() || true_ratings.cols() != model.num_items())
    throw std::invalid_argument("ideal_loss: shape mismatch");
  double sum = 0.0;
  for (int u = 0; u < model.num_users(); ++u)
    for (int i = 0; i < model.num_items(); ++i)
      sum += point_loss(true_ratings(u, i), detail::prediction(model, u, i, clip));
  return sum / (static_cast<double>(model.num_users()) * model.num_items());
}

// Plain average over the observed feedback; unbiased only under MCAR.
inline double naive_loss(const InteractionSet& data, const FactorModel& model,
                         const RatingScale* clip = nullptr) {
  double sum = 0.0;
  for (const Triple& t : data.triples())
    sum += point_loss(t.rating, detail::prediction(model, t.user, t.item, clip));
  return sum / static_cast<double>(data.size());
}

inline double naive_loss(const LossBatch& batch, const FactorModel& model,
                         const RatingScale* clip = nullptr) {
  batch.validate();
  if (batch.size() == 0) throw std::invalid_argument("naive_loss: empty batch");
  if (!batch.labeled()) throw std::invalid_argument("naive_loss: batch carries no ratings");
  double sum = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b)
    sum += point_loss(batch.ratings[b],
                      detail::prediction(model, batch.pairs[b].first, batch.pairs[b].second, clip));
  return sum / static_cast<double>(batch.size());
}

// Inverse-propensity-weighted loss: (1/mn) sum_{O=1} loss / P. Unbiased for
// the ideal loss when P is the true propensity.
inline double ips_loss(const InteractionSet& data, const FactorModel& model,
                       const PropensityMap& propensity, const RatingScale* clip = nullptr) {
  double sum = 0.0;
  for (const Triple& t : data.triples()) {
    const double p = propensity.at(t.user, t.item);
    if (!(p > 0.0))
      throw std::invalid_argument("ips_loss: nonpositive propensity on an observed pair");
    sum += point_loss(t.rating, detail::prediction(model, t.user, t.item, clip)) / p;
  }
  return sum / (static_cast<double>(data.num_users()) * data.num_items());
}

// Doubly robust loss with a dense matrix of imputed losses:
// (1/mn) sum_D { l_hat + O (l - l_hat) / P }.
inline double dr_loss(const InteractionSet& data, const FactorModel& model,
                      const PropensityMap& propensity, const Matrix& imputed_losses,
                      const RatingScale* clip = nullptr) {
  if (imputed_losses.rows() != data.num_users() || imputed_losses.cols() != data.num_items())
    throw std::invalid_argument("dr_loss: imputation shape mismatch");
  if (!imputed_losses.allFinite())
    throw std::invalid_argument("dr_loss: non-finite imputed loss");
  double sum = imputed_losses.sum();
  for (const Triple& t : data.triples()) {
    const double p = propensity.at(t.user, t.item);
    if (!(p > 0.0))
      throw std::invalid_argument("dr_loss: nonpositive propensity on an observed pair");
    const double loss = point_loss(t.rating, detail::prediction(model, t.user, t.item, clip));
    sum += (loss - imputed_losses(t.user, t.item)) / p;
  }
  return sum / (static_cast<double>(data.num_users()) * data.num_items());
}

// Empirical PMD gap at one fixed adversary: the bracketed difference of
// naive losses between the two observation mechanisms, each mini-batch mean
// normalized by its own size. Ratings are not consulted; the loss compares
// the two models' predictions.
inline double pmd_gap(const FactorModel& model, const FactorModel& adversary,
                      const LossBatch& mcar_batch, const LossBatch& mnar_batch,
                      const RatingScale* clip = nullptr) {
  mcar_batch.validate();
  mnar_batch.validate();
  if (mcar_batch.size() == 0 || mnar_batch.size() == 0)
    throw std::invalid_argument("pmd_gap: empty batch");
  auto batch_mean = [&](const LossBatch& batch) {
    double sum = 0.0;
    for (const auto& [u, i] : batch.pairs)
      sum += point_loss(detail::prediction(model, u, i, clip),
                        detail::prediction(adversary, u, i, clip));
    return sum / static_cast<double>(batch.size());
  };
  return batch_mean(mcar_batch) - batch_mean(mnar_batch);
}

struct PmdResult {
  double gap;
  FactorModel adversary;
};

// Approximates the sup over the factorized hypothesis class by Adam ascent
// from a given starting adversary. The class contains the model itself, so
// the true sup is >= 0; a negative ascent result signals an under-optimized
// adversary and is reported as 0. Returns the best iterate seen.
inline PmdResult pmd_empirical(const FactorModel& model, FactorModel adversary,
                               const LossBatch& mcar_batch, const LossBatch& mnar_batch,
                               const TrainConfig& config) {
  config.validate();
  AdamState state_user(adversary.user_factors().rows(), adversary.user_factors().cols());
  AdamState state_item(adversary.item_factors().rows(), adversary.item_factors().cols());
  double best_gap = pmd_gap(model, adversary, mcar_batch, mnar_batch);
  FactorModel best = adversary;
  for (int it = 0; it < config.max_iterations; ++it) {
    FactorGradients g =
        grad_discrepancy(model, adversary, mcar_batch, mnar_batch, GradTarget::Adversary);
    adam_step_ascend(adversary.user_factors(), g.user, state_user, config.learning_rate);
    adam_step_ascend(adversary.item_factors(), g.item, state_item, config.learning_rate);
    const double gap = pmd_gap(model, adversary, mcar_batch, mnar_batch);
    if (gap > best_gap) {
      best_gap = gap;
      best = adversary;
    }
  }
  return PmdResult{std::max(best_gap, 0.0), std::move(best)};
}

inline PmdResult pmd_empirical(const FactorModel& model, const LossBatch& mcar_batch,
                               const LossBatch& mnar_batch, const TrainConfig& config) {
  FactorModel adversary = init_factors(model.num_users(), model.num_items(),
                                       model.dim(), config.seed, rng_stream::kInitAuxiliary);
  return pmd_empirical(model, std::move(adversary), mcar_batch, mnar_batch, config);
}

// Test hook: the sup restricted to an explicit finite candidate set.
inline std::pair<double, std::size_t> pmd_over_candidates(
    const FactorModel& model, const std::vector<FactorModel>& candidates,
    const LossBatch& mcar_batch, const LossBatch& mnar_batch) {
  if (candidates.empty()) throw std::invalid_argument("pmd_over_candidates: no candidates");
  double best = -std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const double gap = pmd_gap(model, candidates[c], mcar_batch, mnar_batch);
    if (gap > best) {
      best = gap;
      arg = c;
    }
  }
  return {best, arg};
}

// Max-norm Rademacher surrogate sqrt(A^2 (m+n) / M), constant 1.
inline double complexity_surrogate(double max_norm_bound, int m, int n, std::size_t num_observed) {
  if (max_norm_bound < 0.0)
    throw std::invalid_argument("complexity_surrogate: negative max-norm bound");
  if (m < 1 || n < 1) throw std::invalid_argument("complexity_surrogate: bad grid");
  if (num_observed == 0) throw std::invalid_argument("complexity_surrogate: division by M = 0");
  return std::sqrt(max_norm_bound * max_norm_bound * (m + n) /
                   static_cast<double>(num_observed));
}

// Component (iii): 2L (3 R_mnar + 2 R_mcar).
inline double complexity_term(double lipschitz, double rad_mnar, double rad_mcar) {
  return 2.0 * lipschitz * (3.0 * rad_mnar + 2.0 * rad_mcar);
}

// Component (iv): 3 Delta sqrt(log(6/delta) / (2M)).
inline double confidence_term(double loss_bound, double confidence, std::size_t num_observed) {
  if (!(confidence > 0.0 && confidence < 1.0))
    throw std::invalid_argument("confidence_term: confidence must lie in (0, 1)");
  if (num_observed == 0) throw std::invalid_argument("confidence_term: M = 0");
  return 3.0 * loss_bound *
         std::sqrt(std::log(6.0 / confidence) / (2.0 * static_cast<double>(num_observed)));
}

struct BoundComponents {
  double naive = 0.0;
  double pmd = 0.0;
  double complexity = 0.0;
  double confidence = 0.0;

  double total() const { return naive + pmd + complexity + confidence; }
};

inline BoundComponents bound_value(double naive, double pmd, double complexity,
                                   double confidence) {
  if (!std::isfinite(naive) || !std::isfinite(pmd) || !std::isfinite(complexity) ||
      !std::isfinite(confidence))
    throw std::invalid_argument("bound_value: non-finite component");
  if (pmd < 0.0) throw std::invalid_argument("bound_value: pmd must be >= 0");
  return BoundComponents{naive, pmd, complexity, confidence};
}

}  // namespace damf
