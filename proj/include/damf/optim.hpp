#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "damf/rng.hpp"
#include "damf/types.hpp"

namespace damf {

// Bias-corrected Adam for one parameter matrix.
struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;

  Matrix first_moment;
  Matrix second_moment;
  long step_count = 0;

  AdamState(Eigen::Index rows, Eigen::Index cols)
      : first_moment(Matrix::Zero(rows, cols)),
        second_moment(Matrix::Zero(rows, cols)) {}
};

inline void adam_step(Matrix& params, const Matrix& grads, AdamState& state, double lr) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols() ||
      params.rows() != state.first_moment.rows() ||
      params.cols() != state.first_moment.cols())
    throw std::invalid_argument("adam_step: shape mismatch");
  state.step_count += 1;
  state.first_moment = AdamState::beta1 * state.first_moment + (1.0 - AdamState::beta1) * grads;
  state.second_moment = AdamState::beta2 * state.second_moment +
                        (1.0 - AdamState::beta2) * grads.array().square().matrix();
  const double c1 = 1.0 - std::pow(AdamState::beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(AdamState::beta2, static_cast<double>(state.step_count));
  params.array() -= lr * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + AdamState::eps);
}

// Ascent = descent on the negated gradient; Adam is sign-symmetric.
inline void adam_step_ascend(Matrix& params, const Matrix& grads, AdamState& state, double lr) {
  adam_step(params, Matrix(-grads), state, lr);
}

// T draws uniformly with replacement from the observed set (O_MNAR).
inline LossBatch sample_observed_batch(const InteractionSet& data, int batch_size, Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("sample_observed_batch: batch_size must be >= 1");
  if (data.size() == 0) throw std::invalid_argument("sample_observed_batch: empty data");
  LossBatch batch;
  batch.pairs.reserve(batch_size);
  batch.ratings.reserve(batch_size);
  for (int t = 0; t < batch_size; ++t) {
    const Triple& tr = data.triples()[rng.index(data.size())];
    batch.pairs.emplace_back(tr.user, tr.item);
    batch.ratings.push_back(tr.rating);
  }
  return batch;
}

// T pairs uniform with replacement over the full grid (O_MCAR); unlabeled.
inline LossBatch sample_uniform_pairs(int m, int n, int batch_size, Rng& rng) {
  if (m < 1 || n < 1) throw std::invalid_argument("sample_uniform_pairs: bad grid");
  if (batch_size < 1) throw std::invalid_argument("sample_uniform_pairs: batch_size must be >= 1");
  LossBatch batch;
  batch.pairs.reserve(batch_size);
  const std::size_t grid = static_cast<std::size_t>(m) * static_cast<std::size_t>(n);
  for (int t = 0; t < batch_size; ++t) {
    const std::size_t flat = rng.index(grid);
    batch.pairs.emplace_back(static_cast<int>(flat / n), static_cast<int>(flat % n));
  }
  return batch;
}

struct FactorGradients {
  Matrix user;
  Matrix item;
};

// Gradient of  sum_b w_b (r_b - U_u.V_i)^2 / |B| + l2 (||U||_F^2 + ||V||_F^2).
// Weights 1 give the naive loss, 1/P the IPS loss. Regularization hits every
// row, matching the full Frobenius penalty.
inline FactorGradients grad_weighted_mf(const FactorModel& model, const LossBatch& batch,
                                        const std::vector<double>& weights, double l2) {
  batch.validate();
  if (!batch.labeled()) throw std::invalid_argument("grad_weighted_mf: batch carries no ratings");
  if (weights.size() != batch.size())
    throw std::invalid_argument("grad_weighted_mf: weights misaligned with batch");
  const Matrix& user = model.user_factors();
  const Matrix& item = model.item_factors();
  FactorGradients g{Matrix::Zero(user.rows(), user.cols()),
                    Matrix::Zero(item.rows(), item.cols())};
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto [u, i] = batch.pairs[b];
    const double residual = batch.ratings[b] - user.row(u).dot(item.row(i));
    const double coef = -2.0 * weights[b] * residual * inv;
    g.user.row(u) += coef * item.row(i);
    g.item.row(i) += coef * user.row(u);
  }
  if (l2 != 0.0) {
    g.user += 2.0 * l2 * user;
    g.item += 2.0 * l2 * item;
  }
  return g;
}

enum class GradTarget { Model, Adversary };

// Gradient of the empirical PMD gap
//   mean_mcar (R_hat - R_hat')^2 - mean_mnar (R_hat - R_hat')^2
// with respect to one side's factors, the other held fixed. Callers descend
// on the model and ascend on the adversary.
inline FactorGradients grad_discrepancy(const FactorModel& model, const FactorModel& adversary,
                                        const LossBatch& mcar_batch, const LossBatch& mnar_batch,
                                        GradTarget target) {
  mcar_batch.validate();
  mnar_batch.validate();
  if (mcar_batch.size() == 0 || mnar_batch.size() == 0)
    throw std::invalid_argument("grad_discrepancy: empty batch");
  const FactorModel& side = (target == GradTarget::Model) ? model : adversary;
  FactorGradients g{Matrix::Zero(side.user_factors().rows(), side.user_factors().cols()),
                    Matrix::Zero(side.item_factors().rows(), side.item_factors().cols())};
  const double target_sign = (target == GradTarget::Model) ? 1.0 : -1.0;
  auto accumulate = [&](const LossBatch& batch, double batch_sign) {
    const double scale = 2.0 * target_sign * batch_sign / static_cast<double>(batch.size());
    for (const auto& [u, i] : batch.pairs) {
      const double diff = model.user_factors().row(u).dot(model.item_factors().row(i)) -
                          adversary.user_factors().row(u).dot(adversary.item_factors().row(i));
      g.user.row(u) += scale * diff * side.item_factors().row(i);
      g.item.row(i) += scale * diff * side.user_factors().row(u);
    }
  };
  accumulate(mcar_batch, 1.0);
  accumulate(mnar_batch, -1.0);
  return g;
}

}  // namespace damf
