#pragma once

// Shared helpers for the test suites: finite-difference gradients and small
// statistics utilities. The finite-difference oracle stays independent of
// the analytic gradient code it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "damf/types.hpp"

namespace damf::testing {

// Central finite differences of f with respect to every entry of both factor
// matrices of `model`, holding everything else fixed.
struct FdGradients {
  Matrix user;
  Matrix item;
};

inline FdGradients finite_difference(FactorModel model,
                                     const std::function<double(const FactorModel&)>& f,
                                     double h = 1e-5) {
  FdGradients g{Matrix::Zero(model.user_factors().rows(), model.user_factors().cols()),
                Matrix::Zero(model.item_factors().rows(), model.item_factors().cols())};
  auto probe = [&](Matrix& target, Eigen::Index r, Eigen::Index c) {
    const double saved = target(r, c);
    target(r, c) = saved + h;
    const double above = f(model);
    target(r, c) = saved - h;
    const double below = f(model);
    target(r, c) = saved;
    return (above - below) / (2.0 * h);
  };
  for (Eigen::Index r = 0; r < g.user.rows(); ++r)
    for (Eigen::Index c = 0; c < g.user.cols(); ++c)
      g.user(r, c) = probe(model.user_factors(), r, c);
  for (Eigen::Index r = 0; r < g.item.rows(); ++r)
    for (Eigen::Index c = 0; c < g.item.cols(); ++c)
      g.item(r, c) = probe(model.item_factors(), r, c);
  return g;
}

inline double relative_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max(b.norm(), 1e-8);
  return (a - b).norm() / scale;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_sd(const std::vector<double>& v) {
  const double mu = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Standard error of the mean of v.
inline double standard_error(const std::vector<double>& v) {
  return sample_sd(v) / std::sqrt(static_cast<double>(v.size()));
}

// ---------------------------------------------------------------------------
// Brute-force ranking-metric oracles. Ranks are recomputed by pairwise
// comparison and the ideal DCG by exhaustive enumeration of all rank
// assignments, so these stay independent of the library's sort-based path.
// ---------------------------------------------------------------------------

// rank(i) = 1 + #{j : score_j > score_i or (tie and item_j < item_i)}
inline std::vector<int> brute_force_ranks(const std::vector<int>& items,
                                          const std::vector<double>& scores) {
  std::vector<int> ranks(items.size(), 1);
  for (std::size_t i = 0; i < items.size(); ++i)
    for (std::size_t j = 0; j < items.size(); ++j) {
      if (i == j) continue;
      if (scores[j] > scores[i] || (scores[j] == scores[i] && items[j] < items[i]))
        ranks[i] += 1;
    }
  return ranks;
}

inline double brute_force_dcg(const std::vector<double>& gains, const std::vector<int>& ranks,
                              int k) {
  double dcg = 0.0;
  for (std::size_t i = 0; i < gains.size(); ++i)
    if (ranks[i] <= k) dcg += gains[i] / std::log2(ranks[i] + 1.0);
  return dcg;
}

// IDCG by trying every permutation of rank assignments (n <= 6 feasible).
inline double brute_force_idcg(const std::vector<double>& gains, int k) {
  std::vector<int> ranks(gains.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) ranks[i] = static_cast<int>(i) + 1;
  double best = 0.0;
  do {
    best = std::max(best, brute_force_dcg(gains, ranks, k));
  } while (std::next_permutation(ranks.begin(), ranks.end()));
  return best;
}

// NDCG for one user's test items from raw scores and ratings, fully
// enumerated. Returns -1 when the user carries no ranking signal.
inline double brute_force_ndcg(const std::vector<int>& items, const std::vector<double>& scores,
                               const std::vector<double>& ratings, int k, bool shifted_gain) {
  std::vector<double> gains(ratings.size());
  for (std::size_t i = 0; i < ratings.size(); ++i)
    gains[i] = shifted_gain ? std::exp2(ratings[i] - 1.0) : std::exp2(ratings[i]) - 1.0;
  const double idcg = brute_force_idcg(gains, k);
  if (idcg <= 0.0) return -1.0;
  return brute_force_dcg(gains, brute_force_ranks(items, scores), k) / idcg;
}

inline double brute_force_recall(const std::vector<int>& items,
                                 const std::vector<double>& scores,
                                 const std::vector<double>& ratings, int k) {
  double denom = 0.0;
  for (double r : ratings) denom += r;
  if (denom <= 0.0) return -1.0;
  const std::vector<int> ranks = brute_force_ranks(items, scores);
  double hit = 0.0;
  for (std::size_t i = 0; i < ratings.size(); ++i)
    if (ranks[i] <= k) hit += ratings[i];
  return hit / denom;
}

}  // namespace damf::testing
