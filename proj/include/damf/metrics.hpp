#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "damf/types.hpp"

namespace damf {

// MSE over the test pairs, on clipped predictions.
inline double mse(const InteractionSet& test, const FactorModel& model) {
  if (test.size() == 0) throw std::invalid_argument("mse: empty test set");
  double sum = 0.0;
  for (const Triple& t : test.triples()) {
    const double err = t.rating - model.predict_clipped(t.user, t.item, test.scale());
    sum += err * err;
  }
  return sum / static_cast<double>(test.size());
}

// Gain for a rated item inside DCG. ExponentialShifted is 2^(R-1) as the
// formulas print it; ExponentialMinusOne is the conventional 2^R - 1.
enum class GainType { ExponentialShifted, ExponentialMinusOne };

namespace detail {

inline double gain(double rating, GainType type) {
  return type == GainType::ExponentialShifted ? std::exp2(rating - 1.0)
                                              : std::exp2(rating) - 1.0;
}

struct ScoredItem {
  int item;
  double score;
  double rating;
};

// Ranks over one user's test items: descending score, ties broken by
// ascending item index. Returns items in rank order (rank = position + 1).
inline std::vector<ScoredItem> ranked(std::vector<ScoredItem> items) {
  std::stable_sort(items.begin(), items.end(), [](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  });
  return items;
}

inline double dcg_at_k(const std::vector<ScoredItem>& in_rank_order, int k, GainType type) {
  double dcg = 0.0;
  const int top = std::min<int>(k, static_cast<int>(in_rank_order.size()));
  for (int rank = 1; rank <= top; ++rank)
    dcg += gain(in_rank_order[rank - 1].rating, type) / std::log2(rank + 1.0);
  return dcg;
}

// Test items grouped per user; prediction ranking uses raw scores (clipping
// is monotone except for the ties it would create at the rails).
inline std::vector<std::vector<ScoredItem>> per_user_items(const InteractionSet& test,
                                                           const FactorModel& model) {
  if (test.num_users() > model.num_users() || test.num_items() > model.num_items())
    throw std::invalid_argument("metrics: test grid exceeds model dimensions");
  std::vector<std::vector<ScoredItem>> users(test.num_users());
  for (const Triple& t : test.triples())
    users[t.user].push_back(ScoredItem{t.item, model.predict(t.user, t.item), t.rating});
  return users;
}

}  // namespace detail

// NDCG@K averaged over users with at least one test item; IDCG comes from
// ordering the same items by their true rating.
inline double ndcg_at_k(const InteractionSet& test, const FactorModel& model, int k,
                        GainType gain_type = GainType::ExponentialShifted) {
  if (k < 1) throw std::invalid_argument("ndcg_at_k: K must be >= 1");
  double total = 0.0;
  int counted = 0;
  for (auto& items : detail::per_user_items(test, model)) {
    if (items.empty()) continue;
    std::vector<detail::ScoredItem> ideal = items;
    for (auto& it : ideal) it.score = it.rating;
    const double idcg = detail::dcg_at_k(detail::ranked(std::move(ideal)), k, gain_type);
    if (idcg <= 0.0) continue;  // all-zero gains carry no ranking signal
    total += detail::dcg_at_k(detail::ranked(std::move(items)), k, gain_type) / idcg;
    ++counted;
  }
  return counted > 0 ? total / counted : 0.0;
}

// Rating-weighted Recall@K: per user, sum of ratings ranked inside the top K
// over the sum of all its test ratings. Users whose ratings sum to zero are
// excluded (0/0).
inline double recall_at_k(const InteractionSet& test, const FactorModel& model, int k) {
  if (k < 1) throw std::invalid_argument("recall_at_k: K must be >= 1");
  double total = 0.0;
  int counted = 0;
  for (auto& items : detail::per_user_items(test, model)) {
    if (items.empty()) continue;
    double denom = 0.0;
    for (const auto& it : items) denom += it.rating;
    if (denom <= 0.0) continue;
    const auto in_rank_order = detail::ranked(std::move(items));
    double hit = 0.0;
    const int top = std::min<int>(k, static_cast<int>(in_rank_order.size()));
    for (int rank = 1; rank <= top; ++rank) hit += in_rank_order[rank - 1].rating;
    total += hit / denom;
    ++counted;
  }
  return counted > 0 ? total / counted : 0.0;
}

}  // namespace damf
