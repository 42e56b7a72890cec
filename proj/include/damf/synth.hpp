#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "damf/rng.hpp"
#include "damf/types.hpp"

namespace damf {

// Ground-truth world: full rating matrix plus the observation mechanism.
// selection_strength > 0 makes high ratings more likely to be observed
// (user self-selection); 0 gives MCAR at base_rate.
struct SynthSpec {
  int num_users = 100;
  int num_items = 100;
  int latent_dim = 5;
  double noise = 0.1;
  double selection_strength = 0.0;
  double base_rate = 0.1;
  std::uint64_t seed = 0;
  RatingScale scale{1.0, 5.0};
  // When both are positive, propensities in the leading block
  // [0, zero_block_users) x [0, zero_block_items) are exactly zero.
  int zero_block_users = 0;
  int zero_block_items = 0;

  void validate() const {
    if (num_users < 1 || num_items < 1 || latent_dim < 1)
      throw std::invalid_argument("SynthSpec: dimensions must be positive");
    if (noise < 0.0) throw std::invalid_argument("SynthSpec: noise must be >= 0");
    if (!(base_rate > 0.0 && base_rate <= 1.0))
      throw std::invalid_argument("SynthSpec: base_rate must lie in (0, 1]");
    if (zero_block_users < 0 || zero_block_users > num_users ||
        zero_block_items < 0 || zero_block_items > num_items)
      throw std::invalid_argument("SynthSpec: zero block outside grid");
  }
};

struct TrueWorld {
  Matrix ratings;
  PropensityMap propensities;
};

inline Matrix low_rank_matrix(int m, int n, int d, Rng& rng) {
  Matrix left(m, d), right(n, d);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < d; ++c) left(r, c) = rng.normal();
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) right(r, c) = rng.normal();
  return left * right.transpose();
}

// Ratings: low-rank factor product plus Gaussian noise, affinely mapped onto
// [r_min, r_max]. Propensities: exponential tilt in the rating,
// clamp(base_rate * exp(strength * (R - r_mid)), 0.01, 1), so positive
// strength induces a positive rating-observation correlation.
inline TrueWorld gen_true_world(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed, rng_stream::kWorld);
  Matrix raw = low_rank_matrix(spec.num_users, spec.num_items, spec.latent_dim, rng);
  if (spec.noise > 0.0) {
    for (int u = 0; u < spec.num_users; ++u)
      for (int i = 0; i < spec.num_items; ++i) raw(u, i) += spec.noise * rng.normal();
  }
  const double lo = raw.minCoeff();
  const double hi = raw.maxCoeff();
  Matrix ratings(spec.num_users, spec.num_items);
  if (hi > lo) {
    const double span = (spec.scale.r_max - spec.scale.r_min) / (hi - lo);
    ratings = ((raw.array() - lo) * span + spec.scale.r_min).matrix();
  } else {
    ratings.setConstant(spec.scale.mid());
  }

  const double mid = spec.scale.mid();
  Matrix propensities(spec.num_users, spec.num_items);
  for (int u = 0; u < spec.num_users; ++u)
    for (int i = 0; i < spec.num_items; ++i) {
      const double tilt =
          spec.base_rate * std::exp(spec.selection_strength * (ratings(u, i) - mid));
      propensities(u, i) = std::clamp(tilt, 0.01, 1.0);
    }
  const bool has_zero_block = spec.zero_block_users > 0 && spec.zero_block_items > 0;
  if (has_zero_block) {
    propensities.topLeftCorner(spec.zero_block_users, spec.zero_block_items).setZero();
  }
  return TrueWorld{std::move(ratings),
                   PropensityMap::dense(std::move(propensities), has_zero_block)};
}

// One Bernoulli draw of the observation matrix; observed pairs carry their
// true rating. Throws if the draw comes up empty (vanishing propensities on
// a tiny grid).
inline InteractionSet sample_observation(const Matrix& true_ratings,
                                         const PropensityMap& propensity,
                                         std::uint64_t seed,
                                         const RatingScale& scale = RatingScale()) {
  const int m = static_cast<int>(true_ratings.rows());
  const int n = static_cast<int>(true_ratings.cols());
  Rng rng(seed, rng_stream::kObservation);
  std::vector<Triple> triples;
  for (int u = 0; u < m; ++u)
    for (int i = 0; i < n; ++i)
      if (rng.bernoulli(propensity.at(u, i)))
        triples.push_back(Triple{u, i, true_ratings(u, i)});
  return InteractionSet(m, n, std::move(triples), scale);
}

}  // namespace damf
