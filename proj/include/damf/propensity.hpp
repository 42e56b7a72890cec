#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "damf/types.hpp"

namespace damf {

// Floor for zero-count users/items; keeps IPS weights finite.
inline constexpr double kPropensityFloor = 1e-6;

namespace detail {

inline Vector normalized_counts(const std::vector<double>& counts) {
  const double max_count = *std::max_element(counts.begin(), counts.end());
  Vector out(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t i = 0; i < counts.size(); ++i)
    out(static_cast<Eigen::Index>(i)) =
        counts[i] > 0.0 ? counts[i] / max_count : kPropensityFloor;
  return out;
}

}  // namespace detail

// P_hat(u, *) = (#observed items of u) / (max over users).
inline PropensityMap user_propensity(const InteractionSet& data) {
  std::vector<double> counts(data.num_users(), 0.0);
  for (const Triple& t : data.triples()) counts[t.user] += 1.0;
  return PropensityMap::factorized(detail::normalized_counts(counts),
                                   Vector::Ones(data.num_items()));
}

inline PropensityMap item_propensity(const InteractionSet& data) {
  std::vector<double> counts(data.num_items(), 0.0);
  for (const Triple& t : data.triples()) counts[t.item] += 1.0;
  return PropensityMap::factorized(Vector::Ones(data.num_users()),
                                   detail::normalized_counts(counts));
}

// P_hat(u, i) = P_hat(u, *) * P_hat(*, i).
inline PropensityMap user_item_propensity(const InteractionSet& data) {
  std::vector<double> user_counts(data.num_users(), 0.0);
  std::vector<double> item_counts(data.num_items(), 0.0);
  for (const Triple& t : data.triples()) {
    user_counts[t.user] += 1.0;
    item_counts[t.item] += 1.0;
  }
  return PropensityMap::factorized(detail::normalized_counts(user_counts),
                                   detail::normalized_counts(item_counts));
}

// Bernoulli log-likelihood of the observation pattern under logits Gamma:
// sum_D  O log sigmoid(Gamma) + (1 - O) log(1 - sigmoid(Gamma)).
inline double observation_log_likelihood(const InteractionSet& data, const Matrix& logits) {
  if (logits.rows() != data.num_users() || logits.cols() != data.num_items())
    throw std::invalid_argument("observation_log_likelihood: shape mismatch");
  // log(1 - sigmoid(g)) = -softplus(g); log sigmoid(g) = g - softplus(g).
  double ll = 0.0;
  for (Eigen::Index u = 0; u < logits.rows(); ++u)
    for (Eigen::Index i = 0; i < logits.cols(); ++i) {
      const double g = logits(u, i);
      ll -= std::max(g, 0.0) + std::log1p(std::exp(-std::abs(g)));
    }
  for (const Triple& t : data.triples()) ll += logits(t.user, t.item);
  return ll;
}

// d/dGamma of the log-likelihood: O - sigmoid(Gamma), elementwise over D.
inline Matrix observation_log_likelihood_grad(const InteractionSet& data, const Matrix& logits) {
  if (logits.rows() != data.num_users() || logits.cols() != data.num_items())
    throw std::invalid_argument("observation_log_likelihood_grad: shape mismatch");
  Matrix grad = (-(1.0 / (1.0 + (-logits.array()).exp()))).matrix();
  for (const Triple& t : data.triples()) grad(t.user, t.item) += 1.0;
  return grad;
}

// Euclidean projection of nonnegative singular values onto {s : sum s <= radius}.
namespace detail {
inline Vector project_l1_simplex(const Vector& values, double radius) {
  if (values.sum() <= radius) return values;
  std::vector<double> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    cumulative += sorted[j];
    const double candidate = (cumulative - radius) / static_cast<double>(j + 1);
    if (j + 1 == sorted.size() || sorted[j + 1] <= candidate) {
      theta = candidate;
      break;
    }
  }
  return values.array().max(theta) - theta;  // max(v - theta, 0) for v >= 0
}
}  // namespace detail

// Frobenius-optimal projection onto the nuclear-norm ball of the given radius.
inline Matrix project_nuclear_ball(const Matrix& input, double radius) {
  if (radius < 0.0) throw std::invalid_argument("project_nuclear_ball: negative radius");
  if (radius == 0.0) return Matrix::Zero(input.rows(), input.cols());
  Eigen::BDCSVD<Matrix> svd(input, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues().sum() <= radius) return input;
  const Vector projected = detail::project_l1_simplex(svd.singularValues(), radius);
  return svd.matrixU() * projected.asDiagonal() * svd.matrixV().transpose();
}

struct OneBitMCConfig {
  double nuclear_cap_scale = 1.5;  // tau; nuclear radius is tau * sqrt(mn)
  double entry_cap = 6.0;          // gamma
  double step_size = 2.0;          // safe for the 1/4-smooth likelihood
  int iterations = 300;

  void validate() const {
    if (!(nuclear_cap_scale > 0.0) || !(entry_cap > 0.0) || !(step_size > 0.0) ||
        iterations < 1)
      throw std::invalid_argument("OneBitMCConfig: all parameters must be positive");
  }
};

struct OneBitMCResult {
  PropensityMap propensities;
  Matrix logits;
  std::vector<double> objective_trace;  // log-likelihood of accepted iterates
  bool converged = true;
};

// Maximum-likelihood completion of the binary observation matrix over
// { ||Gamma||_* <= tau sqrt(mn), ||Gamma||_max <= gamma }, via projected
// gradient ascent with backtracking; P_hat = sigmoid(Gamma). Rejected steps
// shrink the step size, so the objective trace is nondecreasing.
inline OneBitMCResult one_bit_mc(const InteractionSet& data, const OneBitMCConfig& config) {
  config.validate();
  const std::size_t cells =
      static_cast<std::size_t>(data.num_users()) * static_cast<std::size_t>(data.num_items());
  if (cells > 4'000'000)
    throw std::invalid_argument("one_bit_mc: grid exceeds the dense-SVD capacity cap");

  const double radius = config.nuclear_cap_scale *
                        std::sqrt(static_cast<double>(data.num_users()) *
                                  static_cast<double>(data.num_items()));
  auto project = [&](const Matrix& g) {
    Matrix clamped = g.array().min(config.entry_cap).max(-config.entry_cap).matrix();
    return project_nuclear_ball(clamped, radius);
  };

  Matrix logits = Matrix::Zero(data.num_users(), data.num_items());
  double ll = observation_log_likelihood(data, logits);
  double step = config.step_size;
  OneBitMCResult result{PropensityMap::uniform(0.5), logits, {ll}, true};

  for (int it = 0; it < config.iterations; ++it) {
    const Matrix grad = observation_log_likelihood_grad(data, logits);
    bool accepted = false;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Matrix candidate = project(logits + step * grad);
      const double candidate_ll = observation_log_likelihood(data, candidate);
      if (candidate_ll >= ll - 1e-12) {
        logits = std::move(candidate);
        ll = candidate_ll;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.converged = false;  // step shrank to nothing without improving
      break;
    }
    result.objective_trace.push_back(ll);
  }

  Matrix probs = (1.0 / (1.0 + (-logits.array()).exp())).max(kPropensityFloor).matrix();
  result.logits = std::move(logits);
  result.propensities = PropensityMap::dense(std::move(probs));
  return result;
}

// True-propensity reference from a small MCAR sample:
//   P(u, i) = P(R = r | O = 1) * P(O = 1) / P(R = r),
// with rating values discretized to the scale's integer levels and both
// histograms Laplace-smoothed (+1 per level). Pairs never observed in the
// training set get the marginal rate P(O = 1).
inline PropensityMap true_propensity_naive_bayes(const InteractionSet& train,
                                                 const InteractionSet& mcar_sample) {
  if (mcar_sample.size() == 0)
    throw std::invalid_argument("true_propensity_naive_bayes: empty MCAR sample");
  const RatingScale& scale = train.scale();
  const int level_lo = static_cast<int>(std::lround(scale.r_min));
  const int level_hi = static_cast<int>(std::lround(scale.r_max));
  const int levels = level_hi - level_lo + 1;
  if (levels < 1) throw std::invalid_argument("true_propensity_naive_bayes: degenerate scale");
  auto level_of = [&](double r) {
    return std::clamp(static_cast<int>(std::lround(r)) - level_lo, 0, levels - 1);
  };

  std::vector<double> observed_hist(levels, 1.0);  // Laplace +1
  std::vector<double> marginal_hist(levels, 1.0);
  for (const Triple& t : train.triples()) observed_hist[level_of(t.rating)] += 1.0;
  for (const Triple& t : mcar_sample.triples()) marginal_hist[level_of(t.rating)] += 1.0;
  const double observed_total = std::accumulate(observed_hist.begin(), observed_hist.end(), 0.0);
  const double marginal_total = std::accumulate(marginal_hist.begin(), marginal_hist.end(), 0.0);

  const double rate = static_cast<double>(train.size()) /
                      (static_cast<double>(train.num_users()) * train.num_items());
  Matrix entries = Matrix::Constant(train.num_users(), train.num_items(),
                                    std::clamp(rate, kPropensityFloor, 1.0));
  for (const Triple& t : train.triples()) {
    const int level = level_of(t.rating);
    const double p_r_given_o = observed_hist[level] / observed_total;
    const double p_r = marginal_hist[level] / marginal_total;
    entries(t.user, t.item) = std::clamp(p_r_given_o * rate / p_r, kPropensityFloor, 1.0);
  }
  return PropensityMap::dense(std::move(entries));
}

}  // namespace damf
