#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "damf/rng.hpp"

namespace damf {

// Row-major: factor rows and rating rows are the hot access pattern.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Closed rating interval [r_min, r_max]. Delta = (r_max - r_min)^2 is the
// squared-loss bound on the clipped prediction range.
struct RatingScale {
  double r_min = 1.0;
  double r_max = 5.0;

  RatingScale() = default;
  RatingScale(double lo, double hi) : r_min(lo), r_max(hi) {
    if (!(lo < hi)) throw std::invalid_argument("RatingScale: r_min must be < r_max");
  }

  double loss_bound() const { return (r_max - r_min) * (r_max - r_min); }
  double clip(double x) const { return std::clamp(x, r_min, r_max); }
  double mid() const { return 0.5 * (r_min + r_max); }
  bool contains(double r) const { return r >= r_min && r <= r_max; }
};

struct Triple {
  int user;
  int item;
  double rating;
};

// Observed rating feedback: the pairs present are exactly those with O=1.
class InteractionSet {
 public:
  InteractionSet(int num_users, int num_items, std::vector<Triple> triples,
                 RatingScale scale = RatingScale())
      : num_users_(num_users),
        num_items_(num_items),
        scale_(scale),
        triples_(std::move(triples)) {
    if (num_users_ < 1 || num_items_ < 1)
      throw std::invalid_argument("InteractionSet: dimensions must be positive");
    if (triples_.empty())
      throw std::invalid_argument("InteractionSet: at least one observation required");
    std::unordered_set<std::int64_t> seen;
    seen.reserve(triples_.size());
    for (const Triple& t : triples_) {
      if (t.user < 0 || t.user >= num_users_ || t.item < 0 || t.item >= num_items_)
        throw std::out_of_range("InteractionSet: index out of range");
      if (!scale_.contains(t.rating))
        throw std::invalid_argument("InteractionSet: rating outside scale bounds");
      const std::int64_t key =
          static_cast<std::int64_t>(t.user) * num_items_ + t.item;
      if (!seen.insert(key).second)
        throw std::invalid_argument("InteractionSet: duplicate (user, item) pair");
    }
  }

  int num_users() const { return num_users_; }
  int num_items() const { return num_items_; }
  std::size_t size() const { return triples_.size(); }  // M
  const std::vector<Triple>& triples() const { return triples_; }
  const RatingScale& scale() const { return scale_; }

 private:
  int num_users_;
  int num_items_;
  RatingScale scale_;
  std::vector<Triple> triples_;
};

// Per-pair observation probability. Dense, factorized (outer product of a
// user vector and an item vector), or a single uniform rate.
class PropensityMap {
 public:
  static PropensityMap uniform(double p) {
    check_entry(p, false);
    PropensityMap map;
    map.kind_ = Kind::Uniform;
    map.scalar_ = p;
    return map;
  }

  // allow_zero admits exact-zero entries; used by synthetic worlds that
  // model never-observed pairs. Estimators that divide by the propensity
  // reject zeros at the point of use.
  static PropensityMap dense(Matrix entries, bool allow_zero = false) {
    if (entries.rows() < 1 || entries.cols() < 1)
      throw std::invalid_argument("PropensityMap: empty matrix");
    for (Eigen::Index r = 0; r < entries.rows(); ++r)
      for (Eigen::Index c = 0; c < entries.cols(); ++c)
        check_entry(entries(r, c), allow_zero);
    PropensityMap map;
    map.kind_ = Kind::Dense;
    map.dense_ = std::move(entries);
    return map;
  }

  static PropensityMap factorized(Vector user, Vector item) {
    if (user.size() < 1 || item.size() < 1)
      throw std::invalid_argument("PropensityMap: empty factor vector");
    for (Eigen::Index i = 0; i < user.size(); ++i) check_entry(user(i), false);
    for (Eigen::Index i = 0; i < item.size(); ++i) check_entry(item(i), false);
    PropensityMap map;
    map.kind_ = Kind::Factorized;
    map.user_ = std::move(user);
    map.item_ = std::move(item);
    return map;
  }

  double at(int u, int i) const {
    switch (kind_) {
      case Kind::Uniform:
        return scalar_;
      case Kind::Dense:
        if (u < 0 || u >= dense_.rows() || i < 0 || i >= dense_.cols())
          throw std::out_of_range("PropensityMap: index out of range");
        return dense_(u, i);
      case Kind::Factorized:
        if (u < 0 || u >= user_.size() || i < 0 || i >= item_.size())
          throw std::out_of_range("PropensityMap: index out of range");
        return user_(u) * item_(i);
    }
    throw std::logic_error("PropensityMap: invalid state");
  }

  Matrix materialize(int m, int n) const {
    if (m < 1 || n < 1) throw std::invalid_argument("PropensityMap: bad shape");
    if (kind_ == Kind::Dense) {
      if (dense_.rows() != m || dense_.cols() != n)
        throw std::invalid_argument("PropensityMap: shape mismatch");
      return dense_;
    }
    Matrix out(m, n);
    for (int u = 0; u < m; ++u)
      for (int i = 0; i < n; ++i) out(u, i) = at(u, i);
    return out;
  }

  bool is_dense() const { return kind_ == Kind::Dense; }
  bool is_factorized() const { return kind_ == Kind::Factorized; }
  bool is_uniform() const { return kind_ == Kind::Uniform; }
  const Vector& user_vector() const { return user_; }
  const Vector& item_vector() const { return item_; }

 private:
  enum class Kind { Uniform, Dense, Factorized };

  static void check_entry(double p, bool allow_zero) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0 || (p == 0.0 && !allow_zero))
      throw std::invalid_argument("PropensityMap: entry outside (0, 1]");
  }

  Kind kind_ = Kind::Uniform;
  double scalar_ = 1.0;
  Matrix dense_;
  Vector user_;
  Vector item_;
};

// Bilinear rating predictor: R_hat(u, i) = U.row(u) . V.row(i).
class FactorModel {
 public:
  FactorModel(Matrix user_factors, Matrix item_factors)
      : user_factors_(std::move(user_factors)), item_factors_(std::move(item_factors)) {
    if (user_factors_.cols() != item_factors_.cols())
      throw std::invalid_argument("FactorModel: factor dimensions differ");
    if (user_factors_.rows() < 1 || item_factors_.rows() < 1 || user_factors_.cols() < 1)
      throw std::invalid_argument("FactorModel: empty factors");
    if (!user_factors_.allFinite() || !item_factors_.allFinite())
      throw std::invalid_argument("FactorModel: non-finite factor entry");
  }

  int num_users() const { return static_cast<int>(user_factors_.rows()); }
  int num_items() const { return static_cast<int>(item_factors_.rows()); }
  int dim() const { return static_cast<int>(user_factors_.cols()); }

  Matrix& user_factors() { return user_factors_; }
  Matrix& item_factors() { return item_factors_; }
  const Matrix& user_factors() const { return user_factors_; }
  const Matrix& item_factors() const { return item_factors_; }

  double predict(int u, int i) const {
    if (u < 0 || u >= num_users() || i < 0 || i >= num_items())
      throw std::out_of_range("FactorModel: index out of range");
    return user_factors_.row(u).dot(item_factors_.row(i));
  }

  double predict_clipped(int u, int i, const RatingScale& scale) const {
    return scale.clip(predict(u, i));
  }

  Matrix predictions() const { return user_factors_ * item_factors_.transpose(); }

 private:
  Matrix user_factors_;
  Matrix item_factors_;
};

// i.i.d. uniform on [-1/sqrt(d), 1/sqrt(d)]; keeps initial predictions O(1).
inline FactorModel init_factors(int m, int n, int d, std::uint64_t seed,
                                std::uint64_t stream = rng_stream::kInitModel) {
  if (m < 1 || n < 1 || d < 1)
    throw std::invalid_argument("init_factors: dimensions must be positive");
  Rng rng(seed, stream);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix user(m, d), item(n, d);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < d; ++c) user(r, c) = rng.uniform(-bound, bound);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) item(r, c) = rng.uniform(-bound, bound);
  return FactorModel(std::move(user), std::move(item));
}

struct TrainConfig {
  int dim = 20;                 // d
  double l2 = 1e-4;             // lambda
  double tradeoff = 0.1;        // beta
  int batch_size = 1024;        // T
  int inner_steps = 1;          // k
  double learning_rate = 0.01;
  int max_iterations = 2500;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim < 1) throw std::invalid_argument("TrainConfig: dim must be >= 1");
    if (l2 < 0.0) throw std::invalid_argument("TrainConfig: l2 must be >= 0");
    if (tradeoff < 0.0) throw std::invalid_argument("TrainConfig: tradeoff must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (inner_steps < 1) throw std::invalid_argument("TrainConfig: inner_steps must be >= 1");
    if (!(learning_rate > 0.0))
      throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (max_iterations < 0)
      throw std::invalid_argument("TrainConfig: max_iterations must be >= 0");
  }
};

struct BoundConfig {
  double max_norm_bound;   // A
  double confidence;       // delta
  double lipschitz;        // L

  BoundConfig(double a, double delta, double l)
      : max_norm_bound(a), confidence(delta), lipschitz(l) {
    if (!(max_norm_bound > 0.0))
      throw std::invalid_argument("BoundConfig: max_norm_bound must be > 0");
    if (!(confidence > 0.0 && confidence < 1.0))
      throw std::invalid_argument("BoundConfig: confidence must lie in (0, 1)");
    if (!(lipschitz > 0.0))
      throw std::invalid_argument("BoundConfig: lipschitz must be > 0");
  }

  // Clipped predictions live in [r_min, r_max], so the hypothesis class has
  // max-norm cap max(|r_min|, |r_max|) and the squared loss on that range is
  // 2(r_max - r_min)-Lipschitz.
  static BoundConfig for_scale(const RatingScale& scale, double delta = 0.05) {
    const double a = std::max(std::abs(scale.r_min), std::abs(scale.r_max));
    return BoundConfig(a, delta, 2.0 * (scale.r_max - scale.r_min));
  }
};

// A mini-batch of (user, item) pairs; ratings are present for draws from the
// observed set and absent for uniform draws over the full grid.
struct LossBatch {
  std::vector<std::pair<int, int>> pairs;
  std::vector<double> ratings;

  bool labeled() const { return !ratings.empty(); }
  std::size_t size() const { return pairs.size(); }

  void validate() const {
    if (!ratings.empty() && ratings.size() != pairs.size())
      throw std::invalid_argument("LossBatch: ratings misaligned with pairs");
  }
};

}  // namespace damf
