#include "damf/estimators.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "damf/synth.hpp"
#include "test_util.hpp"

using namespace damf;
namespace dt = damf::testing;

namespace {

FactorModel constant_model(int m, int n, double value) {
  Matrix user = Matrix::Constant(m, 1, value);
  Matrix item = Matrix::Ones(n, 1);
  return FactorModel(std::move(user), std::move(item));
}

FactorModel model_from_rows(std::vector<double> user_rows, std::vector<double> item_rows) {
  Matrix user(static_cast<Eigen::Index>(user_rows.size()), 1);
  Matrix item(static_cast<Eigen::Index>(item_rows.size()), 1);
  for (Eigen::Index r = 0; r < user.rows(); ++r) user(r, 0) = user_rows[r];
  for (Eigen::Index r = 0; r < item.rows(); ++r) item(r, 0) = item_rows[r];
  return FactorModel(std::move(user), std::move(item));
}

}  // namespace

TEST(PointLoss, HandValues) {
  EXPECT_DOUBLE_EQ(point_loss(3.0, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(point_loss(2.5, 2.5), 0.0);
  EXPECT_DOUBLE_EQ(point_loss(1.0, 5.0), 16.0);  // equals Delta on a 1-5 scale
  EXPECT_DOUBLE_EQ(point_loss(1.0, 5.0), point_loss(5.0, 1.0));
}

TEST(IdealLoss, PerfectAndHandCase) {
  // 1x2 grid, R = [2, 4], predictions [2, 2] -> (0 + 4) / 2 = 2
  Matrix truth(1, 2);
  truth << 2.0, 4.0;
  const FactorModel model = constant_model(1, 2, 2.0);
  EXPECT_DOUBLE_EQ(ideal_loss(truth, model), 2.0);

  Matrix constant = Matrix::Constant(3, 4, 2.0);
  EXPECT_DOUBLE_EQ(ideal_loss(constant, constant_model(3, 4, 2.0)), 0.0);
  EXPECT_THROW(ideal_loss(Matrix::Ones(2, 2), constant_model(3, 4, 1.0)),
               std::invalid_argument);
}

TEST(NaiveLoss, HandValuesAndCoincidence) {
  // observed {(r=3, pred=1), (r=2, pred=2)} -> (4 + 0) / 2 = 2
  const FactorModel model = model_from_rows({1.0, 2.0}, {1.0, 1.0});
  const InteractionSet data(2, 2, {{0, 0, 3.0}, {1, 1, 2.0}});
  EXPECT_DOUBLE_EQ(naive_loss(data, model), 2.0);

  // fully observed data: naive equals ideal exactly
  Matrix truth(2, 2);
  truth << 1.0, 2.0, 3.0, 4.0;
  std::vector<Triple> all;
  for (int u = 0; u < 2; ++u)
    for (int i = 0; i < 2; ++i) all.push_back({u, i, truth(u, i)});
  const InteractionSet full(2, 2, all);
  const FactorModel any = init_factors(2, 2, 2, 5);
  EXPECT_DOUBLE_EQ(naive_loss(full, any), ideal_loss(truth, any));

  LossBatch empty;
  EXPECT_THROW(naive_loss(empty, model), std::invalid_argument);
}

TEST(IpsLoss, HandValueAndCollapse) {
  // 2x2 grid, one observed pair with loss 4 and P = 0.5 -> (1/4)(4 / 0.5) = 2
  const FactorModel model = model_from_rows({1.0, 0.0}, {1.0, 0.0});
  const InteractionSet data(2, 2, {{0, 0, 3.0}});
  EXPECT_DOUBLE_EQ(ips_loss(data, model, PropensityMap::uniform(0.5)), 2.0);

  // P = 1 and fully observed: equals ideal loss
  Matrix truth(2, 2);
  truth << 1.0, 2.0, 3.0, 4.0;
  std::vector<Triple> all;
  for (int u = 0; u < 2; ++u)
    for (int i = 0; i < 2; ++i) all.push_back({u, i, truth(u, i)});
  const InteractionSet full(2, 2, all);
  const FactorModel any = init_factors(2, 2, 2, 6);
  EXPECT_DOUBLE_EQ(ips_loss(full, any, PropensityMap::uniform(1.0)), ideal_loss(truth, any));
}

TEST(IpsLoss, ZeroPropensityOnObservedPairThrows) {
  Matrix p(1, 2);
  p << 0.0, 0.5;
  const PropensityMap propensity = PropensityMap::dense(p, /*allow_zero=*/true);
  const FactorModel model = constant_model(1, 2, 1.0);
  const InteractionSet observed_zero(1, 2, {{0, 0, 2.0}});
  EXPECT_THROW(ips_loss(observed_zero, model, propensity), std::invalid_argument);
  const InteractionSet observed_ok(1, 2, {{0, 1, 2.0}});
  EXPECT_NO_THROW(ips_loss(observed_ok, model, propensity));
}

TEST(IpsLoss, MonteCarloUnbiasedness) {
  SynthSpec spec;
  spec.num_users = 10;
  spec.num_items = 10;
  spec.selection_strength = 1.0;
  spec.base_rate = 0.3;
  spec.seed = 11;
  const TrueWorld world = gen_true_world(spec);
  const FactorModel model = init_factors(10, 10, 3, 99);
  const double target = ideal_loss(world.ratings, model);

  std::vector<double> draws;
  for (int rep = 0; rep < 3000; ++rep) {
    const InteractionSet obs =
        sample_observation(world.ratings, world.propensities, 1000 + rep, spec.scale);
    draws.push_back(ips_loss(obs, model, world.propensities));
  }
  EXPECT_LT(std::abs(dt::mean(draws) - target), 3.0 * dt::standard_error(draws));
}

TEST(DrLoss, ZeroImputationCollapsesToIpsBitwise) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    SynthSpec spec;
    spec.num_users = 6;
    spec.num_items = 5;
    spec.base_rate = 0.5;
    spec.seed = rng.next_u64();
    const TrueWorld world = gen_true_world(spec);
    const InteractionSet obs =
        sample_observation(world.ratings, world.propensities, spec.seed + 1, spec.scale);
    const FactorModel model = init_factors(6, 5, 2, rng.next_u64());
    const Matrix zeros = Matrix::Zero(6, 5);
    EXPECT_EQ(dr_loss(obs, model, world.propensities, zeros),
              ips_loss(obs, model, world.propensities));
  }
}

TEST(DrLoss, ExactImputationGivesIdealLoss) {
  // With the imputation set to the exact losses, every observed correction
  // term cancels and only the imputation field remains, which averages to
  // the ideal loss.
  Matrix truth(2, 3);
  truth << 1.0, 2.0, 3.0, 4.0, 5.0, 1.0;
  const FactorModel model = constant_model(2, 3, 2.0);
  Matrix exact(2, 3);
  for (int u = 0; u < 2; ++u)
    for (int i = 0; i < 3; ++i) exact(u, i) = point_loss(truth(u, i), model.predict(u, i));
  const InteractionSet one(2, 3, {{0, 0, truth(0, 0)}});
  EXPECT_DOUBLE_EQ(dr_loss(one, model, PropensityMap::uniform(1.0), exact),
                   ideal_loss(truth, model));
}

TEST(DrLoss, MonteCarloUnbiasednessWithArbitraryImputation) {
  SynthSpec spec;
  spec.num_users = 8;
  spec.num_items = 8;
  spec.selection_strength = 0.8;
  spec.base_rate = 0.3;
  spec.seed = 21;
  const TrueWorld world = gen_true_world(spec);
  const FactorModel model = init_factors(8, 8, 3, 77);
  const double target = ideal_loss(world.ratings, model);

  Rng imp_rng(5);
  Matrix imputation(8, 8);
  for (int u = 0; u < 8; ++u)
    for (int i = 0; i < 8; ++i) imputation(u, i) = imp_rng.uniform(0.0, 8.0);

  std::vector<double> draws;
  for (int rep = 0; rep < 3000; ++rep) {
    const InteractionSet obs =
        sample_observation(world.ratings, world.propensities, 5000 + rep, spec.scale);
    draws.push_back(dr_loss(obs, model, world.propensities, imputation));
  }
  EXPECT_LT(std::abs(dt::mean(draws) - target), 3.0 * dt::standard_error(draws));
}

TEST(NaiveLoss, BiasedUnderMnar) {
  // Selection correlated with the rating biases the naive estimator for a
  // constant predictor far beyond Monte-Carlo noise.
  SynthSpec spec;
  spec.num_users = 12;
  spec.num_items = 12;
  spec.selection_strength = 1.0;
  spec.base_rate = 0.3;
  spec.seed = 3;
  const TrueWorld world = gen_true_world(spec);
  const FactorModel constant = constant_model(12, 12, 3.0);
  const double target = ideal_loss(world.ratings, constant);

  std::vector<double> draws;
  for (int rep = 0; rep < 2000; ++rep) {
    const InteractionSet obs =
        sample_observation(world.ratings, world.propensities, 9000 + rep, spec.scale);
    draws.push_back(naive_loss(obs, constant));
  }
  EXPECT_GT(std::abs(dt::mean(draws) - target), 5.0 * dt::standard_error(draws));
}

TEST(PmdGap, TrivialZeroes) {
  const FactorModel model = model_from_rows({1.0, 2.0}, {1.0, 1.0});
  LossBatch batch;
  batch.pairs = {{0, 0}, {1, 1}};
  // identical batches: the two means cancel exactly for any adversary
  const FactorModel adversary = model_from_rows({0.5, -2.0}, {1.0, 3.0});
  EXPECT_DOUBLE_EQ(pmd_gap(model, adversary, batch, batch), 0.0);
  // adversary == model: the loss is zero on both batches
  LossBatch other;
  other.pairs = {{1, 0}};
  EXPECT_DOUBLE_EQ(pmd_gap(model, model, other, batch), 0.0);
  LossBatch empty;
  EXPECT_THROW(pmd_gap(model, adversary, empty, batch), std::invalid_argument);
}

TEST(PmdGap, HandValue) {
  // mcar pair: model predicts 2, adversary 0 -> loss 4
  // mnar pair: model predicts 3, adversary 3 -> loss 0; gap = 4
  const FactorModel model = model_from_rows({1.0}, {2.0, 3.0});
  const FactorModel adversary = model_from_rows({1.0}, {0.0, 3.0});
  LossBatch mcar, mnar;
  mcar.pairs = {{0, 0}};
  mnar.pairs = {{0, 1}};
  EXPECT_DOUBLE_EQ(pmd_gap(model, adversary, mcar, mnar), 4.0);
}

TEST(PmdEmpirical, IdenticalBatchesGiveZero) {
  const FactorModel model = init_factors(4, 4, 2, 17);
  LossBatch batch;
  batch.pairs = {{0, 0}, {1, 2}, {3, 3}};
  TrainConfig config;
  config.dim = 2;
  config.max_iterations = 50;
  config.learning_rate = 0.05;
  config.seed = 1;
  const PmdResult result = pmd_empirical(model, batch, batch, config);
  EXPECT_NEAR(result.gap, 0.0, 1e-6);
}

TEST(PmdEmpirical, FiniteSetMatchesBruteForceEnumeration) {
  const FactorModel model = init_factors(3, 3, 2, 4);
  std::vector<FactorModel> candidates{init_factors(3, 3, 2, 50), init_factors(3, 3, 2, 51),
                                      init_factors(3, 3, 2, 52)};
  LossBatch mcar, mnar;
  mcar.pairs = {{0, 0}, {1, 1}, {2, 2}};
  mnar.pairs = {{0, 1}, {2, 0}};

  // independent oracle: direct summation over the batches per candidate
  double best = -1e300;
  std::size_t best_idx = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    double mcar_sum = 0.0, mnar_sum = 0.0;
    for (auto [u, i] : mcar.pairs) {
      const double d = model.predict(u, i) - candidates[c].predict(u, i);
      mcar_sum += d * d;
    }
    for (auto [u, i] : mnar.pairs) {
      const double d = model.predict(u, i) - candidates[c].predict(u, i);
      mnar_sum += d * d;
    }
    const double gap = mcar_sum / 3.0 - mnar_sum / 2.0;
    if (gap > best) {
      best = gap;
      best_idx = c;
    }
  }
  const auto [gap, argmax] = pmd_over_candidates(model, candidates, mcar, mnar);
  EXPECT_DOUBLE_EQ(gap, best);
  EXPECT_EQ(argmax, best_idx);
}

TEST(PmdEmpirical, AscentFromModelIsStationaryAndNondecreasing) {
  // Starting the ascent at the model itself is a stationary point: the gap
  // stays exactly zero, hence nondecreasing.
  const FactorModel model = init_factors(4, 5, 2, 23);
  LossBatch mcar, mnar;
  mcar.pairs = {{0, 0}, {1, 3}};
  mnar.pairs = {{2, 2}, {3, 4}};
  TrainConfig config;
  config.dim = 2;
  config.max_iterations = 25;
  config.seed = 8;
  const PmdResult result = pmd_empirical(model, model, mcar, mnar, config);
  EXPECT_NEAR(result.gap, 0.0, 1e-8);
}

TEST(PmdEmpirical, AscentImprovesOverRandomStart) {
  const FactorModel model = init_factors(6, 6, 3, 41);
  Rng rng(2);
  LossBatch mcar = sample_uniform_pairs(6, 6, 12, rng);
  LossBatch mnar = sample_uniform_pairs(6, 6, 12, rng);
  TrainConfig config;
  config.dim = 3;
  config.max_iterations = 400;
  config.learning_rate = 0.05;
  config.seed = 12;
  const FactorModel start = init_factors(6, 6, 3, 1234, rng_stream::kInitAuxiliary);
  const double initial_gap = pmd_gap(model, start, mcar, mnar);
  const PmdResult result = pmd_empirical(model, start, mcar, mnar, config);
  EXPECT_GE(result.gap, initial_gap);
  EXPECT_GE(result.gap, 0.0);
}

TEST(ComplexitySurrogate, HandValuesAndScaling) {
  EXPECT_DOUBLE_EQ(complexity_surrogate(1.0, 2, 2, 4), 1.0);
  const double base = complexity_surrogate(2.0, 10, 30, 100);
  EXPECT_NEAR(complexity_surrogate(2.0, 10, 30, 200), base / std::sqrt(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(complexity_surrogate(0.0, 5, 5, 10), 0.0);
  EXPECT_THROW(complexity_surrogate(1.0, 2, 2, 0), std::invalid_argument);
}

TEST(BoundValue, SumOfComponents) {
  EXPECT_DOUBLE_EQ(bound_value(0.0, 0.0, 0.0, 0.0).total(), 0.0);
  EXPECT_DOUBLE_EQ(bound_value(1.0, 0.5, 0.2, 0.3).total(), 2.0);
  EXPECT_THROW(bound_value(1.0, -0.1, 0.0, 0.0), std::invalid_argument);
}

TEST(ConfidenceTerm, HandArithmetic) {
  // 3 * 16 * sqrt(log(120) / 2000) = 2.34844...
  EXPECT_NEAR(confidence_term(16.0, 0.05, 1000), 2.3484, 1e-3);
  const double direct = 3.0 * 16.0 * std::sqrt(std::log(6.0 / 0.05) / (2.0 * 1000.0));
  EXPECT_DOUBLE_EQ(confidence_term(16.0, 0.05, 1000), direct);
}

TEST(ComplexityTerm, Coefficients) {
  // 2L (3 R + 2 R')
  EXPECT_DOUBLE_EQ(complexity_term(2.0, 0.5, 0.25), 2.0 * 2.0 * (1.5 + 0.5));
}
