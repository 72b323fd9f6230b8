#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "cornering/dynamics.hpp"
#include "cornering/pidl.hpp"
#include "support.hpp"

using namespace cornering;
using cornering::testing::rel_diff;

namespace {

const VehicleParams kCar = scale_test_vehicle();

Trajectory clean(double duration = 10.0) {
  return simulate(kCar, 8.14, 9.71, sine_steer(), 1.2, 0.01, duration);
}

nn::Matrix constant_outputs(Eigen::Index n, double caf, double car) {
  nn::Matrix out(n, 2);
  out.col(0).setConstant(caf);
  out.col(1).setConstant(car);
  return out;
}

double physics(const Trajectory& tr, double caf, double car,
               std::array<double, 2> alpha = {1.0, 10.0}) {
  return physics_loss(constant_outputs(static_cast<Eigen::Index>(tr.size()), caf, car),
                      tr, kCar, alpha)
      .loss;
}

// Shared training results so each long run happens once.
struct Trained {
  StiffnessEstimate first;
  StiffnessEstimate second;
  StiffnessEstimate unit_alpha;
};

const Trained& trained() {
  static const Trained t = [] {
    PidlConfig cfg;
    Trained out;
    out.first = train_pidl(clean(), kCar, cfg);
    out.second = train_pidl(clean(), kCar, cfg);
    cfg.alpha_weights = {1.0, 1.0};
    out.unit_alpha = train_pidl(clean(), kCar, cfg);
    return out;
  }();
  return t;
}

}  // namespace

TEST(Features, SevenColumnsInFixedOrder) {
  const Trajectory tr = clean(2.0);
  const Features f = assemble_features(tr);
  ASSERT_EQ(f.raw.cols(), 7);
  ASSERT_EQ(f.raw.rows(), static_cast<Eigen::Index>(tr.size()));
  for (std::size_t i = 0; i < tr.size(); i += 37) {
    const auto k = static_cast<Eigen::Index>(i);
    EXPECT_EQ(f.raw(k, 0), tr.r[i]);
    EXPECT_EQ(f.raw(k, 1), tr.r_dot[i]);
    EXPECT_EQ(f.raw(k, 2), tr.v_y[i]);
    EXPECT_EQ(f.raw(k, 3), tr.v_y_dot[i]);
    EXPECT_EQ(f.raw(k, 4), tr.delta1[i]);
    EXPECT_EQ(f.raw(k, 5), tr.delta2[i]);
    EXPECT_EQ(f.raw(k, 6), tr.v_x[i]);
  }
}

TEST(Features, ZeroTrajectoryGivesZeroMatrix) {
  Trajectory tr = clean(1.0);
  for (auto* s : {&tr.v_x, &tr.v_y, &tr.r, &tr.a_y, &tr.r_dot, &tr.v_y_dot, &tr.delta1,
                  &tr.delta2}) {
    std::fill(s->begin(), s->end(), 0.0);
  }
  const Features f = assemble_features(tr);
  EXPECT_EQ(f.raw.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(f.standardized().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Features, StandardizationInverts) {
  const Features f = assemble_features(clean());
  const nn::Matrix z = f.standardized();
  EXPECT_LE((f.standardization.invert(z) - f.raw).cwiseAbs().maxCoeff(), 1e-12);
  for (Eigen::Index c = 0; c < 5; ++c) {
    EXPECT_NEAR(z.col(c).mean(), 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(z.col(c).array().square().mean()), 1.0, 1e-12);
  }
  EXPECT_EQ(f.standardization.scale[6], 1.0);
}

TEST(Features, MissingDerivedSignals) {
  Trajectory tr = clean(1.0);
  tr.v_y_dot.clear();
  EXPECT_THROW(assemble_features(tr), MissingField);
}

TEST(PhysicsLoss, VanishesAtTruth) {
  EXPECT_LE(physics(clean(), 8.14, 9.71), 1e-8);
  EXPECT_LE(physics(clean(), 8.14, 9.71, {1.0, 1.0}), 1e-8);
}

TEST(PhysicsLoss, IncreasesAwayFromTruth) {
  const Trajectory tr = clean();
  const double at_truth = physics(tr, 8.14, 9.71);
  EXPECT_GT(physics(tr, 8.14 * 1.1, 9.71), at_truth);
  EXPECT_GT(physics(tr, 8.14, 9.71 * 1.1), at_truth);
  for (double s : {0.8, 1.2}) {
    EXPECT_GE(physics(tr, 8.14 * s, 9.71), 100.0 * at_truth);
    EXPECT_GE(physics(tr, 8.14, 9.71 * s), 100.0 * at_truth);
    EXPECT_GT(physics(tr, 8.14 * s, 9.71), 0.0);
  }
}

TEST(PhysicsLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> stiff(1.5, 18.5), w(0.1, 20.0);
  std::uniform_int_distribution<int> len(10, 60);
  for (int trial = 0; trial < 50; ++trial) {
    const Trajectory tr =
        simulate(kCar, stiff(rng), stiff(rng), sine_steer(0.1, 0.7), 1.2, 0.01,
                 0.01 * len(rng));
    const auto n = static_cast<Eigen::Index>(tr.size());
    nn::Matrix out(n, 2);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = stiff(rng);
    const std::array<double, 2> alpha{w(rng), w(rng)};
    const LossAndGradient lg = physics_loss(out, tr, kCar, alpha);
    const double scale = lg.gradient.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      // The loss is quadratic in the outputs, so a wide step carries no
      // truncation error and keeps cancellation small.
      nn::Matrix up = out, down = out;
      const double h = 1e-3;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double fd = (physics_loss(up, tr, kCar, alpha).loss -
                         physics_loss(down, tr, kCar, alpha).loss) /
                        (2 * h);
      EXPECT_LT(std::abs(fd - lg.gradient.data()[i]),
                1e-6 * std::max({std::abs(fd), 1e-3 * scale}));
    }
  }
}

TEST(PhysicsLoss, ShapeAndFieldErrors) {
  const Trajectory tr = clean(1.0);
  EXPECT_THROW(physics_loss(nn::Matrix::Ones(5, 2), tr, kCar, {1.0, 1.0}), ShapeMismatch);
  Trajectory raw = tr;
  raw.r_dot.clear();
  EXPECT_THROW(physics_loss(constant_outputs(101, 8, 9), raw, kCar, {1.0, 1.0}),
               MissingField);
}

TEST(ConstancyLoss, Examples) {
  EXPECT_EQ(constancy_loss(constant_outputs(7, 3.0, 4.0)).loss, 0.0);
  nn::Matrix two(2, 2);
  two << 8.0, 5.0, 10.0, 5.0;
  EXPECT_DOUBLE_EQ(constancy_loss(two).loss, 1.0);
  EXPECT_THROW(constancy_loss(nn::Matrix(0, 2)), InsufficientData);
}

TEST(ConstancyLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> v(1.0, 19.0);
  std::uniform_int_distribution<int> len(1, 30);
  for (int trial = 0; trial < 50; ++trial) {
    nn::Matrix out(len(rng), 2);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = v(rng);
    const LossAndGradient lg = constancy_loss(out);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      nn::Matrix up = out, down = out;
      const double h = 1e-4;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double fd = (constancy_loss(up).loss - constancy_loss(down).loss) / (2 * h);
      EXPECT_NEAR(fd, lg.gradient.data()[i], 1e-8);
    }
  }
}

TEST(PidlSession, TotalLossGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    PidlConfig cfg;
    cfg.seed = seed;
    PidlSession session(kCar, cfg);
    session.set_data(derive_signals(synthesize_sensors(clean(2.0), NoiseModel{}), 5));
    auto loss = [&] { return session.evaluate(session.outputs()).loss; };
    session.network().backward(session.evaluate(session.outputs()).gradient.transpose());
    auto params = session.network().params();
    std::vector<std::pair<std::size_t, std::size_t>> index;
    double scale = 0.0;
    for (std::size_t b = 0; b < params.size(); ++b) {
      for (std::size_t k = 0; k < params[b].size; ++k) {
        index.emplace_back(b, k);
        scale = std::max(scale, std::abs(params[b].grad[k]));
      }
    }
    std::shuffle(index.begin(), index.end(), rng);
    index.resize(100);
    for (auto [b, k] : index) {
      const double analytic = params[b].grad[k];
      double& p = params[b].value[k];
      const double saved = p, h = 1e-6;
      p = saved + h;
      const double up = loss();
      p = saved - h;
      const double down = loss();
      p = saved;
      const double fd = (up - down) / (2 * h);
      EXPECT_LE(std::abs(fd - analytic),
                1e-5 * std::max({std::abs(fd), std::abs(analytic), 1e-3 * scale}))
          << "block " << b << " entry " << k;
    }
  }
}

TEST(PidlSession, StepBeforeDataIsUsageError) {
  PidlSession session(kCar, PidlConfig{});
  EXPECT_THROW(session.step(), UsageError);
}

TEST(PidlSession, OutputsStayInsideBounds) {
  PidlConfig cfg;
  cfg.iterations = 200;
  PidlSession session(kCar, cfg);
  session.set_data(clean(3.0));
  session.run();
  const nn::Matrix out = session.outputs();
  EXPECT_GT(out.minCoeff(), 1.0);
  EXPECT_LT(out.maxCoeff(), 19.0);
  EXPECT_EQ(session.loss_curve().size(), 200u);
}

TEST(PidlSession, EarlyStopEndsOnPlateau) {
  PidlConfig cfg;
  cfg.early_stop_window = 10;
  cfg.early_stop_tolerance = std::numeric_limits<double>::infinity();
  PidlSession session(kCar, cfg);
  session.set_data(clean(2.0));
  session.run();
  EXPECT_EQ(session.loss_curve().size(), 11u);
}

TEST(PidlSession, DivergentLossReportsIteration) {
  Trajectory tr = clean(2.0);
  tr.v_y_dot[5] = std::numeric_limits<double>::quiet_NaN();
  PidlSession session(kCar, PidlConfig{});
  session.set_data(tr);
  try {
    session.step();
    FAIL() << "expected TrainingFailure";
  } catch (const TrainingFailure& e) {
    EXPECT_EQ(e.iteration(), 0u);
  }
}

TEST(TrainPidl, RejectsConstantSteering) {
  Trajectory tr = simulate(kCar, 8.14, 9.71, step_steer(0.1, 0.0), 1.2, 0.01, 2.0);
  EXPECT_THROW(train_pidl(tr, kCar, PidlConfig{}), InsufficientData);
}

TEST(TrainPidl, RejectsInvalidConfig) {
  PidlConfig cfg;
  cfg.iterations = 0;
  EXPECT_THROW(train_pidl(clean(1.0), kCar, cfg), InvalidParameter);
  cfg = PidlConfig{};
  cfg.alpha_weights = {0.0, 1.0};
  EXPECT_THROW(train_pidl(clean(1.0), kCar, cfg), InvalidParameter);
}

TEST(TrainPidl, RecoversNoiselessStiffness) {
  const StiffnessEstimate& e = trained().first;
  EXPECT_EQ(e.method, Method::kPidl);
  EXPECT_LT(rel_diff(e.caf, 8.14), 0.05) << e.caf;
  EXPECT_LT(rel_diff(e.car, 9.71), 0.05) << e.car;
  EXPECT_LE(e.loss_curve.size(), 20000u);
}

TEST(TrainPidl, RecoversWithUnitAlphaWeights) {
  const StiffnessEstimate& e = trained().unit_alpha;
  EXPECT_LT(rel_diff(e.caf, 8.14), 0.05) << e.caf;
  EXPECT_LT(rel_diff(e.car, 9.71), 0.05) << e.car;
}

TEST(TrainPidl, LossDecreases) {
  const auto& curve = trained().first.loss_curve;
  ASSERT_GE(curve.size(), 2u);
  EXPECT_LT(curve.back(), curve.front());
}

TEST(TrainPidl, BitwiseDeterministic) {
  const Trained& t = trained();
  EXPECT_EQ(t.first.caf, t.second.caf);
  EXPECT_EQ(t.first.car, t.second.car);
  EXPECT_EQ(t.first.loss_curve, t.second.loss_curve);
}

TEST(TrainPidl, FittedModelReplaysTrajectory) {
  const Trajectory tr = clean();
  const StiffnessEstimate& e = trained().first;
  const Trajectory sim = replay(kCar, e.caf, e.car, tr);
  EXPECT_LT(trajectory_error(tr, sim), 0.05 * trajectory_error(tr, replay(kCar, 4.0, 5.0, tr)));
}

TEST(Aggregate, FourEstimateFrontSet) {
  std::vector<StiffnessEstimate> ests;
  const double caf[] = {7.26, 8.67, 8.59, 8.05};
  const double car[] = {9.83, 9.45, 10.35, 9.21};
  for (int k = 0; k < 4; ++k) ests.push_back({caf[k], car[k]});
  const AggregateEstimate a = aggregate(ests);
  EXPECT_NEAR(a.mean_caf, 8.14, 0.01);
  EXPECT_NEAR(a.mean_car, 9.71, 0.01);
  EXPECT_NEAR(100.0 * a.rel_unc_caf, 8.65, 0.05);
  EXPECT_NEAR(100.0 * a.rel_unc_car, 5.87, 0.05);
}

TEST(Aggregate, IdenticalEstimatesHaveNoUncertainty) {
  const AggregateEstimate a = aggregate({{5.0, 6.0}, {5.0, 6.0}, {5.0, 6.0}});
  EXPECT_EQ(a.rel_unc_caf, 0.0);
  EXPECT_EQ(a.rel_unc_car, 0.0);
  EXPECT_EQ(a.mean_caf, 5.0);
}

TEST(Aggregate, NeedsTwoEstimates) {
  EXPECT_THROW(aggregate({{5.0, 6.0}}), InsufficientData);
  EXPECT_THROW(aggregate({}), InsufficientData);
}
