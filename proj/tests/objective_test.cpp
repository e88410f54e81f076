#include "support.hpp"

#include <gtest/gtest.h>

using namespace narrowplan;
using namespace testing_support;

namespace {

ObjectiveContext three_link_context(Scene scene, int n_ip = 3) {
  return line_context(uniform_arm({1.0, 0.8, 0.6}, {0.0, 0.5, 1.0}, 0.06), std::move(scene), vec({0.2, 0.5, -0.4}),
                      vec({1.4, -0.6, 0.7}), 6, 2.0, 1.0, n_ip);
}

Scene cluttered() {
  return Scene({Circle{Vec2(1.2, 1.0), 0.3}, Box{Vec2(0.9, -0.6), Vec2(1.5, -0.2)}, Circle{Vec2(-0.5, 1.2), 0.25},
                Circle{Vec2(2.0, 0.4), 0.2}},
               0.2);
}

}  // namespace

TEST(ObsCost, EmptySceneIsZero) {
  const auto ctx = three_link_context(Scene({}, 0.1));
  EXPECT_EQ(obs_cost(ctx, ctx.gp.mean(), ctx.spec), 0.0);
  EXPECT_EQ(obs_grad(ctx, ctx.gp.mean(), ctx.spec).norm(), 0.0);
}

TEST(ObsCost, SingleRestingBall) {
  // one ball at (1,0), obstacle surface 0.05 beyond its rim: c = (0.05-0.1)^2/0.2,
  // weight v_min, at 3 intervals x 2 points + the goal state
  const ArmModel arm({1.0}, {}, {}, {{0, 1.0, 0.05}});
  const auto ctx = line_context(arm, Scene({Circle{Vec2(1.0, 0.2), 0.1}}, 0.1), vec({0.0}), vec({0.0}), 2, 1.0, 1.0, 1);
  EXPECT_NEAR(obs_cost(ctx, ctx.gp.mean(), ctx.spec), 7 * 0.0125 * 1e-3, 1e-15);
}

TEST(ObsCost, GrowsWithMargin) {
  double prev = 0.0;
  for (double eps : {0.05, 0.1, 0.2, 0.4}) {
    const Scene s({Circle{Vec2(0.0, 0.0), 5.0}}, eps);
    const auto ctx = three_link_context(s);
    const double c = obs_cost(ctx, ctx.gp.mean(), ctx.spec);
    EXPECT_GT(c, prev);
    prev = c;
  }
}

TEST(ObsGrad, FrozenWeightGradientMatchesFiniteDifferences) {
  const auto ctx = three_link_context(cluttered());
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const Trajectory t = jittered(ctx.gp.mean(), 0.15, rng);
    ASSERT_GT(obs_cost(ctx, t, ctx.spec), 0.0);
    EXPECT_LT(frozen_gradient_error(ctx, t, 0.05, 1e-6), 1e-4);
  }
}

TEST(ObsGrad, ExactGradientMatchesFiniteDifferences) {
  const auto ctx = three_link_context(cluttered());
  std::mt19937_64 rng(13);
  const Window w{2, 4};
  for (int trial = 0; trial < 5; ++trial) {
    const Trajectory t = jittered(ctx.gp.mean(), 0.15, rng);
    Trajectory probe = t;
    const Vec fd = central_difference(
        [&](const Vec& x) {
          probe.set_window_vector(w, x);
          return obs_cost(ctx, probe, w, ctx.spec);
        },
        t.window_vector(w), 1e-6);
    const Vec g = obs_grad_exact(ctx, t, w, ctx.spec);
    EXPECT_LT((g - fd).norm() / std::max(fd.norm(), 1e-12), 1e-5);
  }
}

TEST(ObsGrad, AngleRejectionDropsOpposingBall) {
  const auto ctx = resting_context(opposition_scene());
  const Trajectory& t = ctx.gp.mean();
  const Vec all = obs_grad(ctx, t, ctx.spec, 180.0);
  const Vec cut = obs_grad(ctx, t, ctx.spec, 179.0);
  // only the inner ball survives: same as a scene holding only its post
  auto inner_only = ctx;
  inner_only.scene = Scene({std::get<Circle>(opposition_scene().obstacles()[0])}, 0.1);
  const Vec want = obs_grad(inner_only, t, ctx.spec, 180.0);
  EXPECT_LT((cut - want).norm(), 1e-15 * std::max(1.0, want.norm()));
  EXPECT_GT((all - cut).norm(), 0.1 * want.norm());
}

TEST(BallGradients, SingleCollidingBallHasNoAngles) {
  const auto ctx = resting_context(aligned_scene());
  const auto rep = ball_gradients(ctx, vec({0.0, 0.0}), vec({0.0, 0.0}));
  int nonzero = 0;
  for (const auto& g : rep.ball_grads) nonzero += g.norm() > 0.0;
  EXPECT_EQ(nonzero, 1);
  for (const auto& a : rep.angles_deg) EXPECT_FALSE(a.has_value());
  EXPECT_EQ(rep.max_angle(), 0.0);
}

TEST(BallGradients, OppositePushesAre180Degrees) {
  const auto ctx = resting_context(opposition_scene());
  const auto rep = ball_gradients(ctx, vec({0.0, 0.0}), vec({0.0, 0.0}));
  ASSERT_TRUE(rep.angles_deg[1].has_value());
  EXPECT_NEAR(*rep.angles_deg[1], 180.0, 1e-5);
}

TEST(BallGradients, PrefixSumsMatchDirectSummation) {
  const auto ctx = three_link_context(cluttered());
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  int with_contacts = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Vec q = vec({u(rng), u(rng), u(rng)});
    const Vec qd = vec({u(rng), u(rng), u(rng)});
    const auto terms = ball_terms(ctx, q, qd);
    for (double tol : {180.0, 120.0, 95.0}) {
      const auto rep = ball_gradients(ctx, q, qd, tol);
      Vec acc = Vec::Zero(3);
      for (std::size_t i = 0; i < terms.size(); ++i) {
        const Vec& g = terms[i].joint_grad;
        bool take = true;
        if (g.norm() >= 1e-12 && acc.norm() >= 1e-12) {
          const double angle = std::acos(std::clamp(g.dot(acc) / (g.norm() * acc.norm()), -1.0, 1.0)) * 180.0 / kPi;
          take = angle <= tol;
        }
        if (take) acc += g;
        EXPECT_LT((rep.prefix[i] - acc).norm(), 1e-12);
      }
    }
    int colliding = 0;
    for (const auto& t : terms) colliding += t.cost > 0.0;
    with_contacts += colliding >= 2;
  }
  EXPECT_GT(with_contacts, 5);
}

TEST(TotalCost, MeanInEmptySceneIsZero) {
  const auto ctx = three_link_context(Scene({}, 0.1));
  const CostGrad cg = total_cost_grad(ctx, ctx.gp.mean(), 1.0, ctx.spec);
  EXPECT_EQ(cg.cost, 0.0);
  EXPECT_EQ(cg.grad.norm(), 0.0);
}

TEST(TotalCost, LinearInRhoWithoutObstacles) {
  const auto ctx = three_link_context(Scene({}, 0.1));
  std::mt19937_64 rng(3);
  const Trajectory t = jittered(ctx.gp.mean(), 0.1, rng);
  const CostGrad a = total_cost_grad(ctx, t, 0.3, ctx.spec);
  const CostGrad b = total_cost_grad(ctx, t, 0.6, ctx.spec);
  EXPECT_NEAR(b.cost, 2.0 * a.cost, 1e-12 * b.cost);
  EXPECT_LT((b.grad - 2.0 * a.grad).norm(), 1e-12 * b.grad.norm());
  EXPECT_THROW(total_cost_grad(ctx, t, 0.0, ctx.spec), InvalidArgument);
}

TEST(CheckStuck, ClearTrajectoryIsNeverStuck) {
  const auto ctx = resting_context(Scene({Circle{Vec2(0.0, 3.0), 0.2}}, 0.1));
  const auto r = check_stuck(ctx, ctx.gp.mean(), 0.0, 0.0);
  EXPECT_FALSE(r.is_stuck);
  EXPECT_EQ(r.obs_cost, 0.0);
}

TEST(CheckStuck, OppositionIsStuck) {
  const auto ctx = resting_context(opposition_scene());
  const auto r = check_stuck(ctx, ctx.gp.mean(), 95.0, 1e-4);
  EXPECT_TRUE(r.is_stuck);
  EXPECT_GT(r.obs_cost, 1e-4);
  EXPECT_NEAR(r.max_angle_deg, 180.0, 1e-5);
  EXPECT_FALSE(r.offending.empty());
  for (const auto& p : r.offending) EXPECT_EQ(p.ball, 1);
}

TEST(CheckStuck, AlignedPushIsNotStuck) {
  const auto ctx = resting_context(aligned_scene());
  const auto r = check_stuck(ctx, ctx.gp.mean(), 95.0, 1e-4);
  EXPECT_FALSE(r.is_stuck);
  EXPECT_GT(r.obs_cost, 1e-4);
}

TEST(CheckStuck, MonotoneInBothTolerances) {
  const auto ctx = resting_context(opposition_scene());
  const double cost = check_stuck(ctx, ctx.gp.mean(), 180.0, 0.0).obs_cost;
  bool prev = true;
  for (double phi : {0.0, 60.0, 95.0, 150.0, 179.9, 180.0}) {
    const bool s = check_stuck(ctx, ctx.gp.mean(), phi, 1e-4).is_stuck;
    EXPECT_TRUE(prev || !s);
    prev = s;
  }
  EXPECT_TRUE(check_stuck(ctx, ctx.gp.mean(), 95.0, 0.5 * cost).is_stuck);
  EXPECT_FALSE(check_stuck(ctx, ctx.gp.mean(), 95.0, cost).is_stuck);
  EXPECT_FALSE(check_stuck(ctx, ctx.gp.mean(), 180.0, 1e-4).is_stuck);
}
