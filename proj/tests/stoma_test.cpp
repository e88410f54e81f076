#include "support.hpp"

#include <gtest/gtest.h>

using namespace narrowplan;
using namespace testing_support;

namespace {

// One link with a tip ball sweeping past a post; a single ball never rejects.
ObjectiveContext sweep_context() {
  const ArmModel arm({1.0}, {}, {}, {{0, 1.0, 0.05}});
  return line_context(arm, Scene({Circle{Vec2(1.0, 0.12), 0.05}}, 0.1), vec({-0.4}), vec({0.4}), 1, 1.0, 1.0, 2);
}

StomaResult trap_run(std::uint64_t s, const StomaConfig& cfg = {}) {
  static const ObjectiveContext ctx = trap_context();
  std::mt19937_64 rng(1000 + s);
  const Trajectory t = trap_start(ctx, rng);
  const TrajectoryProblem prob(ctx, t, Window::whole(t.num_support()), 1.25e-2);
  return stoma_run(prob, prob.initial(), cfg, rng);
}

}  // namespace

TEST(Moments, FirstStepIsExactSquare) {
  const Vec g = vec({0.3, -2.0, 5.0});
  const MomentState m = update_moments({}, g, 0.9);
  EXPECT_EQ(m.k, 1);
  EXPECT_LT((m.corrected - g.cwiseProduct(g)).norm(), 1e-14);
}

TEST(Moments, ConstantGradientIsFixedPoint) {
  const Vec g = vec({0.3, -2.0});
  MomentState m;
  for (int k = 1; k <= 30; ++k) {
    m = update_moments(m, g, 0.9);
    EXPECT_LT((m.corrected - g.cwiseProduct(g)).norm(), 1e-12) << k;
  }
}

TEST(Moments, TwoStepHandValue) {
  MomentState m = update_moments({}, vec({1.0}), 0.9);
  m = update_moments(m, vec({2.0}), 0.9);
  EXPECT_NEAR(m.corrected[0], 0.49 / 0.19, 1e-12);
  EXPECT_NEAR(m.corrected[0], 2.5789, 1e-4);
}

TEST(Moments, RejectsBadDecay) {
  EXPECT_THROW(update_moments({}, vec({1.0}), 1.0), InvalidArgument);
  EXPECT_THROW(update_moments({}, vec({1.0}), 0.0), InvalidArgument);
}

TEST(StepSizes, StaysInsideBand) {
  MomentState m;
  m = update_moments(m, vec({1.0, 4.0, 0.5}), 0.9);
  StomaConfig cfg;
  for (int k = 1; k <= 10; ++k) {
    const double alpha = 2.0 / (k + 1);
    const StomaStepSizes s = stoma_step_sizes(m, alpha, cfg);
    EXPECT_NEAR(s.b_min, 0.2 / 4.0, 1e-9);
    EXPECT_GE(s.lambda / s.b_min, 1.0);
    EXPECT_LE(s.lambda / s.b_min, 1.0 + alpha / 4.0);
  }
  cfg.scaling = StepScaling::inverse;
  EXPECT_NEAR(stoma_step_sizes(m, 1.0, cfg).b_min, 1.25 / 4.0, 1e-9);
}

TEST(StochasticGradient, EmptySceneScalesPriorGradient) {
  const auto ctx = line_context(uniform_arm({1.0, 1.0}, {0.5, 1.0}, 0.05), Scene({}, 0.1), vec({0.0, 0.0}),
                                vec({1.0, -1.0}), 5, 1.0, 1.0, 4);
  std::mt19937_64 rng(6);
  const Trajectory t = jittered(ctx.gp.mean(), 0.1, rng);
  const Window w = Window::whole(5);
  const Vec g = gp_cost_grad(ctx.gp, t, w).grad;
  for (int i = 0; i < 50; ++i) {
    const SgSample s = sample_sg(ctx, t, w, 0.01, SgOptions{}, rng);
    EXPECT_GE(s.draw.rho_hat, 0.01);
    EXPECT_LE(s.draw.rho_hat, 0.01 / 0.05);
    EXPECT_LT((s.gradient - s.draw.rho_hat * g).norm(), 1e-14 * s.gradient.norm());
  }
}

TEST(StochasticGradient, FullDrawEqualsDeterministicGradient) {
  const auto ctx = trap_context();
  std::mt19937_64 rng(7);
  const Trajectory t = trap_start(ctx, rng);
  const Window w = Window::whole(t.num_support());
  const SgDraw d{0.0125, ctx.spec, 180.0};
  const Vec want = total_cost_grad(ctx, t, w, 0.0125, ctx.spec).grad;
  EXPECT_LT((sg_gradient(ctx, t, w, d) - want).norm(), 1e-12 * want.norm());
}

TEST(StochasticGradient, MeanMatchesEnumeration) {
  const auto ctx = sweep_context();
  std::mt19937_64 rng(8);
  const Trajectory t = jittered(ctx.gp.mean(), 0.05, rng);
  const Window w = Window::whole(1);
  SgOptions opt;
  opt.n_ip_max = 2;
  const double rho = 0.05;

  // E[rho/u] for u ~ U(u_min, 1), and the average over the 9 count pairs
  const double mean_rho_hat = rho * std::log(1.0 / opt.u_min) / (1.0 - opt.u_min);
  Vec want = mean_rho_hat * gp_cost_grad(ctx.gp, t, w).grad;
  for (int a = 0; a <= 2; ++a)
    for (int b = 0; b <= 2; ++b) want += obs_grad(ctx, t, w, UpsampleSpec{{a, b}}, 180.0) / 9.0;
  ASSERT_GT(obs_grad(ctx, t, w, ctx.spec).norm(), 0.0);

  const int count = 40000;
  Vec got = Vec::Zero(want.size());
  for (int i = 0; i < count; ++i) got += sample_sg(ctx, t, w, rho, opt, rng).gradient;
  got /= count;
  EXPECT_LT((got - want).norm(), 0.03 * want.norm());
}

TEST(Stoma, NotStuckInputReturnsWithoutSteps) {
  const auto ctx = trap_context();
  auto clear = ctx;
  clear.scene = Scene({}, 0.1);
  const Trajectory& t = clear.gp.mean();
  const TrajectoryProblem prob(clear, t, Window::whole(t.num_support()), 1.25e-2);
  std::mt19937_64 rng(1);
  const StomaResult r = stoma_run(prob, prob.initial(), StomaConfig{}, rng);
  EXPECT_EQ(r.status, StomaStatus::unstuck);
  ASSERT_EQ(r.trace.steps.size(), 1u);
  EXPECT_EQ(r.trace.steps[0].lambda, 0.0);
  EXPECT_EQ(r.x, prob.initial());
}

TEST(Stoma, EscapesTrap) {
  int unstuck = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const StomaResult r = trap_run(s);
    if (r.status == StomaStatus::unstuck) {
      ++unstuck;
      EXPECT_LE(r.trace.rounds.size(), 5u);
      EXPECT_FALSE(r.last_check.is_stuck);
    }
  }
  EXPECT_GE(unstuck, 9);
}

TEST(Stoma, ReinitializesFromCheapestCandidate) {
  const ObjectiveContext ctx = trap_context();
  std::mt19937_64 rng(1000);
  const Trajectory t = trap_start(ctx, rng);
  const TrajectoryProblem prob(ctx, t, Window::whole(t.num_support()), 1.25e-2);
  std::mt19937_64 replay = rng;
  std::vector<Vec> cands = prob.sample_candidates(12, replay);
  cands.insert(cands.begin(), prob.initial());
  std::vector<double> costs;
  for (auto& c : cands) {
    prob.project(c);
    costs.push_back(prob.cost(c));
  }
  ASSERT_EQ(costs.size(), 13u);
  const auto it = std::min_element(costs.begin(), costs.end());

  const StomaResult r = stoma_run(prob, prob.initial(), StomaConfig{}, rng);
  ASSERT_FALSE(r.trace.rounds.empty());
  EXPECT_EQ(r.trace.rounds[0].reinit_index, static_cast<int>(it - costs.begin()));
  EXPECT_DOUBLE_EQ(r.trace.rounds[0].reinit_cost, *it);
}

TEST(Stoma, StepSizesStayInBand) {
  StomaConfig cfg;
  cfg.exit = StomaExit::collision_free;  // run longer than the stuck exit would
  int checked = 0;
  for (std::uint64_t s = 0; s < 3; ++s)
    for (const auto& st : trap_run(s, cfg).trace.steps) {
      if (st.lambda == 0.0) continue;
      EXPECT_GE(st.ratio(), 1.0);
      EXPECT_LE(st.ratio(), 1.0 + st.alpha / 4.0 + 1e-15);
      ++checked;
    }
  EXPECT_GT(checked, 10);
}

TEST(Stoma, SameSeedSameResult) {
  const StomaResult a = trap_run(3);
  const StomaResult b = trap_run(3);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.status, b.status);
  ASSERT_EQ(a.trace.steps.size(), b.trace.steps.size());
  for (std::size_t i = 0; i < a.trace.steps.size(); ++i) EXPECT_EQ(a.trace.steps[i].cost, b.trace.steps[i].cost);
}

TEST(Stoma, BestSoFarNeverIncreases) {
  StomaConfig cfg;
  cfg.exit = StomaExit::collision_free;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const StomaResult r = trap_run(s, cfg);
    for (std::size_t i = 1; i < r.trace.rounds.size(); ++i)
      EXPECT_LE(r.trace.rounds[i].best_so_far, r.trace.rounds[i - 1].best_so_far);
  }
}
