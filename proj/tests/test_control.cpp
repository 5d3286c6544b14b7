#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "noir/control.hpp"
#include "noir/dynamics.hpp"
#include "support/toy.hpp"

using namespace noir;

namespace {

PhaseAssignment random_assignment(const NoirGraph &g, std::mt19937_64 &rng)
{
  PhaseAssignment a;
  for (const auto &j : g.junctions)
    a.push_back(std::uniform_int_distribution<int>(1, j.phase_count())(rng));
  return a;
}

Vector random_state(const NoirGraph &g, double scale, std::mt19937_64 &rng)
{
  std::uniform_real_distribution<double> u(0.0, scale);
  Vector x = Vector::Zero(g.state_size());
  for (int i = 0; i < g.n_roads; ++i)
    x[i] = u(rng);
  return x;
}

std::vector<InputVector> random_plan(const NoirGraph &g, int n, std::mt19937_64 &rng)
{
  std::vector<InputVector> plan;
  for (int h = 0; h < n; ++h) {
    Vector x = random_state(g, 2.0, rng);
    plan.push_back(x);
  }
  return plan;
}

PhaseTimers random_timers(const NoirGraph &g, std::mt19937_64 &rng)
{
  PhaseTimers t = PhaseTimers::start(g);
  for (std::size_t j = 0; j < g.junctions.size(); ++j) {
    t.elapsed[j] = std::uniform_int_distribution<int>(0, g.junctions[j].max_activation)(rng);
    t.tau[j] = t.elapsed[j] / g.junctions[j].max_activation;
  }
  return t;
}

// Admissible set by filtering the full product of phase indices.
std::vector<PhaseAssignment> brute_force_admissible(const NoirGraph &g, const PhaseAssignment &current,
                                                    const PhaseTimers &timers)
{
  std::vector<PhaseAssignment> all{{}};
  for (const auto &j : g.junctions) {
    std::vector<PhaseAssignment> next;
    for (const auto &prefix : all)
      for (int k = 1; k <= j.phase_count(); ++k) {
        auto a = prefix;
        a.push_back(k);
        next.push_back(a);
      }
    all = std::move(next);
  }
  std::vector<PhaseAssignment> result;
  for (const auto &a : all) {
    bool ok = true;
    for (std::size_t j = 0; j < g.junctions.size() && ok; ++j) {
      const bool rotates = a[j] == g.junctions[j].successor(current[j]);
      const bool holds = timers.tau[j] == 0 && a[j] == current[j];
      ok = rotates || holds;
    }
    if (ok)
      result.push_back(a);
  }
  return result;
}

Junction three_phase_junction()
{
  Junction j;
  j.id = 1;
  j.phases.resize(3);
  j.max_activation = 3;
  return j;
}

}  // namespace

TEST_CASE("chain cost by hand")
{
  const auto s = toy::chain2();
  const auto op = assemble(s, {});
  Vector x(3);
  x << 4, 2, 0;
  std::vector<InputVector> g{Vector(3)};
  g[0] << 1, 0.5, 0;
  CHECK(evaluate_cost(x, g, op, 1) == doctest::Approx(21.25).epsilon(1e-15));
  CHECK(cost_operator(op, 1).evaluate(x, g) == doctest::Approx(21.25).epsilon(1e-13));

  std::vector<InputVector> zero(2, Vector::Zero(3));
  CHECK(evaluate_cost(Vector::Zero(3), zero, op, 2) == 0.0);
  CHECK_THROWS_AS(evaluate_cost(x, zero, op, 3), std::invalid_argument);
}

TEST_CASE("cost matrix form equals the rollout")
{
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + trial % 3;  // N = 3m + 1 <= 10
    const auto s = toy::corridor(m, 2 + trial % 2, &rng);
    const auto op = assemble(s, random_assignment(s.graph, rng));
    const int n = 1 + trial % 5;
    const Vector x = random_state(s.graph, 20.0, rng);
    const auto plan = random_plan(s.graph, n, rng);
    const double rollout = evaluate_cost(x, plan, op, n);
    const double quadratic = cost_operator(op, n).evaluate(x, plan);
    CHECK(std::abs(rollout - quadratic) < 1e-9 * std::max(1.0, rollout));
  }
}

TEST_CASE("cost matrix is symmetric positive semidefinite")
{
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = toy::corridor(1 + trial % 3, 2, &rng);
    const auto W = cost_operator(assemble(s, random_assignment(s.graph, rng)), 1 + trial % 4).weight;
    CHECK((W - W.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(W);
    CHECK(eig.eigenvalues().minCoeff() > -1e-9);
  }
}

TEST_CASE("single inlet takes the whole budget")
{
  auto s = toy::chain2();
  s.control.u0 = 5.0;
  s.control.u_max = 10.0;
  s.control.horizon = 3;
  const auto op = assemble(s, {});
  Vector x(3);
  x << 2, 1, 0;
  const auto plan = solve_boundary_inflow(x, op, Vector::Constant(1, 0.5), s.control, s.graph);
  REQUIRE(plan.u.size() == 3);
  for (const auto &u : plan.u)
    CHECK(u[0] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK_FALSE(plan.relaxed);
  CHECK(plan.residuals.max() <= 1e-8);
}

TEST_CASE("three-inlet program matches a grid search over the simplex")
{
  std::mt19937_64 rng(19);
  auto s = toy::corridor(2, 2, &rng);  // 3 inlets
  s.control.horizon = 2;
  s.control.u0 = 1.0;
  s.control.u_max = 1.0;
  const Vector d = Vector::Constant(s.graph.n_roads - s.graph.n_inlets, 0.5);

  for (int trial = 0; trial < 5; ++trial) {
    const auto op = assemble(s, random_assignment(s.graph, rng));
    const Vector x = random_state(s.graph, 10.0, rng);
    const auto plan = solve_boundary_inflow(x, op, d, s.control, s.graph);
    CHECK(plan.residuals.max() <= 1e-8);

    const int steps = 20;  // resolution 0.05
    std::vector<Vector> simplex;
    for (int a = 0; a <= steps; ++a)
      for (int b = 0; a + b <= steps; ++b) {
        Vector u(3);
        u << a * 0.05, b * 0.05, (steps - a - b) * 0.05;
        simplex.push_back(u);
      }
    double best = std::numeric_limits<double>::infinity();
    for (const auto &u1 : simplex)
      for (const auto &u2 : simplex) {
        std::vector<InputVector> g{make_input(s.graph, u1, d), make_input(s.graph, u2, d)};
        best = std::min(best, evaluate_cost(x, g, op, 2));
      }
    CHECK(plan.objective <= best + 1e-9);
    CHECK(best - plan.objective < 1e-2);
  }
}

TEST_CASE("inflow plan is locally optimal and keeps the budget")
{
  std::mt19937_64 rng(23);
  auto s = toy::corridor(3, 2, &rng);
  s.control.horizon = 3;
  s.control.u0 = 4.0;
  s.control.u_max = 4.0;
  const Vector d = Vector::Constant(s.graph.n_roads - s.graph.n_inlets, 0.5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto op = assemble(s, random_assignment(s.graph, rng));
    const Vector x = random_state(s.graph, 15.0, rng);
    const auto plan = solve_boundary_inflow(x, op, d, s.control, s.graph);
    for (const auto &u : plan.u) {
      CHECK(std::abs(u.sum() - 4.0) <= 1e-9);
      CHECK(u.minCoeff() >= 0.0);
    }
    // moving 0.01 between two inlets of one step stays feasible when both
    // coordinates have room, and must not lower the cost
    for (std::size_t h = 0; h < plan.u.size(); ++h)
      for (int a = 0; a < s.graph.n_inlets; ++a)
        for (int b = 0; b < s.graph.n_inlets; ++b) {
          if (a == b || plan.u[h][a] < 0.01 || plan.u[h][b] > 4.0 - 0.01)
            continue;
          auto moved = plan.u;
          moved[h][a] -= 0.01;
          moved[h][b] += 0.01;
          std::vector<InputVector> g;
          for (const auto &u : moved)
            g.push_back(make_input(s.graph, u, d));
          CHECK(evaluate_cost(x, g, op, 3) >= plan.objective - 1e-6);
        }
  }
}

TEST_CASE("paper53 first step from the empty network")
{
  const auto s = load_scenario(std::string(NOIR_SCENARIO_DIR) + "/paper53.json");
  const auto op = assemble(s, initial_assignment(s.graph));
  const Vector x = Vector::Zero(s.graph.state_size());
  const Vector d = Vector::Constant(s.graph.n_roads - s.graph.n_inlets, s.disturbance.forecast_mean());
  const auto plan = solve_boundary_inflow(x, op, d, s.control, s.graph);
  CHECK(std::abs(plan.u.front().sum() - 31.0) <= 1e-9);
  CHECK(plan.residuals.max() <= 1e-8);

  std::vector<InputVector> g;
  for (const auto &u : plan.u)
    g.push_back(make_input(s.graph, u, d));
  Vector state = x;
  for (const auto &gi : g) {
    state = step(state, gi, op);
    CHECK(state.head(s.graph.n_roads).maxCoeff() <= 40.0 + 1e-9);
  }
}

TEST_CASE("infeasible budgets fall back to the relaxed program")
{
  auto s = toy::chain2();
  s.control.rho_max = 5.0;
  s.control.horizon = 1;
  const auto op = assemble(s, {});
  Vector x(3);
  x << 4, 0, 0;  // road 1 keeps 2 and would receive all of u0 = 5
  const Vector d = Vector::Constant(1, 0.0);
  CHECK_THROWS_AS(solve_boundary_inflow(x, op, d, s.control, s.graph), InflowInfeasible);

  const auto plan = plan_boundary_inflow(x, op, d, s.control, s.graph);
  CHECK(plan.relaxed);
  CHECK(plan.u.front()[0] <= 3.0 + 1e-9);
  CHECK(plan.u.front().sum() <= 5.0 + 1e-9);

  x << 20, 0, 0;  // road 2 receives 10 vehicles whatever the inflow
  try {
    plan_boundary_inflow(x, op, d, s.control, s.graph);
    FAIL("expected InflowInfeasible");
  } catch (const InflowInfeasible &e) {
    const auto &keys = e.violated();
    CHECK(std::any_of(keys.begin(), keys.end(), [](const ConstraintKey &k) {
      return k.kind == ConstraintKey::Kind::density_upper && k.index == 2;
    }));
  }
}

TEST_CASE("admissible actions at a three-phase junction")
{
  NoirGraph g;
  g.junctions.push_back(three_phase_junction());
  PhaseTimers t = PhaseTimers::start(g);

  auto candidates = admissible_actions({2}, t, g).candidates.front();
  CHECK(candidates == std::vector<int>{2, 3});

  t.elapsed = {3};
  t.tau = {1};
  CHECK(admissible_actions({2}, t, g).candidates.front() == std::vector<int>{3});
  CHECK(admissible_actions({3}, t, g).candidates.front() == std::vector<int>{1});
}

TEST_CASE("admissible actions match predicate filtering")
{
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 60; ++trial) {
    const int m = 1 + trial % 4;
    const auto g = toy::corridor(m, 2 + trial % 2).graph;
    const auto current = random_assignment(g, rng);
    const auto timers = random_timers(g, rng);
    auto expected = brute_force_admissible(g, current, timers);
    auto actual = admissible_actions(current, timers, g).enumerate();
    std::sort(expected.begin(), expected.end());
    std::sort(actual.begin(), actual.end());
    CHECK(actual == expected);
  }
}

TEST_CASE("timer bookkeeping")
{
  NoirGraph g;
  g.junctions.push_back(three_phase_junction());
  PhaseTimers t = PhaseTimers::start(g);
  t.elapsed = {2};

  auto kept = update_timers(g, {1}, {1}, t);
  CHECK(kept.elapsed == std::vector<int>{3});
  CHECK(kept.tau == std::vector<int>{1});

  CHECK_THROWS_AS(update_timers(g, {1}, {1}, kept), std::invalid_argument);
  auto rotated = update_timers(g, {1}, {2}, kept);
  CHECK(rotated.elapsed == std::vector<int>{0});
  CHECK(rotated.tau == std::vector<int>{0});

  CHECK_THROWS_AS(update_timers(g, {1}, {3}, t), std::invalid_argument);
}

TEST_CASE("forced rotation resets a single-phase junction")
{
  NoirGraph g;
  Junction j;
  j.id = 1;
  j.phases.resize(1);
  j.max_activation = 2;
  g.junctions.push_back(j);
  PhaseTimers t = PhaseTimers::start(g);
  for (int k = 0; k < 10; ++k) {
    CHECK(admissible_actions({1}, t, g).size() == 1);
    t = update_timers(g, {1}, {1}, t);
    CHECK(t.elapsed[0] <= 2);
  }
}

TEST_CASE("selector serves the loaded approach")
{
  const auto s = toy::corridor(1);
  const RateTable rates(s);
  Vector x = Vector::Zero(s.graph.state_size());
  x[1] = 30.0;  // side inlet, blocked under phase 1
  std::vector<InputVector> plan(2, Vector::Zero(s.graph.state_size()));
  const auto sel = select_phase(x, plan, {1}, PhaseTimers::start(s.graph), s.graph, rates);
  CHECK(sel.assignment == PhaseAssignment{2});
  CHECK(sel.evaluations == 2);
}

TEST_CASE("forced rotations need no search")
{
  const auto s = toy::corridor(3);
  const RateTable rates(s);
  PhaseTimers t = PhaseTimers::start(s.graph);
  t.elapsed.assign(3, 3);
  t.tau.assign(3, 1);
  std::vector<InputVector> plan(2, Vector::Zero(s.graph.state_size()));
  const auto sel = select_phase(Vector::Zero(s.graph.state_size()), plan, {1, 2, 1}, t, s.graph, rates);
  CHECK(sel.assignment == PhaseAssignment{2, 1, 2});
  CHECK(sel.evaluations == 1);
}

TEST_CASE("coordinate descent on a two-junction toy equals enumeration")
{
  const auto s = toy::corridor(2);
  const RateTable rates(s);
  Vector x = Vector::Zero(s.graph.state_size());
  x[1] = 12.0;  // side inlet at junction 1
  x[2] = 3.0;   // side inlet at junction 2
  x[0] = 8.0;   // main inlet
  std::vector<InputVector> plan(3, Vector::Constant(s.graph.state_size(), 0.5));
  const auto timers = PhaseTimers::start(s.graph);
  const auto cd = select_phase(x, plan, {1, 1}, timers, s.graph, rates, PhaseSearch::coordinate_descent);
  const auto ex = select_phase(x, plan, {1, 1}, timers, s.graph, rates, PhaseSearch::exhaustive);
  CHECK(ex.evaluations == 4);
  CHECK(cd.assignment == ex.assignment);
  CHECK(cd.objective == ex.objective);
}

TEST_CASE("coordinate descent rarely misses the optimum on two junctions")
{
  std::mt19937_64 rng(53);
  int agree = 0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    const auto s = toy::corridor(2, 2, &rng);
    const RateTable rates(s);
    const Vector x = random_state(s.graph, 20.0, rng);
    const auto plan = random_plan(s.graph, 3, rng);
    const auto current = random_assignment(s.graph, rng);
    const auto timers = PhaseTimers::start(s.graph);
    const auto cd = select_phase(x, plan, current, timers, s.graph, rates, PhaseSearch::coordinate_descent);
    const auto ex = select_phase(x, plan, current, timers, s.graph, rates, PhaseSearch::exhaustive);
    CHECK(cd.objective >= ex.objective);
    if (cd.objective == ex.objective)
      ++agree;
  }
  MESSAGE("coordinate descent optimal in " << agree << "/" << trials);
  CHECK(agree >= 0.9 * trials);
}

TEST_CASE("coordinate descent sweeps never increase the cost")
{
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 40; ++trial) {
    const auto s = toy::corridor(6, 2 + trial % 2, &rng);
    const RateTable rates(s);
    const Vector x = random_state(s.graph, 25.0, rng);
    const auto plan = random_plan(s.graph, 4, rng);
    const auto current = random_assignment(s.graph, rng);
    const auto timers = random_timers(s.graph, rng);
    const auto sel = select_phase(x, plan, current, timers, s.graph, rates, PhaseSearch::coordinate_descent);
    REQUIRE_FALSE(sel.sweep_objectives.empty());
    for (std::size_t i = 1; i < sel.sweep_objectives.size(); ++i)
      CHECK(sel.sweep_objectives[i] <= sel.sweep_objectives[i - 1]);
    CHECK(sel.sweep_objectives.size() <= 7);
    CHECK(admissible_actions(current, timers, s.graph).contains(sel.assignment));
  }
}
