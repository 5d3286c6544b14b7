#include "noir/control.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace noir {

// ---------------------------------------------------------------------------
// Horizon cost

namespace {

Vector stack(const StateVector &x1, std::span<const InputVector> g_plan)
{
  const auto size = x1.size();
  Vector z(size * static_cast<Eigen::Index>(g_plan.size() + 1));
  z.head(size) = x1;
  for (std::size_t h = 0; h < g_plan.size(); ++h) {
    if (g_plan[h].size() != size)
      throw std::invalid_argument("cost: input vector has wrong length");
    z.segment(size * static_cast<Eigen::Index>(h + 1), size) = g_plan[h];
  }
  return z;
}

}  // namespace

double CostOperator::evaluate(const StateVector &x1, std::span<const InputVector> g_plan) const
{
  if (static_cast<int>(g_plan.size()) != horizon || x1.size() != selector.rows())
    throw std::invalid_argument("CostOperator::evaluate: dimension mismatch");
  const Vector z = stack(x1, g_plan);
  return z.dot(weight * z);
}

CostOperator cost_operator(const HorizonOperators &ops)
{
  const int n = ops.horizon();
  const auto size = ops.theta(0).rows();
  CostOperator cost;
  cost.horizon = n;
  cost.selector = Matrix::Identity(size, size);
  cost.selector(size - 1, size - 1) = 0.0;

  // x_{h+1} = M_h z with M_h = [Theta_h, Theta_{h-1}, ..., Theta_0, 0, ..., 0].
  const auto cols = size * (n + 1);
  cost.weight = Matrix::Zero(cols, cols);
  Matrix FM(size, cols);
  for (int h = 1; h <= n; ++h) {
    FM.setZero();
    FM.leftCols(size) = ops.theta(h);
    for (int l = 1; l <= h; ++l)
      FM.middleCols(size * l, size) = ops.theta(h - l);
    FM.row(size - 1).setZero();
    cost.weight.noalias() += FM.transpose() * FM;
  }
  return cost;
}

CostOperator cost_operator(const TransitionOperator &op, int n_tau)
{
  return cost_operator(horizon(op, n_tau));
}

double evaluate_cost(const StateVector &x, std::span<const InputVector> g_plan, const TransitionOperator &op, int n_tau)
{
  if (n_tau < 1 || static_cast<int>(g_plan.size()) != n_tau)
    throw std::invalid_argument("evaluate_cost: expected " + std::to_string(n_tau) + " input vectors, got " +
                                std::to_string(g_plan.size()));
  StateVector state = x;
  double total = 0.0;
  for (const auto &g : g_plan) {
    state = step(state, g, op);
    total += state.head(state.size() - 1).squaredNorm();
  }
  return total;
}

// ---------------------------------------------------------------------------
// Boundary inflow

std::string ConstraintKey::describe() const
{
  const std::string h = "step " + std::to_string(step);
  switch (kind) {
  case Kind::inflow_upper:
    return "u[inlet " + std::to_string(index) + ", " + h + "] <= u_max";
  case Kind::inflow_lower:
    return "u[inlet " + std::to_string(index) + ", " + h + "] >= 0";
  case Kind::budget:
    return "sum u[" + h + "] <= u0";
  case Kind::density_upper:
    return "rho[road " + std::to_string(index) + ", " + h + "] <= rho_max - rho_margin";
  case Kind::density_lower:
    return "rho[road " + std::to_string(index) + ", " + h + "] >= 0";
  }
  return "?";
}

namespace {

constexpr double kRegularization = 1e-10;

struct InflowProgram
{
  qp::Problem problem;
  std::vector<ConstraintKey> rows;
  std::vector<ConstraintKey> infeasible_constants;  // rows no inflow can satisfy
};

InflowProgram build_inflow_program(const StateVector &x, const TransitionOperator &op, const Vector &d_forecast,
                                   const ControlConfig &cfg, const NoirGraph &graph, BudgetMode mode)
{
  const int size = graph.state_size();
  const int n_in = graph.n_inlets;
  const int n_tau = cfg.horizon;
  const int n_var = n_in * n_tau;
  if (x.size() != size || op.size() != size || d_forecast.size() != graph.n_roads - n_in)
    throw std::invalid_argument("solve_boundary_inflow: dimension mismatch");

  const auto ops = horizon(op, n_tau);
  const auto cost = cost_operator(ops);

  InputVector forecast = InputVector::Zero(size);
  forecast.segment(n_in, d_forecast.size()) = d_forecast;

  // z = z0 + T u over z = [x_1; g_1; ...; g_n].
  std::vector<InputVector> g0(n_tau, forecast);
  const Vector z0 = stack(x, g0);
  std::vector<Eigen::Index> pos(n_var);
  for (int h = 0; h < n_tau; ++h)
    for (int i = 0; i < n_in; ++i)
      pos[h * n_in + i] = static_cast<Eigen::Index>(size) * (h + 1) + i;

  const Vector Wz0 = cost.weight * z0;
  InflowProgram prog;
  auto &p = prog.problem;
  p.hessian.resize(n_var, n_var);
  p.linear.resize(n_var);
  for (int a = 0; a < n_var; ++a) {
    p.linear[a] = 2.0 * Wz0[pos[a]];
    for (int b = 0; b < n_var; ++b)
      p.hessian(a, b) = 2.0 * cost.weight(pos[a], pos[b]);
    p.hessian(a, a) += kRegularization;
  }

  // Predicted densities x_{h+1} = c_h + S_h u for h = 1..n.
  std::vector<Vector> constant(n_tau);
  std::vector<Matrix> sensitivity(n_tau, Matrix::Zero(size, n_var));
  for (int h = 1; h <= n_tau; ++h) {
    Vector c = ops.theta(h) * x;
    for (int l = 1; l <= h; ++l) {
      c += ops.theta(h - l) * forecast;
      for (int i = 0; i < n_in; ++i)
        sensitivity[h - 1].col((l - 1) * n_in + i) = ops.theta(h - l).col(i);
    }
    constant[h - 1] = c;
  }

  std::vector<Vector> g_rows;
  std::vector<double> h_rows;
  auto add_row = [&](Vector row, double bound, ConstraintKey key) {
    g_rows.push_back(std::move(row));
    h_rows.push_back(bound);
    prog.rows.push_back(key);
  };

  using Kind = ConstraintKey::Kind;
  for (int h = 0; h < n_tau; ++h)
    for (int i = 0; i < n_in; ++i) {
      Vector e = Vector::Zero(n_var);
      e[h * n_in + i] = 1.0;
      add_row(e, cfg.u_max, {Kind::inflow_upper, h + 1, i + 1});
      add_row(-e, 0.0, {Kind::inflow_lower, h + 1, i + 1});
    }

  if (mode == BudgetMode::exact) {
    p.eq_matrix = Matrix::Zero(n_tau, n_var);
    p.eq_rhs = Vector::Constant(n_tau, cfg.u0);
    for (int h = 0; h < n_tau; ++h)
      p.eq_matrix.block(h, h * n_in, 1, n_in).setOnes();
  } else {
    p.eq_matrix.resize(0, n_var);
    p.eq_rhs.resize(0);
    for (int h = 0; h < n_tau; ++h) {
      Vector row = Vector::Zero(n_var);
      row.segment(h * n_in, n_in).setOnes();
      add_row(row, cfg.u0, {Kind::budget, h + 1, 0});
    }
  }

  // Density rows. With u >= 0 and sum_i u_{h,i} <= u0, the largest reachable
  // value of a row is c + u0 * sum_h max_i S[h,i]; rows that cannot bind are
  // dropped.
  const double cap = cfg.rho_max - cfg.rho_margin;
  for (int h = 0; h < n_tau; ++h) {
    const Matrix &S = sensitivity[h];
    for (int r = 0; r < graph.n_roads; ++r) {
      const double c = constant[h][r];
      double reach = c;
      double floor = c;
      for (int l = 0; l < n_tau; ++l) {
        const auto block = S.row(r).segment(l * n_in, n_in);
        reach += cfg.u0 * std::max(block.maxCoeff(), 0.0);
        floor += cfg.u0 * std::min(block.minCoeff(), 0.0);
      }
      const ConstraintKey upper{Kind::density_upper, h + 1, r + 1};
      const ConstraintKey lower{Kind::density_lower, h + 1, r + 1};
      const bool coupled = S.row(r).cwiseAbs().maxCoeff() > 0.0;
      if (reach > cap) {
        if (coupled)
          add_row(S.row(r).transpose(), cap - c, upper);
        else
          prog.infeasible_constants.push_back(upper);
      }
      if (floor < 0.0) {
        if (coupled)
          add_row(-S.row(r).transpose(), c, lower);
        else
          prog.infeasible_constants.push_back(lower);
      }
    }
  }

  p.ineq_matrix.resize(static_cast<Eigen::Index>(g_rows.size()), n_var);
  p.ineq_rhs.resize(static_cast<Eigen::Index>(h_rows.size()));
  for (std::size_t k = 0; k < g_rows.size(); ++k) {
    p.ineq_matrix.row(static_cast<Eigen::Index>(k)) = g_rows[k].transpose();
    p.ineq_rhs[static_cast<Eigen::Index>(k)] = h_rows[k];
  }
  return prog;
}

}  // namespace

InflowPlan solve_boundary_inflow(const StateVector &x, const TransitionOperator &op, const Vector &d_forecast,
                                 const ControlConfig &cfg, const NoirGraph &graph, BudgetMode mode,
                                 std::span<const ConstraintKey> warm)
{
  if (cfg.horizon < 1)
    throw std::invalid_argument("solve_boundary_inflow: horizon must be >= 1");
  const InflowProgram prog = build_inflow_program(x, op, d_forecast, cfg, graph, mode);
  if (!prog.infeasible_constants.empty()) {
    std::string message = "inflow program infeasible: " + prog.infeasible_constants.front().describe() +
                          " is violated for every inflow";
    throw InflowInfeasible(message, prog.infeasible_constants);
  }

  std::vector<int> warm_rows;
  for (const auto &key : warm) {
    const auto it = std::find(prog.rows.begin(), prog.rows.end(), key);
    if (it != prog.rows.end())
      warm_rows.push_back(static_cast<int>(it - prog.rows.begin()));
  }

  qp::Solution sol;
  try {
    sol = qp::solve(prog.problem, warm_rows);
  } catch (const qp::InfeasibleError &e) {
    std::vector<ConstraintKey> violated;
    std::string message = "inflow program infeasible:";
    for (int row : e.equality_rows()) {
      violated.push_back({ConstraintKey::Kind::budget, row + 1, 0});
      message += " [sum u[step " + std::to_string(row + 1) + "] = u0]";
    }
    for (int row : e.inequality_rows()) {
      violated.push_back(prog.rows[row]);
      message += " [" + prog.rows[row].describe() + "]";
    }
    throw InflowInfeasible(message, std::move(violated));
  }

  const int n_in = graph.n_inlets;
  InflowPlan plan;
  plan.relaxed = mode == BudgetMode::at_most;
  plan.residuals = sol.residuals;
  plan.iterations = sol.iterations;
  for (int row : sol.active_set)
    plan.active.push_back(prog.rows[row]);

  InputVector forecast = InputVector::Zero(graph.state_size());
  forecast.segment(n_in, d_forecast.size()) = d_forecast;
  std::vector<InputVector> g_plan;
  for (int h = 0; h < cfg.horizon; ++h) {
    Vector u = sol.x.segment(h * n_in, n_in).cwiseMax(0.0);
    InputVector g = forecast;
    g.head(n_in) = u;
    g_plan.push_back(std::move(g));
    plan.u.push_back(std::move(u));
  }
  plan.objective = evaluate_cost(x, g_plan, op, cfg.horizon);
  return plan;
}

InflowPlan plan_boundary_inflow(const StateVector &x, const TransitionOperator &op, const Vector &d_forecast,
                                const ControlConfig &cfg, const NoirGraph &graph, std::span<const ConstraintKey> warm)
{
  try {
    return solve_boundary_inflow(x, op, d_forecast, cfg, graph, BudgetMode::exact, warm);
  } catch (const InflowInfeasible &) {
    return solve_boundary_inflow(x, op, d_forecast, cfg, graph, BudgetMode::at_most, warm);
  }
}

// ---------------------------------------------------------------------------
// Phase timers and admissible actions

PhaseTimers PhaseTimers::start(const NoirGraph &graph)
{
  PhaseTimers t;
  t.elapsed.assign(graph.junctions.size(), 0);
  t.tau.assign(graph.junctions.size(), 0);
  return t;
}

std::size_t AdmissibleSet::size() const
{
  std::size_t total = 1;
  for (const auto &c : candidates)
    total *= c.size();
  return total;
}

bool AdmissibleSet::contains(const PhaseAssignment &assignment) const
{
  if (assignment.size() != candidates.size())
    return false;
  for (std::size_t j = 0; j < candidates.size(); ++j)
    if (std::find(candidates[j].begin(), candidates[j].end(), assignment[j]) == candidates[j].end())
      return false;
  return true;
}

std::vector<PhaseAssignment> AdmissibleSet::enumerate() const
{
  std::vector<PhaseAssignment> result;
  const std::size_t m = candidates.size();
  std::vector<std::size_t> digit(m, 0);
  for (;;) {
    PhaseAssignment a(m);
    for (std::size_t j = 0; j < m; ++j)
      a[j] = candidates[j][digit[j]];
    result.push_back(std::move(a));
    // odometer increment, last junction fastest
    std::size_t j = m;
    while (j > 0) {
      --j;
      if (++digit[j] < candidates[j].size())
        break;
      digit[j] = 0;
      if (j == 0)
        return result;
    }
    if (m == 0)
      return result;
  }
}

AdmissibleSet admissible_actions(const PhaseAssignment &current, const PhaseTimers &timers, const NoirGraph &graph)
{
  check_assignment(graph, current);
  if (timers.tau.size() != graph.junctions.size())
    throw std::invalid_argument("admissible_actions: timer vector has wrong length");
  AdmissibleSet set;
  for (std::size_t j = 0; j < graph.junctions.size(); ++j) {
    const int k = current[j];
    const int next = graph.junctions[j].successor(k);
    if (timers.tau[j] == 1 || next == k)
      set.candidates.push_back({next});
    else
      set.candidates.push_back({k, next});
  }
  return set;
}

PhaseTimers update_timers(const NoirGraph &graph, const PhaseAssignment &previous, const PhaseAssignment &chosen,
                          const PhaseTimers &timers)
{
  if (!admissible_actions(previous, timers, graph).contains(chosen))
    throw std::invalid_argument("update_timers: chosen phase assignment is not admissible");
  PhaseTimers next = timers;
  for (std::size_t j = 0; j < graph.junctions.size(); ++j) {
    // A forced rotation resets the timer even for a single-phase cycle.
    const bool rotated = chosen[j] != previous[j] || timers.tau[j] == 1;
    next.elapsed[j] = rotated ? 0 : timers.elapsed[j] + 1;
    next.tau[j] = next.elapsed[j] / graph.junctions[j].max_activation;
  }
  return next;
}

// ---------------------------------------------------------------------------
// Phase selection

namespace {

class CandidateCost
{
public:
  CandidateCost(const StateVector &x, std::span<const InputVector> g_plan, const NoirGraph &graph,
                const RateTable &rates)
      : x_(x), g_plan_(g_plan), graph_(graph), rates_(rates)
  {}

  double operator()(const PhaseAssignment &a)
  {
    ++evaluations;
    return evaluate_cost(x_, g_plan_, assemble(graph_, a, rates_), static_cast<int>(g_plan_.size()));
  }

  std::size_t evaluations = 0;

private:
  const StateVector &x_;
  std::span<const InputVector> g_plan_;
  const NoirGraph &graph_;
  const RateTable &rates_;
};

PhaseSelection exhaustive_search(const AdmissibleSet &set, CandidateCost &cost)
{
  PhaseSelection best;
  best.objective = std::numeric_limits<double>::infinity();
  for (auto &candidate : set.enumerate()) {
    const double value = cost(candidate);
    if (value < best.objective) {
      best.objective = value;
      best.assignment = std::move(candidate);
    }
  }
  return best;
}

PhaseSelection coordinate_descent(const AdmissibleSet &set, CandidateCost &cost)
{
  PhaseSelection sel;
  const std::size_t m = set.candidates.size();
  sel.assignment.resize(m);
  for (std::size_t j = 0; j < m; ++j)
    sel.assignment[j] = set.candidates[j].front();
  sel.objective = cost(sel.assignment);
  sel.sweep_objectives.push_back(sel.objective);

  const std::size_t max_sweeps = std::max<std::size_t>(m, 1);
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    bool changed = false;
    for (std::size_t j = 0; j < m; ++j) {
      const int held = sel.assignment[j];
      int best_phase = held;
      for (int option : set.candidates[j]) {
        if (option == held)
          continue;
        PhaseAssignment trial = sel.assignment;
        trial[j] = option;
        const double value = cost(trial);
        if (value < sel.objective) {
          sel.objective = value;
          best_phase = option;
        }
      }
      if (best_phase != held) {
        sel.assignment[j] = best_phase;
        changed = true;
      }
    }
    sel.sweep_objectives.push_back(sel.objective);
    if (!changed)
      break;
  }
  return sel;
}

}  // namespace

PhaseSelection select_phase(const StateVector &x, std::span<const InputVector> g_plan, const PhaseAssignment &current,
                            const PhaseTimers &timers, const NoirGraph &graph, const RateTable &rates,
                            PhaseSearch search)
{
  const AdmissibleSet set = admissible_actions(current, timers, graph);
  CandidateCost cost(x, g_plan, graph, rates);

  if (search == PhaseSearch::automatic)
    search = graph.junction_count() <= kExhaustiveJunctionLimit ? PhaseSearch::exhaustive
                                                                : PhaseSearch::coordinate_descent;

  PhaseSelection sel;
  if (set.size() == 1) {
    sel.assignment = set.enumerate().front();
    sel.objective = cost(sel.assignment);
  } else if (search == PhaseSearch::exhaustive) {
    sel = exhaustive_search(set, cost);
  } else {
    sel = coordinate_descent(set, cost);
  }
  sel.evaluations = cost.evaluations;
  return sel;
}

}  // namespace noir
