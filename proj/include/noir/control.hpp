#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "noir/dynamics.hpp"
#include "noir/network.hpp"
#include "noir/qp.hpp"
#include "noir/scenario.hpp"

namespace noir {

// ---------------------------------------------------------------------------
// Horizon cost

/// Quadratic form of the horizon cost over z = [x_1; g_1; ...; g_n]:
///   sum_{h=1..n} |F x_{h+1}|^2 = z' W z,
/// where F keeps the real roads and drops the exit accumulator.
struct CostOperator
{
  Matrix selector;  // F
  Matrix weight;    // W, symmetric positive semidefinite
  int horizon = 0;

  double evaluate(const StateVector &x1, std::span<const InputVector> g_plan) const;
};

CostOperator cost_operator(const HorizonOperators &ops);
CostOperator cost_operator(const TransitionOperator &op, int n_tau);

/// Rollout form of the horizon cost with the phase held fixed. Throws
/// std::invalid_argument on dimension mismatch or g_plan.size() != n_tau.
double evaluate_cost(const StateVector &x, std::span<const InputVector> g_plan, const TransitionOperator &op,
                     int n_tau);

// ---------------------------------------------------------------------------
// Boundary inflow

/// Labels one row of the inflow program's constraint set.
struct ConstraintKey
{
  enum class Kind { inflow_upper, inflow_lower, budget, density_upper, density_lower };

  Kind kind = Kind::inflow_upper;
  int step = 0;   // 1-based horizon step
  int index = 0;  // 1-based inlet or road id

  std::string describe() const;
  bool operator==(const ConstraintKey &) const = default;
};

enum class BudgetMode {
  exact,   // sum_i u_i = u0 at every horizon step
  at_most  // sum_i u_i <= u0 (fallback when the exact budget is infeasible)
};

struct InflowPlan
{
  /// u[h] is the inlet command for horizon step h+1; u[0] is applied.
  std::vector<Vector> u;
  /// Horizon cost of the plan under the forecast disturbance.
  double objective = 0.0;
  bool relaxed = false;
  qp::Residuals residuals;
  int iterations = 0;
  std::vector<ConstraintKey> active;
};

class InflowInfeasible : public std::runtime_error
{
public:
  InflowInfeasible(const std::string &message, std::vector<ConstraintKey> violated)
      : std::runtime_error(message), violated_(std::move(violated))
  {}

  const std::vector<ConstraintKey> &violated() const { return violated_; }

private:
  std::vector<ConstraintKey> violated_;
};

/// Minimizes the horizon cost over inlet inflows with the disturbance fixed
/// at `d_forecast` (length N - N_in), subject to the boundary budget, the
/// per-inlet box [0, u_max] and 0 <= predicted density <= rho_max - rho_margin
/// on every road and horizon step. `warm` lists constraints expected active.
/// Throws InflowInfeasible or qp::ConvergenceError.
InflowPlan solve_boundary_inflow(const StateVector &x, const TransitionOperator &op, const Vector &d_forecast,
                                 const ControlConfig &cfg, const NoirGraph &graph,
                                 BudgetMode mode = BudgetMode::exact, std::span<const ConstraintKey> warm = {});

/// Exact budget first, then the relaxed budget (plan.relaxed = true).
InflowPlan plan_boundary_inflow(const StateVector &x, const TransitionOperator &op, const Vector &d_forecast,
                                const ControlConfig &cfg, const NoirGraph &graph,
                                std::span<const ConstraintKey> warm = {});

// ---------------------------------------------------------------------------
// Phase timers and admissible actions

struct PhaseTimers
{
  /// T_j: steps the current phase has been active.
  std::vector<int> elapsed;
  /// tau_j = floor(T_j / T_L,j); 1 forces rotation.
  std::vector<int> tau;

  static PhaseTimers start(const NoirGraph &graph);
  bool operator==(const PhaseTimers &) const = default;
};

/// Per-junction candidate phases; the admissible set is their product.
struct AdmissibleSet
{
  /// candidates[j] lists junction j's options, the current phase first when
  /// it may be kept.
  std::vector<std::vector<int>> candidates;

  std::size_t size() const;
  bool contains(const PhaseAssignment &assignment) const;
  std::vector<PhaseAssignment> enumerate() const;
};

AdmissibleSet admissible_actions(const PhaseAssignment &current, const PhaseTimers &timers, const NoirGraph &graph);

/// Resets T_j when junction j rotates and increments it otherwise. Throws
/// std::invalid_argument if `chosen` is not admissible.
PhaseTimers update_timers(const NoirGraph &graph, const PhaseAssignment &previous, const PhaseAssignment &chosen,
                          const PhaseTimers &timers);

// ---------------------------------------------------------------------------
// Phase selection

enum class PhaseSearch {
  automatic,           // exhaustive up to kExhaustiveJunctionLimit junctions
  coordinate_descent,  // junction-wise sweeps in ascending id
  exhaustive           // full product enumeration
};

inline constexpr int kExhaustiveJunctionLimit = 6;

struct PhaseSelection
{
  PhaseAssignment assignment;
  double objective = 0.0;
  /// Objective at the start point followed by the value after each sweep
  /// (coordinate descent only).
  std::vector<double> sweep_objectives;
  std::size_t evaluations = 0;
};

/// argmin over the admissible set of the horizon cost, each candidate
/// evaluated with its own transition operator held fixed over the horizon.
PhaseSelection select_phase(const StateVector &x, std::span<const InputVector> g_plan, const PhaseAssignment &current,
                            const PhaseTimers &timers, const NoirGraph &graph, const RateTable &rates,
                            PhaseSearch search = PhaseSearch::automatic);

// ---------------------------------------------------------------------------

struct ControlDecision
{
  Vector u;
  std::vector<Vector> u_plan;
  PhaseAssignment next_phase;
  double objective = 0.0;
  bool relaxed = false;
};

}  // namespace noir
