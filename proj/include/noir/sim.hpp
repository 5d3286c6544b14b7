#pragma once

#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "noir/control.hpp"
#include "noir/dynamics.hpp"
#include "noir/scenario.hpp"

namespace noir {

/// Metadata only: seconds per discrete step.
inline constexpr double kStepSeconds = 30.0;

struct TrajectoryRecord
{
  int step = 0;
  /// State after applying this step's input (length N+1).
  StateVector densities;
  Vector inflows;
  Vector disturbances;
  PhaseAssignment phases;
  /// Activation times T_j after this step's phase choice.
  std::vector<int> timers;
  double objective = 0.0;
  bool qp_relaxed = false;
};

/// Closed loop aborted because the relaxed inflow program was infeasible.
class SimulationAborted : public std::runtime_error
{
public:
  SimulationAborted(int step, StateVector state, const std::string &reason)
      : std::runtime_error("simulation aborted at step " + std::to_string(step) + ": " + reason), step_(step),
        state_(std::move(state))
  {}

  int step() const { return step_; }
  const StateVector &state() const { return state_; }

private:
  int step_;
  StateVector state_;
};

/// Runs scenario.steps closed-loop iterations from the empty network, with
/// junction timers offset by j mod T_L:
/// sample d, select phases, update timers, solve the inflow program, step.
std::vector<TrajectoryRecord> run(const Scenario &scenario);

struct SummaryMetrics
{
  /// r_net(k) = sum of real-road densities after step k.
  std::vector<double> net_density;
  /// First step opening a window of kSteadyWindow consecutive steps whose
  /// relative change in r_net stays below kSteadyThreshold.
  std::optional<int> steady_state_step;
  double peak_density = 0.0;
  int peak_road = 0;
  int peak_step = 0;
  int relaxed_steps = 0;
};

inline constexpr int kSteadyWindow = 5;
inline constexpr double kSteadyThreshold = 0.02;

/// Throws std::invalid_argument on an empty trajectory.
SummaryMetrics metrics(const std::vector<TrajectoryRecord> &trajectory);

/// CSV header plus one row per record; fixed 6-decimal formatting.
void write_csv(std::ostream &out, const std::vector<TrajectoryRecord> &trajectory, const NoirGraph &graph);

/// Single JSON object with the summary fields.
std::string summary_json(const SummaryMetrics &m, const Scenario &scenario);

}  // namespace noir
