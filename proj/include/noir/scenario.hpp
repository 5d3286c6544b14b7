#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "noir/network.hpp"

namespace noir {

struct ControlConfig
{
  /// Prediction horizon N_tau (steps).
  int horizon = 5;
  /// Total boundary inflow per step (vehicles).
  double u0 = 0.0;
  /// Per-road capacity (vehicles).
  double rho_max = 40.0;
  /// Per-inlet upper bound; defaults to u0 when the scenario omits it.
  double u_max = 0.0;
  /// Tightening applied to rho_max inside the inflow optimizer.
  double rho_margin = 0.0;

  bool operator==(const ControlConfig &) const = default;
};

enum class DisturbanceKind { uniform, gaussian_truncated };

struct DisturbanceConfig
{
  DisturbanceKind kind = DisturbanceKind::uniform;
  double low = 0.0;   // uniform
  double high = 0.0;  // uniform
  double mean = 0.0;  // gaussian-truncated
  double std = 0.0;   // gaussian-truncated

  /// Mean of the sampled (clamped) distribution, used as the controller forecast.
  double forecast_mean() const;

  bool operator==(const DisturbanceConfig &) const = default;
};

struct TurnRatio
{
  int from = 0;
  int to = 0;
  double ratio = 0.0;

  bool operator==(const TurnRatio &) const = default;
};

struct OutflowProb
{
  int road = 0;
  double p = 0.0;

  bool operator==(const OutflowProb &) const = default;
};

struct Scenario
{
  NoirGraph graph;
  /// Base (phase-independent) turn ratios, one per edge.
  std::vector<TurnRatio> turn_ratios;
  /// Base outflow probabilities, one per real road.
  std::vector<OutflowProb> outflow_probs;
  ControlConfig control;
  DisturbanceConfig disturbance;
  std::uint64_t seed = 0;
  int steps = 0;

  bool operator==(const Scenario &) const = default;
};

/// Parse or I/O failure. `where` names the offending field path or
/// line:column; `what()` carries the full diagnostic.
class ScenarioError : public std::runtime_error
{
public:
  ScenarioError(std::string where, const std::string &message)
      : std::runtime_error(where.empty() ? message : where + ": " + message), where_(std::move(where))
  {}

  const std::string &where() const { return where_; }

private:
  std::string where_;
};

/// Checks type and shape only, plus id ranges and duplicate ids. Graph
/// semantics are left to validate().
Scenario parse_scenario(std::string_view text);

/// Reads and parses a scenario file; unreadable files raise ScenarioError
/// with an empty field path.
Scenario load_scenario(const std::string &path);

/// Canonical JSON text. parse_scenario(serialize_scenario(s)) == s.
std::string serialize_scenario(const Scenario &scenario);

struct ValidationReport
{
  std::vector<std::string> violations;
  /// I_{N+1}: roads feeding the exit node.
  std::vector<int> exit_in_neighbors;

  bool ok() const { return violations.empty(); }
};

ValidationReport validate(const Scenario &scenario);

}  // namespace noir
