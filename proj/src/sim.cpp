#include "noir/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace noir {

std::vector<TrajectoryRecord> run(const Scenario &scenario)
{
  const auto &graph = scenario.graph;
  const auto &cfg = scenario.control;
  const int n_in = graph.n_inlets;
  const int n_dist = graph.n_roads - n_in;
  const RateTable rates(scenario);

  const Vector d_forecast = Vector::Constant(n_dist, scenario.disturbance.forecast_mean());
  StateVector x = StateVector::Zero(graph.state_size());
  PhaseAssignment phases = initial_assignment(graph);
  PhaseTimers timers = PhaseTimers::start(graph);
  // staggered offsets so junctions do not all rotate in lockstep
  for (std::size_t j = 0; j < timers.elapsed.size(); ++j)
    timers.elapsed[j] = static_cast<int>(j) % graph.junctions[j].max_activation;

  std::vector<Vector> plan(cfg.horizon, Vector::Constant(n_in, n_in > 0 ? cfg.u0 / n_in : 0.0));
  std::vector<ConstraintKey> warm;

  std::vector<TrajectoryRecord> trajectory;
  trajectory.reserve(std::max(scenario.steps, 0));
  for (int k = 1; k <= scenario.steps; ++k) {
    const Vector d = sample_disturbance(scenario.disturbance, scenario.seed, static_cast<std::uint64_t>(k), n_dist);

    // Phase choice against the previous inflow plan, shifted one step.
    std::vector<InputVector> g_plan;
    for (int h = 0; h < cfg.horizon; ++h)
      g_plan.push_back(make_input(graph, plan[std::min(h + 1, cfg.horizon - 1)], d_forecast));
    const auto selection = select_phase(x, g_plan, phases, timers, graph, rates);
    timers = update_timers(graph, phases, selection.assignment, timers);
    phases = selection.assignment;

    const auto op = assemble(graph, phases, rates);
    std::vector<ConstraintKey> shifted;
    for (const auto &key : warm)
      if (key.step > 1)
        shifted.push_back({key.kind, key.step - 1, key.index});

    InflowPlan inflow;
    try {
      inflow = plan_boundary_inflow(x, op, d_forecast, cfg, graph, shifted);
    } catch (const InflowInfeasible &e) {
      throw SimulationAborted(k, x, e.what());
    } catch (const qp::ConvergenceError &e) {
      throw SimulationAborted(k, x, e.what());
    }

    const InputVector g = make_input(graph, inflow.u.front(), d);
    x = step(x, g, op);

    TrajectoryRecord rec;
    rec.step = k;
    rec.densities = x;
    rec.inflows = inflow.u.front();
    rec.disturbances = d;
    rec.phases = phases;
    rec.timers = timers.elapsed;
    rec.objective = inflow.objective;
    rec.qp_relaxed = inflow.relaxed;
    trajectory.push_back(std::move(rec));

    plan = std::move(inflow.u);
    warm = std::move(inflow.active);
  }
  return trajectory;
}

SummaryMetrics metrics(const std::vector<TrajectoryRecord> &trajectory)
{
  if (trajectory.empty())
    throw std::invalid_argument("metrics: empty trajectory");
  SummaryMetrics m;
  for (const auto &rec : trajectory) {
    const auto n = rec.densities.size() - 1;
    const auto roads = rec.densities.head(n);
    m.net_density.push_back(roads.sum());
    Eigen::Index arg = 0;
    const double peak = n > 0 ? roads.maxCoeff(&arg) : 0.0;
    if (peak > m.peak_density || m.peak_road == 0) {
      m.peak_density = peak;
      m.peak_road = static_cast<int>(arg) + 1;
      m.peak_step = rec.step;
    }
    if (rec.qp_relaxed)
      ++m.relaxed_steps;
  }

  const auto &r = m.net_density;
  const int count = static_cast<int>(r.size());
  auto settled = [&](int j) {  // 0-based j >= 1
    return std::abs(r[j] - r[j - 1]) / std::max(r[j - 1], 1.0) < kSteadyThreshold;
  };
  for (int k = 0; k + kSteadyWindow < count; ++k) {
    bool ok = true;
    for (int j = k + 1; j <= k + kSteadyWindow && ok; ++j)
      ok = settled(j);
    if (ok) {
      m.steady_state_step = trajectory[k].step;
      break;
    }
  }
  return m;
}

namespace {

void put_fixed(std::ostream &out, double value)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  out << ',' << buf;
}

}  // namespace

void write_csv(std::ostream &out, const std::vector<TrajectoryRecord> &trajectory, const NoirGraph &graph)
{
  out << 'k';
  for (int i = 1; i <= graph.state_size(); ++i)
    out << ",rho_" << i;
  for (int i = 1; i <= graph.n_inlets; ++i)
    out << ",u_" << i;
  for (int j = 1; j <= graph.junction_count(); ++j)
    out << ",phase_" << j;
  out << ",objective,qp_relaxed\n";

  for (const auto &rec : trajectory) {
    out << rec.step;
    for (Eigen::Index i = 0; i < rec.densities.size(); ++i)
      put_fixed(out, rec.densities[i]);
    for (Eigen::Index i = 0; i < rec.inflows.size(); ++i)
      put_fixed(out, rec.inflows[i]);
    for (int p : rec.phases)
      out << ',' << p;
    put_fixed(out, rec.objective);
    out << ',' << (rec.qp_relaxed ? 1 : 0) << '\n';
  }
}

std::string summary_json(const SummaryMetrics &m, const Scenario &scenario)
{
  nlohmann::ordered_json doc;
  doc["steps"] = m.net_density.size();
  doc["seed"] = scenario.seed;
  doc["dt_seconds"] = kStepSeconds;
  if (m.steady_state_step) {
    doc["steady_state_step"] = *m.steady_state_step;
    doc["steady_state_seconds"] = *m.steady_state_step * kStepSeconds;
  } else {
    doc["steady_state_step"] = nullptr;
    doc["steady_state_seconds"] = nullptr;
  }
  doc["peak_density"] = m.peak_density;
  doc["peak_road"] = m.peak_road;
  doc["peak_step"] = m.peak_step;
  doc["final_net_density"] = m.net_density.back();
  doc["relaxed_steps"] = m.relaxed_steps;
  doc["net_density"] = m.net_density;
  return doc.dump(2) + "\n";
}

}  // namespace noir
