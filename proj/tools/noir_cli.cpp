// noir: validate scenarios, run the closed-loop controller, inspect horizon costs.
//
// Exit codes: 0 ok, 1 validation or usage error, 2 I/O error, 3 runtime abort.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "noir/control.hpp"
#include "noir/dynamics.hpp"
#include "noir/scenario.hpp"
#include "noir/sim.hpp"

namespace {

enum ExitCode { kOk = 0, kInvalid = 1, kIoError = 2, kAborted = 3 };

struct Overrides
{
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  std::optional<double> u0;
  std::optional<int> horizon;

  void apply(noir::Scenario &s) const
  {
    if (steps)
      s.steps = *steps;
    if (seed)
      s.seed = *seed;
    if (u0)
      s.control.u0 = *u0;
    if (horizon)
      s.control.horizon = *horizon;
  }
};

// Loads a scenario, mapping failures to exit codes.
std::optional<noir::Scenario> load(const std::string &path, int &code)
{
  try {
    return noir::load_scenario(path);
  } catch (const noir::ScenarioError &e) {
    std::cerr << "error: " << e.what() << "\n";
    code = e.where().empty() ? kIoError : kInvalid;
  }
  return std::nullopt;
}

void print_report(const noir::ValidationReport &report)
{
  if (report.ok()) {
    std::cout << "OK\n";
  } else {
    std::cout << report.violations.size() << " violation(s):\n";
    for (const auto &v : report.violations)
      std::cout << "  - " << v << "\n";
  }
  std::cout << "exit in-neighbors:";
  for (int r : report.exit_in_neighbors)
    std::cout << ' ' << r;
  std::cout << "\n";
}

int cmd_validate(const std::string &path, const Overrides &overrides)
{
  int code = kOk;
  auto scenario = load(path, code);
  if (!scenario)
    return code;
  overrides.apply(*scenario);
  const auto report = noir::validate(*scenario);
  print_report(report);
  return report.ok() ? kOk : kInvalid;
}

int cmd_simulate(const std::string &path, const std::string &out_dir, const Overrides &overrides)
{
  int code = kOk;
  auto scenario = load(path, code);
  if (!scenario)
    return code;
  overrides.apply(*scenario);
  const auto report = noir::validate(*scenario);
  if (!report.ok()) {
    print_report(report);
    return kInvalid;
  }

  std::vector<noir::TrajectoryRecord> trajectory;
  try {
    trajectory = noir::run(*scenario);
  } catch (const noir::SimulationAborted &e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << "state at abort:";
    for (Eigen::Index i = 0; i < e.state().size(); ++i)
      std::cerr << ' ' << e.state()[i];
    std::cerr << "\n";
    return kAborted;
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  const auto csv_path = std::filesystem::path(out_dir) / "trajectory.csv";
  const auto summary_path = std::filesystem::path(out_dir) / "summary.json";
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) {
    std::cerr << "error: cannot write " << csv_path.string() << "\n";
    return kIoError;
  }
  noir::write_csv(csv, trajectory, scenario->graph);

  if (trajectory.empty()) {
    std::cout << "0 steps simulated\n";
    return kOk;
  }
  const auto m = noir::metrics(trajectory);
  std::ofstream summary(summary_path, std::ios::binary);
  if (!summary) {
    std::cerr << "error: cannot write " << summary_path.string() << "\n";
    return kIoError;
  }
  summary << noir::summary_json(m, *scenario);

  std::cout << "steps: " << trajectory.size() << "\n";
  if (m.steady_state_step)
    std::cout << "steady-state step: " << *m.steady_state_step << "\n";
  else
    std::cout << "steady-state step: not reached\n";
  std::cout << "peak density: " << m.peak_density << " (road " << m.peak_road << ", step " << m.peak_step << ")\n";
  if (m.relaxed_steps > 0)
    std::cout << "relaxed inflow budget at " << m.relaxed_steps << " step(s)\n";
  std::cout << "wrote " << csv_path.string() << " and " << summary_path.string() << "\n";
  return kOk;
}

noir::Vector to_vector(const nlohmann::json &node)
{
  const auto values = node.get<std::vector<double>>();
  return Eigen::Map<const noir::Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

int cmd_cost(const std::string &path, const std::string &state_path, const std::vector<int> &phase_flag)
{
  int code = kOk;
  auto scenario = load(path, code);
  if (!scenario)
    return code;

  std::ifstream in(state_path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot read state file '" << state_path << "'\n";
    return kIoError;
  }

  try {
    nlohmann::json state;
    try {
      state = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
      std::cerr << "error: state file: " << e.what() << "\n";
      return kInvalid;
    }
    const noir::Vector x = to_vector(state.at("x"));
    std::vector<noir::InputVector> g_plan;
    for (const auto &g : state.at("g_plan"))
      g_plan.push_back(to_vector(g));

    noir::PhaseAssignment phases = noir::initial_assignment(scenario->graph);
    if (state.contains("phases"))
      phases = state.at("phases").get<std::vector<int>>();
    if (!phase_flag.empty())
      phases = phase_flag;

    const auto op = noir::assemble(*scenario, phases);
    const int n_tau = static_cast<int>(g_plan.size());
    const double rollout = noir::evaluate_cost(x, g_plan, op, n_tau);
    const double w_form = noir::cost_operator(op, n_tau).evaluate(x, g_plan);

    char buf[128];
    std::snprintf(buf, sizeof buf, "cost: %.12g\nw-form: %.12g\ndelta: %.3e\n", rollout, w_form,
                  std::abs(rollout - w_form));
    std::cout << buf;
    return kOk;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Traffic network simulator with MPC boundary inflow and receding-horizon signal control"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir = "out";
  std::string state_path;
  std::vector<int> phases;
  Overrides overrides;

  auto add_overrides = [&](CLI::App *cmd) {
    cmd->add_option("--steps", overrides.steps, "Number of closed-loop steps");
    cmd->add_option("--seed", overrides.seed, "Disturbance seed");
    cmd->add_option("--u0", overrides.u0, "Total boundary inflow per step");
    cmd->add_option("--horizon", overrides.horizon, "Prediction horizon (steps)");
  };

  auto *validate = app.add_subcommand("validate", "Check a scenario file");
  validate->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  add_overrides(validate);

  auto *simulate = app.add_subcommand("simulate", "Run the closed loop and write trajectory.csv and summary.json");
  simulate->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  simulate->add_option("-o,--output", out_dir, "Output directory");
  add_overrides(simulate);

  auto *cost = app.add_subcommand("cost", "Evaluate the horizon cost for a state file");
  cost->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  cost->add_option("state", state_path, "JSON file with x and g_plan")->required();
  cost->add_option("--phases", phases, "Phase index per junction")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kInvalid;
  }

  if (*validate)
    return cmd_validate(scenario_path, overrides);
  if (*simulate)
    return cmd_simulate(scenario_path, out_dir, overrides);
  return cmd_cost(scenario_path, state_path, phases);
}
