#include "noir/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

namespace noir {

RateTable::RateTable(const NoirGraph &graph, std::span<const TurnRatio> ratios, std::span<const OutflowProb> probs)
    : outflow_(graph.state_size() + 1, 0.0), ratio_(Matrix::Zero(graph.state_size(), graph.state_size()))
{
  const int size = graph.state_size();
  for (const auto &p : probs) {
    if (p.road < 1 || p.road > size)
      throw std::invalid_argument("outflow probability for unknown road " + std::to_string(p.road));
    if (!(p.p >= 0.0 && p.p <= 1.0))
      throw std::invalid_argument("outflow probability of road " + std::to_string(p.road) + " outside [0,1]");
    outflow_[p.road] = p.p;
  }
  for (const auto &t : ratios) {
    if (t.from < 1 || t.from > size || t.to < 1 || t.to > size)
      throw std::invalid_argument("turn ratio references an unknown road");
    if (!(t.ratio >= 0.0))
      throw std::invalid_argument("negative turn ratio on edge (" + std::to_string(t.from) + "," +
                                  std::to_string(t.to) + ")");
    ratio_(t.to - 1, t.from - 1) = t.ratio;
  }
}

RateTable::RateTable(const Scenario &scenario)
    : RateTable(scenario.graph, scenario.turn_ratios, scenario.outflow_probs)
{}

TransitionOperator assemble(const NoirGraph &graph, const PhaseAssignment &assignment, const RateTable &rates)
{
  const EdgeSet active = active_edges(graph, assignment);
  const int size = graph.state_size();
  const int n = graph.n_roads;

  TransitionOperator op;
  op.P = Matrix::Zero(size, size);
  op.Q = Matrix::Zero(size, size);
  op.Q(n, n) = 1.0;

  for (int j = 1; j <= n; ++j) {
    const auto outs = active.out_neighbors(j);
    double total = 0.0;
    for (int i : outs)
      total += rates.ratio(j, i);
    if (outs.empty() || total <= 0.0) {
      if (!outs.empty() && rates.outflow(j) > 0.0)
        throw std::invalid_argument("road " + std::to_string(j) +
                                    " must flow but its active turn ratios sum to zero");
      continue;  // red road: p = 0, column of A is e_j
    }
    op.P(j - 1, j - 1) = rates.outflow(j);
    for (int i : outs)
      op.Q(i - 1, j - 1) = rates.ratio(j, i) / total;
  }

  // A = I - P + QP, formed entrywise since P is diagonal.
  op.A = op.Q;
  for (int j = 0; j < size; ++j)
    op.A.col(j) *= op.P(j, j);
  for (int j = 0; j < size; ++j)
    op.A(j, j) += 1.0 - op.P(j, j);
  return op;
}

TransitionOperator assemble(const Scenario &scenario, const PhaseAssignment &assignment)
{
  return assemble(scenario.graph, assignment, RateTable(scenario));
}

StateVector step(const StateVector &x, const InputVector &g, const TransitionOperator &op)
{
  if (x.size() != op.size() || g.size() != op.size())
    throw std::invalid_argument("step: expected vectors of length " + std::to_string(op.size()) + ", got x=" +
                                std::to_string(x.size()) + ", g=" + std::to_string(g.size()));
  return op.A * x + g;
}

StateVector HorizonOperators::predict(const StateVector &x1, std::span<const InputVector> inputs) const
{
  const int n = horizon();
  if (static_cast<int>(inputs.size()) != n)
    throw std::invalid_argument("predict: expected " + std::to_string(n) + " input vectors");
  const auto size = thetas[0].rows();
  Vector stacked(size * n);
  for (int h = 0; h < n; ++h) {
    if (inputs[h].size() != size)
      throw std::invalid_argument("predict: input vector has wrong length");
    stacked.segment(h * size, size) = inputs[h];
  }
  return thetas[n] * x1 + gamma * stacked;
}

HorizonOperators horizon(const TransitionOperator &op, int n_tau)
{
  if (n_tau < 1)
    throw std::invalid_argument("horizon length must be >= 1");
  const int size = op.size();
  HorizonOperators result;
  result.thetas.reserve(n_tau + 1);
  result.thetas.push_back(Matrix::Identity(size, size));
  for (int h = 1; h <= n_tau; ++h)
    result.thetas.push_back(op.A * result.thetas.back());

  result.gamma.resize(size, static_cast<Eigen::Index>(size) * n_tau);
  for (int h = 1; h <= n_tau; ++h)
    result.gamma.middleCols((h - 1) * size, size) = result.thetas[n_tau - h];
  return result;
}

namespace {

// Distribution transforms are written out because the standard library's
// distributions are not specified bit-for-bit across implementations.
double uniform01(std::mt19937_64 &gen)
{
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

double standard_normal(std::mt19937_64 &gen)
{
  const double u1 = 1.0 - uniform01(gen);  // (0, 1]
  const double u2 = uniform01(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

Vector sample_disturbance(const DisturbanceConfig &config, std::uint64_t seed, std::uint64_t step, int count)
{
  if (count < 0)
    throw std::invalid_argument("sample_disturbance: negative count");
  if (config.kind == DisturbanceKind::uniform && config.low > config.high)
    throw std::invalid_argument("sample_disturbance: low > high");
  if (config.kind == DisturbanceKind::gaussian_truncated && config.std < 0.0)
    throw std::invalid_argument("sample_disturbance: negative standard deviation");

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  std::mt19937_64 gen(seq);

  Vector d(count);
  for (int i = 0; i < count; ++i) {
    double value = 0.0;
    if (config.kind == DisturbanceKind::uniform)
      value = config.low + (config.high - config.low) * uniform01(gen);
    else
      value = config.mean + config.std * standard_normal(gen);
    d[i] = std::max(value, 0.0);
  }
  return d;
}

InputVector make_input(const NoirGraph &graph, const Vector &inflows, const Vector &disturbances)
{
  if (inflows.size() != graph.n_inlets || disturbances.size() != graph.n_roads - graph.n_inlets)
    throw std::invalid_argument("make_input: dimension mismatch");
  InputVector g = InputVector::Zero(graph.state_size());
  g.head(graph.n_inlets) = inflows;
  g.segment(graph.n_inlets, disturbances.size()) = disturbances;
  return g;
}

std::vector<int> roads_draining_to_exit(const TransitionOperator &op)
{
  const int size = op.size();
  std::vector<char> seen(size, 0);
  std::queue<int> frontier;
  seen[size - 1] = 1;
  frontier.push(size - 1);
  while (!frontier.empty()) {
    const int k = frontier.front();
    frontier.pop();
    for (int i = 0; i < size; ++i)
      if (!seen[i] && i != k && op.A(k, i) > 0.0) {
        seen[i] = 1;
        frontier.push(i);
      }
  }
  std::vector<int> roads;
  for (int i = 0; i + 1 < size; ++i)
    if (seen[i])
      roads.push_back(i + 1);
  return roads;
}

double spectral_radius(const Matrix &C, std::span<const int> roads)
{
  if (roads.empty())
    return 0.0;
  const auto m = static_cast<Eigen::Index>(roads.size());
  Matrix sub(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b)
      sub(a, b) = C(roads[a] - 1, roads[b] - 1);
  Eigen::EigenSolver<Matrix> solver(sub, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace noir
