#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "noir/network.hpp"
#include "noir/scenario.hpp"

namespace noir {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Density vector x = [rho_1 .. rho_N, exit accumulator] (length N+1).
using StateVector = Vector;
/// Input vector g = [u_1 .. u_Nin, d_{Nin+1} .. d_N, 0] (length N+1).
using InputVector = Vector;

/// Phase-dependent transition operator A = I - P + QP.
struct TransitionOperator
{
  Matrix P;
  Matrix Q;
  Matrix A;

  int size() const { return static_cast<int>(A.rows()); }
  /// Top-left N x N block of A (real roads).
  Matrix C() const { return A.topLeftCorner(size() - 1, size() - 1); }
  /// Bottom-left 1 x N block of A (fraction of each road leaving the network).
  Matrix D() const { return A.bottomLeftCorner(1, size() - 1); }
};

/// Base (phase-independent) rates indexed by road, ready for assembly.
class RateTable
{
public:
  RateTable(const NoirGraph &graph, std::span<const TurnRatio> ratios, std::span<const OutflowProb> probs);
  explicit RateTable(const Scenario &scenario);

  double outflow(int road) const { return outflow_[road]; }
  double ratio(int from, int to) const { return ratio_(to - 1, from - 1); }

private:
  std::vector<double> outflow_;  // 1-based, entry 0 unused
  Matrix ratio_;                 // (to, from), 0-based
};

/// Builds P, Q and A for `assignment`. Ratios are restricted to the active
/// out-neighbors and renormalized; a road with no active out-neighbor gets
/// p = 0 and holds its mass. Throws std::invalid_argument on negative rates,
/// p outside [0,1], or an all-zero ratio column for a road that must flow.
TransitionOperator assemble(const NoirGraph &graph, const PhaseAssignment &assignment, const RateTable &rates);
TransitionOperator assemble(const Scenario &scenario, const PhaseAssignment &assignment);

/// x+ = A x + g. Throws std::invalid_argument on dimension mismatch.
StateVector step(const StateVector &x, const InputVector &g, const TransitionOperator &op);

/// Powers Theta_h = A^h and the stacked input map
/// Gamma = [Theta_{n-1} ... Theta_1 I] for an n-step horizon.
struct HorizonOperators
{
  /// thetas[h] = A^h for h = 0..n (thetas[0] = I).
  std::vector<Matrix> thetas;
  Matrix gamma;

  int horizon() const { return static_cast<int>(thetas.size()) - 1; }
  const Matrix &theta(int h) const { return thetas.at(h); }

  /// x_{n+1} = Theta_n x_1 + Gamma [g_1; ...; g_n].
  StateVector predict(const StateVector &x1, std::span<const InputVector> inputs) const;
};

/// Throws std::invalid_argument when n_tau < 1.
HorizonOperators horizon(const TransitionOperator &op, int n_tau);

/// Disturbance draws for the N - N_in internal roads at one step. The
/// stream is a pure function of (seed, step).
Vector sample_disturbance(const DisturbanceConfig &config, std::uint64_t seed, std::uint64_t step, int count);

/// Assembles g from inlet commands and internal-road disturbances.
InputVector make_input(const NoirGraph &graph, const Vector &inflows, const Vector &disturbances);

/// 1-based roads with a path of positive transfers in A to the exit node.
std::vector<int> roads_draining_to_exit(const TransitionOperator &op);

/// Spectral radius of the principal submatrix of C on `roads` (1-based).
double spectral_radius(const Matrix &C, std::span<const int> roads);

}  // namespace noir
