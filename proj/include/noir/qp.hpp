#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace noir::qp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Dense convex QP
///
///   minimize    1/2 x'Hx + c'x
///   subject to  E x  = e
///               G x <= h
///
/// H must be symmetric positive definite.
struct Problem
{
  Matrix hessian;
  Vector linear;
  Matrix eq_matrix;
  Vector eq_rhs;
  Matrix ineq_matrix;
  Vector ineq_rhs;

  Eigen::Index variables() const { return hessian.rows(); }
  Eigen::Index equalities() const { return eq_matrix.rows(); }
  Eigen::Index inequalities() const { return ineq_matrix.rows(); }
};

/// KKT residuals in the infinity norm, for the Lagrangian
/// 1/2 x'Hx + c'x + nu'(Ex - e) + mu'(Gx - h) with mu >= 0.
struct Residuals
{
  double stationarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;

  double max() const;
};

struct Solution
{
  Vector x;
  Vector eq_multipliers;
  Vector ineq_multipliers;
  /// Indices of the inequality rows active at the solution.
  std::vector<int> active_set;
  double objective = 0.0;
  int iterations = 0;
  Residuals residuals;
};

struct Options
{
  /// Zero selects 50 * (variables + constraints).
  int max_iterations = 0;
  /// Constraint violations below this (scaled by 1 + |rhs|) count as satisfied.
  double feasibility_tolerance = 1e-10;
};

/// The constraint set is empty. The listed rows form the infeasibility
/// certificate found by the solver.
class InfeasibleError : public std::runtime_error
{
public:
  InfeasibleError(const std::string &message, std::vector<int> equality_rows, std::vector<int> inequality_rows)
      : std::runtime_error(message), equality_rows_(std::move(equality_rows)),
        inequality_rows_(std::move(inequality_rows))
  {}

  const std::vector<int> &equality_rows() const { return equality_rows_; }
  const std::vector<int> &inequality_rows() const { return inequality_rows_; }

private:
  std::vector<int> equality_rows_;
  std::vector<int> inequality_rows_;
};

class ConvergenceError : public std::runtime_error
{
public:
  ConvergenceError(const std::string &message, Residuals residuals)
      : std::runtime_error(message), residuals_(residuals)
  {}

  const Residuals &residuals() const { return residuals_; }

private:
  Residuals residuals_;
};

/// Dual active-set method (Goldfarb-Idnani). `warm_active` lists inequality
/// rows expected to be active; it only changes the starting active set,
/// never the solution.
Solution solve(const Problem &problem, std::span<const int> warm_active = {}, const Options &options = {});

Residuals kkt_residuals(const Problem &problem, const Vector &x, const Vector &eq_multipliers,
                        const Vector &ineq_multipliers);

}  // namespace noir::qp
