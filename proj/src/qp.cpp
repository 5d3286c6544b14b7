#include "noir/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace noir::qp {

double Residuals::max() const
{
  return std::max({stationarity, primal, dual, complementarity});
}

Residuals kkt_residuals(const Problem &p, const Vector &x, const Vector &nu, const Vector &mu)
{
  Residuals r;
  Vector grad = p.hessian * x + p.linear;
  if (p.equalities() > 0) {
    grad += p.eq_matrix.transpose() * nu;
    r.primal = (p.eq_matrix * x - p.eq_rhs).cwiseAbs().maxCoeff();
  }
  if (p.inequalities() > 0) {
    grad += p.ineq_matrix.transpose() * mu;
    const Vector slack = p.ineq_matrix * x - p.ineq_rhs;
    r.primal = std::max(r.primal, std::max(slack.maxCoeff(), 0.0));
    r.dual = std::max(-mu.minCoeff(), 0.0);
    r.complementarity = mu.cwiseProduct(slack).cwiseAbs().maxCoeff();
  }
  r.stationarity = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  return r;
}

namespace {

constexpr double kDependence = 1e-12;

// Constraint ids: [0, m_eq) are equality rows, [m_eq, m_eq + m_in) are
// inequality rows. Inequalities are kept in the n'x <= b form, so an active
// inequality carries a multiplier >= 0 in  Hx + c + N lambda = 0.
class DualActiveSet
{
public:
  DualActiveSet(const Problem &p, const Options &o)
      : p_(p), opt_(o), n_(static_cast<int>(p.variables())), meq_(static_cast<int>(p.equalities())),
        min_(static_cast<int>(p.inequalities()))
  {
    if (p.linear.size() != n_ || p.hessian.cols() != n_ || (meq_ > 0 && p.eq_matrix.cols() != n_) ||
        (min_ > 0 && p.ineq_matrix.cols() != n_) || p.eq_rhs.size() != meq_ || p.ineq_rhs.size() != min_)
      throw std::invalid_argument("qp::solve: inconsistent problem dimensions");
    chol_.compute(p.hessian);
    if (chol_.info() != Eigen::Success)
      throw std::invalid_argument("qp::solve: Hessian is not positive definite");
    max_iter_ = opt_.max_iterations > 0 ? opt_.max_iterations : 50 * (n_ + meq_ + min_);
    row_norm_.resize(min_);
    for (int i = 0; i < min_; ++i)
      row_norm_[i] = std::max(p.ineq_matrix.row(i).norm(), std::numeric_limits<double>::min());
  }

  Solution run(std::span<const int> warm)
  {
    x_ = -chol_.solve(p_.linear);
    add_equalities();
    warm_start(warm);

    for (int round = 0;; ++round) {
      main_loop();
      polish();
      if (most_violated() < 0 || round >= 3)
        break;
    }
    return finish();
  }

private:
  Vector normal(int id) const
  {
    return id < meq_ ? Vector(p_.eq_matrix.row(id).transpose()) : Vector(p_.ineq_matrix.row(id - meq_).transpose());
  }
  double rhs(int id) const { return id < meq_ ? p_.eq_rhs[id] : p_.ineq_rhs[id - meq_]; }
  double slack(int id) const { return normal(id).dot(x_) - rhs(id); }
  bool is_active(int id) const { return std::find(active_.begin(), active_.end(), id) != active_.end(); }

  struct Direction
  {
    Vector z;
    Vector r;
    Vector hinv_n;
    double curvature = 0.0;  // z'Hz = -n'z
    bool dependent = false;
  };

  // Primal step z and multiplier change r that keep the active constraints
  // tight while increasing the multiplier of a constraint with normal `np`.
  Direction direction(const Vector &np) const
  {
    Direction d;
    d.hinv_n = chol_.solve(np);
    const double scale = np.dot(d.hinv_n);
    if (active_.empty()) {
      d.z = -d.hinv_n;
      d.r.resize(0);
    } else {
      const Matrix N = normals();
      const Matrix M = N.transpose() * Y_;
      d.r = -M.colPivHouseholderQr().solve(N.transpose() * d.hinv_n);
      d.z = -d.hinv_n - Y_ * d.r;
    }
    d.curvature = -np.dot(d.z);
    d.dependent = d.curvature <= kDependence * scale;
    return d;
  }

  Matrix normals() const
  {
    Matrix N(n_, active_.size());
    for (std::size_t k = 0; k < active_.size(); ++k)
      N.col(k) = normal(active_[k]);
    return N;
  }

  void push(int id, const Vector &hinv_n, double multiplier)
  {
    active_.push_back(id);
    Y_.conservativeResize(n_, static_cast<Eigen::Index>(active_.size()));
    Y_.col(Y_.cols() - 1) = hinv_n;
    lambda_.conservativeResize(static_cast<Eigen::Index>(active_.size()));
    lambda_[lambda_.size() - 1] = multiplier;
  }

  void drop(std::size_t k)
  {
    const auto a = static_cast<Eigen::Index>(active_.size());
    const auto idx = static_cast<Eigen::Index>(k);
    active_.erase(active_.begin() + static_cast<std::ptrdiff_t>(k));
    if (idx + 1 < a) {
      Y_.middleCols(idx, a - idx - 1) = Y_.rightCols(a - idx - 1).eval();
      lambda_.segment(idx, a - idx - 1) = lambda_.tail(a - idx - 1).eval();
    }
    Y_.conservativeResize(n_, a - 1);
    lambda_.conservativeResize(a - 1);
  }

  double tolerance(int id) const { return opt_.feasibility_tolerance * (1.0 + std::abs(rhs(id))); }

  void add_equalities()
  {
    for (int id = 0; id < meq_; ++id) {
      const Vector np = normal(id);
      const Direction d = direction(np);
      const double s = slack(id);
      if (d.dependent) {
        if (std::abs(s) > tolerance(id))
          throw InfeasibleError("equality constraints are inconsistent (row " + std::to_string(id) + ")",
                                equality_rows_with(id), {});
        continue;
      }
      const double t = s / d.curvature;
      x_ += t * d.z;
      if (d.r.size() > 0)
        lambda_ += t * d.r;
      push(id, d.hinv_n, t);
    }
  }

  std::vector<int> equality_rows_with(int id) const
  {
    std::vector<int> rows;
    for (int a : active_)
      if (a < meq_)
        rows.push_back(a);
    rows.push_back(id);
    return rows;
  }

  void warm_start(std::span<const int> warm)
  {
    bool added = false;
    for (int w : warm) {
      if (w < 0 || w >= min_)
        continue;
      const int id = meq_ + w;
      if (is_active(id))
        continue;
      const Direction d = direction(normal(id));
      if (d.dependent)
        continue;
      push(id, d.hinv_n, 0.0);
      added = true;
    }
    if (!added)
      return;
    // Shed constraints until the equality-constrained minimizer is dual feasible.
    for (;;) {
      solve_on_active_set();
      std::size_t worst = active_.size();
      double most_negative = 0.0;
      for (std::size_t k = 0; k < active_.size(); ++k)
        if (active_[k] >= meq_ && lambda_[k] < most_negative) {
          most_negative = lambda_[k];
          worst = k;
        }
      if (worst == active_.size())
        break;
      drop(worst);
    }
  }

  int most_violated() const
  {
    int best = -1;
    double best_violation = 0.0;
    for (int i = 0; i < min_; ++i) {
      const int id = meq_ + i;
      const double s = slack(id);
      if (s <= tolerance(id) || is_active(id))
        continue;
      const double v = s / row_norm_[i];
      if (v > best_violation) {
        best_violation = v;
        best = id;
      }
    }
    return best;
  }

  void main_loop()
  {
    for (int p = most_violated(); p >= 0; p = most_violated()) {
      const Vector np = normal(p);
      double mu_p = 0.0;
      for (;;) {
        if (++iterations_ > max_iter_)
          throw ConvergenceError("qp::solve: iteration limit reached", current_residuals());

        const Direction d = direction(np);
        double t1 = std::numeric_limits<double>::infinity();
        std::size_t block = active_.size();
        for (std::size_t k = 0; k < active_.size(); ++k) {
          if (active_[k] < meq_ || d.r[k] >= 0.0)
            continue;
          const double ratio = lambda_[k] / -d.r[k];
          if (ratio < t1) {
            t1 = ratio;
            block = k;
          }
        }

        if (d.dependent) {
          if (block == active_.size())
            throw infeasible(p, d);
          lambda_ += t1 * d.r;
          mu_p += t1;
          drop(block);
          continue;
        }

        const double t2 = std::max(slack(p), 0.0) / d.curvature;
        if (t2 <= t1) {
          x_ += t2 * d.z;
          if (d.r.size() > 0)
            lambda_ += t2 * d.r;
          push(p, d.hinv_n, mu_p + t2);
          break;
        }
        x_ += t1 * d.z;
        lambda_ += t1 * d.r;
        mu_p += t1;
        drop(block);
      }
    }
  }

  InfeasibleError infeasible(int p, const Direction &d) const
  {
    std::vector<int> eq_rows, in_rows{p - meq_};
    for (std::size_t k = 0; k < active_.size(); ++k) {
      if (std::abs(d.r[k]) == 0.0)
        continue;
      if (active_[k] < meq_)
        eq_rows.push_back(active_[k]);
      else
        in_rows.push_back(active_[k] - meq_);
    }
    return InfeasibleError("constraint set is infeasible (inequality row " + std::to_string(p - meq_) +
                               " cannot be satisfied together with the active constraints)",
                           std::move(eq_rows), std::move(in_rows));
  }

  // Solves the equality-constrained KKT system on the current active set,
  // with two rounds of iterative refinement.
  void solve_on_active_set()
  {
    const auto a = static_cast<Eigen::Index>(active_.size());
    const Matrix N = normals();
    Matrix K = Matrix::Zero(n_ + a, n_ + a);
    K.topLeftCorner(n_, n_) = p_.hessian;
    K.topRightCorner(n_, a) = N;
    K.bottomLeftCorner(a, n_) = N.transpose();
    Vector rhs_vec(n_ + a);
    rhs_vec.head(n_) = -p_.linear;
    for (Eigen::Index k = 0; k < a; ++k)
      rhs_vec[n_ + k] = rhs(active_[k]);

    const auto lu = K.fullPivLu();
    Vector sol = lu.solve(rhs_vec);
    for (int refine = 0; refine < 2; ++refine)
      sol += lu.solve(rhs_vec - K * sol);
    x_ = sol.head(n_);
    lambda_ = sol.tail(a);
  }

  void polish()
  {
    if (active_.empty())
      return;
    const Vector x_prev = x_;
    const Vector lambda_prev = lambda_;
    solve_on_active_set();
    bool ok = x_.allFinite() && lambda_.allFinite();
    for (std::size_t k = 0; ok && k < active_.size(); ++k)
      if (active_[k] >= meq_ && lambda_[k] < -1e-9 * (1.0 + lambda_prev.cwiseAbs().maxCoeff()))
        ok = false;
    if (!ok) {
      x_ = x_prev;
      lambda_ = lambda_prev;
    }
  }

  void split_multipliers(Vector &nu, Vector &mu) const
  {
    nu = Vector::Zero(meq_);
    mu = Vector::Zero(min_);
    for (std::size_t k = 0; k < active_.size(); ++k) {
      if (active_[k] < meq_)
        nu[active_[k]] = lambda_[k];
      else
        mu[active_[k] - meq_] = std::max(lambda_[k], 0.0);
    }
  }

  Residuals current_residuals() const
  {
    Vector nu, mu;
    split_multipliers(nu, mu);
    return kkt_residuals(p_, x_, nu, mu);
  }

  Solution finish() const
  {
    Solution s;
    s.x = x_;
    split_multipliers(s.eq_multipliers, s.ineq_multipliers);
    for (int id : active_)
      if (id >= meq_)
        s.active_set.push_back(id - meq_);
    std::sort(s.active_set.begin(), s.active_set.end());
    s.objective = 0.5 * x_.dot(p_.hessian * x_) + p_.linear.dot(x_);
    s.iterations = iterations_;
    s.residuals = kkt_residuals(p_, s.x, s.eq_multipliers, s.ineq_multipliers);
    return s;
  }

  const Problem &p_;
  Options opt_;
  int n_, meq_, min_;
  int max_iter_ = 0;
  int iterations_ = 0;
  Eigen::LLT<Matrix> chol_;
  Vector row_norm_;
  Vector x_;
  std::vector<int> active_;
  Matrix Y_;  // H^{-1} N
  Vector lambda_;
};

}  // namespace

Solution solve(const Problem &problem, std::span<const int> warm_active, const Options &options)
{
  DualActiveSet solver(problem, options);
  return solver.run(warm_active);
}

}  // namespace noir::qp
