#include "repurchase/lp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace repurchase::lp {
namespace {

constexpr double kPivotTol = 1e-12;
constexpr double kCostTol = 1e-11;

class Tableau {
 public:
  Tableau(const LinearProgram& program) : n_(program.num_vars()) {
    const auto& rows = program.constraints();
    m_ = rows.size();
    std::size_t slacks = 0;
    std::size_t artificials = 0;
    for (const auto& c : rows) {
      const Sense s = effective_sense(c);
      if (s != Sense::kEqual) ++slacks;
      if (s != Sense::kLessEqual) ++artificials;
    }
    first_artificial_ = n_ + slacks;
    cols_ = first_artificial_ + artificials;
    t_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m_ + 1),
                               static_cast<Eigen::Index>(cols_ + 1));
    basis_.assign(m_, 0);
    banned_.assign(cols_, false);

    std::size_t next_slack = n_;
    std::size_t next_art = first_artificial_;
    for (std::size_t i = 0; i < m_; ++i) {
      const auto& c = rows[i];
      const double sign = c.rhs < 0.0 ? -1.0 : 1.0;
      for (std::size_t j = 0; j < n_; ++j) at(i, j) = sign * c.coefficients[j];
      rhs(i) = sign * c.rhs;
      const Sense s = effective_sense(c);
      if (s == Sense::kLessEqual) {
        at(i, next_slack) = 1.0;
        basis_[i] = next_slack++;
      } else {
        if (s == Sense::kGreaterEqual) at(i, next_slack++) = -1.0;
        at(i, next_art) = 1.0;
        basis_[i] = next_art++;
      }
    }
  }

  // Phase 1: drive artificial variables to zero. Returns false if infeasible.
  Status phase_one(std::size_t max_pivots) {
    if (first_artificial_ == cols_) return Status::kOptimal;
    std::vector<double> cost(cols_, 0.0);
    for (std::size_t j = first_artificial_; j < cols_; ++j) cost[j] = -1.0;
    load_objective(cost);
    const Status s = run(max_pivots);
    if (s != Status::kOptimal) return s;
    if (objective_value() < -1e-9) return Status::kInfeasible;
    for (std::size_t i = 0; i < m_; ++i) {
      if (basis_[i] < first_artificial_) continue;
      for (std::size_t j = 0; j < first_artificial_; ++j) {
        if (std::abs(at(i, j)) > 1e-9) {
          pivot(i, j);
          break;
        }
      }
    }
    for (std::size_t j = first_artificial_; j < cols_; ++j) banned_[j] = true;
    return Status::kOptimal;
  }

  Status optimize(const std::vector<double>& objective, std::size_t max_pivots) {
    std::vector<double> cost(cols_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) cost[j] = objective[j];
    load_objective(cost);
    const Status s = run(max_pivots);
    if (s != Status::kOptimal) return s;
    // Restrict later objectives to the optimal face: nonbasic columns with a
    // strictly positive reduced cost must stay at zero.
    for (std::size_t j = 0; j < cols_; ++j) {
      if (!banned_[j] && !is_basic(j) && cost_row(j) > kCostTol) banned_[j] = true;
    }
    return Status::kOptimal;
  }

  double objective_value() const {
    return t_(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(cols_));
  }

  std::vector<double> primal() const {
    std::vector<double> x(n_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      if (basis_[i] < n_) x[basis_[i]] = std::max(0.0, rhs(i));
    }
    return x;
  }

  std::size_t pivots() const noexcept { return pivots_; }

 private:
  static Sense effective_sense(const Constraint& c) {
    if (c.rhs >= 0.0 || c.sense == Sense::kEqual) return c.sense;
    return c.sense == Sense::kLessEqual ? Sense::kGreaterEqual : Sense::kLessEqual;
  }

  double& at(std::size_t i, std::size_t j) {
    return t_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  double at(std::size_t i, std::size_t j) const {
    return t_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  double& rhs(std::size_t i) { return at(i, cols_); }
  double rhs(std::size_t i) const { return at(i, cols_); }
  double cost_row(std::size_t j) const { return at(m_, j); }

  bool is_basic(std::size_t j) const {
    for (std::size_t b : basis_) {
      if (b == j) return true;
    }
    return false;
  }

  // Objective row stores reduced costs d_j = c_B B^-1 A_j - c_j and, in the
  // last column, the current objective value.
  void load_objective(const std::vector<double>& cost) {
    for (std::size_t j = 0; j <= cols_; ++j) {
      double d = j < cols_ ? -cost[j] : 0.0;
      for (std::size_t i = 0; i < m_; ++i) d += cost[basis_[i]] * at(i, j);
      at(m_, j) = d;
    }
  }

  void pivot(std::size_t row, std::size_t col) {
    const auto r = static_cast<Eigen::Index>(row);
    const auto c = static_cast<Eigen::Index>(col);
    t_.row(r) /= t_(r, c);
    for (Eigen::Index i = 0; i < t_.rows(); ++i) {
      if (i == r) continue;
      const double f = t_(i, c);
      if (f != 0.0) t_.row(i) -= f * t_.row(r);
    }
    basis_[row] = col;
    ++pivots_;
  }

  Status run(std::size_t max_pivots) {
    while (true) {
      std::size_t enter = cols_;
      for (std::size_t j = 0; j < cols_; ++j) {
        if (!banned_[j] && cost_row(j) < -kCostTol) {
          enter = j;
          break;
        }
      }
      if (enter == cols_) return Status::kOptimal;
      if (pivots_ >= max_pivots) return Status::kIterationLimit;

      std::size_t leave = m_;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m_; ++i) {
        const double a = at(i, enter);
        if (a <= kPivotTol) continue;
        const double ratio = rhs(i) / a;
        if (ratio < best - 1e-14 ||
            (std::abs(ratio - best) <= 1e-14 && basis_[i] < basis_[leave])) {
          best = ratio;
          leave = i;
        }
      }
      if (leave == m_) return Status::kUnbounded;
      pivot(leave, enter);
    }
  }

  std::size_t n_;
  std::size_t m_ = 0;
  std::size_t cols_ = 0;
  std::size_t first_artificial_ = 0;
  Eigen::MatrixXd t_;
  std::vector<std::size_t> basis_;
  std::vector<bool> banned_;
  std::size_t pivots_ = 0;
};

}  // namespace

void LinearProgram::add_constraint(std::vector<double> coefficients, Sense sense,
                                   double rhs) {
  if (coefficients.size() != num_vars_) {
    throw std::invalid_argument("add_constraint: coefficient count != num_vars");
  }
  constraints_.push_back(Constraint{std::move(coefficients), sense, rhs});
}

std::string to_string(Status status) {
  switch (status) {
    case Status::kOptimal: return "optimal";
    case Status::kInfeasible: return "infeasible";
    case Status::kUnbounded: return "unbounded";
    case Status::kIterationLimit: return "iteration_limit";
  }
  return "unknown";
}

Solution maximize_lexicographic(const LinearProgram& program,
                                std::span<const std::vector<double>> objectives,
                                std::size_t max_pivots) {
  for (const auto& obj : objectives) {
    if (obj.size() != program.num_vars()) {
      throw std::invalid_argument("maximize: objective length != num_vars");
    }
  }
  Tableau tableau(program);
  Solution sol;
  sol.status = tableau.phase_one(max_pivots);
  if (sol.status == Status::kOptimal) {
    for (const auto& obj : objectives) {
      sol.status = tableau.optimize(obj, max_pivots);
      if (sol.status != Status::kOptimal) break;
      sol.objective_values.push_back(tableau.objective_value());
    }
  }
  sol.pivots = tableau.pivots();
  if (sol.status == Status::kOptimal) sol.x = tableau.primal();
  return sol;
}

}  // namespace repurchase::lp
