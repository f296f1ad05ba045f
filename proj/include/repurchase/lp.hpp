#pragma once

// Dense two-phase primal simplex for small linear programs over x >= 0.
// Bland's rule is used for both entering and leaving choices, so degenerate
// problems (the ordering chains of the contract programs are highly
// degenerate) cannot cycle.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace repurchase::lp {

enum class Sense { kLessEqual, kGreaterEqual, kEqual };

struct Constraint {
  std::vector<double> coefficients;
  Sense sense = Sense::kLessEqual;
  double rhs = 0.0;
};

class LinearProgram {
 public:
  explicit LinearProgram(std::size_t num_vars) : num_vars_(num_vars) {}

  std::size_t num_vars() const noexcept { return num_vars_; }
  const std::vector<Constraint>& constraints() const noexcept {
    return constraints_;
  }

  // Adds coefficients . x (sense) rhs. Throws std::invalid_argument when the
  // coefficient vector length differs from num_vars().
  void add_constraint(std::vector<double> coefficients, Sense sense, double rhs);

 private:
  std::size_t num_vars_;
  std::vector<Constraint> constraints_;
};

enum class Status { kOptimal, kInfeasible, kUnbounded, kIterationLimit };

std::string to_string(Status status);

struct Solution {
  Status status = Status::kInfeasible;
  std::vector<double> x;
  std::vector<double> objective_values;  // one per objective, in order
  std::size_t pivots = 0;
};

// Maximizes objectives[0]; then maximizes objectives[1] over the optimal face
// of the first, and so on. Each objective has num_vars() entries.
Solution maximize_lexicographic(const LinearProgram& program,
                                std::span<const std::vector<double>> objectives,
                                std::size_t max_pivots = 100000);

inline Solution maximize(const LinearProgram& program,
                         const std::vector<double>& objective) {
  return maximize_lexicographic(program, std::span(&objective, 1));
}

}  // namespace repurchase::lp
