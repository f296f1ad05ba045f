#pragma once

// Optimal allocation rules.
//
// With optimal payments substituted, the provider's expected utility is
//   sum_{k,l} a_k^l x_k^l + M * min(0, sum_{k,l} w_k^l x_k^l - D),
// where a_k^l = w_k^l (alpha - v^k) - (v^k - v^{k-1}) sum_{j<k} w_j^l are the
// virtual coefficients. A menu is feasible iff every valuation row has the
// form x_k^l = min(c^l, y_k) with c^L >= y_1 >= ... >= y_K >= 0 ("levels").
//
//   solve_single_capacity  L = 1, linear program with the auxiliary shortfall
//                          variable t = min(0, supply - D)
//   solve_multi_reduced    any L, exact: enumerates level vectors at the
//                          objective's breakpoints and demand-crossing points
//   solve_multi_relaxed    any L, local search on the epsilon-relaxed
//                          complementarity program
//   oracle_grid_search     brute force over a level lattice (testing aid)
//
// Ties within a relative 1e-10 of the optimum are broken towards the larger
// total allocation, then the lexicographically larger level vector.

#include "repurchase/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace repurchase {

enum class Method { kSingleExact, kMultiReducedExact, kMultiRelaxed, kOracle };

std::string to_string(Method method);

struct SolveDiagnostics {
  std::size_t iterations = 0;            // LP pivots or local-search move evaluations
  std::size_t candidates = 0;            // enumerated level vectors
  std::size_t crossing_candidates = 0;   // of which placed on the demand floor
  std::size_t restarts = 0;
  std::size_t accepted_moves = 0;
};

struct SolveResult {
  Contract contract;
  double expected_utility = 0.0;
  Method method = Method::kMultiReducedExact;
  double epsilon = 0.0;
  double aux_t = 0.0;  // min(0, expected supply - D)
  SolveDiagnostics diagnostics;
};

// K x L matrix of virtual coefficients a_k^l.
Eigen::MatrixXd virtual_coefficients(const MarketInstance& instance);

// Upper bound on how much the objective moves when every level shifts by one
// unit: sum |a_k^l| + M * sum w.
double lipschitz_bound(const MarketInstance& instance);

// x_k^l = min(c^l, levels[k]).
Eigen::MatrixXd allocation_from_levels(const TypeGrid& grid,
                                       std::span<const double> levels);

// Returns levels y (y_k = x_k^L) when every row equals min(c^l, y_k) within
// tol, otherwise nullopt.
std::optional<std::vector<double>> levels_from_allocation(const TypeGrid& grid,
                                                          const Eigen::MatrixXd& x,
                                                          double tol = 0.0);

SolveResult solve_single_capacity(const MarketInstance& instance);

SolveResult solve_multi_reduced(const MarketInstance& instance);

struct RelaxedOptions {
  double epsilon = 1e-6;
  std::size_t restarts = 8;
  std::uint64_t seed = 0;
  std::size_t max_iterations = 100000;  // per restart
};

SolveResult solve_multi_relaxed(const MarketInstance& instance,
                                const RelaxedOptions& options);

// Runs the relaxed solver for each epsilon in turn (intended decreasing),
// warm-starting each stage from the previous stage's solution.
SolveResult solve_multi_relaxed_schedule(const MarketInstance& instance,
                                         std::span<const double> epsilons,
                                         const RelaxedOptions& options);

inline constexpr double kDefaultScheduleEpsilons[] = {1e-2, 1e-4, 1e-6};

// Ordering constraints on valuations and capacities, x_1^l <= c^l, x >= 0, and
// (x_k^{l'} - x_k^l)(c^l - x_k^l) <= epsilon for every l' > l.
bool relaxed_feasible(const TypeGrid& grid, const Eigen::MatrixXd& x,
                      double epsilon, double tol = 0.0);

inline constexpr double kOracleCandidateLimit = 1e7;

// Enumerates levels y_2..y_K over {0, step, 2 step, ...} plus the capacities,
// optimizing y_1 exactly over its piecewise-linear section. Payments are
// summed in telescoped form, independently of the virtual coefficients.
// Throws CandidateLimitError when the lattice has too many tuples.
SolveResult oracle_grid_search(const MarketInstance& instance, double grid_step,
                               double max_candidates = kOracleCandidateLimit);

}  // namespace repurchase
