#pragma once

// Provider-optimal payments for a given allocation. Within every capacity
// column the top valuation's IR constraint binds and each lower valuation is
// made exactly indifferent to the item one step up:
//   p_K = v^K x_K,   p_k = p_{k+1} + v^k (x_k - x_{k+1}).
// The recursion runs backwards from k = K.

#include "repurchase/model.hpp"

#include <vector>

namespace repurchase {

// Single capacity c (grid must have L = 1). Requires
// c >= x_1 >= ... >= x_K >= 0; violations within tol are clamped.
std::vector<double> optimal_payment_single(const TypeGrid& grid,
                                           std::span<const double> allocation,
                                           double tol = kModelTolerance);

// Multi-capacity payments, applied column by column. Requires resource
// feasibility (P1), monotonicity in valuation (P2) and resource greediness
// (P6); the PreconditionError message names the property and the indices.
Eigen::MatrixXd optimal_payment_multi(const TypeGrid& grid,
                                      const Eigen::MatrixXd& allocation,
                                      double tol = kModelTolerance);

// Same column rule, checking only P1 and P2. Used for menus that satisfy the
// greedy property only approximately (relaxed solver output).
Eigen::MatrixXd column_payments(const TypeGrid& grid,
                                const Eigen::MatrixXd& allocation,
                                double tol = kModelTolerance);

// Allocation plus its optimal payments (validated as in optimal_payment_multi).
Contract optimal_contract(const TypeGrid& grid, const Eigen::MatrixXd& allocation,
                          double tol = kModelTolerance);

}  // namespace repurchase
