#include "repurchase/payments.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace repurchase {
namespace {

void check_allocation_shape(const TypeGrid& grid, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.rows()) != grid.num_valuations() ||
      static_cast<std::size_t>(x.cols()) != grid.num_capacities()) {
    std::ostringstream os;
    os << "allocation shape " << x.rows() << "x" << x.cols()
       << " does not match grid " << grid.num_valuations() << "x"
       << grid.num_capacities();
    throw UsageError(os.str());
  }
  if (!x.allFinite()) throw UsageError("allocation: entries must be finite");
}

// P1 and P2 for one column.
void check_column(const TypeGrid& grid, const Eigen::MatrixXd& x, Eigen::Index l,
                  double tol) {
  const double cap = grid.capacity(static_cast<std::size_t>(l));
  const Eigen::Index K = x.rows();
  for (Eigen::Index k = 0; k < K; ++k) {
    if (x(k, l) > cap + tol) {
      std::ostringstream os;
      os << "P1 violated at k=" << k << ",l=" << l << ": x=" << x(k, l)
         << " exceeds capacity " << cap;
      throw PreconditionError(os.str());
    }
    if (x(k, l) < -tol) {
      std::ostringstream os;
      os << "P2 violated at k=" << k << ",l=" << l << ": x=" << x(k, l)
         << " is negative";
      throw PreconditionError(os.str());
    }
    if (k + 1 < K && x(k + 1, l) > x(k, l) + tol) {
      std::ostringstream os;
      os << "P2 violated at l=" << l << ": x increases from k=" << k << " ("
         << x(k, l) << ") to k=" << k + 1 << " (" << x(k + 1, l) << ")";
      throw PreconditionError(os.str());
    }
  }
}

void check_greedy(const TypeGrid& grid, const Eigen::MatrixXd& x, double tol) {
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    for (Eigen::Index hi = 0; hi < x.cols(); ++hi) {
      for (Eigen::Index lo = 0; lo < hi; ++lo) {
        const double gap = x(k, hi) - x(k, lo);
        const double shortfall = grid.capacity(static_cast<std::size_t>(lo)) - x(k, lo);
        if (gap < -tol || (gap > tol && std::abs(shortfall) > tol)) {
          std::ostringstream os;
          os << "P6 violated at k=" << k << ", capacities l'=" << lo << " < l=" << hi
             << ": x=" << x(k, lo) << " vs " << x(k, hi);
          throw PreconditionError(os.str());
        }
      }
    }
  }
}

void fill_column(const TypeGrid& grid, const Eigen::MatrixXd& x, Eigen::Index l,
                 Eigen::MatrixXd& p) {
  const Eigen::Index K = x.rows();
  const auto top = static_cast<std::size_t>(K - 1);
  const double x_top = std::max(0.0, x(K - 1, l));
  p(K - 1, l) = grid.valuation(top) * x_top;
  for (Eigen::Index k = K - 2; k >= 0; --k) {
    // Differences that are negative only by roundoff are treated as zero.
    const double step = std::max(0.0, x(k, l) - x(k + 1, l));
    p(k, l) = p(k + 1, l) + grid.valuation(static_cast<std::size_t>(k)) * step;
  }
}

}  // namespace

std::vector<double> optimal_payment_single(const TypeGrid& grid,
                                           std::span<const double> allocation,
                                           double tol) {
  if (grid.num_capacities() != 1) {
    throw UsageError("optimal_payment_single: grid must have exactly one capacity");
  }
  if (allocation.size() != grid.num_valuations()) {
    throw UsageError("optimal_payment_single: allocation length must equal K");
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(allocation.size()), 1);
  for (std::size_t k = 0; k < allocation.size(); ++k) {
    x(static_cast<Eigen::Index>(k), 0) = allocation[k];
  }
  const Eigen::MatrixXd p = column_payments(grid, x, tol);
  return {p.data(), p.data() + p.size()};
}

Eigen::MatrixXd column_payments(const TypeGrid& grid,
                                const Eigen::MatrixXd& allocation, double tol) {
  check_allocation_shape(grid, allocation);
  Eigen::MatrixXd p(allocation.rows(), allocation.cols());
  for (Eigen::Index l = 0; l < allocation.cols(); ++l) {
    check_column(grid, allocation, l, tol);
    fill_column(grid, allocation, l, p);
  }
  return p;
}

Eigen::MatrixXd optimal_payment_multi(const TypeGrid& grid,
                                      const Eigen::MatrixXd& allocation,
                                      double tol) {
  check_allocation_shape(grid, allocation);
  for (Eigen::Index l = 0; l < allocation.cols(); ++l) {
    check_column(grid, allocation, l, tol);
  }
  check_greedy(grid, allocation, tol);
  Eigen::MatrixXd p(allocation.rows(), allocation.cols());
  for (Eigen::Index l = 0; l < allocation.cols(); ++l) {
    fill_column(grid, allocation, l, p);
  }
  return p;
}

Contract optimal_contract(const TypeGrid& grid, const Eigen::MatrixXd& allocation,
                          double tol) {
  return Contract(allocation, optimal_payment_multi(grid, allocation, tol));
}

}  // namespace repurchase
