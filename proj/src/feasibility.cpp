#include "repurchase/feasibility.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace repurchase {
namespace {

std::string at(std::size_t k, std::size_t l) {
  std::ostringstream os;
  os << "k=" << k << ",l=" << l;
  return os.str();
}

std::string pair_at(std::size_t k, std::size_t l, std::size_t k2, std::size_t l2) {
  std::ostringstream os;
  os << "type(k=" << k << ",l=" << l << ")->item(k=" << k2 << ",l=" << l2 << ")";
  return os.str();
}

double truthful_utility(const TypeGrid& grid, const Contract& c, std::size_t k,
                        std::size_t l) {
  return c.p(k, l) - grid.valuation(k) * c.x(k, l);
}

void consider(WorstViolation& worst, const char* name, const Verdict& v) {
  if (v.margin < 0.0 && -v.margin > worst.magnitude) {
    worst.magnitude = -v.margin;
    worst.constraint = std::string(name) + "[" + v.where + "]";
  }
}

}  // namespace

void Verdict::observe(double slack, double tol, const std::string& location) {
  if (slack < margin) {
    margin = slack;
    where = location;
  }
  if (slack < -tol) pass = false;
}

void Verdict::merge(const Verdict& other) {
  if (other.margin < margin) {
    margin = other.margin;
    where = other.where;
  }
  pass = pass && other.pass;
}

Verdict check_resource_feasibility(const TypeGrid& grid, const Contract& contract,
                                   double tol) {
  require_shape(grid, contract);
  Verdict v;
  for (std::size_t k = 0; k < grid.num_valuations(); ++k) {
    for (std::size_t l = 0; l < grid.num_capacities(); ++l) {
      v.observe(grid.capacity(l) - contract.x(k, l), tol, at(k, l));
    }
  }
  return v;
}

GreedyVerdict check_resource_greedy(const TypeGrid& grid, const Contract& contract,
                                    double tol) {
  require_shape(grid, contract);
  GreedyVerdict g;
  const std::size_t L = grid.num_capacities();
  for (std::size_t k = 0; k < grid.num_valuations(); ++k) {
    for (std::size_t hi = 0; hi < L; ++hi) {
      for (std::size_t lo = 0; lo < hi; ++lo) {
        const double gap = contract.x(k, hi) - contract.x(k, lo);
        std::ostringstream os;
        os << "k=" << k << ",l=" << hi << ">l'=" << lo;
        g.monotone.observe(gap, tol, os.str());
        if (gap > tol) {
          g.maximal.observe(-std::abs(contract.x(k, lo) - grid.capacity(lo)), tol,
                            os.str());
        }
      }
    }
  }
  return g;
}

Verdict check_ic_full(const TypeGrid& grid, const Contract& contract, double tol) {
  require_shape(grid, contract);
  Verdict v;
  const std::size_t K = grid.num_valuations();
  const std::size_t L = grid.num_capacities();
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t l = 0; l < L; ++l) {
      const double own = truthful_utility(grid, contract, k, l);
      for (std::size_t k2 = 0; k2 < K; ++k2) {
        for (std::size_t l2 = 0; l2 < L; ++l2) {
          if (k2 == k && l2 == l) continue;
          if (contract.x(k2, l2) > grid.capacity(l) + tol) continue;
          const double other = contract.p(k2, l2) - grid.valuation(k) * contract.x(k2, l2);
          v.observe(own - other, tol, pair_at(k, l, k2, l2));
        }
      }
    }
  }
  return v;
}

DecomposedIcVerdict check_ic_decomposed(const TypeGrid& grid,
                                        const Contract& contract, double tol) {
  require_shape(grid, contract);
  DecomposedIcVerdict d;
  const std::size_t K = grid.num_valuations();
  const std::size_t L = grid.num_capacities();
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t k = 0; k < K; ++k) {
      const double own = truthful_utility(grid, contract, k, l);
      for (std::size_t k2 = 0; k2 < K; ++k2) {
        if (k2 == k) continue;
        const double other = contract.p(k2, l) - grid.valuation(k) * contract.x(k2, l);
        d.valuation.observe(own - other, tol, pair_at(k, l, k2, l));
      }
      for (std::size_t l2 = 0; l2 < L; ++l2) {
        if (l2 == l || contract.x(k, l2) > grid.capacity(l) + tol) continue;
        d.capacity.observe(own - truthful_utility(grid, contract, k, l2), tol,
                           pair_at(k, l, k, l2));
      }
    }
  }
  return d;
}

Verdict check_ir(const TypeGrid& grid, const Contract& contract, double tol) {
  require_shape(grid, contract);
  Verdict v;
  for (std::size_t k = 0; k < grid.num_valuations(); ++k) {
    for (std::size_t l = 0; l < grid.num_capacities(); ++l) {
      v.observe(truthful_utility(grid, contract, k, l), tol, at(k, l));
    }
  }
  return v;
}

AuditReport check_theorem1(const TypeGrid& grid, const Contract& contract,
                           double tol, double epsilon) {
  require_shape(grid, contract);
  AuditReport r;
  const std::size_t K = grid.num_valuations();
  const std::size_t L = grid.num_capacities();

  r.resource_feasible = check_resource_feasibility(grid, contract, tol);
  r.greedy = check_resource_greedy(grid, contract, tol);
  const auto decomposed = check_ic_decomposed(grid, contract, tol);
  r.ic_valuation = decomposed.valuation;
  r.ic_capacity = decomposed.capacity;
  r.ic_full = check_ic_full(grid, contract, tol);
  r.ir = check_ir(grid, contract, tol);

  r.p1 = r.resource_feasible;

  for (std::size_t l = 0; l < L; ++l) {
    r.p2.observe(grid.capacity(l) - contract.x(0, l), tol, at(0, l));
    r.p2.observe(contract.x(K - 1, l), tol, at(K - 1, l));
    for (std::size_t lo = 0; lo < K; ++lo) {
      for (std::size_t hi = lo + 1; hi < K; ++hi) {
        std::ostringstream os;
        os << "l=" << l << ",k=" << lo << "<k'=" << hi;
        const double dx = contract.x(lo, l) - contract.x(hi, l);
        const double dp = contract.p(lo, l) - contract.p(hi, l);
        r.p2.observe(dx, tol, os.str());
        r.p3.observe(dp - grid.valuation(lo) * dx, tol, os.str() + ",lower");
        r.p3.observe(grid.valuation(hi) * dx - dp, tol, os.str() + ",upper");
      }
    }
    r.p5.observe(truthful_utility(grid, contract, K - 1, l), tol, at(K - 1, l));
  }
  r.p4 = r.ic_capacity;
  r.p6 = r.greedy.monotone;
  r.p6.merge(r.greedy.maximal);

  for (const auto& [name, v] :
       {std::pair<const char*, const Verdict*>{"P1", &r.p1}, {"P2", &r.p2},
        {"P3", &r.p3}, {"P4", &r.p4}, {"P5", &r.p5}, {"P6", &r.p6},
        {"IC", &r.ic_full}, {"IR", &r.ir}}) {
    consider(r.worst_violation, name, *v);
  }

  r.epsilon = epsilon;
  r.regret = compute_regret(grid, contract);
  r.regret_bound = regret_bound(grid, epsilon);
  r.regret_above_tight_bound = r.regret > tight_regret_bound(grid, epsilon) + tol;
  return r;
}

double compute_regret(const TypeGrid& grid, const Contract& contract) {
  require_shape(grid, contract);
  const std::size_t K = grid.num_valuations();
  const std::size_t L = grid.num_capacities();
  double regret = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t l = 0; l < L; ++l) {
      const double own = truthful_utility(grid, contract, k, l);
      for (std::size_t k2 = 0; k2 < K; ++k2) {
        for (std::size_t l2 = 0; l2 < L; ++l2) {
          if (contract.x(k2, l2) > grid.capacity(l)) continue;
          const double other = contract.p(k2, l2) - grid.valuation(k) * contract.x(k2, l2);
          regret = std::max(regret, other - own);
        }
      }
    }
  }
  return regret;
}

double regret_bound(const TypeGrid& grid, double epsilon) {
  if (!(epsilon >= 0.0)) throw UsageError("regret_bound: epsilon must be >= 0");
  const auto v = grid.valuations();
  return std::accumulate(v.begin(), v.end(), 0.0) * std::sqrt(epsilon);
}

double tight_regret_bound(const TypeGrid& grid, double epsilon) {
  if (!(epsilon >= 0.0)) throw UsageError("tight_regret_bound: epsilon must be >= 0");
  return grid.top_valuation() * std::sqrt(epsilon);
}

}  // namespace repurchase
