#pragma once

// Random generators and independent reference computations for the tests.
// Nothing here calls into the library's solvers or audit engine.

#include "repurchase/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

namespace support {

using repurchase::ClientDistribution;
using repurchase::Contract;
using repurchase::MarketInstance;
using repurchase::TypeGrid;

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// count distinct integers from [1, max_value], ascending.
inline std::vector<double> distinct_ints(std::mt19937_64& rng, std::size_t count,
                                         int max_value) {
  std::set<int> picked;
  while (picked.size() < count) picked.insert(uniform_int(rng, 1, max_value));
  return {picked.begin(), picked.end()};
}

inline TypeGrid random_grid(std::mt19937_64& rng, std::size_t max_k, std::size_t max_l,
                            int max_valuation = 6, int max_capacity = 4) {
  const auto K = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<int>(max_k)));
  const auto L = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<int>(max_l)));
  return TypeGrid(distinct_ints(rng, K, max_valuation), distinct_ints(rng, L, max_capacity));
}

// L x K probabilities with roughly a quarter of the entries zeroed.
inline ClientDistribution random_distribution(std::mt19937_64& rng, const TypeGrid& grid) {
  const auto L = static_cast<Eigen::Index>(grid.num_capacities());
  const auto K = static_cast<Eigen::Index>(grid.num_valuations());
  Eigen::MatrixXd m(L, K);
  for (Eigen::Index l = 0; l < L; ++l) {
    for (Eigen::Index k = 0; k < K; ++k) {
      m(l, k) = uniform_int(rng, 0, 3) == 0 ? 0.0 : uniform_real(rng, 0.05, 1.0);
    }
  }
  if (m.sum() == 0.0) m(0, 0) = 1.0;
  m /= m.sum();
  return ClientDistribution(m);
}

// Point-mass distribution on type (k, l).
inline ClientDistribution point_mass(const TypeGrid& grid, std::size_t k, std::size_t l) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(grid.num_capacities()),
                                            static_cast<Eigen::Index>(grid.num_valuations()));
  m(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) = 1.0;
  return ClientDistribution(m);
}

// Integer alpha, penalty either off or a small integer, demand floor either
// zero or a value up to the total top capacity.
inline MarketInstance random_instance(std::mt19937_64& rng, const TypeGrid& grid,
                                      std::size_t max_clients = 3) {
  const auto n = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<int>(max_clients)));
  std::vector<ClientDistribution> clients;
  for (std::size_t i = 0; i < n; ++i) clients.push_back(random_distribution(rng, grid));
  const double alpha = uniform_int(rng, 1, static_cast<int>(grid.top_valuation()) + 3);
  const double penalty = uniform_int(rng, 0, 2) == 0 ? 0.0 : uniform_int(rng, 1, 8);
  const double floor =
      uniform_int(rng, 0, 2) == 0
          ? 0.0
          : uniform_real(rng, 0.0, static_cast<double>(n) * grid.top_capacity());
  return MarketInstance(grid, std::move(clients), alpha, penalty, floor);
}

inline Eigen::MatrixXd from_levels(const TypeGrid& grid, const std::vector<double>& y) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(grid.num_valuations()),
                    static_cast<Eigen::Index>(grid.num_capacities()));
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    for (Eigen::Index l = 0; l < x.cols(); ++l) {
      x(k, l) = std::min(grid.capacity(static_cast<std::size_t>(l)),
                         y[static_cast<std::size_t>(k)]);
    }
  }
  return x;
}

// Greedy, monotone allocation from random descending levels; levels snap to a
// capacity or to zero with some probability so boundary cases are common.
inline Eigen::MatrixXd random_feasible_allocation(std::mt19937_64& rng, const TypeGrid& grid) {
  std::vector<double> y(grid.num_valuations());
  for (double& v : y) {
    const int mode = uniform_int(rng, 0, 3);
    if (mode == 0) {
      v = grid.capacity(static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<int>(grid.num_capacities()) - 1)));
    } else if (mode == 1) {
      v = 0.0;
    } else {
      v = uniform_real(rng, 0.0, grid.top_capacity());
    }
  }
  std::sort(y.begin(), y.end(), std::greater<>());
  return from_levels(grid, y);
}

// Payments by the explicit sum p_k = v^K x_K - sum_{j=k}^{K-1} v^j (x_{j+1} - x_j),
// applied to every column.
inline Eigen::MatrixXd closed_form_payments(const TypeGrid& grid, const Eigen::MatrixXd& x) {
  const Eigen::Index K = x.rows();
  Eigen::MatrixXd p(x.rows(), x.cols());
  for (Eigen::Index l = 0; l < x.cols(); ++l) {
    for (Eigen::Index k = 0; k < K; ++k) {
      double value = grid.top_valuation() * x(K - 1, l);
      for (Eigen::Index j = k; j < K - 1; ++j) {
        value -= grid.valuation(static_cast<std::size_t>(j)) * (x(j + 1, l) - x(j, l));
      }
      p(k, l) = value;
    }
  }
  return p;
}

// Provider objective by direct summation over clients and types.
inline double expected_utility_reference(const MarketInstance& inst, const Contract& c) {
  double linear = 0.0;
  double supply = 0.0;
  for (const auto& client : inst.clients()) {
    for (std::size_t l = 0; l < inst.grid().num_capacities(); ++l) {
      for (std::size_t k = 0; k < inst.grid().num_valuations(); ++k) {
        const double lambda = client.probability(k, l);
        linear += lambda * (inst.alpha() * c.x(k, l) - c.p(k, l));
        supply += lambda * c.x(k, l);
      }
    }
  }
  return linear + inst.penalty() * std::min(0.0, supply - inst.demand_floor());
}

// Exact expectation of the realized utility under truthful play, by
// enumerating every joint type profile. The penalty is applied per profile.
inline double truthful_profile_expectation(const MarketInstance& inst, const Contract& c) {
  const std::size_t K = inst.grid().num_valuations();
  const std::size_t types = inst.grid().num_items();
  const std::size_t n = inst.num_clients();
  std::vector<std::size_t> idx(n, 0);
  double total = 0.0;
  while (true) {
    double prob = 1.0;
    double revenue = 0.0;
    double supply = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = idx[i] % K;
      const std::size_t l = idx[i] / K;
      prob *= inst.clients()[i].probability(k, l);
      revenue += inst.alpha() * c.x(k, l) - c.p(k, l);
      supply += c.x(k, l);
    }
    if (prob > 0.0) {
      total += prob * (revenue + inst.penalty() * std::min(0.0, supply - inst.demand_floor()));
    }
    std::size_t pos = 0;
    while (pos < n && ++idx[pos] == types) idx[pos++] = 0;
    if (pos == n) break;
  }
  return total;
}

// Largest gain from a non-truthful item with x <= own capacity (no opt-out).
inline double reference_regret(const TypeGrid& grid, const Contract& c) {
  double worst = 0.0;
  for (std::size_t k = 0; k < grid.num_valuations(); ++k) {
    for (std::size_t l = 0; l < grid.num_capacities(); ++l) {
      const double own = c.p(k, l) - grid.valuation(k) * c.x(k, l);
      for (std::size_t k2 = 0; k2 < grid.num_valuations(); ++k2) {
        for (std::size_t l2 = 0; l2 < grid.num_capacities(); ++l2) {
          if (c.x(k2, l2) > grid.capacity(l)) continue;
          worst = std::max(worst, c.p(k2, l2) - grid.valuation(k) * c.x(k2, l2) - own);
        }
      }
    }
  }
  return worst;
}

}  // namespace support
