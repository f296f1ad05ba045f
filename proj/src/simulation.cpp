#include "repurchase/simulation.hpp"

#include <algorithm>
#include <cmath>

namespace repurchase {
namespace {

std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform in [0, 1) from the key (seed, replication, client).
double keyed_uniform(std::uint64_t seed, std::uint64_t replication, std::uint64_t client) {
  const std::uint64_t h = mix(mix(mix(seed) ^ replication) ^ (client * 0xd1b54a32d192ed03ULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Inverse-CDF table over types in capacity-major, valuation-minor order.
struct TypeSampler {
  std::vector<double> cumulative;
  std::vector<Item> items;

  explicit TypeSampler(const ClientDistribution& dist) {
    const auto& probs = dist.probs();
    double acc = 0.0;
    for (Eigen::Index l = 0; l < probs.rows(); ++l) {
      for (Eigen::Index k = 0; k < probs.cols(); ++k) {
        if (probs(l, k) <= 0.0) continue;
        acc += probs(l, k);
        cumulative.push_back(acc);
        items.push_back(Item{static_cast<std::size_t>(k), static_cast<std::size_t>(l)});
      }
    }
  }

  const Item& draw(double u) const {
    const double target = u * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    const auto idx = std::min<std::size_t>(
        static_cast<std::size_t>(it - cumulative.begin()), items.size() - 1);
    return items[idx];
  }
};

// best_response for every type, indexed [l * K + k].
std::vector<Item> response_table(const TypeGrid& grid, const Contract& contract,
                                 TieBreak tie_break) {
  std::vector<Item> table;
  for (std::size_t l = 0; l < grid.num_capacities(); ++l) {
    for (std::size_t k = 0; k < grid.num_valuations(); ++k) {
      table.push_back(best_response(grid, contract, Item{k, l}, tie_break));
    }
  }
  return table;
}

}  // namespace

std::string to_string(TieBreak tie_break) {
  return tie_break == TieBreak::kMaxPayment ? "max_payment" : "truthful_first";
}

Item best_response(const TypeGrid& grid, const Contract& contract, const Item& true_type,
                   TieBreak tie_break, double tol) {
  require_shape(grid, contract);
  if (!grid.contains(true_type)) {
    throw UsageError("best_response: true type index out of range");
  }
  const std::size_t k = true_type.valuation;
  const double cap = grid.capacity(true_type.capacity);

  // Candidates in rank order for ties: truthful item, then lexicographic.
  std::vector<Item> order;
  order.push_back(true_type);
  for (std::size_t k2 = 0; k2 < grid.num_valuations(); ++k2) {
    for (std::size_t l2 = 0; l2 < grid.num_capacities(); ++l2) {
      const Item it{k2, l2};
      if (it != true_type) order.push_back(it);
    }
  }

  double best_utility = 0.0;  // opt-out
  for (const Item& it : order) {
    if (contract.x(it) > cap) continue;
    best_utility = std::max(best_utility, client_utility(grid, contract, k, it));
  }

  Item chosen = Item::opt_out();
  bool found = false;
  for (const Item& it : order) {
    if (contract.x(it) > cap) continue;
    if (client_utility(grid, contract, k, it) < best_utility - tol) continue;
    if (!found) {
      chosen = it;
      found = true;
      if (tie_break == TieBreak::kTruthfulFirst) break;
    } else if (contract.p(it) > contract.p(chosen)) {
      chosen = it;
    }
  }
  return chosen;
}

SimulationSummary simulate(const MarketInstance& instance, const Contract& contract,
                           const SimulationConfig& config) {
  if (config.replications < 1) throw UsageError("simulate: replications must be >= 1");
  const auto& grid = instance.grid();
  require_shape(grid, contract);
  const std::size_t K = grid.num_valuations();
  const auto responses = response_table(grid, contract, config.tie_break);
  std::vector<TypeSampler> samplers;
  for (const auto& client : instance.clients()) samplers.emplace_back(client);

  SimulationSummary summary;
  summary.replications = config.replications;
  summary.histogram.setZero(static_cast<Eigen::Index>(K),
                            static_cast<Eigen::Index>(grid.num_capacities()));
  std::vector<double> utilities(config.replications);
  double supply_total = 0.0;
  std::size_t shortfalls = 0;
  std::vector<Item> chosen(samplers.size());
  for (std::size_t r = 0; r < config.replications; ++r) {
    double supply = 0.0;
    for (std::size_t i = 0; i < samplers.size(); ++i) {
      const Item& type = samplers[i].draw(keyed_uniform(config.seed, r, i));
      chosen[i] = responses[type.capacity * K + type.valuation];
      if (chosen[i].is_opt_out()) {
        ++summary.opt_out_count;
      } else {
        ++summary.histogram(static_cast<Eigen::Index>(chosen[i].valuation),
                            static_cast<Eigen::Index>(chosen[i].capacity));
        supply += contract.x(chosen[i]);
      }
    }
    utilities[r] = realized_provider_utility(instance, contract, chosen);
    supply_total += supply;
    if (supply < instance.demand_floor()) ++shortfalls;
  }

  const auto R = static_cast<double>(config.replications);
  // Shifted by the first draw so constant outcomes come out exact.
  const double shift = utilities.front();
  double sum = 0.0;
  for (double u : utilities) sum += u - shift;
  summary.mean_utility = shift + sum / R;
  if (config.replications > 1) {
    double squares = 0.0;
    for (double u : utilities) squares += (u - summary.mean_utility) * (u - summary.mean_utility);
    summary.std_error = std::sqrt(squares / (R - 1.0)) / std::sqrt(R);
  }
  summary.mean_total_repurchase = supply_total / R;
  summary.shortfall_frequency = static_cast<double>(shortfalls) / R;
  return summary;
}

double estimate_misreport_gain(const MarketInstance& instance, const Contract& contract,
                               const SimulationConfig& config) {
  if (config.replications < 1) {
    throw UsageError("estimate_misreport_gain: replications must be >= 1");
  }
  const auto& grid = instance.grid();
  require_shape(grid, contract);
  const std::size_t K = grid.num_valuations();
  std::vector<bool> seen(grid.num_items(), false);
  std::vector<TypeSampler> samplers;
  for (const auto& client : instance.clients()) samplers.emplace_back(client);
  for (std::size_t r = 0; r < config.replications; ++r) {
    for (std::size_t i = 0; i < samplers.size(); ++i) {
      const Item& type = samplers[i].draw(keyed_uniform(config.seed, r, i));
      seen[type.capacity * K + type.valuation] = true;
    }
  }

  double gain = 0.0;
  for (std::size_t l = 0; l < grid.num_capacities(); ++l) {
    for (std::size_t k = 0; k < K; ++k) {
      if (!seen[l * K + k]) continue;
      const Item truth{k, l};
      const double truthful = client_utility(grid, contract, k, truth);
      for (std::size_t k2 = 0; k2 < K; ++k2) {
        for (std::size_t l2 = 0; l2 < grid.num_capacities(); ++l2) {
          const Item dev{k2, l2};
          if (dev == truth || contract.x(dev) > grid.capacity(l)) continue;
          gain = std::max(gain, client_utility(grid, contract, k, dev) - truthful);
        }
      }
    }
  }
  return gain;
}

}  // namespace repurchase
