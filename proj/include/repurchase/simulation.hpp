#pragma once

// Monte Carlo market: clients draw types independently, pick a best response
// from the menu, and the provider's realized utility is averaged.

#include "repurchase/model.hpp"

#include <cstdint>
#include <vector>

namespace repurchase {

enum class TieBreak {
  kTruthfulFirst,  // true item wins ties, then lowest (k, l); opt-out last
  kMaxPayment,     // highest payment wins ties, then the rules above
};

std::string to_string(TieBreak tie_break);

struct SimulationConfig {
  std::size_t replications = 10000;
  std::uint64_t seed = 0;
  TieBreak tie_break = TieBreak::kTruthfulFirst;
};

struct SimulationSummary {
  double mean_utility = 0.0;
  double std_error = 0.0;
  double mean_total_repurchase = 0.0;
  double shortfall_frequency = 0.0;  // fraction of replications with supply < D
  // K x L selection counts; opt_out_count holds the rest.
  Eigen::Matrix<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic> histogram;
  std::uint64_t opt_out_count = 0;
  std::size_t replications = 0;
};

// Utility-maximizing item among those with x <= c^l, plus opt-out (utility 0).
// Utilities within tol count as ties.
Item best_response(const TypeGrid& grid, const Contract& contract, const Item& true_type,
                   TieBreak tie_break = TieBreak::kTruthfulFirst,
                   double tol = kModelTolerance);

// Deterministic per (instance, contract, config). Client i in replication r
// draws from a generator keyed by (seed, r, i).
SimulationSummary simulate(const MarketInstance& instance, const Contract& contract,
                           const SimulationConfig& config);

// Largest (best-response utility - truthful utility) over the types that
// appear in the sampled profiles. Opt-out is not counted as a deviation, so
// the result never exceeds compute_regret.
double estimate_misreport_gain(const MarketInstance& instance, const Contract& contract,
                               const SimulationConfig& config);

}  // namespace repurchase
