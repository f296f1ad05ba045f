#include "repurchase/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace repurchase {
namespace {

void check_strictly_increasing(const std::vector<double>& values,
                               const char* name) {
  if (values.empty()) {
    throw UsageError(std::string(name) + ": must contain at least one value");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || values[i] <= 0.0) {
      std::ostringstream os;
      os << name << "[" << i << "]: must be finite and strictly positive, got "
         << values[i];
      throw UsageError(os.str());
    }
    if (i > 0 && values[i] <= values[i - 1]) {
      std::ostringstream os;
      os << name << "[" << i << "]: values must be strictly increasing";
      throw UsageError(os.str());
    }
  }
}

}  // namespace

TypeGrid::TypeGrid(std::vector<double> valuations, std::vector<double> capacities)
    : valuations_(std::move(valuations)), capacities_(std::move(capacities)) {
  check_strictly_increasing(valuations_, "valuations");
  check_strictly_increasing(capacities_, "capacities");
}

ClientDistribution::ClientDistribution(Eigen::MatrixXd probs, double tol)
    : probs_(std::move(probs)) {
  if (probs_.size() == 0) {
    throw UsageError("probs: matrix is empty");
  }
  for (Eigen::Index l = 0; l < probs_.rows(); ++l) {
    for (Eigen::Index k = 0; k < probs_.cols(); ++k) {
      const double v = probs_(l, k);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        std::ostringstream os;
        os << "probs[" << l << "][" << k << "]: must lie in [0, 1], got " << v;
        throw UsageError(os.str());
      }
    }
  }
  const double total = probs_.sum();
  if (std::abs(total - 1.0) > tol) {
    std::ostringstream os;
    os.precision(17);
    os << "probs: entries sum to " << total << ", expected 1";
    throw UsageError(os.str());
  }
}

MarketInstance::MarketInstance(TypeGrid grid,
                               std::vector<ClientDistribution> clients,
                               double alpha, double penalty, double demand_floor)
    : grid_(std::move(grid)),
      clients_(std::move(clients)),
      alpha_(alpha),
      penalty_(penalty),
      demand_floor_(demand_floor) {
  if (clients_.empty()) {
    throw UsageError("clients: at least one client is required");
  }
  const auto rows = static_cast<Eigen::Index>(grid_.num_capacities());
  const auto cols = static_cast<Eigen::Index>(grid_.num_valuations());
  for (std::size_t i = 0; i < clients_.size(); ++i) {
    const auto& probs = clients_[i].probs();
    if (probs.rows() != rows || probs.cols() != cols) {
      std::ostringstream os;
      os << "clients[" << i << "].probs: expected " << rows << "x" << cols
         << " (capacities x valuations), got " << probs.rows() << "x"
         << probs.cols();
      throw UsageError(os.str());
    }
  }
  if (!std::isfinite(alpha_) || alpha_ <= 0.0) {
    throw UsageError("alpha: must be finite and positive");
  }
  if (!std::isfinite(penalty_) || penalty_ < 0.0) {
    throw UsageError("penalty_M: must be finite and non-negative");
  }
  if (!std::isfinite(demand_floor_) || demand_floor_ < 0.0) {
    throw UsageError("demand_floor_D: must be finite and non-negative");
  }
}

Contract::Contract(Eigen::MatrixXd allocation, Eigen::MatrixXd payment)
    : allocation_(std::move(allocation)), payment_(std::move(payment)) {
  if (allocation_.size() == 0) {
    throw UsageError("contract: empty allocation matrix");
  }
  if (allocation_.rows() != payment_.rows() ||
      allocation_.cols() != payment_.cols()) {
    throw UsageError("contract: allocation and payment shapes differ");
  }
  if (!allocation_.allFinite() || !payment_.allFinite()) {
    throw UsageError("contract: entries must be finite");
  }
}

Contract Contract::zero(const TypeGrid& grid) {
  const auto k = static_cast<Eigen::Index>(grid.num_valuations());
  const auto l = static_cast<Eigen::Index>(grid.num_capacities());
  return Contract(Eigen::MatrixXd::Zero(k, l), Eigen::MatrixXd::Zero(k, l));
}

AggregateWeights::AggregateWeights(const MarketInstance& instance)
    : weights_(Eigen::MatrixXd::Zero(
          static_cast<Eigen::Index>(instance.grid().num_capacities()),
          static_cast<Eigen::Index>(instance.grid().num_valuations()))) {
  for (const auto& client : instance.clients()) {
    weights_ += client.probs();
  }
}

void require_shape(const TypeGrid& grid, const Contract& contract) {
  if (!contract.matches(grid)) {
    std::ostringstream os;
    os << "contract shape " << contract.num_valuations() << "x"
       << contract.num_capacities() << " does not match grid "
       << grid.num_valuations() << "x" << grid.num_capacities();
    throw UsageError(os.str());
  }
}

double client_utility(const TypeGrid& grid, const Contract& contract,
                      std::size_t true_valuation, const Item& chosen) {
  require_shape(grid, contract);
  if (true_valuation >= grid.num_valuations()) {
    throw UsageError("client_utility: valuation index out of range");
  }
  if (chosen.is_opt_out()) return 0.0;
  if (!grid.contains(chosen)) {
    throw UsageError("client_utility: chosen item out of range");
  }
  return contract.p(chosen) - grid.valuation(true_valuation) * contract.x(chosen);
}

double provider_expected_utility(const MarketInstance& instance,
                                 const Contract& contract) {
  const auto& grid = instance.grid();
  require_shape(grid, contract);
  double margin = 0.0;
  double supply = 0.0;
  for (const auto& client : instance.clients()) {
    for (std::size_t l = 0; l < grid.num_capacities(); ++l) {
      for (std::size_t k = 0; k < grid.num_valuations(); ++k) {
        const double lambda = client.probability(k, l);
        margin += lambda * (instance.alpha() * contract.x(k, l) - contract.p(k, l));
        supply += lambda * contract.x(k, l);
      }
    }
  }
  return margin +
         instance.penalty() * std::min(0.0, supply - instance.demand_floor());
}

double provider_expected_utility(const MarketInstance& instance,
                                 const AggregateWeights& weights,
                                 const Contract& contract) {
  require_shape(instance.grid(), contract);
  const Eigen::MatrixXd w = weights.matrix().transpose();  // K x L
  const double margin = (w.array() * (instance.alpha() * contract.allocation().array() -
                                      contract.payment().array()))
                            .sum();
  const double supply = (w.array() * contract.allocation().array()).sum();
  return margin +
         instance.penalty() * std::min(0.0, supply - instance.demand_floor());
}

double realized_provider_utility(const MarketInstance& instance,
                                 const Contract& contract,
                                 std::span<const Item> chosen) {
  const auto& grid = instance.grid();
  require_shape(grid, contract);
  double supply = 0.0;
  double paid = 0.0;
  for (const auto& item : chosen) {
    if (item.is_opt_out()) continue;
    if (!grid.contains(item)) {
      throw UsageError("realized_provider_utility: item out of range");
    }
    supply += contract.x(item);
    paid += contract.p(item);
  }
  return instance.alpha() * supply - paid +
         instance.penalty() * std::min(0.0, supply - instance.demand_floor());
}

}  // namespace repurchase
