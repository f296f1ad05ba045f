#pragma once

// Domain types for the repurchasing market: the type lattice, the clients'
// type distributions, the market instance and the contract menu, plus the
// elementary utility formulas everything else is built on.
//
// Orientation conventions (used throughout the library):
//   * Contract matrices are K x L: row k is the valuation index, column l the
//     capacity index.
//   * Probability and weight matrices are L x K: row l is the capacity index,
//     column k the valuation index (the layout of the instance file).

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace repurchase {

inline constexpr double kModelTolerance = 1e-9;

// Caller passed arguments that can never be valid (bad indices, shapes).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input is well-formed but violates an operation's mathematical precondition.
class PreconditionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Enumeration would exceed the configured candidate budget.
class CandidateLimitError : public std::length_error {
 public:
  CandidateLimitError(const std::string& what, double count)
      : std::length_error(what), count_(count) {}
  double count() const noexcept { return count_; }

 private:
  double count_;
};

// A contract item, i.e. a type (v^k, c^l) used as a menu index. The opt-out
// choice is a distinguished item that behaves as x = 0, p = 0.
struct Item {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  std::size_t valuation = kNone;
  std::size_t capacity = kNone;

  static constexpr Item opt_out() noexcept { return Item{}; }
  constexpr bool is_opt_out() const noexcept {
    return valuation == kNone || capacity == kNone;
  }
  friend constexpr bool operator==(const Item&, const Item&) = default;
};

class TypeGrid {
 public:
  // Throws UsageError unless both lists are non-empty, finite, strictly
  // positive and strictly increasing.
  TypeGrid(std::vector<double> valuations, std::vector<double> capacities);

  std::size_t num_valuations() const noexcept { return valuations_.size(); }
  std::size_t num_capacities() const noexcept { return capacities_.size(); }
  std::size_t num_items() const noexcept {
    return valuations_.size() * capacities_.size();
  }

  double valuation(std::size_t k) const { return valuations_.at(k); }
  double capacity(std::size_t l) const { return capacities_.at(l); }
  double top_valuation() const noexcept { return valuations_.back(); }
  double top_capacity() const noexcept { return capacities_.back(); }

  std::span<const double> valuations() const noexcept { return valuations_; }
  std::span<const double> capacities() const noexcept { return capacities_; }

  bool contains(const Item& item) const noexcept {
    return item.valuation < num_valuations() && item.capacity < num_capacities();
  }

  friend bool operator==(const TypeGrid&, const TypeGrid&) = default;

 private:
  std::vector<double> valuations_;
  std::vector<double> capacities_;
};

class ClientDistribution {
 public:
  // probs is L x K. Entries must lie in [0, 1] and sum to 1 within tol.
  explicit ClientDistribution(Eigen::MatrixXd probs,
                              double tol = kModelTolerance);

  const Eigen::MatrixXd& probs() const noexcept { return probs_; }
  double probability(std::size_t k, std::size_t l) const {
    return probs_(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k));
  }

 private:
  Eigen::MatrixXd probs_;
};

class MarketInstance {
 public:
  MarketInstance(TypeGrid grid, std::vector<ClientDistribution> clients,
                 double alpha, double penalty, double demand_floor);

  const TypeGrid& grid() const noexcept { return grid_; }
  std::span<const ClientDistribution> clients() const noexcept {
    return clients_;
  }
  std::size_t num_clients() const noexcept { return clients_.size(); }
  double alpha() const noexcept { return alpha_; }
  double penalty() const noexcept { return penalty_; }
  double demand_floor() const noexcept { return demand_floor_; }

 private:
  TypeGrid grid_;
  std::vector<ClientDistribution> clients_;
  double alpha_;
  double penalty_;
  double demand_floor_;
};

// Menu of (allocation, payment) pairs indexed by type. Construction checks
// shape and finiteness only; non-negativity is a separate query so that the
// audit engine can diagnose perturbed menus with negative payments.
class Contract {
 public:
  Contract(Eigen::MatrixXd allocation, Eigen::MatrixXd payment);

  static Contract zero(const TypeGrid& grid);

  const Eigen::MatrixXd& allocation() const noexcept { return allocation_; }
  const Eigen::MatrixXd& payment() const noexcept { return payment_; }

  double x(std::size_t k, std::size_t l) const {
    return allocation_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
  }
  double p(std::size_t k, std::size_t l) const {
    return payment_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
  }
  double x(const Item& item) const {
    return item.is_opt_out() ? 0.0 : x(item.valuation, item.capacity);
  }
  double p(const Item& item) const {
    return item.is_opt_out() ? 0.0 : p(item.valuation, item.capacity);
  }

  std::size_t num_valuations() const noexcept {
    return static_cast<std::size_t>(allocation_.rows());
  }
  std::size_t num_capacities() const noexcept {
    return static_cast<std::size_t>(allocation_.cols());
  }

  bool matches(const TypeGrid& grid) const noexcept {
    return num_valuations() == grid.num_valuations() &&
           num_capacities() == grid.num_capacities();
  }
  bool is_non_negative() const noexcept {
    return allocation_.minCoeff() >= 0.0 && payment_.minCoeff() >= 0.0;
  }

 private:
  Eigen::MatrixXd allocation_;
  Eigen::MatrixXd payment_;
};

// w^{l,k} = sum_i lambda_i^{l,k}, the expected number of clients of each type.
class AggregateWeights {
 public:
  explicit AggregateWeights(const MarketInstance& instance);

  const Eigen::MatrixXd& matrix() const noexcept { return weights_; }
  double weight(std::size_t k, std::size_t l) const {
    return weights_(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k));
  }
  double total() const noexcept { return weights_.sum(); }

 private:
  Eigen::MatrixXd weights_;
};

void require_shape(const TypeGrid& grid, const Contract& contract);

// U_i(chosen; true type) = p(chosen) - v^k x(chosen).
double client_utility(const TypeGrid& grid, const Contract& contract,
                      std::size_t true_valuation, const Item& chosen);

// Expected provider utility under truthful selection, evaluated term by term.
double provider_expected_utility(const MarketInstance& instance,
                                 const Contract& contract);
// Same quantity computed from precomputed aggregate weights.
double provider_expected_utility(const MarketInstance& instance,
                                 const AggregateWeights& weights,
                                 const Contract& contract);

// alpha * sum x - sum p + M * min(0, sum x - D) for one realized profile.
double realized_provider_utility(const MarketInstance& instance,
                                 const Contract& contract,
                                 std::span<const Item> chosen);

}  // namespace repurchase
