#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "repurchase/feasibility.hpp"
#include "repurchase/payments.hpp"
#include "repurchase/solver.hpp"
#include "support.hpp"

using namespace repurchase;

namespace {

MarketInstance one_type(double alpha, double penalty, double floor) {
  TypeGrid grid({1.0}, {10.0});
  return MarketInstance(grid, {support::point_mass(grid, 0, 0)}, alpha, penalty, floor);
}

MarketInstance uniform_capacities(double alpha, double penalty, double floor, double v = 1.0) {
  TypeGrid grid({v}, {5.0, 10.0});
  Eigen::MatrixXd probs(2, 1);
  probs << 0.5, 0.5;
  return MarketInstance(grid, {ClientDistribution(probs)}, alpha, penalty, floor);
}

// Maximizes over levels on a coarse lattice, pricing every candidate with the
// explicit payment sum and the direct expected-utility formula.
double coarse_reference(const MarketInstance& inst, double step) {
  const auto& grid = inst.grid();
  std::vector<double> values;
  for (double v = 0.0; v <= grid.top_capacity() + 1e-12; v += step) values.push_back(v);
  for (double c : grid.capacities()) values.push_back(c);
  std::sort(values.begin(), values.end());
  const std::size_t K = grid.num_valuations();
  std::vector<std::size_t> idx(K, 0);
  double best = -std::numeric_limits<double>::infinity();
  while (true) {
    bool descending = true;
    for (std::size_t k = 0; k + 1 < K; ++k) descending &= idx[k] >= idx[k + 1];
    if (descending) {
      std::vector<double> y(K);
      for (std::size_t k = 0; k < K; ++k) y[k] = values[idx[k]];
      const Eigen::MatrixXd x = support::from_levels(grid, y);
      const Contract c(x, support::closed_form_payments(grid, x));
      best = std::max(best, support::expected_utility_reference(inst, c));
    }
    std::size_t pos = 0;
    while (pos < K && ++idx[pos] == values.size()) idx[pos++] = 0;
    if (pos == K) break;
  }
  return best;
}

void check_result_invariants(const MarketInstance& inst, const SolveResult& r, double tol) {
  const auto& grid = inst.grid();
  CHECK(r.expected_utility ==
        doctest::Approx(provider_expected_utility(inst, r.contract)).epsilon(1e-12));
  const double supply =
      (AggregateWeights(inst).matrix().transpose().array() * r.contract.allocation().array())
          .sum();
  CHECK(std::abs(r.aux_t - std::min(0.0, supply - inst.demand_floor())) <= 1e-8);
  const Eigen::MatrixXd& x = r.contract.allocation();
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    for (Eigen::Index l = 0; l < x.cols(); ++l) {
      CHECK(x(k, l) >= -tol);
      CHECK(x(k, l) <= grid.capacity(static_cast<std::size_t>(l)) + tol);
      if (k + 1 < x.rows()) CHECK(x(k + 1, l) <= x(k, l) + tol);
      if (l + 1 < x.cols()) CHECK(x(k, l) <= x(k, l + 1) + tol);
    }
  }
}

}  // namespace

TEST_CASE("single capacity examples") {
  const auto profit = solve_single_capacity(one_type(2.0, 0.0, 0.0));
  CHECK(profit.contract.x(0, 0) == doctest::Approx(10.0));
  CHECK(profit.contract.p(0, 0) == doctest::Approx(10.0));
  CHECK(profit.expected_utility == doctest::Approx(10.0));
  CHECK(profit.method == Method::kSingleExact);

  const auto loss = solve_single_capacity(one_type(0.5, 0.0, 0.0));
  CHECK(loss.contract.x(0, 0) == 0.0);
  CHECK(loss.expected_utility == 0.0);

  const auto forced = solve_single_capacity(one_type(0.5, 5.0, 10.0));
  CHECK(forced.contract.x(0, 0) == doctest::Approx(10.0));
  CHECK(forced.expected_utility == doctest::Approx(-5.0));
  CHECK(forced.aux_t == doctest::Approx(0.0));

  CHECK_THROWS_AS(solve_single_capacity(uniform_capacities(2, 0, 0)), UsageError);
}

TEST_CASE("single capacity matches a fine brute force") {
  // Objective on x in [0, 10] sampled at 1e-3 for the three examples.
  for (const auto& inst : {one_type(2.0, 0.0, 0.0), one_type(0.5, 0.0, 0.0),
                           one_type(0.5, 5.0, 10.0), one_type(0.5, 0.3, 4.0)}) {
    double best = -1e300;
    for (int i = 0; i <= 10000; ++i) {
      const double x = i * 1e-3;
      const Contract c(Eigen::MatrixXd::Constant(1, 1, x), Eigen::MatrixXd::Constant(1, 1, x));
      best = std::max(best, support::expected_utility_reference(inst, c));
    }
    CHECK(solve_single_capacity(inst).expected_utility == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("partial shortfall is left open when the penalty is cheap") {
  // Each unit costs 0.5 net, the penalty only 0.3: buy nothing and pay 0.3 * 4.
  const auto r = solve_single_capacity(one_type(0.5, 0.3, 4.0));
  CHECK(r.contract.x(0, 0) == 0.0);
  CHECK(r.aux_t == doctest::Approx(-4.0));
  CHECK(r.expected_utility == doctest::Approx(-1.2));
}

TEST_CASE("virtual coefficients reproduce the objective under optimal payments") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 300; ++trial) {
    const TypeGrid grid = support::random_grid(rng, 4, 4);
    const MarketInstance inst = support::random_instance(rng, grid);
    const Eigen::MatrixXd x = support::random_feasible_allocation(rng, grid);
    const Contract c(x, support::closed_form_payments(grid, x));
    const Eigen::MatrixXd a = virtual_coefficients(inst);
    const double supply =
        (AggregateWeights(inst).matrix().transpose().array() * x.array()).sum();
    const double value = (a.array() * x.array()).sum() +
                         inst.penalty() * std::min(0.0, supply - inst.demand_floor());
    CHECK(value == doctest::Approx(support::expected_utility_reference(inst, c)).epsilon(1e-10));
  }
}

TEST_CASE("level conversions") {
  const TypeGrid grid({1.0, 2.0}, {5.0, 10.0});
  const std::vector<double> y{7.0, 3.0};
  const Eigen::MatrixXd x = allocation_from_levels(grid, y);
  CHECK(x(0, 0) == 5.0);
  CHECK(x(0, 1) == 7.0);
  CHECK(x(1, 0) == 3.0);
  CHECK(x(1, 1) == 3.0);
  CHECK(levels_from_allocation(grid, x) == y);
  Eigen::MatrixXd partial = x;
  partial(0, 0) = 4.0;
  CHECK_FALSE(levels_from_allocation(grid, partial).has_value());
  const std::vector<double> wrong{1.0};
  CHECK_THROWS_AS(allocation_from_levels(grid, wrong), UsageError);
}

TEST_CASE("reduced solver on small examples") {
  const auto full = solve_multi_reduced(uniform_capacities(2.0, 0.0, 0.0));
  CHECK(full.contract.x(0, 0) == 5.0);
  CHECK(full.contract.x(0, 1) == 10.0);
  CHECK(full.contract.p(0, 0) == 5.0);
  CHECK(full.contract.p(0, 1) == 10.0);

  // Net cost 1 per unit, shortfall costs 5: supply is raised exactly to D = 6,
  // which needs y = 7 (0.5 * 5 + 0.5 * 7).
  const auto interior = solve_multi_reduced(uniform_capacities(1.0, 5.0, 6.0, 2.0));
  CHECK(interior.contract.x(0, 0) == doctest::Approx(5.0));
  CHECK(interior.contract.x(0, 1) == doctest::Approx(7.0));
  CHECK(interior.expected_utility == doctest::Approx(-6.0));
  CHECK(interior.aux_t == doctest::Approx(0.0));
  CHECK(interior.diagnostics.crossing_candidates > 0);
  CHECK(oracle_grid_search(uniform_capacities(1.0, 5.0, 6.0, 2.0), 0.5).expected_utility ==
        doctest::Approx(-6.0));
}

TEST_CASE("reduced solver equals the single capacity solver when L = 1") {
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 300; ++trial) {
    const TypeGrid grid(support::distinct_ints(rng, static_cast<std::size_t>(
                                                        support::uniform_int(rng, 1, 4)),
                                               8),
                        {static_cast<double>(support::uniform_int(rng, 1, 9))});
    const MarketInstance inst = support::random_instance(rng, grid);
    const auto a = solve_single_capacity(inst);
    const auto b = solve_multi_reduced(inst);
    CHECK(a.expected_utility == doctest::Approx(b.expected_utility).epsilon(1e-9));
    CHECK((a.contract.allocation() - b.contract.allocation()).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("one valuation with a positive margin recycles everything") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    const TypeGrid grid({static_cast<double>(support::uniform_int(rng, 1, 5))},
                        support::distinct_ints(rng, 3, 9));
    const MarketInstance base = support::random_instance(rng, grid);
    std::vector<ClientDistribution> clients(base.clients().begin(), base.clients().end());
    const MarketInstance inst(grid, clients, grid.top_valuation() + 1.0, 0.0, 0.0);
    const auto r = solve_multi_reduced(inst);
    for (std::size_t l = 0; l < 3; ++l) CHECK(r.contract.x(0, l) == grid.capacity(l));
    const auto o = oracle_grid_search(inst, 1.0);
    for (std::size_t l = 0; l < 3; ++l) CHECK(o.contract.x(0, l) == grid.capacity(l));
  }
}

TEST_CASE("a rent above every valuation need not recycle everything") {
  // With w = (0.9, 0.1), v = (1, 10) and alpha = 11, serving the rare
  // high-valuation type costs 9 * 0.9 in payments to the common type.
  TypeGrid grid({1.0, 10.0}, {10.0});
  Eigen::MatrixXd probs(1, 2);
  probs << 0.9, 0.1;
  const MarketInstance inst(grid, {ClientDistribution(probs)}, 11.0, 0.0, 0.0);
  const auto r = solve_multi_reduced(inst);
  CHECK(r.contract.x(0, 0) == 10.0);
  CHECK(r.contract.x(1, 0) == 0.0);
  CHECK(r.expected_utility == doctest::Approx(90.0));
  const Contract full(Eigen::MatrixXd::Constant(2, 1, 10.0), Eigen::MatrixXd::Constant(2, 1, 100.0));
  CHECK(provider_expected_utility(inst, full) == doctest::Approx(10.0));
}

TEST_CASE("exact solvers pass the audit and the solution invariants") {
  std::mt19937_64 rng(54);
  for (int trial = 0; trial < 300; ++trial) {
    const TypeGrid grid = support::random_grid(rng, 4, 4);
    const MarketInstance inst = support::random_instance(rng, grid);
    const SolveResult r =
        grid.num_capacities() == 1 ? solve_single_capacity(inst) : solve_multi_reduced(inst);
    const auto audit = check_theorem1(grid, r.contract, 1e-8);
    CHECK(audit.characterization_holds());
    CHECK(audit.definitionally_feasible());
    CHECK(levels_from_allocation(grid, r.contract.allocation(), 1e-12).has_value());
    check_result_invariants(inst, r, 1e-8);
  }
}

TEST_CASE("reduced solver dominates a coarse brute force") {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 150; ++trial) {
    const TypeGrid grid = support::random_grid(rng, 3, 3, 6, 3);
    const MarketInstance inst = support::random_instance(rng, grid);
    const double exact = solve_multi_reduced(inst).expected_utility;
    const double coarse = coarse_reference(inst, 0.25);
    CHECK(exact >= coarse - 1e-9);
    CHECK(exact - coarse <= lipschitz_bound(inst) * 0.25 + 1e-9);
  }
}

TEST_CASE("oracle sandwich") {
  std::mt19937_64 rng(56);
  for (int trial = 0; trial < 60; ++trial) {
    const TypeGrid grid = support::random_grid(rng, 3, 3, 6, 3);
    const MarketInstance inst = support::random_instance(rng, grid);
    const double exact = solve_multi_reduced(inst).expected_utility;
    for (double step : {0.5, 0.05}) {
      const auto o = oracle_grid_search(inst, step);
      CHECK(o.expected_utility <= exact + 1e-6);
      CHECK(o.expected_utility >= exact - lipschitz_bound(inst) * step - 1e-9);
      CHECK(check_theorem1(grid, o.contract, 1e-8).characterization_holds());
    }
  }
}

TEST_CASE("oracle with the two-point lattice") {
  const auto inst = one_type(2.0, 0.0, 0.0);
  const auto o = oracle_grid_search(inst, 10.0);
  CHECK(o.expected_utility == doctest::Approx(solve_single_capacity(inst).expected_utility));
  CHECK(o.method == Method::kOracle);
}

TEST_CASE("oracle refuses an oversized lattice") {
  TypeGrid grid({1.0, 2.0, 3.0}, {100.0});
  Eigen::MatrixXd probs = Eigen::MatrixXd::Constant(1, 3, 1.0 / 3.0);
  const MarketInstance inst(grid, {ClientDistribution(probs)}, 4.0, 0.0, 0.0);
  try {
    oracle_grid_search(inst, 1e-3);
    FAIL("expected CandidateLimitError");
  } catch (const CandidateLimitError& e) {
    CHECK(e.count() > kOracleCandidateLimit);
  }
  CHECK_THROWS_AS(oracle_grid_search(inst, 0.0), UsageError);
}

TEST_CASE("Lipschitz bound covers level shifts") {
  std::mt19937_64 rng(57);
  for (int trial = 0; trial < 300; ++trial) {
    const TypeGrid grid = support::random_grid(rng, 3, 3);
    const MarketInstance inst = support::random_instance(rng, grid);
    const Eigen::MatrixXd x = support::random_feasible_allocation(rng, grid);
    const auto y = levels_from_allocation(grid, x).value();
    std::vector<double> moved = y;
    const double h = support::uniform_real(rng, 0.0, 0.5);
    for (double& v : moved) v = std::max(0.0, v - h);
    const Eigen::MatrixXd x2 = allocation_from_levels(grid, moved);
    const double f1 = provider_expected_utility(inst, optimal_contract(grid, x));
    const double f2 = provider_expected_utility(inst, optimal_contract(grid, x2));
    CHECK(std::abs(f1 - f2) <= lipschitz_bound(inst) * h + 1e-9);
  }
}

TEST_CASE("greedy monotone rows are min(c, y) rows on integer lattices") {
  // For resource-feasible rows, greed plus capacity monotonicity holds exactly
  // when the row is min(c^l, y).
  std::mt19937_64 rng(58);
  for (int trial = 0; trial < 20000; ++trial) {
    const TypeGrid grid = support::random_grid(rng, 3, 3, 5, 4);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(grid.num_valuations()),
                      static_cast<Eigen::Index>(grid.num_capacities()));
    for (Eigen::Index k = 0; k < x.rows(); ++k) {
      for (Eigen::Index l = 0; l < x.cols(); ++l) {
        x(k, l) = support::uniform_int(rng, 0, static_cast<int>(grid.capacity(l)));
      }
    }
    const Contract c(x, Eigen::MatrixXd::Zero(x.rows(), x.cols()));
    CHECK(check_resource_greedy(grid, c, 0.0).pass() ==
          levels_from_allocation(grid, x).has_value());
  }
}

TEST_CASE("min(c, y) representation needs resource feasibility") {
  // Row (6, 6) with capacities (5, 10) is greedy but not min(c, y).
  const TypeGrid grid({1.0}, {5.0, 10.0});
  Eigen::MatrixXd x(1, 2);
  x << 6, 6;
  CHECK(check_resource_greedy(grid, Contract(x, Eigen::MatrixXd::Zero(1, 2)), 0.0).pass());
  CHECK_FALSE(levels_from_allocation(grid, x).has_value());
}

TEST_CASE("relaxed solver") {
  const auto inst = uniform_capacities(2.0, 0.0, 0.0);
  RelaxedOptions opts;
  opts.epsilon = 1e-4;
  const auto r = solve_multi_relaxed(inst, opts);
  const auto exact = solve_multi_reduced(inst);
  CHECK(r.method == Method::kMultiRelaxed);
  CHECK(r.epsilon == 1e-4);
  CHECK(std::abs(r.expected_utility - exact.expected_utility) <= 1e-2);
  CHECK(compute_regret(inst.grid(), r.contract) <= 1.0 * 1e-2);
  CHECK(r.diagnostics.restarts == opts.restarts);

  opts.epsilon = 0.0;
  CHECK_THROWS_WITH_AS(solve_multi_relaxed(inst, opts), doctest::Contains("solve_multi_reduced"),
                       UsageError);
  opts.epsilon = 1e-3;
  opts.restarts = 0;
  CHECK_THROWS_AS(solve_multi_relaxed(inst, opts), UsageError);
}

TEST_CASE("relaxed solver properties on random instances") {
  std::mt19937_64 rng(59);
  int monotone = 0;
  const int trials = 40;
  for (int trial = 0; trial < trials; ++trial) {
    const TypeGrid grid = support::random_grid(rng, 3, 3);
    const MarketInstance inst = support::random_instance(rng, grid);
    const double exact = solve_multi_reduced(inst).expected_utility;
    const double zero = provider_expected_utility(inst, Contract::zero(grid));
    double previous = -std::numeric_limits<double>::infinity();
    bool ordered = true;
    for (double eps : {1e-6, 1e-4, 1e-2}) {
      RelaxedOptions opts;
      opts.epsilon = eps;
      opts.seed = static_cast<std::uint64_t>(trial);
      opts.restarts = 4;
      const auto r = solve_multi_relaxed(inst, opts);
      CHECK(relaxed_feasible(grid, r.contract.allocation(), eps, 1e-12));
      CHECK(r.expected_utility >= exact - 1e-9);
      CHECK(r.expected_utility >= zero - 1e-9);
      CHECK(compute_regret(grid, r.contract) <= regret_bound(grid, eps) + 1e-12);
      check_result_invariants(inst, r, 1e-8);
      ordered = ordered && r.expected_utility >= previous - 1e-9;
      previous = r.expected_utility;
    }
    monotone += ordered;
  }
  // The relaxed optimum is non-decreasing in epsilon; local search finds that
  // ordering on nearly every instance.
  CHECK(monotone >= trials * 9 / 10);
}

TEST_CASE("relaxed solver is deterministic") {
  std::mt19937_64 rng(60);
  const TypeGrid grid = support::random_grid(rng, 3, 3);
  const MarketInstance inst = support::random_instance(rng, grid);
  RelaxedOptions opts;
  opts.seed = 99;
  const auto a = solve_multi_relaxed(inst, opts);
  const auto b = solve_multi_relaxed(inst, opts);
  CHECK(a.contract.allocation() == b.contract.allocation());
  CHECK(a.contract.payment() == b.contract.payment());
  CHECK(a.expected_utility == b.expected_utility);
  CHECK(a.diagnostics.iterations == b.diagnostics.iterations);
}

TEST_CASE("zero-weight types are still priced and audited") {
  TypeGrid grid({1.0, 2.0}, {3.0, 6.0});
  Eigen::MatrixXd probs(2, 2);
  probs << 1.0, 0.0, 0.0, 0.0;  // only (v^1, c^1) is ever drawn
  const MarketInstance inst(grid, {ClientDistribution(probs)}, 3.0, 0.0, 0.0);
  CHECK(virtual_coefficients(inst)(1, 1) == 0.0);
  const auto r = solve_multi_reduced(inst);
  CHECK(check_theorem1(grid, r.contract, 1e-8).definitionally_feasible());
  RelaxedOptions opts;
  opts.epsilon = 1e-4;
  const auto relaxed = solve_multi_relaxed(inst, opts);
  CHECK(compute_regret(grid, relaxed.contract) <= regret_bound(grid, 1e-4));
}

TEST_CASE("schedule warm starts") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 10; ++trial) {
    const TypeGrid grid = support::random_grid(rng, 3, 3);
    const MarketInstance inst = support::random_instance(rng, grid);
    RelaxedOptions opts;
    opts.restarts = 2;
    const auto r = solve_multi_relaxed_schedule(inst, kDefaultScheduleEpsilons, opts);
    CHECK(r.epsilon == 1e-6);
    CHECK(relaxed_feasible(grid, r.contract.allocation(), 1e-6, 1e-12));
    CHECK(r.expected_utility >= solve_multi_reduced(inst).expected_utility - 1e-9);
  }
}

TEST_CASE("relaxed feasibility") {
  const TypeGrid grid({1.0}, {5.0, 10.0});
  Eigen::MatrixXd x(1, 2);
  x << 4.9, 6.0;  // (6 - 4.9)(5 - 4.9) = 0.11
  CHECK(relaxed_feasible(grid, x, 0.2));
  CHECK_FALSE(relaxed_feasible(grid, x, 0.1));
  x << 5.0, 4.0;
  CHECK_FALSE(relaxed_feasible(grid, x, 1.0));
  CHECK(to_string(Method::kMultiRelaxed) == "multi_relaxed");
}
