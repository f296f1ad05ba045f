#include "repurchase/solver.hpp"

#include "repurchase/lp.hpp"
#include "repurchase/payments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace repurchase {
namespace {

constexpr double kTieRelative = 1e-10;
constexpr double kInf = std::numeric_limits<double>::infinity();

double tie_band(double objective) { return kTieRelative * (1.0 + std::abs(objective)); }

// K x L aggregate weights (the transpose of AggregateWeights' layout).
Eigen::MatrixXd weights_by_item(const MarketInstance& instance) {
  return AggregateWeights(instance).matrix().transpose();
}

double total_allocation(const TypeGrid& grid, std::span<const double> levels) {
  double total = 0.0;
  for (double y : levels) {
    for (double c : grid.capacities()) total += std::min(c, y);
  }
  return total;
}

struct Ranked {
  double objective = -kInf;
  double total = 0.0;
  std::vector<double> levels;
};

// True if a should win over b once both are inside the optimum's tie band.
bool preferred(const Ranked& a, const Ranked& b) {
  const double band = 1e-12 * (1.0 + std::max(std::abs(a.total), std::abs(b.total)));
  if (a.total > b.total + band) return true;
  if (b.total > a.total + band) return false;
  return std::lexicographical_compare(b.levels.begin(), b.levels.end(),
                                      a.levels.begin(), a.levels.end());
}

// Keeps every candidate that may still end up inside the final tie band.
class BestTracker {
 public:
  void offer(Ranked candidate) {
    if (candidate.objective < best_ - tie_band(best_)) return;
    best_ = std::max(best_, candidate.objective);
    pool_.push_back(std::move(candidate));
    if (pool_.size() > 4096) prune();
  }

  bool empty() const noexcept { return pool_.empty(); }
  bool admits(double objective) const noexcept { return objective >= best_ - tie_band(best_); }

  Ranked select() {
    prune();
    std::size_t winner = 0;
    for (std::size_t i = 1; i < pool_.size(); ++i) {
      if (preferred(pool_[i], pool_[winner])) winner = i;
    }
    return pool_.at(winner);
  }

 private:
  void prune() {
    const double floor = best_ - tie_band(best_);
    std::erase_if(pool_, [floor](const Ranked& r) { return r.objective < floor; });
  }

  double best_ = -kInf;
  std::vector<Ranked> pool_;
};

SolveResult finalize(const MarketInstance& instance, Eigen::MatrixXd x,
                     Eigen::MatrixXd p, Method method, double epsilon,
                     SolveDiagnostics diagnostics) {
  const Eigen::MatrixXd w = weights_by_item(instance);
  const double supply = (w.array() * x.array()).sum();
  Contract contract(std::move(x), std::move(p));
  const double utility = provider_expected_utility(instance, contract);
  return SolveResult{std::move(contract), utility, method, epsilon,
                     std::min(0.0, supply - instance.demand_floor()), diagnostics};
}

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return r;
}

// Depth-first enumeration of level vectors for solve_multi_reduced. Each
// level is a breakpoint b_i in {0, c^1, ..., c^L}, except for at most one
// block of consecutive rows sharing a value strictly between two adjacent
// breakpoints, chosen so that expected supply equals D.
class ReducedEnumerator {
 public:
  explicit ReducedEnumerator(const MarketInstance& instance)
      : instance_(instance),
        grid_(instance.grid()),
        K_(grid_.num_valuations()),
        L_(grid_.num_capacities()),
        crossing_(instance.penalty() > 0.0 && instance.demand_floor() > 0.0) {
    const Eigen::MatrixXd a = virtual_coefficients(instance);
    const Eigen::MatrixXd w = weights_by_item(instance);
    breakpoints_.push_back(0.0);
    for (double c : grid_.capacities()) breakpoints_.push_back(c);
    // prefix_*[k][i] = sum_{l<i} coef c^l, suffix_*[k][i] = sum_{l>=i} coef, so
    // a row at level s in [b_i, b_{i+1}] contributes prefix + s * suffix.
    auto tables = [&](const Eigen::MatrixXd& coef, std::vector<std::vector<double>>& pre,
                      std::vector<std::vector<double>>& suf) {
      pre.assign(K_, std::vector<double>(L_ + 1, 0.0));
      suf.assign(K_, std::vector<double>(L_ + 1, 0.0));
      for (std::size_t k = 0; k < K_; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        for (std::size_t i = 1; i <= L_; ++i) {
          pre[k][i] = pre[k][i - 1] +
                      coef(kk, static_cast<Eigen::Index>(i - 1)) * grid_.capacity(i - 1);
        }
        for (std::size_t i = L_; i-- > 0;) {
          suf[k][i] = suf[k][i + 1] + coef(kk, static_cast<Eigen::Index>(i));
        }
      }
    };
    tables(a, prefix_a_, suffix_a_);
    tables(w, prefix_w_, suffix_w_);
    choice_.assign(K_, 0);
  }

  void run() {
    const double base_count = binomial(K_ + L_, K_);
    if (base_count > 5e7) {
      std::ostringstream os;
      os << "solve_multi_reduced: " << base_count
         << " breakpoint level vectors exceed the enumeration budget";
      throw CandidateLimitError(os.str(), base_count);
    }
    visit(0, L_, kNoBlock, false, Sums{});
  }

  Ranked best() { return tracker_.select(); }
  std::size_t candidates() const noexcept { return candidates_; }
  std::size_t crossings() const noexcept { return crossings_; }

 private:
  static constexpr std::size_t kNoBlock = std::numeric_limits<std::size_t>::max();
  static constexpr std::size_t kInBlock = std::numeric_limits<std::size_t>::max();

  struct Sums {
    double utility = 0.0;  // fixed rows
    double supply = 0.0;
    double block_utility = 0.0;  // block rows: constant + slope * s
    double block_utility_slope = 0.0;
    double block_supply = 0.0;
    double block_supply_slope = 0.0;
  };

  Sums with_fixed(Sums s, std::size_t k, std::size_t i) const {
    const double b = breakpoints_[i];
    s.utility += prefix_a_[k][i] + b * suffix_a_[k][i];
    s.supply += prefix_w_[k][i] + b * suffix_w_[k][i];
    return s;
  }

  Sums with_block(Sums s, std::size_t k, std::size_t m) const {
    s.block_utility += prefix_a_[k][m];
    s.block_utility_slope += suffix_a_[k][m];
    s.block_supply += prefix_w_[k][m];
    s.block_supply_slope += suffix_w_[k][m];
    return s;
  }

  void visit(std::size_t k, std::size_t upper, std::size_t block, bool open,
             const Sums& sums) {
    if (k == K_) {
      leaf(block, sums);
      return;
    }
    if (open) {
      choice_[k] = kInBlock;
      visit(k + 1, upper, block, true, with_block(sums, k, block));
      for (std::size_t i = 0; i <= block; ++i) {
        choice_[k] = i;
        visit(k + 1, i, block, false, with_fixed(sums, k, i));
      }
      return;
    }
    for (std::size_t i = 0; i <= upper; ++i) {
      choice_[k] = i;
      visit(k + 1, i, block, false, with_fixed(sums, k, i));
    }
    if (crossing_ && block == kNoBlock) {
      for (std::size_t m = 0; m < upper; ++m) {
        choice_[k] = kInBlock;
        visit(k + 1, upper, m, true, with_block(sums, k, m));
      }
    }
  }

  void leaf(std::size_t block, const Sums& sums) {
    ++candidates_;
    Ranked r;
    r.levels.resize(K_);
    if (block == kNoBlock) {
      r.objective = sums.utility +
                    instance_.penalty() *
                        std::min(0.0, sums.supply - instance_.demand_floor());
      for (std::size_t k = 0; k < K_; ++k) r.levels[k] = breakpoints_[choice_[k]];
    } else {
      if (sums.block_supply_slope <= 0.0) return;
      const double s = (instance_.demand_floor() - sums.supply - sums.block_supply) /
                       sums.block_supply_slope;
      if (!(s > breakpoints_[block] && s < breakpoints_[block + 1])) return;
      ++crossings_;
      r.objective = sums.utility + sums.block_utility + sums.block_utility_slope * s;
      for (std::size_t k = 0; k < K_; ++k) {
        r.levels[k] = choice_[k] == kInBlock ? s : breakpoints_[choice_[k]];
      }
    }
    r.total = total_allocation(grid_, r.levels);
    tracker_.offer(std::move(r));
  }

  const MarketInstance& instance_;
  const TypeGrid& grid_;
  std::size_t K_;
  std::size_t L_;
  bool crossing_;
  std::vector<double> breakpoints_;
  std::vector<std::vector<double>> prefix_a_, suffix_a_, prefix_w_, suffix_w_;
  std::vector<std::size_t> choice_;
  BestTracker tracker_;
  std::size_t candidates_ = 0;
  std::size_t crossings_ = 0;
};

// ---------------------------------------------------------------------------
// Relaxed program: local search over the allocation matrix.

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

class RelaxedSearch {
 public:
  RelaxedSearch(const MarketInstance& instance, double epsilon)
      : instance_(instance),
        grid_(instance.grid()),
        coef_(virtual_coefficients(instance)),
        weights_(weights_by_item(instance)),
        epsilon_(epsilon) {}

  double objective(const Eigen::MatrixXd& x) const {
    const double linear = (coef_.array() * x.array()).sum();
    const double supply = (weights_.array() * x.array()).sum();
    return linear +
           instance_.penalty() * std::min(0.0, supply - instance_.demand_floor());
  }

  bool feasible(const Eigen::MatrixXd& x) const {
    return relaxed_feasible(grid_, x, epsilon_);
  }

  struct Outcome {
    Eigen::MatrixXd x;
    double objective;
    std::size_t evaluations = 0;
    std::size_t accepted = 0;
  };

  // Pattern search with step halving; every iterate stays feasible.
  Outcome improve(Eigen::MatrixXd x, std::size_t max_evaluations) const {
    Outcome out{x, objective(x)};
    const auto K = x.rows();
    const auto L = x.cols();
    double step = grid_.top_capacity() / 2.0;
    Eigen::MatrixXd candidate;
    auto attempt = [&](auto&& mutate) {
      candidate = out.x;
      if (!mutate(candidate)) return false;
      ++out.evaluations;
      if (!feasible(candidate)) return false;
      const double f = objective(candidate);
      if (f <= out.objective + 1e-15 * (1.0 + std::abs(out.objective))) return false;
      out.x = candidate;
      out.objective = f;
      ++out.accepted;
      return true;
    };
    while (step >= 1e-10 && out.evaluations < max_evaluations) {
      bool improved = false;
      for (Eigen::Index k = 0; k < K && out.evaluations < max_evaluations; ++k) {
        for (Eigen::Index l = 0; l < L; ++l) {
          improved |= attempt([&](Eigen::MatrixXd& m) { return raise(m, k, l, step); });
          improved |= attempt([&](Eigen::MatrixXd& m) { return lower(m, k, l, step); });
        }
        improved |= attempt([&](Eigen::MatrixXd& m) { return shift_row(m, k, step); });
        improved |= attempt([&](Eigen::MatrixXd& m) { return shift_row(m, k, -step); });
      }
      if (!improved) step *= 0.5;
    }
    return out;
  }

  // Pushes a point that satisfies the ordering constraints back inside the
  // epsilon-relaxed complementarity constraints by lowering offending entries.
  std::optional<Eigen::MatrixXd> repair(Eigen::MatrixXd x) const {
    for (int pass = 0; pass < 100; ++pass) {
      if (feasible(x)) return x;
      for (Eigen::Index k = 0; k < x.rows(); ++k) {
        for (Eigen::Index l = 0; l < x.cols(); ++l) {
          const double gap = grid_.capacity(static_cast<std::size_t>(l)) - x(k, l);
          if (gap <= 0.0) continue;
          const double ceiling = x(k, l) + epsilon_ / gap;
          for (Eigen::Index l2 = l + 1; l2 < x.cols(); ++l2) {
            if (x(k, l2) > ceiling) lower_to(x, k, l2, ceiling);
          }
        }
      }
    }
    if (feasible(x)) return x;
    return std::nullopt;
  }

 private:
  // Raising x_k^l to v lifts every entry with a lower-or-equal valuation index
  // and higher-or-equal capacity index to at least v.
  bool raise(Eigen::MatrixXd& x, Eigen::Index k, Eigen::Index l, double step) const {
    const double cap = grid_.capacity(static_cast<std::size_t>(l));
    const double v = std::min(cap, x(k, l) + step);
    if (v <= x(k, l)) return false;
    for (Eigen::Index j = 0; j <= k; ++j) {
      for (Eigen::Index m = l; m < x.cols(); ++m) x(j, m) = std::max(x(j, m), v);
    }
    return true;
  }

  static void lower_to(Eigen::MatrixXd& x, Eigen::Index k, Eigen::Index l, double v) {
    for (Eigen::Index j = k; j < x.rows(); ++j) {
      for (Eigen::Index m = 0; m <= l; ++m) x(j, m) = std::min(x(j, m), v);
    }
  }

  bool lower(Eigen::MatrixXd& x, Eigen::Index k, Eigen::Index l, double step) const {
    const double v = std::max(0.0, x(k, l) - step);
    if (v >= x(k, l)) return false;
    lower_to(x, k, l, v);
    return true;
  }

  // Moves row k along the greedy family min(c^l, y).
  bool shift_row(Eigen::MatrixXd& x, Eigen::Index k, double delta) const {
    const Eigen::Index L = x.cols();
    const double y = std::clamp(x(k, L - 1) + delta, 0.0, grid_.top_capacity());
    Eigen::RowVectorXd row(L);
    for (Eigen::Index m = 0; m < L; ++m) {
      row(m) = std::min(grid_.capacity(static_cast<std::size_t>(m)), y);
    }
    if (row.isApprox(x.row(k), 0.0) && (row - x.row(k)).cwiseAbs().maxCoeff() == 0.0) {
      return false;
    }
    x.row(k) = row;
    for (Eigen::Index j = 0; j < k; ++j) x.row(j) = x.row(j).cwiseMax(row);
    for (Eigen::Index j = k + 1; j < x.rows(); ++j) x.row(j) = x.row(j).cwiseMin(row);
    return true;
  }

  const MarketInstance& instance_;
  const TypeGrid& grid_;
  Eigen::MatrixXd coef_;
  Eigen::MatrixXd weights_;
  double epsilon_;
};

Ranked rank_allocation(const TypeGrid& grid, const Eigen::MatrixXd& x, double objective) {
  Ranked r;
  r.objective = objective;
  r.total = x.sum();
  r.levels.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    r.levels[static_cast<std::size_t>(k)] = x(k, x.cols() - 1);
  }
  (void)grid;
  return r;
}

SolveResult relaxed_impl(const MarketInstance& instance, const RelaxedOptions& options,
                         const std::optional<Eigen::MatrixXd>& warm_start) {
  if (!(options.epsilon > 0.0)) {
    throw UsageError(
        "solve_multi_relaxed: epsilon must be > 0; use solve_multi_reduced for the "
        "exact program");
  }
  if (options.restarts < 1) {
    throw UsageError("solve_multi_relaxed: restarts must be >= 1");
  }
  const auto& grid = instance.grid();
  const RelaxedSearch search(instance, options.epsilon);
  const SolveResult exact = solve_multi_reduced(instance);

  std::vector<Eigen::MatrixXd> starts;
  starts.push_back(exact.contract.allocation());
  if (warm_start) {
    if (auto repaired = search.repair(*warm_start)) starts.push_back(*repaired);
  }
  for (std::size_t r = 1; r < options.restarts; ++r) {
    std::mt19937_64 rng(splitmix64(options.seed ^ splitmix64(r)));
    std::vector<double> levels(grid.num_valuations());
    for (double& y : levels) y = unit_uniform(rng) * grid.top_capacity();
    std::sort(levels.begin(), levels.end(), std::greater<>());
    starts.push_back(allocation_from_levels(grid, levels));
  }

  SolveDiagnostics diag;
  diag.restarts = starts.size();
  Eigen::MatrixXd best_x;
  Ranked best;
  bool have = false;
  for (const auto& start : starts) {
    const auto out = search.improve(start, options.max_iterations);
    diag.iterations += out.evaluations;
    diag.accepted_moves += out.accepted;
    Ranked r = rank_allocation(grid, out.x, out.objective);
    const bool wins = !have || r.objective > best.objective + tie_band(best.objective) ||
                      (r.objective >= best.objective - tie_band(best.objective) &&
                       preferred(r, best));
    if (wins) {
      best = std::move(r);
      best_x = out.x;
      have = true;
    }
  }
  Eigen::MatrixXd p = column_payments(grid, best_x);
  return finalize(instance, std::move(best_x), std::move(p), Method::kMultiRelaxed,
                  options.epsilon, diag);
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::kSingleExact: return "single_exact";
    case Method::kMultiReducedExact: return "multi_reduced_exact";
    case Method::kMultiRelaxed: return "multi_relaxed";
    case Method::kOracle: return "oracle";
  }
  return "unknown";
}

Eigen::MatrixXd virtual_coefficients(const MarketInstance& instance) {
  const auto& grid = instance.grid();
  const Eigen::MatrixXd w = weights_by_item(instance);
  Eigen::MatrixXd a(w.rows(), w.cols());
  for (Eigen::Index l = 0; l < w.cols(); ++l) {
    double below = 0.0;  // sum_{j<k} w_j^l
    for (Eigen::Index k = 0; k < w.rows(); ++k) {
      const double v = grid.valuation(static_cast<std::size_t>(k));
      const double step = k == 0 ? 0.0 : v - grid.valuation(static_cast<std::size_t>(k - 1));
      a(k, l) = w(k, l) * (instance.alpha() - v) - step * below;
      below += w(k, l);
    }
  }
  return a;
}

double lipschitz_bound(const MarketInstance& instance) {
  return virtual_coefficients(instance).cwiseAbs().sum() +
         instance.penalty() * AggregateWeights(instance).total();
}

Eigen::MatrixXd allocation_from_levels(const TypeGrid& grid,
                                       std::span<const double> levels) {
  if (levels.size() != grid.num_valuations()) {
    throw UsageError("allocation_from_levels: need one level per valuation");
  }
  const auto K = static_cast<Eigen::Index>(grid.num_valuations());
  const auto L = static_cast<Eigen::Index>(grid.num_capacities());
  Eigen::MatrixXd x(K, L);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index l = 0; l < L; ++l) {
      x(k, l) = std::min(grid.capacity(static_cast<std::size_t>(l)),
                         levels[static_cast<std::size_t>(k)]);
    }
  }
  return x;
}

std::optional<std::vector<double>> levels_from_allocation(const TypeGrid& grid,
                                                          const Eigen::MatrixXd& x,
                                                          double tol) {
  if (static_cast<std::size_t>(x.rows()) != grid.num_valuations() ||
      static_cast<std::size_t>(x.cols()) != grid.num_capacities()) {
    throw UsageError("levels_from_allocation: shape mismatch");
  }
  std::vector<double> levels(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    const double y = x(k, x.cols() - 1);
    for (Eigen::Index l = 0; l < x.cols(); ++l) {
      if (std::abs(x(k, l) - std::min(grid.capacity(static_cast<std::size_t>(l)), y)) > tol) {
        return std::nullopt;
      }
    }
    levels[static_cast<std::size_t>(k)] = y;
  }
  return levels;
}

SolveResult solve_single_capacity(const MarketInstance& instance) {
  const auto& grid = instance.grid();
  if (grid.num_capacities() != 1) {
    throw UsageError("solve_single_capacity: instance must have exactly one capacity");
  }
  const std::size_t K = grid.num_valuations();
  const std::size_t u = K;  // u = -t >= 0
  const Eigen::MatrixXd a = virtual_coefficients(instance);
  const Eigen::MatrixXd w = weights_by_item(instance);

  lp::LinearProgram program(K + 1);
  {
    std::vector<double> row(K + 1, 0.0);
    row[0] = 1.0;
    program.add_constraint(row, lp::Sense::kLessEqual, grid.capacity(0));
  }
  for (std::size_t k = 0; k + 1 < K; ++k) {
    std::vector<double> row(K + 1, 0.0);
    row[k + 1] = 1.0;
    row[k] = -1.0;
    program.add_constraint(row, lp::Sense::kLessEqual, 0.0);
  }
  {
    // t <= supply - D  <=>  supply + u >= D
    std::vector<double> row(K + 1, 0.0);
    for (std::size_t k = 0; k < K; ++k) row[k] = w(static_cast<Eigen::Index>(k), 0);
    row[u] = 1.0;
    program.add_constraint(row, lp::Sense::kGreaterEqual, instance.demand_floor());
  }

  std::vector<std::vector<double>> objectives;
  std::vector<double> main(K + 1, 0.0);
  for (std::size_t k = 0; k < K; ++k) main[k] = a(static_cast<Eigen::Index>(k), 0);
  main[u] = -instance.penalty();
  objectives.push_back(main);
  std::vector<double> total(K + 1, 1.0);
  total[u] = 0.0;
  objectives.push_back(total);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> unit(K + 1, 0.0);
    unit[k] = 1.0;
    objectives.push_back(unit);
  }
  std::vector<double> tight(K + 1, 0.0);
  tight[u] = -1.0;
  objectives.push_back(tight);

  const lp::Solution sol = lp::maximize_lexicographic(program, objectives);
  if (sol.status != lp::Status::kOptimal) {
    throw std::runtime_error("solve_single_capacity: linear program " +
                             lp::to_string(sol.status));
  }
  std::vector<double> x(K);
  for (std::size_t k = 0; k < K; ++k) {
    x[k] = std::clamp(sol.x[k], 0.0, k == 0 ? grid.capacity(0) : x[k - 1]);
  }
  const std::vector<double> p = optimal_payment_single(grid, x);
  Eigen::MatrixXd xm(static_cast<Eigen::Index>(K), 1);
  Eigen::MatrixXd pm(static_cast<Eigen::Index>(K), 1);
  for (std::size_t k = 0; k < K; ++k) {
    xm(static_cast<Eigen::Index>(k), 0) = x[k];
    pm(static_cast<Eigen::Index>(k), 0) = p[k];
  }
  SolveDiagnostics diag;
  diag.iterations = sol.pivots;
  SolveResult result =
      finalize(instance, std::move(xm), std::move(pm), Method::kSingleExact, 0.0, diag);
  result.aux_t = -sol.x[u];
  return result;
}

SolveResult solve_multi_reduced(const MarketInstance& instance) {
  ReducedEnumerator enumerator(instance);
  enumerator.run();
  const Ranked best = enumerator.best();
  const auto& grid = instance.grid();
  Eigen::MatrixXd x = allocation_from_levels(grid, best.levels);
  Eigen::MatrixXd p = optimal_payment_multi(grid, x);
  SolveDiagnostics diag;
  diag.candidates = enumerator.candidates();
  diag.crossing_candidates = enumerator.crossings();
  return finalize(instance, std::move(x), std::move(p), Method::kMultiReducedExact, 0.0,
                  diag);
}

SolveResult solve_multi_relaxed(const MarketInstance& instance,
                                const RelaxedOptions& options) {
  return relaxed_impl(instance, options, std::nullopt);
}

SolveResult solve_multi_relaxed_schedule(const MarketInstance& instance,
                                         std::span<const double> epsilons,
                                         const RelaxedOptions& options) {
  if (epsilons.empty()) throw UsageError("relaxed schedule: no epsilon values");
  std::optional<Eigen::MatrixXd> warm;
  SolveDiagnostics total;
  std::optional<SolveResult> last;
  for (double eps : epsilons) {
    RelaxedOptions stage = options;
    stage.epsilon = eps;
    SolveResult r = relaxed_impl(instance, stage, warm);
    total.iterations += r.diagnostics.iterations;
    total.accepted_moves += r.diagnostics.accepted_moves;
    total.restarts += r.diagnostics.restarts;
    warm = r.contract.allocation();
    last = std::move(r);
  }
  last->diagnostics = total;
  return std::move(*last);
}

bool relaxed_feasible(const TypeGrid& grid, const Eigen::MatrixXd& x, double epsilon,
                      double tol) {
  const Eigen::Index K = x.rows();
  const Eigen::Index L = x.cols();
  if (static_cast<std::size_t>(K) != grid.num_valuations() ||
      static_cast<std::size_t>(L) != grid.num_capacities()) {
    return false;
  }
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index l = 0; l < L; ++l) {
      const double c = grid.capacity(static_cast<std::size_t>(l));
      if (x(k, l) < -tol || x(k, l) > c + tol) return false;
      if (k + 1 < K && x(k + 1, l) > x(k, l) + tol) return false;
      if (l + 1 < L && x(k, l) > x(k, l + 1) + tol) return false;
      for (Eigen::Index l2 = l + 1; l2 < L; ++l2) {
        if ((x(k, l2) - x(k, l)) * (c - x(k, l)) > epsilon + tol) return false;
      }
    }
  }
  return true;
}

SolveResult oracle_grid_search(const MarketInstance& instance, double grid_step,
                               double max_candidates) {
  if (!(grid_step > 0.0) || !std::isfinite(grid_step)) {
    throw UsageError("oracle_grid_search: grid_step must be positive");
  }
  const auto& grid = instance.grid();
  const std::size_t K = grid.num_valuations();
  const std::size_t L = grid.num_capacities();
  const double top = grid.top_capacity();

  std::vector<double> values;
  const auto steps = static_cast<std::size_t>(std::floor(top / grid_step + 1e-9));
  for (std::size_t i = 0; i <= steps; ++i) {
    values.push_back(std::min(top, static_cast<double>(i) * grid_step));
  }
  for (double c : grid.capacities()) values.push_back(c);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end(),
                           [](double a, double b) { return std::abs(a - b) <= 1e-12; }),
               values.end());

  const std::size_t N = values.size();
  const double tuples = K <= 1 ? 1.0 : binomial(N + K - 2, K - 1);
  if (tuples > max_candidates) {
    std::ostringstream os;
    os << "oracle_grid_search: " << tuples << " lattice candidates exceed the limit of "
       << max_candidates;
    throw CandidateLimitError(os.str(), tuples);
  }

  // Per-column cumulative weights W_{<=j}^l.
  const Eigen::MatrixXd w = weights_by_item(instance);
  Eigen::MatrixXd cumulative = w;
  for (Eigen::Index k = 1; k < w.rows(); ++k) cumulative.row(k) += cumulative.row(k - 1);
  const double alpha = instance.alpha();
  const double M = instance.penalty();
  const double D = instance.demand_floor();
  const bool crossing = M > 0.0 && D > 0.0;

  // Row j's share of revenue minus payments, given row j+1's allocation: in
  // each column, the top row pays W_{<=K} v^K x_K and every other row j adds
  // W_{<=j} v^j (x_j - x_{j+1}).
  auto row_value = [&](std::size_t j, double level, double below_level) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double v = grid.valuation(j);
    double value = 0.0;
    double supply = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      const auto ll = static_cast<Eigen::Index>(l);
      const double c = grid.capacity(l);
      const double xj = std::min(c, level);
      value += alpha * w(jj, ll) * xj;
      supply += w(jj, ll) * xj;
      if (j + 1 == K) {
        value -= cumulative(jj, ll) * v * xj;
      } else {
        value -= cumulative(jj, ll) * v * (xj - std::min(c, below_level));
      }
    }
    return std::pair{value, supply};
  };

  BestTracker tracker;
  std::vector<double> levels(K, 0.0);
  std::size_t evaluated = 0;

  std::vector<double> options;
  auto finish_top = [&](double rest_value, double rest_supply) {
    const double floor_level = K >= 2 ? levels[1] : 0.0;
    options.assign(1, floor_level);
    for (double c : grid.capacities()) {
      if (c > floor_level) options.push_back(c);
    }
    if (crossing) {
      const double target = D - rest_supply;
      for (std::size_t i = 0; i + 1 < options.size(); ++i) {
        const double lo = options[i];
        const double hi = options[i + 1];
        const double s_lo = row_value(0, lo, floor_level).second;
        const double s_hi = row_value(0, hi, floor_level).second;
        if (s_lo < target && target < s_hi) {
          options.push_back(lo + (target - s_lo) * (hi - lo) / (s_hi - s_lo));
          break;
        }
      }
    }
    for (double y : options) {
      const auto [value, supply] = row_value(0, y, floor_level);
      const double total_supply = rest_supply + supply;
      const double objective = rest_value + value + M * std::min(0.0, total_supply - D);
      ++evaluated;
      if (!tracker.admits(objective)) continue;
      Ranked r;
      r.objective = objective;
      levels[0] = y;
      r.levels = levels;
      r.total = total_allocation(grid, levels);
      tracker.offer(std::move(r));
    }
  };

  // Rows K-1 .. 1 are filled bottom-up with non-decreasing lattice indices.
  auto descend = [&](auto&& self, std::size_t row, std::size_t min_index,
                     double value, double supply) -> void {
    if (row == 0) {
      finish_top(value, supply);
      return;
    }
    for (std::size_t i = min_index; i < N; ++i) {
      const double below = row + 1 < K ? levels[row + 1] : 0.0;
      const auto [v, s] = row_value(row, values[i], below);
      levels[row] = values[i];
      self(self, row - 1, i, value + v, supply + s);
    }
  };
  descend(descend, K - 1, 0, 0.0, 0.0);

  const Ranked best = tracker.select();
  Eigen::MatrixXd x = allocation_from_levels(grid, best.levels);
  Eigen::MatrixXd p = optimal_payment_multi(grid, x);
  SolveDiagnostics diag;
  diag.candidates = evaluated;
  return finalize(instance, std::move(x), std::move(p), Method::kOracle, 0.0, diag);
}

}  // namespace repurchase
