#pragma once

// Audit engine: resource feasibility, resource greediness, incentive
// compatibility (joint and decomposed), individual rationality, the six-part
// feasibility characterization and the regret of a menu.
//
// Every check is an exhaustive enumeration. Margins are signed slacks: a
// check passes iff its worst margin is >= -tol. IC/IR margins are utility
// differences (money); feasibility and greediness margins are resource units.
// A check with nothing to evaluate reports +infinity.

#include "repurchase/model.hpp"

#include <string>

namespace repurchase {

inline constexpr double kAuditTolerance = 1e-6;

struct Verdict {
  bool pass = true;
  double margin = std::numeric_limits<double>::infinity();
  std::string where;  // location of the worst margin, e.g. "k=1,l=0"

  // Folds one more constraint slack into the verdict.
  void observe(double slack, double tol, const std::string& location);
  void merge(const Verdict& other);
};

struct GreedyVerdict {
  Verdict monotone;
  Verdict maximal;
  bool pass() const noexcept { return monotone.pass && maximal.pass; }
};

struct DecomposedIcVerdict {
  Verdict valuation;  // per capacity column, all valuation pairs
  Verdict capacity;   // per valuation row, admissible capacity deviations
};

struct WorstViolation {
  std::string constraint = "none";
  double magnitude = 0.0;
};

struct AuditReport {
  Verdict resource_feasible;
  GreedyVerdict greedy;
  Verdict ic_valuation;
  Verdict ic_capacity;
  Verdict ic_full;
  Verdict ir;

  Verdict p1;  // resource feasibility
  Verdict p2;  // allocation non-increasing in valuation, within [0, c^l]
  Verdict p3;  // squeeze inequality on payment differences
  Verdict p4;  // IC with respect to capacity
  Verdict p6;  // resource greedy
  Verdict p5;  // top-valuation IR

  WorstViolation worst_violation;

  double epsilon = 0.0;
  double regret = 0.0;
  double regret_bound = 0.0;
  // Set when regret exceeds v^K * sqrt(epsilon); informational only.
  bool regret_above_tight_bound = false;

  bool characterization_holds() const noexcept {
    return p1.pass && p2.pass && p3.pass && p4.pass && p5.pass && p6.pass;
  }
  // Resource feasible, greedy, IC and IR, each checked from its definition.
  bool definitionally_feasible() const noexcept {
    return resource_feasible.pass && greedy.pass() && ic_full.pass && ir.pass;
  }
};

Verdict check_resource_feasibility(const TypeGrid& grid, const Contract& contract,
                                   double tol = kAuditTolerance);

GreedyVerdict check_resource_greedy(const TypeGrid& grid, const Contract& contract,
                                    double tol = kAuditTolerance);

// Joint IC over all (K*L)^2 ordered item pairs, restricted to deviations
// whose allocation fits the deviator's capacity (x <= c^l + tol).
Verdict check_ic_full(const TypeGrid& grid, const Contract& contract,
                      double tol = kAuditTolerance);

DecomposedIcVerdict check_ic_decomposed(const TypeGrid& grid,
                                        const Contract& contract,
                                        double tol = kAuditTolerance);

Verdict check_ir(const TypeGrid& grid, const Contract& contract,
                 double tol = kAuditTolerance);

// Evaluates P1..P6 and, independently, the definitional checks. When
// epsilon > 0 the regret is compared against the relaxation bound.
AuditReport check_theorem1(const TypeGrid& grid, const Contract& contract,
                           double tol = kAuditTolerance, double epsilon = 0.0);

// Largest utility gain any type obtains from an affordable non-truthful item,
// floored at zero. Computed exactly, without tolerance.
double compute_regret(const TypeGrid& grid, const Contract& contract);

// (sum_k v^k) * sqrt(epsilon).
double regret_bound(const TypeGrid& grid, double epsilon);

// v^K * sqrt(epsilon); what the per-row argument actually delivers.
double tight_regret_bound(const TypeGrid& grid, double epsilon);

}  // namespace repurchase
