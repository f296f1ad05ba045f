#pragma once

// Command-line front end and file formats.
//
// Exit codes: 0 success / feasible contract, 1 infeasible contract,
// 2 invalid input, 3 internal solver failure.

#include "repurchase/feasibility.hpp"
#include "repurchase/model.hpp"
#include "repurchase/solver.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace repurchase::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInfeasible = 1,
  kExitInvalidInput = 2,
  kExitSolverFailure = 3,
};

// Malformed instance or contract document. The message names the key/index.
class InputError : public UsageError {
 public:
  using UsageError::UsageError;
};

struct InstanceFile {
  MarketInstance instance;
  std::optional<double> epsilon;
  std::optional<std::uint64_t> seed;
};

InstanceFile parse_instance(std::string_view text);

// Accepts a bare {"allocation", "payment"} document or a solver report
// (whose "contract" member has that form). Entries must be non-negative.
Contract parse_contract(std::string_view text, const TypeGrid& grid);

// Machine-readable report; doubles are written with round-trip precision and
// nothing time-dependent is included.
std::string render_report(const MarketInstance& instance, const SolveResult& result,
                          double tol);

// Runs one command. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace repurchase::cli
