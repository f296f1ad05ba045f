#include "repurchase/cli.hpp"

#include "repurchase/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace repurchase::cli {
namespace {

using nlohmann::json;

const json& require_key(const json& doc, const std::string& key, const std::string& path) {
  if (!doc.is_object() || !doc.contains(key)) {
    throw InputError(path + key + ": missing key");
  }
  return doc.at(key);
}

double as_number(const json& value, const std::string& path) {
  if (!value.is_number()) throw InputError(path + ": expected a number");
  return value.get<double>();
}

std::vector<double> as_vector(const json& value, const std::string& path) {
  if (!value.is_array()) throw InputError(path + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < value.size(); ++i) {
    out.push_back(as_number(value[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Eigen::MatrixXd as_matrix(const json& value, std::size_t rows, std::size_t cols,
                          const std::string& path) {
  if (!value.is_array() || value.size() != rows) {
    throw InputError(path + ": expected " + std::to_string(rows) + " rows");
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::string row_path = path + "[" + std::to_string(r) + "]";
    const auto row = as_vector(value[r], row_path);
    if (row.size() != cols) {
      throw InputError(row_path + ": expected " + std::to_string(cols) + " entries");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
    }
  }
  return m;
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed JSON: ") + e.what());
  }
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json verdict_json(const Verdict& v) {
  return json{{"pass", v.pass}, {"margin", number_or_null(v.margin)}, {"where", v.where}};
}

json audit_json(const AuditReport& a) {
  return json{
      {"P1", verdict_json(a.p1)},
      {"P2", verdict_json(a.p2)},
      {"P3", verdict_json(a.p3)},
      {"P4", verdict_json(a.p4)},
      {"P5", verdict_json(a.p5)},
      {"P6", verdict_json(a.p6)},
      {"resource_feasible", verdict_json(a.resource_feasible)},
      {"greedy_monotone", verdict_json(a.greedy.monotone)},
      {"greedy_maximal", verdict_json(a.greedy.maximal)},
      {"ic_valuation", verdict_json(a.ic_valuation)},
      {"ic_capacity", verdict_json(a.ic_capacity)},
      {"ic_full", verdict_json(a.ic_full)},
      {"ir", verdict_json(a.ir)},
      {"characterization_holds", a.characterization_holds()},
      {"feasible", a.definitionally_feasible()},
      {"worst_violation",
       {{"constraint", a.worst_violation.constraint},
        {"magnitude", a.worst_violation.magnitude}}},
      {"regret_above_tight_bound", a.regret_above_tight_bound},
  };
}

json menu_json(const TypeGrid& grid, const Contract& contract) {
  json menu = json::array();
  for (std::size_t k = 0; k < grid.num_valuations(); ++k) {
    for (std::size_t l = 0; l < grid.num_capacities(); ++l) {
      menu.push_back({{"valuation", grid.valuation(k)},
                      {"capacity", grid.capacity(l)},
                      {"x", contract.x(k, l)},
                      {"p", contract.p(k, l)},
                      {"utility", client_utility(grid, contract, k, Item{k, l})}});
    }
  }
  return menu;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path + ": cannot open file");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw InputError(path + ": cannot write file");
  file << text;
}

void print_menu(const TypeGrid& grid, const Contract& contract, std::ostream& out) {
  out << std::setprecision(6);
  out << std::setw(12) << "valuation" << std::setw(12) << "capacity" << std::setw(12)
      << "x" << std::setw(12) << "p" << std::setw(12) << "utility" << "\n";
  for (std::size_t k = 0; k < grid.num_valuations(); ++k) {
    for (std::size_t l = 0; l < grid.num_capacities(); ++l) {
      out << std::setw(12) << grid.valuation(k) << std::setw(12) << grid.capacity(l)
          << std::setw(12) << contract.x(k, l) << std::setw(12) << contract.p(k, l)
          << std::setw(12) << client_utility(grid, contract, k, Item{k, l}) << "\n";
    }
  }
}

void print_verdict(std::ostream& out, const std::string& name, const Verdict& v) {
  out << std::left << std::setw(20) << name << std::right << (v.pass ? "pass" : "FAIL")
      << "  margin " << std::setprecision(6) << v.margin;
  if (!v.where.empty()) out << "  at " << v.where;
  out << "\n";
}

void print_audit(const AuditReport& a, std::ostream& out) {
  print_verdict(out, "P1 feasibility", a.p1);
  print_verdict(out, "P2 monotone", a.p2);
  print_verdict(out, "P3 squeeze", a.p3);
  print_verdict(out, "P4 capacity IC", a.p4);
  print_verdict(out, "P5 top IR", a.p5);
  print_verdict(out, "P6 greedy", a.p6);
  print_verdict(out, "IC (valuation)", a.ic_valuation);
  print_verdict(out, "IC (capacity)", a.ic_capacity);
  print_verdict(out, "IC (joint)", a.ic_full);
  print_verdict(out, "IR", a.ir);
  out << "worst violation: " << a.worst_violation.constraint << " "
      << std::setprecision(6) << a.worst_violation.magnitude << "\n";
}

struct Options {
  std::string instance_path;
  std::string contract_path;
  std::string method = "auto";
  std::optional<double> epsilon;
  std::size_t restarts = 8;
  std::optional<std::uint64_t> seed;
  std::size_t replications = 10000;
  double grid_step = 1e-2;
  double tol = kAuditTolerance;
  std::string out_path;
  std::string tie_break = "truthful_first";
};

int cmd_solve(const Options& o, std::ostream& out) {
  const InstanceFile file = parse_instance(read_file(o.instance_path));
  const auto& instance = file.instance;
  std::string method = o.method;
  if (method == "auto") method = instance.grid().num_capacities() == 1 ? "single" : "reduced";

  SolveResult result = [&] {
    if (method == "single") {
      if (instance.grid().num_capacities() != 1) {
        throw InputError("--method single: instance has more than one capacity");
      }
      return solve_single_capacity(instance);
    }
    if (method == "reduced") return solve_multi_reduced(instance);
    RelaxedOptions ro;
    ro.epsilon = o.epsilon.value_or(file.epsilon.value_or(ro.epsilon));
    ro.restarts = o.restarts;
    ro.seed = o.seed.value_or(file.seed.value_or(0));
    return solve_multi_relaxed(instance, ro);
  }();
  const std::string report = render_report(instance, result, o.tol);
  write_text(o.out_path, report, out);
  if (!o.out_path.empty()) {
    out << "method " << to_string(result.method) << ", expected utility "
        << std::setprecision(6) << result.expected_utility << "\n";
    print_menu(instance.grid(), result.contract, out);
  }
  return kExitOk;
}

int cmd_oracle(const Options& o, std::ostream& out) {
  const InstanceFile file = parse_instance(read_file(o.instance_path));
  if (!(o.grid_step > 0.0)) throw InputError("--grid-step: must be positive");
  const SolveResult result = oracle_grid_search(file.instance, o.grid_step);
  write_text(o.out_path, render_report(file.instance, result, o.tol), out);
  if (!o.out_path.empty()) {
    out << "oracle expected utility " << std::setprecision(6) << result.expected_utility
        << " over " << result.diagnostics.candidates << " candidates\n";
  }
  return kExitOk;
}

int cmd_verify(const Options& o, std::ostream& out) {
  const InstanceFile file = parse_instance(read_file(o.instance_path));
  const auto& grid = file.instance.grid();
  const Contract contract = parse_contract(read_file(o.contract_path), grid);
  const AuditReport audit =
      check_theorem1(grid, contract, o.tol, o.epsilon.value_or(0.0));
  print_audit(audit, out);
  out << "regret " << std::setprecision(6) << audit.regret << "\n";
  const bool feasible = audit.characterization_holds() && audit.definitionally_feasible();
  out << (feasible ? "feasible" : "infeasible") << "\n";
  return feasible ? kExitOk : kExitInfeasible;
}

int cmd_regret(const Options& o, std::ostream& out) {
  const InstanceFile file = parse_instance(read_file(o.instance_path));
  const auto& grid = file.instance.grid();
  const Contract contract = parse_contract(read_file(o.contract_path), grid);
  const double eps = o.epsilon.value_or(file.epsilon.value_or(0.0));
  if (!(eps >= 0.0)) throw InputError("--epsilon: must be >= 0");
  const double regret = compute_regret(grid, contract);
  const double bound = regret_bound(grid, eps);
  out << std::setprecision(6) << "regret " << regret << "\nbound " << bound
      << " (epsilon " << eps << ")\n"
      << (regret <= bound ? "within bound" : "exceeds bound") << "\n";
  return kExitOk;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const InstanceFile file = parse_instance(read_file(o.instance_path));
  const auto& instance = file.instance;
  const Contract contract = parse_contract(read_file(o.contract_path), instance.grid());
  if (o.replications < 1) throw InputError("--replications: must be >= 1");
  SimulationConfig config;
  config.replications = o.replications;
  config.seed = o.seed.value_or(file.seed.value_or(0));
  config.tie_break =
      o.tie_break == "max_payment" ? TieBreak::kMaxPayment : TieBreak::kTruthfulFirst;
  const SimulationSummary s = simulate(instance, contract, config);

  if (!o.out_path.empty()) {
    json doc{{"replications", s.replications},
             {"seed", config.seed},
             {"tie_break", to_string(config.tie_break)},
             {"mean_utility", s.mean_utility},
             {"std_error", s.std_error},
             {"mean_total_repurchase", s.mean_total_repurchase},
             {"shortfall_frequency", s.shortfall_frequency},
             {"opt_out", s.opt_out_count}};
    json hist = json::array();
    for (Eigen::Index k = 0; k < s.histogram.rows(); ++k) {
      json row = json::array();
      for (Eigen::Index l = 0; l < s.histogram.cols(); ++l) row.push_back(s.histogram(k, l));
      hist.push_back(row);
    }
    doc["histogram"] = hist;
    write_text(o.out_path, doc.dump(2) + "\n", out);
  }
  out << std::setprecision(6) << "replications " << s.replications << "\n"
      << "mean utility " << s.mean_utility << "\n"
      << "std error " << s.std_error << "\n"
      << "analytic " << provider_expected_utility(instance, contract) << "\n"
      << "mean repurchase " << s.mean_total_repurchase << "\n"
      << "shortfall frequency " << s.shortfall_frequency << "\n"
      << "selections (valuation, capacity: count)\n";
  const auto& grid = instance.grid();
  for (std::size_t k = 0; k < grid.num_valuations(); ++k) {
    for (std::size_t l = 0; l < grid.num_capacities(); ++l) {
      out << "  " << grid.valuation(k) << ", " << grid.capacity(l) << ": "
          << s.histogram(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l))
          << "\n";
    }
  }
  out << "  opt-out: " << s.opt_out_count << "\n";
  return kExitOk;
}

}  // namespace

InstanceFile parse_instance(std::string_view text) {
  const json doc = parse_json(text);
  if (!doc.is_object()) throw InputError("instance: expected a JSON object");
  auto valuations = as_vector(require_key(doc, "valuations", ""), "valuations");
  auto capacities = as_vector(require_key(doc, "capacities", ""), "capacities");
  const std::size_t K = valuations.size();
  const std::size_t L = capacities.size();
  TypeGrid grid = [&] {
    try {
      return TypeGrid(std::move(valuations), std::move(capacities));
    } catch (const UsageError& e) {
      throw InputError(e.what());
    }
  }();

  const json& clients_doc = require_key(doc, "clients", "");
  if (!clients_doc.is_array() || clients_doc.empty()) {
    throw InputError("clients: expected a non-empty array");
  }
  std::vector<ClientDistribution> clients;
  for (std::size_t i = 0; i < clients_doc.size(); ++i) {
    const std::string path = "clients[" + std::to_string(i) + "].";
    const json& probs = require_key(clients_doc[i], "probs", path);
    Eigen::MatrixXd m = as_matrix(probs, L, K, path + "probs");
    try {
      clients.emplace_back(std::move(m));
    } catch (const UsageError& e) {
      throw InputError("clients[" + std::to_string(i) + "]." + e.what());
    }
  }

  const double alpha = as_number(require_key(doc, "alpha", ""), "alpha");
  const double penalty = as_number(require_key(doc, "penalty_M", ""), "penalty_M");
  const double floor = as_number(require_key(doc, "demand_floor_D", ""), "demand_floor_D");
  std::optional<double> epsilon;
  if (doc.contains("epsilon")) {
    epsilon = as_number(doc["epsilon"], "epsilon");
    if (!(*epsilon > 0.0)) throw InputError("epsilon: must be positive");
  }
  std::optional<std::uint64_t> seed;
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) {
      throw InputError("seed: expected a non-negative integer");
    }
    seed = doc["seed"].get<std::uint64_t>();
  }
  try {
    return InstanceFile{MarketInstance(std::move(grid), std::move(clients), alpha, penalty,
                                       floor),
                        epsilon, seed};
  } catch (const UsageError& e) {
    throw InputError(e.what());
  }
}

Contract parse_contract(std::string_view text, const TypeGrid& grid) {
  const json doc = parse_json(text);
  const json& body = doc.is_object() && doc.contains("contract") ? doc.at("contract") : doc;
  const std::string prefix = doc.is_object() && doc.contains("contract") ? "contract." : "";
  const std::size_t K = grid.num_valuations();
  const std::size_t L = grid.num_capacities();
  Eigen::MatrixXd x =
      as_matrix(require_key(body, "allocation", prefix), K, L, prefix + "allocation");
  Eigen::MatrixXd p =
      as_matrix(require_key(body, "payment", prefix), K, L, prefix + "payment");
  auto check_sign = [&](const Eigen::MatrixXd& m, const std::string& name) {
    for (Eigen::Index k = 0; k < m.rows(); ++k) {
      for (Eigen::Index l = 0; l < m.cols(); ++l) {
        if (!(m(k, l) >= 0.0) || !std::isfinite(m(k, l))) {
          throw InputError(prefix + name + "[" + std::to_string(k) + "][" +
                           std::to_string(l) + "]: must be finite and non-negative");
        }
      }
    }
  };
  check_sign(x, "allocation");
  check_sign(p, "payment");
  return Contract(std::move(x), std::move(p));
}

std::string render_report(const MarketInstance& instance, const SolveResult& result,
                          double tol) {
  const auto& grid = instance.grid();
  const AuditReport audit = check_theorem1(grid, result.contract, tol, result.epsilon);
  json doc;
  doc["method"] = to_string(result.method);
  doc["epsilon"] = result.epsilon;
  doc["expected_utility"] = result.expected_utility;
  doc["aux_t"] = result.aux_t;
  doc["grid"] = {{"valuations", std::vector<double>(grid.valuations().begin(),
                                                    grid.valuations().end())},
                 {"capacities", std::vector<double>(grid.capacities().begin(),
                                                    grid.capacities().end())}};
  doc["contract"] = {{"allocation", matrix_json(result.contract.allocation())},
                     {"payment", matrix_json(result.contract.payment())}};
  doc["menu"] = menu_json(grid, result.contract);
  doc["audit"] = audit_json(audit);
  doc["audit_tolerance"] = tol;
  doc["regret"] = audit.regret;
  doc["regret_bound"] = audit.regret_bound;
  const auto& d = result.diagnostics;
  doc["diagnostics"] = {{"iterations", d.iterations},
                        {"candidates", d.candidates},
                        {"crossing_candidates", d.crossing_candidates},
                        {"restarts", d.restarts},
                        {"accepted_moves", d.accepted_moves}};
  return doc.dump(2) + "\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal repurchasing contracts: solve, audit and simulate"};
  app.require_subcommand(1);
  Options o;
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;

  auto add_out = [&](CLI::App* cmd) {
    cmd->add_option("--out", o.out_path, "Write the machine-readable output here");
  };
  auto add_tol = [&](CLI::App* cmd) {
    cmd->add_option("--tol", o.tol, "Audit tolerance")->check(CLI::NonNegativeNumber);
  };

  auto* solve = app.add_subcommand("solve", "Compute the provider-optimal contract");
  solve->add_option("instance", o.instance_path)->required();
  solve->add_option("--method", o.method)
      ->check(CLI::IsMember({"auto", "single", "reduced", "relaxed"}));
  solve->add_option("--epsilon", epsilon, "Relaxation parameter (relaxed method)");
  solve->add_option("--restarts", o.restarts)->check(CLI::PositiveNumber);
  solve->add_option("--seed", seed);
  add_tol(solve);
  add_out(solve);

  auto* verify = app.add_subcommand("verify", "Audit a contract against an instance");
  verify->add_option("instance", o.instance_path)->required();
  verify->add_option("contract", o.contract_path)->required();
  verify->add_option("--epsilon", epsilon, "Relaxation used to produce the contract");
  add_tol(verify);

  auto* sim = app.add_subcommand("simulate", "Monte Carlo estimate of provider utility");
  sim->add_option("instance", o.instance_path)->required();
  sim->add_option("contract", o.contract_path)->required();
  sim->add_option("--replications", o.replications);
  sim->add_option("--seed", seed);
  sim->add_option("--tie-break", o.tie_break)
      ->check(CLI::IsMember({"truthful_first", "max_payment"}));
  add_out(sim);

  auto* regret = app.add_subcommand("regret", "Regret of a contract and its bound");
  regret->add_option("instance", o.instance_path)->required();
  regret->add_option("contract", o.contract_path)->required();
  regret->add_option("--epsilon", epsilon);

  auto* oracle = app.add_subcommand("oracle", "Brute-force lattice search");
  oracle->add_option("instance", o.instance_path)->required();
  oracle->add_option("--grid-step", o.grid_step);
  add_tol(oracle);
  add_out(oracle);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  }
  o.seed = seed;
  o.epsilon = epsilon;
  if (o.epsilon && !(*o.epsilon >= 0.0)) {
    err << "error: --epsilon: must be >= 0\n";
    return kExitInvalidInput;
  }

  try {
    if (solve->parsed()) return cmd_solve(o, out);
    if (verify->parsed()) return cmd_verify(o, out);
    if (sim->parsed()) return cmd_simulate(o, out);
    if (regret->parsed()) return cmd_regret(o, out);
    if (oracle->parsed()) return cmd_oracle(o, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const CandidateLimitError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const std::exception& e) {
    err << "solver failure: " << e.what() << "\n";
    return kExitSolverFailure;
  }
  return kExitInvalidInput;
}

}  // namespace repurchase::cli
