#pragma once

// Command-line front end. `run_cli` takes the arguments after the program
// name and returns the process exit code:
//   0 success, 2 input error, 3 solve failure, 4 consistency failure, 5 resource guard.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "irdual/bounds_engine.hpp"
#include "irdual/dp_solver.hpp"
#include "irdual/errors.hpp"
#include "irdual/finite_mdp.hpp"
#include "irdual/json_io.hpp"
#include "irdual/penalties.hpp"

namespace irdual::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kSolveFailure = 3, kConsistencyFailure = 4, kResourceGuard = 5 };

using io::json;

/// Everything a command needs, after merging config file, grid file and flags.
struct JobConfig {
  ModelParams params = irdual::parameter_set(1);
  int parameter_set = 1;  ///< 0 for custom parameters
  GridSpec grid;
  RunConfig run;
};

inline json job_to_json(const JobConfig& job) {
  json j = io::params_to_json(job.params);
  j["parameter_set"] = job.parameter_set;
  j["grid"] = io::grid_spec_to_json(job.grid);
  j["run"] = {{"paths_per_run", job.run.paths_per_run}, {"runs", job.run.runs},
              {"antithetic", job.run.antithetic},       {"seed", job.run.seed},
              {"penalty", to_string(job.run.penalty)},   {"workers", job.run.workers}};
  return j;
}

/// Accepts a parameter document, optionally with `parameter_set`, `grid` and `run`
/// sections. A bare {"parameter_set": id} loads the embedded set.
inline JobConfig job_from_json(const json& j) {
  std::vector<std::string> allowed = io::params_keys();
  allowed.insert(allowed.end(), {"parameter_set", "grid", "run"});
  io::detail::reject_unknown(j, allowed, "config");
  JobConfig job;
  bool has_params = false;
  for (const auto& k : io::params_keys()) has_params = has_params || j.contains(k);
  if (j.contains("parameter_set")) job.parameter_set = io::detail::as<int>(j["parameter_set"], "parameter_set");
  if (has_params) {
    job.params = io::params_fields_from_json(j, "config");
  } else {
    if (!j.contains("parameter_set")) throw InputError("config: needs parameter fields or a parameter_set id");
    job.params = parameter_set(job.parameter_set);
  }
  if (j.contains("grid")) job.grid = io::grid_spec_from_json(j["grid"], "config.grid");
  if (j.contains("run")) {
    const json& r = j["run"];
    using io::detail::as;
    io::detail::reject_unknown(r, {"paths_per_run", "runs", "antithetic", "seed", "penalty", "workers"}, "config.run");
    if (r.contains("paths_per_run")) job.run.paths_per_run = as<int>(r["paths_per_run"], "run.paths_per_run");
    if (r.contains("runs")) job.run.runs = as<int>(r["runs"], "run.runs");
    if (r.contains("antithetic")) job.run.antithetic = as<bool>(r["antithetic"], "run.antithetic");
    if (r.contains("seed")) job.run.seed = as<std::uint64_t>(r["seed"], "run.seed");
    if (r.contains("penalty")) job.run.penalty = parse_penalty_kind(as<std::string>(r["penalty"], "run.penalty"));
    if (r.contains("workers")) job.run.workers = as<int>(r["workers"], "run.workers");
  }
  return job;
}

namespace detail {

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
}

inline void append_csv(const std::string& path, const std::string& row) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw InputError("cannot append to '" + path + "'");
  if (fresh) out << io::csv_header() << '\n';
  out << row << '\n';
}

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.insert(0, w - s.size(), ' ');
  return s;
}

}  // namespace detail

/// Options shared by all subcommands; which ones apply depends on the command.
struct Flags {
  std::string config;
  std::string grid;
  std::string penalty;
  std::optional<double> gamma;
  std::optional<std::uint64_t> seed;
  std::optional<int> paths;
  std::optional<int> runs;
  std::optional<int> workers;
  std::string out;
  bool print_config = false;
  bool trace = false;
  bool no_antithetic = false;
  int set_id = 0;
  std::string mdp_file;
  std::vector<std::string> csv_files;
};

inline JobConfig resolve_job(const Flags& f, std::optional<io::GridDocument>* grid_doc = nullptr) {
  JobConfig job;
  const bool has_config = !f.config.empty();
  if (has_config) job = job_from_json(detail::read_json_file(f.config));
  if (!f.grid.empty() && grid_doc) {
    *grid_doc = io::value_grid_from_json(detail::read_json_file(f.grid));
    if (!has_config) {
      job.params = (*grid_doc)->params;
      job.parameter_set = 0;
      for (int id = 1; id <= 4; ++id) {
        ModelParams cand = parameter_set(id, job.params.gamma);
        if (io::params_hash(cand) == (*grid_doc)->params_hash) job.parameter_set = id;
      }
    }
    job.grid = (*grid_doc)->spec;
  }
  if (f.gamma) {
    job.params.gamma = *f.gamma;
    job.params.validate();
  }
  if (!f.penalty.empty()) job.run.penalty = parse_penalty_kind(f.penalty);
  if (f.seed) job.run.seed = *f.seed;
  if (f.paths) job.run.paths_per_run = *f.paths;
  if (f.runs) job.run.runs = *f.runs;
  if (f.workers) job.run.workers = *f.workers;
  if (f.no_antithetic) job.run.antithetic = false;
  if (grid_doc && grid_doc->has_value() && io::params_hash(job.params) != (*grid_doc)->params_hash)
    throw ConsistencyError("grid file was solved for different parameters (params_hash " + (*grid_doc)->params_hash +
                           ", config " + io::params_hash(job.params) + ")");
  return job;
}

inline int cmd_gen_params(const Flags& f, std::ostream& out) {
  ModelParams p = parameter_set(f.set_id, f.gamma.value_or(1.5));
  json j = io::params_to_json(p);
  j["parameter_set"] = f.set_id;
  const std::string text = j.dump(2) + "\n";
  if (f.out.empty())
    out << text;
  else
    detail::write_text(f.out, text);
  return kOk;
}

inline int cmd_solve(const Flags& f, std::ostream& out, std::ostream& err) {
  const JobConfig job = resolve_job(f);
  const ValueGrid vg = solve_value_grid(job.params, job.grid);
  const std::string text = io::value_grid_to_json(job.params, job.grid, vg).dump(1) + "\n";
  const std::string target = !f.grid.empty() ? f.grid : f.out;
  const std::string j0 = "J_0(" + io::fmt_g12(job.params.phi0) + ") = " +
                         io::fmt_g12(interpolate_J(vg, 0, job.params.phi0)) + "\n";
  if (target.empty()) {
    out << text;
    err << j0;
  } else {
    detail::write_text(target, text);
    out << j0;
  }
  return kOk;
}

inline ValueGrid grid_for(const JobConfig& job, const std::optional<io::GridDocument>& doc) {
  return doc ? doc->grid : solve_value_grid(job.params, job.grid);
}

inline int cmd_bound(BoundKind kind, const Flags& f, std::ostream& out, std::ostream& err) {
  if (!f.seed) throw InputError("--seed is required for bound commands");
  std::optional<io::GridDocument> doc;
  JobConfig job = resolve_job(f, &doc);
  if (kind == BoundKind::lower) job.run.penalty = PenaltyKind::zero;
  const ValueGrid vg = grid_for(job, doc);
  if (f.trace && kind == BoundKind::upper) {
    opt::Options o = inner_solver_options();
    o.trace = true;
    const ShockPath s = irdual::detail::run_path_shocks(job.params, job.run, 0, 0);
    const PenaltyContext ctx = build_context(job.params, vg, grid_policy(vg, job.params), s);
    const InnerProblem prob = assemble_inner(job.params, build_form(job.run.penalty, ctx, job.params), ctx);
    const opt::Solution sol = opt::maximize(prob.objective, prob.constraints, prob.x0, o);
    for (const auto& t : sol.trace)
      err << "trace t=" << io::fmt_g12(t.t) << " f=" << io::fmt_g12(t.f) << " newton=" << t.newton_steps << '\n';
    err << "trace status=" << opt::to_string(sol.status) << " kkt=" << io::fmt_g12(sol.kkt_residual) << '\n';
  }
  const BoundEstimate est = kind == BoundKind::lower ? lower_bound(job.params, vg, job.run)
                                                     : upper_bound(job.params, vg, job.run);
  const std::string row = io::csv_row(job.parameter_set, est);
  out << io::csv_header() << '\n' << row << '\n';
  if (!f.out.empty()) detail::append_csv(f.out, row);
  if (!est.accepted()) {
    err << "flagged inner solves: " << est.flagged_paths << " of " << est.total_paths << " (limit is below 1%)\n";
    return kSolveFailure;
  }
  return kOk;
}

inline int cmd_feasibility(const Flags& f, std::ostream& out) {
  std::optional<io::GridDocument> doc;
  JobConfig job = resolve_job(f, &doc);
  if (f.penalty.empty() && job.run.penalty == PenaltyKind::zero) job.run.penalty = PenaltyKind::m1;
  const int pairs = f.paths.value_or(10000);
  const ValueGrid vg = grid_for(job, doc);
  const FeasibilityReport r =
      feasibility_check(job.run.penalty, job.params, vg, grid_policy(vg, job.params), pairs, job.run.seed, job.run.antithetic);
  json j = io::feasibility_to_json(r, job.run.penalty);
  j["parameter_set"] = job.parameter_set;
  j["gamma"] = job.params.gamma;
  j["seed"] = job.run.seed;
  const std::string text = j.dump(2) + "\n";
  out << text;
  if (!f.out.empty()) detail::write_text(f.out, text);
  return r.pass ? kOk : kConsistencyFailure;
}

inline int cmd_verify_finite(const Flags& f, std::ostream& out) {
  const mdp::FiniteMDP m = io::finite_mdp_from_json(detail::read_json_file(f.mdp_file));
  const mdp::DualityReport r = mdp::verify_duality(m);
  out << "V0 = " << io::fmt_g12(r.v0) << '\n'
      << "zero-penalty bound = " << io::fmt_g12(r.zero_penalty_bound) << '\n'
      << "optimal-penalty bound = " << io::fmt_g12(r.optimal_penalty_bound) << '\n'
      << "optimal-penalty mean = " << io::fmt_g12(r.optimal_penalty_mean) << '\n';
  for (const auto& c : r.failures)
    out << "FAILED " << c.check << ": expected " << io::fmt_g12(c.expected) << ", got " << io::fmt_g12(c.actual)
        << " (tolerance " << io::fmt_g12(c.tolerance) << ")\n";
  out << (r.passed() ? "PASS" : "FAIL") << '\n';
  return r.passed() ? kOk : kConsistencyFailure;
}

/// Table grouped by (parameter set, gamma); the last row of each kind wins.
inline std::string format_report(const std::vector<io::CsvRecord>& rows) {
  struct Group {
    std::optional<io::CsvRecord> lower, m1, m2, zero;
  };
  std::map<std::pair<int, double>, Group> groups;
  for (const auto& r : rows) {
    Group& g = groups[{r.parameter_set, r.gamma}];
    if (r.bound_type == "lower")
      g.lower = r;
    else if (r.penalty == "m1")
      g.m1 = r;
    else if (r.penalty == "m2")
      g.m2 = r;
    else if (r.penalty == "zero")
      g.zero = r;
  }
  using detail::fixed;
  using detail::pad;
  const std::size_t cw = 30;
  auto cell = [&](const std::optional<io::CsvRecord>& r) {
    if (!r) return pad("-", cw);
    const int digits = std::abs(r->value_mean) >= 100 ? 1 : 3;
    return pad(fixed(r->value_mean, digits) + " (" + fixed(r->value_stderr, digits) + ") " + fixed(10.0 * r->ce_mean, 3) +
                   " (" + fixed(10.0 * r->ce_stderr, 3) + ")",
               cw);
  };
  std::ostringstream os;
  os << pad("set", 4) << pad("gamma", 7) << pad("Lower", cw) << pad("Dual Bound 1", cw) << pad("Dual Bound 2", cw)
     << pad("Zero Penalty", cw) << pad("Duality Gap", 20) << '\n';
  const std::string sub = "Value (se) CE(1e-1) (se)";
  os << pad("", 11) << pad(sub, cw) << pad(sub, cw) << pad(sub, cw) << pad(sub, cw) << pad("Value% CE%", 20) << '\n';
  for (const auto& [key, g] : groups) {
    os << pad(std::to_string(key.first), 4) << pad(io::fmt_g12(key.second), 7) << cell(g.lower) << cell(g.m1)
       << cell(g.m2) << cell(g.zero);
    std::optional<io::CsvRecord> best;
    for (const auto* u : {&g.m1, &g.m2})
      if (*u && (!best || (*u)->value_mean < best->value_mean)) best = *u;
    if (g.lower && best) {
      const double vg = (best->value_mean - g.lower->value_mean) / std::abs(g.lower->value_mean);
      const double cg = (best->ce_mean - g.lower->ce_mean) / g.lower->ce_mean;
      os << pad(fixed(100.0 * vg, 2) + "% " + fixed(100.0 * cg, 2) + "%", 20);
    } else {
      os << pad("-", 20);
    }
    os << '\n';
  }
  return os.str();
}

inline int cmd_report(const Flags& f, std::ostream& out) {
  std::vector<io::CsvRecord> rows;
  for (const auto& path : f.csv_files) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    auto part = io::parse_csv(in, path);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const std::string table = format_report(rows);
  out << table;
  if (!f.out.empty()) detail::write_text(f.out, table);
  return kOk;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lower and dual upper bounds for finite MDPs and a dynamic portfolio choice model", "irdual"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* c) {
    c->add_option("--config", f.config, "job config JSON (parameters, optional grid/run sections)");
    c->add_option("--gamma", f.gamma, "override relative risk aversion");
    c->add_flag("--print-config", f.print_config, "print the effective config and exit");
  };
  auto bounds = [&](CLI::App* c) {
    c->add_option("--grid", f.grid, "value grid file from `solve` (solved in-process if absent)");
    c->add_option("--seed", f.seed, "64-bit seed (required)");
    c->add_option("--paths", f.paths, "base draws per run (antithetic pairs when antithetic)")->check(CLI::PositiveNumber);
    c->add_option("--runs", f.runs, "independent runs")->check(CLI::Range(2, 1 << 20));
    c->add_option("--workers", f.workers, "worker threads; results do not depend on it")->check(CLI::PositiveNumber);
    c->add_option("--out", f.out, "append the CSV row to this file");
    c->add_flag("--no-antithetic", f.no_antithetic, "plain sampling instead of antithetic pairs");
  };

  auto* gen = app.add_subcommand("gen-params", "print an embedded parameter set as JSON");
  gen->add_option("set", f.set_id, "parameter set id (1-4)")->required();
  gen->add_option("--gamma", f.gamma, "relative risk aversion");
  gen->add_option("--out", f.out, "write to file instead of stdout");

  auto* solve = app.add_subcommand("solve", "backward recursion on the market-state grid");
  common(solve);
  solve->add_option("--grid,--out", f.grid, "output value grid file (stdout if absent)");

  auto* lower = app.add_subcommand("lower", "lower bound by simulating the grid policy");
  common(lower);
  bounds(lower);

  auto* upper = app.add_subcommand("upper", "dual upper bound from pathwise inner problems");
  common(upper);
  bounds(upper);
  upper->add_option("--penalty", f.penalty, "zero, m1 or m2")->check(CLI::IsMember({"zero", "m1", "m2"}));
  upper->add_flag("--trace", f.trace, "dump barrier iterations of the first inner solve to stderr");

  auto* feas = app.add_subcommand("feasibility", "Monte Carlo zero-mean test of a penalty under the grid policy");
  common(feas);
  feas->add_option("--grid", f.grid, "value grid file");
  feas->add_option("--penalty", f.penalty, "zero, m1 or m2")->check(CLI::IsMember({"zero", "m1", "m2"}));
  feas->add_option("--seed", f.seed, "64-bit seed");
  feas->add_option("--paths", f.paths, "antithetic pairs (default 10000)")->check(CLI::Range(100, 1 << 30));
  feas->add_option("--out", f.out, "also write the JSON report here");

  auto* verify = app.add_subcommand("verify-finite", "exact weak/strong duality check on a finite MDP");
  verify->add_option("mdp", f.mdp_file, "finite MDP JSON file")->required();

  auto* report = app.add_subcommand("report", "tabulate bound CSV files");
  report->add_option("csv", f.csv_files, "CSV files written by lower/upper --out")->required();
  report->add_option("--out", f.out, "also write the table here");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }

  try {
    for (auto* c : {solve, lower, upper, feas}) {
      if (c->parsed() && f.print_config) {
        std::optional<io::GridDocument> doc;
        out << job_to_json(resolve_job(f, c == solve ? nullptr : &doc)).dump(2) << '\n';
        return kOk;
      }
    }
    if (gen->parsed()) return cmd_gen_params(f, out);
    if (solve->parsed()) return cmd_solve(f, out, err);
    if (lower->parsed()) return cmd_bound(BoundKind::lower, f, out, err);
    if (upper->parsed()) return cmd_bound(BoundKind::upper, f, out, err);
    if (feas->parsed()) return cmd_feasibility(f, out);
    if (verify->parsed()) return cmd_verify_finite(f, out);
    if (report->parsed()) return cmd_report(f, out);
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const EnumerationGuardError& e) {
    err << "resource guard: " << e.what() << '\n';
    return kResourceGuard;
  } catch (const ConsistencyError& e) {
    err << "consistency failure: " << e.what() << '\n';
    return kConsistencyFailure;
  } catch (const NodeSolveError& e) {
    err << "solve failure: " << e.what() << '\n';
    return kSolveFailure;
  } catch (const AdmissibilityError& e) {
    err << "solve failure: " << e.what() << '\n';
    return kSolveFailure;
  } catch (const json::exception& e) {
    err << "input error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return kSolveFailure;
  }
  return kInputError;
}

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace irdual::cli
