#pragma once

// JSON documents for parameters, finite MDPs, value grids and bound
// estimates, plus the CSV row format used for bound tables. Parsing is
// strict: unknown keys and wrongly typed values raise InputError.

#include <cstdint>
#include <cstdio>
#include <istream>
#include <locale>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "irdual/bounds_engine.hpp"
#include "irdual/dp_solver.hpp"
#include "irdual/errors.hpp"
#include "irdual/finite_mdp.hpp"
#include "irdual/market_model.hpp"

namespace irdual::io {

using json = nlohmann::json;

inline constexpr const char* kValueGridFormat = "irdual-value-grid";
inline constexpr int kValueGridVersion = 1;

namespace detail {

inline void reject_unknown(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(where + ": expected a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw InputError(where + ": unknown field '" + key + "'");
  }
}

inline const json& require(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw InputError(where + ": missing field '" + std::string(key) + "'");
  return *it;
}

template <typename T>
T as(const json& v, const std::string& what) {
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw InputError(what + ": expected a number");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw InputError(what + ": expected an integer");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw InputError(what + ": expected true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw InputError(what + ": expected a string");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw InputError(what + ": " + e.what());
  }
}

inline Vec to_vec(const json& v, const std::string& what) {
  if (!v.is_array()) throw InputError(what + ": expected an array of numbers");
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = as<double>(v[i], what);
  return out;
}

inline Mat to_mat(const json& v, const std::string& what) {
  if (!v.is_array() || v.empty()) throw InputError(what + ": expected a non-empty array of rows");
  const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
  Mat out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < v.size(); ++r) {
    const Vec row = to_vec(v[r], what);
    if (static_cast<std::size_t>(row.size()) != cols) throw InputError(what + ": ragged rows");
    out.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return out;
}

inline json from_vec(const Eigen::Ref<const Vec>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json from_mat(const Mat& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(from_vec(m.row(r).transpose()));
  return a;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// ---------------------------------------------------------------- params

inline json params_to_json(const ModelParams& p) {
  json j;
  j["n"] = p.n;
  j["d"] = p.d;
  j["mu0"] = detail::from_vec(p.mu0);
  j["mu1"] = detail::from_vec(p.mu1);
  j["sigma"] = detail::from_mat(p.sigma);
  j["r_f"] = p.r_f;
  j["lambda"] = p.lambda;
  j["sigma_phi1"] = detail::from_vec(p.sigma_phi1.transpose());
  if (p.d == 1)
    j["sigma_phi2"] = p.sigma_phi2(0);
  else
    j["sigma_phi2"] = detail::from_vec(p.sigma_phi2.transpose());
  j["alpha"] = p.alpha;
  j["beta"] = p.beta;
  j["gamma"] = p.gamma;
  j["delta"] = p.delta;
  j["K"] = p.K;
  j["T"] = p.T;
  j["phi0"] = p.phi0;
  j["W0"] = p.W0;
  return j;
}

inline const std::vector<std::string>& params_keys() {
  static const std::vector<std::string> keys = {
      "n", "d", "mu0", "mu1", "sigma", "r_f", "lambda", "sigma_phi1", "sigma_phi2",
      "alpha", "beta", "gamma", "delta", "K", "T", "phi0", "W0"};
  return keys;
}

/// Reads the parameter fields of `j`, ignoring other keys (the caller checks those).
inline ModelParams params_fields_from_json(const json& j, const std::string& where = "params") {
  using detail::as;
  using detail::require;
  ModelParams p;
  p.n = as<int>(require(j, "n", where), where + ".n");
  p.d = as<int>(require(j, "d", where), where + ".d");
  p.mu0 = detail::to_vec(require(j, "mu0", where), where + ".mu0");
  p.mu1 = detail::to_vec(require(j, "mu1", where), where + ".mu1");
  p.sigma = detail::to_mat(require(j, "sigma", where), where + ".sigma");
  p.r_f = as<double>(require(j, "r_f", where), where + ".r_f");
  p.lambda = as<double>(require(j, "lambda", where), where + ".lambda");
  p.sigma_phi1 = detail::to_vec(require(j, "sigma_phi1", where), where + ".sigma_phi1").transpose();
  const json& s2 = require(j, "sigma_phi2", where);
  if (s2.is_number()) {
    p.sigma_phi2 = RowVec::Constant(1, s2.get<double>());
  } else {
    p.sigma_phi2 = detail::to_vec(s2, where + ".sigma_phi2").transpose();
  }
  p.alpha = as<double>(require(j, "alpha", where), where + ".alpha");
  p.beta = as<double>(require(j, "beta", where), where + ".beta");
  p.gamma = as<double>(require(j, "gamma", where), where + ".gamma");
  p.delta = as<double>(require(j, "delta", where), where + ".delta");
  p.K = as<int>(require(j, "K", where), where + ".K");
  p.T = as<double>(require(j, "T", where), where + ".T");
  p.phi0 = as<double>(require(j, "phi0", where), where + ".phi0");
  p.W0 = as<double>(require(j, "W0", where), where + ".W0");
  p.validate();
  return p;
}

inline ModelParams params_from_json(const json& j) {
  detail::reject_unknown(j, params_keys(), "params");
  return params_fields_from_json(j);
}

/// 16 hex digits of FNV-1a over the canonical dump of the parameter document.
inline std::string params_hash(const ModelParams& p) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(detail::fnv1a(params_to_json(p).dump())));
  return buf;
}

// ---------------------------------------------------------------- finite MDP

inline mdp::FiniteMDP finite_mdp_from_json(const json& j) {
  using detail::as;
  using detail::require;
  const std::string w = "mdp";
  detail::reject_unknown(j,
                         {"horizon", "states", "actions", "outcomes", "outcome_prob", "stage_outcome_prob",
                          "transition", "stage_reward", "terminal_reward", "initial_state"},
                         w);
  mdp::FiniteMDPData d;
  try {
    d.horizon = as<int>(require(j, "horizon", w), "mdp.horizon");
    d.states = require(j, "states", w).get<std::vector<std::string>>();
    d.actions = require(j, "actions", w).get<std::vector<std::string>>();
    d.outcomes = require(j, "outcomes", w).get<std::vector<std::string>>();
    d.outcome_prob = require(j, "outcome_prob", w).get<std::vector<double>>();
    if (j.contains("stage_outcome_prob"))
      d.stage_outcome_prob = j["stage_outcome_prob"].get<std::vector<std::vector<double>>>();
    d.transition = require(j, "transition", w).get<std::vector<std::vector<std::vector<int>>>>();
    d.stage_reward = require(j, "stage_reward", w).get<std::vector<std::vector<std::vector<double>>>>();
    d.terminal_reward = require(j, "terminal_reward", w).get<std::vector<double>>();
    if (j.contains("initial_state")) d.initial_state = as<int>(j["initial_state"], "mdp.initial_state");
  } catch (const json::exception& e) {
    throw InputError(std::string("mdp: ") + e.what());
  }
  return mdp::FiniteMDP(std::move(d));
}

inline json finite_mdp_to_json(const mdp::FiniteMDPData& d) {
  json j;
  j["horizon"] = d.horizon;
  j["states"] = d.states;
  j["actions"] = d.actions;
  j["outcomes"] = d.outcomes;
  j["outcome_prob"] = d.outcome_prob;
  if (!d.stage_outcome_prob.empty()) j["stage_outcome_prob"] = d.stage_outcome_prob;
  j["transition"] = d.transition;
  j["stage_reward"] = d.stage_reward;
  j["terminal_reward"] = d.terminal_reward;
  j["initial_state"] = d.initial_state;
  return j;
}

// ---------------------------------------------------------------- value grid

struct GridDocument {
  ModelParams params;
  GridSpec spec;
  ValueGrid grid;
  std::string params_hash;
};

inline json value_grid_to_json(const ModelParams& p, const GridSpec& spec, const ValueGrid& vg) {
  json j;
  j["format"] = kValueGridFormat;
  j["version"] = kValueGridVersion;
  j["params_hash"] = params_hash(p);
  j["params"] = params_to_json(p);
  j["grid_spec"] = {{"nodes", spec.nodes}, {"lo", spec.lo}, {"hi", spec.hi}, {"quadrature_points", spec.quadrature_points}};
  j["nodes"] = vg.grid;
  j["J"] = detail::from_mat(vg.J);
  j["slope"] = detail::from_mat(vg.slope);
  json pol = json::array();
  for (const auto& stage : vg.policy) {
    json row = json::array();
    for (const auto& a : stage) row.push_back({{"pi", detail::from_vec(a.pi)}, {"c", a.c}});
    pol.push_back(row);
  }
  j["policy"] = pol;
  return j;
}

inline GridSpec grid_spec_from_json(const json& j, const std::string& where = "grid") {
  using detail::as;
  detail::reject_unknown(j, {"nodes", "lo", "hi", "quadrature_points"}, where);
  GridSpec s;
  if (j.contains("nodes")) s.nodes = as<int>(j["nodes"], where + ".nodes");
  if (j.contains("lo")) s.lo = as<double>(j["lo"], where + ".lo");
  if (j.contains("hi")) s.hi = as<double>(j["hi"], where + ".hi");
  if (j.contains("quadrature_points")) s.quadrature_points = as<int>(j["quadrature_points"], where + ".quadrature_points");
  if (s.nodes < 2 || !(s.hi > s.lo)) throw InputError(where + ": need nodes >= 2 and hi > lo");
  return s;
}

inline json grid_spec_to_json(const GridSpec& s) {
  return {{"nodes", s.nodes}, {"lo", s.lo}, {"hi", s.hi}, {"quadrature_points", s.quadrature_points}};
}

/// Parses a grid document; a wrong format or version is an input error,
/// a hash that does not match the embedded parameters a ConsistencyError.
inline GridDocument value_grid_from_json(const json& j) {
  using detail::as;
  using detail::require;
  const std::string w = "value grid";
  detail::reject_unknown(j, {"format", "version", "params_hash", "params", "grid_spec", "nodes", "J", "slope", "policy"},
                         w);
  if (as<std::string>(require(j, "format", w), "format") != kValueGridFormat)
    throw InputError("value grid: unexpected format tag");
  const int version = as<int>(require(j, "version", w), "version");
  if (version != kValueGridVersion)
    throw InputError("value grid: unsupported version " + std::to_string(version));
  GridDocument doc;
  doc.params = params_from_json(require(j, "params", w));
  doc.params_hash = as<std::string>(require(j, "params_hash", w), "params_hash");
  if (doc.params_hash != params_hash(doc.params))
    throw ConsistencyError("value grid: params_hash does not match the embedded parameters");
  doc.spec = grid_spec_from_json(require(j, "grid_spec", w), "grid_spec");
  const Vec nodes = detail::to_vec(require(j, "nodes", w), "nodes");
  doc.grid.grid.assign(nodes.data(), nodes.data() + nodes.size());
  doc.grid.J = detail::to_mat(require(j, "J", w), "J");
  doc.grid.slope = detail::to_mat(require(j, "slope", w), "slope");
  const json& pol = require(j, "policy", w);
  if (!pol.is_array()) throw InputError("value grid: policy must be an array");
  for (const auto& stage : pol) {
    std::vector<Decision> row;
    for (const auto& a : stage) {
      detail::reject_unknown(a, {"pi", "c"}, "policy entry");
      row.push_back({detail::to_vec(require(a, "pi", "policy entry"), "policy.pi"),
                     as<double>(require(a, "c", "policy entry"), "policy.c")});
    }
    doc.grid.policy.push_back(std::move(row));
  }
  const auto N = static_cast<Eigen::Index>(doc.grid.grid.size());
  const int K = doc.params.K;
  bool ok = doc.grid.J.rows() == K + 1 && doc.grid.J.cols() == N && doc.grid.slope.rows() == K &&
            doc.grid.slope.cols() == N && doc.grid.stages() == K;
  for (const auto& row : doc.grid.policy) {
    ok = ok && static_cast<Eigen::Index>(row.size()) == N;
    for (const auto& a : row) ok = ok && a.pi.size() == doc.params.n;
  }
  if (!ok) throw InputError("value grid: table shapes do not match the parameters");
  return doc;
}

// ---------------------------------------------------------------- bounds

inline json bound_to_json(const BoundEstimate& e) {
  json j;
  j["kind"] = to_string(e.kind);
  j["penalty"] = to_string(e.penalty);
  j["gamma"] = e.gamma;
  j["run_means"] = e.run_means;
  j["mean"] = e.mean;
  j["stderr"] = e.std_error;
  j["ce_mean"] = e.ce_mean;
  j["ce_stderr"] = e.ce_std_error;
  j["flagged_paths"] = e.flagged_paths;
  j["total_paths"] = e.total_paths;
  j["config"] = {{"paths_per_run", e.config.paths_per_run},
                 {"runs", e.config.runs},
                 {"antithetic", e.config.antithetic},
                 {"seed", e.config.seed}};
  return j;
}

/// printf "%.12g"; the C locale is never changed by this library, so the decimal point is '.'.
inline std::string fmt_g12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {"parameter_set", "gamma",      "bound_type", "penalty",
                                                "value_mean",    "value_stderr", "ce_mean",  "ce_stderr",
                                                "paths_per_run", "runs",       "seed",       "flagged_paths"};
  return cols;
}

inline std::string csv_header() {
  std::string s;
  for (const auto& c : csv_columns()) s += (s.empty() ? "" : ",") + c;
  return s;
}

/// One CSV row; lower bounds report penalty "none".
inline std::string csv_row(int parameter_set, const BoundEstimate& e) {
  std::ostringstream os;
  os << parameter_set << ',' << fmt_g12(e.gamma) << ',' << to_string(e.kind) << ','
     << (e.kind == BoundKind::lower ? std::string("none") : to_string(e.penalty)) << ',' << fmt_g12(e.mean) << ','
     << fmt_g12(e.std_error) << ',' << fmt_g12(e.ce_mean) << ',' << fmt_g12(e.ce_std_error) << ','
     << e.config.paths_per_run << ',' << e.config.runs << ',' << e.config.seed << ',' << e.flagged_paths;
  return os.str();
}

struct CsvRecord {
  int parameter_set = 0;
  double gamma = 0.0;
  std::string bound_type;
  std::string penalty;
  double value_mean = 0.0;
  double value_stderr = 0.0;
  double ce_mean = 0.0;
  double ce_stderr = 0.0;
  int paths_per_run = 0;
  int runs = 0;
  std::uint64_t seed = 0;
  int flagged_paths = 0;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Parses a bounds CSV with the standard header; header lines repeated by appends are skipped.
inline std::vector<CsvRecord> parse_csv(std::istream& in, const std::string& name = "csv") {
  std::vector<CsvRecord> rows;
  std::string line;
  int lineno = 0;
  const std::string header = csv_header();
  auto num = [&](const std::string& s) {
    std::istringstream is(s);
    is.imbue(std::locale::classic());
    double v;
    if (!(is >> v) || !is.eof()) throw InputError(name + ":" + std::to_string(lineno) + ": bad number '" + s + "'");
    return v;
  };
  auto integer = [&](const std::string& s) {
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw InputError(name + ":" + std::to_string(lineno) + ": bad integer '" + s + "'");
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line == header) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != csv_columns().size())
      throw InputError(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(csv_columns().size()) +
                       " columns");
    CsvRecord r;
    r.parameter_set = static_cast<int>(integer(cells[0]));
    r.gamma = num(cells[1]);
    r.bound_type = cells[2];
    r.penalty = cells[3];
    r.value_mean = num(cells[4]);
    r.value_stderr = num(cells[5]);
    r.ce_mean = num(cells[6]);
    r.ce_stderr = num(cells[7]);
    r.paths_per_run = static_cast<int>(integer(cells[8]));
    r.runs = static_cast<int>(integer(cells[9]));
    try {
      std::size_t pos = 0;
      r.seed = std::stoull(cells[10], &pos);
      if (pos != cells[10].size() || cells[10].front() == '-') throw std::invalid_argument(cells[10]);
    } catch (const std::exception&) {
      throw InputError(name + ":" + std::to_string(lineno) + ": bad seed '" + cells[10] + "'");
    }
    r.flagged_paths = static_cast<int>(integer(cells[11]));
    if (r.bound_type != "lower" && r.bound_type != "upper")
      throw InputError(name + ":" + std::to_string(lineno) + ": bound_type must be lower or upper");
    rows.push_back(r);
  }
  return rows;
}

inline json feasibility_to_json(const FeasibilityReport& r, PenaltyKind kind) {
  return {{"penalty", to_string(kind)}, {"mean", r.mean},    {"stderr", r.std_error},
          {"samples", r.samples},        {"pass", r.pass}};
}

}  // namespace irdual::io
