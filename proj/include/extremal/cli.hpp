#pragma once

/// Command-line plumbing: problem files, builders, certificate JSON and CSV
/// export. The tool in tools/ is a thin CLI11 wrapper over the cmd_* functions.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "extremal/extremal.hpp"

namespace extremal::cli {

using json = nlohmann::json;

inline constexpr const char* kVersion = "extremal 1.0.0";

enum ExitCode : int { kOk = 0, kInputFailure = 1, kNotConverged = 2, kInvalidCertificate = 3, kMismatch = 4 };

struct BuilderSpec {
  std::string builder = "path";
  std::string problem_path;
  Index n = 21;
  Index nx = 15;
  Index ny = 15;
  bool grounded = false;
};

struct RunOptions {
  std::optional<std::string> p;  // number or "inf"; overrides the file budget
  std::optional<double> A;
  std::uint64_t seed = 0;
  double tol_I = 1e-8;
  unsigned jobs = 1;
  Index samples = 256;
  std::string out = "result";
};

struct ProblemFile {
  MeasuredSpace space;
  DirichletForm form;
  LpBudget budget;
  std::uint64_t seed = 0;
  double tol_I = 1e-8;
  json problem;  // canonical problem JSON, the input of the hash
};

inline double parse_p(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return kInf;
    throw InputError("p must be a number or \"inf\"");
  }
  if (!j.is_number()) throw InputError("p must be a number or \"inf\"");
  return j.get<double>();
}

inline double parse_p(const std::string& s) {
  if (s == "inf") return kInf;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InputError("p must be a number or \"inf\"");
  }
  if (used != s.size()) throw InputError("p must be a number or \"inf\"");
  return v;
}

inline json p_to_json(double p) { return std::isinf(p) ? json("inf") : json(p); }

inline json problem_to_json(const MeasuredSpace& space, const DirichletForm& form, const LpBudget& budget) {
  json edges = json::array();
  for (const Edge& e : form.edges()) edges.push_back(json::array({e.i, e.j, e.w}));
  json m = json::array();
  for (Index i = 0; i < space.size(); ++i) m.push_back(space.m(i));
  return json{{"space", {{"m", m}}},
              {"form", {{"edges", edges}, {"dirichlet", form.dirichlet_set()}}},
              {"budget", {{"p", p_to_json(budget.p())}, {"A", budget.A()}}}};
}

/// Schema check and construction. Every structural problem surfaces as InputError.
inline ProblemFile parse_problem(const json& j) {
  auto need = [](const json& obj, const char* key) -> const json& {
    if (!obj.is_object() || !obj.contains(key)) throw InputError(std::string("problem JSON: missing '") + key + "'");
    return obj.at(key);
  };
  const json& space = need(j, "space");
  const json& form = need(j, "form");
  const json& budget = need(j, "budget");
  const json& mj = need(space, "m");
  const json& ej = need(form, "edges");
  if (!mj.is_array() || !ej.is_array()) throw InputError("problem JSON: 'm' and 'edges' must be arrays");

  Vec m(static_cast<Index>(mj.size()));
  for (std::size_t i = 0; i < mj.size(); ++i) {
    if (!mj[i].is_number()) throw InputError("problem JSON: measure entries must be numbers");
    m[static_cast<Index>(i)] = mj[i].get<double>();
  }
  std::vector<Edge> edges;
  for (const json& e : ej) {
    if (!e.is_array() || e.size() != 3 || !e[0].is_number_integer() || !e[1].is_number_integer() ||
        !e[2].is_number())
      throw InputError("problem JSON: each edge must be [i, j, w]");
    edges.push_back({e[0].get<Index>(), e[1].get<Index>(), e[2].get<double>()});
  }
  std::vector<Index> dirichlet;
  if (form.contains("dirichlet")) {
    if (!form.at("dirichlet").is_array()) throw InputError("problem JSON: 'dirichlet' must be an array");
    for (const json& d : form.at("dirichlet")) {
      if (!d.is_number_integer()) throw InputError("problem JSON: dirichlet entries must be integers");
      dirichlet.push_back(d.get<Index>());
    }
  }
  const double p = parse_p(need(budget, "p"));
  const json& aj = need(budget, "A");
  if (!aj.is_number()) throw InputError("A must be a positive finite number");

  MeasuredSpace sp(m);
  DirichletForm fm(sp.size(), edges, dirichlet);
  LpBudget bd(p, aj.get<double>());
  ProblemFile pf{std::move(sp), std::move(fm), bd, 0, 1e-8, json()};
  pf.problem = problem_to_json(pf.space, pf.form, pf.budget);
  return pf;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

/// Unit coefficients throughout; the builders with variable coefficients are
/// available from the library.
inline ProblemFile build_problem(const BuilderSpec& spec, const RunOptions& opts) {
  json base;
  if (spec.builder == "file") {
    if (spec.problem_path.empty()) throw InputError("--builder file needs --problem");
    base = read_json_file(spec.problem_path);
  } else {
    Instance inst = [&] {
      if (spec.builder == "path")
        return build_path(spec.n, [](Index) { return 1.0; }, [](Index) { return 1.0; }, spec.grounded);
      if (spec.builder == "grid2d")
        return build_grid2d(spec.nx, spec.ny, [](double, double) { return 1.0; },
                            [](Index, Index) { return 1.0; }, spec.grounded);
      if (spec.builder == "interval")
        return build_interval_fd(spec.n, [](double) { return 1.0; }, [](double) { return 1.0; }, spec.grounded);
      throw InputError("unknown builder '" + spec.builder + "'");
    }();
    if (!opts.p || !opts.A) throw InputError("builders need both --p and --A");
    base = problem_to_json(inst.space, inst.form, LpBudget(parse_p(*opts.p), *opts.A));
  }
  if (opts.p) base["budget"]["p"] = p_to_json(parse_p(*opts.p));
  if (opts.A) base["budget"]["A"] = *opts.A;
  ProblemFile pf = parse_problem(base);
  pf.seed = opts.seed;
  pf.tol_I = opts.tol_I;
  return pf;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string input_hash(const json& problem) { return "fnv1a64:" + hex64(fnv1a(problem.dump())); }

inline json vec_json(const Vec& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

// NaN and infinities have no JSON literal; nlohmann writes them as null.
inline json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline SampleStrategy default_strategy(const LpBudget& budget) {
  return budget.is_one() ? SampleStrategy::dirichlet_simplex : SampleStrategy::random_sphere;
}

inline json oracle_json(const SampleConfig& cfg, const BruteForceResult& bf, double reference) {
  return json{{"strategy", to_string(cfg.strategy)},
              {"count", cfg.count},
              {"seed", cfg.seed},
              {"best_lambda", num(bf.best_lambda)},
              {"best_index", bf.best_index},
              {"gap", num(reference - bf.best_lambda)}};
}

struct SolveOutcome {
  json certificate;
  ExtremalResult result;
  int exit_code = kOk;
};

/// Solve, run the oracle, and assemble the certificate. SolverError and
/// InputError propagate.
inline SolveOutcome run_solve(const ProblemFile& pf, unsigned jobs, Index samples) {
  SolveOptions so;
  so.j.seed = pf.seed;
  so.t.seed = pf.seed;
  so.t.tol_I = pf.tol_I;
  ExtremalResult r = solve(pf.space, pf.form, pf.budget, so);

  // Every sampled V lies in the ball, so lambda_1(V) <= min J = j_value at a true optimum.
  const SampleConfig cfg{pf.seed, samples, default_strategy(pf.budget)};
  const BruteForceResult bf = brute_force_sup(pf.space, pf.form, pf.budget, cfg, jobs);
  r.certificate.at_most("oracle_dominance", bf.best_lambda - r.j_value, 1e-8 * (1.0 + std::abs(r.j_value)));

  json checks = json::array();
  for (const Check& c : r.certificate.items())
    checks.push_back({{"name", c.name}, {"value", num(c.value)}, {"threshold", num(c.threshold)}, {"passed", c.passed}});
  json residuals = json::object();
  for (const auto& [k, v] : r.residuals) residuals[k] = num(v);
  json bounds = nullptr;
  if (r.bounds) {
    const LinfBoundReport& b = *r.bounds;
    bounds = {{"u_inf", num(b.u_inf)}, {"u_bound", num(b.u_bound)}, {"u_slack", num(b.u_slack)},
              {"v_inf", num(b.v_inf)}, {"v_bound", num(b.v_bound)}, {"v_slack", num(b.v_slack)},
              {"valid", b.valid}};
  }

  json cert = {{"version", kVersion},
               {"input_hash", input_hash(pf.problem)},
               {"problem", pf.problem},
               {"seed", pf.seed},
               {"method", r.method},
               {"lambda", num(r.lambda)},
               {"j_value", num(r.j_value)},
               {"u", vec_json(r.u)},
               {"V", vec_json(r.V)},
               {"residuals", residuals},
               {"bounds", bounds},
               {"converged", r.converged},
               {"iterations", r.iterations},
               {"checks", checks},
               {"oracle", oracle_json(cfg, bf, r.j_value)},
               {"valid", r.valid()}};
  if (r.p1) {
    const P1Details& d = *r.p1;
    const ComplementarityReport& c = d.complementarity;
    cert["I"] = d.I.indices;
    cert["m_I"] = num(d.I.measure);
    cert["tol_I"] = d.tol_I;
    cert["t_value"] = num(d.t_value);
    cert["vi_slack_min"] = num(d.vi_slack_min);
    cert["vi_slack_min_left_form"] = num(d.vi_slack_min_left_form);
    cert["vi_probe_count"] = d.vi_probe_count;
    cert["complementarity"] = {{"scale", num(c.scale)},
                               {"off_set_residual", num(c.off_set_residual)},
                               {"on_set_residual", num(c.on_set_residual)},
                               {"interior_energy", num(c.interior_energy)},
                               {"valid", c.valid()}};
    cert["regime_warning"] = d.regime_warning;
    cert["regime_notes"] = d.regime_notes;
    cert["set_size_tight"] = d.set_size_tight;
    cert["set_size_loose"] = d.set_size_loose;
    cert["kkt_potential"] = vec_json(d.kkt_potential);
    cert["kkt_lambda1"] = num(d.kkt_lambda1);
  }

  SolveOutcome out;
  out.exit_code = !r.converged ? kNotConverged : (r.valid() ? kOk : kInvalidCertificate);
  out.certificate = std::move(cert);
  out.result = std::move(r);
  return out;
}

inline std::string certificate_text(const json& cert) { return cert.dump(2) + "\n"; }

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
}

inline void report_failures(const SolveOutcome& o, std::ostream& log) {
  if (o.exit_code == kNotConverged) log << "solver did not converge\n";
  for (const std::string& f : o.result.certificate.failures()) log << "check failed: " << f << "\n";
  if (o.result.p1 && o.result.p1->regime_warning)
    for (const std::string& n : o.result.p1->regime_notes) log << "regime warning: " << n << "\n";
}

/// solve: writes <out>.cert.json. Exit 0 valid, 1 input error, 2 no
/// convergence, 3 converged with a failed check.
inline int cmd_solve(const BuilderSpec& spec, const RunOptions& opts, std::ostream& log) {
  try {
    const ProblemFile pf = build_problem(spec, opts);
    const SolveOutcome o = run_solve(pf, opts.jobs, opts.samples);
    const std::string path = opts.out + ".cert.json";
    write_text(path, certificate_text(o.certificate));
    log << "lambda = " << std::setprecision(15) << o.result.lambda << "  j_value = " << o.result.j_value
        << "  valid = " << (o.result.valid() ? "true" : "false") << "\n"
        << "wrote " << path << "\n";
    report_failures(o, log);
    return o.exit_code;
  } catch (const InputError& e) {
    log << "error: " << e.what() << "\n";
    return kInputFailure;
  } catch (const SolverError& e) {
    log << "error: " << e.what() << "\n";
    return kNotConverged;
  }
}

/// certify: re-solve the embedded problem with the recorded seed, tol_I and
/// oracle settings and compare the regenerated certificate byte for byte.
/// Exit 0 when identical and valid, 4 when the certificates differ.
inline int cmd_certify(const std::string& cert_path, unsigned jobs, std::ostream& log) {
  try {
    const json cert = read_json_file(cert_path);
    if (!cert.contains("problem") || !cert.contains("seed") || !cert.contains("oracle"))
      throw InputError("certificate lacks problem, seed or oracle fields");
    if (cert.value("version", std::string()) != kVersion)
      log << "note: certificate written by '" << cert.value("version", std::string("?")) << "'\n";
    ProblemFile pf = parse_problem(cert.at("problem"));
    if (input_hash(pf.problem) != cert.value("input_hash", std::string()))
      log << "note: input hash differs from the recorded one\n";
    pf.seed = cert.at("seed").get<std::uint64_t>();
    if (cert.contains("tol_I")) pf.tol_I = cert.at("tol_I").get<double>();
    const Index samples = cert.at("oracle").at("count").get<Index>();
    const SolveOutcome o = run_solve(pf, jobs, samples);
    const bool same = certificate_text(o.certificate) == certificate_text(cert);
    log << "re-solve " << (same ? "reproduces" : "DOES NOT reproduce") << " the certificate; valid = "
        << (o.result.valid() ? "true" : "false") << "\n";
    report_failures(o, log);
    if (!same) return kMismatch;
    return o.exit_code;
  } catch (const InputError& e) {
    log << "error: " << e.what() << "\n";
    return kInputFailure;
  } catch (const SolverError& e) {
    log << "error: " << e.what() << "\n";
    return kNotConverged;
  } catch (const json::exception& e) {
    log << "error: malformed certificate: " << e.what() << "\n";
    return kInputFailure;
  }
}

/// oracle: brute-force lower bound on the supremum, written to <out>.oracle.json.
inline int cmd_oracle(const BuilderSpec& spec, const RunOptions& opts, const std::optional<std::string>& strategy,
                      std::ostream& log) {
  try {
    const ProblemFile pf = build_problem(spec, opts);
    const SampleConfig cfg{pf.seed, opts.samples, strategy ? parse_strategy(*strategy) : default_strategy(pf.budget)};
    const BruteForceResult bf = brute_force_sup(pf.space, pf.form, pf.budget, cfg, opts.jobs);
    json rep = {{"version", kVersion},
                {"input_hash", input_hash(pf.problem)},
                {"problem", pf.problem},
                {"oracle", oracle_json(cfg, bf, kInf)},
                {"best_V", vec_json(bf.best_V)}};
    rep["oracle"].erase("gap");
    const std::string path = opts.out + ".oracle.json";
    write_text(path, rep.dump(2) + "\n");
    log << "best_lambda = " << std::setprecision(15) << bf.best_lambda << " over " << bf.count << " samples\n"
        << "wrote " << path << "\n";
    return kOk;
  } catch (const InputError& e) {
    log << "error: " << e.what() << "\n";
    return kInputFailure;
  }
}

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// export: CSV with header `index,m,u,V`, one row per vertex.
inline int cmd_export(const std::string& cert_path, const std::string& csv_path, std::ostream& log) {
  try {
    const json cert = read_json_file(cert_path);
    const json& m = cert.at("problem").at("space").at("m");
    const json& u = cert.at("u");
    const json& v = cert.at("V");
    if (m.size() != u.size() || m.size() != v.size()) throw InputError("certificate vectors have mismatched lengths");
    auto val = [](const json& x) { return x.is_null() ? std::string("nan") : format_double(x.get<double>()); };
    std::ostringstream os;
    os << "index,m,u,V\n";
    for (std::size_t i = 0; i < m.size(); ++i) os << i << ',' << val(m[i]) << ',' << val(u[i]) << ',' << val(v[i]) << '\n';
    write_text(csv_path, os.str());
    log << "wrote " << csv_path << " (" << m.size() << " rows)\n";
    return kOk;
  } catch (const InputError& e) {
    log << "error: " << e.what() << "\n";
    return kInputFailure;
  } catch (const json::exception& e) {
    log << "error: malformed certificate: " << e.what() << "\n";
    return kInputFailure;
  }
}

}  // namespace extremal::cli
