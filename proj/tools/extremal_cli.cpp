#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "extremal/cli.hpp"

namespace {

void add_problem_flags(CLI::App* cmd, extremal::cli::BuilderSpec& spec, extremal::cli::RunOptions& opts,
                       std::string& p, double& A) {
  cmd->add_option("--builder", spec.builder, "Instance source")
      ->check(CLI::IsMember({"path", "grid2d", "interval", "file"}));
  cmd->add_option("--problem", spec.problem_path, "Problem JSON (with --builder file)");
  cmd->add_option("--n", spec.n, "Vertices for path and interval builders");
  cmd->add_option("--nx", spec.nx, "Grid columns");
  cmd->add_option("--ny", spec.ny, "Grid rows");
  cmd->add_flag("--grounded", spec.grounded, "Ground the ends / boundary");
  cmd->add_option("--p", p, "Exponent, a number >= 1 or inf");
  cmd->add_option("--A", A, "Budget radius");
  cmd->add_option("--seed", opts.seed, "Seed for every random choice");
  cmd->add_option("--tol-i", opts.tol_I, "Coincidence-set threshold (p = 1)");
  cmd->add_option("--jobs", opts.jobs, "Oracle worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--samples", opts.samples, "Oracle sample count")->check(CLI::PositiveNumber);
  cmd->add_option("--out", opts.out, "Output prefix");
}

}  // namespace

int main(int argc, char** argv) {
  namespace xc = extremal::cli;
  CLI::App app{"Maximal first eigenvalue of L + V over an L^p budget ball"};
  app.set_version_flag("--version", std::string(xc::kVersion));
  app.require_subcommand(1);

  xc::BuilderSpec spec;
  xc::RunOptions opts;
  std::string p;
  double A = 0.0;
  std::string strategy;
  std::string cert_path;
  std::string csv_path;
  unsigned certify_jobs = 1;

  CLI::App* solve = app.add_subcommand("solve", "Solve and write <out>.cert.json");
  add_problem_flags(solve, spec, opts, p, A);

  CLI::App* oracle = app.add_subcommand("oracle", "Brute-force lower bound, written to <out>.oracle.json");
  add_problem_flags(oracle, spec, opts, p, A);
  oracle->add_option("--strategy", strategy, "random_sphere, corners, dirichlet_simplex or structured");

  CLI::App* certify = app.add_subcommand("certify", "Re-solve a certificate and compare");
  certify->add_option("certificate", cert_path, "Certificate JSON")->required();
  certify->add_option("--jobs", certify_jobs, "Oracle worker threads")->check(CLI::PositiveNumber);

  CLI::App* exporter = app.add_subcommand("export", "Write index,m,u,V CSV from a certificate");
  exporter->add_option("certificate", cert_path, "Certificate JSON")->required();
  exporter->add_option("--out", csv_path, "CSV path (default: certificate path with .csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : xc::kInputFailure;
  }

  auto finish_flags = [&](CLI::App* cmd) {
    if (cmd->count("--p")) opts.p = p;
    if (cmd->count("--A")) opts.A = A;
  };

  if (solve->parsed()) {
    finish_flags(solve);
    return xc::cmd_solve(spec, opts, std::cerr);
  }
  if (oracle->parsed()) {
    finish_flags(oracle);
    std::optional<std::string> s;
    if (!strategy.empty()) s = strategy;
    return xc::cmd_oracle(spec, opts, s, std::cerr);
  }
  if (certify->parsed()) return xc::cmd_certify(cert_path, certify_jobs, std::cerr);
  if (exporter->parsed()) {
    if (csv_path.empty()) {
      csv_path = cert_path;
      const std::string suffix = ".cert.json";
      if (csv_path.size() > suffix.size() && csv_path.ends_with(suffix))
        csv_path.erase(csv_path.size() - suffix.size());
      csv_path += ".csv";
    }
    return xc::cmd_export(cert_path, csv_path, std::cerr);
  }
  return xc::kInputFailure;
}
