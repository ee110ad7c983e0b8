// sqdm-gp: experiment driver over the C interface of libsqdmgp.
#include "sqdmgp/sqdm_gp.h"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;

const char* const kFooter = R"(
Exit codes: 0 ok, 1 verification failure, 2 usage, configuration or I/O error.

Configuration file (scan -c), sections of "key = value" lines, '#' comments:
  [phantom]    kind = r1|r2, seed, nx, ny, pitch (nm), bumps, dir (load saved phantom)
               without seed each scan seed also seeds its phantom
  [scan]       models = none, sod-sw, sod-egp, sod-cluster, kronecker, fitc, ssgpr
               scan_times = 200, 400, 800 (s)   polarities = negative, positive
               seeds = 1-5 or 1, 2, 3
  [esc]        amplitude, frequency_hz, ki, lowpass_tau, highpass_tau, dt
  [optimizer]  max_cg_iters, armijo, shrink, max_backtracks, grad_tol, max_step
  [model]      window, sparse_fraction, egp_err_threshold, egp_var_threshold,
               k_clusters, seed, bootstrap_slowdown, lag_compensation,
               noise_prior_sd, enforce_budget
  [output]     images = true|false

Output files (scan -o DIR):
  mse.csv     model,polarity,scan_time_s,seed,mse,aborted
                one row per cell; mse is against the phantom (nan if aborted),
                aborted is 0 or 1
  timing.csv  model,polarity,scan_time_s,seed,line,compute_s,budget_s,fraction,locked
                one row per scan line; compute_s is the measured backward-pass
                time (wall clock), budget_s half the line period,
                fraction = compute_s / budget_s, locked is 0 or 1
  images/<model>_<polarity>_T<time>_s<seed>_image.txt   tracked bias (V)
  images/<model>_<polarity>_T<time>_s<seed>_lock.txt    dip lock per pixel (0/1)
  Matrices are text: "rows cols" then one row per line.
  Rows are ordered by model, polarity, scan time and seed as listed in the config.
)";

int report(sqdm_status s, const char* what) {
  std::cerr << "sqdm-gp: " << what << ": " << sqdm_last_error() << " (" << sqdm_status_string(s) << ")\n";
  return kExitUsage;
}

void print_progress(void*, const char* cell, double mse, int aborted, size_t done, size_t total) {
  std::fprintf(stderr, "[%zu/%zu] %s mse=%.4g%s\n", done, total, cell, mse, aborted ? " (aborted)" : "");
}

int cmd_scan(const std::string& cfg_path, const std::string& out_dir, int jobs, bool quiet) {
  sqdm_experiment* ex = nullptr;
  if (sqdm_status s = sqdm_experiment_load(cfg_path.c_str(), &ex); s != SQDM_OK) return report(s, cfg_path.c_str());
  size_t cells = 0;
  sqdm_experiment_cell_count(ex, &cells);
  if (!quiet) std::fprintf(stderr, "running %zu scans on %d job(s)\n", cells, jobs);
  const sqdm_status s = sqdm_experiment_run(ex, jobs, out_dir.c_str(), quiet ? nullptr : print_progress, nullptr);
  sqdm_experiment_free(ex);
  if (s != SQDM_OK) return report(s, "scan");
  return kExitOk;
}

int cmd_verify(bool inject_fault) {
  sqdm_verify_report* r = nullptr;
  if (sqdm_status s = sqdm_verify_run(inject_fault ? 1 : 0, &r); s != SQDM_OK) {
    report(s, "verify");
    return kExitVerifyFailed;
  }
  std::printf("%-48s %12s %9s  %s\n", "check", "max_err", "tol", "result");
  for (size_t i = 0; i < sqdm_verify_count(r); ++i) {
    const char* name = nullptr;
    double err = 0.0, tol = 0.0;
    int pass = 0;
    sqdm_verify_row(r, i, &name, &err, &tol, &pass);
    std::printf("%-48s %12.3e %9.0e  %s\n", name, err, tol, pass ? "PASS" : "FAIL");
  }
  const bool ok = sqdm_verify_all_pass(r) != 0;
  sqdm_verify_free(r);
  std::printf("%s\n", ok ? "all checks passed" : "verification FAILED");
  return ok ? kExitOk : kExitVerifyFailed;
}

int cmd_phantom(const std::string& kind, uint64_t seed, const std::string& out_dir) {
  sqdm_phantom* ph = nullptr;
  if (sqdm_status s = sqdm_phantom_create(kind.c_str(), seed, &ph); s != SQDM_OK) return report(s, "phantom");
  const sqdm_status s = sqdm_phantom_save(ph, out_dir.c_str());
  int nx = 0, ny = 0;
  sqdm_phantom_size(ph, &nx, &ny);
  sqdm_phantom_free(ph);
  if (s != SQDM_OK) return report(s, out_dir.c_str());
  std::printf("wrote %dx%d phantom to %s\n", nx, ny, out_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online sparse GP feedforward for simulated scanning quantum dot microscopy"};
  app.footer(kFooter);
  app.require_subcommand(1);
  app.set_version_flag("--version", sqdm_version());

  std::string cfg_path, scan_out;
  int jobs = 1;
  bool quiet = false;
  auto* scan = app.add_subcommand("scan", "Run a model x scan time x polarity x seed grid of simulated scans");
  scan->add_option("-c,--config", cfg_path, "Experiment configuration file")->required();
  scan->add_option("-o,--out", scan_out, "Output directory")->required();
  scan->add_option("-j,--jobs", jobs, "Scans run concurrently")->check(CLI::PositiveNumber);
  scan->add_flag("-q,--quiet", quiet, "No progress output");
  scan->footer(kFooter);

  bool inject = false;
  auto* verify = app.add_subcommand("verify", "Run the oracle suite and print max error against tolerance");
  verify->add_flag("--inject-fault", inject, "Flip the sign of the FITC correction term (negative test)");

  std::string kind, ph_out;
  uint64_t seed = 1;
  auto* phantom = app.add_subcommand("phantom", "Generate and save a synthetic phantom");
  phantom->add_option("--kind", kind, "r1 (63x63) or r2 (200x200)")->required()->check(CLI::IsMember({"r1", "r2"}));
  phantom->add_option("--seed", seed, "Generator seed");
  phantom->add_option("-o,--out", ph_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (scan->parsed()) return cmd_scan(cfg_path, scan_out, jobs, quiet);
  if (verify->parsed()) return cmd_verify(inject);
  return cmd_phantom(kind, seed, ph_out);
}
