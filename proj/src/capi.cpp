#include "sqdmgp/sqdm_gp.h"

#include "experiments.hpp"
#include "gp_exact.hpp"
#include "hyperopt.hpp"
#include "sparse_fitc.hpp"
#include "sparse_kron.hpp"
#include "sparse_ssgpr.hpp"
#include "verify.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>

using namespace sqdm;

struct sqdm_phantom {
  Phantom ph;
};

struct sqdm_gp {
  GpMethod method = GpMethod::Exact;
  KernelKind kind = KernelKind::SEIso;
  HyperParams h;
  bool have_hyper = false;
  Inputs x;
  Vector y;
  std::optional<FitState> exact;
  std::optional<FitcState> fitc;
  std::optional<SsgprState> ssgpr;
  std::optional<KronState> kron;
  bool fitted() const { return exact || fitc || ssgpr || kron; }
};

struct sqdm_scan {
  ScanResult r;
  double mse = 0.0;
  BudgetReport report;
};

struct sqdm_experiment {
  ExperimentConfig cfg;
};

struct sqdm_verify_report {
  std::vector<CheckRow> rows;
};

namespace {

thread_local std::string g_last_error;

struct ApiError {
  sqdm_status status;
  std::string msg;
};

[[noreturn]] void fail(sqdm_status s, std::string msg) { throw ApiError{s, std::move(msg)}; }

void need(const void* p, const char* what) {
  if (!p) fail(SQDM_ERR_ARGUMENT, std::string(what) + " is null");
}

// Runs f and maps exceptions to status codes; plain runtime errors map to
// `runtime` (I/O for the file-facing calls).
template <typename F>
sqdm_status guard(F&& f, sqdm_status runtime = SQDM_ERR_INTERNAL) {
  try {
    f();
    return SQDM_OK;
  } catch (const ApiError& e) {
    g_last_error = e.msg;
    return e.status;
  } catch (const ConfigError& e) {
    g_last_error = e.what();
    return SQDM_ERR_CONFIG;
  } catch (const DimensionError& e) {
    g_last_error = e.what();
    return SQDM_ERR_DIMENSION;
  } catch (const NumericError& e) {
    g_last_error = e.what();
    return SQDM_ERR_NUMERIC;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return SQDM_ERR_IO;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return SQDM_ERR_ARGUMENT;
  } catch (const std::logic_error& e) {
    g_last_error = e.what();
    return SQDM_ERR_STATE;
  } catch (const std::runtime_error& e) {
    g_last_error = e.what();
    return runtime;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SQDM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SQDM_ERR_INTERNAL;
  }
}

Inputs to_inputs(const double* xy, int n) {
  Inputs x(n, 2);
  for (int i = 0; i < n; ++i) x.row(i) << xy[2 * i], xy[2 * i + 1];
  return x;
}

void copy_rowmajor(const Matrix& m, double* out, size_t len) {
  need(out, "out");
  if (len < static_cast<size_t>(m.size())) fail(SQDM_ERR_DIMENSION, "output buffer too small");
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r * m.cols() + c] = m(r, c);
}

Polarity to_polarity(sqdm_polarity p) {
  if (p == SQDM_NEGATIVE) return Polarity::Negative;
  if (p == SQDM_POSITIVE) return Polarity::Positive;
  fail(SQDM_ERR_ARGUMENT, "unknown polarity");
}

void refit(sqdm_gp* gp) {
  gp->exact.reset();
  gp->fitc.reset();
  gp->ssgpr.reset();
  gp->kron.reset();
  switch (gp->method) {
    case GpMethod::Exact: gp->exact = fit(gp->kind, gp->h, gp->x, gp->y); break;
    case GpMethod::Fitc: gp->fitc = fitc_fit(gp->kind, gp->h, gp->x, gp->y); break;
    case GpMethod::Ssgpr: gp->ssgpr = ssgpr_fit(gp->h, gp->x, gp->y); break;
    case GpMethod::Kronecker: gp->kron = kron_fit(gp->h, gp->x, gp->y); break;
  }
}

}  // namespace

extern "C" {

const char* sqdm_last_error(void) { return g_last_error.c_str(); }

const char* sqdm_status_string(sqdm_status s) {
  switch (s) {
    case SQDM_OK: return "ok";
    case SQDM_ERR_ARGUMENT: return "invalid argument";
    case SQDM_ERR_DIMENSION: return "dimension mismatch";
    case SQDM_ERR_NUMERIC: return "numerical failure";
    case SQDM_ERR_CONFIG: return "configuration error";
    case SQDM_ERR_IO: return "i/o error";
    case SQDM_ERR_STATE: return "invalid state";
    case SQDM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* sqdm_version(void) { return "0.1.0"; }

sqdm_status sqdm_phantom_create(const char* kind, uint64_t seed, sqdm_phantom** out) {
  return guard([&] {
    need(kind, "kind");
    need(out, "out");
    *out = new sqdm_phantom{make_phantom(phantom_kind_from_string(kind), seed)};
  });
}

sqdm_status sqdm_phantom_load(const char* dir, sqdm_phantom** out) {
  return guard(
      [&] {
        need(dir, "dir");
        need(out, "out");
        *out = new sqdm_phantom{load_phantom(dir)};
      },
      SQDM_ERR_IO);
}

sqdm_status sqdm_phantom_save(const sqdm_phantom* ph, const char* dir) {
  return guard(
      [&] {
        need(ph, "phantom");
        need(dir, "dir");
        save_phantom(ph->ph, dir);
      },
      SQDM_ERR_IO);
}

sqdm_status sqdm_phantom_size(const sqdm_phantom* ph, int* nx, int* ny) {
  return guard([&] {
    need(ph, "phantom");
    if (nx) *nx = ph->ph.grid.nx;
    if (ny) *ny = ph->ph.grid.ny;
  });
}

sqdm_status sqdm_phantom_map(const sqdm_phantom* ph, sqdm_polarity pol, double* out, size_t len) {
  return guard([&] {
    need(ph, "phantom");
    copy_rowmajor(ph->ph.map(to_polarity(pol)), out, len);
  });
}

void sqdm_phantom_free(sqdm_phantom* ph) { delete ph; }

sqdm_status sqdm_gp_create(sqdm_gp_method method, sqdm_kernel kernel, sqdm_gp** out) {
  return guard([&] {
    need(out, "out");
    auto gp = std::make_unique<sqdm_gp>();
    switch (kernel) {
      case SQDM_SE_ISO: gp->kind = KernelKind::SEIso; break;
      case SQDM_SE_ARD: gp->kind = KernelKind::SEArd; break;
      case SQDM_SPARSE_SPECTRUM: gp->kind = KernelKind::SparseSpectrum; break;
      default: fail(SQDM_ERR_ARGUMENT, "unknown kernel");
    }
    switch (method) {
      case SQDM_GP_EXACT: gp->method = GpMethod::Exact; break;
      case SQDM_GP_FITC:
        if (gp->kind == KernelKind::SparseSpectrum) fail(SQDM_ERR_ARGUMENT, "FITC needs an SE kernel");
        gp->method = GpMethod::Fitc;
        break;
      case SQDM_GP_SSGPR:
        if (gp->kind != KernelKind::SparseSpectrum) fail(SQDM_ERR_ARGUMENT, "SSGPR needs the sparse spectrum kernel");
        gp->method = GpMethod::Ssgpr;
        break;
      case SQDM_GP_KRONECKER:
        if (gp->kind != KernelKind::SEArd) fail(SQDM_ERR_ARGUMENT, "Kronecker needs the SE-ARD kernel");
        gp->method = GpMethod::Kronecker;
        break;
      default: fail(SQDM_ERR_ARGUMENT, "unknown method");
    }
    *out = gp.release();
  });
}

sqdm_status sqdm_gp_set_hyper(sqdm_gp* gp, double mean_c, double sigma_f, const double* lengths, int n_lengths,
                              double sigma_n) {
  return guard([&] {
    need(gp, "gp");
    need(lengths, "lengths");
    if (n_lengths != expected_lengths(gp->kind)) fail(SQDM_ERR_DIMENSION, "wrong number of length scales");
    if (!(sigma_f > 0.0) || !(sigma_n > 0.0)) fail(SQDM_ERR_ARGUMENT, "sigma_f and sigma_n must be positive");
    HyperParams h;
    h.mean_c = mean_c;
    h.log_sigma_f = std::log(sigma_f);
    h.log_lengths = Vector(n_lengths);
    for (int d = 0; d < n_lengths; ++d) {
      if (!(lengths[d] > 0.0)) fail(SQDM_ERR_ARGUMENT, "length scales must be positive");
      h.log_lengths(d) = std::log(lengths[d]);
    }
    h.log_sigma_n = std::log(sigma_n);
    h.points = gp->h.points;
    gp->h = gp->method == GpMethod::Kronecker ? kron_hyper_from_ard(h) : h;
    gp->have_hyper = true;
    if (gp->fitted()) refit(gp);
  });
}

sqdm_status sqdm_gp_set_points(sqdm_gp* gp, const double* xy, int m) {
  return guard([&] {
    need(gp, "gp");
    need(xy, "xy");
    if (m < 1) fail(SQDM_ERR_DIMENSION, "need at least one point");
    if (gp->method != GpMethod::Fitc && gp->method != GpMethod::Ssgpr && gp->kind != KernelKind::SparseSpectrum)
      fail(SQDM_ERR_ARGUMENT, "this model has no inducing inputs or frequencies");
    gp->h.points = to_inputs(xy, m);
    if (gp->fitted()) refit(gp);
  });
}

sqdm_status sqdm_gp_fit(sqdm_gp* gp, const double* xy, const double* y, int n) {
  return guard([&] {
    need(gp, "gp");
    need(xy, "xy");
    need(y, "y");
    if (n < 1) fail(SQDM_ERR_DIMENSION, "need at least one training point");
    if (!gp->have_hyper) fail(SQDM_ERR_STATE, "set hyperparameters before fitting");
    gp->x = to_inputs(xy, n);
    gp->y = Eigen::Map<const Vector>(y, n);
    refit(gp);
  });
}

sqdm_status sqdm_gp_optimize(sqdm_gp* gp, int max_iters) {
  return guard([&] {
    need(gp, "gp");
    if (!gp->fitted()) fail(SQDM_ERR_STATE, "fit before optimizing");
    OptimizerConfig cfg;
    cfg.max_cg_iters = max_iters;
    cfg.validate();
    const AdaptResult r = optimize_hyper(gp->method, gp->kind, gp->h, gp->x, gp->y, cfg);
    gp->h = r.hyper;
    refit(gp);
  });
}

sqdm_status sqdm_gp_log_likelihood(const sqdm_gp* gp, double* out) {
  return guard([&] {
    need(gp, "gp");
    need(out, "out");
    if (gp->exact) *out = log_likelihood(*gp->exact);
    else if (gp->fitc) *out = fitc_log_likelihood(*gp->fitc);
    else if (gp->ssgpr) *out = ssgpr_log_likelihood(*gp->ssgpr);
    else if (gp->kron) *out = kron_log_likelihood(*gp->kron);
    else fail(SQDM_ERR_STATE, "model is not fitted");
  });
}

sqdm_status sqdm_gp_predict(const sqdm_gp* gp, const double* xy, int n, double* mean, double* variance) {
  return guard([&] {
    need(gp, "gp");
    need(xy, "xy");
    need(mean, "mean");
    if (n < 0) fail(SQDM_ERR_DIMENSION, "negative test count");
    if (!gp->fitted()) fail(SQDM_ERR_STATE, "model is not fitted");
    const Inputs t = to_inputs(xy, n);
    GpPosterior post;
    if (!variance) {
      if (gp->exact) post.mean = predict_mean(*gp->exact, t);
      else if (gp->fitc) post.mean = fitc_predict_mean(*gp->fitc, t);
      else if (gp->ssgpr) post.mean = ssgpr_predict_mean(*gp->ssgpr, t);
      else post.mean = kron_predict_mean(*gp->kron, t);
    } else {
      if (gp->exact) post = predict(*gp->exact, t);
      else if (gp->fitc) post = fitc_predict(*gp->fitc, t);
      else if (gp->ssgpr) post = ssgpr_predict(*gp->ssgpr, t);
      else post = kron_predict(*gp->kron, t);
      const Vector v = post.variance();
      std::memcpy(variance, v.data(), sizeof(double) * static_cast<size_t>(n));
    }
    std::memcpy(mean, post.mean.data(), sizeof(double) * static_cast<size_t>(n));
  });
}

sqdm_status sqdm_gp_get_hyper(const sqdm_gp* gp, double* mean_c, double* sigma_f, double* lengths, int n_lengths,
                              double* sigma_n) {
  return guard([&] {
    need(gp, "gp");
    if (!gp->have_hyper) fail(SQDM_ERR_STATE, "hyperparameters not set");
    const HyperParams h = gp->method == GpMethod::Kronecker ? ard_hyper_from_kron(gp->h) : gp->h;
    if (mean_c) *mean_c = h.mean_c;
    if (sigma_f) *sigma_f = h.sigma_f();
    if (sigma_n) *sigma_n = h.sigma_n();
    if (lengths) {
      if (n_lengths != h.log_lengths.size()) fail(SQDM_ERR_DIMENSION, "wrong number of length scales");
      for (int d = 0; d < n_lengths; ++d) lengths[d] = h.length(d);
    }
  });
}

void sqdm_gp_free(sqdm_gp* gp) { delete gp; }

sqdm_status sqdm_scan_run(const sqdm_phantom* ph, const char* model, sqdm_polarity pol, double scan_time_s,
                          uint64_t seed, sqdm_scan** out) {
  return guard([&] {
    need(ph, "phantom");
    need(model, "model");
    need(out, "out");
    ScanConfig cfg;
    cfg.model = model_kind_from_string(model);
    cfg.polarity = to_polarity(pol);
    cfg.total_time_s = scan_time_s;
    auto s = std::make_unique<sqdm_scan>();
    s->r = run_scan(ph->ph, cfg, seed);
    s->mse = scan_mse(s->r, ph->ph, cfg.polarity);
    s->report = compute_budget_report(s->r, cfg);
    *out = s.release();
  });
}

sqdm_status sqdm_scan_mse(const sqdm_scan* scan, double* out) {
  return guard([&] {
    need(scan, "scan");
    need(out, "out");
    *out = scan->mse;
  });
}

sqdm_status sqdm_scan_aborted(const sqdm_scan* scan, int* aborted, int* abort_line) {
  return guard([&] {
    need(scan, "scan");
    if (aborted) *aborted = scan->r.aborted ? 1 : 0;
    if (abort_line) *abort_line = scan->r.abort_line;
  });
}

sqdm_status sqdm_scan_image(const sqdm_scan* scan, double* out, size_t len) {
  return guard([&] {
    need(scan, "scan");
    copy_rowmajor(scan->r.image, out, len);
  });
}

sqdm_status sqdm_scan_budget(const sqdm_scan* scan, double* budget_s, double* avg_compute_s, double* max_fraction) {
  return guard([&] {
    need(scan, "scan");
    if (budget_s) *budget_s = scan->report.budget_s;
    if (avg_compute_s) *avg_compute_s = scan->report.avg_compute_s;
    if (max_fraction) *max_fraction = scan->report.max_fraction;
  });
}

void sqdm_scan_free(sqdm_scan* scan) { delete scan; }

sqdm_status sqdm_experiment_load(const char* path, sqdm_experiment** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new sqdm_experiment{load_config(path)};
  });
}

sqdm_status sqdm_experiment_cell_count(const sqdm_experiment* ex, size_t* out) {
  return guard([&] {
    need(ex, "experiment");
    need(out, "out");
    *out = ex->cfg.cell_count();
  });
}

sqdm_status sqdm_experiment_run(sqdm_experiment* ex, int jobs, const char* out_dir, sqdm_progress_fn progress,
                                void* user) {
  return guard(
      [&] {
        need(ex, "experiment");
        need(out_dir, "out_dir");
        std::filesystem::create_directories(out_dir);
        ProgressFn fn;
        if (progress)
          fn = [&](const CellResult& r, std::size_t done, std::size_t total) {
            progress(user, cell_stem(r.cell).c_str(), r.mse, r.aborted ? 1 : 0, done, total);
          };
        const auto results = run_experiment(ex->cfg, jobs, out_dir, fn);
        write_tables(out_dir, results);
      },
      SQDM_ERR_IO);
}

void sqdm_experiment_free(sqdm_experiment* ex) { delete ex; }

const char* sqdm_mse_csv_header(void) { return kMseCsvHeader; }
const char* sqdm_timing_csv_header(void) { return kTimingCsvHeader; }

sqdm_status sqdm_verify_run(int fault_flip_lambda, sqdm_verify_report** out) {
  return guard([&] {
    need(out, "out");
    VerifyOptions opts;
    opts.fault_flip_lambda = fault_flip_lambda != 0;
    *out = new sqdm_verify_report{run_verify(opts)};
  });
}

size_t sqdm_verify_count(const sqdm_verify_report* r) { return r ? r->rows.size() : 0; }

sqdm_status sqdm_verify_row(const sqdm_verify_report* r, size_t i, const char** name, double* max_err, double* tol,
                            int* pass) {
  return guard([&] {
    need(r, "report");
    if (i >= r->rows.size()) fail(SQDM_ERR_ARGUMENT, "row index out of range");
    const CheckRow& row = r->rows[i];
    if (name) *name = row.name.c_str();
    if (max_err) *max_err = row.max_err;
    if (tol) *tol = row.tol;
    if (pass) *pass = row.pass ? 1 : 0;
  });
}

int sqdm_verify_all_pass(const sqdm_verify_report* r) { return r && all_pass(r->rows) ? 1 : 0; }

void sqdm_verify_free(sqdm_verify_report* r) { delete r; }

}  // extern "C"
