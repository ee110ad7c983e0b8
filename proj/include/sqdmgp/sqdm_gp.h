/* C interface to the sqdm-gp library: online sparse GP regression and a
 * simulated two-degree-of-freedom scan controller.
 *
 * All handles are opaque. Functions return an sqdm_status; on failure the
 * message is available from sqdm_last_error() on the calling thread until
 * the next failing call. Matrices are passed row-major, positions as
 * (x, y) pairs in nanometres. */
#ifndef SQDMGP_SQDM_GP_H
#define SQDMGP_SQDM_GP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SQDM_API __declspec(dllexport)
#else
#define SQDM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sqdm_status {
  SQDM_OK = 0,
  SQDM_ERR_ARGUMENT = 1,  /* invalid argument or null pointer */
  SQDM_ERR_DIMENSION = 2, /* mismatched sizes */
  SQDM_ERR_NUMERIC = 3,   /* factorization failure */
  SQDM_ERR_CONFIG = 4,    /* invalid experiment configuration */
  SQDM_ERR_IO = 5,        /* file could not be read or written */
  SQDM_ERR_STATE = 6,     /* handle not ready for this call */
  SQDM_ERR_INTERNAL = 7
} sqdm_status;

typedef enum sqdm_polarity { SQDM_NEGATIVE = 0, SQDM_POSITIVE = 1 } sqdm_polarity;

typedef enum sqdm_gp_method {
  SQDM_GP_EXACT = 0,
  SQDM_GP_FITC = 1,
  SQDM_GP_SSGPR = 2,
  SQDM_GP_KRONECKER = 3
} sqdm_gp_method;

typedef enum sqdm_kernel { SQDM_SE_ISO = 0, SQDM_SE_ARD = 1, SQDM_SPARSE_SPECTRUM = 2 } sqdm_kernel;

SQDM_API const char* sqdm_last_error(void);
SQDM_API const char* sqdm_status_string(sqdm_status s);
SQDM_API const char* sqdm_version(void);

/* ---- phantoms ---------------------------------------------------------- */

typedef struct sqdm_phantom sqdm_phantom;

/* kind: "r1" (63 x 63) or "r2" (200 x 200). */
SQDM_API sqdm_status sqdm_phantom_create(const char* kind, uint64_t seed, sqdm_phantom** out);
SQDM_API sqdm_status sqdm_phantom_load(const char* dir, sqdm_phantom** out);
/* Writes v_minus.txt and v_plus.txt into dir (created if missing). */
SQDM_API sqdm_status sqdm_phantom_save(const sqdm_phantom* ph, const char* dir);
SQDM_API sqdm_status sqdm_phantom_size(const sqdm_phantom* ph, int* nx, int* ny);
/* Copies the ny x nx map of the chosen dip into out. */
SQDM_API sqdm_status sqdm_phantom_map(const sqdm_phantom* ph, sqdm_polarity pol, double* out, size_t len);
SQDM_API void sqdm_phantom_free(sqdm_phantom* ph);

/* ---- GP regression ----------------------------------------------------- */

typedef struct sqdm_gp sqdm_gp;

/* Valid pairs: exact with any kernel, FITC with SE kernels, SSGPR with the
 * sparse spectrum kernel, Kronecker with SE-ARD on full grids. */
SQDM_API sqdm_status sqdm_gp_create(sqdm_gp_method method, sqdm_kernel kernel, sqdm_gp** out);
/* lengths: 1 entry (iso, sparse spectrum) or 2 (ARD). */
SQDM_API sqdm_status sqdm_gp_set_hyper(sqdm_gp* gp, double mean_c, double sigma_f, const double* lengths,
                                       int n_lengths, double sigma_n);
/* Inducing inputs (FITC) or spectral frequencies (SSGPR), m (x, y) pairs. */
SQDM_API sqdm_status sqdm_gp_set_points(sqdm_gp* gp, const double* xy, int m);
SQDM_API sqdm_status sqdm_gp_fit(sqdm_gp* gp, const double* xy, const double* y, int n);
/* Maximizes the log marginal likelihood from the current hyperparameters and refits. */
SQDM_API sqdm_status sqdm_gp_optimize(sqdm_gp* gp, int max_iters);
SQDM_API sqdm_status sqdm_gp_log_likelihood(const sqdm_gp* gp, double* out);
/* variance may be null. */
SQDM_API sqdm_status sqdm_gp_predict(const sqdm_gp* gp, const double* xy, int n, double* mean, double* variance);
SQDM_API sqdm_status sqdm_gp_get_hyper(const sqdm_gp* gp, double* mean_c, double* sigma_f, double* lengths,
                                       int n_lengths, double* sigma_n);
SQDM_API void sqdm_gp_free(sqdm_gp* gp);

/* ---- single scans ------------------------------------------------------ */

typedef struct sqdm_scan sqdm_scan;

/* model: none, sod-sw, sod-egp, sod-cluster, kronecker, fitc or ssgpr.
 * Uses the library defaults for the controller and optimizer. */
SQDM_API sqdm_status sqdm_scan_run(const sqdm_phantom* ph, const char* model, sqdm_polarity pol, double scan_time_s,
                                   uint64_t seed, sqdm_scan** out);
/* NaN for aborted scans. */
SQDM_API sqdm_status sqdm_scan_mse(const sqdm_scan* scan, double* out);
SQDM_API sqdm_status sqdm_scan_aborted(const sqdm_scan* scan, int* aborted, int* abort_line);
SQDM_API sqdm_status sqdm_scan_image(const sqdm_scan* scan, double* out, size_t len);
SQDM_API sqdm_status sqdm_scan_budget(const sqdm_scan* scan, double* budget_s, double* avg_compute_s,
                                      double* max_fraction);
SQDM_API void sqdm_scan_free(sqdm_scan* scan);

/* ---- experiment grids -------------------------------------------------- */

typedef struct sqdm_experiment sqdm_experiment;

typedef void (*sqdm_progress_fn)(void* user, const char* cell, double mse, int aborted, size_t done, size_t total);

/* Parses a configuration file; SQDM_ERR_CONFIG carries "line N: ..." messages. */
SQDM_API sqdm_status sqdm_experiment_load(const char* path, sqdm_experiment** out);
SQDM_API sqdm_status sqdm_experiment_cell_count(const sqdm_experiment* ex, size_t* out);
/* Runs all cells on up to jobs threads and writes mse.csv, timing.csv and
 * images/ into out_dir. progress may be null. */
SQDM_API sqdm_status sqdm_experiment_run(sqdm_experiment* ex, int jobs, const char* out_dir, sqdm_progress_fn progress,
                                         void* user);
SQDM_API void sqdm_experiment_free(sqdm_experiment* ex);

SQDM_API const char* sqdm_mse_csv_header(void);
SQDM_API const char* sqdm_timing_csv_header(void);

/* ---- oracle suite ------------------------------------------------------ */

typedef struct sqdm_verify_report sqdm_verify_report;

/* fault_flip_lambda != 0 injects a sign flip into the FITC correction term. */
SQDM_API sqdm_status sqdm_verify_run(int fault_flip_lambda, sqdm_verify_report** out);
SQDM_API size_t sqdm_verify_count(const sqdm_verify_report* r);
SQDM_API sqdm_status sqdm_verify_row(const sqdm_verify_report* r, size_t i, const char** name, double* max_err,
                                     double* tol, int* pass);
SQDM_API int sqdm_verify_all_pass(const sqdm_verify_report* r);
SQDM_API void sqdm_verify_free(sqdm_verify_report* r);

#ifdef __cplusplus
}
#endif

#endif /* SQDMGP_SQDM_GP_H */
