// Two-degree-of-freedom scan controller: a GP feedforward predicts the next
// line's bias voltages, the extremum seeking loop corrects around them.
#pragma once

#include "hyperopt.hpp"
#include "sparse_fitc.hpp"
#include "sparse_kron.hpp"
#include "sparse_sod.hpp"
#include "sparse_ssgpr.hpp"
#include "sqdm_plant.hpp"

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sqdm {

enum class ModelKind { None, SodSW, SodEGP, SodCluster, Kronecker, Fitc, Ssgpr };

const char* to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

/// Scan lines in the active window: 5 for FITC/SSGPR, 2 for SoD/Kronecker, 1 for none.
int window_lines(ModelKind k);
/// Inducing inputs / frequencies for n training points: ceil(n * fraction).
Eigen::Index sparse_size(Eigen::Index n, double fraction = 1.0 / 3.0);
/// Backward-pass compute budget: half of one line period.
double line_budget(double total_time_s, int ny);

struct ScanConfig {
  double total_time_s = 1200.0;
  Polarity polarity = Polarity::Negative;
  ModelKind model = ModelKind::None;
  EscConfig esc;
  OptimizerConfig opt;
  int window_override = 0;             // 0: window_lines(model)
  double sparse_fraction = 1.0 / 3.0;  // m / n for FITC and SSGPR
  double egp_err_threshold = 0.005;
  double egp_var_threshold = 2.5e-5;
  int k_clusters = 2;
  std::uint64_t model_seed = 7;        // SSGPR frequencies, k-means starts
  double bootstrap_slowdown = 10.0;    // first line runs this much slower
  /// Train the feedforward on the gradient-corrected dip estimate instead of
  /// the tracked bias. The image always holds the tracked bias.
  bool lag_compensation = true;
  /// Standard deviation (log domain) of the Gaussian prior that centres
  /// log sn on the noise level seen in the window; 0 disables it.
  double noise_prior_sd = 0.5;
  /// Caps each optimiser call at the line's backward budget (wall clock, so
  /// results stop being reproducible across machines).
  bool enforce_budget = false;

  /// Test hook: use these rows (ny x nx) as the feedforward instead of a model.
  std::optional<Matrix> oracle_feedforward;

  int window() const { return window_override > 0 ? window_override : window_lines(model); }
  void validate(const DipShape& dip) const;
};

struct LinePrediction {
  int line = 0;
  Vector mean;      // feedforward voltage per column
  Vector variance;  // predictive variance (zero for the copy baseline)
};

/// Per-scan feedforward state: the active window, current hyperparameters
/// and the fitted approximation. Hyperparameters are warm started from line
/// to line.
class LineModel {
 public:
  LineModel(ModelKind kind, const ScanConfig& cfg, const GridSpec& grid);

  ModelKind kind() const { return kind_; }
  bool fitted() const { return fitted_; }
  const HyperParams& hyper() const { return hyper_; }
  /// Size of the training set behind the last fit.
  Eigen::Index training_size() const { return train_x_.rows(); }
  /// Size of the inducing / frequency set (0 for the exact models).
  Eigen::Index sparse_count() const { return hyper_.points.rows(); }
  const std::vector<OptimizeResult>& optimizer_history() const { return history_; }
  int fallbacks() const { return fallbacks_; }

  /// Adds the tracked values of line j, adapts the hyperparameters and refits.
  void observe_line(int j, const Vector& tracked);
  /// Posterior mean at line j + 1. Throws std::logic_error before the first fit.
  LinePrediction predict(int j) const;

 private:
  void adapt_and_fit();
  void recentre(double noise);
  void fit_current();
  OptimizerConfig opt_config() const;

  ModelKind kind_;
  ScanConfig cfg_;
  GridSpec grid_;
  std::deque<std::pair<int, Vector>> lines_;
  Inputs train_x_;
  Vector train_y_;
  HyperParams hyper_;
  bool have_hyper_ = false;
  bool fitted_ = false;
  int fallbacks_ = 0;
  std::vector<OptimizeResult> history_;

  // fitted state, one of these per kind
  std::optional<FitState> exact_;
  std::optional<FitcState> fitc_;
  std::optional<SsgprState> ssgpr_;
  std::optional<KronState> kron_;
  ActiveSet egp_set_;
  std::optional<Clusters> clusters_;
  std::vector<FitState> cluster_fits_;
  Vector last_row_;
};

LinePrediction predict_next_line(const LineModel& model, int j);

/// Optional sample log of a scan: feedforward, feedback and plant input.
struct ScanTrace {
  std::size_t limit = 1'000'000;
  std::vector<double> ff, fb, applied;
};

ScanResult run_scan(const Phantom& phantom, const ScanConfig& cfg, std::uint64_t seed, ScanTrace* trace = nullptr);

/// MSE of the scanned image against the phantom; NaN for aborted scans.
double scan_mse(const ScanResult& r, const Phantom& phantom, Polarity pol);

struct LineTiming {
  int line = 0;
  double compute_s = 0.0;
  double budget_s = 0.0;
  double fraction = 0.0;
  bool locked = true;
};

struct BudgetReport {
  std::vector<LineTiming> lines;
  double budget_s = 0.0;
  double avg_compute_s = 0.0;
  double max_compute_s = 0.0;
  double avg_fraction = 0.0;
  double max_fraction = 0.0;
  /// Time the scan would stall because computation overran the budget.
  double overrun_s = 0.0;
};

BudgetReport compute_budget_report(const ScanResult& r, const ScanConfig& cfg);

}  // namespace sqdm
