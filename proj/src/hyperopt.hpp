// Online hyperparameter learning: Polak-Ribiere conjugate gradient ascent on
// the log marginal likelihood of whichever GP approximation is active.
#pragma once

#include "gp_exact.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sqdm {

struct OptimizerConfig {
  int max_cg_iters = 20;
  double armijo = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 12;
  double grad_tol = 1e-6;
  /// Largest step (Euclidean, in packed parameter space) tried by the line search.
  double max_step = 2.0;
  /// Optional wall-clock limit per optimize call; checked between iterations.
  std::optional<double> budget_s;

  void validate() const;
};

struct GaussianPrior {
  double mean = 0.0;
  double variance = 1.0;
};

/// Optional Gaussian priors on packed parameters (log-domain for positives).
struct HyperPrior {
  std::vector<std::optional<GaussianPrior>> per_param;

  bool empty() const;
  /// Adds log prior density and its gradient in place.
  void apply(const Vector& x, double& value, Vector& grad) const;
};

struct ValueGrad {
  double value = 0.0;
  Vector grad;
};

/// Objective to maximise. Throws on evaluation failure (e.g. factorisation).
using Objective = std::function<ValueGrad(const Vector&)>;

struct OptimizeResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  std::vector<double> trace;  // objective after each accepted step, starting with the initial value
  std::string stop_reason;
};

/// Nonlinear CG with Polak-Ribiere directions (restart on beta < 0) and an
/// Armijo backtracking line search seeded by a secant step. Every accepted
/// step satisfies the Armijo condition, so `trace` is non-decreasing.
OptimizeResult maximize_cg(const Objective& f, const Vector& x0, const OptimizerConfig& cfg,
                           const HyperPrior* prior = nullptr);

enum class GpMethod { Exact, Fitc, Ssgpr, Kronecker };

const char* to_string(GpMethod m);
ParamLayout layout_for(GpMethod method, KernelKind kind);

/// Log marginal likelihood + gradient of a method on fixed data, as a
/// function of the packed parameters. `shape` fixes sizes and non-learned fields.
Objective likelihood_objective(GpMethod method, KernelKind kind, const HyperParams& shape, const Inputs& x,
                               const Vector& y);

struct AdaptResult {
  HyperParams hyper;
  OptimizeResult opt;
  bool fell_back = false;
};

/// Runs the optimiser from h0 on (x, y). Never throws: on a failing start
/// point or a zero budget the initial parameters come back unchanged.
AdaptResult optimize_hyper(GpMethod method, KernelKind kind, const HyperParams& h0, const Inputs& x, const Vector& y,
                           const OptimizerConfig& cfg, const HyperPrior* prior = nullptr);

/// Data-driven start for a fresh scan: c = mean, sf = std (floored),
/// l = 5 pixel pitches, sn = 0.01 sf.
HyperParams initial_hyper(const Vector& first_line_targets, double pitch, int n_lengths);

}  // namespace sqdm
