// Fully independent training conditional (FITC) sparse GP.
//
// The training covariance is approximated by Q + Lambda with
//   Q      = K(X,I) K_I^{-1} K(I,X)
//   Lambda = diag[K_y - Q]
// where I are m inducing inputs carried in HyperParams::points. Inducing
// inputs are ordinary hyperparameters; the likelihood gradient covers them.
#pragma once

#include "gp_exact.hpp"

namespace sqdm {

struct FitcOptions {
  /// Verification harness only: flips the sign of Q in Lambda.
  bool fault_flip_lambda = false;
};

struct FitcState {
  KernelKind kind = KernelKind::SEIso;
  HyperParams hyper;
  Inputs inputs;
  Vector residual;
  Matrix kuf;                    // m x n
  Eigen::LLT<Matrix> chol_uu;    // K_I + jitter
  Matrix v;                      // L_uu^{-1} K(I,X)
  Vector lambda;                 // n, floored at jitter
  std::vector<bool> clamped;     // Lambda entries held at the floor
  Eigen::LLT<Matrix> chol_a;     // I + V Lambda^{-1} V^T
  Vector weights;                // Sigma K(I,X) Lambda^{-1} y0
  double log_lik = 0.0;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index inducing_count() const { return hyper.points.rows(); }
};

FitcState fitc_fit(KernelKind kind, const HyperParams& h, const Inputs& x, const Vector& y, FitcOptions opts = {});

GpPosterior fitc_predict(const FitcState& state, const Inputs& test);
Vector fitc_predict_mean(const FitcState& state, const Inputs& test);

/// log N(y | m, Q + Lambda).
double fitc_log_likelihood(const FitcState& state);

/// Gradient over pack(ParamLayout::SEPoints, h): mean, amplitude, lengths,
/// noise and every inducing coordinate.
Vector fitc_grad_log_likelihood(const FitcState& state);

/// Every `stride`-th input in raster order, at most m of them.
Inputs initial_inducing(const Inputs& x, Eigen::Index m);

}  // namespace sqdm
