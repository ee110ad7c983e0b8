// Dense GP inference: posterior, log marginal likelihood and its gradient.
#pragma once

#include "core.hpp"
#include "kernels.hpp"

#include <Eigen/Cholesky>

namespace sqdm {

struct GpPosterior {
  Vector mean;
  Matrix cov;

  Vector variance() const { return cov.diagonal(); }
};

/// Clamp tiny negative diagonal entries produced by cancellation.
void clamp_variance(Matrix& cov, double tolerance = 1e-8);

struct FitState {
  KernelKind kind = KernelKind::SEIso;
  HyperParams hyper;
  Inputs inputs;
  Vector residual;  // y - m(X)
  Eigen::LLT<Matrix> chol;  // of K(X,X) + (jitter + sn^2) I
  Vector alpha;

  Eigen::Index size() const { return inputs.rows(); }
};

/// Noisy self-covariance K(X,X) + (jitter + sn^2) I.
Matrix noisy_self_covariance(KernelKind kind, const HyperParams& h, const Inputs& x);

/// Throws NumericError if factorisation fails, naming the smallest eigenvalue.
Eigen::LLT<Matrix> factorize(const Matrix& k, const char* what);

FitState fit(KernelKind kind, const HyperParams& h, const Inputs& x, const Vector& y);
FitState fit(KernelKind kind, const HyperParams& h, const Dataset& data);

GpPosterior predict(const FitState& state, const Inputs& test);
/// Mean only; skips the covariance solve.
Vector predict_mean(const FitState& state, const Inputs& test);

double log_likelihood(const FitState& state);

/// Parameter layout used by grad_log_likelihood for the given kernel kind.
ParamLayout exact_layout(KernelKind kind);

/// Gradient over pack(exact_layout(kind), h).
Vector grad_log_likelihood(const FitState& state);

}  // namespace sqdm
