#include "gp_exact.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <sstream>

namespace sqdm {

void clamp_variance(Matrix& cov, double tolerance) {
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    if (cov(i, i) < 0.0 && cov(i, i) >= -tolerance) cov(i, i) = 0.0;
}

Matrix noisy_self_covariance(KernelKind kind, const HyperParams& h, const Inputs& x) {
  Matrix k = kernel_matrix(kind, h, x, x);
  k.diagonal().array() += h.jitter() + h.noise_variance();
  return k;
}

Eigen::LLT<Matrix> factorize(const Matrix& k, const char* what) {
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(k, Eigen::EigenvaluesOnly);
    std::ostringstream msg;
    msg << what << ": Cholesky factorisation failed (smallest eigenvalue estimate " << es.eigenvalues().minCoeff()
        << ")";
    throw NumericError(msg.str());
  }
  return llt;
}

FitState fit(KernelKind kind, const HyperParams& h, const Inputs& x, const Vector& y) {
  if (x.rows() != y.size()) throw DimensionError("fit: inputs and targets differ in length");
  check_hyper(kind, h);
  FitState s;
  s.kind = kind;
  s.hyper = h;
  s.inputs = x;
  s.residual = y - mean_eval(h, x);
  if (x.rows() > 0) {
    s.chol = factorize(noisy_self_covariance(kind, h, x), "gp fit");
    s.alpha = s.chol.solve(s.residual);
  } else {
    s.alpha.resize(0);
  }
  return s;
}

FitState fit(KernelKind kind, const HyperParams& h, const Dataset& data) {
  return fit(kind, h, data.inputs(), data.targets());
}

Vector predict_mean(const FitState& state, const Inputs& test) {
  Vector mean = mean_eval(state.hyper, test);
  if (state.size() > 0) mean += kernel_matrix(state.kind, state.hyper, test, state.inputs) * state.alpha;
  return mean;
}

GpPosterior predict(const FitState& state, const Inputs& test) {
  GpPosterior post;
  post.cov = kernel_matrix(state.kind, state.hyper, test, test);
  post.mean = mean_eval(state.hyper, test);
  if (state.size() > 0) {
    const Matrix ks = kernel_matrix(state.kind, state.hyper, state.inputs, test);  // n x n*
    post.mean += ks.transpose() * state.alpha;
    const Matrix v = state.chol.matrixL().solve(ks);
    post.cov.noalias() -= v.transpose() * v;
  }
  clamp_variance(post.cov);
  return post;
}

double log_likelihood(const FitState& state) {
  const auto n = static_cast<double>(state.size());
  if (state.size() == 0) return 0.0;
  const Matrix& l = state.chol.matrixLLT();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  return -0.5 * state.residual.dot(state.alpha) - 0.5 * log_det - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

ParamLayout exact_layout(KernelKind kind) {
  return kind == KernelKind::SparseSpectrum ? ParamLayout::Spectral : ParamLayout::SE;
}

Vector grad_log_likelihood(const FitState& state) {
  const HyperParams& h = state.hyper;
  const ParamLayout layout = exact_layout(state.kind);
  Vector g = Vector::Zero(pack(layout, h).size());
  const Eigen::Index n = state.size();
  if (n == 0) return g;

  // W = alpha alpha^T - Ky^{-1};  dL/dtheta = 0.5 * sum(W .* dK)
  Matrix w = -state.chol.solve(Matrix::Identity(n, n));
  w.noalias() += state.alpha * state.alpha.transpose();

  std::vector<Matrix> dk = kernel_grad(state.kind, h, state.inputs, state.inputs);
  dk[0].diagonal().array() += 2.0 * h.jitter();

  g(0) = state.alpha.sum();
  g(1) = 0.5 * w.cwiseProduct(dk[0]).sum();
  if (layout == ParamLayout::SE) {
    const Eigen::Index nl = h.log_lengths.size();
    for (Eigen::Index d = 0; d < nl; ++d) g(2 + d) = 0.5 * w.cwiseProduct(dk[static_cast<std::size_t>(1 + d)]).sum();
    g(2 + nl) = h.noise_variance() * w.trace();
  } else {
    g(2) = h.noise_variance() * w.trace();
    for (std::size_t k = 1; k < dk.size(); ++k) g(static_cast<Eigen::Index>(2 + k)) = 0.5 * w.cwiseProduct(dk[k]).sum();
  }
  return g;
}

}  // namespace sqdm
