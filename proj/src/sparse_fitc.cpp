#include "sparse_fitc.hpp"

#include <cmath>
#include <numbers>

namespace sqdm {

namespace {

Eigen::Vector2d inv_sq_lengths(KernelKind kind, const HyperParams& h) {
  if (kind == KernelKind::SEArd) return {std::exp(-2.0 * h.log_lengths(0)), std::exp(-2.0 * h.log_lengths(1))};
  const double w = std::exp(-2.0 * h.log_lengths(0));
  return {w, w};
}

}  // namespace

FitcState fitc_fit(KernelKind kind, const HyperParams& h, const Inputs& x, const Vector& y, FitcOptions opts) {
  if (kind == KernelKind::SparseSpectrum) throw std::invalid_argument("FITC needs an SE kernel");
  if (x.rows() != y.size()) throw DimensionError("fitc_fit: inputs and targets differ in length");
  if (x.rows() < 1 || h.points.rows() < 1) throw DimensionError("fitc_fit: needs n >= 1 and m >= 1");
  check_hyper(kind, h);

  FitcState s;
  s.kind = kind;
  s.hyper = h;
  s.inputs = x;
  s.residual = y - mean_eval(h, x);
  const Eigen::Index n = x.rows();
  const Eigen::Index m = h.points.rows();

  Matrix kuu = kernel_matrix(kind, h, h.points, h.points);
  kuu.diagonal().array() += h.jitter();
  s.chol_uu = factorize(kuu, "fitc inducing covariance");
  s.kuf = kernel_matrix(kind, h, h.points, x);
  s.v = s.chol_uu.matrixL().solve(s.kuf);

  const double kff = h.signal_variance() + h.jitter();
  const double floor = h.jitter();
  const Vector qdiag = s.v.colwise().squaredNorm().transpose();
  s.lambda.resize(n);
  s.clamped.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double q = opts.fault_flip_lambda ? -qdiag(j) : qdiag(j);
    double lam = kff + h.noise_variance() - q;
    if (lam < floor) {
      lam = floor;
      s.clamped[static_cast<std::size_t>(j)] = true;
    }
    s.lambda(j) = lam;
  }

  const Vector inv_lambda = s.lambda.cwiseInverse();
  const Matrix v_scaled = s.v * inv_lambda.asDiagonal();  // V Lambda^{-1}
  Matrix a = Matrix::Identity(m, m);
  a.noalias() += v_scaled * s.v.transpose();
  s.chol_a = factorize(a, "fitc inner system");

  // weights = L_uu^{-T} A^{-1} V Lambda^{-1} y0
  const Vector t = s.chol_a.solve(v_scaled * s.residual);
  s.weights = s.chol_uu.matrixU().solve(t);

  // log-likelihood via Woodbury / matrix determinant lemma
  const Vector r_over = inv_lambda.cwiseProduct(s.residual);
  const Vector u = s.chol_a.matrixL().solve(s.v * r_over);
  const double quad = s.residual.dot(r_over) - u.squaredNorm();
  const double log_det = s.lambda.array().log().sum() + 2.0 * s.chol_a.matrixLLT().diagonal().array().log().sum();
  s.log_lik = -0.5 * quad - 0.5 * log_det - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  return s;
}

Vector fitc_predict_mean(const FitcState& state, const Inputs& test) {
  return mean_eval(state.hyper, test) +
         kernel_matrix(state.kind, state.hyper, test, state.hyper.points) * state.weights;
}

GpPosterior fitc_predict(const FitcState& state, const Inputs& test) {
  const HyperParams& h = state.hyper;
  const Matrix kus = kernel_matrix(state.kind, h, h.points, test);  // m x n*
  GpPosterior post;
  post.mean = mean_eval(h, test) + kus.transpose() * state.weights;
  const Matrix ws = state.chol_uu.matrixL().solve(kus);   // L_uu^{-1} K(I,*)
  const Matrix zs = state.chol_a.matrixL().solve(ws);     // L_a^{-1} L_uu^{-1} K(I,*)
  post.cov = kernel_matrix(state.kind, h, test, test);
  post.cov.noalias() -= ws.transpose() * ws;
  post.cov.noalias() += zs.transpose() * zs;
  clamp_variance(post.cov);
  return post;
}

double fitc_log_likelihood(const FitcState& state) { return state.log_lik; }

Vector fitc_grad_log_likelihood(const FitcState& state) {
  const HyperParams& h = state.hyper;
  const Eigen::Index n = state.size();
  const Eigen::Index m = state.inducing_count();
  const Eigen::Index nl = h.log_lengths.size();
  const Inputs& z = h.points;
  const Inputs& x = state.inputs;

  const Vector inv_lambda = state.lambda.cwiseInverse();
  const Matrix v_scaled = state.v * inv_lambda.asDiagonal();

  // beta = C^{-1} y0 with C = Q + Lambda; C^{-1} = Lambda^{-1} - R^T R
  const Matrix r = state.chol_a.matrixL().solve(v_scaled);  // m x n
  const Vector beta = inv_lambda.cwiseProduct(state.residual) - r.transpose() * (r * state.residual);
  const Vector cinv_diag = inv_lambda - r.colwise().squaredNorm().transpose();
  Vector w = beta.cwiseAbs2() - cinv_diag;  // diag of W = beta beta^T - C^{-1}
  for (Eigen::Index j = 0; j < n; ++j)
    if (state.clamped[static_cast<std::size_t>(j)]) w(j) = 0.0;

  // B = K_I^{-1} K(I,X)
  const Matrix b = state.chol_uu.matrixU().solve(state.v);
  // dL/dK(I,X) = B (W - diag w),  dL/dK_I = -1/2 B (W - diag w) B^T
  Matrix g_uf = (b * beta) * beta.transpose();
  g_uf.noalias() -= b * inv_lambda.asDiagonal();
  g_uf.noalias() += (b * r.transpose()) * r;
  g_uf.noalias() -= b * w.asDiagonal();
  const Matrix g_uu = -0.5 * g_uf * b.transpose();

  Matrix kuu = kernel_matrix(state.kind, h, z, z);
  const Matrix& kuf = state.kuf;
  const Eigen::Vector2d iw = inv_sq_lengths(state.kind, h);

  Vector grad = Vector::Zero(3 + nl + 2 * m);
  grad(0) = beta.sum();

  // amplitude: K scales with sf^2 everywhere (jitter included)
  const double sf2j = h.signal_variance() + h.jitter();
  grad(1) = 2.0 * g_uf.cwiseProduct(kuf).sum() + 2.0 * (g_uu.cwiseProduct(kuu).sum() + h.jitter() * g_uu.trace()) +
            w.sum() * sf2j;

  for (Eigen::Index d = 0; d < nl; ++d) {
    double acc = 0.0;
    for (int dim = 0; dim < 2; ++dim) {
      if (nl == 2 && dim != d) continue;
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < m; ++i) {
          const double diff = z(i, dim) - x(j, dim);
          acc += g_uf(i, j) * kuf(i, j) * diff * diff * iw(dim);
        }
      for (Eigen::Index k = 0; k < m; ++k)
        for (Eigen::Index i = 0; i < m; ++i) {
          const double diff = z(i, dim) - z(k, dim);
          acc += g_uu(i, k) * kuu(i, k) * diff * diff * iw(dim);
        }
    }
    grad(2 + d) = acc;
  }
  grad(2 + nl) = w.sum() * h.noise_variance();

  // inducing coordinates
  const Eigen::Index off = 3 + nl;
  for (int dim = 0; dim < 2; ++dim) {
    Vector acc = Vector::Zero(m);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < m; ++i) acc(i) -= g_uf(i, j) * kuf(i, j) * (z(i, dim) - x(j, dim)) * iw(dim);
    for (Eigen::Index k = 0; k < m; ++k)
      for (Eigen::Index i = 0; i < m; ++i) acc(i) -= 2.0 * g_uu(i, k) * kuu(i, k) * (z(i, dim) - z(k, dim)) * iw(dim);
    for (Eigen::Index i = 0; i < m; ++i) grad(off + 2 * i + dim) = acc(i);
  }
  return grad;
}

Inputs initial_inducing(const Inputs& x, Eigen::Index m) {
  m = std::max<Eigen::Index>(1, std::min(m, x.rows()));
  const Eigen::Index stride = std::max<Eigen::Index>(1, x.rows() / m);
  Inputs z(m, 2);
  for (Eigen::Index i = 0; i < m; ++i) z.row(i) = x.row(std::min(i * stride, x.rows() - 1));
  return z;
}

}  // namespace sqdm
