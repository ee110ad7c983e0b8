#include "sparse_ssgpr.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace sqdm {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

Matrix spectral_features(const Inputs& frequencies, const Inputs& x) {
  const Eigen::Index m = frequencies.rows();
  const Matrix phase = kTwoPi * (x * frequencies.transpose());
  Matrix phi(x.rows(), 2 * m);
  phi.leftCols(m) = phase.array().cos();
  phi.rightCols(m) = phase.array().sin();
  return phi;
}

SsgprState ssgpr_fit(const HyperParams& h, const Inputs& x, const Vector& y) {
  if (x.rows() != y.size()) throw DimensionError("ssgpr_fit: inputs and targets differ in length");
  if (h.points.rows() < 1) throw DimensionError("ssgpr_fit: needs at least one frequency");
  SsgprState s;
  s.hyper = h;
  s.inputs = x;
  s.residual = y - mean_eval(h, x);
  const Eigen::Index m = h.points.rows();
  const double sn2 = h.noise_variance();
  const double kappa = static_cast<double>(m) * sn2 / h.signal_variance();

  s.phi = spectral_features(h.points, x);
  Matrix a = Matrix::Identity(2 * m, 2 * m) * kappa;
  a.selfadjointView<Eigen::Lower>().rankUpdate(s.phi.transpose());
  a.triangularView<Eigen::StrictlyUpper>() = a.transpose();
  s.chol_a = factorize(a, "ssgpr feature system");
  const Vector phit_y = s.phi.transpose() * s.residual;
  s.weight_mean = s.chol_a.solve(phit_y);

  const auto n = static_cast<double>(x.rows());
  const double quad = (s.residual.squaredNorm() - phit_y.dot(s.weight_mean)) / sn2;
  const double log_det_a = 2.0 * s.chol_a.matrixLLT().diagonal().array().log().sum();
  s.log_lik = -0.5 * quad - 0.5 * n * std::log(sn2) - 0.5 * log_det_a + static_cast<double>(m) * std::log(kappa) -
              0.5 * n * std::log(2.0 * std::numbers::pi);
  return s;
}

Vector ssgpr_predict_mean(const SsgprState& state, const Inputs& test) {
  return mean_eval(state.hyper, test) + spectral_features(state.hyper.points, test) * state.weight_mean;
}

GpPosterior ssgpr_predict(const SsgprState& state, const Inputs& test) {
  const Matrix phis = spectral_features(state.hyper.points, test);
  GpPosterior post;
  post.mean = mean_eval(state.hyper, test) + phis * state.weight_mean;
  const Matrix v = state.chol_a.matrixL().solve(phis.transpose());
  post.cov = state.hyper.noise_variance() * (v.transpose() * v);
  clamp_variance(post.cov);
  return post;
}

double ssgpr_log_likelihood(const SsgprState& state) { return state.log_lik; }

Vector ssgpr_grad_log_likelihood(const SsgprState& state) {
  const HyperParams& h = state.hyper;
  const Eigen::Index m = state.frequency_count();
  const Eigen::Index n = state.size();
  const double sn2 = h.noise_variance();
  const double psi = h.signal_variance() / static_cast<double>(m);
  const double kappa = sn2 / psi;
  const Matrix& phi = state.phi;

  const Matrix a_inv = state.chol_a.solve(Matrix::Identity(2 * m, 2 * m));
  const double tr_a_inv = a_inv.trace();
  // beta = C^{-1} y0, C = sn^2 I + psi phi phi^T
  const Vector beta = (state.residual - phi * state.weight_mean) / sn2;
  const Vector phit_beta = phi.transpose() * beta;
  const double tr_cinv = (static_cast<double>(n) - static_cast<double>(2 * m) + kappa * tr_a_inv) / sn2;
  const double tr_w = beta.squaredNorm() - tr_cinv;
  const double tr_phit_w_phi = phit_beta.squaredNorm() - kappa / sn2 * (static_cast<double>(2 * m) - kappa * tr_a_inv);

  // dL/dphi = psi * W phi,   W phi = beta (phi^T beta)^T - (kappa / sn^2) phi A^{-1}
  Matrix g = beta * phit_beta.transpose();
  g.noalias() -= (kappa / sn2) * (phi * a_inv);
  g *= psi;

  Vector grad(3 + 2 * m);
  grad(0) = beta.sum();
  grad(1) = psi * tr_phit_w_phi;
  grad(2) = sn2 * tr_w;
  for (Eigen::Index r = 0; r < m; ++r) {
    // d cos / ds = -sin * 2 pi x,   d sin / ds = cos * 2 pi x
    const Vector coupling = (-g.col(r).cwiseProduct(phi.col(m + r)) + g.col(m + r).cwiseProduct(phi.col(r))) * kTwoPi;
    grad(3 + 2 * r) = coupling.dot(state.inputs.col(0));
    grad(4 + 2 * r) = coupling.dot(state.inputs.col(1));
  }
  return grad;
}

Inputs initial_frequencies(Eigen::Index m, double length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / (kTwoPi * length));
  Inputs s(m, 2);
  for (Eigen::Index r = 0; r < m; ++r) {
    s(r, 0) = normal(rng);
    s(r, 1) = normal(rng);
  }
  return s;
}

}  // namespace sqdm
