#include "sparse_kron.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace sqdm {

namespace {

constexpr double kAxisTol = 1e-9;

Vector unique_sorted(const Eigen::Ref<const Vector>& v) {
  std::vector<double> vals(v.data(), v.data() + v.size());
  std::sort(vals.begin(), vals.end());
  std::vector<double> out;
  for (double a : vals)
    if (out.empty() || a - out.back() > kAxisTol) out.push_back(a);
  return Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

Eigen::Index axis_index(const Vector& axis, double v) {
  const double* begin = axis.data();
  const double* end = begin + axis.size();
  const double* it = std::lower_bound(begin, end, v - kAxisTol);
  if (it == end || std::abs(*it - v) > kAxisTol) return -1;
  return it - begin;
}

Matrix axis_covariance(const Vector& a, const Vector& b, double sf2, double length) {
  Matrix k(a.size(), b.size());
  const double w = 1.0 / (length * length);
  for (Eigen::Index q = 0; q < b.size(); ++q)
    for (Eigen::Index p = 0; p < a.size(); ++p) {
      const double d = a(p) - b(q);
      k(p, q) = sf2 * std::exp(-0.5 * w * d * d);
    }
  return k;
}

Matrix axis_length_grad(const Vector& a, const Matrix& k_plain, double length) {
  Matrix g = k_plain;
  const double w = 1.0 / (length * length);
  for (Eigen::Index q = 0; q < a.size(); ++q)
    for (Eigen::Index p = 0; p < a.size(); ++p) {
      const double d = a(p) - a(q);
      g(p, q) *= w * d * d;
    }
  return g;
}

double axis_sf2(const HyperParams& h, int d) { return std::exp(2.0 * (*h.axis_log_sigma_f)(d)); }

void require_kron(const HyperParams& h) {
  if (!h.axis_log_sigma_f || h.log_lengths.size() != 2)
    throw DimensionError("Kronecker inference needs per-axis amplitudes and two length scales");
}

// 1 / (ex_i ey_j + sn^2)
Matrix inverse_spectrum(const KronFactors& f, double sn2) {
  Matrix d = f.ex * f.ey.transpose();
  return (d.array() + sn2).inverse();
}

}  // namespace

HyperParams kron_hyper_from_ard(const HyperParams& ard) {
  HyperParams h = ard;
  h.axis_log_sigma_f = Eigen::Vector2d::Constant(0.5 * ard.log_sigma_f);
  return h;
}

HyperParams ard_hyper_from_kron(const HyperParams& kron) {
  HyperParams h = kron;
  h.log_sigma_f = kron.axis_log_sigma_f ? kron.axis_log_sigma_f->sum() : kron.log_sigma_f;
  h.axis_log_sigma_f.reset();
  return h;
}

Matrix kron_dense(const Matrix& outer, const Matrix& inner) {
  Matrix k(outer.rows() * inner.rows(), outer.cols() * inner.cols());
  for (Eigen::Index i = 0; i < outer.rows(); ++i)
    for (Eigen::Index j = 0; j < outer.cols(); ++j)
      k.block(i * inner.rows(), j * inner.cols(), inner.rows(), inner.cols()) = outer(i, j) * inner;
  return k;
}

KronState kron_fit(const HyperParams& h, const Inputs& x, const Vector& y) {
  require_kron(h);
  if (x.rows() != y.size()) throw DimensionError("kron_fit: inputs and targets differ in length");
  if (x.rows() == 0) throw DimensionError("kron_fit: no data");
  KronState s;
  s.hyper = h;
  KronFactors& f = s.factors;
  f.x_axis = unique_sorted(x.col(0));
  f.y_axis = unique_sorted(x.col(1));
  if (f.size() != x.rows()) throw DimensionError("kron_fit: active data is not a full Cartesian grid");

  s.residual = Matrix::Constant(f.x_axis.size(), f.y_axis.size(), std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    const Eigen::Index i = axis_index(f.x_axis, x(k, 0));
    const Eigen::Index j = axis_index(f.y_axis, x(k, 1));
    if (i < 0 || j < 0 || !std::isnan(s.residual(i, j)))
      throw DimensionError("kron_fit: active data is not a full Cartesian grid");
    s.residual(i, j) = y(k) - h.mean_c;
  }

  const double sfx2 = axis_sf2(h, 0), sfy2 = axis_sf2(h, 1);
  f.kx = axis_covariance(f.x_axis, f.x_axis, sfx2, h.length(0));
  f.ky = axis_covariance(f.y_axis, f.y_axis, sfy2, h.length(1));
  f.kx.diagonal().array() += kJitter * sfx2;
  f.ky.diagonal().array() += kJitter * sfy2;
  Eigen::SelfAdjointEigenSolver<Matrix> esx(f.kx), esy(f.ky);
  if (esx.info() != Eigen::Success || esy.info() != Eigen::Success)
    throw NumericError("kron_fit: factor eigendecomposition failed");
  f.qx = esx.eigenvectors();
  f.ex = esx.eigenvalues();
  f.qy = esy.eigenvectors();
  f.ey = esy.eigenvalues();

  const double sn2 = h.noise_variance();
  const Matrix inv = inverse_spectrum(f, sn2);
  if (!inv.allFinite() || (inv.array() <= 0.0).any()) throw NumericError("kron_fit: singular spectrum");
  const Matrix rotated = f.qx.transpose() * s.residual * f.qy;
  s.alpha = f.qx * rotated.cwiseProduct(inv) * f.qy.transpose();

  const auto n = static_cast<double>(f.size());
  s.log_lik = -0.5 * s.residual.cwiseProduct(s.alpha).sum() + 0.5 * inv.array().log().sum() -
              0.5 * n * std::log(2.0 * std::numbers::pi);
  return s;
}

Vector kron_predict_mean(const KronState& state, const Inputs& test) {
  const HyperParams& h = state.hyper;
  const KronFactors& f = state.factors;
  const Matrix kx = axis_covariance(f.x_axis, test.col(0), axis_sf2(h, 0), h.length(0));  // nx x n*
  const Matrix ky = axis_covariance(f.y_axis, test.col(1), axis_sf2(h, 1), h.length(1));  // ny x n*
  const Matrix ak = state.alpha * ky;  // nx x n*
  Vector mean(test.rows());
  for (Eigen::Index t = 0; t < test.rows(); ++t) mean(t) = h.mean_c + kx.col(t).dot(ak.col(t));
  return mean;
}

GpPosterior kron_predict(const KronState& state, const Inputs& test) {
  const HyperParams& h = state.hyper;
  const KronFactors& f = state.factors;
  const Matrix kx = axis_covariance(f.x_axis, test.col(0), axis_sf2(h, 0), h.length(0));
  const Matrix ky = axis_covariance(f.y_axis, test.col(1), axis_sf2(h, 1), h.length(1));
  const Matrix px = f.qx.transpose() * kx;  // projections onto factor eigenvectors
  const Matrix py = f.qy.transpose() * ky;
  const Matrix inv = inverse_spectrum(f, h.noise_variance());

  GpPosterior post;
  post.mean = kron_predict_mean(state, test);
  // K(*,grid) (K + sn^2 I)^{-1} K(grid,*) through the eigenbasis
  const Eigen::Index nt = test.rows();
  Matrix reduction(nt, nt);
  for (Eigen::Index a = 0; a < nt; ++a)
    for (Eigen::Index b = a; b < nt; ++b) {
      const Matrix outer_a = px.col(a) * py.col(a).transpose();
      const Matrix outer_b = px.col(b) * py.col(b).transpose();
      reduction(a, b) = reduction(b, a) = outer_a.cwiseProduct(outer_b).cwiseProduct(inv).sum();
    }
  Matrix prior(nt, nt);
  for (Eigen::Index a = 0; a < nt; ++a)
    for (Eigen::Index b = 0; b < nt; ++b) {
      const double dx = test(a, 0) - test(b, 0), dy = test(a, 1) - test(b, 1);
      prior(a, b) = h.signal_variance() *
                    std::exp(-0.5 * (dx * dx / (h.length(0) * h.length(0)) + dy * dy / (h.length(1) * h.length(1))));
    }
  post.cov = prior - reduction;
  clamp_variance(post.cov);
  return post;
}

double kron_log_likelihood(const KronState& state) { return state.log_lik; }

Vector kron_grad_log_likelihood(const KronState& state) {
  const HyperParams& h = state.hyper;
  const KronFactors& f = state.factors;
  const double sn2 = h.noise_variance();
  const Matrix inv = inverse_spectrum(f, sn2);
  const Matrix& a = state.alpha;

  // x-factor derivative dKx: 0.5 tr(A^T dKx A Ky) - 0.5 sum_ij diag(Qx^T dKx Qx)_i ey_j inv_ij
  auto x_term = [&](const Matrix& dkx) {
    const Vector proj = (f.qx.transpose() * dkx * f.qx).diagonal();
    const double quad = (a.transpose() * dkx * a * f.ky).trace();
    return 0.5 * quad - 0.5 * (proj * f.ey.transpose()).cwiseProduct(inv).sum();
  };
  auto y_term = [&](const Matrix& dky) {
    const Vector proj = (f.qy.transpose() * dky * f.qy).diagonal();
    const double quad = (a.transpose() * f.kx * a * dky).trace();
    return 0.5 * quad - 0.5 * (f.ex * proj.transpose()).cwiseProduct(inv).sum();
  };

  const Matrix kx_plain = axis_covariance(f.x_axis, f.x_axis, axis_sf2(h, 0), h.length(0));
  const Matrix ky_plain = axis_covariance(f.y_axis, f.y_axis, axis_sf2(h, 1), h.length(1));

  Vector g(6);
  g(0) = a.sum();
  g(1) = x_term(2.0 * f.kx);
  g(2) = y_term(2.0 * f.ky);
  g(3) = x_term(axis_length_grad(f.x_axis, kx_plain, h.length(0)));
  g(4) = y_term(axis_length_grad(f.y_axis, ky_plain, h.length(1)));
  g(5) = sn2 * (a.squaredNorm() - inv.sum());
  return g;
}

Vector kron_spectrum(const KronFactors& f) {
  Vector out(f.size());
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < f.ey.size(); ++j)
    for (Eigen::Index i = 0; i < f.ex.size(); ++i) out(k++) = f.ex(i) * f.ey(j);
  return out;
}

}  // namespace sqdm
