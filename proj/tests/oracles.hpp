// Independent reference computations for the unit tests: literal kernel
// formulas, dense GP algebra and central differences.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using In = Eigen::Matrix<double, Eigen::Dynamic, 2>;

inline double se(const Eigen::Vector2d& p, const Eigen::Vector2d& q, double sf, double lx, double ly) {
  const double dx = (p(0) - q(0)) / lx, dy = (p(1) - q(1)) / ly;
  return sf * sf * std::exp(-0.5 * (dx * dx + dy * dy));
}

inline double ss(const Eigen::Vector2d& p, const Eigen::Vector2d& q, double sf, const In& s) {
  double acc = 0.0;
  for (Eigen::Index r = 0; r < s.rows(); ++r) acc += std::cos(2.0 * std::numbers::pi * s.row(r).dot((p - q).transpose()));
  return sf * sf / static_cast<double>(s.rows()) * acc;
}

template <typename K>
Mat gram(const In& a, const In& b, K k) {
  Mat m(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) m(i, j) = k(a.row(i).transpose(), b.row(j).transpose());
  return m;
}

struct Posterior {
  Vec mean, var;
  double log_lik = 0.0;
};

// Dense GP via an explicit LU solve: ky already holds the noise.
inline Posterior dense_gp(const Mat& ky, const Mat& ks, const Mat& kss, const Vec& y0, double c) {
  const auto lu = ky.fullPivLu();
  Posterior p;
  p.mean = Vec::Constant(ks.cols(), c) + ks.transpose() * lu.solve(y0);
  p.var = (kss - ks.transpose() * lu.solve(ks)).diagonal();
  p.log_lik = -0.5 * y0.dot(lu.solve(y0)) - 0.5 * std::log(lu.determinant()) -
              0.5 * static_cast<double>(y0.size()) * std::log(2.0 * std::numbers::pi);
  return p;
}

inline Vec central_diff(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-5) {
  Vec g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vec xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    g(k) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

// max_k |a_k - n_k| / max(|a_k|, |n_k|, floor * max(1, |n|_inf))
inline double rel_err(const Vec& a, const Vec& n, double floor = 1e-4) {
  const double scale = std::max(1.0, n.cwiseAbs().maxCoeff());
  double worst = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k)
    worst = std::max(worst, std::abs(a(k) - n(k)) / std::max({std::abs(a(k)), std::abs(n(k)), floor * scale}));
  return worst;
}

inline In random_points(std::mt19937_64& g, Eigen::Index n, double extent) {
  std::uniform_real_distribution<double> u(0.0, extent);
  In x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) << u(g), u(g);
  return x;
}

inline Vec random_targets(std::mt19937_64& g, const In& x, double c) {
  std::normal_distribution<double> nd(0.0, 0.05);
  Vec y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) y(i) = c + std::sin(x(i, 0)) * std::cos(0.7 * x(i, 1)) + nd(g);
  return y;
}

}  // namespace oracle
