#include "verify.hpp"

#include "gp_exact.hpp"
#include "hyperopt.hpp"
#include "sparse_fitc.hpp"
#include "sparse_kron.hpp"
#include "sparse_sod.hpp"
#include "sparse_ssgpr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <random>

namespace sqdm {

namespace {

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen); }
};

Inputs random_inputs(Rng& rng, Eigen::Index n, double extent) {
  Inputs x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) << rng.uniform(0.0, extent), rng.uniform(0.0, extent);
  return x;
}

Vector smooth_targets(Rng& rng, const Inputs& x, double c) {
  const double a = rng.uniform(0.5, 1.5), b = rng.uniform(0.5, 1.5), p = rng.uniform(0.0, 3.0);
  Vector y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    y(i) = c + std::sin(a * x(i, 0) + p) * std::cos(b * x(i, 1)) + 0.05 * rng.normal();
  return y;
}

double max_abs_diff(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

double posterior_diff(const GpPosterior& a, const GpPosterior& b) {
  return std::max(max_abs_diff(a.mean, b.mean), max_abs_diff(a.variance(), b.variance()));
}

Vector central_difference(const Objective& f, const Vector& x, double h = 1e-5) {
  Vector g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vector xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    g(k) = (f(xp).value - f(xm).value) / (2.0 * h);
  }
  return g;
}

double gradient_check(GpMethod method, KernelKind kind, const HyperParams& h, const Inputs& x, const Vector& y) {
  const Objective f = likelihood_objective(method, kind, h, x, y);
  const Vector p = pack(layout_for(method, kind), h);
  return gradient_rel_error(f(p).grad, central_difference(f, p));
}

// Dense FITC: Q = Kxu Kuu^-1 Kux, Lambda = diag(Kff - Q) + sn^2,
// Sigma = (Kuu + Kux Lambda^-1 Kxu)^-1, mean = m + K*u Sigma Kux Lambda^-1 y0,
// var = k** - Q** + K*u Sigma Ku*.
struct DenseFitc {
  GpPosterior post;
  double log_lik = 0.0;
};

DenseFitc dense_fitc(KernelKind kind, const HyperParams& h, const Inputs& x, const Vector& y, const Inputs& test) {
  const Inputs& z = h.points;
  const Eigen::Index n = x.rows();
  Matrix kuu = kernel_matrix(kind, h, z, z);
  kuu.diagonal().array() += h.jitter();
  const Matrix kux = kernel_matrix(kind, h, z, x);
  const Matrix kus = kernel_matrix(kind, h, z, test);
  const Matrix kuu_inv = kuu.fullPivLu().inverse();
  const Matrix q = kux.transpose() * kuu_inv * kux;
  Vector lambda(n);
  for (Eigen::Index j = 0; j < n; ++j) lambda(j) = h.signal_variance() + h.jitter() + h.noise_variance() - q(j, j);
  const Matrix lambda_inv = lambda.cwiseInverse().asDiagonal();
  const Matrix sigma = (kuu + kux * lambda_inv * kux.transpose()).fullPivLu().inverse();
  const Vector y0 = y - mean_eval(h, x);

  DenseFitc out;
  out.post.mean = mean_eval(h, test) + kus.transpose() * sigma * kux * lambda_inv * y0;
  out.post.cov = kernel_matrix(kind, h, test, test) - kus.transpose() * kuu_inv * kus + kus.transpose() * sigma * kus;

  Matrix c = q;
  c.diagonal() += lambda;
  const auto lu = c.fullPivLu();
  out.log_lik = -0.5 * y0.dot(lu.solve(y0)) - 0.5 * std::log(lu.determinant()) -
                0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  return out;
}

// Dense inference on a grid with K = (Kx + jx I) (x) (Ky + jy I), built pointwise.
struct DenseKron {
  GpPosterior post;
  double log_lik = 0.0;
};

DenseKron dense_kron(const HyperParams& h, const Inputs& x, const Vector& y, const Inputs& test) {
  const double sfx2 = std::exp(2.0 * (*h.axis_log_sigma_f)(0));
  const double sfy2 = std::exp(2.0 * (*h.axis_log_sigma_f)(1));
  const double lx = h.length(0), ly = h.length(1);
  auto kx = [&](double a, double b, bool same) {
    return sfx2 * std::exp(-0.5 * (a - b) * (a - b) / (lx * lx)) + (same && a == b ? kJitter * sfx2 : 0.0);
  };
  auto ky = [&](double a, double b, bool same) {
    return sfy2 * std::exp(-0.5 * (a - b) * (a - b) / (ly * ly)) + (same && a == b ? kJitter * sfy2 : 0.0);
  };
  const Eigen::Index n = x.rows(), t = test.rows();
  Matrix k(n, n), ks(n, t), kss(t, t);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) k(a, b) = kx(x(a, 0), x(b, 0), true) * ky(x(a, 1), x(b, 1), true);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < t; ++b) ks(a, b) = kx(x(a, 0), test(b, 0), false) * ky(x(a, 1), test(b, 1), false);
  for (Eigen::Index a = 0; a < t; ++a)
    for (Eigen::Index b = 0; b < t; ++b)
      kss(a, b) = kx(test(a, 0), test(b, 0), false) * ky(test(a, 1), test(b, 1), false);
  k.diagonal().array() += h.noise_variance();
  const auto lu = k.fullPivLu();
  const Vector y0 = y.array() - h.mean_c;
  DenseKron out;
  out.post.mean = Vector::Constant(t, h.mean_c) + ks.transpose() * lu.solve(y0);
  out.post.cov = kss - ks.transpose() * lu.solve(ks);
  out.log_lik = -0.5 * y0.dot(lu.solve(y0)) - 0.5 * std::log(lu.determinant()) -
                0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  return out;
}

Inputs grid_inputs(int nx, int ny, double px, double py) {
  Inputs x(static_cast<Eigen::Index>(nx) * ny, 2);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) x.row(static_cast<Eigen::Index>(j) * nx + i) << i * px, j * py;
  return x;
}

HyperParams random_se(Rng& rng, int n_lengths, double c) {
  HyperParams h;
  h.mean_c = c;
  h.log_sigma_f = std::log(rng.uniform(0.5, 1.5));
  h.log_lengths = Vector(n_lengths);
  for (int d = 0; d < n_lengths; ++d) h.log_lengths(d) = std::log(rng.uniform(0.6, 1.2));
  h.log_sigma_n = std::log(rng.uniform(0.1, 0.3));
  return h;
}

CheckRow row(std::string name, double err, double tol) {
  return {std::move(name), err, tol, std::isfinite(err) && err <= tol};
}

}  // namespace

double gradient_rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  if (analytic.size() != numeric.size()) return std::numeric_limits<double>::infinity();
  const double scale = std::max(1.0, numeric.cwiseAbs().maxCoeff());
  double worst = 0.0;
  for (Eigen::Index k = 0; k < analytic.size(); ++k) {
    const double denom = std::max({std::abs(analytic(k)), std::abs(numeric(k)), 1e-4 * scale});
    worst = std::max(worst, std::abs(analytic(k) - numeric(k)) / denom);
  }
  return worst;
}

std::vector<CheckRow> run_verify(const VerifyOptions& opts) {
  std::vector<CheckRow> rows;
  const FitcOptions fitc_opts{opts.fault_flip_lambda};

  // FITC with inducing inputs at the training inputs reproduces the exact GP
  {
    Rng rng(opts.seed);
    double worst = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
      const auto n = static_cast<Eigen::Index>(10 + 30 * inst / 19);
      HyperParams h = random_se(rng, 1, rng.uniform(-1.0, 1.0));
      h.log_lengths(0) = std::log(rng.uniform(0.3, 0.6));
      const Inputs x = random_inputs(rng, n, 6.0);
      const Vector y = smooth_targets(rng, x, h.mean_c);
      const Inputs test = random_inputs(rng, 8, 6.0);
      const GpPosterior exact = predict(fit(KernelKind::SEIso, h, x, y), test);
      h.points = x;
      try {
        worst = std::max(worst, posterior_diff(fitc_predict(fitc_fit(KernelKind::SEIso, h, x, y, fitc_opts), test), exact));
      } catch (const std::exception&) {
        worst = std::numeric_limits<double>::infinity();
      }
    }
    rows.push_back(row("fitc inducing=train vs exact (20 instances)", worst, 1e-8));
  }

  // FITC against the dense formula
  {
    Rng rng(opts.seed + 1);
    HyperParams h = random_se(rng, 1, 0.3);
    const Inputs x = random_inputs(rng, 40, 4.0);
    const Vector y = smooth_targets(rng, x, h.mean_c);
    h.points = random_inputs(rng, 10, 4.0);
    const Inputs test = random_inputs(rng, 10, 4.0);
    const DenseFitc ref = dense_fitc(KernelKind::SEIso, h, x, y, test);
    double err = std::numeric_limits<double>::infinity();
    try {
      const FitcState s = fitc_fit(KernelKind::SEIso, h, x, y, fitc_opts);
      err = std::max(posterior_diff(fitc_predict(s, test), ref.post),
                     std::abs(fitc_log_likelihood(s) - ref.log_lik) / std::max(1.0, std::abs(ref.log_lik)));
    } catch (const std::exception&) {
    }
    rows.push_back(row("fitc vs dense formula (n=40, m=10)", err, 1e-10));
  }

  // SSGPR against the exact GP under the sparse spectrum kernel
  {
    Rng rng(opts.seed + 2);
    HyperParams h = random_se(rng, 1, -0.2);
    const Inputs x = random_inputs(rng, 15, 3.0);
    const Vector y = smooth_targets(rng, x, h.mean_c);
    h.points = initial_frequencies(4, h.length(0), opts.seed);
    const Inputs test = random_inputs(rng, 6, 3.0);
    const SsgprState s = ssgpr_fit(h, x, y);
    // the exact path adds jitter to the diagonal; take it out of the noise
    HyperParams he = h;
    he.log_sigma_n = 0.5 * std::log(h.noise_variance() - h.jitter());
    const FitState e = fit(KernelKind::SparseSpectrum, he, x, y);
    const double err = std::max(posterior_diff(ssgpr_predict(s, test), predict(e, test)),
                                std::abs(ssgpr_log_likelihood(s) - log_likelihood(e)) /
                                    std::max(1.0, std::abs(log_likelihood(e))));
    rows.push_back(row("ssgpr vs exact sparse-spectrum gp (n=15, m=4)", err, 1e-8));
  }

  // Kronecker against dense inference
  for (const auto& [nx, ny] : {std::pair{3, 4}, std::pair{8, 8}}) {
    Rng rng(opts.seed + 3 + static_cast<std::uint64_t>(nx));
    HyperParams h = kron_hyper_from_ard(random_se(rng, 2, 0.1));
    h.axis_log_sigma_f = Eigen::Vector2d(std::log(rng.uniform(0.6, 1.4)), std::log(rng.uniform(0.6, 1.4)));
    const Inputs x = grid_inputs(nx, ny, 0.4, 0.5);
    const Vector y = smooth_targets(rng, x, h.mean_c);
    const Inputs test = random_inputs(rng, 6, 2.0);
    const KronState s = kron_fit(h, x, y);
    const DenseKron ref = dense_kron(h, x, y, test);
    const double err =
        std::max(posterior_diff(kron_predict(s, test), ref.post),
                 std::abs(kron_log_likelihood(s) - ref.log_lik) / std::max(1.0, std::abs(ref.log_lik)));
    rows.push_back(row("kronecker vs dense (" + std::to_string(nx) + "x" + std::to_string(ny) + ")", err, 1e-8));
  }

  // Subset of data holding every point equals the exact GP
  {
    Rng rng(opts.seed + 20);
    const HyperParams h = random_se(rng, 2, 0.5);
    const Inputs x = random_inputs(rng, 30, 3.0);
    const Vector y = smooth_targets(rng, x, h.mean_c);
    const Inputs test = random_inputs(rng, 8, 3.0);
    ActiveSetPolicy policy;
    policy.kind = ActiveSetKind::SlidingWindow;
    policy.capacity = 40;
    const GpPosterior sod = predict_sod(policy, Dataset::from(x, y), test, KernelKind::SEArd, h);
    const GpPosterior exact = predict(fit(KernelKind::SEArd, h, x, y), test);
    rows.push_back(row("sod capacity >= n vs exact", posterior_diff(sod, exact), 1e-12));
  }

  // Likelihood gradients against central differences
  {
    double exact_err = 0.0, fitc_err = 0.0, ssgpr_err = 0.0, kron_err = 0.0;
    for (int k = 0; k < opts.gradient_seeds; ++k) {
      Rng rng(opts.seed + 100 + static_cast<std::uint64_t>(k));
      const Inputs x = random_inputs(rng, 25, 3.0);
      HyperParams h = random_se(rng, 2, 0.2);
      const Vector y = smooth_targets(rng, x, h.mean_c);
      exact_err = std::max(exact_err, gradient_check(GpMethod::Exact, KernelKind::SEArd, h, x, y));

      HyperParams hi = random_se(rng, 1, 0.2);
      hi.points = random_inputs(rng, 8, 3.0);
      fitc_err = std::max(fitc_err, gradient_check(GpMethod::Fitc, KernelKind::SEIso, hi, x, y));

      HyperParams hs = random_se(rng, 1, 0.2);
      hs.points = initial_frequencies(6, hs.length(0), opts.seed + static_cast<std::uint64_t>(k));
      ssgpr_err = std::max(ssgpr_err, gradient_check(GpMethod::Ssgpr, KernelKind::SparseSpectrum, hs, x, y));

      const Inputs g = grid_inputs(5, 4, 0.5, 0.6);
      HyperParams hk = kron_hyper_from_ard(random_se(rng, 2, 0.2));
      hk.axis_log_sigma_f = Eigen::Vector2d(std::log(rng.uniform(0.6, 1.4)), std::log(rng.uniform(0.6, 1.4)));
      kron_err = std::max(kron_err, gradient_check(GpMethod::Kronecker, KernelKind::SEArd, hk, g, smooth_targets(rng, g, 0.2)));
    }
    const std::string suffix = " (" + std::to_string(opts.gradient_seeds) + " seeds)";
    rows.push_back(row("gradient exact se-ard" + suffix, exact_err, 1e-4));
    rows.push_back(row("gradient fitc incl. inducing inputs" + suffix, fitc_err, 1e-4));
    rows.push_back(row("gradient ssgpr incl. frequencies" + suffix, ssgpr_err, 1e-4));
    rows.push_back(row("gradient kronecker" + suffix, kron_err, 1e-4));
  }
  return rows;
}

bool all_pass(const std::vector<CheckRow>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.pass; });
}

void print_verify_table(std::ostream& os, const std::vector<CheckRow>& rows) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-48s %12s %9s  %s\n", "check", "max_err", "tol", "result");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-48s %12.3e %9.0e  %s\n", r.name.c_str(), r.max_err, r.tol, r.pass ? "PASS" : "FAIL");
    os << buf;
  }
}

}  // namespace sqdm
