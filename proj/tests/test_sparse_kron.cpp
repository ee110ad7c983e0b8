#include "sparse_kron.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <random>

using namespace sqdm;

namespace {

Inputs grid(int nx, int ny, double px, double py) {
  Inputs x(static_cast<Eigen::Index>(nx) * ny, 2);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) x.row(static_cast<Eigen::Index>(j) * nx + i) << i * px, j * py;
  return x;
}

HyperParams kron_h(double c, double sfx, double sfy, double lx, double ly, double sn) {
  HyperParams h = HyperParams::se(c, 1.0, {lx, ly}, sn);
  h.axis_log_sigma_f = Eigen::Vector2d(std::log(sfx), std::log(sfy));
  return h;
}

// Explicit product covariance with per-factor jitter on coincident axis coordinates.
oracle::Mat dense_product(const HyperParams& h, const Inputs& a, const Inputs& b, bool self) {
  const double sfx = std::exp((*h.axis_log_sigma_f)(0)), sfy = std::exp((*h.axis_log_sigma_f)(1));
  oracle::Mat k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      double kx = sfx * sfx * std::exp(-0.5 * std::pow((a(i, 0) - b(j, 0)) / h.length(0), 2));
      double ky = sfy * sfy * std::exp(-0.5 * std::pow((a(i, 1) - b(j, 1)) / h.length(1), 2));
      if (self && a(i, 0) == b(j, 0)) kx += kJitter * sfx * sfx;
      if (self && a(i, 1) == b(j, 1)) ky += kJitter * sfy * sfy;
      k(i, j) = kx * ky;
    }
  return k;
}

Vector smooth(std::mt19937_64& g, const Inputs& x, double c) { return oracle::random_targets(g, x, c); }

}  // namespace

TEST_CASE("single line equals the dense exact fit") {
  std::mt19937_64 g(1);
  const Inputs x = grid(9, 1, 0.3, 1.0);
  const Vector y = smooth(g, x, 0.2);
  const HyperParams h = kron_h(0.2, 1.1, 0.9, 0.7, 1.3, 0.05);
  const KronState s = kron_fit(h, x, y);
  const FitState e = fit(KernelKind::SEArd, ard_hyper_from_kron(h), x, y);
  Inputs t(4, 2);
  t << 0.1, 0.0, 1.0, 0.0, 2.45, 0.0, 3.0, 0.0;
  const GpPosterior a = kron_predict(s, t), b = predict(e, t);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((a.variance() - b.variance()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("alpha solves the explicit 12 x 12 system") {
  std::mt19937_64 g(2);
  const Inputs x = grid(3, 4, 0.4, 0.5);
  const Vector y = smooth(g, x, -0.3);
  const HyperParams h = kron_h(-0.3, 1.2, 0.8, 0.6, 0.9, 0.1);
  const KronState s = kron_fit(h, x, y);
  oracle::Mat k = dense_product(h, x, x, true);
  k.diagonal().array() += h.noise_variance();
  // alpha is nx x ny with column j holding line j, i.e. raster order when flattened column-major
  const Vector alpha = Eigen::Map<const Vector>(s.alpha.data(), s.alpha.size());
  const Vector y0 = y.array() + 0.3;
  CHECK((k * alpha - y0).norm() < 1e-8);
  CHECK(kron_dense(s.factors.ky, s.factors.kx).isApprox(dense_product(h, x, x, true), 1e-14));
}

TEST_CASE("spectrum equals all pairwise products of factor eigenvalues") {
  const HyperParams h = kron_h(0.0, 1.3, 0.7, 0.5, 0.8, 0.1);
  std::mt19937_64 g(3);
  const Inputs x = grid(4, 5, 0.3, 0.4);
  const KronState s = kron_fit(h, x, smooth(g, x, 0.0));
  Vector lib = kron_spectrum(s.factors);
  Vector ref = Eigen::SelfAdjointEigenSolver<Matrix>(dense_product(h, x, x, true)).eigenvalues();
  std::sort(lib.begin(), lib.end());
  std::sort(ref.begin(), ref.end());
  REQUIRE(lib.size() == ref.size());
  CHECK((lib - ref).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("factor eigenvectors are orthonormal") {
  const HyperParams h = kron_h(0.0, 1.0, 1.0, 0.5, 0.5, 0.1);
  std::mt19937_64 g(4);
  const Inputs x = grid(12, 7, 0.2, 0.3);
  const KronState s = kron_fit(h, x, smooth(g, x, 0.0));
  CHECK((s.factors.qx.transpose() * s.factors.qx - Matrix::Identity(12, 12)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((s.factors.qy.transpose() * s.factors.qy - Matrix::Identity(7, 7)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(s.factors.size() == 84);
}

TEST_CASE("prediction matches dense inference off and on the grid") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    const HyperParams h = kron_h(0.1, u(g), u(g), 0.4 * u(g), 0.6 * u(g), 0.05);
    const Inputs x = grid(3, 4, 0.4, 0.5);
    const Vector y = smooth(g, x, 0.1);
    Inputs t(8, 2);
    t.topRows(4) = x.topRows(4);
    t.bottomRows(4) = oracle::random_points(g, 4, 2.0);
    oracle::Mat ky = dense_product(h, x, x, true);
    ky.diagonal().array() += h.noise_variance();
    const oracle::Posterior ref = oracle::dense_gp(ky, dense_product(h, x, t, false), dense_product(h, t, t, false),
                                                   (y.array() - 0.1).matrix(), 0.1);
    const KronState s = kron_fit(h, x, y);
    const GpPosterior p = kron_predict(s, t);
    CHECK((p.mean - ref.mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((p.variance() - ref.var).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(kron_log_likelihood(s) == doctest::Approx(ref.log_lik).epsilon(1e-10));
    const FitState e = fit(KernelKind::SEArd, ard_hyper_from_kron(h), x, y);
    CHECK((p.mean - predict(e, t).mean).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("jitter-only noise interpolates the grid") {
  std::mt19937_64 g(6);
  const Inputs x = grid(5, 3, 0.5, 0.5);
  const Vector y = smooth(g, x, 0.0);
  HyperParams h = kron_h(0.0, 1.0, 1.0, 0.4, 0.4, 0.1);
  h.log_sigma_n = -std::numeric_limits<double>::infinity();
  const GpPosterior p = kron_predict(kron_fit(h, x, y), x);
  CHECK((p.mean - y).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("doubling both axis amplitudes equals quadrupling sigma_f") {
  std::mt19937_64 g(7);
  const Inputs x = grid(3, 4, 0.4, 0.5);
  const Vector y = smooth(g, x, 0.0);
  const Inputs t = oracle::random_points(g, 6, 1.5);
  const HyperParams h = kron_h(0.0, 0.4, 0.5, 0.5, 0.7, 0.1);
  HyperParams h2 = h;
  *h2.axis_log_sigma_f += Eigen::Vector2d::Constant(std::log(2.0));
  HyperParams dense = ard_hyper_from_kron(h);
  dense.log_sigma_f += std::log(4.0);
  const GpPosterior a = kron_predict(kron_fit(h2, x, y), t);
  const GpPosterior b = predict(fit(KernelKind::SEArd, dense, x, y), t);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((a.variance() - b.variance()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("incomplete grid is rejected") {
  std::mt19937_64 g(8);
  const Inputs full = grid(4, 3, 1.0, 1.0);
  const Inputs partial = full.topRows(10);
  CHECK_THROWS_AS(kron_fit(kron_h(0, 1, 1, 1, 1, 0.1), partial, smooth(g, partial, 0.0)), DimensionError);
  Inputs dup = full;
  dup.row(11) = dup.row(0);
  CHECK_THROWS_AS(kron_fit(kron_h(0, 1, 1, 1, 1, 0.1), dup, smooth(g, dup, 0.0)), DimensionError);
  CHECK_THROWS_AS(kron_fit(HyperParams::se(0, 1, {1, 1}, 0.1), full, smooth(g, full, 0.0)), DimensionError);
}

TEST_CASE("hyperparameter conversion round trips") {
  const HyperParams ard = HyperParams::se(0.3, 1.7, {0.4, 0.9}, 0.02);
  const HyperParams k = kron_hyper_from_ard(ard);
  REQUIRE(k.axis_log_sigma_f);
  CHECK(k.sigma_f() == doctest::Approx(1.7).epsilon(1e-14));
  const HyperParams back = ard_hyper_from_kron(k);
  CHECK(back.sigma_f() == doctest::Approx(1.7).epsilon(1e-14));
  CHECK(back.log_lengths == ard.log_lengths);
}

TEST_CASE("likelihood gradient matches central differences") {
  std::mt19937_64 g(9);
  const Inputs x = grid(4, 3, 0.4, 0.5);
  const Vector y = smooth(g, x, 0.1);
  const HyperParams h = kron_h(0.1, 0.9, 1.1, 0.6, 0.8, 0.1);
  const Vector p0 = pack(ParamLayout::KronAxes, h);
  auto f = [&](const Vector& p) { return kron_log_likelihood(kron_fit(unpack(ParamLayout::KronAxes, p, h), x, y)); };
  CHECK(oracle::rel_err(kron_grad_log_likelihood(kron_fit(h, x, y)), oracle::central_diff(f, p0)) < 1e-5);
}

TEST_CASE("fit time scales sub-cubically") {
  auto time_fit = [](int nx, int ny) {
    std::mt19937_64 g(static_cast<std::uint64_t>(nx * ny));
    const Inputs x = grid(nx, ny, 0.1, 0.1);
    const Vector y = oracle::random_targets(g, x, 0.0);
    const HyperParams h = kron_h(0.0, 1.0, 1.0, 0.3, 0.3, 0.1);
    double best = 1e9;
    for (int rep = 0; rep < 7; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const KronState s = kron_fit(h, x, y);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      CHECK(s.factors.size() == static_cast<Eigen::Index>(nx) * ny);
    }
    return best;
  };
  const double r400 = time_fit(20, 40) / time_fit(20, 20);
  const double r1600 = time_fit(40, 80) / time_fit(40, 40);
  MESSAGE("time(800)/time(400) = " << r400 << ", time(3200)/time(1600) = " << r1600);
  CHECK(r400 < 5.0);
  CHECK(r1600 < 5.0);
}
