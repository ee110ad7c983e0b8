#include "control2dof.hpp"
#include "hyperopt.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace sqdm;

namespace {

// Concave quadratic -1/2 (x - x*)^T A (x - x*) with A SPD.
struct Quadratic {
  Matrix a;
  Vector opt;
  ValueGrad operator()(const Vector& x) const {
    const Vector d = x - opt;
    return {-0.5 * d.dot(a * d), -(a * d)};
  }
};

Quadratic quadratic3() {
  Matrix a(3, 3);
  a << 4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0;
  Vector opt(3);
  opt << 0.3, -0.7, 1.1;
  return {a, opt};
}

// Sample of a zero-mean SE GP with noise at random inputs.
std::pair<Inputs, Vector> gp_sample(std::uint64_t seed, int n, double l, double sf, double sn, double extent) {
  std::mt19937_64 g(seed);
  const Inputs x = oracle::random_points(g, n, extent);
  oracle::Mat k = oracle::gram(x, x, [&](auto p, auto q) { return oracle::se(p, q, sf, l, l); });
  k.diagonal().array() += sn * sn + 1e-10;
  const oracle::Mat lk = k.llt().matrixL();
  std::normal_distribution<double> nd;
  oracle::Vec z(n);
  for (int i = 0; i < n; ++i) z(i) = nd(g);
  return {x, lk * z};
}

}  // namespace

TEST_CASE("stationary start returns unchanged in zero iterations") {
  const Quadratic q = quadratic3();
  const OptimizeResult r = maximize_cg(q, q.opt, OptimizerConfig{});
  CHECK(r.iterations == 0);
  CHECK(r.x == q.opt);
}

TEST_CASE("three-variable quadratic converges to the analytic maximiser") {
  const Quadratic q = quadratic3();
  OptimizerConfig cfg;
  cfg.max_cg_iters = 3;
  cfg.grad_tol = 1e-12;
  cfg.max_step = 100.0;
  const OptimizeResult r = maximize_cg(q, Vector::Zero(3), cfg);
  CHECK(r.iterations <= 3);
  CHECK((r.x - q.opt).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("objective trace is non-decreasing and satisfies Armijo") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto [x, y] = gp_sample(seed, 60, 1.0, 1.0, 0.1, 5.0);
    const HyperParams h0 = HyperParams::se(0.0, 0.5, {3.0}, 0.3);
    const AdaptResult r = optimize_hyper(GpMethod::Exact, KernelKind::SEIso, h0, x, y, OptimizerConfig{});
    REQUIRE(r.opt.trace.size() >= 2);
    for (std::size_t k = 1; k < r.opt.trace.size(); ++k) CHECK(r.opt.trace[k] >= r.opt.trace[k - 1]);
    CHECK(log_likelihood(fit(KernelKind::SEIso, r.hyper, x, y)) >= log_likelihood(fit(KernelKind::SEIso, h0, x, y)));
    CHECK(r.hyper.sigma_f() > 0.0);
    CHECK(r.hyper.sigma_n() > 0.0);
  }
}

TEST_CASE("length scale is recovered from synthetic GP data") {
  std::vector<double> ratios;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto [x, y] = gp_sample(seed, 200, 1.5, 0.8, 0.05, 12.0);
    OptimizerConfig cfg;
    cfg.max_cg_iters = 200;
    const AdaptResult r = optimize_hyper(GpMethod::Exact, KernelKind::SEIso, HyperParams::se(0.0, 1.0, {1.0}, 0.1), x,
                                         y, cfg);
    ratios.push_back(r.hyper.length(0) / 1.5);
  }
  std::sort(ratios.begin(), ratios.end());
  MESSAGE("recovered l / true l, sorted: " << ratios.front() << " .. " << ratios.back());
  const double median = 0.5 * (ratios[4] + ratios[5]);
  CHECK(std::abs(median - 1.0) < 0.25);
  const auto within = std::count_if(ratios.begin(), ratios.end(), [](double r) { return std::abs(r - 1.0) < 0.25; });
  CHECK(within >= 8);
}

TEST_CASE("zero budget leaves the hyperparameters unchanged") {
  const auto [x, y] = gp_sample(3, 30, 1.0, 1.0, 0.1, 4.0);
  const HyperParams h0 = HyperParams::se(0.2, 0.7, {2.0}, 0.2);
  OptimizerConfig cfg;
  cfg.budget_s = 0.0;
  const AdaptResult r = optimize_hyper(GpMethod::Exact, KernelKind::SEIso, h0, x, y, cfg);
  CHECK(r.fell_back);
  CHECK(pack(ParamLayout::SE, r.hyper) == pack(ParamLayout::SE, h0));
}

TEST_CASE("failing initial point") {
  auto bad = [](const Vector&) -> ValueGrad { throw NumericError("nope"); };
  CHECK_THROWS_AS(maximize_cg(bad, Vector::Zero(2), OptimizerConfig{}), NumericError);
  HyperParams h0 = HyperParams::se(0.0, 1.0, {1.0}, 0.1);
  h0.log_sigma_f = std::numeric_limits<double>::quiet_NaN();
  const auto [x, y] = gp_sample(4, 10, 1.0, 1.0, 0.1, 3.0);
  AdaptResult r;
  CHECK_NOTHROW(r = optimize_hyper(GpMethod::Exact, KernelKind::SEIso, h0, x, y, OptimizerConfig{}));
  CHECK(r.fell_back);
}

TEST_CASE("failing trial points are backtracked") {
  const Quadratic q = quadratic3();
  auto f = [&](const Vector& x) -> ValueGrad {
    if (x.norm() > 2.0) throw NumericError("outside");
    return q(x);
  };
  OptimizerConfig cfg;
  cfg.max_step = 50.0;
  cfg.max_cg_iters = 50;
  const OptimizeResult r = maximize_cg(f, Vector::Zero(3), cfg);
  CHECK((r.x - q.opt).norm() < 1e-3);
}

TEST_CASE("window of five lines on 63 columns") {
  CHECK(window_lines(ModelKind::Fitc) == 5);
  CHECK(window_lines(ModelKind::Ssgpr) == 5);
  const Eigen::Index n = 5 * 63;
  CHECK(n == 315);
  CHECK(sparse_size(n) == 105);
}

TEST_CASE("Gaussian priors add log density and gradient") {
  HyperPrior p;
  p.per_param = {std::nullopt, GaussianPrior{1.0, 0.25}};
  Vector x(2);
  x << 5.0, 2.0;
  double v = 0.0;
  Vector g = Vector::Zero(2);
  p.apply(x, v, g);
  CHECK(v == doctest::Approx(-0.5 * 1.0 / 0.25 - 0.5 * std::log(2.0 * std::numbers::pi * 0.25)));
  CHECK(g(0) == 0.0);
  CHECK(g(1) == doctest::Approx(-4.0));
  CHECK_FALSE(p.empty());
  CHECK(HyperPrior{}.empty());
}

TEST_CASE("a prior pulls the optimum towards its mean") {
  const Quadratic q = quadratic3();
  HyperPrior p;
  p.per_param = {GaussianPrior{5.0, 1e-6}, std::nullopt, std::nullopt};
  OptimizerConfig cfg;
  cfg.max_cg_iters = 200;
  cfg.max_step = 50.0;
  const OptimizeResult r = maximize_cg(q, Vector::Zero(3), cfg, &p);
  CHECK(r.x(0) == doctest::Approx(5.0).epsilon(1e-3));
}

TEST_CASE("optimisation is deterministic") {
  const auto [x, y] = gp_sample(5, 50, 1.0, 1.0, 0.1, 5.0);
  HyperParams h0 = HyperParams::se(0.0, 1.0, {0.8}, 0.1);
  h0.points = initial_inducing(x, 10);
  const AdaptResult a = optimize_hyper(GpMethod::Fitc, KernelKind::SEIso, h0, x, y, OptimizerConfig{});
  const AdaptResult b = optimize_hyper(GpMethod::Fitc, KernelKind::SEIso, h0, x, y, OptimizerConfig{});
  CHECK(pack(ParamLayout::SEPoints, a.hyper) == pack(ParamLayout::SEPoints, b.hyper));
  CHECK(a.opt.trace == b.opt.trace);
}

TEST_CASE("data-driven initial hyperparameters") {
  Vector y(4);
  y << 1.0, 2.0, 3.0, 4.0;
  const HyperParams h = initial_hyper(y, 0.5, 2);
  CHECK(h.mean_c == 2.5);
  CHECK(h.length(0) == doctest::Approx(2.5));
  CHECK(h.length(1) == doctest::Approx(2.5));
  CHECK(h.sigma_n() == doctest::Approx(0.01 * h.sigma_f()));
}

TEST_CASE("configuration validation") {
  OptimizerConfig cfg;
  cfg.shrink = 1.5;
  CHECK_THROWS(cfg.validate());
  cfg = OptimizerConfig{};
  cfg.budget_s = -1.0;
  CHECK_THROWS(cfg.validate());
}
