#include "sparse_ssgpr.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace sqdm;

namespace {

// Function-space reference: dense GP with the sparse spectrum kernel. The
// library adds no jitter in feature space, so none is added here.
oracle::Posterior dense_ss(const HyperParams& h, const Inputs& x, const Vector& y, const Inputs& t) {
  auto k = [&](auto p, auto q) { return oracle::ss(p, q, h.sigma_f(), h.points); };
  oracle::Mat ky = oracle::gram(x, x, k);
  ky.diagonal().array() += h.noise_variance();
  return oracle::dense_gp(ky, oracle::gram(x, t, k), oracle::gram(t, t, k), (y.array() - h.mean_c).matrix(),
                          h.mean_c);
}

double max_diff(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("feature map has 2m cosine and sine columns") {
  Inputs s(2, 2);
  s << 0.1, 0.0, 0.0, 0.25;
  Inputs x(1, 2);
  x << 1.0, 1.0;
  const Matrix phi = spectral_features(s, x);
  REQUIRE(phi.cols() == 4);
  CHECK(phi(0, 0) == doctest::Approx(std::cos(0.2 * std::numbers::pi)));
  CHECK(phi(0, 1) == doctest::Approx(std::cos(0.5 * std::numbers::pi)));
  CHECK(phi(0, 2) == doctest::Approx(std::sin(0.2 * std::numbers::pi)));
  CHECK(phi(0, 3) == doctest::Approx(1.0));
}

TEST_CASE("equals the exact GP under the sparse spectrum kernel") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 g(seed);
    HyperParams h = HyperParams::se(-0.2, 0.9, {0.8}, 0.2);
    const Inputs x = oracle::random_points(g, 15, 3.0);
    const Vector y = oracle::random_targets(g, x, -0.2);
    h.points = initial_frequencies(4, 0.8, seed);
    const Inputs t = oracle::random_points(g, 10, 3.0);
    const SsgprState s = ssgpr_fit(h, x, y);
    const GpPosterior p = ssgpr_predict(s, t);
    const oracle::Posterior ref = dense_ss(h, x, y, t);
    CHECK(max_diff(p.mean, ref.mean) < 1e-8);
    CHECK(max_diff(p.variance(), ref.var) < 1e-8);
    CHECK(ssgpr_log_likelihood(s) == doctest::Approx(ref.log_lik).epsilon(1e-8));
  }
}

TEST_CASE("a single zero frequency is constant regression") {
  HyperParams h = HyperParams::se(0.5, 1.2, {1.0}, 0.3);
  h.points = Inputs::Zero(1, 2);
  std::mt19937_64 g(2);
  const Inputs x = oracle::random_points(g, 7, 3.0);
  const Vector y = oracle::random_targets(g, x, 0.5);
  const GpPosterior p = ssgpr_predict(ssgpr_fit(h, x, y), oracle::random_points(g, 3, 3.0));
  const double sf2 = 1.44, sn2 = 0.09, n = 7.0;
  const double mean = 0.5 + sf2 * (y.array() - 0.5).sum() / (n * sf2 + sn2);
  for (int i = 0; i < 3; ++i) {
    CHECK(p.mean(i) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(p.variance()(i) == doctest::Approx(sf2 * sn2 / (n * sf2 + sn2)).epsilon(1e-10));
  }
}

TEST_CASE("no data gives the prior") {
  HyperParams h = HyperParams::se(0.3, 0.8, {1.0}, 0.1);
  h.points = initial_frequencies(5, 1.0, 3);
  std::mt19937_64 g(3);
  const GpPosterior p = ssgpr_predict(ssgpr_fit(h, Inputs(0, 2), Vector(0)), oracle::random_points(g, 4, 2.0));
  for (int i = 0; i < 4; ++i) {
    CHECK(p.mean(i) == 0.3);
    CHECK(p.variance()(i) == doctest::Approx(0.64).epsilon(1e-12));
  }
}

TEST_CASE("variance never exceeds the signal variance") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 g(seed);
    HyperParams h = HyperParams::se(0.0, 1.1, {0.6}, 0.1);
    h.points = initial_frequencies(6, 0.6, seed);
    const Inputs x = oracle::random_points(g, 20, 3.0);
    const SsgprState s = ssgpr_fit(h, x, oracle::random_targets(g, x, 0.0));
    const Vector v = ssgpr_predict(s, oracle::random_points(g, 15, 5.0)).variance();
    CHECK(v.minCoeff() >= 0.0);
    CHECK(v.maxCoeff() <= h.signal_variance() + 1e-8);
  }
}

TEST_CASE("likelihood gradient including frequencies") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    std::mt19937_64 g(seed);
    HyperParams h = HyperParams::se(0.1, 0.9, {0.7}, 0.15);
    h.points = initial_frequencies(3, 0.7, seed);
    const Inputs x = oracle::random_points(g, 12, 3.0);
    const Vector y = oracle::random_targets(g, x, 0.1);
    const Vector p0 = pack(ParamLayout::Spectral, h);
    auto f = [&](const Vector& p) { return ssgpr_log_likelihood(ssgpr_fit(unpack(ParamLayout::Spectral, p, h), x, y)); };
    const Vector analytic = ssgpr_grad_log_likelihood(ssgpr_fit(h, x, y));
    REQUIRE(analytic.size() == 3 + 6);
    CHECK(oracle::rel_err(analytic, oracle::central_diff(f, p0)) < 1e-4);
  }
}

TEST_CASE("flipping the sign of any frequency leaves the model unchanged") {
  std::mt19937_64 g(4);
  HyperParams h = HyperParams::se(0.0, 1.0, {0.5}, 0.1);
  h.points = initial_frequencies(5, 0.5, 9);
  const Inputs x = oracle::random_points(g, 20, 3.0);
  const Vector y = oracle::random_targets(g, x, 0.0);
  const Inputs t = oracle::random_points(g, 5, 3.0);
  const SsgprState base = ssgpr_fit(h, x, y);
  for (Eigen::Index r = 0; r < 5; ++r) {
    HyperParams hf = h;
    hf.points.row(r) *= -1.0;
    const SsgprState s = ssgpr_fit(hf, x, y);
    CHECK(ssgpr_log_likelihood(s) == doctest::Approx(ssgpr_log_likelihood(base)).epsilon(1e-12));
    CHECK(max_diff(ssgpr_predict(s, t).mean, ssgpr_predict(base, t).mean) < 1e-12);
  }
}

TEST_CASE("implied kernel diagonal is the signal variance") {
  HyperParams h = HyperParams::se(0.0, 1.4, {0.5}, 0.1);
  h.points = initial_frequencies(7, 0.5, 1);
  std::mt19937_64 g(5);
  const Inputs x = oracle::random_points(g, 6, 3.0);
  const Matrix phi = spectral_features(h.points, x);
  const Vector diag = (phi * phi.transpose()).diagonal() * h.signal_variance() / 7.0;
  CHECK((diag.array() - h.signal_variance()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("initial frequencies follow the SE spectral density") {
  const Inputs s = initial_frequencies(4000, 0.5, 11);
  const double sd = 1.0 / (2.0 * std::numbers::pi * 0.5);
  const Eigen::Vector2d mean = s.colwise().mean();
  const Eigen::Vector2d var = (s.rowwise() - mean.transpose()).colwise().squaredNorm() / 3999.0;
  CHECK(std::abs(mean(0)) < 0.1 * sd);
  CHECK(std::abs(mean(1)) < 0.1 * sd);
  CHECK(std::sqrt(var(0)) == doctest::Approx(sd).epsilon(0.05));
  CHECK(std::sqrt(var(1)) == doctest::Approx(sd).epsilon(0.05));
  CHECK(initial_frequencies(10, 0.5, 3) == initial_frequencies(10, 0.5, 3));
}

TEST_CASE("many SE-distributed frequencies approach the SE posterior") {
  std::mt19937_64 g(6);
  const HyperParams se = HyperParams::se(0.0, 1.0, {0.8}, 0.1);
  const Inputs x = oracle::random_points(g, 30, 3.0);
  const Vector y = oracle::random_targets(g, x, 0.0);
  const Inputs t = oracle::random_points(g, 20, 3.0);
  const Vector exact = predict(fit(KernelKind::SEIso, se, x, y), t).mean;
  auto err = [&](Eigen::Index m) {
    double acc = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      HyperParams h = se;
      h.points = initial_frequencies(m, 0.8, seed);
      acc += (ssgpr_predict(ssgpr_fit(h, x, y), t).mean - exact).cwiseAbs().mean() / 5.0;
    }
    return acc;
  };
  const double e20 = err(20), e2000 = err(2000);
  MESSAGE("mean abs deviation m=20: " << e20 << ", m=2000: " << e2000);
  CHECK(e2000 < e20);
  CHECK(e2000 < 0.05);
}
