#include "sqdm_plant.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>

using namespace sqdm;

namespace {

DipShape quiet_dip() {
  DipShape d;
  d.noise_std = 0.0;
  return d;
}

// Runs the loop against a dip moving linearly from vd0 at `rate` V/s for `duration` s.
EscState run_ramp(const EscConfig& cfg, const DipShape& dip, double vd0, double start_offset, double rate, double duration,
                  std::uint64_t seed) {
  EscState s;
  s.vb_fb = vd0 + start_offset;
  Rng rng(seed);
  const auto steps = static_cast<int>(duration / cfg.dt);
  for (int k = 0; k < steps; ++k) esc_step(s, cfg, dip, 0.0, vd0 + rate * k * cfg.dt, cfg.dt, rng);
  return s;
}

double max_first_difference(const Matrix& m) {
  const double dx = (m.rightCols(m.cols() - 1) - m.leftCols(m.cols() - 1)).cwiseAbs().maxCoeff();
  const double dy = (m.bottomRows(m.rows() - 1) - m.topRows(m.rows() - 1)).cwiseAbs().maxCoeff();
  return std::max(dx, dy);
}

}  // namespace

TEST_CASE("phantoms are deterministic in the seed") {
  const Phantom a = make_phantom(PhantomKind::R1Like, 4), b = make_phantom(PhantomKind::R1Like, 4);
  CHECK(a.v_minus == b.v_minus);
  CHECK(a.v_plus == b.v_plus);
  CHECK(make_phantom(PhantomKind::R1Like, 5).v_minus != a.v_minus);
}

TEST_CASE("zero bumps give constant maps") {
  PhantomOptions o;
  o.bumps = 0;
  const Phantom p = make_phantom(PhantomKind::R1Like, 1, o);
  CHECK(p.v_minus.maxCoeff() == p.v_minus.minCoeff());
  CHECK(p.v_plus.maxCoeff() == p.v_plus.minCoeff());
}

TEST_CASE("default grid sizes") {
  const Phantom r1 = make_phantom(PhantomKind::R1Like, 1);
  CHECK(r1.grid.nx == 63);
  CHECK(r1.grid.ny == 63);
  CHECK(r1.v_minus.rows() == 63);
  const Phantom r2 = make_phantom(PhantomKind::R2Like, 1);
  CHECK(r2.grid.nx == 200);
  CHECK(r2.v_plus.cols() == 200);
  CHECK(r2.bumps > r1.bumps);
}

TEST_CASE("maps are smooth and keep their sign") {
  for (PhantomKind kind : {PhantomKind::R1Like, PhantomKind::R2Like})
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const Phantom p = make_phantom(kind, seed);
      CHECK(max_first_difference(p.v_minus) <= p.dip.width / 4.0);
      CHECK(max_first_difference(p.v_plus) <= p.dip.width / 4.0);
      CHECK(p.v_minus.maxCoeff() < 0.0);
      CHECK(p.v_plus.minCoeff() > 0.0);
      CHECK(p.bumps >= 3);
    }
}

TEST_CASE("bilinear dip position matches pixels and interpolates") {
  const Phantom p = make_phantom(PhantomKind::R1Like, 2);
  CHECK(p.dip_position(Polarity::Negative, 3.0, 7.0) == p.v_minus(7, 3));
  const double mid = p.dip_position(Polarity::Positive, 3.5, 7.0);
  CHECK(mid == doctest::Approx(0.5 * (p.v_plus(7, 3) + p.v_plus(7, 4))).epsilon(1e-14));
  CHECK(p.dip_position(Polarity::Negative, -5.0, 100.0) == p.v_minus(62, 0));
}

TEST_CASE("spectrum at the dip bottom and far away") {
  const DipShape dip = quiet_dip();
  const double vd = -0.8;
  CHECK(spectrum_clean(dip, vd, vd) == dip.background_slope * vd * vd - dip.depth);
  const double far = 2.0;
  CHECK(spectrum_clean(dip, far, vd) == doctest::Approx(dip.background_slope * far * far).epsilon(1e-12));
  PhantomOptions o;
  o.dip = dip;
  const Phantom p = make_phantom(PhantomKind::R1Like, 3, o);
  Rng rng(1);
  const double v = p.v_minus(10, 20);
  CHECK(spectrum_eval(p, Polarity::Negative, v, 20.0, 10.0, rng) == spectrum_clean(dip, v, v));
}

TEST_CASE("noise-free argmin sits at the dip position") {
  const DipShape dip = quiet_dip();
  for (double vd : {-1.2, -0.4, 0.5, 1.1}) {
    double best = 0.0, best_f = 1e9;
    for (int k = -20000; k <= 20000; ++k) {
      const double vb = vd + k * 1e-6;
      const double f = spectrum_clean(dip, vb, vd);
      if (f < best_f) {
        best_f = f;
        best = vb;
      }
    }
    CHECK(std::abs(best - vd) <= 1e-4 * dip.width);
  }
}

TEST_CASE("a fine noisy sweep finds the dip") {
  const DipShape dip;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    CHECK(std::abs(sweep_for_dip(dip, Polarity::Negative, -0.9, rng, 1e-4) + 0.9) < 1e-3);
    CHECK(std::abs(sweep_for_dip(dip, Polarity::Positive, 0.7, rng, 1e-4) - 0.7) < 1e-3);
  }
}

TEST_CASE("spectrum samples are deterministic given the seed") {
  const Phantom p = make_phantom(PhantomKind::R1Like, 1);
  Rng a(9), b(9);
  for (int k = 0; k < 10; ++k)
    CHECK(spectrum_eval(p, Polarity::Positive, 0.5, 3.0, 4.0, a) == spectrum_eval(p, Polarity::Positive, 0.5, 3.0, 4.0, b));
}

TEST_CASE("extremum seeking settles near a static dip") {
  const EscConfig cfg;
  const DipShape dip = quiet_dip();
  const double settle = 10.0 / cfg.bandwidth(dip);
  for (double offset : {0.06, -0.06, 0.02}) {
    const EscState s = run_ramp(cfg, dip, -0.7, offset, 0.0, settle, 1);
    CHECK(s.locked);
    CHECK(std::abs(s.vb_fb + 0.7) < 2.0 * cfg.amplitude);
    CHECK(std::abs(esc_dip_estimate(s, cfg, dip) + 0.7) < cfg.amplitude * cfg.amplitude);
  }
}

TEST_CASE("starting outside the dip loses lock") {
  const EscConfig cfg;
  const EscState s = run_ramp(cfg, DipShape{}, -0.7, 0.3, 0.0, 1.0, 2);
  CHECK_FALSE(s.locked);
  CHECK(std::abs(s.vb_fb + 0.7) > DipShape{}.width);
}

TEST_CASE("slow ramps keep lock over a line") {
  const EscConfig cfg;
  const DipShape dip;
  const double slow = cfg.ki * cfg.amplitude * dip.depth * 0.1;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) CHECK(run_ramp(cfg, dip, -0.7, 0.0, slow, 2.0, seed).locked);

  // empirical limit, then half of it
  double lo = slow, hi = 20.0;
  for (int it = 0; it < 20; ++it) {
    const double mid = 0.5 * (lo + hi);
    (run_ramp(cfg, dip, -0.7, 0.0, mid, 1.0, 1).locked ? lo : hi) = mid;
  }
  MESSAGE("largest ramp rate keeping lock over 1 s: " << lo << " V/s");
  for (std::uint64_t seed = 1; seed <= 5; ++seed) CHECK(run_ramp(cfg, dip, -0.7, 0.0, 0.5 * lo, 1.0, seed).locked);
}

TEST_CASE("lock loss is monotone in the ramp rate") {
  const EscConfig cfg;
  const DipShape dip;
  const std::vector<double> rates = {0.05, 0.1, 0.2, 0.4, 0.8, 1.2, 1.6, 2.4, 3.2, 5.0};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    bool lost = false;
    int transitions = 0;
    for (double r : rates) {
      const bool locked = run_ramp(cfg, dip, -0.7, 0.0, r, 0.5, seed).locked;
      if (lost) CHECK_FALSE(locked);
      if (!locked && !lost) ++transitions;
      lost = lost || !locked;
    }
    CHECK(lost);
    CHECK(transitions == 1);
  }
}

TEST_CASE("phantom save and load round trip") {
  const Phantom p = make_phantom(PhantomKind::R1Like, 7);
  const auto dir = std::filesystem::temp_directory_path() / "sqdm_plant_roundtrip";
  std::filesystem::remove_all(dir);
  save_phantom(p, dir.string());
  const Phantom q = load_phantom(dir.string());
  CHECK(q.v_minus == p.v_minus);
  CHECK(q.v_plus == p.v_plus);
  CHECK(q.kind == p.kind);
  CHECK(q.seed == p.seed);
  CHECK(q.grid.nx == 63);
  CHECK(q.grid.pitch_x == p.grid.pitch_x);
  std::filesystem::remove_all(dir);
  CHECK_THROWS(load_phantom(dir.string()));
}

TEST_CASE("extremum seeking configuration limits") {
  const DipShape dip;
  EscConfig cfg;
  CHECK_NOTHROW(cfg.validate(dip));
  cfg.amplitude = 0.06;
  CHECK_THROWS_AS(cfg.validate(dip), std::invalid_argument);
  cfg = EscConfig{};
  cfg.dt = 1e-3;
  CHECK_THROWS_AS(cfg.validate(dip), std::invalid_argument);
}

TEST_CASE("phantom kind names") {
  CHECK(phantom_kind_from_string("r1") == PhantomKind::R1Like);
  CHECK(phantom_kind_from_string("r2") == PhantomKind::R2Like);
  CHECK_THROWS(phantom_kind_from_string("r3"));
}
