// Simulated microscope: synthetic dip-position maps, the frequency-shift
// spectrum with a Gaussian dip, and a dither/demodulation extremum seeking
// controller that keeps the bias voltage at the dip minimum.
#pragma once

#include "core.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace sqdm {

enum class PhantomKind { R1Like, R2Like };

const char* to_string(PhantomKind k);
PhantomKind phantom_kind_from_string(const std::string& s);

struct DipShape {
  double depth = 2.0;               // Hz
  double width = 0.1;               // V
  double background_slope = 2e-4;   // Hz / V^2
  double noise_std = 0.05;          // Hz
};

struct PhantomOptions {
  int bumps = -1;          // -1: seeded count per kind
  double pitch = 0.1;      // nm
  int nx = 0, ny = 0;      // 0: kind default (63 or 200)
  DipShape dip;
};

struct Phantom {
  PhantomKind kind = PhantomKind::R1Like;
  std::uint64_t seed = 0;
  int bumps = 0;
  GridSpec grid;
  Matrix v_minus;  // ny x nx, volts, < 0
  Matrix v_plus;   // ny x nx, volts, > 0
  DipShape dip;

  const Matrix& map(Polarity p) const { return p == Polarity::Negative ? v_minus : v_plus; }
  /// Bilinear interpolation in pixel coordinates (clamped to the grid).
  double dip_position(Polarity p, double px, double py) const;
};

Phantom make_phantom(PhantomKind kind, std::uint64_t seed, const PhantomOptions& opts = {});

/// Writes v_minus.txt and v_plus.txt (matrix format with '#' parameter header).
void save_phantom(const Phantom& ph, const std::string& dir);
Phantom load_phantom(const std::string& dir);

/// Noise-free spectrum: slope * vb^2 - depth * exp(-(vb - vd)^2 / (2 width^2)).
double spectrum_clean(const DipShape& dip, double vb, double vd);

using Rng = std::mt19937_64;

/// Spectrum at tip pixel position (px, py) plus N(0, noise_std^2).
double spectrum_eval(const Phantom& ph, Polarity pol, double vb, double px, double py, Rng& rng);

/// Slow bias sweep at a fixed tip position over the polarity's half axis:
/// argmin of the smoothed noisy spectrum, refined by a least-squares fit of the dip shape.
double sweep_for_dip(const DipShape& dip, Polarity pol, double vd, Rng& rng, double step = 1e-3, double range = 3.0);

struct EscConfig {
  double amplitude = 0.02;                        // V
  double omega = 2.0 * 3.141592653589793 * 200.0; // rad/s
  double ki = 5.0;                                // integrator gain, V / (Hz s)
  double lowpass_tau = 0.01;                      // s
  double highpass_tau = 0.01;                     // s
  double dt = 5e-5;                               // s

  /// Throws std::invalid_argument on a < width/2 or < 20 samples per period violations.
  void validate(const DipShape& dip) const;
  /// Small-signal tracking rate (1/s) around the dip minimum.
  double bandwidth(const DipShape& dip) const;
};

struct EscState {
  double t = 0.0;
  double vb_fb = 0.0;
  double dc = 0.0;        // high-pass (washout) state
  double grad = 0.0;      // demodulated, low-passed gradient estimate
  double vb_lp = 0.0;     // bias through the same low-pass as grad
  bool primed = false;
  bool locked = true;
  // last step, for logging
  double last_ff = 0.0;
  double last_applied = 0.0;
};

/// One dither / demodulate / integrate step of length dt. `vd` is the true
/// dip position at the current tip location. Loss of lock (|Vb - vd| > width)
/// clears `locked` and is sticky.
void esc_step(EscState& s, const EscConfig& cfg, const DipShape& dip, double vb_ff, double vd, double dt, Rng& rng);

/// Dip position implied by the demodulated gradient: LP[Vb] - grad / g with
/// g = (a/2) depth / width^2, the small-signal gain of the gradient estimate.
/// Near the minimum this is the low-passed dip position, independent of how
/// far the bias is from it.
double esc_dip_estimate(const EscState& s, const EscConfig& cfg, const DipShape& dip);

}  // namespace sqdm
