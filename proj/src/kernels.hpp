// Constant mean, squared-exponential and sparse-spectrum covariance functions.
//
// All positive hyperparameters are stored as logarithms so that gradient
// based optimisation runs unconstrained. Inducing inputs (FITC) and spectral
// frequencies (SSGPR) ride along in HyperParams::points.
#pragma once

#include "core.hpp"

#include <optional>
#include <vector>

namespace sqdm {

enum class KernelKind { SEIso, SEArd, SparseSpectrum };

const char* to_string(KernelKind k);

/// Relative jitter added to every kernel self-matrix before factorisation.
inline constexpr double kJitter = 1e-10;

struct HyperParams {
  double mean_c = 0.0;
  double log_sigma_f = 0.0;
  Vector log_lengths = Vector::Zero(1);
  double log_sigma_n = -4.605170185988091;  // log(0.01)
  /// m x 2 block: inducing inputs (nm) or spectral frequencies (1/nm).
  Inputs points;
  /// Kronecker product kernel: one amplitude per grid axis, sigma_f^2 = prod_d sigma_{f,d}^2.
  std::optional<Eigen::Vector2d> axis_log_sigma_f;

  double sigma_f() const;
  double signal_variance() const { return sigma_f() * sigma_f(); }
  double sigma_n() const { return std::exp(log_sigma_n); }
  double noise_variance() const { return std::exp(2.0 * log_sigma_n); }
  double length(int d) const;
  double jitter() const { return kJitter * signal_variance(); }

  static HyperParams se(double c, double sigma_f, std::initializer_list<double> lengths, double sigma_n);
};

/// Flattening of HyperParams into the vector the optimiser works on.
///  SE:       [c, log sf, log l_1..l_D, log sn]
///  SEPoints: SE followed by inducing coordinates x_1, y_1, x_2, y_2, ...
///  Spectral: [c, log sf, log sn, s_1x, s_1y, ...]   (length scales are absorbed in s)
///  KronAxes: [c, log sf_x, log sf_y, log l_x, log l_y, log sn]
enum class ParamLayout { SE, SEPoints, Spectral, KronAxes };

Vector pack(ParamLayout layout, const HyperParams& h);
/// Inverse of pack; `shape` supplies sizes (length count, number of points).
HyperParams unpack(ParamLayout layout, const Vector& v, const HyperParams& shape);

/// Constant mean.
Vector mean_eval(const HyperParams& h, const Inputs& x);

/// Covariance matrix K(A, B).
Matrix kernel_matrix(KernelKind kind, const HyperParams& h, const Inputs& a, const Inputs& b);

/// Derivatives of K(A, B) w.r.t. the kernel's own parameters, in order:
///  SE kinds:        d/dlog sf, then d/dlog l_d for every length
///  SparseSpectrum:  d/dlog sf, then d/ds_{r,d} for r = 1..m, d = x, y
std::vector<Matrix> kernel_grad(KernelKind kind, const HyperParams& h, const Inputs& a, const Inputs& b);

/// Number of length-scale entries the kind expects.
int expected_lengths(KernelKind kind);
void check_hyper(KernelKind kind, const HyperParams& h);

}  // namespace sqdm
