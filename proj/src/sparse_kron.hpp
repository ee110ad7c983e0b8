// Exact GP inference on full Cartesian grids via Kronecker algebra.
//
// With a product kernel k(a,b) = k_x(a_x,b_x) k_y(a_y,b_y) the covariance of
// grid data in raster order is K = K_y (x) K_x. Both factors are
// eigendecomposed and every solve runs through the factors; the n x n matrix
// is never formed.
#pragma once

#include "gp_exact.hpp"

namespace sqdm {

struct KronFactors {
  Vector x_axis, y_axis;  // ascending grid coordinates
  Matrix kx, ky;          // factor covariances incl. jitter
  Matrix qx, qy;          // eigenvectors
  Vector ex, ey;          // eigenvalues

  Eigen::Index size() const { return x_axis.size() * y_axis.size(); }
};

struct KronState {
  HyperParams hyper;    // needs axis_log_sigma_f and two lengths
  KronFactors factors;
  Matrix residual;      // nx x ny, column j holds line j
  Matrix alpha;         // same layout
  double log_lik = 0.0;
};

/// Builds hyperparameters for the product kernel from SE-ARD ones, splitting
/// the amplitude evenly over both axes.
HyperParams kron_hyper_from_ard(const HyperParams& ard);
/// SE-ARD hyperparameters that describe the same product kernel.
HyperParams ard_hyper_from_kron(const HyperParams& kron);

/// Throws DimensionError when the inputs do not cover a full grid exactly once.
KronState kron_fit(const HyperParams& h, const Inputs& x, const Vector& y);
GpPosterior kron_predict(const KronState& state, const Inputs& test);
Vector kron_predict_mean(const KronState& state, const Inputs& test);
double kron_log_likelihood(const KronState& state);
/// Gradient over pack(ParamLayout::KronAxes, h).
Vector kron_grad_log_likelihood(const KronState& state);

/// All pairwise products of factor eigenvalues (eigenvalues of K_y (x) K_x).
Vector kron_spectrum(const KronFactors& f);

/// Dense Kronecker product, for checks on small grids.
Matrix kron_dense(const Matrix& outer, const Matrix& inner);

}  // namespace sqdm
