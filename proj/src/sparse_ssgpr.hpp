// Sparse spectrum GP regression: Bayesian linear regression on m cosine/sine
// feature pairs whose frequencies are learned with the other hyperparameters.
#pragma once

#include "gp_exact.hpp"

#include <cstdint>

namespace sqdm {

struct SsgprState {
  HyperParams hyper;  // points = spectral frequencies (1/nm)
  Inputs inputs;
  Vector residual;
  Matrix phi;                  // n x 2m, [cos | sin]
  Eigen::LLT<Matrix> chol_a;   // phi^T phi + (m sn^2 / sf^2) I
  Vector weight_mean;          // 2m
  double log_lik = 0.0;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index frequency_count() const { return hyper.points.rows(); }
};

/// Trigonometric features [cos(2 pi s_r^T x) | sin(2 pi s_r^T x)].
Matrix spectral_features(const Inputs& frequencies, const Inputs& x);

SsgprState ssgpr_fit(const HyperParams& h, const Inputs& x, const Vector& y);
GpPosterior ssgpr_predict(const SsgprState& state, const Inputs& test);
Vector ssgpr_predict_mean(const SsgprState& state, const Inputs& test);
double ssgpr_log_likelihood(const SsgprState& state);
/// Gradient over pack(ParamLayout::Spectral, h).
Vector ssgpr_grad_log_likelihood(const SsgprState& state);

/// Seeded draws from the SE spectral density N(0, (2 pi l)^{-2} I).
Inputs initial_frequencies(Eigen::Index m, double length, std::uint64_t seed);

}  // namespace sqdm
