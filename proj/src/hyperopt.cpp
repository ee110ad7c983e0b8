#include "hyperopt.hpp"

#include "sparse_fitc.hpp"
#include "sparse_kron.hpp"
#include "sparse_ssgpr.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace sqdm {

void OptimizerConfig::validate() const {
  if (max_cg_iters < 0 || !(armijo > 0.0 && armijo < 1.0) || !(shrink > 0.0 && shrink < 1.0) || max_backtracks < 1 ||
      !(grad_tol > 0.0) || !(max_step > 0.0))
    throw std::invalid_argument("invalid optimizer configuration");
  if (budget_s && *budget_s < 0.0) throw std::invalid_argument("optimizer budget must be >= 0");
}

bool HyperPrior::empty() const {
  for (const auto& p : per_param)
    if (p) return false;
  return true;
}

void HyperPrior::apply(const Vector& x, double& value, Vector& grad) const {
  for (std::size_t k = 0; k < per_param.size() && static_cast<Eigen::Index>(k) < x.size(); ++k) {
    if (!per_param[k]) continue;
    const auto i = static_cast<Eigen::Index>(k);
    const GaussianPrior& p = *per_param[k];
    const double d = x(i) - p.mean;
    value += -0.5 * d * d / p.variance - 0.5 * std::log(2.0 * std::numbers::pi * p.variance);
    grad(i) += -d / p.variance;
  }
}

namespace {

struct Point {
  Vector x;
  double f = -std::numeric_limits<double>::infinity();
  Vector g;
  bool ok = false;
};

}  // namespace

OptimizeResult maximize_cg(const Objective& objective, const Vector& x0, const OptimizerConfig& cfg,
                           const HyperPrior* prior) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  OptimizeResult res;

  auto eval = [&](const Vector& x) {
    Point p;
    p.x = x;
    ++res.evaluations;
    try {
      ValueGrad vg = objective(x);
      if (prior) prior->apply(x, vg.value, vg.grad);
      if (std::isfinite(vg.value) && vg.grad.allFinite()) {
        p.f = vg.value;
        p.g = std::move(vg.grad);
        p.ok = true;
      }
    } catch (const std::exception&) {
      p.ok = false;
    }
    return p;
  };

  Point cur = eval(x0);
  if (!cur.ok) throw NumericError("optimizer: objective fails at the initial point");
  res.trace.push_back(cur.f);
  Vector dir = cur.g;
  double step_guess = std::min(1.0, cfg.max_step / std::max(dir.norm(), 1e-300));
  res.stop_reason = "iteration cap";

  for (int iter = 0; iter < cfg.max_cg_iters; ++iter) {
    if (cur.g.norm() < cfg.grad_tol) {
      res.stop_reason = "gradient norm";
      break;
    }
    if (cfg.budget_s && std::chrono::duration<double>(clock::now() - start).count() >= *cfg.budget_s) {
      res.stop_reason = "budget";
      break;
    }
    double slope = cur.g.dot(dir);
    if (!(slope > 0.0)) {
      dir = cur.g;
      slope = cur.g.squaredNorm();
    }
    const double dir_norm = dir.norm();
    const double t_cap = cfg.max_step / dir_norm;
    double t = std::min(step_guess, t_cap);

    auto armijo_ok = [&](const Point& p, double tt) { return p.ok && p.f >= cur.f + cfg.armijo * tt * slope; };

    Point best;
    double best_t = 0.0;
    const Point trial = eval(cur.x + t * dir);
    if (armijo_ok(trial, t)) {
      best = trial;
      best_t = t;
    }
    // secant on the directional derivative; exact for quadratics
    double t_next = t;
    if (trial.ok) {
      const double s1 = trial.g.dot(dir);
      if (slope - s1 > 0.0) {
        const double t_sec = std::min(t * slope / (slope - s1), t_cap);
        if (std::isfinite(t_sec) && t_sec > 0.0 && std::abs(t_sec - t) > 1e-12 * t) {
          const Point sec = eval(cur.x + t_sec * dir);
          if (armijo_ok(sec, t_sec) && (!best.ok || sec.f > best.f)) {
            best = sec;
            best_t = t_sec;
          }
          t_next = std::min(t, t_sec);
        }
      }
    }
    for (int b = 0; !best.ok && b < cfg.max_backtracks; ++b) {
      t_next *= cfg.shrink;
      const Point p = eval(cur.x + t_next * dir);
      if (armijo_ok(p, t_next)) {
        best = p;
        best_t = t_next;
      }
    }
    if (!best.ok) {
      res.stop_reason = "line search";
      break;
    }

    // Polak-Ribiere, restarted to steepest ascent when beta < 0
    double beta = best.g.dot(best.g - cur.g) / cur.g.squaredNorm();
    if (!(beta > 0.0) || !std::isfinite(beta)) beta = 0.0;
    const double prev_slope = slope;
    dir = best.g + beta * dir;
    const double new_slope = best.g.dot(dir);
    step_guess = new_slope > 0.0 ? best_t * prev_slope / new_slope : best_t;
    if (!(step_guess > 0.0) || !std::isfinite(step_guess)) step_guess = best_t;

    cur = std::move(best);
    res.trace.push_back(cur.f);
    ++res.iterations;
  }
  if (res.iterations == cfg.max_cg_iters && cur.g.norm() < cfg.grad_tol) res.stop_reason = "gradient norm";
  res.x = cur.x;
  res.value = cur.f;
  return res;
}

const char* to_string(GpMethod m) {
  switch (m) {
    case GpMethod::Exact: return "exact";
    case GpMethod::Fitc: return "fitc";
    case GpMethod::Ssgpr: return "ssgpr";
    case GpMethod::Kronecker: return "kronecker";
  }
  return "?";
}

ParamLayout layout_for(GpMethod method, KernelKind kind) {
  switch (method) {
    case GpMethod::Exact: return exact_layout(kind);
    case GpMethod::Fitc: return ParamLayout::SEPoints;
    case GpMethod::Ssgpr: return ParamLayout::Spectral;
    case GpMethod::Kronecker: return ParamLayout::KronAxes;
  }
  return ParamLayout::SE;
}

Objective likelihood_objective(GpMethod method, KernelKind kind, const HyperParams& shape, const Inputs& x,
                               const Vector& y) {
  const ParamLayout layout = layout_for(method, kind);
  return [=](const Vector& v) -> ValueGrad {
    const HyperParams h = unpack(layout, v, shape);
    switch (method) {
      case GpMethod::Exact: {
        const FitState s = fit(kind, h, x, y);
        return {log_likelihood(s), grad_log_likelihood(s)};
      }
      case GpMethod::Fitc: {
        const FitcState s = fitc_fit(kind, h, x, y);
        return {fitc_log_likelihood(s), fitc_grad_log_likelihood(s)};
      }
      case GpMethod::Ssgpr: {
        const SsgprState s = ssgpr_fit(h, x, y);
        return {ssgpr_log_likelihood(s), ssgpr_grad_log_likelihood(s)};
      }
      case GpMethod::Kronecker: {
        const KronState s = kron_fit(h, x, y);
        return {kron_log_likelihood(s), kron_grad_log_likelihood(s)};
      }
    }
    throw std::logic_error("unknown GP method");
  };
}

AdaptResult optimize_hyper(GpMethod method, KernelKind kind, const HyperParams& h0, const Inputs& x, const Vector& y,
                           const OptimizerConfig& cfg, const HyperPrior* prior) {
  AdaptResult out;
  out.hyper = h0;
  if ((cfg.budget_s && *cfg.budget_s <= 0.0) || cfg.max_cg_iters == 0 || x.rows() == 0) {
    out.fell_back = true;
    return out;
  }
  const ParamLayout layout = layout_for(method, kind);
  try {
    out.opt = maximize_cg(likelihood_objective(method, kind, h0, x, y), pack(layout, h0), cfg, prior);
    out.hyper = unpack(layout, out.opt.x, h0);
  } catch (const std::exception&) {
    out.fell_back = true;
    out.hyper = h0;
  }
  return out;
}

HyperParams initial_hyper(const Vector& first_line_targets, double pitch, int n_lengths) {
  HyperParams h;
  const auto n = static_cast<double>(first_line_targets.size());
  h.mean_c = n > 0 ? first_line_targets.mean() : 0.0;
  double sd = 0.0;
  if (n > 1) sd = std::sqrt((first_line_targets.array() - h.mean_c).square().sum() / (n - 1.0));
  sd = std::max(sd, 1e-3);
  h.log_sigma_f = std::log(sd);
  h.log_lengths = Vector::Constant(n_lengths, std::log(5.0 * pitch));
  h.log_sigma_n = std::log(0.01 * sd);
  return h;
}

}  // namespace sqdm
