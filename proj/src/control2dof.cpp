#include "control2dof.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sqdm {

const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::None: return "none";
    case ModelKind::SodSW: return "sod-sw";
    case ModelKind::SodEGP: return "sod-egp";
    case ModelKind::SodCluster: return "sod-cluster";
    case ModelKind::Kronecker: return "kronecker";
    case ModelKind::Fitc: return "fitc";
    case ModelKind::Ssgpr: return "ssgpr";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  for (ModelKind k : {ModelKind::None, ModelKind::SodSW, ModelKind::SodEGP, ModelKind::SodCluster, ModelKind::Kronecker,
                      ModelKind::Fitc, ModelKind::Ssgpr})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown model '" + s +
                              "' (expected none, sod-sw, sod-egp, sod-cluster, kronecker, fitc or ssgpr)");
}

int window_lines(ModelKind k) {
  switch (k) {
    case ModelKind::None: return 1;
    case ModelKind::Fitc:
    case ModelKind::Ssgpr: return 5;
    default: return 2;
  }
}

Eigen::Index sparse_size(Eigen::Index n, double fraction) {
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(static_cast<double>(n) * fraction - 1e-12)));
}

double line_budget(double total_time_s, int ny) { return total_time_s / ny / 2.0; }

void ScanConfig::validate(const DipShape& dip) const {
  if (!(total_time_s > 0.0)) throw std::invalid_argument("scan time must be positive");
  if (window_override < 0) throw std::invalid_argument("window must be >= 0");
  if (!(sparse_fraction > 0.0 && sparse_fraction <= 1.0)) throw std::invalid_argument("sparse fraction must lie in (0, 1]");
  if (!(egp_err_threshold > 0.0) || !(egp_var_threshold > 0.0))
    throw std::invalid_argument("evolving GP thresholds must be positive");
  if (k_clusters < 1) throw std::invalid_argument("k_clusters must be >= 1");
  if (!(bootstrap_slowdown >= 1.0)) throw std::invalid_argument("bootstrap slowdown must be >= 1");
  esc.validate(dip);
  opt.validate();
}

namespace {

KernelKind kernel_for(ModelKind k) {
  switch (k) {
    case ModelKind::Fitc: return KernelKind::SEIso;
    case ModelKind::Ssgpr: return KernelKind::SparseSpectrum;
    default: return KernelKind::SEArd;
  }
}

GpMethod method_for(ModelKind k) {
  switch (k) {
    case ModelKind::Fitc: return GpMethod::Fitc;
    case ModelKind::Ssgpr: return GpMethod::Ssgpr;
    case ModelKind::Kronecker: return GpMethod::Kronecker;
    default: return GpMethod::Exact;
  }
}

Dataset as_dataset(const Inputs& x, const Vector& y) { return Dataset::from(x, y); }

// Noise level from second differences along each line; smooth signal
// contributes little at pixel spacing.
double line_noise(const std::deque<std::pair<int, Vector>>& lines) {
  double acc = 0.0;
  long count = 0;
  for (const auto& [j, v] : lines)
    for (Eigen::Index i = 1; i + 1 < v.size(); ++i) {
      const double d = v(i + 1) - 2.0 * v(i) + v(i - 1);
      acc += d * d;
      ++count;
    }
  return count > 0 ? std::sqrt(acc / (6.0 * static_cast<double>(count))) : 0.0;
}

Eigen::Index noise_slot(ParamLayout layout, const HyperParams& h) {
  switch (layout) {
    case ParamLayout::SE:
    case ParamLayout::SEPoints: return 2 + h.log_lengths.size();
    case ParamLayout::Spectral: return 2;
    case ParamLayout::KronAxes: return 5;
  }
  return 0;
}

}  // namespace

LineModel::LineModel(ModelKind kind, const ScanConfig& cfg, const GridSpec& grid)
    : kind_(kind), cfg_(cfg), grid_(grid) {
  cfg_.model = kind;
  egp_set_.capacity = static_cast<std::size_t>(cfg_.window()) * static_cast<std::size_t>(grid_.nx);
}

OptimizerConfig LineModel::opt_config() const {
  OptimizerConfig o = cfg_.opt;
  if (cfg_.enforce_budget) o.budget_s = line_budget(cfg_.total_time_s, grid_.ny);
  return o;
}

void LineModel::observe_line(int j, const Vector& tracked) {
  if (tracked.size() != grid_.nx) throw DimensionError("observe_line: row length differs from grid width");
  last_row_ = tracked;
  if (kind_ == ModelKind::None) {
    fitted_ = true;
    return;
  }

  lines_.emplace_back(j, tracked);
  while (static_cast<int>(lines_.size()) > cfg_.window()) lines_.pop_front();
  const Eigen::Index nx = grid_.nx;
  train_x_.resize(static_cast<Eigen::Index>(lines_.size()) * nx, 2);
  train_y_.resize(train_x_.rows());
  Eigen::Index row = 0;
  for (const auto& [line, values] : lines_) {
    train_x_.middleRows(row, nx) = grid_.line_inputs(line);
    train_y_.segment(row, nx) = values;
    row += nx;
  }

  if (!have_hyper_) {
    const int n_lengths = kind_ == ModelKind::Fitc || kind_ == ModelKind::Ssgpr ? 1 : 2;
    hyper_ = initial_hyper(tracked, grid_.pitch_x, n_lengths);
    if (kind_ == ModelKind::Kronecker) hyper_ = kron_hyper_from_ard(hyper_);
    have_hyper_ = true;
  }

  const Eigen::Index m = sparse_size(train_x_.rows(), cfg_.sparse_fraction);
  if (kind_ == ModelKind::Fitc) {
    if (hyper_.points.rows() != m)
      hyper_.points = initial_inducing(train_x_, m);
    else
      hyper_.points.col(1).array() += grid_.pitch_y;
  } else if (kind_ == ModelKind::Ssgpr && hyper_.points.rows() != m) {
    hyper_.points = initial_frequencies(m, hyper_.length(0), cfg_.model_seed);
  }

  if (kind_ == ModelKind::SodEGP) {
    ActiveSetPolicy policy;
    policy.kind = ActiveSetKind::EvolvingGP;
    policy.capacity = egp_set_.capacity;
    policy.egp_err_threshold = cfg_.egp_err_threshold;
    policy.egp_var_threshold = cfg_.egp_var_threshold;
    const Inputs xs = grid_.line_inputs(j);
    for (Eigen::Index i = 0; i < nx; ++i) {
      auto [next, accepted] = update_evolving(std::move(egp_set_), exact_ ? &*exact_ : nullptr, policy,
                                              SamplePoint{xs.row(i).transpose(), tracked(i)});
      egp_set_ = std::move(next);
      if (!accepted) continue;
      try {
        exact_ = fit(KernelKind::SEArd, hyper_, egp_set_.inputs(), egp_set_.targets());
      } catch (const NumericError&) {
        exact_.reset();
      }
    }
    train_x_ = egp_set_.inputs();
    train_y_ = egp_set_.targets();
  }

  adapt_and_fit();
}

void LineModel::recentre(double noise) {
  // amplitudes follow the window; lengths, inducing inputs and frequencies stay warm
  const double n = static_cast<double>(train_y_.size());
  if (n < 2) return;
  const double c = train_y_.mean();
  const double sd = std::max(std::sqrt((train_y_.array() - c).square().sum() / (n - 1.0)), 1e-6);
  hyper_.mean_c = c;
  if (hyper_.axis_log_sigma_f) {
    hyper_.axis_log_sigma_f = Eigen::Vector2d::Constant(0.5 * std::log(sd));
    hyper_.log_sigma_f = std::log(sd);
  } else {
    hyper_.log_sigma_f = std::log(sd);
  }
  hyper_.log_sigma_n = std::log(std::clamp(noise, 1e-3 * sd, sd));
}

void LineModel::adapt_and_fit() {
  const HyperParams before = hyper_;
  HyperPrior prior;
  const double noise = line_noise(lines_);
  recentre(noise);
  if (cfg_.noise_prior_sd > 0.0 && noise > 0.0) {
    const ParamLayout layout = layout_for(method_for(kind_), kernel_for(kind_));
    const Eigen::Index slot = noise_slot(layout, hyper_);
    prior.per_param.resize(static_cast<std::size_t>(slot) + 1);
    prior.per_param[static_cast<std::size_t>(slot)] =
        GaussianPrior{std::log(noise), cfg_.noise_prior_sd * cfg_.noise_prior_sd};
  }
  const AdaptResult a = optimize_hyper(method_for(kind_), kernel_for(kind_), hyper_, train_x_, train_y_, opt_config(),
                                       prior.empty() ? nullptr : &prior);
  hyper_ = a.hyper;
  if (a.fell_back) ++fallbacks_;
  history_.push_back(a.opt);
  try {
    fit_current();
    return;
  } catch (const std::exception&) {
    ++fallbacks_;
  }
  hyper_ = before;
  fit_current();
}

void LineModel::fit_current() {
  switch (kind_) {
    case ModelKind::None: break;
    case ModelKind::SodSW:
    case ModelKind::SodEGP: exact_ = fit(KernelKind::SEArd, hyper_, train_x_, train_y_); break;
    case ModelKind::SodCluster: {
      const Dataset pool = as_dataset(train_x_, train_y_);
      const int k = std::min<int>(cfg_.k_clusters, static_cast<int>(pool.size()));
      Clusters c = cluster_kmeans(pool, k, KernelKind::SEArd, hyper_, cfg_.model_seed);
      std::vector<FitState> fits;
      for (const auto& s : c.sets) fits.push_back(fit(KernelKind::SEArd, hyper_, s.inputs(), s.targets()));
      clusters_ = std::move(c);
      cluster_fits_ = std::move(fits);
      break;
    }
    case ModelKind::Kronecker: kron_ = kron_fit(hyper_, train_x_, train_y_); break;
    case ModelKind::Fitc: fitc_ = fitc_fit(KernelKind::SEIso, hyper_, train_x_, train_y_); break;
    case ModelKind::Ssgpr: ssgpr_ = ssgpr_fit(hyper_, train_x_, train_y_); break;
  }
  fitted_ = true;
}

LinePrediction LineModel::predict(int j) const {
  if (!fitted_) throw std::logic_error("predict_next_line: model has not been fitted");
  if (j + 1 >= grid_.ny || j < 0) throw std::out_of_range("predict_next_line: no line after " + std::to_string(j));
  LinePrediction p;
  p.line = j + 1;
  const Inputs test = grid_.line_inputs(j + 1);
  GpPosterior post;
  switch (kind_) {
    case ModelKind::None:
      p.mean = last_row_;
      p.variance = Vector::Zero(grid_.nx);
      return p;
    case ModelKind::SodSW:
    case ModelKind::SodEGP: post = sqdm::predict(*exact_, test); break;
    case ModelKind::SodCluster: {
      post.mean.resize(test.rows());
      post.cov = Matrix::Zero(test.rows(), test.rows());
      for (Eigen::Index t = 0; t < test.rows(); ++t) {
        const std::size_t c = nearest_centroid(*clusters_, test.row(t).transpose(), KernelKind::SEArd, hyper_);
        const GpPosterior one = sqdm::predict(cluster_fits_[c], test.row(t));
        post.mean(t) = one.mean(0);
        post.cov(t, t) = one.cov(0, 0);
      }
      break;
    }
    case ModelKind::Kronecker: post = kron_predict(*kron_, test); break;
    case ModelKind::Fitc: post = fitc_predict(*fitc_, test); break;
    case ModelKind::Ssgpr: post = ssgpr_predict(*ssgpr_, test); break;
  }
  p.mean = std::move(post.mean);
  p.variance = post.cov.diagonal();
  return p;
}

LinePrediction predict_next_line(const LineModel& model, int j) { return model.predict(j); }

namespace {

double interpolate(const Vector& row, double x) {
  const Eigen::Index n = row.size();
  if (n == 1) return row(0);
  x = std::clamp(x, 0.0, static_cast<double>(n - 1));
  const Eigen::Index i0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(x), n - 2);
  const double f = x - static_cast<double>(i0);
  return (1.0 - f) * row(i0) + f * row(i0 + 1);
}

}  // namespace

ScanResult run_scan(const Phantom& phantom, const ScanConfig& cfg, std::uint64_t seed, ScanTrace* trace) {
  cfg.validate(phantom.dip);
  const GridSpec& grid = phantom.grid;
  const int nx = grid.nx, ny = grid.ny;
  const double budget = line_budget(cfg.total_time_s, ny);
  const double dwell = budget / nx;

  ScanResult r;
  r.image = Matrix::Constant(ny, nx, std::numeric_limits<double>::quiet_NaN());
  r.lock_map = BoolMatrix::Constant(ny, nx, false);
  r.estimate = r.image;

  Rng rng(seed);
  LineModel model(cfg.model, cfg, grid);
  const double vd0 = phantom.dip_position(cfg.polarity, 0.0, 0.0);
  Vector ff = Vector::Constant(nx, sweep_for_dip(phantom.dip, cfg.polarity, vd0, rng));
  if (cfg.oracle_feedforward) {
    if (cfg.oracle_feedforward->rows() != ny || cfg.oracle_feedforward->cols() != nx)
      throw DimensionError("oracle feedforward must match the phantom grid");
    ff = cfg.oracle_feedforward->row(0).transpose();
  }

  for (int j = 0; j < ny; ++j) {
    const double line_dwell = j == 0 ? dwell * cfg.bootstrap_slowdown : dwell;
    const long steps = std::max(1L, std::lround(line_dwell / cfg.esc.dt));
    const double dt = line_dwell / static_cast<double>(steps);

    EscState s;
    std::vector<double> estimates;
    estimates.reserve(static_cast<std::size_t>(nx) * static_cast<std::size_t>(steps));
    bool locked = true;
    for (int i = 0; i < nx && locked; ++i) {
      double sum = 0.0;
      for (long k = 0; k < steps; ++k) {
        const double x = i - 0.5 + (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
        const double vff = interpolate(ff, x);
        const double vfb = s.vb_fb;
        esc_step(s, cfg.esc, phantom.dip, vff, phantom.dip_position(cfg.polarity, x, j), dt, rng);
        sum += s.last_applied;
        estimates.push_back(esc_dip_estimate(s, cfg.esc, phantom.dip));
        if (trace && trace->applied.size() < trace->limit) {
          trace->ff.push_back(vff);
          trace->fb.push_back(vfb);
          trace->applied.push_back(s.last_applied);
        }
        if (!s.locked) break;
      }
      locked = s.locked;
      if (locked) {
        r.image(j, i) = sum / static_cast<double>(steps);
        r.lock_map(j, i) = true;
      }
    }
    r.line_budget_s.push_back(budget);
    r.line_locked.push_back(locked);
    Vector targets = r.image.row(j).transpose();
    // the copy baseline repeats the tracked image row itself
    if (locked && cfg.lag_compensation && cfg.model != ModelKind::None) {
      // the low-passed estimate trails the tip by lowpass_tau; read it that much later
      const auto lag = static_cast<std::size_t>(std::lround(cfg.esc.lowpass_tau / dt));
      const std::size_t last = estimates.size() - 1;
      for (int i = 0; i < nx; ++i) {
        double acc = 0.0;
        for (long k = 0; k < steps; ++k)
          acc += estimates[std::min(last, static_cast<std::size_t>(i * steps + k) + lag)];
        targets(i) = acc / static_cast<double>(steps);
      }
    }
    if (locked) r.estimate.row(j) = targets.transpose();
    if (!locked) {
      r.image.row(j).setConstant(std::numeric_limits<double>::quiet_NaN());
      r.lock_map.row(j).setConstant(false);
      r.aborted = true;
      r.abort_line = j;
      r.line_compute_s.push_back(0.0);
      for (int rest = j + 1; rest < ny; ++rest) {
        r.line_budget_s.push_back(budget);
        r.line_locked.push_back(false);
        r.line_compute_s.push_back(0.0);
      }
      break;
    }

    // backward pass: adapt, refit and predict the next line
    if (j + 1 < ny) {
      const auto t0 = std::chrono::steady_clock::now();
      if (cfg.oracle_feedforward) {
        ff = cfg.oracle_feedforward->row(j + 1).transpose();
      } else {
        model.observe_line(j, targets);
        ff = predict_next_line(model, j).mean;
      }
      r.line_compute_s.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    } else {
      r.line_compute_s.push_back(0.0);
    }
  }
  return r;
}

double scan_mse(const ScanResult& r, const Phantom& phantom, Polarity pol) {
  if (r.aborted) return std::numeric_limits<double>::quiet_NaN();
  return mse(r.image, phantom.map(pol));
}

BudgetReport compute_budget_report(const ScanResult& r, const ScanConfig& cfg) {
  BudgetReport rep;
  const int ny = static_cast<int>(r.image.rows());
  rep.budget_s = ny > 0 ? line_budget(cfg.total_time_s, ny) : 0.0;
  const std::size_t n = r.line_compute_s.size();
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    LineTiming t;
    t.line = static_cast<int>(j);
    t.compute_s = r.line_compute_s[j];
    t.budget_s = j < r.line_budget_s.size() ? r.line_budget_s[j] : rep.budget_s;
    t.fraction = t.budget_s > 0.0 ? t.compute_s / t.budget_s : 0.0;
    t.locked = j < r.line_locked.size() ? static_cast<bool>(r.line_locked[j]) : false;
    sum += t.compute_s;
    rep.max_compute_s = std::max(rep.max_compute_s, t.compute_s);
    rep.overrun_s += std::max(0.0, t.compute_s - t.budget_s);
    rep.lines.push_back(t);
  }
  if (n > 0) rep.avg_compute_s = sum / static_cast<double>(n);
  if (rep.budget_s > 0.0) {
    rep.avg_fraction = rep.avg_compute_s / rep.budget_s;
    rep.max_fraction = rep.max_compute_s / rep.budget_s;
  }
  return rep;
}

}  // namespace sqdm
