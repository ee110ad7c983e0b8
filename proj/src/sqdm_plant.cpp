#include "sqdm_plant.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace sqdm {

const char* to_string(PhantomKind k) { return k == PhantomKind::R1Like ? "r1" : "r2"; }

PhantomKind phantom_kind_from_string(const std::string& s) {
  if (s == "r1" || s == "R1" || s == "r1-like" || s == "R1-like") return PhantomKind::R1Like;
  if (s == "r2" || s == "R2" || s == "r2-like" || s == "R2-like") return PhantomKind::R2Like;
  throw std::invalid_argument("unknown phantom kind '" + s + "' (expected r1 or r2)");
}

double Phantom::dip_position(Polarity p, double px, double py) const {
  const Matrix& m = map(p);
  px = std::clamp(px, 0.0, static_cast<double>(grid.nx - 1));
  py = std::clamp(py, 0.0, static_cast<double>(grid.ny - 1));
  const int i0 = std::min(static_cast<int>(px), grid.nx - 2);
  const int j0 = std::min(static_cast<int>(py), grid.ny - 2);
  const double fx = px - i0, fy = py - j0;
  return (1 - fy) * ((1 - fx) * m(j0, i0) + fx * m(j0, i0 + 1)) + fy * ((1 - fx) * m(j0 + 1, i0) + fx * m(j0 + 1, i0 + 1));
}

namespace {

struct Bump {
  double cx, cy, sigma, amp;
};

Matrix render(const std::vector<Bump>& bumps, int nx, int ny) {
  Matrix f = Matrix::Zero(ny, nx);
  for (const Bump& b : bumps)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const double dx = i - b.cx, dy = j - b.cy;
        f(j, i) += b.amp * std::exp(-0.5 * (dx * dx + dy * dy) / (b.sigma * b.sigma));
      }
  return f;
}

double max_step(const Matrix& f) {
  double s = 0.0;
  if (f.cols() > 1) s = std::max(s, (f.rightCols(f.cols() - 1) - f.leftCols(f.cols() - 1)).cwiseAbs().maxCoeff());
  if (f.rows() > 1) s = std::max(s, (f.bottomRows(f.rows() - 1) - f.topRows(f.rows() - 1)).cwiseAbs().maxCoeff());
  return s;
}

// Shrinks a feature field until pixel-to-pixel changes stay below `step_limit`
// and its magnitude below `abs_limit`.
void limit(Matrix& f, double step_limit, double abs_limit) {
  if (f.size() == 0) return;
  const double s = max_step(f);
  if (s > step_limit) f *= step_limit / s;
  const double a = f.cwiseAbs().maxCoeff();
  if (a > abs_limit) f *= abs_limit / a;
}

constexpr double kMinusOffset = -1.2;
constexpr double kPlusOffset = 0.9;

}  // namespace

Phantom make_phantom(PhantomKind kind, std::uint64_t seed, const PhantomOptions& opts) {
  const bool r1 = kind == PhantomKind::R1Like;
  const int nx = opts.nx > 0 ? opts.nx : (r1 ? 63 : 200);
  const int ny = opts.ny > 0 ? opts.ny : (r1 ? 63 : 200);
  Phantom ph;
  ph.kind = kind;
  ph.seed = seed;
  ph.grid = GridSpec(nx, ny, opts.pitch, opts.pitch);
  ph.dip = opts.dip;

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int count = opts.bumps;
  if (count < 0) {
    const int lo = r1 ? 3 : 25, hi = r1 ? 8 : 40;
    count = lo + static_cast<int>(unit(rng) * (hi - lo + 1));
    count = std::min(count, hi);
  }
  ph.bumps = count;
  const double smin = r1 ? 4.0 : 5.0, smax = r1 ? 9.0 : 12.0;

  std::vector<Bump> shared, detail;
  std::vector<double> minus_scale;
  for (int k = 0; k < count; ++k) {
    Bump b{unit(rng) * (nx - 1), unit(rng) * (ny - 1), smin + unit(rng) * (smax - smin),
           (0.1 + 0.2 * unit(rng)) * (unit(rng) < 0.5 ? -1.0 : 1.0)};
    shared.push_back(b);
    minus_scale.push_back(0.6 + 0.8 * unit(rng));
  }
  // the V- map carries extra small-scale structure
  for (int k = 0; k < count / 2; ++k)
    detail.push_back({unit(rng) * (nx - 1), unit(rng) * (ny - 1), 3.0 + 2.0 * unit(rng),
                      (0.05 + 0.1 * unit(rng)) * (unit(rng) < 0.5 ? -1.0 : 1.0)});

  std::vector<Bump> minus = shared;
  for (std::size_t k = 0; k < minus.size(); ++k) minus[k].amp *= -minus_scale[k];
  minus.insert(minus.end(), detail.begin(), detail.end());

  Matrix fp = render(shared, nx, ny);
  Matrix fm = render(minus, nx, ny);
  const double step_limit = 0.9 * ph.dip.width / 4.0;
  limit(fp, step_limit, 0.8);
  limit(fm, step_limit, 0.8);
  ph.v_plus = fp.array() + kPlusOffset;
  ph.v_minus = fm.array() + kMinusOffset;
  return ph;
}

namespace {

void write_phantom_file(const Phantom& ph, const std::string& path, Polarity pol) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << std::setprecision(17);
  f << "# kind = " << to_string(ph.kind) << '\n'
    << "# seed = " << ph.seed << '\n'
    << "# bumps = " << ph.bumps << '\n'
    << "# polarity = " << to_string(pol) << '\n'
    << "# pitch_x = " << ph.grid.pitch_x << '\n'
    << "# pitch_y = " << ph.grid.pitch_y << '\n'
    << "# dip_depth = " << ph.dip.depth << '\n'
    << "# dip_width = " << ph.dip.width << '\n'
    << "# background_slope = " << ph.dip.background_slope << '\n'
    << "# noise_std = " << ph.dip.noise_std << '\n';
  write_matrix(f, ph.map(pol));
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

std::map<std::string, std::string> read_header(std::istream& is) {
  std::map<std::string, std::string> kv;
  while (is >> std::ws && is.peek() == '#') {
    std::string line;
    std::getline(is, line);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t#");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace

void save_phantom(const Phantom& ph, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + dir + "': " + ec.message());
  write_phantom_file(ph, dir + "/v_minus.txt", Polarity::Negative);
  write_phantom_file(ph, dir + "/v_plus.txt", Polarity::Positive);
}

Phantom load_phantom(const std::string& dir) {
  Phantom ph;
  Matrix maps[2];
  std::map<std::string, std::string> kv;
  const char* names[2] = {"/v_minus.txt", "/v_plus.txt"};
  for (int k = 0; k < 2; ++k) {
    std::ifstream f(dir + names[k]);
    if (!f) throw std::runtime_error("cannot open '" + dir + names[k] + "'");
    kv = read_header(f);
    maps[k] = read_matrix(f);
  }
  if (maps[0].rows() != maps[1].rows() || maps[0].cols() != maps[1].cols())
    throw std::runtime_error("phantom maps differ in size");
  auto num = [&](const char* key, double fallback) { return kv.count(key) ? std::stod(kv[key]) : fallback; };
  ph.kind = kv.count("kind") ? phantom_kind_from_string(kv["kind"]) : PhantomKind::R1Like;
  ph.seed = kv.count("seed") ? std::stoull(kv["seed"]) : 0;
  ph.bumps = static_cast<int>(num("bumps", 0));
  ph.grid = GridSpec(static_cast<int>(maps[0].cols()), static_cast<int>(maps[0].rows()), num("pitch_x", 0.1),
                     num("pitch_y", 0.1));
  ph.dip.depth = num("dip_depth", ph.dip.depth);
  ph.dip.width = num("dip_width", ph.dip.width);
  ph.dip.background_slope = num("background_slope", ph.dip.background_slope);
  ph.dip.noise_std = num("noise_std", ph.dip.noise_std);
  ph.v_minus = maps[0];
  ph.v_plus = maps[1];
  return ph;
}

double spectrum_clean(const DipShape& dip, double vb, double vd) {
  const double d = vb - vd;
  return dip.background_slope * vb * vb - dip.depth * std::exp(-0.5 * d * d / (dip.width * dip.width));
}

double spectrum_eval(const Phantom& ph, Polarity pol, double vb, double px, double py, Rng& rng) {
  const double clean = spectrum_clean(ph.dip, vb, ph.dip_position(pol, px, py));
  if (ph.dip.noise_std <= 0.0) return clean;
  return clean + std::normal_distribution<double>(0.0, ph.dip.noise_std)(rng);
}

double sweep_for_dip(const DipShape& dip, Polarity pol, double vd, Rng& rng, double step, double range) {
  std::normal_distribution<double> noise(0.0, dip.noise_std > 0.0 ? dip.noise_std : 1.0);
  const double sign = pol == Polarity::Negative ? -1.0 : 1.0;
  const auto n = static_cast<Eigen::Index>(range / step);
  if (n < 1) throw std::invalid_argument("sweep range must cover at least one step");
  Vector v(n), f(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    v(k) = sign * step * static_cast<double>(k + 1);
    f(k) = spectrum_clean(dip, v(k), vd) + (dip.noise_std > 0.0 ? noise(rng) : 0.0);
  }

  // coarse: argmin of a moving average over a tenth of the dip width
  const Eigen::Index half = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(0.1 * dip.width / step));
  Vector csum(n + 1);
  csum(0) = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) csum(k + 1) = csum(k) + f(k);
  Eigen::Index best = 0;
  double best_f = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, k - half), hi = std::min(n, k + half + 1);
    const double avg = (csum(hi) - csum(lo)) / static_cast<double>(hi - lo);
    if (avg < best_f) {
      best_f = avg;
      best = k;
    }
  }
  double est = v(best);

  // refine: Gauss-Newton fit of offset, depth and centre of the dip shape on +-3 widths
  const double w = 3.0 * dip.width, w2 = dip.width * dip.width;
  double offset = 0.0, depth = dip.depth;
  for (int it = 0; it < 8; ++it) {
    Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
    Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
    int used = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double d = v(k) - est;
      if (std::abs(d) > w) continue;
      const double g = std::exp(-0.5 * d * d / w2);
      const double r = f(k) - (dip.background_slope * v(k) * v(k) + offset - depth * g);
      const Eigen::Vector3d jac(1.0, -g, -depth * g * d / w2);
      jtj += jac * jac.transpose();
      jtr += jac * r;
      ++used;
    }
    if (used < 5) break;
    const Eigen::Vector3d delta = jtj.ldlt().solve(jtr);
    if (!delta.allFinite()) break;
    offset += delta(0);
    depth += delta(1);
    est += std::clamp(delta(2), -dip.width, dip.width);
    if (std::abs(delta(2)) < 1e-9) break;
  }
  return est;
}

void EscConfig::validate(const DipShape& dip) const {
  if (!(amplitude > 0.0) || amplitude >= dip.width / 2.0)
    throw std::invalid_argument("dither amplitude must lie in (0, dip_width/2)");
  if (!(omega > 0.0) || !(dt > 0.0) || dt * omega > 2.0 * 3.141592653589793 / 20.0)
    throw std::invalid_argument("need at least 20 samples per dither period");
  if (!(ki > 0.0) || !(lowpass_tau > 0.0) || !(highpass_tau > 0.0))
    throw std::invalid_argument("ESC gains and time constants must be positive");
}

double EscConfig::bandwidth(const DipShape& dip) const {
  // gradient estimate ~ f''(vd) * a/2 * e with f''(vd) = depth / width^2
  return ki * 0.5 * amplitude * dip.depth / (dip.width * dip.width);
}

void esc_step(EscState& s, const EscConfig& cfg, const DipShape& dip, double vb_ff, double vd, double dt, Rng& rng) {
  const double center = vb_ff + s.vb_fb;
  if (std::abs(center - vd) > dip.width) s.locked = false;
  const double carrier = std::sin(cfg.omega * s.t);
  double df = spectrum_clean(dip, center + cfg.amplitude * carrier, vd);
  if (dip.noise_std > 0.0) df += std::normal_distribution<double>(0.0, dip.noise_std)(rng);
  if (!s.primed) {
    s.dc = df;
    s.vb_lp = center;
    s.primed = true;
  }
  s.dc += dt / cfg.highpass_tau * (df - s.dc);
  s.grad += dt / cfg.lowpass_tau * ((df - s.dc) * carrier - s.grad);
  s.vb_lp += dt / cfg.lowpass_tau * (center - s.vb_lp);
  s.vb_fb -= cfg.ki * s.grad * dt;
  s.t += dt;
  s.last_ff = vb_ff;
  s.last_applied = center;
}

double esc_dip_estimate(const EscState& s, const EscConfig& cfg, const DipShape& dip) {
  const double gain = 0.5 * cfg.amplitude * dip.depth / (dip.width * dip.width);
  return s.vb_lp - s.grad / gain;
}

}  // namespace sqdm
