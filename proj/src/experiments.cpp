#include "experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

namespace sqdm {

ConfigError::ConfigError(int line, const std::string& msg)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',' || ch == ' ' || ch == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw std::invalid_argument("expected a number, got '" + s + "'");
  return v;
}

template <typename T>
T parse_int(const std::string& s) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("expected an integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

// "1,2,5" or "1-5"
std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& tok : split_list(s)) {
    const auto dash = tok.find('-');
    if (dash == std::string::npos) {
      out.push_back(parse_int<std::uint64_t>(tok));
      continue;
    }
    const auto lo = parse_int<std::uint64_t>(tok.substr(0, dash));
    const auto hi = parse_int<std::uint64_t>(tok.substr(dash + 1));
    if (hi < lo) throw std::invalid_argument("seed range '" + tok + "' is descending");
    if (hi - lo > 100000) throw std::invalid_argument("seed range '" + tok + "' is too long");
    for (auto v = lo; v <= hi; ++v) out.push_back(v);
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"phantom.kind", [](ExperimentConfig& c, const std::string& v) { c.phantom.kind = phantom_kind_from_string(v); }},
      {"phantom.seed", [](ExperimentConfig& c, const std::string& v) { c.phantom.seed = parse_int<std::uint64_t>(v); }},
      {"phantom.nx", [](ExperimentConfig& c, const std::string& v) { c.phantom.options.nx = parse_int<int>(v); }},
      {"phantom.ny", [](ExperimentConfig& c, const std::string& v) { c.phantom.options.ny = parse_int<int>(v); }},
      {"phantom.pitch", [](ExperimentConfig& c, const std::string& v) { c.phantom.options.pitch = parse_double(v); }},
      {"phantom.bumps", [](ExperimentConfig& c, const std::string& v) { c.phantom.options.bumps = parse_int<int>(v); }},
      {"phantom.dir", [](ExperimentConfig& c, const std::string& v) { c.phantom.dir = v; }},
      {"scan.models",
       [](ExperimentConfig& c, const std::string& v) {
         c.models.clear();
         for (const auto& t : split_list(v)) c.models.push_back(model_kind_from_string(t));
       }},
      {"scan.scan_times",
       [](ExperimentConfig& c, const std::string& v) {
         c.scan_times.clear();
         for (const auto& t : split_list(v)) c.scan_times.push_back(parse_double(t));
       }},
      {"scan.polarities",
       [](ExperimentConfig& c, const std::string& v) {
         c.polarities.clear();
         for (const auto& t : split_list(v)) c.polarities.push_back(polarity_from_string(t));
       }},
      {"scan.seeds", [](ExperimentConfig& c, const std::string& v) { c.seeds = parse_seeds(v); }},
      {"esc.amplitude", [](ExperimentConfig& c, const std::string& v) { c.scan.esc.amplitude = parse_double(v); }},
      {"esc.frequency_hz",
       [](ExperimentConfig& c, const std::string& v) { c.scan.esc.omega = 2.0 * std::numbers::pi * parse_double(v); }},
      {"esc.ki", [](ExperimentConfig& c, const std::string& v) { c.scan.esc.ki = parse_double(v); }},
      {"esc.lowpass_tau", [](ExperimentConfig& c, const std::string& v) { c.scan.esc.lowpass_tau = parse_double(v); }},
      {"esc.highpass_tau", [](ExperimentConfig& c, const std::string& v) { c.scan.esc.highpass_tau = parse_double(v); }},
      {"esc.dt", [](ExperimentConfig& c, const std::string& v) { c.scan.esc.dt = parse_double(v); }},
      {"optimizer.max_cg_iters",
       [](ExperimentConfig& c, const std::string& v) { c.scan.opt.max_cg_iters = parse_int<int>(v); }},
      {"optimizer.armijo", [](ExperimentConfig& c, const std::string& v) { c.scan.opt.armijo = parse_double(v); }},
      {"optimizer.shrink", [](ExperimentConfig& c, const std::string& v) { c.scan.opt.shrink = parse_double(v); }},
      {"optimizer.max_backtracks",
       [](ExperimentConfig& c, const std::string& v) { c.scan.opt.max_backtracks = parse_int<int>(v); }},
      {"optimizer.grad_tol", [](ExperimentConfig& c, const std::string& v) { c.scan.opt.grad_tol = parse_double(v); }},
      {"optimizer.max_step", [](ExperimentConfig& c, const std::string& v) { c.scan.opt.max_step = parse_double(v); }},
      {"model.window", [](ExperimentConfig& c, const std::string& v) { c.scan.window_override = parse_int<int>(v); }},
      {"model.sparse_fraction",
       [](ExperimentConfig& c, const std::string& v) { c.scan.sparse_fraction = parse_double(v); }},
      {"model.egp_err_threshold",
       [](ExperimentConfig& c, const std::string& v) { c.scan.egp_err_threshold = parse_double(v); }},
      {"model.egp_var_threshold",
       [](ExperimentConfig& c, const std::string& v) { c.scan.egp_var_threshold = parse_double(v); }},
      {"model.k_clusters", [](ExperimentConfig& c, const std::string& v) { c.scan.k_clusters = parse_int<int>(v); }},
      {"model.seed", [](ExperimentConfig& c, const std::string& v) { c.scan.model_seed = parse_int<std::uint64_t>(v); }},
      {"model.bootstrap_slowdown",
       [](ExperimentConfig& c, const std::string& v) { c.scan.bootstrap_slowdown = parse_double(v); }},
      {"model.lag_compensation",
       [](ExperimentConfig& c, const std::string& v) { c.scan.lag_compensation = parse_bool(v); }},
      {"model.noise_prior_sd", [](ExperimentConfig& c, const std::string& v) { c.scan.noise_prior_sd = parse_double(v); }},
      {"model.enforce_budget", [](ExperimentConfig& c, const std::string& v) { c.scan.enforce_budget = parse_bool(v); }},
      {"output.images", [](ExperimentConfig& c, const std::string& v) { c.write_images = parse_bool(v); }},
  };
  return table;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (models.empty()) throw ConfigError(0, "scan.models is empty");
  if (scan_times.empty()) throw ConfigError(0, "scan.scan_times is empty");
  if (polarities.empty()) throw ConfigError(0, "scan.polarities is empty");
  if (seeds.empty()) throw ConfigError(0, "scan.seeds is empty");
  for (double t : scan_times)
    if (!(t > 0.0)) throw ConfigError(0, "scan times must be positive");
  if (phantom.dir.empty()) {
    const auto& o = phantom.options;
    if ((o.nx != 0 && o.nx < 2) || (o.ny != 0 && o.ny < 2)) throw ConfigError(0, "phantom grid needs at least 2x2 pixels");
    if (!(o.pitch > 0.0)) throw ConfigError(0, "phantom pitch must be positive");
  }
  try {
    ScanConfig probe = scan;
    probe.total_time_s = scan_times.front();
    probe.validate(phantom.options.dip);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }
}

std::size_t ExperimentConfig::cell_count() const {
  return models.size() * scan_times.size() * polarities.size() * seeds.size();
}

ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig cfg;
  const std::set<std::string> sections = {"phantom", "scan", "esc", "optimizer", "model", "output"};
  std::set<std::string> seen;
  std::string section;
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const auto hash = raw.find_first_of("#;");
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(lineno, "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (!sections.count(section)) throw ConfigError(lineno, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(lineno, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(lineno, "key '" + key + "' outside a section");
    const std::string full = section + "." + key;
    const auto it = setters().find(full);
    if (it == setters().end()) throw ConfigError(lineno, "unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert(full).second) throw ConfigError(lineno, "duplicate key '" + key + "' in [" + section + "]");
    if (value.empty()) throw ConfigError(lineno, "missing value for '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(lineno, full + ": " + e.what());
    }
  }
  if (cfg.polarities.empty()) cfg.polarities.push_back(Polarity::Negative);
  if (cfg.seeds.empty()) cfg.seeds.push_back(1);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(0, "cannot read config '" + path + "'");
  return parse_config(f);
}

std::vector<Cell> expand_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  cells.reserve(cfg.cell_count());
  for (ModelKind m : cfg.models)
    for (Polarity p : cfg.polarities)
      for (double t : cfg.scan_times)
        for (std::uint64_t s : cfg.seeds) cells.push_back({m, p, t, s});
  return cells;
}

Phantom build_phantom(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.phantom.dir.empty()) return load_phantom(cfg.phantom.dir);
  return make_phantom(cfg.phantom.kind, cfg.phantom.seed.value_or(seed), cfg.phantom.options);
}

CellResult run_cell(const ExperimentConfig& cfg, const Cell& cell) {
  const Phantom ph = build_phantom(cfg, cell.seed);
  ScanConfig sc = cfg.scan;
  sc.model = cell.model;
  sc.polarity = cell.polarity;
  sc.total_time_s = cell.scan_time_s;
  const ScanResult r = run_scan(ph, sc, cell.seed);
  CellResult out;
  out.cell = cell;
  out.mse = scan_mse(r, ph, cell.polarity);
  out.aborted = r.aborted;
  out.abort_line = r.abort_line;
  out.timing = compute_budget_report(r, sc);
  out.image = r.image;
  out.lock_map = r.lock_map;
  return out;
}

std::vector<CellResult> run_experiment(const ExperimentConfig& cfg, int jobs, const std::string& out_dir,
                                       const ProgressFn& progress) {
  const std::vector<Cell> cells = expand_cells(cfg);
  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex mu;
  std::exception_ptr failure;

  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= cells.size()) return;
      try {
        CellResult r = run_cell(cfg, cells[k]);
        if (!out_dir.empty() && cfg.write_images) write_cell_images(out_dir, r);
        if (!cfg.write_images) {
          r.image.resize(0, 0);
          r.lock_map.resize(0, 0);
        }
        std::lock_guard<std::mutex> lock(mu);
        results[k] = std::move(r);
        ++done;
        if (progress) progress(results[k], done, cells.size());
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        next.store(cells.size());
        return;
      }
    }
  };

  const int n = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(1, cells.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

const char* const kMseCsvHeader = "model,polarity,scan_time_s,seed,mse,aborted";
const char* const kTimingCsvHeader = "model,polarity,scan_time_s,seed,line,compute_s,budget_s,fraction,locked";

void write_mse_csv(std::ostream& os, const std::vector<CellResult>& results) {
  os << kMseCsvHeader << '\n';
  for (const auto& r : results)
    os << to_string(r.cell.model) << ',' << to_string(r.cell.polarity) << ',' << fmt(r.cell.scan_time_s) << ','
       << r.cell.seed << ',' << fmt(r.mse) << ',' << (r.aborted ? 1 : 0) << '\n';
}

void write_timing_csv(std::ostream& os, const std::vector<CellResult>& results) {
  os << kTimingCsvHeader << '\n';
  for (const auto& r : results)
    for (const auto& l : r.timing.lines)
      os << to_string(r.cell.model) << ',' << to_string(r.cell.polarity) << ',' << fmt(r.cell.scan_time_s) << ','
         << r.cell.seed << ',' << l.line << ',' << fmt(l.compute_s) << ',' << fmt(l.budget_s) << ',' << fmt(l.fraction)
         << ',' << (l.locked ? 1 : 0) << '\n';
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    f << contents;
    f.flush();
    if (!f) throw std::runtime_error("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("cannot rename into '" + path + "'");
  }
}

void write_tables(const std::string& dir, const std::vector<CellResult>& results) {
  std::filesystem::create_directories(dir);
  std::ostringstream mse_os, timing_os;
  write_mse_csv(mse_os, results);
  write_timing_csv(timing_os, results);
  write_file_atomic((std::filesystem::path(dir) / "mse.csv").string(), mse_os.str());
  write_file_atomic((std::filesystem::path(dir) / "timing.csv").string(), timing_os.str());
}

std::string cell_stem(const Cell& c) {
  return std::string(to_string(c.model)) + "_" + to_string(c.polarity) + "_T" + fmt(c.scan_time_s) + "_s" +
         std::to_string(c.seed);
}

void write_cell_images(const std::string& dir, const CellResult& r) {
  const auto images = std::filesystem::path(dir) / "images";
  std::filesystem::create_directories(images);
  const std::string stem = cell_stem(r.cell);
  std::ostringstream img, lock;
  write_matrix(img, r.image);
  write_matrix(lock, r.lock_map.cast<double>());
  write_file_atomic((images / (stem + "_image.txt")).string(), img.str());
  write_file_atomic((images / (stem + "_lock.txt")).string(), lock.str());
}

}  // namespace sqdm
