// Experiment grid: configuration file, cartesian scan runner and CSV output.
#pragma once

#include "control2dof.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sqdm {

/// Invalid configuration; carries the 1-based line number (0 when not tied to a line).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string& msg);
  int line() const { return line_; }

 private:
  int line_;
};

struct PhantomSpec {
  PhantomKind kind = PhantomKind::R1Like;
  /// Fixed phantom seed; unset means each scan seed also seeds its phantom.
  std::optional<std::uint64_t> seed;
  PhantomOptions options;
  /// Load the phantom from this directory instead of generating it.
  std::string dir;
};

struct ExperimentConfig {
  PhantomSpec phantom;
  std::vector<ModelKind> models;
  std::vector<double> scan_times;
  std::vector<Polarity> polarities;
  std::vector<std::uint64_t> seeds;
  ScanConfig scan;  // template; model, scan time and polarity are set per cell
  bool write_images = true;

  void validate() const;
  std::size_t cell_count() const;
};

/// Parses the sectioned key = value format. Throws ConfigError.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::string& path);

struct Cell {
  ModelKind model = ModelKind::None;
  Polarity polarity = Polarity::Negative;
  double scan_time_s = 0.0;
  std::uint64_t seed = 0;
};

/// Cells in output order: model, polarity, scan time, seed (config order each).
std::vector<Cell> expand_cells(const ExperimentConfig& cfg);

struct CellResult {
  Cell cell;
  double mse = 0.0;
  bool aborted = false;
  int abort_line = -1;
  BudgetReport timing;
  Matrix image;
  BoolMatrix lock_map;
};

Phantom build_phantom(const ExperimentConfig& cfg, std::uint64_t seed);
CellResult run_cell(const ExperimentConfig& cfg, const Cell& cell);

using ProgressFn = std::function<void(const CellResult&, std::size_t done, std::size_t total)>;

/// Runs every cell on up to `jobs` threads; results come back in cell order.
/// When out_dir is non-empty, image and lock files are written per cell as
/// each finishes.
std::vector<CellResult> run_experiment(const ExperimentConfig& cfg, int jobs, const std::string& out_dir = {},
                                       const ProgressFn& progress = {});

// CSV schemas (header lines)
extern const char* const kMseCsvHeader;
extern const char* const kTimingCsvHeader;

void write_mse_csv(std::ostream& os, const std::vector<CellResult>& results);
void write_timing_csv(std::ostream& os, const std::vector<CellResult>& results);
/// Writes mse.csv and timing.csv into dir.
void write_tables(const std::string& dir, const std::vector<CellResult>& results);
/// Base name of a cell's image files, e.g. "fitc_negative_T200_s3".
std::string cell_stem(const Cell& c);
void write_cell_images(const std::string& dir, const CellResult& r);

/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace sqdm
