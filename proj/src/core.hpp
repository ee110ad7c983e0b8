// Shared domain types for the scan simulator and the GP library.
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace sqdm {

/// Training/test inputs: one 2-D position (nm) per row.
using Inputs = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Polarity { Negative, Positive };

const char* to_string(Polarity p);
Polarity polarity_from_string(const std::string& s);

struct GridSpec {
  int nx = 2;
  int ny = 2;
  double pitch_x = 1.0;
  double pitch_y = 1.0;

  GridSpec() = default;
  GridSpec(int nx_, int ny_, double px, double py);

  std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  Eigen::Vector2d position(int i, int j) const { return {i * pitch_x, j * pitch_y}; }
  /// Positions of line j, ascending x.
  Inputs line_inputs(int j) const;
};

struct SamplePoint {
  Eigen::Vector2d input;
  double target = 0.0;
};

/// Samples in acquisition order, all belonging to one dip.
struct Dataset {
  std::vector<SamplePoint> points;
  Polarity polarity = Polarity::Negative;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  Inputs inputs() const;
  Vector targets() const;
  static Dataset from(const Inputs& x, const Vector& y, Polarity p = Polarity::Negative);
};

struct ScanResult {
  Matrix image;        // ny x nx tracked voltages, NaN where not acquired
  BoolMatrix lock_map; // ny x nx
  Matrix estimate;     // ny x nx dip positions the feedforward was trained on
  std::vector<double> line_compute_s;  // backward-pass compute per line (wall clock)
  std::vector<double> line_budget_s;
  std::vector<bool> line_locked;
  bool aborted = false;
  int abort_line = -1;
};

/// Line-major raster positions, ascending x within a line.
std::vector<Eigen::Vector2d> raster_positions(const GridSpec& grid);

/// Mean of squared elementwise differences.
double mse(const Matrix& image, const Matrix& reference);

// Plain-text matrix format: "rows cols" header, one row per line, 17 significant digits.
void write_matrix(std::ostream& os, const Matrix& m);
Matrix read_matrix(std::istream& is);
void write_matrix_file(const std::string& path, const Matrix& m);
Matrix read_matrix_file(const std::string& path);

}  // namespace sqdm
