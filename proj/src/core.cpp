#include "core.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace sqdm {

const char* to_string(Polarity p) { return p == Polarity::Negative ? "negative" : "positive"; }

Polarity polarity_from_string(const std::string& s) {
  if (s == "negative" || s == "neg" || s == "-" || s == "minus") return Polarity::Negative;
  if (s == "positive" || s == "pos" || s == "+" || s == "plus") return Polarity::Positive;
  throw std::invalid_argument("unknown polarity '" + s + "'");
}

GridSpec::GridSpec(int nx_, int ny_, double px, double py) : nx(nx_), ny(ny_), pitch_x(px), pitch_y(py) {
  if (nx < 2 || ny < 2) throw std::invalid_argument("grid needs at least 2x2 pixels");
  if (!(px > 0.0) || !(py > 0.0)) throw std::invalid_argument("grid pitch must be positive");
}

Inputs GridSpec::line_inputs(int j) const {
  Inputs x(nx, 2);
  for (int i = 0; i < nx; ++i) x.row(i) = position(i, j).transpose();
  return x;
}

Inputs Dataset::inputs() const {
  Inputs x(static_cast<Eigen::Index>(points.size()), 2);
  for (std::size_t k = 0; k < points.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = points[k].input.transpose();
  return x;
}

Vector Dataset::targets() const {
  Vector y(static_cast<Eigen::Index>(points.size()));
  for (std::size_t k = 0; k < points.size(); ++k) y(static_cast<Eigen::Index>(k)) = points[k].target;
  return y;
}

Dataset Dataset::from(const Inputs& x, const Vector& y, Polarity p) {
  if (x.rows() != y.size()) throw DimensionError("inputs and targets differ in length");
  Dataset d;
  d.polarity = p;
  d.points.reserve(static_cast<std::size_t>(y.size()));
  for (Eigen::Index k = 0; k < y.size(); ++k) d.points.push_back({x.row(k).transpose(), y(k)});
  return d;
}

std::vector<Eigen::Vector2d> raster_positions(const GridSpec& grid) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(grid.size());
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i) out.push_back(grid.position(i, j));
  return out;
}

double mse(const Matrix& image, const Matrix& reference) {
  if (image.rows() != reference.rows() || image.cols() != reference.cols())
    throw DimensionError("mse: dimension mismatch");
  if (image.size() == 0) return 0.0;
  return (image - reference).squaredNorm() / static_cast<double>(image.size());
}

void write_matrix(std::ostream& os, const Matrix& m) {
  os << m.rows() << ' ' << m.cols() << '\n';
  os << std::setprecision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) os << ' ';
      os << m(r, c);
    }
    os << '\n';
  }
}

namespace {
double parse_double(const std::string& tok) {
  // operator>> rejects "nan"/"inf"; strtod accepts them
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw std::invalid_argument("bad matrix entry '" + tok + "'");
  return v;
}
}  // namespace

Matrix read_matrix(std::istream& is) {
  // '#' lines before the header are comments
  while (is >> std::ws && is.peek() == '#') is.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  Eigen::Index rows = 0, cols = 0;
  if (!(is >> rows >> cols) || rows < 0 || cols < 0) throw std::invalid_argument("bad matrix header");
  Matrix m(rows, cols);
  std::string tok;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(is >> tok)) throw std::invalid_argument("matrix truncated");
      m(r, c) = parse_double(tok);
    }
  return m;
}

void write_matrix_file(const std::string& path, const Matrix& m) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_matrix(f, m);
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

Matrix read_matrix_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  return read_matrix(f);
}

}  // namespace sqdm
