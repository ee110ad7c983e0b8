#include "core.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

using namespace sqdm;

TEST_CASE("raster order on the smallest grid") {
  const auto p = raster_positions(GridSpec(2, 2, 1.0, 1.0));
  REQUIRE(p.size() == 4);
  CHECK(p[0] == Eigen::Vector2d(0, 0));
  CHECK(p[1] == Eigen::Vector2d(1, 0));
  CHECK(p[2] == Eigen::Vector2d(0, 1));
  CHECK(p[3] == Eigen::Vector2d(1, 1));
}

TEST_CASE("single line with pitch scaling") {
  GridSpec g;
  g.nx = 3;
  g.ny = 1;
  g.pitch_x = 0.5;
  g.pitch_y = 1.0;
  const auto p = raster_positions(g);
  REQUIRE(p.size() == 3);
  CHECK(p[0] == Eigen::Vector2d(0, 0));
  CHECK(p[1] == Eigen::Vector2d(0.5, 0));
  CHECK(p[2] == Eigen::Vector2d(1.0, 0));
}

TEST_CASE("63 x 63 grid has 3969 positions") {
  CHECK(raster_positions(GridSpec(63, 63, 0.1, 0.1)).size() == 3969);
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(GridSpec(1, 5, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(GridSpec(5, 5, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(GridSpec(5, 5, 1, -1), std::invalid_argument);
}

TEST_CASE("raster positions are a bijection recovered by sorting on (j, i)") {
  const GridSpec g(7, 5, 0.3, 0.7);
  auto p = raster_positions(g);
  auto shuffled = p;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(3));
  std::sort(shuffled.begin(), shuffled.end(), [](const auto& a, const auto& b) {
    return a(1) != b(1) ? a(1) < b(1) : a(0) < b(0);
  });
  CHECK(shuffled == p);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) CHECK(p[static_cast<std::size_t>(j * g.nx + i)] == g.position(i, j));
}

TEST_CASE("line inputs follow ascending x") {
  const GridSpec g(4, 3, 0.5, 2.0);
  const Inputs x = g.line_inputs(2);
  REQUIRE(x.rows() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(x(i, 0) == doctest::Approx(0.5 * i));
    CHECK(x(i, 1) == doctest::Approx(4.0));
  }
}

TEST_CASE("mse examples") {
  Matrix a(2, 2), b(2, 2);
  a << 0, 1, 2, 3;
  b << 1, 1, 2, 5;
  CHECK(mse(a, b) == 1.25);
  CHECK(mse(a, a) == 0.0);
  CHECK(mse(a, (a.array() + 0.3).matrix()) == doctest::Approx(0.09).epsilon(1e-14));
  CHECK_THROWS_AS(mse(a, Matrix::Zero(3, 2)), DimensionError);
}

TEST_CASE("mse is symmetric and nonnegative") {
  std::mt19937_64 g(1);
  std::normal_distribution<double> n;
  for (int k = 0; k < 20; ++k) {
    Matrix a(4, 6), b(4, 6);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a.data()[i] = n(g);
      b.data()[i] = n(g);
    }
    CHECK(mse(a, b) == mse(b, a));
    CHECK(mse(a, b) >= 0.0);
  }
}

TEST_CASE("dataset round trip keeps order and polarity") {
  Inputs x(3, 2);
  x << 0, 0, 1, 0, 0, 1;
  Vector y(3);
  y << -1.0, -1.1, -1.2;
  const Dataset d = Dataset::from(x, y, Polarity::Positive);
  CHECK(d.size() == 3);
  CHECK(d.polarity == Polarity::Positive);
  CHECK(d.inputs() == x);
  CHECK(d.targets() == y);
}

TEST_CASE("polarity names") {
  CHECK(polarity_from_string(to_string(Polarity::Negative)) == Polarity::Negative);
  CHECK(polarity_from_string(to_string(Polarity::Positive)) == Polarity::Positive);
  CHECK_THROWS(polarity_from_string("sideways"));
}

TEST_CASE("matrix text format round trips at full precision") {
  Matrix m(2, 3);
  m << 1.0 / 3.0, -2.5e-17, 1e300, 0.1, -0.0, 123456789.123456789;
  std::stringstream ss;
  write_matrix(ss, m);
  std::string first;
  std::getline(ss, first);
  CHECK(first == "2 3");
  ss.seekg(0);
  const Matrix back = read_matrix(ss);
  CHECK(back == m);
}

TEST_CASE("matrix reader skips comment header and rejects short data") {
  std::stringstream ok("# kind = r1\n# seed = 3\n1 2\n4 5\n");
  const Matrix m = read_matrix(ok);
  CHECK(m.rows() == 1);
  CHECK(m(0, 1) == 5.0);
  std::stringstream bad("2 2\n1 2 3\n");
  CHECK_THROWS(read_matrix(bad));
}
