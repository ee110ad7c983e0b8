#include "kernels.hpp"

#include <cmath>
#include <numbers>

namespace sqdm {

const char* to_string(KernelKind k) {
  switch (k) {
    case KernelKind::SEIso: return "se-iso";
    case KernelKind::SEArd: return "se-ard";
    case KernelKind::SparseSpectrum: return "sparse-spectrum";
  }
  return "?";
}

double HyperParams::sigma_f() const {
  if (axis_log_sigma_f) return std::exp(axis_log_sigma_f->sum());
  return std::exp(log_sigma_f);
}

double HyperParams::length(int d) const {
  if (log_lengths.size() == 1) return std::exp(log_lengths(0));
  return std::exp(log_lengths(d));
}

HyperParams HyperParams::se(double c, double sigma_f, std::initializer_list<double> lengths, double sigma_n) {
  HyperParams h;
  h.mean_c = c;
  h.log_sigma_f = std::log(sigma_f);
  h.log_lengths.resize(static_cast<Eigen::Index>(lengths.size()));
  Eigen::Index k = 0;
  for (double l : lengths) h.log_lengths(k++) = std::log(l);
  h.log_sigma_n = std::log(sigma_n);
  return h;
}

int expected_lengths(KernelKind kind) { return kind == KernelKind::SEArd ? 2 : 1; }

void check_hyper(KernelKind kind, const HyperParams& h) {
  if (kind == KernelKind::SparseSpectrum) {
    if (h.points.rows() < 1) throw DimensionError("sparse-spectrum kernel needs at least one frequency");
    return;
  }
  if (h.log_lengths.size() != expected_lengths(kind))
    throw DimensionError(std::string(to_string(kind)) + " expects " + std::to_string(expected_lengths(kind)) +
                         " length scale(s)");
}

Vector pack(ParamLayout layout, const HyperParams& h) {
  const Eigen::Index nl = h.log_lengths.size();
  const Eigen::Index np = 2 * h.points.rows();
  Vector v;
  switch (layout) {
    case ParamLayout::SE:
    case ParamLayout::SEPoints: {
      const Eigen::Index extra = layout == ParamLayout::SEPoints ? np : 0;
      v.resize(3 + nl + extra);
      v(0) = h.mean_c;
      v(1) = h.log_sigma_f;
      v.segment(2, nl) = h.log_lengths;
      v(2 + nl) = h.log_sigma_n;
      for (Eigen::Index r = 0; r < extra / 2; ++r) {
        v(3 + nl + 2 * r) = h.points(r, 0);
        v(3 + nl + 2 * r + 1) = h.points(r, 1);
      }
      break;
    }
    case ParamLayout::Spectral: {
      v.resize(3 + np);
      v(0) = h.mean_c;
      v(1) = h.log_sigma_f;
      v(2) = h.log_sigma_n;
      for (Eigen::Index r = 0; r < np / 2; ++r) {
        v(3 + 2 * r) = h.points(r, 0);
        v(4 + 2 * r) = h.points(r, 1);
      }
      break;
    }
    case ParamLayout::KronAxes: {
      if (!h.axis_log_sigma_f || nl != 2) throw DimensionError("Kronecker layout needs per-axis amplitudes and ARD lengths");
      v.resize(6);
      v(0) = h.mean_c;
      v(1) = (*h.axis_log_sigma_f)(0);
      v(2) = (*h.axis_log_sigma_f)(1);
      v(3) = h.log_lengths(0);
      v(4) = h.log_lengths(1);
      v(5) = h.log_sigma_n;
      break;
    }
  }
  return v;
}

HyperParams unpack(ParamLayout layout, const Vector& v, const HyperParams& shape) {
  HyperParams h = shape;
  if (v.size() != pack(layout, shape).size()) throw DimensionError("parameter vector has wrong length");
  const Eigen::Index nl = shape.log_lengths.size();
  switch (layout) {
    case ParamLayout::SE:
    case ParamLayout::SEPoints:
      h.mean_c = v(0);
      h.log_sigma_f = v(1);
      h.log_lengths = v.segment(2, nl);
      h.log_sigma_n = v(2 + nl);
      if (layout == ParamLayout::SEPoints)
        for (Eigen::Index r = 0; r < h.points.rows(); ++r) {
          h.points(r, 0) = v(3 + nl + 2 * r);
          h.points(r, 1) = v(3 + nl + 2 * r + 1);
        }
      break;
    case ParamLayout::Spectral:
      h.mean_c = v(0);
      h.log_sigma_f = v(1);
      h.log_sigma_n = v(2);
      for (Eigen::Index r = 0; r < h.points.rows(); ++r) {
        h.points(r, 0) = v(3 + 2 * r);
        h.points(r, 1) = v(4 + 2 * r);
      }
      break;
    case ParamLayout::KronAxes:
      h.mean_c = v(0);
      h.axis_log_sigma_f = Eigen::Vector2d(v(1), v(2));
      h.log_sigma_f = v(1) + v(2);
      h.log_lengths = v.segment(3, 2);
      h.log_sigma_n = v(5);
      break;
  }
  return h;
}

Vector mean_eval(const HyperParams& h, const Inputs& x) { return Vector::Constant(x.rows(), h.mean_c); }

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Eigen::Vector2d inverse_sq_lengths(KernelKind kind, const HyperParams& h) {
  if (kind == KernelKind::SEArd) return {std::exp(-2.0 * h.log_lengths(0)), std::exp(-2.0 * h.log_lengths(1))};
  const double w = std::exp(-2.0 * h.log_lengths(0));
  return {w, w};
}

// Phase matrix 2*pi*s_r^T x, one row per input.
Matrix phases(const HyperParams& h, const Inputs& x) { return kTwoPi * (x * h.points.transpose()); }

}  // namespace

Matrix kernel_matrix(KernelKind kind, const HyperParams& h, const Inputs& a, const Inputs& b) {
  check_hyper(kind, h);
  const double sf2 = h.signal_variance();
  if (kind == KernelKind::SparseSpectrum) {
    const double scale = sf2 / static_cast<double>(h.points.rows());
    const Matrix pa = phases(h, a), pb = phases(h, b);
    // cos(u - v) = cos u cos v + sin u sin v
    const Matrix ca = pa.array().cos(), sa = pa.array().sin();
    const Matrix cb = pb.array().cos(), sb = pb.array().sin();
    return scale * (ca * cb.transpose() + sa * sb.transpose());
  }
  const Eigen::Vector2d w = inverse_sq_lengths(kind, h);
  Matrix k(a.rows(), b.rows());
  for (Eigen::Index q = 0; q < b.rows(); ++q)
    for (Eigen::Index p = 0; p < a.rows(); ++p) {
      const double dx = a(p, 0) - b(q, 0), dy = a(p, 1) - b(q, 1);
      k(p, q) = sf2 * std::exp(-0.5 * (w(0) * dx * dx + w(1) * dy * dy));
    }
  return k;
}

std::vector<Matrix> kernel_grad(KernelKind kind, const HyperParams& h, const Inputs& a, const Inputs& b) {
  const Matrix k = kernel_matrix(kind, h, a, b);
  std::vector<Matrix> out;
  out.push_back(2.0 * k);
  if (kind == KernelKind::SparseSpectrum) {
    const double scale = h.signal_variance() / static_cast<double>(h.points.rows());
    for (Eigen::Index r = 0; r < h.points.rows(); ++r)
      for (int d = 0; d < 2; ++d) {
        Matrix g(a.rows(), b.rows());
        for (Eigen::Index q = 0; q < b.rows(); ++q)
          for (Eigen::Index p = 0; p < a.rows(); ++p) {
            const Eigen::RowVector2d diff = a.row(p) - b.row(q);
            const double phase = kTwoPi * diff.dot(h.points.row(r));
            g(p, q) = -scale * std::sin(phase) * kTwoPi * diff(d);
          }
        out.push_back(std::move(g));
      }
    return out;
  }
  const Eigen::Vector2d w = inverse_sq_lengths(kind, h);
  if (kind == KernelKind::SEIso) {
    Matrix g(a.rows(), b.rows());
    for (Eigen::Index q = 0; q < b.rows(); ++q)
      for (Eigen::Index p = 0; p < a.rows(); ++p)
        g(p, q) = k(p, q) * w(0) * (a.row(p) - b.row(q)).squaredNorm();
    out.push_back(std::move(g));
  } else {
    for (int d = 0; d < 2; ++d) {
      Matrix g(a.rows(), b.rows());
      for (Eigen::Index q = 0; q < b.rows(); ++q)
        for (Eigen::Index p = 0; p < a.rows(); ++p) {
          const double diff = a(p, d) - b(q, d);
          g(p, q) = k(p, q) * w(d) * diff * diff;
        }
      out.push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace sqdm
