#include "rtrl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rtrl/error.hpp"
#include "rtrl/kernels.hpp"
#include "rtrl/rng.hpp"

namespace rtrl {

Mat::Mat(std::size_t rows, std::size_t cols, Vec data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw ConfigError("Mat: data length " + std::to_string(data_.size()) + " != " +
                      std::to_string(rows) + "x" + std::to_string(cols));
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ConfigError("Mat: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Mat Mat::identity(std::size_t n, double scale) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = scale;
  return m;
}

Mat Mat::column(std::span<const double> values) {
  return Mat(values.size(), 1, Vec(values.begin(), values.end()));
}

std::string shape_string(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

namespace {
void require(bool ok, const char* op, const Mat& a, const Mat& b) {
  if (!ok)
    throw ConfigError(std::string(op) + ": dimension mismatch " + shape_string(a) + " vs " +
                      shape_string(b));
}
}  // namespace

Mat matmul(const Mat& a, const Mat& b) {
  require(a.cols() == b.rows(), "matmul", a, b);
  Mat c(a.rows(), b.cols());
  kernels::parallel::gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), b.data(), c.data());
  return c;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows(), "matmul_tn", a, b);
  Mat c(a.cols(), b.cols());
  kernels::parallel::gemm_tn(a.cols(), b.cols(), a.rows(), a.data(), b.data(), c.data());
  return c;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
  require(a.cols() == b.cols(), "matmul_nt", a, b);
  Mat c(a.rows(), b.rows());
  kernels::parallel::gemm_nt(a.rows(), b.rows(), a.cols(), a.data(), b.data(), c.data());
  return c;
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

Mat operator+(const Mat& a, const Mat& b) {
  require(a.same_shape(b), "add", a, b);
  Mat c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

Mat operator-(const Mat& a, const Mat& b) {
  require(a.same_shape(b), "sub", a, b);
  Mat c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

Mat operator*(double s, const Mat& a) {
  Mat c = a;
  for (double& v : c.values()) v *= s;
  return c;
}

void axpy(double alpha, const Mat& x, Mat& y) {
  require(x.same_shape(y), "axpy", x, y);
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] += alpha * x.data()[i];
}

double frobenius_norm(const Mat& a) { return std::sqrt(dot(a.values(), a.values())); }

double max_abs(const Mat& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool all_finite(const Mat& a) { return all_finite(a.values()); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Mat kron(const Mat& a, const Mat& b) {
  Mat k(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t p = 0; p < b.rows(); ++p)
        for (std::size_t q = 0; q < b.cols(); ++q)
          k(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
  return k;
}

namespace {

std::string spd_diagnostics(const Mat& a) {
  double min_diag = INFINITY, asym = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    min_diag = std::min(min_diag, a(i, i));
    for (std::size_t j = 0; j < i; ++j) asym = std::max(asym, std::abs(a(i, j) - a(j, i)));
  }
  std::ostringstream os;
  os << "shape " << shape_string(a) << ", min diagonal " << min_diag << ", max |a| "
     << max_abs(a) << ", max asymmetry " << asym;
  return os.str();
}

}  // namespace

Mat cholesky(const Mat& a) {
  if (a.rows() != a.cols()) throw ConfigError("cholesky: non-square " + shape_string(a));
  const std::size_t n = a.rows();
  Mat l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) {
      std::ostringstream os;
      os << "cholesky: matrix not positive definite at pivot " << j << " (value " << d
         << "); " << spd_diagnostics(a);
      throw NumericError(os.str());
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Mat solve_spd(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) throw ConfigError("solve_spd: " + shape_string(a) + " vs " +
                                              shape_string(b));
  const Mat l = cholesky(a);
  const std::size_t n = a.rows();
  Mat x = b;
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
      x(i, c) = s / l(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = x(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x(k, c);
      x(ii, c) = s / l(ii, ii);
    }
  }
  return x;
}

Mat solve_linear(const Mat& a, const Mat& b) {
  if (a.rows() != a.cols() || a.rows() != b.rows())
    throw ConfigError("solve_linear: " + shape_string(a) + " vs " + shape_string(b));
  const std::size_t n = a.rows();
  Mat lu = a;
  Mat x = b;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(lu(r, col)) > std::abs(lu(piv, col))) piv = r;
    if (lu(piv, col) == 0.0) throw NumericError("solve_linear: singular matrix at column " +
                                                std::to_string(col));
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(lu(col, c), lu(piv, c));
      for (std::size_t c = 0; c < x.cols(); ++c) std::swap(x(col, c), x(piv, c));
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = lu(r, col) / lu(col, col);
      lu(r, col) = 0.0;
      for (std::size_t c = col + 1; c < n; ++c) lu(r, c) -= f * lu(col, c);
      for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) -= f * x(col, c);
    }
  }
  for (std::size_t c = 0; c < x.cols(); ++c)
    for (std::size_t i = n; i-- > 0;) {
      double s = x(i, c);
      for (std::size_t k = i + 1; k < n; ++k) s -= lu(i, k) * x(k, c);
      x(i, c) = s / lu(i, i);
    }
  return x;
}

SymmetricEigen symmetric_eigen(const Mat& a, double tol, int max_sweeps) {
  if (a.rows() != a.cols()) throw ConfigError("symmetric_eigen: non-square " + shape_string(a));
  const std::size_t n = a.rows();
  Mat m = a;
  Mat v = Mat::identity(n);
  const double scale = std::max(frobenius_norm(a), 1e-300);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
    if (std::sqrt(off) <= tol * scale) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (apq == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m(k, p), mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m(p, k), mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return m(i, i) < m(j, j); });
  SymmetricEigen out{Vec(n), Mat(n, n)};
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = m(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = v(r, order[c]);
  }
  return out;
}

Mat sample_standard_normal(RngStream& rng, std::size_t n) {
  Mat z(n, 1);
  for (double& x : z.values()) x = rng.normal();
  return z;
}

}  // namespace rtrl
