#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rtrl {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Column vectors are n x 1.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, Vec data);
  Mat(std::initializer_list<std::initializer_list<double>> rows);

  static Mat identity(std::size_t n, double scale = 1.0);
  static Mat column(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const Vec& values() const { return data_; }
  Vec& values() { return data_; }

  bool same_shape(const Mat& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
  bool operator==(const Mat& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

std::string shape_string(const Mat& m);

/// a * b. Throws ConfigError on mismatched inner dimensions.
Mat matmul(const Mat& a, const Mat& b);
/// a^T * b without materializing the transpose.
Mat matmul_tn(const Mat& a, const Mat& b);
/// a * b^T.
Mat matmul_nt(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);

Mat operator+(const Mat& a, const Mat& b);
Mat operator-(const Mat& a, const Mat& b);
Mat operator*(double s, const Mat& a);
/// y += alpha * x
void axpy(double alpha, const Mat& x, Mat& y);

double frobenius_norm(const Mat& a);
double max_abs(const Mat& a);
bool all_finite(const Mat& a);
bool all_finite(std::span<const double> v);

/// Kronecker product a (x) b.
Mat kron(const Mat& a, const Mat& b);

/// Lower Cholesky factor of a symmetric positive definite matrix; throws
/// NumericError with the failing pivot and matrix diagnostics otherwise.
Mat cholesky(const Mat& a);
/// Solves a x = b for SPD a via Cholesky. b may have several columns.
Mat solve_spd(const Mat& a, const Mat& b);
/// Solves a x = b with partial-pivot LU for general square a.
Mat solve_linear(const Mat& a, const Mat& b);

struct SymmetricEigen {
  Vec values;    // ascending
  Mat vectors;   // columns are eigenvectors
};
/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
SymmetricEigen symmetric_eigen(const Mat& a, double tol = 1e-14, int max_sweeps = 100);

class RngStream;
/// n x 1 column of i.i.d. N(0,1) draws.
Mat sample_standard_normal(RngStream& rng, std::size_t n);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace rtrl
