#ifndef ROBINIT_LINALG_HPP_
#define ROBINIT_LINALG_HPP_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace robinit {

/// Raised when operand shapes do not satisfy an operation's precondition.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation would produce NaN or Inf entries.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Power iteration ran out of iterations. Carries the best estimate so far.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double best_estimate)
      : std::runtime_error(what), best_estimate_(best_estimate) {}
  double best_estimate() const { return best_estimate_; }

 private:
  double best_estimate_;
};

class RankDeficientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix. An empty (0x0) matrix is allowed as a placeholder;
// every public operation requires nonempty operands unless stated.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t len, double fill = 0.0) : data_(len, fill) {}
  explicit Vector(std::vector<double> data) : data_(std::move(data)) {}
  Vector(std::initializer_list<double> values) : data_(values) {}

  std::size_t size() const { return data_.size(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  double sum() const;

  bool operator==(const Vector& other) const = default;

 private:
  std::vector<double> data_;
};

// Arithmetic. All results are checked for finiteness.
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);
Vector apply(const Matrix& m, const Vector& v);

/// Keeps only the listed rows, in the given order.
Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);

/// Shortest decimal form that parses back to x.
void write_number(std::ostream& os, double x);
std::string format_number(double x);

double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);
double norm2(const Vector& v);

inline constexpr double kSpectralTol = 1e-9;
inline constexpr int kSpectralMaxIter = 10000;

/// Largest singular value by power iteration on the Gram matrix. Starts from
/// the all-ones vector; falls back to a fixed-seed random start when that
/// vector is orthogonal to the dominant singular subspace.
double spectral_norm(const Matrix& m, double tol = kSpectralTol, int max_iter = kSpectralMaxIter);

/// Like spectral_norm but returns the best estimate instead of throwing on
/// non-convergence.
double spectral_norm_estimate(const Matrix& m, double tol = kSpectralTol,
                              int max_iter = kSpectralMaxIter);

/// Thin Q factor of a Householder QR, columns signed so that diag(R) > 0.
Matrix orthogonalize(const Matrix& m);

Vector matrix_power_apply(const Matrix& m, std::size_t k, const Vector& v);

void require_finite(const Matrix& m, const char* where);

}  // namespace robinit

#endif  // ROBINIT_LINALG_HPP_
