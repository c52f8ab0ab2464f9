#include "robinit/linalg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace robinit {

namespace {

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
  }
}

// Gram matrix of the smaller side: mᵀm when cols <= rows, else m·mᵀ. Both
// share the nonzero spectrum, whose maximum is σ_max².
Matrix small_gram(const Matrix& m) {
  return m.cols() <= m.rows() ? matmul_tn(m, m) : matmul_nt(m, m);
}

struct PowerResult {
  double sigma;
  bool converged;
};

PowerResult power_iterate(const Matrix& m, double tol, int max_iter) {
  if (m.empty()) throw DimensionError("spectral_norm: empty matrix");
  if (!(tol > 0.0)) throw std::invalid_argument("spectral_norm: tol must be > 0");
  const double frob = frobenius_norm(m);
  if (frob == 0.0) return {0.0, true};

  const Matrix gram = small_gram(m);
  const std::size_t n = gram.rows();
  const double trace = frob * frob;

  Vector v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  Vector w = apply(gram, v);
  double lambda = std::inner_product(v.data().begin(), v.data().end(), w.data().begin(), 0.0);
  if (lambda <= 1e-12 * trace) {
    std::mt19937_64 rng(0x5eedf00dULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& x : v.data()) x = normal(rng);
    const double nv = norm2(v);
    for (auto& x : v.data()) x /= nv;
    w = apply(gram, v);
    lambda = std::inner_product(v.data().begin(), v.data().end(), w.data().begin(), 0.0);
  }

  for (int iter = 0; iter < max_iter; ++iter) {
    const double nw = norm2(w);
    if (nw == 0.0) return {std::sqrt(std::max(lambda, 0.0)), true};
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
    w = apply(gram, v);
    const double next =
        std::inner_product(v.data().begin(), v.data().end(), w.data().begin(), 0.0);
    const bool done = std::abs(next - lambda) <= tol * std::abs(next);
    lambda = next;
    if (done) return {std::sqrt(std::max(lambda, 0.0)), true};
  }
  return {std::sqrt(std::max(lambda, 0.0)), false};
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (!std::isfinite(fill)) throw NumericError("Matrix: non-finite fill value");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  require_finite(*this, "Matrix");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  require_finite(*this, "Matrix");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

double Vector::sum() const {
  double s = 0.0;
  for (double x : data_) s += x;
  return s;
}

void require_finite(const Matrix& m, const char* where) {
  for (double x : m.data()) {
    if (!std::isfinite(x)) throw NumericError(std::string(where) + ": non-finite entry");
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape(a) + " x " + shape(b));
  }
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.data().data() + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* bk = b.data().data() + k * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
  require_finite(c, "matmul");
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: " + shape(a) + "ᵀ x " + shape(b));
  }
  Matrix c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* bk = b.data().data() + k * n;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      double* ci = c.data().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
    }
  }
  require_finite(c, "matmul_tn");
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: " + shape(a) + " x " + shape(b) + "ᵀ");
  }
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ai = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto bj = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
      c(i, j) = s;
    }
  }
  require_finite(c, "matmul_nt");
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  require_finite(c, "add");
  return c;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  require_finite(c, "subtract");
  return c;
}

Matrix scale(const Matrix& m, double s) {
  Matrix c = m;
  for (auto& x : c.data()) x *= s;
  require_finite(c, "scale");
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= b.data()[i];
  return c;
}

Vector apply(const Matrix& m, const Vector& v) {
  if (m.cols() != v.size()) {
    throw DimensionError("apply: " + shape(m) + " x vector of length " + std::to_string(v.size()));
  }
  Vector out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += r[j] * v[j];
    out[i] = s;
  }
  return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m.rows()) throw DimensionError("select_rows: row index out of range");
    std::copy(m.row(rows[r]).begin(), m.row(rows[r]).end(), out.row(r).begin());
  }
  return out;
}

void write_number(std::ostream& os, double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  os.write(buf, ptr - buf);
}

std::string format_number(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data()) s += x * x;
  return std::sqrt(s);
}

double max_abs(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data()) s = std::max(s, std::abs(x));
  return s;
}

double norm2(const Vector& v) {
  double s = 0.0;
  for (double x : v.data()) s += x * x;
  return std::sqrt(s);
}

double spectral_norm(const Matrix& m, double tol, int max_iter) {
  const PowerResult r = power_iterate(m, tol, max_iter);
  if (!r.converged) {
    throw ConvergenceError("spectral_norm: no convergence after " + std::to_string(max_iter) +
                               " iterations",
                           r.sigma);
  }
  return r.sigma;
}

double spectral_norm_estimate(const Matrix& m, double tol, int max_iter) {
  return power_iterate(m, tol, max_iter).sigma;
}

Matrix orthogonalize(const Matrix& m) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  if (m.empty()) throw DimensionError("orthogonalize: empty matrix");
  if (rows < cols) throw DimensionError("orthogonalize: needs rows >= cols, got " + shape(m));

  const double scale_ref = frobenius_norm(m);
  Matrix a = m;
  std::vector<std::vector<double>> reflectors(cols);
  std::vector<double> diag(cols);

  for (std::size_t k = 0; k < cols; ++k) {
    double xnorm = 0.0;
    for (std::size_t i = k; i < rows; ++i) xnorm += a(i, k) * a(i, k);
    xnorm = std::sqrt(xnorm);
    if (xnorm <= 1e-12 * scale_ref || xnorm == 0.0) {
      throw RankDeficientError("orthogonalize: input is rank deficient at column " +
                               std::to_string(k));
    }
    const double alpha = a(k, k) >= 0.0 ? -xnorm : xnorm;
    std::vector<double> v(rows - k);
    for (std::size_t i = k; i < rows; ++i) v[i - k] = a(i, k);
    v[0] -= alpha;
    double vnorm = 0.0;
    for (double x : v) vnorm += x * x;
    vnorm = std::sqrt(vnorm);
    for (double& x : v) x /= vnorm;

    for (std::size_t j = k; j < cols; ++j) {
      double dot = 0.0;
      for (std::size_t i = k; i < rows; ++i) dot += v[i - k] * a(i, j);
      for (std::size_t i = k; i < rows; ++i) a(i, j) -= 2.0 * v[i - k] * dot;
    }
    diag[k] = alpha;
    reflectors[k] = std::move(v);
  }

  // Q = H_0 H_1 ... H_{c-1} applied to the first c columns of the identity.
  Matrix q(rows, cols);
  for (std::size_t j = 0; j < cols; ++j) q(j, j) = 1.0;
  for (std::size_t kk = cols; kk-- > 0;) {
    const auto& v = reflectors[kk];
    for (std::size_t j = 0; j < cols; ++j) {
      double dot = 0.0;
      for (std::size_t i = kk; i < rows; ++i) dot += v[i - kk] * q(i, j);
      for (std::size_t i = kk; i < rows; ++i) q(i, j) -= 2.0 * v[i - kk] * dot;
    }
  }
  for (std::size_t j = 0; j < cols; ++j) {
    if (diag[j] < 0.0) {
      for (std::size_t i = 0; i < rows; ++i) q(i, j) = -q(i, j);
    }
  }
  return q;
}

Vector matrix_power_apply(const Matrix& m, std::size_t k, const Vector& v) {
  if (m.rows() != m.cols()) throw DimensionError("matrix_power_apply: matrix not square");
  if (m.cols() != v.size()) throw DimensionError("matrix_power_apply: vector length mismatch");
  Vector out = v;
  for (std::size_t i = 0; i < k; ++i) out = apply(m, out);
  return out;
}

}  // namespace robinit
