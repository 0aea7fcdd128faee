#pragma once

#include <Eigen/Core>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace unsat {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sparse LU with partial pivoting (Eigen SparseLU, COLAMD ordering).
class DirectSolver {
 public:
  /// Returns false if the matrix is structurally or numerically singular.
  bool factorize(const SparseMatrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("DirectSolver: matrix must be square");
    ok_ = false;
    lu_.analyzePattern(a);
    lu_.factorize(a);
    if (lu_.info() != Eigen::Success) {
      message_ = lu_.lastErrorMessage();
      return false;
    }
    // An exactly zero or non-finite pivot makes the log-determinant non-finite.
    if (!std::isfinite(lu_.logAbsDeterminant())) {
      message_ = "numerically singular matrix";
      return false;
    }
    ok_ = true;
    return true;
  }

  [[nodiscard]] bool ok() const { return ok_; }
  [[nodiscard]] const std::string& message() const { return message_; }

  template <class Rhs>
  [[nodiscard]] Eigen::MatrixXd solve(const Rhs& b) const {
    require_ok();
    return lu_.solve(b);
  }
  template <class Rhs>
  [[nodiscard]] Eigen::MatrixXd solve_transpose(const Rhs& b) const {
    require_ok();
    return lu_.transpose().solve(b);
  }

 private:
  void require_ok() const {
    if (!ok_) throw SingularMatrixError("DirectSolver: no valid factorization");
  }

  // transpose() is non-const in Eigen 3.4.
  mutable Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
  bool ok_ = false;
  std::string message_;
};

/// Solves A x = b. Throws SingularMatrixError when A cannot be factorized or
/// the solution is not finite.
inline Vector solve_direct(const SparseMatrix& a, const Vector& b) {
  if (a.rows() != a.cols() || a.rows() != b.size())
    throw std::invalid_argument("solve_direct: dimension mismatch");
  DirectSolver s;
  if (!s.factorize(a)) throw SingularMatrixError("solve_direct: " + s.message());
  Vector x = s.solve(b);
  if (!x.allFinite()) throw SingularMatrixError("solve_direct: non-finite solution");
  return x;
}

/// Maximum absolute column sum.
inline double norm1(const SparseMatrix& a) {
  double best = 0.0;
  for (int k = 0; k < a.outerSize(); ++k) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) s += std::abs(it.value());
    best = std::max(best, s);
  }
  return best;
}

struct CondOptions {
  int exact_limit = 2000;  ///< exact inverse norm up to this dimension
  bool force_estimator = false;
  int block = 128;  ///< right-hand sides per solve in the exact path
};

/// ||A^{-1}||_1 from column solves of the identity.
inline double inverse_norm1_exact(const DirectSolver& lu, Eigen::Index n, int block) {
  double best = 0.0;
  for (Eigen::Index j0 = 0; j0 < n; j0 += block) {
    const Eigen::Index w = std::min<Eigen::Index>(block, n - j0);
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, w);
    for (Eigen::Index k = 0; k < w; ++k) e(j0 + k, k) = 1.0;
    const Eigen::MatrixXd x = lu.solve(e);
    best = std::max(best, x.cwiseAbs().colwise().sum().maxCoeff());
  }
  return best;
}

/// Hager's 1-norm estimate of A^{-1} with Higham's alternating-sign safeguard.
inline double inverse_norm1_estimate(const DirectSolver& lu, Eigen::Index n) {
  Vector x = Vector::Constant(n, 1.0 / static_cast<double>(n));
  double est = 0.0;
  Eigen::Index last_j = -1;
  for (int iter = 0; iter < 5; ++iter) {
    const Vector y = lu.solve(x);
    const double e = y.lpNorm<1>();
    if (iter > 0 && e <= est) break;
    est = e;
    Vector xi = y.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
    const Vector z = lu.solve_transpose(xi);
    Eigen::Index j = 0;
    const double zmax = z.cwiseAbs().maxCoeff(&j);
    if (iter > 0 && (zmax <= z.dot(x) || j == last_j)) break;
    x.setZero();
    x[j] = 1.0;
    last_j = j;
  }
  Vector alt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    alt[i] = sign * (1.0 + (n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0));
  }
  const double alt_est = 2.0 * lu.solve(alt).lpNorm<1>() / (3.0 * static_cast<double>(n));
  return std::max(est, alt_est);
}

/// L1 condition number reusing an existing factorization of `a`.
inline double cond1(const SparseMatrix& a, const DirectSolver& lu, const CondOptions& opt = {}) {
  if (!lu.ok()) return std::numeric_limits<double>::infinity();
  const Eigen::Index n = a.rows();
  const bool exact = !opt.force_estimator && n <= opt.exact_limit;
  const double inv = exact ? inverse_norm1_exact(lu, n, opt.block) : inverse_norm1_estimate(lu, n);
  const double c = norm1(a) * inv;
  return std::isfinite(c) ? c : std::numeric_limits<double>::infinity();
}

/// L1 condition number ||A||_1 ||A^{-1}||_1; +infinity for a singular matrix.
inline double cond1(const SparseMatrix& a, const CondOptions& opt = {}) {
  if (a.rows() != a.cols()) throw std::invalid_argument("cond1: matrix must be square");
  DirectSolver lu;
  lu.factorize(a);
  return cond1(a, lu, opt);
}

/// Running average of condition numbers of one equation block.
struct CondStats {
  double sum = 0.0;
  long count = 0;

  void add(double c) {
    sum += c;
    ++count;
  }
  [[nodiscard]] std::optional<double> average() const {
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
  }
};

}  // namespace unsat
