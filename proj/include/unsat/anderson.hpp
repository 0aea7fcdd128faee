#pragma once

#include <Eigen/Dense>

#include <deque>
#include <stdexcept>

namespace unsat {

/// History of an Anderson-accelerated fixed-point loop x = g(x).
///
/// Stores up to m+1 pairs (x_i, g(x_i)). With m = 0 the step is the plain
/// fixed-point update.
struct AndersonState {
  explicit AndersonState(int depth = 0) : m(depth) {
    if (depth < 0) throw std::invalid_argument("AndersonState: depth must be >= 0");
  }

  int m;
  int k = 0;  ///< number of steps taken since the last reset
  std::deque<Eigen::VectorXd> g_hist;
  std::deque<Eigen::VectorXd> f_hist;
  Eigen::VectorXd alpha;  ///< mixing coefficients of the last step

  [[nodiscard]] int history_size() const { return static_cast<int>(f_hist.size()); }
};

inline void aa_reset(AndersonState& s) {
  s.k = 0;
  s.g_hist.clear();
  s.f_hist.clear();
  s.alpha.resize(0);
}

/// One AA(m) update: returns sum_i alpha_i g(x_i) over the stored history
/// including the new pair, with alpha minimizing ||sum_i alpha_i f_i||_2
/// subject to sum_i alpha_i = 1.
///
/// Solved in difference form: with residual differences dF and image
/// differences dG, gamma = argmin ||f_k - dF gamma|| (minimum norm for
/// rank-deficient dF) and x = g_k - dG gamma.
inline Eigen::VectorXd aa_step(AndersonState& s, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& gx) {
  if (x.size() != gx.size()) throw std::invalid_argument("aa_step: size mismatch");
  if (!s.f_hist.empty() && s.f_hist.back().size() != x.size())
    throw std::invalid_argument("aa_step: dimension changed without reset");

  ++s.k;
  if (s.m == 0) {
    s.alpha = Eigen::VectorXd::Ones(1);
    return gx;
  }

  s.g_hist.push_back(gx);
  s.f_hist.push_back(gx - x);
  while (static_cast<int>(s.f_hist.size()) > s.m + 1) {
    s.g_hist.pop_front();
    s.f_hist.pop_front();
  }

  const int mk = static_cast<int>(s.f_hist.size()) - 1;
  if (mk == 0) {
    s.alpha = Eigen::VectorXd::Ones(1);
    return gx;
  }

  const Eigen::Index n = x.size();
  Eigen::MatrixXd dF(n, mk);
  Eigen::MatrixXd dG(n, mk);
  for (int i = 0; i < mk; ++i) {
    dF.col(i) = s.f_hist[i + 1] - s.f_hist[i];
    dG.col(i) = s.g_hist[i + 1] - s.g_hist[i];
  }

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(dF);
  const double scale = dF.cwiseAbs().maxCoeff();
  cod.setThreshold(1e-12);
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(mk);
  if (scale > 0.0 && cod.rank() > 0) gamma = cod.solve(s.f_hist.back());

  s.alpha.resize(mk + 1);
  s.alpha[0] = gamma[0];
  for (int i = 1; i < mk; ++i) s.alpha[i] = gamma[i] - gamma[i - 1];
  s.alpha[mk] = 1.0 - gamma[mk - 1];

  Eigen::VectorXd out = s.g_hist.back() - dG * gamma;
  return out;
}

}  // namespace unsat
