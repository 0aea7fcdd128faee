#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "unsat/constitutive.hpp"
#include "unsat/grid.hpp"
#include "unsat/hyperdual.hpp"
#include "unsat/problem.hpp"

namespace unsat {

/// Parameters of the manufactured-solution family on the unit square.
struct ManufacturedCase {
  int example = 1;
  double gamma = 0.0;
  double delta = 5e-3;
  TauKind tau = TauKind::one;
  double diffusion = 1.0;
  double final_time = 3.0;
  bool pcap_uses_conc = true;  ///< false evaluates pcap(theta_m, 0) inside psi_m
};

inline ManufacturedCase manufactured_case(int example) {
  ManufacturedCase mc;
  mc.example = example;
  switch (example) {
    case 1: mc.gamma = 0.0; mc.tau = TauKind::one; break;
    case 2: mc.gamma = 0.0; mc.tau = TauKind::one_plus_theta_sq; break;
    case 3: mc.gamma = 1.0; mc.tau = TauKind::zero; break;
    case 4: mc.gamma = 1.0; mc.tau = TauKind::one_plus_theta_sq; break;
    default:
      throw std::invalid_argument("manufactured_case: examples 1-4 only, got " +
                                  std::to_string(example));
  }
  return mc;
}

namespace mms {

template <class T>
T t1(const T& x, const T& y) {
  return x * y;
}
template <class T>
T t2(const T& x, const T& y) {
  return x * y + 2.0;
}

template <class T>
T theta(const T& x, const T& y, const T& t) {
  using std::cos;
  const T a = t1(x, y);
  const T b = t2(x, y);
  if (t < a) {
    const T s = a - t;
    return 1.0 - 0.5 * cos(s * s);
  }
  if (t > b) {
    const T s = t - b;
    return 1.0 - 0.5 * cos(s * s);
  }
  return T(0.5);
}

/// Exact time derivative of theta.
template <class T>
T dtheta_dt(const T& x, const T& y, const T& t) {
  using std::sin;
  const T a = t1(x, y);
  const T b = t2(x, y);
  if (t < a) {
    const T s = a - t;
    return -1.0 * s * sin(s * s);
  }
  if (t > b) {
    const T s = t - b;
    return s * sin(s * s);
  }
  return T(0.0);
}

template <class T>
T conc(const T& x, const T& y, const T& t) {
  return x * (x - 1.0) * y * (y - 1.0) * t;
}

template <class T>
T dconc_dt(const T& x, const T& y, const T& /*t*/) {
  return x * (x - 1.0) * y * (y - 1.0);
}

/// gamma * Phi_delta applied to a (possibly dual) rate.
template <class T>
T hysteresis(const T& rate, double gamma, double delta) {
  if (rate < T(-delta)) return T(-gamma);
  if (rate > T(delta)) return T(gamma);
  return (gamma / delta) * rate;
}

template <class T>
T psi(const T& x, const T& y, const T& t, const ManufacturedCase& mc) {
  const T th = theta(x, y, t);
  const T rate = dtheta_dt(x, y, t);
  const T c = mc.pcap_uses_conc ? conc(x, y, t) : T(0.0);
  return -1.0 * pcap_poly(th, c) + tau_variant(mc.tau, th) * rate +
         hysteresis(rate, mc.gamma, mc.delta);
}

}  // namespace mms

inline double theta_m(double x, double y, double t) { return mms::theta(x, y, t); }
inline double c_m(double x, double y, double t) { return mms::conc(x, y, t); }
inline double psi_m(double x, double y, double t, const ManufacturedCase& mc) {
  return mms::psi(x, y, t, mc);
}

struct SourceValues {
  double s1;
  double s2;
};

/// Sources making (psi_m, theta_m, c_m) an exact solution of
///   d_t theta - div(K (grad psi + e_y)) = S1,
///   d_t(theta c) - div(D grad c - u c) + R(c) = S2,  u = -K (grad psi + e_y).
/// Spatial first and second derivatives come from hyper-dual numbers, so the
/// values carry no truncation error.
inline SourceValues source_terms(double x, double y, double t, const ManufacturedCase& mc) {
  using HD = HyperDual;
  const HD X = HD::variable(x);
  const HD Y = HD::variable(y);

  const HD th_x = mms::theta<HD>(X, y, t);
  const HD ps_x = mms::psi<HD>(X, y, t, mc);
  const HD c_x = mms::conc<HD>(X, y, t);
  const HD th_y = mms::theta<HD>(x, Y, t);
  const HD ps_y = mms::psi<HD>(x, Y, t, mc);
  const HD c_y = mms::conc<HD>(x, Y, t);

  const double th = th_x.v;
  const double k = k_poly(th);
  const double dk = dk_poly(th);
  const double gx = ps_x.d1;
  const double gy = ps_y.d1 + 1.0;
  const double div_flux = dk * th_x.d1 * gx + k * ps_x.d12 + dk * th_y.d1 * gy + k * ps_y.d12;

  const double th_t = mms::dtheta_dt(x, y, t);
  const double s1 = th_t - div_flux;

  const double c = c_x.v;
  const double c_t = mms::dconc_dt(x, y, t);
  const double lap_c = c_x.d12 + c_y.d12;
  const double u_dot_grad_c = -k * gx * c_x.d1 - k * gy * c_y.d1;
  const double s2 = th * c_t + c * s1 - mc.diffusion * lap_c + u_dot_grad_c + reaction(c);
  return {s1, s2};
}

/// Composite Gauss-Legendre rule on [a, b]: `pieces` panels of three points.
inline std::vector<std::pair<double, double>> gauss_panels(double a, double b, int pieces) {
  static constexpr double r = 0.7745966692414834;  // sqrt(3/5)
  static constexpr double w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  const double xi[3] = {-r, 0.0, r};
  std::vector<std::pair<double, double>> out;
  out.reserve(static_cast<std::size_t>(3 * pieces));
  const double h = (b - a) / pieces;
  for (int p = 0; p < pieces; ++p) {
    const double mid = a + (p + 0.5) * h;
    for (int q = 0; q < 3; ++q) out.emplace_back(mid + 0.5 * h * xi[q], 0.5 * h * w[q]);
  }
  return out;
}

/// Cell means of the sources over [x0, x1] x [y0, y1], obtained from the
/// divergence theorem: volume integrals of the time derivatives and the
/// reaction plus face integrals of the exact fluxes. Unlike point values this
/// keeps the line sources carried by kinks of psi_m, where the flux of the
/// manufactured solution jumps, so the fields stay a weak solution.
inline SourceValues cell_source_terms(double x0, double x1, double y0, double y1, double t,
                                      const ManufacturedCase& mc, int pieces = 4) {
  using HD = HyperDual;
  const double area = (x1 - x0) * (y1 - y0);
  const auto qx = gauss_panels(x0, x1, pieces);
  const auto qy = gauss_panels(y0, y1, pieces);

  double vol1 = 0.0;
  double vol2 = 0.0;
  for (const auto& [x, wx] : qx)
    for (const auto& [y, wy] : qy) {
      const double th = mms::theta(x, y, t);
      const double th_t = mms::dtheta_dt(x, y, t);
      const double c = mms::conc(x, y, t);
      const double c_t = mms::dconc_dt(x, y, t);
      vol1 += wx * wy * th_t;
      vol2 += wx * wy * (th_t * c + th * c_t + reaction(c));
    }

  // Outward flux of u = -K grad(psi + y) and of -D grad c + u c.
  double out1 = 0.0;
  double out2 = 0.0;
  for (const double xf : {x0, x1}) {
    const double nxs = xf == x1 ? 1.0 : -1.0;
    for (const auto& [y, w] : qy) {
      const HD X = HD::variable(xf);
      const HD ps = mms::psi<HD>(X, y, t, mc);
      const HD c = mms::conc<HD>(X, y, t);
      const double u = -k_poly(mms::theta(xf, y, t)) * ps.d1;
      out1 += w * nxs * u;
      out2 += w * nxs * (-mc.diffusion * c.d1 + u * c.v);
    }
  }
  for (const double yf : {y0, y1}) {
    const double nys = yf == y1 ? 1.0 : -1.0;
    for (const auto& [x, w] : qx) {
      const HD Y = HD::variable(yf);
      const HD ps = mms::psi<HD>(x, Y, t, mc);
      const HD c = mms::conc<HD>(x, Y, t);
      const double u = -k_poly(mms::theta(x, yf, t)) * (ps.d1 + 1.0);
      out1 += w * nys * u;
      out2 += w * nys * (-mc.diffusion * c.d1 + u * c.v);
    }
  }
  return {(vol1 + out1) / area, (vol2 + out2) / area};
}

/// Dirichlet data of the manufactured family on any side: (psi_m, 0).
inline std::pair<double, double> dirichlet_from_manufactured(Side /*side*/, double x, double y,
                                                             double t,
                                                             const ManufacturedCase& mc) {
  return {psi_m(x, y, t, mc), 0.0};
}

struct ErrorReport {
  double e_psi = 0.0;
  double e_theta = 0.0;
  double e_c = 0.0;
};

/// Space-time discrete L2 errors sqrt(sum_n dt sum_K |K| (u_m(x_K, t_n) - u_K^n)^2)
/// over the states at t_1..t_N.
inline ErrorReport error_norms(const std::vector<DiscreteState>& trajectory,
                               const ManufacturedCase& mc, const StructuredGrid& grid,
                               double dt, int expected_steps = -1) {
  if (trajectory.empty()) throw std::invalid_argument("error_norms: empty trajectory");
  if (expected_steps >= 0 && static_cast<int>(trajectory.size()) != expected_steps)
    throw std::invalid_argument("error_norms: incomplete trajectory (" +
                                std::to_string(trajectory.size()) + " of " +
                                std::to_string(expected_steps) + " steps)");
  const double vol = grid.cell_volume();
  double sp = 0.0;
  double st = 0.0;
  double sc = 0.0;
  for (const auto& s : trajectory) {
    if (s.size() != grid.num_cells()) throw std::invalid_argument("error_norms: size mismatch");
    for (int k = 0; k < grid.num_cells(); ++k) {
      const auto& p = grid.center(k);
      const double dp = psi_m(p[0], p[1], s.time, mc) - s.psi[k];
      const double dth = theta_m(p[0], p[1], s.time) - s.theta[k];
      const double dc = c_m(p[0], p[1], s.time) - s.conc[k];
      sp += dt * vol * dp * dp;
      st += dt * vol * dth * dth;
      sc += dt * vol * dc * dc;
    }
  }
  return {std::sqrt(sp), std::sqrt(st), std::sqrt(sc)};
}

/// log2(e_coarse / e_fine).
inline double eoc(double e_coarse, double e_fine) {
  if (!(e_coarse > 0.0) || !(e_fine > 0.0))
    throw std::invalid_argument("eoc: errors must be positive");
  return std::log(e_coarse / e_fine) / std::log(2.0);
}

// ---------------------------------------------------------------------------
// Example presets

enum class SourceQuadrature {
  cell_mean,  ///< flux-consistent cell means
  pointwise,  ///< strong-form values at cell centers
};

struct ExampleOptions {
  FaceWeighting weighting = FaceWeighting::arithmetic;
  std::optional<Advection> advection;  // default: central for 1-4, upwind for 5
  SourceQuadrature sources = SourceQuadrature::cell_mean;  // examples 1-4
  bool pcap_uses_conc = true;                     // examples 1-4
  VgPcapForm vg_form = VgPcapForm::printed;       // example 5
  bool vg_effective = true;                       // example 5
};

/// Stabilization parameter the examples are reported with.
inline double example_default_L(int example) {
  switch (example) {
    case 1:
    case 2:
    case 4: return 0.1;
    case 3: return 1.0;
    case 5: return 0.5;
    default: throw std::invalid_argument("unknown example " + std::to_string(example));
  }
}

inline double example_final_time(int example) {
  if (example >= 1 && example <= 4) return 3.0;
  if (example == 5) return 4.0;
  throw std::invalid_argument("unknown example " + std::to_string(example));
}

/// Left-side pressure head of the physical example.
inline double example5_left_psi(double t) {
  if (t < 1.0) return 1.0 + 0.5 * t;
  if (t < 2.0) return 1.5;
  if (t < 3.0) return 1.0 + 0.5 * (3.0 - t);
  return 1.0 - 0.4;
}

inline ProblemSpec make_manufactured_problem(const ManufacturedCase& mc, int nx,
                                             const ExampleOptions& opt = {}) {
  ProblemSpec p;
  p.name = "example" + std::to_string(mc.example);
  p.grid = build_grid(nx, nx);
  p.model = polynomial_model(mc.tau, mc.gamma, mc.delta, mc.diffusion);
  p.final_time = mc.final_time;
  p.weighting = opt.weighting;
  p.advection = opt.advection.value_or(Advection::central);

  SideCondition side;
  side.kind = BoundaryKind::dirichlet;
  side.psi = [mc](double x, double y, double t) { return psi_m(x, y, t, mc); };
  side.conc = [](double, double, double) { return 0.0; };
  for (auto& s : p.bc.sides) s = side;

  if (opt.sources == SourceQuadrature::cell_mean) {
    p.src.cell_mean = [mc](double x0, double x1, double y0, double y1, double t) {
      const auto s = cell_source_terms(x0, x1, y0, y1, t, mc);
      return std::pair{s.s1, s.s2};
    };
  } else {
    p.src.s1 = [mc](double x, double y, double t) { return source_terms(x, y, t, mc).s1; };
    p.src.s2 = [mc](double x, double y, double t) { return source_terms(x, y, t, mc).s2; };
  }

  p.initial.psi = [mc](double x, double y) { return psi_m(x, y, 0.0, mc); };
  p.initial.theta = [](double x, double y) { return theta_m(x, y, 0.0); };
  p.initial.conc = [](double, double) { return 0.0; };
  return p;
}

inline ProblemSpec make_example5(int nx, const ExampleOptions& opt = {}) {
  ProblemSpec p;
  p.name = "example5";
  p.grid = build_grid(nx, nx);
  p.model = van_genuchten_model(VanGenuchtenParams{}, TauKind::one_plus_theta_sq, 1.0, 5e-3,
                                opt.vg_form, opt.vg_effective, 1.0);
  p.final_time = 4.0;
  p.weighting = opt.weighting;
  p.advection = opt.advection.value_or(Advection::upwind);

  auto& left = p.bc[Side::left];
  left.kind = BoundaryKind::dirichlet;
  left.psi = [](double, double, double t) { return example5_left_psi(t); };
  left.conc = [](double, double, double) { return 2.0; };

  const ConstitutiveSet model = p.model;
  p.initial.theta = [](double x, double) { return x; };
  p.initial.conc = [](double, double) { return 1.0; };
  p.initial.psi = [model](double x, double) { return -model.pcap(x, 1.0); };
  return p;
}

inline ProblemSpec make_example(int example, int nx, const ExampleOptions& opt = {}) {
  if (example == 5) return make_example5(nx, opt);
  auto mc = manufactured_case(example);
  mc.pcap_uses_conc = opt.pcap_uses_conc;
  return make_manufactured_problem(mc, nx, opt);
}

}  // namespace unsat
