#pragma once

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "unsat/constitutive.hpp"
#include "unsat/grid.hpp"
#include "unsat/problem.hpp"

namespace unsat {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

enum class Linearization { newton, lscheme };

/// How the regularized hysteresis term enters a linearized closure row.
enum class HysteresisTreatment {
  lagged,      ///< Phi evaluated at the reference iterate, constant in the step
  linearized,  ///< Phi(xi_ref) + Phi'(xi_ref) (xi - xi_ref)
  stabilized,  ///< Phi(xi_ref) + (1/delta) (xi - xi_ref), the Lipschitz bound of Phi
  secant,      ///< (Phi(xi_ref) / xi_ref) xi, the chord through the origin
};

/// Reference for the hysteresis term. A null reference evaluates Phi at the
/// unknown itself, which is the exact nonlinear residual.
struct HysteresisFreeze {
  const Vector* theta_ref = nullptr;
  HysteresisTreatment treatment = HysteresisTreatment::lagged;
};

struct LinearSystem {
  SparseMatrix matrix;
  Vector rhs;
  std::vector<std::string> block_names;
  std::vector<int> block_sizes;

  [[nodiscard]] int dimension() const { return static_cast<int>(rhs.size()); }
};

struct FlowResidual {
  Vector mass;
  Vector closure;

  [[nodiscard]] Vector stacked() const {
    Vector r(mass.size() + closure.size());
    r << mass, closure;
    return r;
  }
};

/// Water flux through each face with derivatives w.r.t. the adjacent cell values.
/// Interior fluxes point from owner to neighbor, boundary fluxes point outward.
struct FaceFlux {
  double q = 0.0;
  double k = 0.0;       // face conductivity
  double dk_a = 0.0;    // d k / d theta of the owner (or boundary cell)
  double dk_b = 0.0;    // d k / d theta of the neighbor
  double dhead = 0.0;   // total head difference h_a - h_b
};

struct WaterFluxes {
  std::vector<FaceFlux> interior;
  std::vector<FaceFlux> boundary;
};

/// Weights (owner, neighbor) of the face concentration for water flux q.
/// On a Dirichlet face the neighbor is the boundary value, which sits on the face.
inline std::pair<double, double> advective_weights(const StepContext& ctx, double q,
                                                   bool boundary = false) {
  if (ctx.advection == Advection::upwind) return q >= 0.0 ? std::pair{1.0, 0.0} : std::pair{0.0, 1.0};
  return boundary ? std::pair{0.0, 1.0} : std::pair{0.5, 0.5};
}

/// `derivatives = false` leaves dk_a, dk_b at zero and never calls dK.
inline WaterFluxes water_fluxes(const StepContext& ctx, const Vector& psi, const Vector& theta,
                                bool derivatives = false) {
  const auto& g = *ctx.grid;
  const auto& m = *ctx.model;
  WaterFluxes out;
  out.interior.resize(g.interior_faces().size());
  out.boundary.resize(g.boundary_faces().size());

  for (std::size_t f = 0; f < g.interior_faces().size(); ++f) {
    const auto& face = g.interior_faces()[f];
    const int a = face.owner;
    const int b = face.neighbor;
    auto& r = out.interior[f];
    r.dhead = (psi[a] + g.elevation(a)) - (psi[b] + g.elevation(b));
    if (ctx.weighting == FaceWeighting::arithmetic) {
      r.k = 0.5 * (m.conductivity(theta[a]) + m.conductivity(theta[b]));
      if (derivatives) {
        r.dk_a = 0.5 * m.dconductivity(theta[a]);
        r.dk_b = 0.5 * m.dconductivity(theta[b]);
      }
    } else if (r.dhead >= 0.0) {
      r.k = m.conductivity(theta[a]);
      if (derivatives) r.dk_a = m.dconductivity(theta[a]);
    } else {
      r.k = m.conductivity(theta[b]);
      if (derivatives) r.dk_b = m.dconductivity(theta[b]);
    }
    r.q = face.transmissibility * r.k * r.dhead;
  }

  for (std::size_t f = 0; f < g.boundary_faces().size(); ++f) {
    const auto& bv = ctx.boundary[f];
    if (!bv.dirichlet) continue;
    const auto& face = g.boundary_faces()[f];
    const int a = face.cell;
    auto& r = out.boundary[f];
    r.dhead = (psi[a] + g.elevation(a)) - (bv.psi + bv.elevation);
    r.k = m.conductivity(theta[a]);
    if (derivatives) r.dk_a = m.dconductivity(theta[a]);
    r.q = face.transmissibility * r.k * r.dhead;
  }
  return out;
}

/// Hysteresis value H(theta) replacing Phi((theta - theta_old)/dt) and its theta-slope.
struct HysteresisEval {
  double value;
  double slope;
};

inline HysteresisEval hysteresis_term(const StepContext& ctx, int cell, double theta,
                                      const HysteresisFreeze& freeze) {
  const double delta = ctx.model->delta;
  const double th_old = ctx.old.theta[cell];
  if (freeze.theta_ref == nullptr) {
    const double xi = (theta - th_old) / ctx.dt;
    return {phi_delta(xi, delta), phi_delta_slope(xi, delta) / ctx.dt};
  }
  const double ref = (*freeze.theta_ref)[cell];
  const double xi = (ref - th_old) / ctx.dt;
  const double phi = phi_delta(xi, delta);
  if (freeze.treatment == HysteresisTreatment::lagged) return {phi, 0.0};
  double slope = phi_delta_slope(xi, delta);
  if (freeze.treatment == HysteresisTreatment::stabilized) slope = 1.0 / delta;
  if (freeze.treatment == HysteresisTreatment::secant)
    slope = std::abs(xi) > delta ? phi / xi : 1.0 / delta;
  const double s = slope / ctx.dt;
  return {phi + s * (theta - ref), s};
}

/// Mass-balance and closure residuals of one backward-Euler step.
inline FlowResidual residual_flow(const StepContext& ctx, const Vector& psi, const Vector& theta,
                                  const Vector& conc, const HysteresisFreeze& freeze = {}) {
  const auto& g = *ctx.grid;
  const auto& m = *ctx.model;
  const int n = g.num_cells();
  const double vol = g.cell_volume();
  const double dt = ctx.dt;
  const auto fl = water_fluxes(ctx, psi, theta);

  FlowResidual r{Vector(n), Vector(n)};
  for (int i = 0; i < n; ++i) {
    r.mass[i] = vol * (theta[i] - ctx.old.theta[i]) - dt * vol * ctx.s1[i];
    const double dth = theta[i] - ctx.old.theta[i];
    const auto h = hysteresis_term(ctx, i, theta[i], freeze);
    r.closure[i] = vol * (dt * psi[i] + dt * m.pcap(theta[i], conc[i]) - m.tau(theta[i]) * dth -
                          dt * m.gamma * h.value);
  }
  for (std::size_t f = 0; f < fl.interior.size(); ++f) {
    const auto& face = g.interior_faces()[f];
    r.mass[face.owner] += dt * fl.interior[f].q;
    r.mass[face.neighbor] -= dt * fl.interior[f].q;
  }
  for (std::size_t f = 0; f < fl.boundary.size(); ++f) {
    if (ctx.boundary[f].dirichlet) r.mass[g.boundary_faces()[f].cell] += dt * fl.boundary[f].q;
  }
  return r;
}

/// Closure residual of one cell divided by |cell|, with Phi exact.
/// Nonincreasing in theta on [theta_min, theta_max].
inline double closure_cell(const StepContext& ctx, int i, double theta, double psi, double c) {
  const auto& m = *ctx.model;
  const double dth = theta - ctx.old.theta[i];
  return ctx.dt * (psi + m.pcap(theta, c)) - m.tau(theta) * dth -
         ctx.dt * m.gamma * phi_delta(dth / ctx.dt, m.delta);
}

/// Root of the closure in one cell for fixed psi and c by bracketed bisection
/// from `guess`; the nearer end of the admissible range when there is none.
inline double solve_closure_cell(const StepContext& ctx, int i, double psi, double c,
                                 double guess) {
  const auto& m = *ctx.model;
  auto f = [&](double th) { return closure_cell(ctx, i, th, psi, c); };
  double lo = std::clamp(guess, m.theta_min, m.theta_max);
  double hi = lo;
  double step = 1e-3;
  if (f(lo) > 0.0) {
    while (f(hi) > 0.0) {
      if (hi >= m.theta_max) return m.theta_max;
      lo = hi;
      hi = std::min(hi + step, m.theta_max);
      step *= 2.0;
    }
  } else {
    while (f(lo) < 0.0) {
      if (lo <= m.theta_min) return m.theta_min;
      hi = lo;
      lo = std::max(lo - step, m.theta_min);
      step *= 2.0;
    }
  }
  for (int k = 0; k < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++k) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Branch of Phi holding the rate (theta - theta_old)/dt: -1, 0 (band) or 1.
inline int hysteresis_branch(const StepContext& ctx, int i, double theta) {
  const double xi = (theta - ctx.old.theta[i]) / ctx.dt;
  const double d = ctx.model->delta;
  return xi <= -d ? -1 : (xi >= d ? 1 : 0);
}

/// Cells whose rate switched branch of Phi between `theta_prev` and `theta`
/// get theta reset to the exact closure root. A linearized Phi is exact on
/// each branch only, and an update across the kink can overshoot by orders
/// of magnitude of delta. Returns the number of reset cells.
inline int safeguard_hysteresis_branch(const StepContext& ctx, const Vector& theta_prev,
                                       Eigen::Ref<Vector> theta, const Vector& psi,
                                       const Vector& conc) {
  if (ctx.model->gamma == 0.0) return 0;
  int reset = 0;
  for (int i = 0; i < theta.size(); ++i) {
    if (hysteresis_branch(ctx, i, theta[i]) == hysteresis_branch(ctx, i, theta_prev[i])) continue;
    theta[i] = solve_closure_cell(ctx, i, psi[i], conc[i], theta[i]);
    ++reset;
  }
  return reset;
}

/// Transport residual. `storage_conc` replaces c in the c (theta - theta_old)
/// storage part when given (lagged coupling iterate); otherwise c is used.
inline Vector residual_transport(const StepContext& ctx, const Vector& psi, const Vector& theta,
                                 const Vector& conc, const Vector* storage_conc = nullptr) {
  const auto& g = *ctx.grid;
  const auto& m = *ctx.model;
  const int n = g.num_cells();
  const double vol = g.cell_volume();
  const double dt = ctx.dt;
  const auto fl = water_fluxes(ctx, psi, theta);
  const Vector& cs = storage_conc ? *storage_conc : conc;

  Vector r(n);
  for (int i = 0; i < n; ++i) {
    r[i] = vol * (theta[i] * (conc[i] - ctx.old.conc[i]) + cs[i] * (theta[i] - ctx.old.theta[i])) +
           dt * vol * (m.reaction(conc[i]) - ctx.s2[i]);
  }
  for (std::size_t f = 0; f < fl.interior.size(); ++f) {
    const auto& face = g.interior_faces()[f];
    const int a = face.owner;
    const int b = face.neighbor;
    const double q = fl.interior[f].q;
    const auto [wa, wb] = advective_weights(ctx, q);
    const double flux =
        face.transmissibility * m.diffusion * (conc[a] - conc[b]) + q * (wa * conc[a] + wb * conc[b]);
    r[a] += dt * flux;
    r[b] -= dt * flux;
  }
  for (std::size_t f = 0; f < fl.boundary.size(); ++f) {
    const auto& bv = ctx.boundary[f];
    if (!bv.dirichlet) continue;
    const auto& face = g.boundary_faces()[f];
    const int a = face.cell;
    const double q = fl.boundary[f].q;
    const auto [wa, wb] = advective_weights(ctx, q, true);
    r[a] += dt * (face.transmissibility * m.diffusion * (conc[a] - bv.conc) +
                  q * (wa * conc[a] + wb * bv.conc));
  }
  return r;
}

/// Overloads taking the raw step data instead of a prepared context.
inline FlowResidual residual_flow(const DiscreteState& state_new, const DiscreteState& state_old,
                                  double dt, const StructuredGrid& grid,
                                  const ConstitutiveSet& model, const BoundarySpec& bc,
                                  const SourceSpec& src) {
  const auto ctx = make_step_context(grid, model, bc, src, state_old, dt);
  if (!state_new.finite()) throw std::domain_error("residual_flow: non-finite state");
  return residual_flow(ctx, state_new.psi, state_new.theta, state_new.conc);
}

inline Vector residual_transport(const DiscreteState& state_new, const DiscreteState& state_old,
                                 double dt, const StructuredGrid& grid,
                                 const ConstitutiveSet& model, const BoundarySpec& bc,
                                 const SourceSpec& src) {
  const auto ctx = make_step_context(grid, model, bc, src, state_old, dt);
  if (!state_new.finite()) throw std::domain_error("residual_transport: non-finite state");
  return residual_transport(ctx, state_new.psi, state_new.theta, state_new.conc);
}

namespace detail {

/// Offsets of the unknown blocks inside the assembled matrix; -1 drops a block.
struct Columns {
  int psi = -1;
  int theta = -1;
  int conc = -1;
};

/// d(mass rows)/d psi with the conductivity frozen in `fl`.
inline void darcy_pressure_block(const StepContext& ctx, const WaterFluxes& fl, int row,
                                 int col, std::vector<Triplet>& t) {
  const auto& g = *ctx.grid;
  const double dt = ctx.dt;
  for (std::size_t f = 0; f < fl.interior.size(); ++f) {
    const auto& face = g.interior_faces()[f];
    const double w = dt * face.transmissibility * fl.interior[f].k;
    const int a = face.owner;
    const int b = face.neighbor;
    t.emplace_back(row + a, col + a, w);
    t.emplace_back(row + a, col + b, -w);
    t.emplace_back(row + b, col + b, w);
    t.emplace_back(row + b, col + a, -w);
  }
  for (std::size_t f = 0; f < fl.boundary.size(); ++f) {
    if (!ctx.boundary[f].dirichlet) continue;
    const auto& face = g.boundary_faces()[f];
    t.emplace_back(row + face.cell, col + face.cell,
                   dt * face.transmissibility * fl.boundary[f].k);
  }
}

/// d(mass rows)/d theta through the face conductivities.
inline void darcy_theta_block(const StepContext& ctx, const WaterFluxes& fl, int row, int col,
                              std::vector<Triplet>& t) {
  const auto& g = *ctx.grid;
  const double dt = ctx.dt;
  for (std::size_t f = 0; f < fl.interior.size(); ++f) {
    const auto& face = g.interior_faces()[f];
    const auto& r = fl.interior[f];
    const double wa = dt * face.transmissibility * r.dhead * r.dk_a;
    const double wb = dt * face.transmissibility * r.dhead * r.dk_b;
    const int a = face.owner;
    const int b = face.neighbor;
    t.emplace_back(row + a, col + a, wa);
    t.emplace_back(row + a, col + b, wb);
    t.emplace_back(row + b, col + a, -wa);
    t.emplace_back(row + b, col + b, -wb);
  }
  for (std::size_t f = 0; f < fl.boundary.size(); ++f) {
    if (!ctx.boundary[f].dirichlet) continue;
    const auto& face = g.boundary_faces()[f];
    const auto& r = fl.boundary[f];
    t.emplace_back(row + face.cell, col + face.cell,
                   dt * face.transmissibility * r.dhead * r.dk_a);
  }
}

/// d(transport rows)/d c of the diffusive and advective fluxes.
inline void transport_flux_block(const StepContext& ctx, const WaterFluxes& fl, int row, int col,
                                 std::vector<Triplet>& t) {
  const auto& g = *ctx.grid;
  const double dt = ctx.dt;
  const double d = ctx.model->diffusion;
  for (std::size_t f = 0; f < fl.interior.size(); ++f) {
    const auto& face = g.interior_faces()[f];
    const int a = face.owner;
    const int b = face.neighbor;
    const double w = dt * face.transmissibility * d;
    const double q = dt * fl.interior[f].q;
    const auto [wa, wb] = advective_weights(ctx, q);
    t.emplace_back(row + a, col + a, w + q * wa);
    t.emplace_back(row + a, col + b, -w + q * wb);
    t.emplace_back(row + b, col + b, w - q * wb);
    t.emplace_back(row + b, col + a, -w - q * wa);
  }
  for (std::size_t f = 0; f < fl.boundary.size(); ++f) {
    if (!ctx.boundary[f].dirichlet) continue;
    const auto& face = g.boundary_faces()[f];
    const double q = dt * fl.boundary[f].q;
    const double diag = dt * face.transmissibility * d + q * advective_weights(ctx, q, true).first;
    t.emplace_back(row + face.cell, col + face.cell, diag);
  }
}

/// d(transport rows)/d(psi, theta) of the advective flux q * c_face.
inline void transport_advection_flow_block(const StepContext& ctx, const WaterFluxes& fl,
                                           const Vector& conc, int row, Columns cols,
                                           std::vector<Triplet>& t) {
  const auto& g = *ctx.grid;
  const double dt = ctx.dt;
  for (std::size_t f = 0; f < fl.interior.size(); ++f) {
    const auto& face = g.interior_faces()[f];
    const auto& r = fl.interior[f];
    const int a = face.owner;
    const int b = face.neighbor;
    const auto [wa, wb] = advective_weights(ctx, r.q);
    const double cu = dt * (wa * conc[a] + wb * conc[b]);
    const double tk = face.transmissibility * r.k;
    const double ta = face.transmissibility * r.dhead * r.dk_a;
    const double tb = face.transmissibility * r.dhead * r.dk_b;
    t.emplace_back(row + a, cols.psi + a, cu * tk);
    t.emplace_back(row + a, cols.psi + b, -cu * tk);
    t.emplace_back(row + b, cols.psi + a, -cu * tk);
    t.emplace_back(row + b, cols.psi + b, cu * tk);
    t.emplace_back(row + a, cols.theta + a, cu * ta);
    t.emplace_back(row + a, cols.theta + b, cu * tb);
    t.emplace_back(row + b, cols.theta + a, -cu * ta);
    t.emplace_back(row + b, cols.theta + b, -cu * tb);
  }
  for (std::size_t f = 0; f < fl.boundary.size(); ++f) {
    const auto& bv = ctx.boundary[f];
    if (!bv.dirichlet) continue;
    const auto& face = g.boundary_faces()[f];
    const auto& r = fl.boundary[f];
    const int a = face.cell;
    const auto [wa, wb] = advective_weights(ctx, r.q, true);
    const double cu = dt * (wa * conc[a] + wb * bv.conc);
    t.emplace_back(row + a, cols.psi + a, cu * face.transmissibility * r.k);
    t.emplace_back(row + a, cols.theta + a, cu * face.transmissibility * r.dhead * r.dk_a);
  }
}

/// Flow rows (mass balance then closure) of a Newton or L-scheme linearization.
/// `cols.conc < 0` omits the d pcap / d c coupling.
inline void flow_rows(const StepContext& ctx, const Vector& psi, const Vector& theta,
                      const Vector& conc, const HysteresisFreeze& freeze, Linearization lin,
                      double L1, double L2, const WaterFluxes& fl, int row, Columns cols,
                      std::vector<Triplet>& t) {
  const auto& g = *ctx.grid;
  const auto& m = *ctx.model;
  const int n = g.num_cells();
  const double vol = g.cell_volume();
  const double dt = ctx.dt;

  darcy_pressure_block(ctx, fl, row, cols.psi, t);
  if (lin == Linearization::newton) darcy_theta_block(ctx, fl, row, cols.theta, t);

  for (int i = 0; i < n; ++i) {
    t.emplace_back(row + i, cols.theta + i, vol);
    if (lin == Linearization::lscheme) t.emplace_back(row + i, cols.psi + i, L1 * vol);

    const int cr = row + n + i;
    t.emplace_back(cr, cols.psi + i, vol * dt);
    const auto h = hysteresis_term(ctx, i, theta[i], freeze);
    double dth;
    if (lin == Linearization::newton) {
      dth = dt * m.dpcap_dtheta(theta[i], conc[i]) -
            m.dtau(theta[i]) * (theta[i] - ctx.old.theta[i]) - m.tau(theta[i]);
      if (cols.conc >= 0) t.emplace_back(cr, cols.conc + i, vol * dt * m.dpcap_dc(theta[i], conc[i]));
    } else {
      dth = -(m.tau(theta[i]) + L2);
    }
    dth -= dt * m.gamma * h.slope;
    t.emplace_back(cr, cols.theta + i, vol * dth);
  }
}

inline SparseMatrix from_triplets(int dim, const std::vector<Triplet>& t) {
  SparseMatrix a(dim, dim);
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();
  return a;
}

}  // namespace detail

/// Newton step of the full discrete system in increment form:
/// J(x^j) dx = -F(x^j), hysteresis term treated per `treatment` around x^j.
inline LinearSystem assemble_newton_mono(const StepContext& ctx, const DiscreteState& it,
                                         HysteresisTreatment treatment =
                                             HysteresisTreatment::lagged) {
  const int n = ctx.num_cells();
  const double vol = ctx.grid->cell_volume();
  const double dt = ctx.dt;
  const auto& m = *ctx.model;
  const HysteresisFreeze freeze{&it.theta, treatment};
  const auto fl = water_fluxes(ctx, it.psi, it.theta, true);

  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(40 * n));
  const detail::Columns cols{0, n, 2 * n};
  detail::flow_rows(ctx, it.psi, it.theta, it.conc, freeze, Linearization::newton, 0.0, 0.0, fl, 0,
                    cols, t);

  const int tr = 2 * n;
  detail::transport_flux_block(ctx, fl, tr, cols.conc, t);
  detail::transport_advection_flow_block(ctx, fl, it.conc, tr, cols, t);
  for (int i = 0; i < n; ++i) {
    const double th = it.theta[i];
    const double c = it.conc[i];
    t.emplace_back(tr + i, cols.conc + i,
                   vol * (2.0 * th - ctx.old.theta[i]) + dt * vol * m.dreaction(c));
    t.emplace_back(tr + i, cols.theta + i, vol * (2.0 * c - ctx.old.conc[i]));
  }

  LinearSystem sys;
  sys.matrix = detail::from_triplets(3 * n, t);
  const auto rf = residual_flow(ctx, it.psi, it.theta, it.conc, freeze);
  sys.rhs.resize(3 * n);
  sys.rhs << -rf.mass, -rf.closure, -residual_transport(ctx, it.psi, it.theta, it.conc);
  sys.block_names = {"psi", "theta", "c"};
  sys.block_sizes = {n, n, n};
  return sys;
}

/// Monolithic L-scheme step in increment form; no derivative of pcap, K, tau or R.
inline LinearSystem assemble_ls_mono(const StepContext& ctx, const DiscreteState& it, double L1,
                                     double L2, double L3,
                                     HysteresisTreatment treatment =
                                         HysteresisTreatment::linearized) {
  if (!(L1 > 0.0 && L2 > 0.0 && L3 > 0.0))
    throw std::invalid_argument("assemble_ls_mono: L parameters must be positive");
  const int n = ctx.num_cells();
  const double vol = ctx.grid->cell_volume();
  const HysteresisFreeze freeze{&it.theta, treatment};
  const auto fl = water_fluxes(ctx, it.psi, it.theta);

  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(24 * n));
  const detail::Columns cols{0, n, 2 * n};
  detail::flow_rows(ctx, it.psi, it.theta, it.conc, freeze, Linearization::lscheme, L1, L2, fl, 0,
                    cols, t);

  const int tr = 2 * n;
  detail::transport_flux_block(ctx, fl, tr, cols.conc, t);
  for (int i = 0; i < n; ++i) {
    t.emplace_back(tr + i, cols.conc + i, vol * (it.theta[i] + L3));
    t.emplace_back(tr + i, cols.theta + i, vol * it.conc[i]);
  }

  LinearSystem sys;
  sys.matrix = detail::from_triplets(3 * n, t);
  const auto rf = residual_flow(ctx, it.psi, it.theta, it.conc, freeze);
  sys.rhs.resize(3 * n);
  sys.rhs << -rf.mass, -rf.closure, -residual_transport(ctx, it.psi, it.theta, it.conc);
  sys.block_names = {"psi", "theta", "c"};
  sys.block_sizes = {n, n, n};
  return sys;
}

/// One linearization step of the flow pair (psi, theta) with c frozen, in
/// increment form around (psi_k, theta_k). The hysteresis term is referenced
/// to `theta_hyst`, which is the outer coupling iterate for nonlinear
/// splitting and theta_k itself for alternate splitting.
inline LinearSystem assemble_flow_subsystem(const StepContext& ctx, const Vector& psi_k,
                                            const Vector& theta_k, const Vector& c_frozen,
                                            const Vector& theta_hyst, Linearization lin,
                                            double L1, double L2,
                                            HysteresisTreatment treatment) {
  if (lin == Linearization::lscheme && !(L1 > 0.0 && L2 > 0.0))
    throw std::invalid_argument("assemble_flow_subsystem: L parameters must be positive");
  const int n = ctx.num_cells();
  const HysteresisFreeze freeze{&theta_hyst, treatment};
  const auto fl = water_fluxes(ctx, psi_k, theta_k, lin == Linearization::newton);

  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(20 * n));
  detail::flow_rows(ctx, psi_k, theta_k, c_frozen, freeze, lin, L1, L2, fl, 0,
                    detail::Columns{0, n, -1}, t);

  LinearSystem sys;
  sys.matrix = detail::from_triplets(2 * n, t);
  sys.rhs = -residual_flow(ctx, psi_k, theta_k, c_frozen, freeze).stacked();
  sys.block_names = {"psi", "theta"};
  sys.block_sizes = {n, n};
  return sys;
}

/// Storage treatment of c (theta - theta_old) in a transport sub-step.
enum class TransportStorage {
  implicit,  ///< uses the unknown c, differentiated exactly
  lagged,    ///< uses a given concentration (the coupling iterate)
};

/// One linearization step of the transport equation in c with the flow
/// solution (psi, theta) fixed, in increment form around c_k. Newton
/// differentiates R, the L-scheme replaces R' by L3.
inline LinearSystem assemble_transport_subsystem(const StepContext& ctx, const Vector& psi,
                                                 const Vector& theta, const Vector& c_k,
                                                 TransportStorage storage,
                                                 const Vector& storage_conc, Linearization lin,
                                                 double L3) {
  if (lin == Linearization::lscheme && !(L3 > 0.0))
    throw std::invalid_argument("assemble_transport_subsystem: L3 must be positive");
  const int n = ctx.num_cells();
  const double vol = ctx.grid->cell_volume();
  const double dt = ctx.dt;
  const auto& m = *ctx.model;
  const auto fl = water_fluxes(ctx, psi, theta);

  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(8 * n));
  detail::transport_flux_block(ctx, fl, 0, 0, t);
  for (int i = 0; i < n; ++i) {
    double diag = theta[i];
    if (storage == TransportStorage::implicit) diag += theta[i] - ctx.old.theta[i];
    diag += lin == Linearization::newton ? dt * m.dreaction(c_k[i]) : L3;
    t.emplace_back(i, i, vol * diag);
  }

  LinearSystem sys;
  sys.matrix = detail::from_triplets(n, t);
  sys.rhs = -residual_transport(ctx, psi, theta, c_k,
                                storage == TransportStorage::lagged ? &storage_conc : nullptr);
  sys.block_names = {"c"};
  sys.block_sizes = {n};
  return sys;
}

}  // namespace unsat
