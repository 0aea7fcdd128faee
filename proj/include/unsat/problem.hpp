#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "unsat/constitutive.hpp"
#include "unsat/grid.hpp"

namespace unsat {

using Vector = Eigen::VectorXd;

/// Cell values of (psi, theta, c) at one time level or one iterate.
struct DiscreteState {
  Vector psi;
  Vector theta;
  Vector conc;
  double time = 0.0;

  DiscreteState() = default;
  explicit DiscreteState(int n, double t = 0.0)
      : psi(Vector::Zero(n)), theta(Vector::Zero(n)), conc(Vector::Zero(n)), time(t) {}

  [[nodiscard]] int size() const { return static_cast<int>(psi.size()); }

  [[nodiscard]] bool consistent() const {
    return psi.size() == theta.size() && theta.size() == conc.size();
  }
  [[nodiscard]] bool finite() const {
    return psi.allFinite() && theta.allFinite() && conc.allFinite();
  }

  /// Stacked [psi | theta | c].
  [[nodiscard]] Vector stacked() const {
    Vector x(3 * psi.size());
    x << psi, theta, conc;
    return x;
  }
  void unstack(const Vector& x) {
    const Eigen::Index n = x.size() / 3;
    psi = x.segment(0, n);
    theta = x.segment(n, n);
    conc = x.segment(2 * n, n);
  }
};

using SpaceTimeFn = std::function<double(double x, double y, double t)>;

enum class BoundaryKind { dirichlet, neumann_zero };

struct SideCondition {
  BoundaryKind kind = BoundaryKind::neumann_zero;
  SpaceTimeFn psi;   ///< Dirichlet pressure head
  SpaceTimeFn conc;  ///< Dirichlet concentration
};

struct BoundarySpec {
  std::array<SideCondition, 4> sides{};  // indexed by Side

  SideCondition& operator[](Side s) { return sides[static_cast<int>(s)]; }
  const SideCondition& operator[](Side s) const { return sides[static_cast<int>(s)]; }

  void validate() const {
    for (int s = 0; s < 4; ++s) {
      const auto& side = sides[s];
      if (side.kind == BoundaryKind::dirichlet && (!side.psi || !side.conc)) {
        throw std::invalid_argument(std::string("BoundarySpec: Dirichlet side '") +
                                    to_string(static_cast<Side>(s)) +
                                    "' needs both psi and c data");
      }
    }
  }
};

/// Cell means of (S1, S2) over [x0, x1] x [y0, y1] at time t.
using CellSourceFn =
    std::function<std::pair<double, double>(double x0, double x1, double y0, double y1, double t)>;

/// External source densities; an empty function means zero. When
/// `cell_mean` is set it replaces point sampling at cell centers.
struct SourceSpec {
  SpaceTimeFn s1;
  SpaceTimeFn s2;
  CellSourceFn cell_mean;
};

struct InitialCondition {
  std::function<double(double, double)> psi;
  std::function<double(double, double)> theta;
  std::function<double(double, double)> conc;
};

/// Face average of the conductivity in the water flux.
enum class FaceWeighting { arithmetic, upstream };

/// Face concentration in the advective flux q * c_face.
enum class Advection { upwind, central };

struct ProblemSpec {
  std::string name;
  StructuredGrid grid{1, 1};
  ConstitutiveSet model;
  BoundarySpec bc;
  SourceSpec src;
  InitialCondition initial;
  double final_time = 1.0;
  FaceWeighting weighting = FaceWeighting::arithmetic;
  Advection advection = Advection::upwind;

  [[nodiscard]] DiscreteState initial_state() const {
    if (!initial.psi || !initial.theta || !initial.conc)
      throw std::invalid_argument("ProblemSpec: incomplete initial condition");
    DiscreteState s(grid.num_cells(), 0.0);
    for (int k = 0; k < grid.num_cells(); ++k) {
      const auto& p = grid.center(k);
      s.psi[k] = initial.psi(p[0], p[1]);
      s.theta[k] = initial.theta(p[0], p[1]);
      s.conc[k] = initial.conc(p[0], p[1]);
    }
    return s;
  }
};

/// Boundary data of one face at the new time level.
struct BoundaryValue {
  bool dirichlet = false;
  double psi = 0.0;
  double conc = 0.0;
  double elevation = 0.0;
};

/// Everything the discrete equations of one backward-Euler step depend on
/// besides the unknowns: old state, step size, sources and boundary data
/// sampled at the new time level.
struct StepContext {
  const StructuredGrid* grid = nullptr;
  const ConstitutiveSet* model = nullptr;
  FaceWeighting weighting = FaceWeighting::arithmetic;
  Advection advection = Advection::upwind;
  double dt = 0.0;
  double time = 0.0;
  DiscreteState old;
  Vector s1;
  Vector s2;
  std::vector<BoundaryValue> boundary;  // parallel to grid->boundary_faces()

  [[nodiscard]] int num_cells() const { return grid->num_cells(); }
};

inline StepContext make_step_context(const StructuredGrid& grid, const ConstitutiveSet& model,
                                     const BoundarySpec& bc, const SourceSpec& src,
                                     const DiscreteState& old, double dt,
                                     FaceWeighting weighting = FaceWeighting::arithmetic) {
  if (!(dt > 0.0)) throw std::invalid_argument("make_step_context: dt must be positive");
  if (!old.consistent() || old.size() != grid.num_cells())
    throw std::invalid_argument("make_step_context: state does not match grid");
  bc.validate();

  StepContext ctx;
  ctx.grid = &grid;
  ctx.model = &model;
  ctx.weighting = weighting;
  ctx.dt = dt;
  ctx.time = old.time + dt;
  ctx.old = old;

  const int n = grid.num_cells();
  ctx.s1 = Vector::Zero(n);
  ctx.s2 = Vector::Zero(n);
  for (int k = 0; k < n; ++k) {
    const auto& p = grid.center(k);
    if (src.cell_mean) {
      const double hx = 0.5 * grid.hx();
      const double hy = 0.5 * grid.hy();
      const auto [a, b] = src.cell_mean(p[0] - hx, p[0] + hx, p[1] - hy, p[1] + hy, ctx.time);
      ctx.s1[k] = a;
      ctx.s2[k] = b;
      continue;
    }
    if (src.s1) ctx.s1[k] = src.s1(p[0], p[1], ctx.time);
    if (src.s2) ctx.s2[k] = src.s2(p[0], p[1], ctx.time);
  }

  const auto& faces = grid.boundary_faces();
  ctx.boundary.resize(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& face = faces[f];
    const auto& side = bc[face.side];
    auto& b = ctx.boundary[f];
    b.elevation = face.midpoint[1];
    if (side.kind == BoundaryKind::dirichlet) {
      b.dirichlet = true;
      b.psi = side.psi(face.midpoint[0], face.midpoint[1], ctx.time);
      b.conc = side.conc(face.midpoint[0], face.midpoint[1], ctx.time);
    }
  }
  return ctx;
}

/// Step context of `problem` with its face options.
inline StepContext make_step_context(const ProblemSpec& problem, const DiscreteState& old,
                                     double dt) {
  StepContext ctx = make_step_context(problem.grid, problem.model, problem.bc, problem.src, old,
                                      dt, problem.weighting);
  ctx.advection = problem.advection;
  return ctx;
}

}  // namespace unsat
