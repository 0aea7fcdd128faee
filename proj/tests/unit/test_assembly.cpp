#include <gtest/gtest.h>

#include <random>

#include "unsat/assembly.hpp"
#include "unsat/linalg.hpp"
#include "unsat/mms.hpp"
#include "test_support.hpp"

using namespace unsat;
using unsat::support::full_residual;
using unsat::support::random_state;

namespace {

// Largest relative mismatch between J v and a central difference of F along v.
double jacobian_mismatch(const StepContext& ctx, const DiscreteState& it, const SparseMatrix& J,
                         std::mt19937& rng) {
  std::normal_distribution<double> g;
  Vector v(J.cols());
  for (auto& e : v) e = g(rng);
  const double h = 1e-6;
  const Vector x = it.stacked();
  const Vector fd = (full_residual(ctx, x + h * v) - full_residual(ctx, x - h * v)) / (2 * h);
  const Vector jv = J * v;
  return (jv - fd).lpNorm<Eigen::Infinity>() / std::max(jv.lpNorm<Eigen::Infinity>(), 1e-12);
}

struct Fixture {
  ProblemSpec p;
  DiscreteState old;
  explicit Fixture(int example, int nx = 3, std::uint32_t seed = 1) : p(make_example(example, nx)) {
    std::mt19937 rng(seed);
    old = random_state(p.grid.num_cells(), rng, 0.6);
  }
  [[nodiscard]] StepContext ctx(double dt = 0.12) const {
    return make_step_context(p, old, dt);
  }
};

}  // namespace

TEST(Jacobian, NewtonMatchesFiniteDifferences) {
  for (int ex : {1, 2})
    for (auto adv : {Advection::central, Advection::upwind}) {
      Fixture f(ex);
      f.p.advection = adv;
      const auto ctx = f.ctx();
      std::mt19937 rng(100 + ex);
      for (int k = 0; k < 20; ++k) {
        const auto it = random_state(ctx.num_cells(), rng);
        const auto sys = assemble_newton_mono(ctx, it);
        EXPECT_LT(jacobian_mismatch(ctx, it, sys.matrix, rng), 1e-5) << "example " << ex;
      }
    }
}

// With the exact hysteresis slope the Newton matrix is the full Jacobian away
// from the kinks of Phi.
TEST(Jacobian, LinearizedHysteresisIsExact) {
  Fixture f(4);
  const auto ctx = f.ctx();
  std::mt19937 rng(9);
  int checked = 0;
  while (checked < 20) {
    auto it = random_state(ctx.num_cells(), rng);
    bool near_kink = false;
    for (int i = 0; i < ctx.num_cells(); ++i) {
      const double xi = std::abs(it.theta[i] - ctx.old.theta[i]) / ctx.dt;
      near_kink = near_kink || std::abs(xi - ctx.model->delta) < 1e-3;
    }
    if (near_kink) continue;
    const auto sys = assemble_newton_mono(ctx, it, HysteresisTreatment::linearized);
    EXPECT_LT(jacobian_mismatch(ctx, it, sys.matrix, rng), 1e-5);
    ++checked;
  }
}

TEST(Jacobian, RhsIsMinusResidual) {
  Fixture f(1);
  const auto ctx = f.ctx();
  std::mt19937 rng(4);
  const auto it = random_state(ctx.num_cells(), rng);
  const auto sys = assemble_newton_mono(ctx, it);
  EXPECT_LT((sys.rhs + full_residual(ctx, it.stacked())).lpNorm<Eigen::Infinity>(), 1e-14);
  const auto ls = assemble_ls_mono(ctx, it, 0.1, 0.1, 0.1);
  EXPECT_LT((ls.rhs + full_residual(ctx, it.stacked())).lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(LScheme, UsesNoModelDerivatives) {
  Fixture f(4);
  auto model = f.p.model;
  auto boom = [](auto...) -> double { throw std::logic_error("derivative evaluated"); };
  model.dpcap_dtheta = boom;
  model.dpcap_dc = boom;
  model.dconductivity = boom;
  model.dtau = boom;
  model.dreaction = boom;
  const auto ctx = make_step_context(f.p.grid, model, f.p.bc, f.p.src, f.old, 0.12);
  std::mt19937 rng(5);
  const auto it = random_state(ctx.num_cells(), rng);
  EXPECT_NO_THROW((void)assemble_ls_mono(ctx, it, 1.0, 1.0, 1.0));
  const int n = ctx.num_cells();
  EXPECT_NO_THROW((void)assemble_flow_subsystem(ctx, it.psi, it.theta, it.conc, it.theta,
                                                Linearization::lscheme, 1.0, 1.0,
                                                HysteresisTreatment::linearized));
  EXPECT_NO_THROW((void)assemble_transport_subsystem(ctx, it.psi, it.theta, it.conc,
                                                     TransportStorage::lagged, it.conc,
                                                     Linearization::lscheme, 1.0));
  EXPECT_THROW((void)assemble_newton_mono(ctx, it), std::logic_error);
  EXPECT_EQ(n, 9);
}

TEST(LScheme, StabilizationOnDiagonal) {
  Fixture f(1);
  const auto ctx = f.ctx();
  std::mt19937 rng(6);
  const auto it = random_state(ctx.num_cells(), rng);
  const auto a = assemble_ls_mono(ctx, it, 0.1, 0.2, 0.3).matrix;
  const auto b = assemble_ls_mono(ctx, it, 1.1, 1.2, 1.3).matrix;
  const SparseMatrix d = b - a;
  const double vol = ctx.grid->cell_volume();
  const int n = ctx.num_cells();
  for (int k = 0; k < d.outerSize(); ++k)
    for (SparseMatrix::InnerIterator e(d, k); e; ++e) {
      if (e.value() == 0.0) continue;
      ASSERT_EQ(e.row(), e.col());
      const int blk = static_cast<int>(e.row()) / n;
      const double expected = blk == 0 ? vol : (blk == 1 ? -vol : vol);
      EXPECT_NEAR(e.value(), expected, 1e-14);
    }
}

TEST(LScheme, LargerLShrinksFirstIncrement) {
  const auto p = make_example(1, 4);
  const auto s0 = p.initial_state();
  const auto ctx = make_step_context(p.grid, p.model, p.bc, p.src, s0, 0.12);
  double prev = 1e300;
  for (double L : {0.1, 1.0, 10.0}) {
    const auto sys = assemble_ls_mono(ctx, s0, L, L, L);
    const double inc = solve_direct(sys.matrix, sys.rhs).lpNorm<Eigen::Infinity>();
    EXPECT_LT(inc, prev);
    prev = inc;
  }
  EXPECT_THROW((void)assemble_ls_mono(ctx, s0, 0.0, 1.0, 1.0), std::invalid_argument);
}

TEST(Residual, SingleCellNoFlux) {
  ProblemSpec p;
  p.grid = build_grid(1, 1);
  p.model = polynomial_model(TauKind::one, 0.0, 5e-3);
  DiscreteState old(1), now(1);
  old.theta[0] = 0.3;
  now.theta[0] = 0.45;
  now.psi[0] = 0.7;
  const auto r = residual_flow(now, old, 0.5, p.grid, p.model, p.bc, p.src);
  EXPECT_NEAR(r.mass[0], 0.15, 1e-15);
  // dt psi + dt pcap - tau (theta - theta_old)
  EXPECT_NEAR(r.closure[0], 0.5 * 0.7 + 0.5 * (1.0 - 0.45 * 0.45) - 0.15, 1e-15);
}

TEST(Residual, TransportNoFlowNoReaction) {
  ProblemSpec p;
  p.grid = build_grid(2, 2);
  p.model = polynomial_model(TauKind::one, 0.0, 5e-3);
  p.model.reaction = [](double) { return 0.0; };
  DiscreteState old(4), now(4);
  old.theta.setConstant(0.6);
  now.theta.setConstant(0.6);
  old.conc << 0.1, 0.2, 0.3, 0.4;
  now.conc << 0.2, 0.2, 0.5, 0.1;
  // Hydrostatic: psi + y constant, so no water flux; c varies, so diffusion acts.
  for (int k = 0; k < 4; ++k) now.psi[k] = -p.grid.elevation(k);
  const auto r = residual_transport(now, old, 0.5, p.grid, p.model, p.bc, p.src);
  EXPECT_NEAR(r.sum(), 0.6 * (now.conc - old.conc).sum() * 0.25, 1e-14);
  old.conc.setConstant(0.3);
  now.conc.setConstant(0.35);
  const auto r2 = residual_transport(now, old, 0.5, p.grid, p.model, p.bc, p.src);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(r2[k], 0.6 * 0.05 * 0.25, 1e-15);
}

// Interior fluxes cancel, so the summed mass residual only sees boundaries.
TEST(Residual, InteriorFluxesConserve) {
  ProblemSpec p;
  p.grid = build_grid(4, 3);
  p.model = polynomial_model(TauKind::one, 0.0, 5e-3);
  std::mt19937 rng(8);
  const auto old = random_state(12, rng);
  const auto now = random_state(12, rng);
  const auto r = residual_flow(now, old, 0.2, p.grid, p.model, p.bc, p.src);
  EXPECT_NEAR(r.mass.sum(), (now.theta - old.theta).sum() / 12.0, 1e-13);
}

TEST(Residual, UpstreamWeightingUsesUpwindCell) {
  const auto g = build_grid(2, 1);
  auto model = polynomial_model(TauKind::one, 0.0, 5e-3);
  BoundarySpec bc;
  SourceSpec src;
  DiscreteState old(2);
  auto ctx = make_step_context(g, model, bc, src, old, 1.0, FaceWeighting::upstream);
  Vector psi(2), theta(2);
  psi << 1.0, 0.0;
  theta << 0.5, 0.9;
  const auto fl = water_fluxes(ctx, psi, theta);
  EXPECT_DOUBLE_EQ(fl.interior[0].k, k_poly(0.5));
  ctx.weighting = FaceWeighting::arithmetic;
  EXPECT_DOUBLE_EQ(water_fluxes(ctx, psi, theta).interior[0].k, 0.5 * (k_poly(0.5) + k_poly(0.9)));
}

TEST(Residual, AdvectiveFaceValue) {
  const auto g = build_grid(2, 1);
  auto model = polynomial_model(TauKind::one, 0.0, 5e-3);
  model.reaction = [](double) { return 0.0; };
  BoundarySpec bc;
  SourceSpec src;
  DiscreteState old(2);
  old.theta.setConstant(0.5);
  old.conc << 2.0, 2.0;  // uniform, so diffusion drops out
  auto ctx = make_step_context(g, model, bc, src, old, 1.0);
  Vector psi(2);
  psi << 1.0, 0.0;
  const double q = water_fluxes(ctx, psi, old.theta).interior[0].q;
  ASSERT_GT(q, 0.0);
  ctx.advection = Advection::upwind;
  EXPECT_NEAR(residual_transport(ctx, psi, old.theta, old.conc)[0], q * 2.0, 1e-14);
  Vector c(2);
  c << 2.0, 4.0;
  const double diff = g.interior_faces()[0].transmissibility * model.diffusion * (2.0 - 4.0);
  EXPECT_NEAR(residual_transport(ctx, psi, old.theta, c)[0], diff + q * 2.0, 1e-12);
  ctx.advection = Advection::central;
  EXPECT_NEAR(residual_transport(ctx, psi, old.theta, c)[0], diff + q * 3.0, 1e-12);
}

TEST(Closure, RootSolvesCellEquation) {
  Fixture f(3);
  const auto ctx = f.ctx(0.12);
  std::mt19937 rng(12);
  std::uniform_real_distribution<double> p(-1.5, 0.5);
  for (int k = 0; k < 50; ++k) {
    const int i = k % ctx.num_cells();
    const double psi = p(rng);
    const double th = solve_closure_cell(ctx, i, psi, 0.3, 0.5);
    if (th > ctx.model->theta_min && th < ctx.model->theta_max)
      EXPECT_NEAR(closure_cell(ctx, i, th, psi, 0.3), 0.0, 1e-12);
  }
}

TEST(Closure, SafeguardResetsOnlyBranchSwitches) {
  Fixture f(3);
  const auto ctx = f.ctx(0.12);
  const int n = ctx.num_cells();
  const double dt = ctx.dt;
  Vector prev = ctx.old.theta.array() + 0.5 * dt;  // above the band everywhere
  Vector theta = prev;
  theta[2] = ctx.old.theta[2] - 0.5 * dt;  // cell 2 jumps below the band
  theta[4] = prev[4] + 0.1 * dt;           // cell 4 moves within its branch
  const Vector psi = Vector::Constant(n, -0.2);
  const Vector c = Vector::Constant(n, 0.3);
  const Vector before = theta;
  EXPECT_EQ(safeguard_hysteresis_branch(ctx, prev, theta, psi, c), 1);
  for (int i = 0; i < n; ++i)
    if (i != 2) EXPECT_EQ(theta[i], before[i]);
  EXPECT_NEAR(closure_cell(ctx, 2, theta[2], psi[2], c[2]), 0.0, 1e-12);

  Fixture g(1);
  const auto ctx1 = g.ctx(0.12);
  Vector t1 = before;
  EXPECT_EQ(safeguard_hysteresis_branch(ctx1, prev, t1, psi, c), 0);
}
