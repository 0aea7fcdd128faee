// End-to-end acceptance run: one PASS/FAIL line per criterion, exit code 1 if
// any fails. Simulations are cached so criteria sharing a run pay for it once.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "unsat/unsat.hpp"

using namespace unsat;

namespace {

constexpr double kEps = 1e-6;
constexpr std::array<Coupling, 3> kCouplings{Coupling::mono, Coupling::nonlins, Coupling::altlins};
constexpr std::array<Linearization, 2> kLinearizations{Linearization::newton,
                                                       Linearization::lscheme};

SchemeConfig scheme(Coupling c, Linearization l, double L, int m = 0, int mlin = 0,
                    bool cond = false) {
  SchemeConfig s;
  s.coupling = c;
  s.linearization = l;
  s.L1 = s.L2 = s.L3 = L;
  s.eps = kEps;
  s.aa_m = m;
  s.aa_m_lin = mlin;
  s.track_condition = cond;
  return s;
}

class RunCache {
 public:
  const RunRecord& get(int example, const SchemeConfig& cfg, int nx, int div) {
    std::ostringstream key;
    key << example << ' ' << run_tag(RunRecord{example, cfg, nx, div, {}, {}}) << ' '
        << cfg.track_condition;
    auto it = runs_.find(key.str());
    if (it == runs_.end()) {
      it = runs_.emplace(key.str(), run_single(example, cfg, nx, div)).first;
      const auto& r = it->second;
      std::fprintf(stderr, "  ran example %d %s: %d iterations, %s, %.1f s\n", example,
                   run_tag(r).c_str(), r.report.total_iterations(),
                   r.report.converged ? "converged" : to_string(r.report.cause),
                   r.report.wall_seconds);
    }
    return it->second;
  }

  [[nodiscard]] const std::map<std::string, RunRecord>& all() const { return runs_; }

 private:
  std::map<std::string, RunRecord> runs_;
};

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [" << what << "]";
    }
  }
};

std::string fmt(double v, const char* spec = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

int failures = 0;

void report(int id, const std::string& name, Outcome& o) {
  if (!o.pass) ++failures;
  std::printf("[%s] %-3s %s:%s\n", o.pass ? "PASS" : "FAIL", (std::to_string(id) + ".").c_str(),
              name.c_str(), o.detail.str().c_str());
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------

void eoc_reproduction(RunCache& cache) {
  Outcome o;
  for (int ex = 1; ex <= 4; ++ex) {
    // Newton where it converges, the nonlinear splitting L-scheme under hysteresis.
    const bool hyst = manufactured_case(ex).gamma > 0.0;
    const auto cfg = scheme(hyst ? Coupling::nonlins : Coupling::mono,
                            hyst ? Linearization::lscheme : Linearization::newton,
                            example_default_L(ex));
    std::vector<RunRecord> runs;
    double seconds = 0.0;
    for (auto [nx, div] : {std::pair{10, 25}, {20, 50}, {40, 100}}) {
      runs.push_back(cache.get(ex, cfg, nx, div));
      seconds += runs.back().report.wall_seconds;
      o.require(runs.back().errors.has_value(),
                "ex" + std::to_string(ex) + " nx=" + std::to_string(nx) + " did not converge");
    }
    o.detail << " ex" << ex << " " << cfg.label() << " (" << fmt(seconds, "%.0f") << " s)";
    o.require(seconds < 300.0, "ex" + std::to_string(ex) + " slower than 5 min");
    for (const auto& row : eoc_table(runs)) {
      o.detail << " psi " << fmt(row.psi, "%.2f") << " theta " << fmt(row.theta, "%.2f") << " c "
               << fmt(row.c, "%.2f") << ";";
      auto in = [](double v) { return v >= 0.85 && v <= 1.15; };
      const std::string at = "ex" + std::to_string(ex) + " nx" + std::to_string(row.nx_coarse) +
                             "->" + std::to_string(row.nx_fine);
      o.require(in(row.psi), at + " psi EOC outside [0.85, 1.15]");
      o.require(in(row.theta), at + " theta EOC outside [0.85, 1.15]");
      o.require(row.c >= 1.0, at + " c EOC below 1");
    }
  }
  report(1, "EOC, examples 1-4", o);
}

void iteration_counts(RunCache& cache) {
  Outcome o;
  auto within = [](int n, int ref, int pct) { return std::abs(n - ref) * 100 <= ref * pct; };

  const auto& nm = cache.get(1, scheme(Coupling::mono, Linearization::newton, 0.1, 0, 0, true), 10, 25);
  const int n_nm = nm.report.total_iterations();
  o.detail << " Newton-Mono " << n_nm;
  o.require(nm.report.converged && n_nm >= 45 && n_nm <= 90, "Newton-Mono outside [45, 90]");

  const auto& lm = cache.get(1, scheme(Coupling::mono, Linearization::lscheme, 0.1, 0, 0, true), 10, 25);
  const int n_lm = lm.report.total_iterations();
  o.detail << ", LS-Mono " << n_lm;
  o.require(lm.report.converged && n_lm >= 100 && n_lm <= 175, "LS-Mono outside [100, 175]");

  const auto& ns = cache.get(1, scheme(Coupling::nonlins, Linearization::newton, 0.1), 10, 25);
  const int nf = ns.report.total_flow_iterations();
  const int nt = ns.report.total_transport_iterations();
  o.detail << ", Newton-NonLinS " << nf << "/" << nt;
  o.require(ns.report.converged && within(nf, 56, 30), "NonLinS flow not within 56 +-30%");
  o.require(ns.report.converged && within(nt, 50, 30), "NonLinS transport not within 50 +-30%");

  const auto& al = cache.get(1, scheme(Coupling::altlins, Linearization::lscheme, 0.1), 10, 25);
  const int n_al = al.report.total_iterations();
  o.detail << ", LS-AltLinS " << n_al;
  o.require(al.report.converged && within(n_al, 140, 30), "LS-AltLinS not within 140 +-30%");
  report(2, "Iteration counts, example 1", o);
}

void newton_fails_ls_completes(RunCache& cache) {
  Outcome o;
  for (int ex = 3; ex <= 5; ++ex) {
    int newton_failed = 0, ls_done = 0, total = 0;
    for (int nx : {10, 20, 40})
      for (auto c : kCouplings)
        for (auto l : kLinearizations) {
          const auto& r = cache.get(ex, scheme(c, l, example_default_L(ex)), nx, 25);
          const std::string at = "ex" + std::to_string(ex) + " " + r.scheme.label() +
                                 " nx=" + std::to_string(nx);
          if (l == Linearization::newton) {
            newton_failed += !r.report.converged;
            o.require(!r.report.converged, at + " converged");
          } else {
            ls_done += r.report.converged;
            o.require(r.report.converged, at + " failed: " + to_string(r.report.cause));
          }
          ++total;
        }
    o.detail << " ex" << ex << ": Newton failed " << newton_failed << "/" << total / 2
             << ", LS completed " << ls_done << "/" << total / 2 << ";";
  }
  report(3, "Newton fails, L-scheme completes (examples 3-5)", o);
}

void anderson_speedup(RunCache& cache, int id, int example, int m, double limit) {
  Outcome o;
  const double L = example_default_L(example);
  const auto& plain = cache.get(example, scheme(Coupling::mono, Linearization::lscheme, L), 10, 25);
  const auto& acc = cache.get(example, scheme(Coupling::mono, Linearization::lscheme, L, m), 10, 25);
  const int a = plain.report.total_iterations();
  const int b = acc.report.total_iterations();
  const double ratio = static_cast<double>(b) / a;
  o.detail << " LS-Mono " << a << " -> AA(" << m << ") " << b << ", ratio " << fmt(ratio, "%.3f")
           << " (limit " << limit << ")";
  o.require(plain.report.converged && acc.report.converged, "a run failed");
  o.require(ratio <= limit, "ratio above limit");
  report(id, "Anderson speedup, example " + std::to_string(example), o);
}

void convergence_order(RunCache& cache) {
  Outcome o;
  const std::array<std::pair<Linearization, std::pair<double, double>>, 2> cases{
      {{Linearization::newton, {1.6, 2.5}}, {Linearization::lscheme, {0.8, 1.2}}}};
  for (const auto& [lin, range] : cases) {
    const auto& r = cache.get(1, scheme(Coupling::mono, lin, 0.1, 0, 0, true), 40, 25);
    o.require(r.report.converged, r.scheme.label() + " failed");
    const auto psi = component(r.report.final_step_history, 0);
    if (psi.size() < 3) {
      o.require(false, r.scheme.label() + " has fewer than 3 iterations in the final step");
      continue;
    }
    const auto ord = ord_per_iteration(psi);
    o.detail << " " << r.scheme.label() << " " << fmt(ord.average, "%.2f");
    o.require(ord.average >= range.first && ord.average <= range.second,
              r.scheme.label() + " outside [" + fmt(range.first) + ", " + fmt(range.second) + "]");
  }
  report(5, "Per-iteration order, example 1 final step", o);
}

void anderson_affine_exactness() {
  Outcome o;
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  int cases = 0;
  for (int d = 1; d <= 5; ++d)
    for (int m = d; m <= d + 2; ++m)
      for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd M(d, d);
        Eigen::VectorXd b(d);
        for (int i = 0; i < d; ++i) {
          b[i] = u(rng);
          for (int j = 0; j < d; ++j) M(i, j) = 0.9 * u(rng) / d;
        }
        const Eigen::VectorXd xs =
            (Eigen::MatrixXd::Identity(d, d) - M).fullPivLu().solve(b);
        AndersonState s(m);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
        double err = 1.0;
        for (int k = 0; k < d + 1 && err > 1e-10; ++k) {
          x = aa_step(s, x, M * x + b);
          err = (x - xs).lpNorm<Eigen::Infinity>();
        }
        worst = std::max(worst, err);
        ++cases;
      }
  o.detail << " " << cases << " affine maps, d <= 5, m >= d, worst error " << fmt(worst);
  o.require(worst <= 1e-10, "fixed point not reached within d+1 steps");
  report(6, "Anderson exactness on affine maps", o);
}

Vector stacked_residual(const StepContext& ctx, const Vector& x) {
  const auto n = x.size() / 3;
  const auto rf = residual_flow(ctx, x.segment(0, n), x.segment(n, n), x.segment(2 * n, n));
  Vector r(3 * n);
  r << rf.mass, rf.closure, residual_transport(ctx, x.segment(0, n), x.segment(n, n),
                                               x.segment(2 * n, n));
  return r;
}

void oracle_equivalence() {
  Outcome o;
  const auto p = make_example(1, 2);
  const auto s0 = p.initial_state();
  const auto ctx = make_step_context(p, s0, p.final_time / 25);

  // Damped fixed point x <- x - 0.7 J0^{-1} F(x) with a frozen forward-difference Jacobian.
  Vector x = s0.stacked();
  const auto n = x.size();
  const Vector f0 = stacked_residual(ctx, x);
  Eigen::MatrixXd J(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Vector xp = x;
    xp[j] += 1e-7;
    J.col(j) = (stacked_residual(ctx, xp) - f0) / 1e-7;
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
  bool settled = false;
  for (int k = 0; k < 100000 && !settled; ++k) {
    const Vector dx = 0.7 * lu.solve(stacked_residual(ctx, x));
    x -= dx;
    settled = dx.lpNorm<Eigen::Infinity>() < 1e-12;
  }
  o.require(settled, "oracle did not settle");

  std::vector<Vector> sol;
  double to_oracle = 0.0;
  for (auto c : kCouplings)
    for (auto l : kLinearizations) {
      auto cfg = scheme(c, l, 0.1);
      cfg.eps = 1e-12;
      DiscreteState st = s0;
      CondAccumulator cond;
      const auto rep = step(ctx, cfg, st, cond);
      o.require(rep.converged, cfg.label() + " did not converge");
      sol.push_back(st.stacked());
      to_oracle = std::max(to_oracle, (sol.back() - x).lpNorm<Eigen::Infinity>());
    }
  double pairwise = 0.0;
  for (std::size_t a = 0; a < sol.size(); ++a)
    for (std::size_t b = a + 1; b < sol.size(); ++b)
      pairwise = std::max(pairwise, (sol[a] - sol[b]).lpNorm<Eigen::Infinity>());
  o.detail << " max pairwise " << fmt(pairwise) << ", max to oracle " << fmt(to_oracle);
  o.require(pairwise <= 1e-8, "schemes disagree");
  o.require(to_oracle <= 1e-8, "schemes differ from oracle");
  report(7, "Schemes agree with a fixed-point oracle", o);
}

double directional_mismatch(const SparseMatrix& J, const std::function<Vector(const Vector&)>& F,
                            const Vector& x, std::mt19937& rng) {
  std::normal_distribution<double> g;
  Vector v(x.size());
  for (auto& e : v) e = g(rng);
  const double h = 1e-6;
  const Vector fd = (F(x + h * v) - F(x - h * v)) / (2.0 * h);
  const Vector jv = J * v;
  return (jv - fd).lpNorm<Eigen::Infinity>() / std::max(jv.lpNorm<Eigen::Infinity>(), 1e-12);
}

void jacobian_check() {
  Outcome o;
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> up(-1.0, 1.0), uth(0.2, 0.9), uc(0.1, 1.0);
  auto random_state = [&](int n, double t) {
    DiscreteState s(n, t);
    for (int i = 0; i < n; ++i) {
      s.psi[i] = up(rng);
      s.theta[i] = uth(rng);
      s.conc[i] = uc(rng);
    }
    return s;
  };
  double worst = 0.0;
  for (int ex : {1, 2}) {
    const auto p = make_example(ex, 3);
    const int n = p.grid.num_cells();
    for (int k = 0; k < 20; ++k) {
      const auto old = random_state(n, 0.6);
      const auto it = random_state(n, 0.72);
      const auto ctx = make_step_context(p, old, 0.12);
      const Vector x = it.stacked();

      const auto mono = assemble_newton_mono(ctx, it);
      worst = std::max(worst, directional_mismatch(
                                  mono.matrix, [&](const Vector& y) { return stacked_residual(ctx, y); },
                                  x, rng));

      const auto flow = assemble_flow_subsystem(ctx, it.psi, it.theta, it.conc, it.theta,
                                                Linearization::newton, 0.0, 0.0,
                                                HysteresisTreatment::lagged);
      worst = std::max(worst, directional_mismatch(
                                  flow.matrix,
                                  [&](const Vector& y) {
                                    return residual_flow(ctx, y.segment(0, n), y.segment(n, n),
                                                         it.conc)
                                        .stacked();
                                  },
                                  x.segment(0, 2 * n), rng));

      const auto tr = assemble_transport_subsystem(ctx, it.psi, it.theta, it.conc,
                                                   TransportStorage::implicit, it.conc,
                                                   Linearization::newton, 0.0);
      worst = std::max(worst, directional_mismatch(
                                  tr.matrix,
                                  [&](const Vector& c) {
                                    return residual_transport(ctx, it.psi, it.theta, c);
                                  },
                                  it.conc, rng));
    }
  }
  o.detail << " 20 random states x examples 1-2, monolithic/flow/transport, worst rel "
           << fmt(worst);
  o.require(worst <= 1e-5, "mismatch above 1e-5");
  report(8, "Newton matrices match finite differences", o);
}

void conservation(const RunCache& cache) {
  Outcome o;
  double worst = 0.0;
  long steps = 0;
  int runs = 0, over = 0;
  std::string worst_run;
  for (const auto& [key, r] : cache.all()) {
    double run_worst = 0.0;
    for (const auto& s : r.report.steps) {
      if (!s.converged) continue;
      ++steps;
      run_worst = std::max(run_worst, s.max_mass_residual / (10.0 * r.scheme.eps));
    }
    ++runs;
    if (run_worst > 1.0) ++over;
    if (run_worst > worst) {
      worst = run_worst;
      worst_run = "example " + std::to_string(r.example) + " " + run_tag(r);
    }
  }
  o.detail << " " << steps << " converged steps in " << runs << " runs, worst |r_K| / (10 eps |K|) = "
           << fmt(worst) << " (" << worst_run << "), " << over << " runs above 1";
  o.require(steps > 0, "no converged steps");
  o.require(worst <= 1.0, "mass residual above 10 eps |K|");
  report(9, "Per-cell mass balance", o);
}

void condition_trend(RunCache& cache) {
  Outcome o;
  struct Ref {
    int nx, div;
    double newton, ls;
  };
  // Reference magnitudes for example 1, L = 0.1.
  const std::array<Ref, 5> refs{{{10, 25, 4.91e2, 4.15e2},
                                 {20, 25, 2.22e3, 1.82e3},
                                 {40, 25, 1.11e4, 8.52e3},
                                 {10, 50, 2.75e2, 2.39e2},
                                 {10, 100, 1.97e2, 1.64e2}}};
  for (const auto& ref : refs) {
    const auto& nw = cache.get(1, scheme(Coupling::mono, Linearization::newton, 0.1, 0, 0, true),
                               ref.nx, ref.div);
    const auto& ls = cache.get(1, scheme(Coupling::mono, Linearization::lscheme, 0.1, 0, 0, true),
                               ref.nx, ref.div);
    const double cn = nw.report.cond.full.average().value_or(std::nan(""));
    const double cl = ls.report.cond.full.average().value_or(std::nan(""));
    const std::string at = "nx=" + std::to_string(ref.nx) + " T/" + std::to_string(ref.div);
    o.detail << " " << at << " " << fmt(cl) << " < " << fmt(cn) << ";";
    o.require(cl < cn, at + " LS not below Newton");
    auto near = [](double v, double r) { return v >= r / 3.0 && v <= 3.0 * r; };
    o.require(near(cn, ref.newton), at + " Newton " + fmt(cn) + " vs " + fmt(ref.newton));
    o.require(near(cl, ref.ls), at + " LS " + fmt(cl) + " vs " + fmt(ref.ls));
  }
  report(10, "Condition numbers, example 1", o);
}

}  // namespace

int main() {
  RunCache cache;
  anderson_affine_exactness();
  oracle_equivalence();
  jacobian_check();
  iteration_counts(cache);
  convergence_order(cache);
  condition_trend(cache);
  anderson_speedup(cache, 4, 3, 2, 0.65);
  eoc_reproduction(cache);
  newton_fails_ls_completes(cache);
  anderson_speedup(cache, 11, 5, 1, 0.7);
  conservation(cache);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
