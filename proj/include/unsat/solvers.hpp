#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "unsat/anderson.hpp"
#include "unsat/assembly.hpp"
#include "unsat/linalg.hpp"
#include "unsat/problem.hpp"

namespace unsat {

enum class Coupling { mono, nonlins, altlins };

inline const char* to_string(Coupling c) {
  switch (c) {
    case Coupling::mono: return "mono";
    case Coupling::nonlins: return "nonlins";
    case Coupling::altlins: return "altlins";
  }
  return "?";
}
inline const char* to_string(Linearization l) {
  return l == Linearization::newton ? "newton" : "lscheme";
}
inline const char* to_string(HysteresisTreatment h) {
  switch (h) {
    case HysteresisTreatment::lagged: return "lagged";
    case HysteresisTreatment::linearized: return "linearized";
    case HysteresisTreatment::stabilized: return "stabilized";
    case HysteresisTreatment::secant: return "secant";
  }
  return "?";
}

inline Coupling parse_coupling(std::string_view s) {
  if (s == "mono") return Coupling::mono;
  if (s == "nonlins") return Coupling::nonlins;
  if (s == "altlins") return Coupling::altlins;
  throw std::invalid_argument("unknown scheme '" + std::string(s) + "'");
}
inline Linearization parse_linearization(std::string_view s) {
  if (s == "newton") return Linearization::newton;
  if (s == "lscheme" || s == "ls") return Linearization::lscheme;
  throw std::invalid_argument("unknown linearization '" + std::string(s) + "'");
}
inline HysteresisTreatment parse_hysteresis(std::string_view s) {
  if (s == "lagged") return HysteresisTreatment::lagged;
  if (s == "linearized") return HysteresisTreatment::linearized;
  if (s == "stabilized") return HysteresisTreatment::stabilized;
  if (s == "secant") return HysteresisTreatment::secant;
  throw std::invalid_argument("unknown hysteresis treatment '" + std::string(s) + "'");
}

struct SchemeConfig {
  Coupling coupling = Coupling::mono;
  Linearization linearization = Linearization::newton;
  double L1 = 0.1;
  double L2 = 0.1;
  double L3 = 0.1;
  double eps = 1e-6;
  int max_iter_per_step = 500;
  double divergence_norm_cap = 1e10;
  int aa_m = 0;      ///< depth on the coupling / monolithic loop
  int aa_m_lin = 0;  ///< depth on the inner loops of nonlinear splitting
  /// Unset: lagged for Newton, linearized for the L-scheme.
  std::optional<HysteresisTreatment> hysteresis;
  /// Reset theta to the exact closure root in cells whose rate crossed a kink
  /// of Phi (see safeguard_hysteresis_branch). Unset: on for the L-scheme.
  std::optional<bool> branch_safeguard;
  /// Alternate splitting only: accelerate each half-step instead of the pair.
  bool aa_per_half_step = false;
  bool track_condition = true;
  CondOptions cond;

  void validate() const {
    if (linearization == Linearization::lscheme && !(L1 > 0.0 && L2 > 0.0 && L3 > 0.0))
      throw std::invalid_argument("SchemeConfig: L parameters must be positive");
    if (!(eps > 0.0)) throw std::invalid_argument("SchemeConfig: eps must be positive");
    if (max_iter_per_step < 1) throw std::invalid_argument("SchemeConfig: max_iter must be >= 1");
    if (!(divergence_norm_cap > 0.0))
      throw std::invalid_argument("SchemeConfig: divergence cap must be positive");
    if (aa_m < 0 || aa_m_lin < 0) throw std::invalid_argument("SchemeConfig: AA depth must be >= 0");
  }

  [[nodiscard]] HysteresisTreatment hysteresis_treatment() const {
    if (hysteresis) return *hysteresis;
    return linearization == Linearization::newton ? HysteresisTreatment::lagged
                                                  : HysteresisTreatment::linearized;
  }

  [[nodiscard]] bool uses_branch_safeguard() const {
    return branch_safeguard.value_or(linearization == Linearization::lscheme);
  }

  [[nodiscard]] std::string label() const {
    return std::string(linearization == Linearization::newton ? "Newton" : "LS") + "-" +
           (coupling == Coupling::mono      ? "Mono"
            : coupling == Coupling::nonlins ? "NonLinS"
                                            : "AltLinS");
  }
};

enum class FailureCause { none, max_iterations, divergence, non_finite, singular_matrix };

inline const char* to_string(FailureCause c) {
  switch (c) {
    case FailureCause::none: return "";
    case FailureCause::max_iterations: return "max_iterations";
    case FailureCause::divergence: return "divergence";
    case FailureCause::non_finite: return "non_finite";
    case FailureCause::singular_matrix: return "singular_matrix";
  }
  return "?";
}

/// L-infinity increments of (psi, theta, c) in one iteration.
using Increment = std::array<double, 3>;

struct StepReport {
  int iterations = 0;            ///< coupling (or monolithic) iterations
  int iterations_flow = 0;       ///< inner flow iterations (nonlinear splitting)
  int iterations_transport = 0;  ///< inner transport iterations (nonlinear splitting)
  bool converged = false;
  FailureCause cause = FailureCause::none;
  std::string detail;
  std::vector<Increment> history;
  double max_mass_residual = 0.0;  ///< max_K |mass residual| / |K| at the accepted state
};

struct CondAccumulator {
  CondStats full;
  CondStats flow;
  CondStats transport;
};

struct RunReport {
  std::vector<StepReport> steps;
  CondAccumulator cond;
  bool converged = false;
  FailureCause cause = FailureCause::none;
  std::string detail;
  int failed_step = -1;  ///< 1-based index of the first failing step
  std::vector<Increment> final_step_history;
  std::vector<DiscreteState> trajectory;  ///< states at t_1..t_N (converged steps)
  double wall_seconds = 0.0;

  [[nodiscard]] int total_iterations() const {
    int s = 0;
    for (const auto& st : steps) s += st.iterations;
    return s;
  }
  [[nodiscard]] int total_flow_iterations() const {
    int s = 0;
    for (const auto& st : steps) s += st.iterations_flow;
    return s;
  }
  [[nodiscard]] int total_transport_iterations() const {
    int s = 0;
    for (const auto& st : steps) s += st.iterations_transport;
    return s;
  }
};

inline bool check_stop(const Vector& dpsi, const Vector& dtheta, const Vector& dc, double eps) {
  if (dpsi.size() != dtheta.size() || dtheta.size() != dc.size())
    throw std::invalid_argument("check_stop: increment sizes differ");
  auto inf = [](const Vector& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; };
  return inf(dpsi) <= eps && inf(dtheta) <= eps && inf(dc) <= eps;
}

inline bool check_stop(const Increment& inc, double eps) {
  return inc[0] <= eps && inc[1] <= eps && inc[2] <= eps;
}

namespace detail {

inline double inf_norm(const Vector& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

/// Result of one linear solve inside an iteration.
struct SolveOutcome {
  Vector dx;
  bool ok = false;
};

inline SolveOutcome solve_system(const LinearSystem& sys, const SchemeConfig& cfg,
                                 CondStats* stats) {
  DirectSolver lu;
  SolveOutcome out;
  if (!lu.factorize(sys.matrix)) return out;
  if (cfg.track_condition && stats) stats->add(cond1(sys.matrix, lu, cfg.cond));
  out.dx = lu.solve(sys.rhs);
  out.ok = out.dx.allFinite();
  return out;
}

/// Classifies a new iterate; returns none if it may be accepted.
inline FailureCause classify(const Vector& x, const Vector& inc, double cap) {
  if (!x.allFinite() || !inc.allFinite()) return FailureCause::non_finite;
  if (inf_norm(x) > cap || inf_norm(inc) > cap) return FailureCause::divergence;
  return FailureCause::none;
}

inline Increment block_increments(const Vector& inc, int n, int blocks) {
  Increment r{0.0, 0.0, 0.0};
  for (int b = 0; b < blocks; ++b) r[b] = inf_norm(inc.segment(b * n, n));
  return r;
}

inline Vector stack2(const Vector& a, const Vector& b) {
  Vector x(a.size() + b.size());
  x << a, b;
  return x;
}

inline double max_mass_residual(const StepContext& ctx, const DiscreteState& s) {
  const auto r = residual_flow(ctx, s.psi, s.theta, s.conc);
  return inf_norm(r.mass) / ctx.grid->cell_volume();
}

inline void fail(StepReport& rep, FailureCause cause, std::string detail) {
  rep.converged = false;
  rep.cause = cause;
  rep.detail = std::move(detail);
}

}  // namespace detail

/// Monolithic Newton or L-scheme iterations for one time step, starting from
/// `state` (the previous solution) and overwriting it with the accepted iterate.
inline StepReport step_monolithic(const StepContext& ctx, const SchemeConfig& cfg,
                                  DiscreteState& state, CondAccumulator& cond) {
  const int n = ctx.num_cells();
  const auto treat = cfg.hysteresis_treatment();
  const bool guard = cfg.uses_branch_safeguard();
  StepReport rep;
  AndersonState aa(cfg.aa_m);
  Vector x = state.stacked();
  DiscreteState it = state;

  for (int j = 1; j <= cfg.max_iter_per_step; ++j) {
    it.unstack(x);
    const LinearSystem sys = cfg.linearization == Linearization::newton
                                 ? assemble_newton_mono(ctx, it, treat)
                                 : assemble_ls_mono(ctx, it, cfg.L1, cfg.L2, cfg.L3, treat);
    const auto sol = detail::solve_system(sys, cfg, &cond.full);
    if (!sol.ok) {
      detail::fail(rep, FailureCause::singular_matrix, "monolithic system");
      return rep;
    }
    Vector g = x + sol.dx;
    if (guard && g.allFinite())
      safeguard_hysteresis_branch(ctx, it.theta, g.segment(n, n), g.segment(0, n),
                                  g.segment(2 * n, n));
    const Vector xn = cfg.aa_m > 0 ? aa_step(aa, x, g) : g;
    const Vector inc = xn - x;
    rep.iterations = j;
    const auto cause = detail::classify(xn, inc, cfg.divergence_norm_cap);
    if (cause != FailureCause::none) {
      detail::fail(rep, cause, "monolithic iteration " + std::to_string(j));
      return rep;
    }
    const auto d = detail::block_increments(inc, n, 3);
    rep.history.push_back(d);
    x = xn;
    if (check_stop(d, cfg.eps)) {
      state.unstack(x);
      rep.converged = true;
      return rep;
    }
  }
  detail::fail(rep, FailureCause::max_iterations, "monolithic loop");
  return rep;
}

/// Alternate linearized splitting: one flow linearization followed by one
/// transport linearization per coupling iteration.
inline StepReport step_altlins(const StepContext& ctx, const SchemeConfig& cfg,
                               DiscreteState& state, CondAccumulator& cond) {
  const int n = ctx.num_cells();
  const auto treat = cfg.hysteresis_treatment();
  const auto lin = cfg.linearization;
  const auto storage =
      lin == Linearization::newton ? TransportStorage::implicit : TransportStorage::lagged;
  const bool guard = cfg.uses_branch_safeguard();
  StepReport rep;
  AndersonState aa(cfg.aa_m);
  AndersonState aa_flow(cfg.aa_m);
  AndersonState aa_tr(cfg.aa_m);
  Vector x = state.stacked();

  for (int j = 1; j <= cfg.max_iter_per_step; ++j) {
    const Vector psi = x.segment(0, n);
    const Vector theta = x.segment(n, n);
    const Vector c = x.segment(2 * n, n);

    const auto fsys =
        assemble_flow_subsystem(ctx, psi, theta, c, theta, lin, cfg.L1, cfg.L2, treat);
    const auto fsol = detail::solve_system(fsys, cfg, &cond.flow);
    if (!fsol.ok) {
      detail::fail(rep, FailureCause::singular_matrix, "flow system");
      return rep;
    }
    Vector flow = detail::stack2(psi, theta) + fsol.dx;
    if (guard && flow.allFinite())
      safeguard_hysteresis_branch(ctx, theta, flow.segment(n, n), flow.segment(0, n), c);
    if (cfg.aa_per_half_step && cfg.aa_m > 0)
      flow = aa_step(aa_flow, detail::stack2(psi, theta), flow);
    const Vector psi1 = flow.segment(0, n);
    const Vector theta1 = flow.segment(n, n);
    if (!flow.allFinite()) {
      detail::fail(rep, FailureCause::non_finite, "flow half-step " + std::to_string(j));
      return rep;
    }

    const auto tsys =
        assemble_transport_subsystem(ctx, psi1, theta1, c, storage, c, lin, cfg.L3);
    const auto tsol = detail::solve_system(tsys, cfg, &cond.transport);
    if (!tsol.ok) {
      detail::fail(rep, FailureCause::singular_matrix, "transport system");
      return rep;
    }
    Vector c1 = c + tsol.dx;
    if (cfg.aa_per_half_step && cfg.aa_m > 0) c1 = aa_step(aa_tr, c, c1);

    Vector g(3 * n);
    g << psi1, theta1, c1;
    const Vector xn = (!cfg.aa_per_half_step && cfg.aa_m > 0) ? aa_step(aa, x, g) : g;
    const Vector inc = xn - x;
    rep.iterations = j;
    const auto cause = detail::classify(xn, inc, cfg.divergence_norm_cap);
    if (cause != FailureCause::none) {
      detail::fail(rep, cause, "coupling iteration " + std::to_string(j));
      return rep;
    }
    const auto d = detail::block_increments(inc, n, 3);
    rep.history.push_back(d);
    x = xn;
    if (check_stop(d, cfg.eps)) {
      state.unstack(x);
      rep.converged = true;
      return rep;
    }
  }
  detail::fail(rep, FailureCause::max_iterations, "coupling loop");
  return rep;
}

namespace detail {

struct InnerResult {
  Vector x;
  int iterations = 0;
  FailureCause cause = FailureCause::none;
};

/// Fixed-point loop x <- x + dx(x) with AA(m). Stops when every block
/// increment is below eps, or before solving when the scaled nonlinear
/// residual of the current iterate already is; that check is not counted
/// as an iteration. `blocks` splits x into equally sized blocks.
template <class Assemble, class Residual>
InnerResult inner_loop(Vector x, int blocks, const SchemeConfig& cfg, int depth, CondStats* stats,
                       Assemble&& assemble, Residual&& residual) {
  InnerResult r;
  AndersonState aa(depth);
  const int n = static_cast<int>(x.size()) / blocks;
  for (int k = 1; k <= cfg.max_iter_per_step; ++k) {
    if (residual(x) <= cfg.eps) {
      r.x = x;
      return r;
    }
    const LinearSystem sys = assemble(x);
    const auto sol = solve_system(sys, cfg, stats);
    r.iterations = k;
    if (!sol.ok) {
      r.cause = FailureCause::singular_matrix;
      return r;
    }
    const Vector g = x + sol.dx;
    const Vector xn = depth > 0 ? aa_step(aa, x, g) : g;
    const Vector inc = xn - x;
    r.cause = classify(xn, inc, cfg.divergence_norm_cap);
    if (r.cause != FailureCause::none) return r;
    x = xn;
    const auto d = block_increments(inc, n, blocks);
    bool stop = true;
    for (int b = 0; b < blocks; ++b) stop = stop && d[b] <= cfg.eps;
    if (stop) {
      r.x = x;
      return r;
    }
  }
  r.cause = FailureCause::max_iterations;
  return r;
}

}  // namespace detail

/// Nonlinear splitting: the flow pair is solved to tolerance with c and the
/// hysteresis reference frozen at the coupling iterate, then transport is
/// solved to tolerance with the new flow field, until the coupling iterates settle.
inline StepReport step_nonlins(const StepContext& ctx, const SchemeConfig& cfg,
                               DiscreteState& state, CondAccumulator& cond) {
  const int n = ctx.num_cells();
  const auto treat = cfg.hysteresis_treatment();
  const auto lin = cfg.linearization;
  const double vol = ctx.grid->cell_volume();
  const bool guard = cfg.uses_branch_safeguard();
  StepReport rep;
  AndersonState aa(cfg.aa_m);
  Vector x = state.stacked();

  for (int j = 1; j <= cfg.max_iter_per_step; ++j) {
    const Vector psi = x.segment(0, n);
    const Vector theta = x.segment(n, n);
    const Vector c = x.segment(2 * n, n);
    const HysteresisFreeze freeze{&theta, treat};

    auto flow = detail::inner_loop(
        detail::stack2(psi, theta), 2, cfg, cfg.aa_m_lin, &cond.flow, [&](const Vector& y) {
          return assemble_flow_subsystem(ctx, y.segment(0, n), y.segment(n, n), c, theta, lin,
                                         cfg.L1, cfg.L2, treat);
        },
        [&](const Vector& y) {
          const auto res = residual_flow(ctx, y.segment(0, n), y.segment(n, n), c, freeze);
          return detail::inf_norm(res.stacked()) / vol;
        });
    rep.iterations_flow += flow.iterations;
    if (flow.cause != FailureCause::none) {
      detail::fail(rep, flow.cause, "flow inner loop, coupling iteration " + std::to_string(j));
      rep.iterations = j;
      return rep;
    }
    const Vector psi1 = flow.x.segment(0, n);
    Vector theta1 = flow.x.segment(n, n);
    if (guard) safeguard_hysteresis_branch(ctx, theta, theta1, psi1, c);

    auto tr = detail::inner_loop(
        c, 1, cfg, cfg.aa_m_lin, &cond.transport,
        [&](const Vector& ck) {
          return assemble_transport_subsystem(ctx, psi1, theta1, ck, TransportStorage::lagged, c,
                                              lin, cfg.L3);
        },
        [&](const Vector& ck) {
          return detail::inf_norm(residual_transport(ctx, psi1, theta1, ck, &c)) / vol;
        });
    rep.iterations_transport += tr.iterations;
    if (tr.cause != FailureCause::none) {
      detail::fail(rep, tr.cause, "transport inner loop, coupling iteration " + std::to_string(j));
      rep.iterations = j;
      return rep;
    }

    Vector g(3 * n);
    g << psi1, theta1, tr.x;
    const Vector xn = cfg.aa_m > 0 ? aa_step(aa, x, g) : g;
    const Vector inc = xn - x;
    rep.iterations = j;
    const auto cause = detail::classify(xn, inc, cfg.divergence_norm_cap);
    if (cause != FailureCause::none) {
      detail::fail(rep, cause, "coupling iteration " + std::to_string(j));
      return rep;
    }
    const auto d = detail::block_increments(inc, n, 3);
    rep.history.push_back(d);
    x = xn;
    if (check_stop(d, cfg.eps)) {
      state.unstack(x);
      rep.converged = true;
      return rep;
    }
  }
  detail::fail(rep, FailureCause::max_iterations, "coupling loop");
  return rep;
}

inline StepReport step(const StepContext& ctx, const SchemeConfig& cfg, DiscreteState& state,
                       CondAccumulator& cond) {
  switch (cfg.coupling) {
    case Coupling::mono: return step_monolithic(ctx, cfg, state, cond);
    case Coupling::nonlins: return step_nonlins(ctx, cfg, state, cond);
    case Coupling::altlins: return step_altlins(ctx, cfg, state, cond);
  }
  throw std::invalid_argument("step: unknown coupling");
}

inline int step_count(double final_time, double dt) {
  if (!(final_time > 0.0) || !(dt > 0.0))
    throw std::invalid_argument("run_simulation: T and dt must be positive");
  const double ratio = final_time / dt;
  const long n = std::lround(ratio);
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * std::max(1.0, ratio))
    throw std::invalid_argument("run_simulation: dt must divide T (T/dt = " +
                                std::to_string(ratio) + ")");
  return static_cast<int>(n);
}

struct RunOptions {
  bool keep_trajectory = false;
  int max_steps = -1;  ///< stop after this many steps (-1: all)
};

/// Backward-Euler time loop. The first failing step ends the run; its state
/// is never used by a later step.
inline RunReport run_simulation(const ProblemSpec& problem, const SchemeConfig& cfg, double dt,
                                const RunOptions& opt = {}) {
  cfg.validate();
  problem.model.validate();
  const int steps = step_count(problem.final_time, dt);
  const auto t0 = std::chrono::steady_clock::now();

  RunReport report;
  DiscreteState state = problem.initial_state();
  const int last = opt.max_steps >= 0 ? std::min(steps, opt.max_steps) : steps;
  for (int k = 1; k <= last; ++k) {
    const StepContext ctx = make_step_context(problem, state, dt);
    DiscreteState next = state;
    StepReport rep;
    try {
      rep = step(ctx, cfg, next, report.cond);
    } catch (const std::domain_error& e) {
      detail::fail(rep, FailureCause::non_finite, e.what());
    }
    if (rep.converged) {
      next.time = ctx.time;
      rep.max_mass_residual = detail::max_mass_residual(ctx, next);
    }
    report.final_step_history = rep.history;
    const bool ok = rep.converged;
    report.steps.push_back(std::move(rep));
    if (!ok) {
      report.converged = false;
      report.cause = report.steps.back().cause;
      report.detail = report.steps.back().detail;
      report.failed_step = k;
      break;
    }
    state = std::move(next);
    if (opt.keep_trajectory) report.trajectory.push_back(state);
  }
  if (report.failed_step < 0) report.converged = true;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

struct OrdResult {
  double average = std::nan("");
  int used = 0;
  int excluded = 0;
};

/// Average of ORD_j = log(r_{j+1}/r_j) / log(r_j/r_{j-1}) over admissible j.
/// Entries that are non-positive, non-finite or stalled (equal neighbours)
/// are excluded and counted.
inline OrdResult ord_per_iteration(const std::vector<double>& res) {
  if (res.size() < 3) throw std::invalid_argument("ord_per_iteration: need at least 3 entries");
  OrdResult r;
  double sum = 0.0;
  for (std::size_t j = 1; j + 1 < res.size(); ++j) {
    const double a = res[j - 1];
    const double b = res[j];
    const double c = res[j + 1];
    const bool positive = a > 0.0 && b > 0.0 && c > 0.0 && std::isfinite(a) && std::isfinite(b) &&
                          std::isfinite(c);
    if (!positive || a == b || b == c) {
      ++r.excluded;
      continue;
    }
    sum += std::log(c / b) / std::log(b / a);
    ++r.used;
  }
  if (r.used > 0) r.average = sum / r.used;
  return r;
}

/// One component (0 psi, 1 theta, 2 c) of an increment history.
inline std::vector<double> component(const std::vector<Increment>& h, int which) {
  std::vector<double> out;
  out.reserve(h.size());
  for (const auto& v : h) out.push_back(v[static_cast<std::size_t>(which)]);
  return out;
}

}  // namespace unsat
