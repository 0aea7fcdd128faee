#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "unsat/mms.hpp"
#include "unsat/solvers.hpp"

namespace unsat {

/// Minimal RFC 4180 writer: fields containing a comma, quote or line break
/// are quoted, embedded quotes doubled, records end in CRLF.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}

  static std::string escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char ch : field) {
      if (ch == '"') out += '"';
      out += ch;
    }
    out += '"';
    return out;
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) os_ << ',';
      os_ << escape(fields[i]);
    }
    os_ << "\r\n";
  }

 private:
  std::ostream& os_;
};

/// Shortest round-trip representation; empty for NaN or a missing value.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
inline std::string format_number(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

struct ExperimentConfig {
  int example = 1;
  std::vector<std::string> schemes{"mono"};
  std::vector<std::string> linearizations{"lscheme"};
  /// Grid and time levels; zipped when both have the same length, a
  /// singleton broadcasts against the other.
  std::vector<int> nx{10};
  std::vector<int> dt_divisors{25};
  /// Empty: the example's default L.
  std::vector<double> L;
  std::vector<int> aa_m{0};
  std::vector<int> aa_m_lin{0};
  double eps = 1e-6;
  int max_iter = 500;
  std::optional<HysteresisTreatment> hysteresis;
  std::optional<bool> branch_safeguard;
  bool aa_per_half_step = false;
  bool track_condition = true;
  ExampleOptions options;
  std::string out = "out";

  void validate() const {
    if (example < 1 || example > 5)
      throw std::invalid_argument("example must be in 1..5, got " + std::to_string(example));
    if (schemes.empty()) throw std::invalid_argument("empty scheme list");
    if (linearizations.empty()) throw std::invalid_argument("empty linearization list");
    if (nx.empty() || dt_divisors.empty()) throw std::invalid_argument("empty grid/time list");
    if (nx.size() != dt_divisors.size() && nx.size() != 1 && dt_divisors.size() != 1)
      throw std::invalid_argument("--nx and --dt-divisor lists must have equal length or one entry");
    if (aa_m.empty() || aa_m_lin.empty()) throw std::invalid_argument("empty AA depth list");
    for (int v : nx)
      if (v < 1) throw std::invalid_argument("nx must be >= 1");
    for (int v : dt_divisors)
      if (v < 1) throw std::invalid_argument("dt divisor must be >= 1");
    for (double v : L)
      if (!(v > 0.0)) throw std::invalid_argument("L must be positive");
    for (const auto& s : expanded_schemes()) parse_coupling(s);
    for (const auto& s : expanded_linearizations()) parse_linearization(s);
  }

  [[nodiscard]] std::vector<std::string> expanded_schemes() const {
    if (schemes.size() == 1 && schemes[0] == "all") return {"mono", "nonlins", "altlins"};
    return schemes;
  }
  [[nodiscard]] std::vector<std::string> expanded_linearizations() const {
    if (linearizations.size() == 1 && linearizations[0] == "all") return {"newton", "lscheme"};
    return linearizations;
  }
  [[nodiscard]] std::vector<std::pair<int, int>> levels() const {
    std::vector<std::pair<int, int>> out;
    const std::size_t n = std::max(nx.size(), dt_divisors.size());
    for (std::size_t i = 0; i < n; ++i)
      out.emplace_back(nx[nx.size() == 1 ? 0 : i], dt_divisors[dt_divisors.size() == 1 ? 0 : i]);
    return out;
  }
  [[nodiscard]] std::vector<double> L_values() const {
    return L.empty() ? std::vector<double>{example_default_L(example)} : L;
  }
};

struct RunRecord {
  int example = 1;
  SchemeConfig scheme;
  int nx = 0;
  int dt_divisor = 0;
  RunReport report;
  std::optional<ErrorReport> errors;
};

inline std::string run_tag(const RunRecord& r) {
  std::ostringstream os;
  os << r.scheme.label() << " nx=" << r.nx << " dt=T/" << r.dt_divisor
     << " L=" << format_number(r.scheme.L1) << " m=" << r.scheme.aa_m
     << " mlin=" << r.scheme.aa_m_lin;
  return os.str();
}

/// Runs one configuration; for manufactured examples the space-time errors
/// are attached when every step converged.
inline RunRecord run_single(int example, const SchemeConfig& cfg, int nx, int dt_divisor,
                            const ExampleOptions& opt = {}) {
  RunRecord rec;
  rec.example = example;
  rec.scheme = cfg;
  rec.nx = nx;
  rec.dt_divisor = dt_divisor;
  const ProblemSpec problem = make_example(example, nx, opt);
  const double dt = problem.final_time / dt_divisor;
  RunOptions ro;
  ro.keep_trajectory = example <= 4;
  rec.report = run_simulation(problem, cfg, dt, ro);
  if (example <= 4 && rec.report.converged) {
    ManufacturedCase mc = manufactured_case(example);
    mc.pcap_uses_conc = opt.pcap_uses_conc;
    rec.errors = error_norms(rec.report.trajectory, mc, problem.grid, dt, dt_divisor);
  }
  rec.report.trajectory.clear();
  return rec;
}

/// Cross product, in lexicographic order, of scheme x linearization x level x
/// L x aa_m x aa_m_lin.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& ec,
                                             std::ostream* log = nullptr) {
  ec.validate();
  std::vector<RunRecord> out;
  for (const auto& s : ec.expanded_schemes())
    for (const auto& l : ec.expanded_linearizations())
      for (const auto& [nx, div] : ec.levels())
        for (double L : ec.L_values())
          for (int m : ec.aa_m)
            for (int mlin : ec.aa_m_lin) {
              SchemeConfig cfg;
              cfg.coupling = parse_coupling(s);
              cfg.linearization = parse_linearization(l);
              cfg.L1 = cfg.L2 = cfg.L3 = L;
              cfg.eps = ec.eps;
              cfg.max_iter_per_step = ec.max_iter;
              cfg.aa_m = m;
              cfg.aa_m_lin = mlin;
              cfg.hysteresis = ec.hysteresis;
              cfg.branch_safeguard = ec.branch_safeguard;
              cfg.aa_per_half_step = ec.aa_per_half_step;
              cfg.track_condition = ec.track_condition;
              out.push_back(run_single(ec.example, cfg, nx, div, ec.options));
              if (log) {
                const auto& r = out.back();
                *log << run_tag(r) << ": " << r.report.total_iterations() << " iterations"
                     << (r.report.converged ? "" : std::string(" (failed: ") +
                                                       to_string(r.report.cause) + ")")
                     << '\n';
              }
            }
  return out;
}

inline const std::vector<std::string>& iterations_header() {
  static const std::vector<std::string> h{
      "example",     "scheme",         "linearization",  "nx",
      "dt_divisor",  "L1",             "L2",             "L3",
      "aa_m",        "aa_m_lin",       "iters_flow",     "iters_transport",
      "iters_total", "avg_cond_full",  "avg_cond_flow",  "avg_cond_transport",
      "converged",   "failure_cause"};
  return h;
}

inline std::vector<std::string> iterations_row(const RunRecord& r) {
  const auto& s = r.scheme;
  const auto& rep = r.report;
  const bool split = s.coupling == Coupling::nonlins;
  return {std::to_string(r.example),
          to_string(s.coupling),
          to_string(s.linearization),
          std::to_string(r.nx),
          std::to_string(r.dt_divisor),
          format_number(s.L1),
          format_number(s.L2),
          format_number(s.L3),
          std::to_string(s.aa_m),
          std::to_string(s.aa_m_lin),
          split ? std::to_string(rep.total_flow_iterations()) : "",
          split ? std::to_string(rep.total_transport_iterations()) : "",
          std::to_string(rep.total_iterations()),
          format_number(rep.cond.full.average()),
          format_number(rep.cond.flow.average()),
          format_number(rep.cond.transport.average()),
          rep.converged ? "true" : "false",
          to_string(rep.cause)};
}

struct EocRow {
  int nx_coarse, nx_fine, div_coarse, div_fine;
  double psi, theta, c;
};

/// EOC between consecutive levels, using the first converged run per level.
inline std::vector<EocRow> eoc_table(const std::vector<RunRecord>& runs) {
  std::map<std::pair<int, int>, ErrorReport> by_level;
  for (const auto& r : runs)
    if (r.errors) by_level.emplace(std::pair{r.nx, r.dt_divisor}, *r.errors);
  std::vector<EocRow> out;
  for (auto it = by_level.begin(); it != by_level.end(); ++it) {
    const auto next = std::next(it);
    if (next == by_level.end()) break;
    const auto& a = it->second;
    const auto& b = next->second;
    auto safe = [](double x, double y) {
      return (x > 0.0 && y > 0.0) ? eoc(x, y) : std::nan("");
    };
    out.push_back({it->first.first, next->first.first, it->first.second, next->first.second,
                   safe(a.e_psi, b.e_psi), safe(a.e_theta, b.e_theta), safe(a.e_c, b.e_c)});
  }
  return out;
}

/// Writes iterations.csv, residuals_final_step.csv and, for manufactured
/// examples, errors.csv and eoc.csv into `dir`.
inline void write_outputs(const std::vector<RunRecord>& runs, int example,
                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("iterations.csv");
    CsvWriter w(f);
    w.row(iterations_header());
    for (const auto& r : runs) w.row(iterations_row(r));
  }
  {
    auto f = open("residuals_final_step.csv");
    CsvWriter w(f);
    w.row({"scheme", "iter", "res_psi", "res_theta", "res_c"});
    for (const auto& r : runs) {
      const auto tag = run_tag(r);
      const auto& h = r.report.final_step_history;
      for (std::size_t j = 0; j < h.size(); ++j)
        w.row({tag, std::to_string(j + 1), format_number(h[j][0]), format_number(h[j][1]),
               format_number(h[j][2])});
    }
  }
  if (example > 4) return;
  {
    auto f = open("errors.csv");
    CsvWriter w(f);
    w.row({"nx", "dt_divisor", "e_psi", "e_theta", "e_c"});
    std::map<std::pair<int, int>, ErrorReport> seen;
    for (const auto& r : runs)
      if (r.errors) seen.emplace(std::pair{r.nx, r.dt_divisor}, *r.errors);
    for (const auto& [lvl, e] : seen)
      w.row({std::to_string(lvl.first), std::to_string(lvl.second), format_number(e.e_psi),
             format_number(e.e_theta), format_number(e.e_c)});
  }
  {
    auto f = open("eoc.csv");
    CsvWriter w(f);
    w.row({"nx_coarse", "nx_fine", "dt_divisor_coarse", "dt_divisor_fine", "eoc_psi",
           "eoc_theta", "eoc_c"});
    for (const auto& e : eoc_table(runs))
      w.row({std::to_string(e.nx_coarse), std::to_string(e.nx_fine),
             std::to_string(e.div_coarse), std::to_string(e.div_fine), format_number(e.psi),
             format_number(e.theta), format_number(e.c)});
  }
}

}  // namespace unsat
