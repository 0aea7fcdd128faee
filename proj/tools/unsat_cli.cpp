#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "unsat/unsat.hpp"

namespace {

// Enumerated flags kept as strings until validation by CLI11.
struct TextOptions {
  std::string hysteresis;
  std::string safeguard;
  std::string weighting;
  std::string advection;
  std::string sources;
  std::string vg_form;
};

void add_common(CLI::App& app, unsat::ExperimentConfig& ec, TextOptions& t, bool schemes) {
  app.add_option("--example", ec.example, "Example id (1-5)")->check(CLI::Range(1, 5));
  if (schemes) {
    app.add_option("--scheme", ec.schemes, "mono, nonlins, altlins or all")->delimiter(',');
    app.add_option("--linearization", ec.linearizations, "newton, lscheme or all")
        ->delimiter(',');
  }
  app.add_option("--nx", ec.nx, "Cells per direction (list)")->delimiter(',');
  app.add_option("--dt-divisor", ec.dt_divisors, "T / dt (list, zipped with --nx)")
      ->delimiter(',');
  app.add_option("--L", ec.L, "Stabilization L1 = L2 = L3 (list)")->delimiter(',');
  app.add_option("--aa-m", ec.aa_m, "Anderson depth of the outer loop (list)")->delimiter(',');
  app.add_option("--aa-mlin", ec.aa_m_lin, "Anderson depth of inner loops (list)")
      ->delimiter(',');
  app.add_option("--eps", ec.eps, "Increment tolerance")->check(CLI::PositiveNumber);
  app.add_option("--max-iter", ec.max_iter, "Iteration cap per step")->check(CLI::PositiveNumber);
  app.add_option("--hysteresis", t.hysteresis,
                 "Phi in linearized rows (default: lagged for Newton, linearized for LS)")
      ->check(CLI::IsMember({"lagged", "linearized", "stabilized", "secant"}));
  app.add_option("--branch-safeguard", t.safeguard,
                 "Closure reset for cells crossing a kink of Phi (default: on for LS)")
      ->check(CLI::IsMember({"on", "off"}));
  app.add_option("--weighting", t.weighting, "Face conductivity: arithmetic or upstream")
      ->check(CLI::IsMember({"arithmetic", "upstream"}));
  app.add_option("--advection", t.advection,
                 "Face concentration: upwind or central (default: central for 1-4, upwind for 5)")
      ->check(CLI::IsMember({"upwind", "central"}));
  app.add_option("--sources", t.sources, "Manufactured sources: cell-mean or pointwise")
      ->check(CLI::IsMember({"cell-mean", "pointwise"}));
  app.add_option("--vg-form", t.vg_form, "Example 5 capillary pressure: printed (default) or standard")
      ->check(CLI::IsMember({"standard", "printed"}));
  app.add_flag("--aa-half-step", ec.aa_per_half_step,
               "AltLinS: accelerate each half-step instead of the pair");
  app.add_flag("!--no-cond", ec.track_condition, "Skip condition numbers");
  app.add_option("--out", ec.out, "Output directory");
}

int execute(unsat::ExperimentConfig ec, const TextOptions& t) {
  if (!t.hysteresis.empty()) ec.hysteresis = unsat::parse_hysteresis(t.hysteresis);
  if (!t.safeguard.empty()) ec.branch_safeguard = t.safeguard == "on";
  if (t.weighting == "upstream") ec.options.weighting = unsat::FaceWeighting::upstream;
  if (t.advection == "upwind") ec.options.advection = unsat::Advection::upwind;
  if (t.advection == "central") ec.options.advection = unsat::Advection::central;
  if (t.sources == "pointwise") ec.options.sources = unsat::SourceQuadrature::pointwise;
  if (t.vg_form == "standard") ec.options.vg_form = unsat::VgPcapForm::standard;
  if (t.vg_form == "printed") ec.options.vg_form = unsat::VgPcapForm::printed;
  const auto runs = unsat::run_experiment(ec, &std::cout);
  unsat::write_outputs(runs, ec.example, ec.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled unsaturated flow and transport experiments"};
  app.set_config("--config", "", "TOML/INI file; keys under [run] or [sweep] as the flags");
  app.require_subcommand(1);

  unsat::ExperimentConfig run_cfg;
  TextOptions run_text;
  auto* run = app.add_subcommand("run", "Run schemes on one example");
  add_common(*run, run_cfg, run_text, true);

  unsat::ExperimentConfig sweep_cfg;
  TextOptions sweep_text;
  auto* sweep = app.add_subcommand("sweep", "LS-Mono over the (L, m) cross product");
  add_common(*sweep, sweep_cfg, sweep_text, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) return execute(run_cfg, run_text);
    return execute(sweep_cfg, sweep_text);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
