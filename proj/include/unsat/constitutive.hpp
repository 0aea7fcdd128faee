#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace unsat {

/// Regularized sign graph: sign(xi) outside [-delta, delta], xi/delta inside.
inline double phi_delta(double xi, double delta) {
  if (std::abs(xi) >= delta) return xi > 0.0 ? 1.0 : -1.0;
  return xi / delta;
}

/// Slope of phi_delta; zero on the saturated branches.
inline double phi_delta_slope(double xi, double delta) {
  return std::abs(xi) >= delta ? 0.0 : 1.0 / delta;
}

// ---------------------------------------------------------------------------
// Polynomial test model. Templated so the manufactured-solution code can
// differentiate through them.

template <class T>
T pcap_poly(const T& theta, const T& c) {
  return 1.0 - theta * theta - 0.1 * c * c * c;
}
inline double dpcap_poly_dtheta(double theta, double /*c*/) { return -2.0 * theta; }
inline double dpcap_poly_dc(double /*theta*/, double c) { return -0.3 * c * c; }

template <class T>
T k_poly(const T& theta) {
  return 1.0 + theta * theta;
}
inline double dk_poly(double theta) { return 2.0 * theta; }

template <class T>
T reaction(const T& c) {
  if (c == T(-1.0)) throw std::domain_error("reaction: R(c) = c/(c+1) is singular at c = -1");
  return c / (c + 1.0);
}
inline double dreaction(double c) {
  if (c == -1.0) throw std::domain_error("reaction: R'(c) is singular at c = -1");
  return 1.0 / ((c + 1.0) * (c + 1.0));
}

enum class TauKind { zero, one, one_plus_theta_sq };

inline TauKind parse_tau_kind(std::string_view name) {
  if (name == "zero") return TauKind::zero;
  if (name == "one") return TauKind::one;
  if (name == "one_plus_theta_sq") return TauKind::one_plus_theta_sq;
  throw std::invalid_argument("unknown tau kind '" + std::string(name) + "'");
}

template <class T>
T tau_variant(TauKind kind, const T& theta) {
  switch (kind) {
    case TauKind::zero: return T(0.0);
    case TauKind::one: return T(1.0);
    case TauKind::one_plus_theta_sq: return 1.0 + theta * theta;
  }
  throw std::invalid_argument("tau_variant: unknown kind");
}

inline double dtau_variant(TauKind kind, double theta) {
  switch (kind) {
    case TauKind::zero:
    case TauKind::one: return 0.0;
    case TauKind::one_plus_theta_sq: return 2.0 * theta;
  }
  throw std::invalid_argument("dtau_variant: unknown kind");
}

// ---------------------------------------------------------------------------
// van Genuchten model

struct VanGenuchtenParams {
  double theta_s = 0.9;
  double theta_r = 0.005;
  double M = 2.0;
  double l = 0.31;
  double a = 0.04;
  double b = 0.47;

  void validate() const {
    if (!(0.0 <= theta_r && theta_r < theta_s && theta_s <= 1.0))
      throw std::invalid_argument("VanGenuchtenParams: need 0 <= theta_r < theta_s <= 1");
    if (!(M > 0.0)) throw std::invalid_argument("VanGenuchtenParams: M must be positive");
    if (!(a > 0.0)) throw std::invalid_argument("VanGenuchtenParams: a must be positive");
  }
};

inline constexpr double kSaturationClamp = 1e-8;

/// Effective water content; clamped into [1e-8, 1 - 1e-8] unless `clamp` is false.
inline double vg_effective_saturation(double theta, const VanGenuchtenParams& p, bool clamp = true) {
  const double te = (theta - p.theta_r) / (p.theta_s - p.theta_r);
  if (!clamp) return te;
  return std::clamp(te, kSaturationClamp, 1.0 - kSaturationClamp);
}

inline double vg_conductivity(double theta, const VanGenuchtenParams& p) {
  const double te = vg_effective_saturation(theta, p);
  const double inner = 1.0 - std::pow(1.0 - std::pow(te, 1.0 / p.M), p.M);
  return std::pow(te, p.l) * inner * inner;
}

/// Which capillary-pressure expression the van Genuchten model evaluates.
enum class VgPcapForm {
  standard,  ///< s(c) * (theta_e^{-1/M} - 1)^{1-M}
  printed,   ///< s(c) * (-theta_e^{-1/M})^{1-M}, only defined for integer 1-M
};

/// Surfactant scaling s(c) = (1 - b ln(c/a + 1))^{-1}.
inline double vg_surface_tension_factor(double c, const VanGenuchtenParams& p) {
  const double denom = 1.0 - p.b * std::log(c / p.a + 1.0);
  if (!std::isfinite(denom) || std::abs(denom) < 1e-12) {
    throw std::domain_error("vg_pcap: surfactant factor singular at c = " + std::to_string(c) +
                            " (1 - b ln(c/a + 1) = " + std::to_string(denom) + ")");
  }
  return 1.0 / denom;
}

inline double vg_pcap(double theta, double c, const VanGenuchtenParams& p,
                      VgPcapForm form = VgPcapForm::standard, bool use_effective = true) {
  const double s = vg_surface_tension_factor(c, p);
  const double x = use_effective
                       ? vg_effective_saturation(theta, p)
                       : std::clamp(theta, kSaturationClamp, 1.0 - kSaturationClamp);
  const double expo = 1.0 - p.M;
  switch (form) {
    case VgPcapForm::standard: return s * std::pow(std::pow(x, -1.0 / p.M) - 1.0, expo);
    case VgPcapForm::printed: {
      if (expo != std::round(expo))
        throw std::domain_error("vg_pcap: printed form needs an integer exponent 1-M");
      return s * std::pow(-std::pow(x, -1.0 / p.M), expo);
    }
  }
  throw std::invalid_argument("vg_pcap: unknown form");
}

// ---------------------------------------------------------------------------

/// Model functions for one simulation: capillary pressure, conductivity,
/// dynamic coefficient, reaction and their partial derivatives, plus the
/// scalar diffusion, hysteresis width and regularization parameters.
struct ConstitutiveSet {
  std::function<double(double, double)> pcap;
  std::function<double(double, double)> dpcap_dtheta;
  std::function<double(double, double)> dpcap_dc;
  std::function<double(double)> conductivity;
  std::function<double(double)> dconductivity;
  std::function<double(double)> tau;
  std::function<double(double)> dtau;
  std::function<double(double)> reaction;
  std::function<double(double)> dreaction;
  double diffusion = 1.0;
  double gamma = 0.0;
  double delta = 5e-3;
  /// Range on which -pcap is nondecreasing in theta; bounds the closure root search.
  double theta_min = 0.0;
  double theta_max = 10.0;

  void validate() const {
    if (!pcap || !dpcap_dtheta || !dpcap_dc || !conductivity || !dconductivity || !tau || !dtau ||
        !reaction || !dreaction)
      throw std::invalid_argument("ConstitutiveSet: every model function must be set");
    if (!(gamma >= 0.0)) throw std::invalid_argument("ConstitutiveSet: gamma must be >= 0");
    if (!(delta > 0.0)) throw std::invalid_argument("ConstitutiveSet: delta must be > 0");
    if (!(diffusion > 0.0)) throw std::invalid_argument("ConstitutiveSet: D must be > 0");
    if (!(theta_min < theta_max)) throw std::invalid_argument("ConstitutiveSet: empty theta range");
  }
};

inline ConstitutiveSet polynomial_model(TauKind tau_kind, double gamma, double delta,
                                        double diffusion = 1.0) {
  ConstitutiveSet m;
  m.pcap = [](double th, double c) { return pcap_poly(th, c); };
  m.dpcap_dtheta = dpcap_poly_dtheta;
  m.dpcap_dc = dpcap_poly_dc;
  m.conductivity = [](double th) { return k_poly(th); };
  m.dconductivity = dk_poly;
  m.tau = [tau_kind](double th) { return tau_variant(tau_kind, th); };
  m.dtau = [tau_kind](double th) { return dtau_variant(tau_kind, th); };
  m.reaction = [](double c) { return unsat::reaction(c); };
  m.dreaction = dreaction;
  m.diffusion = diffusion;
  m.gamma = gamma;
  m.delta = delta;
  m.validate();
  return m;
}

/// Central difference with step 1e-7 * max(1, |x|).
template <class F>
double central_difference(F&& f, double x) {
  const double h = 1e-7 * std::max(1.0, std::abs(x));
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline ConstitutiveSet van_genuchten_model(const VanGenuchtenParams& p, TauKind tau_kind,
                                           double gamma, double delta,
                                           VgPcapForm form = VgPcapForm::standard,
                                           bool use_effective = true, double diffusion = 1.0) {
  p.validate();
  ConstitutiveSet m;
  m.pcap = [p, form, use_effective](double th, double c) {
    return vg_pcap(th, c, p, form, use_effective);
  };
  m.dpcap_dtheta = [p, form, use_effective](double th, double c) {
    return central_difference([&](double x) { return vg_pcap(x, c, p, form, use_effective); }, th);
  };
  m.dpcap_dc = [p, form, use_effective](double th, double c) {
    return central_difference([&](double x) { return vg_pcap(th, x, p, form, use_effective); }, c);
  };
  m.conductivity = [p](double th) { return vg_conductivity(th, p); };
  m.dconductivity = [p](double th) {
    return central_difference([&](double x) { return vg_conductivity(x, p); }, th);
  };
  m.tau = [tau_kind](double th) { return tau_variant(tau_kind, th); };
  m.dtau = [tau_kind](double th) { return dtau_variant(tau_kind, th); };
  m.reaction = [](double c) { return unsat::reaction(c); };
  m.dreaction = dreaction;
  m.diffusion = diffusion;
  m.gamma = gamma;
  m.delta = delta;
  m.validate();
  return m;
}

}  // namespace unsat
