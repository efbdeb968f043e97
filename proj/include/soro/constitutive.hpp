#pragma once

// Constitutive laws for the soft body and the chamber air.
//
// Solid (generalized Maxwell over a compressible neo-Hookean):
//   Psi_H(J)    = K/4 ((J-1)^2 + ln^2 J)
//   Psi_D(Fbar) = mu/2 (tr(Fbar^T Fbar) - D),      Fbar = J^(-1/D) F
//   sigma       = dPsi_H/dJ I + g_inf dev(mu/J Fbar Fbar^T) + dev(sum_i g_i Fbar H_i Fbar^T)
// where H_i is the hereditary integral of the pulled-back deviatoric stress
//   S = Fbar^-1 dev(mu/J Fbar Fbar^T) Fbar^-T = mu/J (I - tr(F^T F)/D (F^T F)^-1)
// against exp(-(t-t')/tau_i). The library works with Kirchhoff stress
// tau = J sigma internally; the Cauchy entry points divide by J.
//
// Fluid (weakly compressible, Newtonian):
//   sigma = -P I + mu_v (L + L^T) + (zeta - 2 mu_v / D) tr(L) I
//   P     = k (1 - J) + p_act
// with P positive in compression, so a positive actuation pressure inflates.
//
// Spatial dimension D is 2 or 3; every 3 of the usual formulas is D here and
// the bulk modulus is K = lambda + 2 mu / D.

#include "soro/error.hpp"
#include "soro/linalg.hpp"
#include "soro/prony.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace soro {

enum class Phase : int { SolidDesign = 0, SolidWall = 1, Fluid = 2 };

struct SolidMaterial {
    double density = 1.07e3;  // rho_0 [kg/m^3]
    double lambda = 0.0;      // [Pa]
    double mu = 0.0;          // [Pa], equilibrium shear modulus before g_inf scaling
    prony::PronySeries prony;  // active elements, relative to mu
    double void_floor = 1e-6;  // epsilon of the density interpolation

    template <int D>
    double bulk_modulus() const {
        return lambda + 2.0 * mu / D;
    }

    static SolidMaterial from_youngs(double youngs, double poisson, double density) {
        SolidMaterial m;
        m.density = density;
        m.mu = youngs / (2.0 * (1.0 + poisson));
        m.lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
        m.prony.g_inf = 1.0;
        return m;
    }
};

struct FluidMaterial {
    double bulk_modulus = 1.4e5;        // k [Pa]
    double shear_viscosity = 1.83e-5;   // mu_v [Pa s]
    double volume_viscosity = 0.0;      // zeta [Pa s]
    double density = 1.0e2;             // artificial air density [kg/m^3]
};

inline void validate(const SolidMaterial& m) {
    if (!(m.density > 0.0)) throw ParameterError("solid density must be positive");
    if (!(m.mu > 0.0)) throw ParameterError("solid shear modulus must be positive");
    if (!(m.lambda >= 0.0)) throw ParameterError("solid Lame lambda must be >= 0");
    if (!(m.void_floor > 0.0 && m.void_floor < 1e-2)) throw ParameterError("void floor must lie in (0, 1e-2)");
    prony::validate(m.prony);
}

inline void validate(const FluidMaterial& m) {
    if (!(m.bulk_modulus > 0.0)) throw ParameterError("fluid bulk modulus must be positive");
    if (!(m.shear_viscosity >= 0.0)) throw ParameterError("fluid shear viscosity must be >= 0");
    if (!(m.volume_viscosity >= 0.0)) throw ParameterError("fluid volume viscosity must be >= 0");
    if (!(m.density > 0.0)) throw ParameterError("fluid density must be positive");
}

// --- density interpolation -------------------------------------------------

/// (1 - eps) gamma^3 + eps
inline double interpolation_factor(double gamma, double eps) {
    return (1.0 - eps) * gamma * gamma * gamma + eps;
}

inline double interpolation_factor_derivative(double gamma, double eps) {
    return 3.0 * (1.0 - eps) * gamma * gamma;
}

struct InterpolatedProperties {
    double density;
    double lambda;
    double mu;
};

inline InterpolatedProperties interpolate_properties(double gamma, const SolidMaterial& base) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        std::ostringstream os;
        os << "fictitious density " << gamma << " outside [0, 1]";
        throw DomainError(os.str());
    }
    const double f = interpolation_factor(gamma, base.void_floor);
    return {base.density * f, base.lambda * f, base.mu * f};
}

// --- solid ---------------------------------------------------------------

namespace detail {

template <typename S, int D>
using MatS = Eigen::Matrix<S, D, D>;

/// Equilibrium Kirchhoff stress: (K/2)(J^2 - J + ln J) I + mu_dev dev(Fbar Fbar^T).
template <typename S, int D>
MatS<S, D> elastic_kirchhoff(const MatS<S, D>& f, double bulk, double mu_dev) {
    using std::log;
    using std::pow;
    const S j = det(f);
    const S scale = pow(j, -2.0 / D);
    const MatS<S, D> b = (f * f.transpose()) * scale;
    MatS<S, D> tau = dev(b) * S(mu_dev);
    const S p = S(0.5 * bulk) * (j * j - j + log(j));
    for (int i = 0; i < D; ++i) tau(i, i) += p;
    return tau;
}

/// Maxwell Kirchhoff stress J dev(Fbar G Fbar^T) with G = sum_i g_i H_i.
template <typename S, int D>
MatS<S, D> visco_kirchhoff(const MatS<S, D>& f, const Mat<D>& g_weighted_history) {
    using std::pow;
    const S j = det(f);
    const S scale = pow(j, 1.0 - 2.0 / D);
    const MatS<S, D> a = f * g_weighted_history.template cast<S>() * f.transpose();
    return dev(a) * scale;
}

/// Pulled-back deviatoric equilibrium stress per unit shear modulus.
template <typename S, int D>
MatS<S, D> pulled_back_deviatoric(const MatS<S, D>& f) {
    const MatS<S, D> c = f.transpose() * f;
    const S j = det(f);
    const MatS<S, D> cinv = inverse(c);
    const S tr = c.trace();
    MatS<S, D> out = -cinv * (tr / S(D));
    for (int i = 0; i < D; ++i) out(i, i) += S(1);
    return out / j;
}

template <int D>
void check_jacobian(double j) {
    if (!(j > 0.0)) {
        std::ostringstream os;
        os << "deformation gradient inverted (det F = " << j << ")";
        throw InversionError(os.str());
    }
}

}  // namespace detail

/// Moduli actually used for a particle of fictitious density gamma.
struct SolidModuli {
    double bulk = 0.0;     // interpolated K
    double mu = 0.0;       // interpolated mu
    double factor = 1.0;   // interpolation factor f(gamma)
};

template <int D>
SolidModuli solid_moduli(const SolidMaterial& m, double gamma) {
    const auto p = interpolate_properties(gamma, m);
    return {p.lambda + 2.0 * p.mu / D, p.mu, interpolation_factor(gamma, m.void_floor)};
}

/// Weighted history sum G = sum_i g_i H_i for one particle.
template <int D>
Mat<D> weighted_history(const prony::PronySeries& s, const Mat<D>* history) {
    Mat<D> g = Mat<D>::Zero();
    for (std::size_t i = 0; i < s.elements.size(); ++i) g += s.elements[i].g * history[i];
    return g;
}

/// Kirchhoff stress J sigma of a solid particle.
template <int D>
Mat<D> solid_kirchhoff(const Mat<D>& f, const Mat<D>* history, const SolidMaterial& m, double gamma) {
    const double j = det(f);
    detail::check_jacobian<D>(j);
    const auto mod = solid_moduli<D>(m, gamma);
    Mat<D> tau = detail::elastic_kirchhoff<double, D>(f, mod.bulk, m.prony.g_inf * mod.mu);
    if (!m.prony.elements.empty())
        tau += detail::visco_kirchhoff<double, D>(f, weighted_history<D>(m.prony, history));
    if (!tau.allFinite()) throw NumericError("non-finite solid stress");
    return tau;
}

/// Cauchy stress of a solid particle. `history` holds one tensor per active
/// Maxwell element (may be empty when the series has none).
template <int D>
Mat<D> solid_stress(const Mat<D>& f, const std::vector<Mat<D>>& history, const SolidMaterial& m,
                    double gamma) {
    if (history.size() != m.prony.elements.size())
        throw ParameterError("history size does not match the number of Maxwell elements");
    const Mat<D> tau = solid_kirchhoff<D>(f, history.data(), m, gamma);
    return tau / det(f);
}

/// Pulled-back deviatoric stress S(F) fed to the hereditary integrals.
template <int D>
Mat<D> maxwell_input(const Mat<D>& f, double mu) {
    return detail::pulled_back_deviatoric<double, D>(f) * mu;
}

/// Strain energy density Psi_H + g_inf Psi_D per reference volume (no history).
template <int D>
double strain_energy(const Mat<D>& f, double bulk, double mu_dev) {
    const double j = det(f);
    const double lj = std::log(j);
    const Mat<D> fb = f * std::pow(j, -1.0 / D);
    return 0.25 * bulk * ((j - 1.0) * (j - 1.0) + lj * lj) +
           0.5 * mu_dev * ((fb.transpose() * fb).trace() - D);
}

// --- Maxwell recursion -----------------------------------------------------

struct MaxwellCoefficients {
    double decay;  // exp(-dt/tau)
    double gain;   // (1 - exp(-dt/tau)) tau / dt
};

/// Exponential integrator coefficients, exact for an input that changes at a
/// constant rate within the step.
inline MaxwellCoefficients maxwell_coefficients(double dt, double tau) {
    if (!(dt > 0.0) || !(tau > 0.0)) throw ParameterError("maxwell step needs dt > 0 and tau > 0");
    const double x = dt / tau;
    const double decay = std::exp(-x);
    const double gain = x < 1e-8 ? 1.0 - 0.5 * x : -std::expm1(-x) / x;
    return {decay, gain};
}

template <int D>
struct MaxwellUpdate {
    Mat<D> history;  // H_i after the step
    Mat<D> stress;   // sigma_i^D = g_i Fbar H_i Fbar^T (before dev)
};

/// Advances one Maxwell element: H <- decay H + gain (S_new - S_old), and
/// pushes the updated history forward with the isochoric part of f_new.
template <int D>
MaxwellUpdate<D> maxwell_advance(const Mat<D>& history, const Mat<D>& input_old, const Mat<D>& input_new,
                                 const Mat<D>& f_new, double dt, const prony::MaxwellElement& e) {
    const auto c = maxwell_coefficients(dt, e.tau);
    MaxwellUpdate<D> out;
    out.history = c.decay * history + c.gain * (input_new - input_old);
    const double j = det(f_new);
    detail::check_jacobian<D>(j);
    const Mat<D> fb = f_new * std::pow(j, -1.0 / D);
    out.stress = e.g * fb * out.history * fb.transpose();
    return out;
}

// --- fluid -------------------------------------------------------------------

/// Physical pressure P = k (1 - J) + p_act (positive in compression).
inline double fluid_pressure(double j, const FluidMaterial& m, double p_act) {
    return m.bulk_modulus * (1.0 - j) + p_act;
}

template <int D>
Mat<D> fluid_stress(double j, const Mat<D>& grad_v, const FluidMaterial& m, double p_act) {
    if (!(j > 0.0)) {
        std::ostringstream os;
        os << "fluid particle inverted (J = " << j << ")";
        throw InversionError(os.str());
    }
    const double p = fluid_pressure(j, m, p_act);
    Mat<D> s = m.shear_viscosity * (grad_v + grad_v.transpose());
    const double bulk_visc = (m.volume_viscosity - 2.0 * m.shear_viscosity / D) * grad_v.trace();
    for (int i = 0; i < D; ++i) s(i, i) += bulk_visc - p;
    if (!s.allFinite()) throw NumericError("non-finite fluid stress");
    return s;
}

// --- reverse-mode helpers --------------------------------------------------
//
// Vector-Jacobian products of the per-particle maps, used by the adjoint
// sweep. Derivatives with respect to F are taken with forward-mode dual
// numbers over the D*D entries of F; everything else is closed form.

namespace detail {

template <int D>
using Dual = Eigen::AutoDiffScalar<Eigen::Matrix<double, D * D, 1>>;

template <int D>
MatS<Dual<D>, D> seed(const Mat<D>& f) {
    MatS<Dual<D>, D> out;
    for (int c = 0; c < D; ++c)
        for (int r = 0; r < D; ++r) {
            out(r, c).value() = f(r, c);
            out(r, c).derivatives() = Eigen::Matrix<double, D * D, 1>::Unit(c * D + r);
        }
    return out;
}

template <int D>
Mat<D> contract(const MatS<Dual<D>, D>& out, const Mat<D>& bar) {
    Eigen::Matrix<double, D * D, 1> g = Eigen::Matrix<double, D * D, 1>::Zero();
    for (int c = 0; c < D; ++c)
        for (int r = 0; r < D; ++r) g += bar(r, c) * out(r, c).derivatives();
    Mat<D> res;
    for (int c = 0; c < D; ++c)
        for (int r = 0; r < D; ++r) res(r, c) = g(c * D + r);
    return res;
}

}  // namespace detail

/// d<tau_bar, tau_solid(F)>/dF with history and moduli held fixed.
template <int D>
Mat<D> solid_kirchhoff_vjp_f(const Mat<D>& f, const Mat<D>& g_weighted_history, double bulk, double mu_dev,
                             bool has_visco, const Mat<D>& tau_bar) {
    const auto fd = detail::seed<D>(f);
    auto tau = detail::elastic_kirchhoff<detail::Dual<D>, D>(fd, bulk, mu_dev);
    if (has_visco) tau += detail::visco_kirchhoff<detail::Dual<D>, D>(fd, g_weighted_history);
    return detail::contract<D>(tau, tau_bar);
}

/// d<tau_bar, tau_solid>/dH_i = g_i J^(1-2/D) F^T dev(tau_bar) F.
template <int D>
Mat<D> solid_kirchhoff_vjp_history(const Mat<D>& f, double g_i, const Mat<D>& tau_bar) {
    const double j = det(f);
    return g_i * std::pow(j, 1.0 - 2.0 / D) * f.transpose() * dev(tau_bar) * f;
}

/// d<s_bar, S(F)>/dF for the unit-modulus pulled-back deviatoric stress.
template <int D>
Mat<D> maxwell_input_vjp_f(const Mat<D>& f, const Mat<D>& s_bar) {
    const auto fd = detail::seed<D>(f);
    return detail::contract<D>(detail::pulled_back_deviatoric<detail::Dual<D>, D>(fd), s_bar);
}

// --- actuation ---------------------------------------------------------------

struct ActuationWaveform {
    std::vector<double> times;      // [s], strictly increasing, within one period
    std::vector<double> pressures;  // [Pa]
    double period = 0.2;            // [s]
    double t_start = 0.0;           // [s]
};

inline void validate(const ActuationWaveform& w) {
    if (w.times.empty() || w.times.size() != w.pressures.size())
        throw ConfigError("actuation waveform table is empty");
    if (!(w.period > 0.0)) throw ConfigError("actuation period must be positive");
    for (std::size_t i = 0; i < w.times.size(); ++i) {
        if (!std::isfinite(w.pressures[i])) throw ConfigError("actuation pressure is not finite");
        if (i > 0 && !(w.times[i] > w.times[i - 1]))
            throw ConfigError("actuation sample times must be strictly increasing");
    }
    if (!(w.times.back() - w.times.front() < w.period + 1e-12))
        throw ConfigError("actuation table is longer than one period");
}

/// Pressure offset at absolute time t: zero before t_start, otherwise the
/// periodic table linearly interpolated (wrapping from the last sample to the
/// first sample of the next period).
inline double sample_actuation(const ActuationWaveform& w, double t) {
    if (w.times.empty()) throw ConfigError("actuation waveform table is empty");
    if (t < w.t_start) return 0.0;
    const double t0 = w.times.front();
    double phase = std::fmod(t - w.t_start - t0, w.period);
    if (phase < 0.0) phase += w.period;
    phase += t0;
    const auto& ts = w.times;
    const auto& ps = w.pressures;
    if (ts.size() == 1) return ps.front();
    if (phase >= ts.back()) {
        const double span = t0 + w.period - ts.back();
        if (span <= 0.0) return ps.back();
        const double a = (phase - ts.back()) / span;
        return (1.0 - a) * ps.back() + a * ps.front();
    }
    const auto it = std::upper_bound(ts.begin(), ts.end(), phase);
    const auto i1 = static_cast<std::size_t>(it - ts.begin());
    const auto i0 = i1 - 1;
    const double a = (phase - ts[i0]) / (ts[i1] - ts[i0]);
    return (1.0 - a) * ps[i0] + a * ps[i1];
}

/// Square wave with 1:1 duty and exponential rise/decay of time constant
/// `rise_time`, starting from zero at the beginning of every period.
inline ActuationWaveform synthetic_square_waveform(double peak_pa, double frequency_hz, double rise_time,
                                                   double t_start, int samples_per_period = 400) {
    if (!(frequency_hz > 0.0) || !(rise_time > 0.0) || samples_per_period < 4)
        throw ConfigError("synthetic waveform needs positive frequency, rise time and >= 4 samples");
    ActuationWaveform w;
    w.period = 1.0 / frequency_hz;
    w.t_start = t_start;
    const double half = 0.5 * w.period;
    const double high = peak_pa * (1.0 - std::exp(-half / rise_time));
    for (int i = 0; i < samples_per_period; ++i) {
        const double t = w.period * double(i) / double(samples_per_period);
        const double p = t < half ? peak_pa * (1.0 - std::exp(-t / rise_time))
                                  : high * std::exp(-(t - half) / rise_time);
        w.times.push_back(t);
        w.pressures.push_back(p);
    }
    return w;
}

}  // namespace soro
