#pragma once

// Prony-series viscoelasticity: storage/loss moduli of a generalized Maxwell
// model, fitting of relative moduli to a frequency-domain master curve, and
// removal of relaxation elements too fast for a given time step.
//
//   G'(w)  = g_inf + sum_i g_i w^2 tau_i^2 / (1 + w^2 tau_i^2)
//   G''(w) =         sum_i g_i w   tau_i   / (1 + w^2 tau_i^2)
//
// With the relaxation times fixed on a log-equal grid both moduli are linear
// in (g_inf, g_1..g_n), so the relative-error norm
//   e = sum_k ((G'-F')/F')^2 + ((G''-F'')/F'')^2
// is an ordinary weighted least-squares problem with a sign constraint; it is
// solved exactly by Lawson-Hanson NNLS.

#include "soro/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace soro::prony {

struct MaxwellElement {
    double g = 0.0;    // relative modulus
    double tau = 1.0;  // relaxation time [s]

    bool operator==(const MaxwellElement&) const = default;
};

struct PronySeries {
    double g_inf = 1.0;
    std::vector<MaxwellElement> elements;  // sorted by descending tau

    double sum_g() const {
        double s = 0.0;
        for (const auto& e : elements) s += e.g;
        return s;
    }

    bool operator==(const PronySeries&) const = default;
};

inline void validate(const PronySeries& s) {
    if (!(s.g_inf >= 0.0) || !std::isfinite(s.g_inf))
        throw ParameterError("prony: g_inf must be finite and >= 0");
    for (std::size_t i = 0; i < s.elements.size(); ++i) {
        const auto& e = s.elements[i];
        if (!(e.g >= 0.0) || !std::isfinite(e.g))
            throw ParameterError("prony: g_" + std::to_string(i + 1) + " must be finite and >= 0");
        if (!(e.tau > 0.0) || !std::isfinite(e.tau))
            throw ParameterError("prony: tau_" + std::to_string(i + 1) + " must be finite and > 0");
        if (i > 0 && !(e.tau < s.elements[i - 1].tau))
            throw ParameterError("prony: relaxation times must be strictly decreasing");
    }
}

/// Rescales all relative moduli by 1/g_inf so the equilibrium element carries
/// unit weight. Used when the series is attached to an equilibrium modulus.
inline PronySeries normalized_to_equilibrium(PronySeries s) {
    if (!(s.g_inf > 0.0)) throw ParameterError("prony: cannot normalize with g_inf = 0");
    for (auto& e : s.elements) e.g /= s.g_inf;
    s.g_inf = 1.0;
    return s;
}

struct Moduli {
    double storage = 0.0;
    double loss = 0.0;
};

inline Moduli eval_moduli(const PronySeries& s, double omega) {
    Moduli m{s.g_inf, 0.0};
    for (const auto& e : s.elements) {
        const double wt = omega * e.tau;
        const double denom = 1.0 + wt * wt;
        m.storage += e.g * wt * wt / denom;
        m.loss += e.g * wt / denom;
    }
    return m;
}

struct CurveSample {
    double omega = 0.0;    // [rad/s]
    double storage = 0.0;  // F'
    double loss = 0.0;     // F''
};

struct MasterCurve {
    std::vector<CurveSample> samples;
    std::string note;  // e.g. reference temperature
};

inline void validate(const MasterCurve& c) {
    if (c.samples.empty()) throw FitError("master curve is empty");
    for (std::size_t k = 0; k < c.samples.size(); ++k) {
        const auto& s = c.samples[k];
        if (!(s.omega > 0.0)) throw FormatError("master curve: omega must be positive (row " + std::to_string(k + 1) + ")");
        if (k > 0 && !(s.omega > c.samples[k - 1].omega))
            throw FormatError("master curve: omega must be strictly increasing (row " + std::to_string(k + 1) + ")");
        if (!(s.storage > 0.0)) throw FormatError("master curve: storage modulus must be positive (row " + std::to_string(k + 1) + ")");
        if (!(s.loss >= 0.0)) throw FormatError("master curve: loss modulus must be >= 0 (row " + std::to_string(k + 1) + ")");
    }
}

/// Sum of squared relative errors between the series and the curve, over the
/// samples at or below `omega_cap`. Samples with zero loss modulus contribute
/// only their storage term.
inline double fit_error(const PronySeries& s, const MasterCurve& c,
                        double omega_cap = std::numeric_limits<double>::infinity()) {
    double e = 0.0;
    for (const auto& smp : c.samples) {
        if (smp.omega > omega_cap) continue;
        const auto m = eval_moduli(s, smp.omega);
        const double rs = (m.storage - smp.storage) / smp.storage;
        e += rs * rs;
        if (smp.loss > 0.0) {
            const double rl = (m.loss - smp.loss) / smp.loss;
            e += rl * rl;
        }
    }
    return e;
}

/// Lawson-Hanson active-set solver for min |Ax - b| subject to x >= 0.
/// Columns are scaled to unit norm internally.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& a_in, const Eigen::VectorXd& b,
                            int max_outer = 0) {
    const Eigen::Index n = a_in.cols();
    Eigen::VectorXd scale(n);
    Eigen::MatrixXd a = a_in;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double nrm = a.col(j).norm();
        scale(j) = nrm > 0.0 ? nrm : 1.0;
        a.col(j) /= scale(j);
    }
    if (max_outer <= 0) max_outer = static_cast<int>(3 * n + 10);

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<bool> passive(static_cast<std::size_t>(n), false);
    const double tol = 1e-12 * std::max(1.0, a.norm() * b.norm());

    auto solve_passive = [&](Eigen::VectorXd& z) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < n; ++j)
            if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
        Eigen::MatrixXd ap(a.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) ap.col(static_cast<Eigen::Index>(k)) = a.col(idx[k]);
        const Eigen::VectorXd zp = ap.colPivHouseholderQr().solve(b);
        z.setZero(n);
        for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(static_cast<Eigen::Index>(k));
    };

    for (int outer = 0; outer < max_outer; ++outer) {
        const Eigen::VectorXd w = a.transpose() * (b - a * x);
        Eigen::Index t = -1;
        double wmax = tol;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!passive[static_cast<std::size_t>(j)] && w(j) > wmax) {
                wmax = w(j);
                t = j;
            }
        }
        if (t < 0) break;
        passive[static_cast<std::size_t>(t)] = true;

        Eigen::VectorXd z;
        for (int inner = 0; inner < 4 * n + 10; ++inner) {
            solve_passive(z);
            bool feasible = true;
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) feasible = false;
            if (feasible) break;
            double alpha = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0)
                    alpha = std::min(alpha, x(j) / (x(j) - z(j)));
            }
            x += alpha * (z - x);
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && x(j) <= 1e-15) {
                    passive[static_cast<std::size_t>(j)] = false;
                    x(j) = 0.0;
                }
            }
        }
        x = z;
        for (Eigen::Index j = 0; j < n; ++j)
            if (!passive[static_cast<std::size_t>(j)]) x(j) = 0.0;
    }
    return x.cwiseQuotient(scale);
}

/// Relaxation times placed log-equally over [tau_min, tau_max], descending.
inline std::vector<double> log_spaced_taus(int n_terms, double tau_min, double tau_max) {
    std::vector<double> taus;
    if (n_terms == 1) return {tau_max};
    const double lmin = std::log(tau_min), lmax = std::log(tau_max);
    for (int i = 0; i < n_terms; ++i)
        taus.push_back(std::exp(lmax + (lmin - lmax) * double(i) / double(n_terms - 1)));
    return taus;
}

struct FitOptions {
    double omega_cap = 1e7;  // samples above this frequency are ignored [rad/s]
};

struct FitResult {
    PronySeries series;
    double error = 0.0;  // relative-error norm e over the fitted samples
    int samples_used = 0;
};

inline FitResult fit_prony(const MasterCurve& curve, int n_terms, double tau_min, double tau_max,
                           const FitOptions& opt = {}) {
    validate(curve);
    if (n_terms < 1) throw FitError("fit_prony: need at least one Maxwell element");
    if (!(tau_min > 0.0) || !(tau_max >= tau_min))
        throw FitError("fit_prony: tau range must be positive with tau_min <= tau_max");

    const auto taus = log_spaced_taus(n_terms, tau_min, tau_max);
    const int unknowns = n_terms + 1;

    std::vector<Eigen::VectorXd> rows;
    std::vector<double> rhs;
    int used = 0;
    for (const auto& s : curve.samples) {
        if (s.omega > opt.omega_cap) continue;
        ++used;
        Eigen::VectorXd rs(unknowns), rl(unknowns);
        rs(0) = 1.0 / s.storage;
        rl(0) = 0.0;
        for (int i = 0; i < n_terms; ++i) {
            const double wt = s.omega * taus[static_cast<std::size_t>(i)];
            const double denom = 1.0 + wt * wt;
            rs(i + 1) = wt * wt / denom / s.storage;
            rl(i + 1) = s.loss > 0.0 ? wt / denom / s.loss : 0.0;
        }
        rows.push_back(rs);
        rhs.push_back(1.0);
        if (s.loss > 0.0) {
            rows.push_back(rl);
            rhs.push_back(1.0);
        }
    }
    if (static_cast<int>(rows.size()) < unknowns) {
        std::ostringstream os;
        os << "fit_prony: " << rows.size() << " equations for " << unknowns << " unknowns (rank deficient)";
        throw FitError(os.str());
    }
    Eigen::MatrixXd a(static_cast<Eigen::Index>(rows.size()), unknowns);
    Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        a.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
        b(static_cast<Eigen::Index>(r)) = rhs[r];
    }
    Eigen::MatrixXd scaled = a;
    for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
        const double nrm = scaled.col(j).norm();
        if (nrm > 0.0) scaled.col(j) /= nrm;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
    qr.setThreshold(1e-13);
    if (qr.rank() < unknowns) throw FitError("fit_prony: design matrix is rank deficient");

    const Eigen::VectorXd g = nnls(a, b);

    FitResult out;
    out.series.g_inf = g(0);
    for (int i = 0; i < n_terms; ++i)
        out.series.elements.push_back({g(i + 1), taus[static_cast<std::size_t>(i)]});
    out.error = fit_error(out.series, curve, opt.omega_cap);
    out.samples_used = used;
    return out;
}

/// Drops elements whose relaxation time is shorter than cutoff_factor * dt;
/// such elements cannot be resolved by the explicit integrator.
inline PronySeries truncate_for_dt(const PronySeries& s, double dt, double cutoff_factor = 10.0) {
    if (!(dt >= 0.0)) throw ParameterError("truncate_for_dt: dt must be >= 0");
    PronySeries out;
    out.g_inf = s.g_inf;
    for (const auto& e : s.elements)
        if (!(e.tau < cutoff_factor * dt)) out.elements.push_back(e);
    return out;
}

/// Five-element series measured for the printed acrylate elastomer (relative
/// to the instantaneous modulus). Used by bundled scenarios and tests.
inline PronySeries reference_table_series() {
    PronySeries s;
    s.g_inf = 9.06e-4;
    s.elements = {{6.36e-4, 2.73e-1}, {2.09e-3, 7.56e-3}, {1.27e-2, 2.09e-4},
                  {1.25e-1, 5.77e-6}, {8.59e-1, 1.59e-7}};
    return s;
}

/// Text block in scenario-file syntax.
inline std::string to_scenario_block(const PronySeries& s) {
    std::ostringstream os;
    os.precision(17);
    os << "prony.g_inf = " << s.g_inf << "\n";
    os << "prony.g = ";
    for (std::size_t i = 0; i < s.elements.size(); ++i) os << (i ? ", " : "") << s.elements[i].g;
    os << "\nprony.tau_s = ";
    for (std::size_t i = 0; i < s.elements.size(); ++i) os << (i ? ", " : "") << s.elements[i].tau;
    os << "\n";
    return os.str();
}

}  // namespace soro::prony
