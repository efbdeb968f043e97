#pragma once

// Outer optimization loop: augmented Lagrangian on the grayness constraint,
// Adam ascent on the raw design variables, penalty/multiplier schedule,
// gravity ramp, convergence test and per-iteration history.

#include "soro/adjoint.hpp"
#include "soro/design.hpp"
#include "soro/error.hpp"
#include "soro/io.hpp"
#include "soro/scenario.hpp"
#include "soro/simulation.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace soro {

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
    double alpha = 0.02;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    bool operator==(const AdamState&) const = default;
};

inline AdamState make_adam(std::size_t n, double alpha, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.alpha = alpha;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = eps;
    return s;
}

/// One bias-corrected Adam ascent step followed by clamping to [-1, 1].
/// A non-finite gradient leaves both phi and the state untouched.
inline void adam_update(std::span<double> phi, std::span<const double> grad, AdamState& s) {
    if (phi.size() != grad.size() || phi.size() != s.m.size() || s.m.size() != s.v.size())
        throw ParameterError("adam: size mismatch");
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i])) {
            std::ostringstream os;
            os << "adam: non-finite gradient at design variable " << i;
            throw NumericError(os.str());
        }
    ++s.step;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < phi.size(); ++i) {
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grad[i];
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
        const double mhat = s.m[i] / c1;
        const double vhat = s.v[i] / c2;
        phi[i] = std::clamp(phi[i] + s.alpha * mhat / (std::sqrt(vhat) + s.epsilon), -1.0, 1.0);
    }
}

struct AugLagState {
    double lambda = 0.0;  // multiplier, >= 0
    double rho = 1.0;     // penalty weight, > 0
    double growth = 2.0;
    int start_iteration = 50;
    int interval = 50;

    bool operator==(const AugLagState&) const = default;
};

inline double constraint_violation(double c, double c_max) { return std::max(0.0, c - c_max); }

/// L_aug = L - lambda v - rho/2 v^2 with v = max(0, C - C_max).
inline double augmented_objective(double l, double c, const AugLagState& s, double c_max) {
    const double v = constraint_violation(c, c_max);
    return l - s.lambda * v - 0.5 * s.rho * v * v;
}

/// dL_aug/dC (zero while feasible).
inline double augmented_constraint_weight(double c, const AugLagState& s, double c_max) {
    const double v = constraint_violation(c, c_max);
    return v > 0.0 ? -(s.lambda + s.rho * v) : 0.0;
}

/// First-order multiplier update, then penalty growth at iterations
/// start, start + interval, ...
inline AugLagState update_multipliers(double c, double c_max, AugLagState s, int iteration) {
    s.lambda = std::max(0.0, s.lambda + s.rho * constraint_violation(c, c_max));
    if (iteration >= s.start_iteration && (iteration - s.start_iteration) % s.interval == 0) s.rho *= s.growth;
    return s;
}

/// Gravity magnitude for an iteration. Stair: 9.8 min(1, floor(it/20)/10);
/// linear: 9.8 min(1, it/200); off: constant.
inline double gravity_schedule(int iteration, GravityRamp ramp, double g_full = 9.8, int interval = 20, int end = 200) {
    if (iteration < 0) throw ParameterError("gravity schedule needs iteration >= 0");
    switch (ramp) {
        case GravityRamp::Off:
            return g_full;
        case GravityRamp::Stair: {
            const double steps = static_cast<double>(end / interval);
            return g_full * std::min(1.0, static_cast<double>(iteration / interval) / steps);
        }
        case GravityRamp::Linear:
            return g_full * std::min(1.0, static_cast<double>(iteration) / static_cast<double>(end));
    }
    return g_full;
}

struct HistoryRow {
    int iter = 0;
    double objective = 0.0;  // L [m]
    double constraint = 0.0;  // C
    std::array<double, 3> xg{0.0, 0.0, 0.0};  // at t_end [m]
    double mass = 0.0;
    double gravity = 0.0;
    double lambda = 0.0;
    double rho = 0.0;
    double seconds = 0.0;
    double augmented = 0.0;

    bool operator==(const HistoryRow&) const = default;
};

struct OptimizationHistory {
    std::vector<HistoryRow> rows;

    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }

    void append(const HistoryRow& r) {
        if (!rows.empty() && r.iter != rows.back().iter + 1) throw ParameterError("history iterations must be contiguous");
        rows.push_back(r);
    }

    /// CSV text. In deterministic mode the wall-time column is written as 0
    /// so identical runs give identical bytes.
    std::string csv(bool deterministic) const {
        std::ostringstream os;
        os << "iter,L_m,C,xg_x,xg_y,xg_z,mass_kg,gravity,lambda_c,rho_p,seconds\n";
        for (const auto& r : rows) {
            os << r.iter << "," << io::format_double(r.objective) << "," << io::format_double(r.constraint);
            for (double x : r.xg) os << "," << io::format_double(x);
            os << "," << io::format_double(r.mass) << "," << io::format_double(r.gravity) << ","
               << io::format_double(r.lambda) << "," << io::format_double(r.rho) << ","
               << io::format_double(deterministic ? 0.0 : r.seconds) << "\n";
        }
        return os.str();
    }

    std::string timing_csv() const {
        std::ostringstream os;
        os << "iter,seconds\n";
        for (const auto& r : rows) os << r.iter << "," << io::format_double(r.seconds) << "\n";
        return os.str();
    }
};

struct ConvergenceSettings {
    double tolerance = 1e-3;
    double eps_abs = 1e-9;
    double c_max = 0.0125;
    double feasibility_tolerance = 1e-3;
};

/// Relative change between the mean objective of the last four iterations
/// and the four before, plus feasibility of the latest iterate.
inline bool convergence_check(const OptimizationHistory& h, const ConvergenceSettings& s) {
    const std::size_t n = h.rows.size();
    if (n < 8) return false;
    double recent = 0.0, before = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        recent += h.rows[n - 1 - i].objective;
        before += h.rows[n - 5 - i].objective;
    }
    recent /= 4.0;
    before /= 4.0;
    const double rel = std::abs(recent - before) / std::max(std::abs(before), s.eps_abs);
    return rel < s.tolerance && h.rows.back().constraint <= s.c_max + s.feasibility_tolerance;
}

inline ConvergenceSettings convergence_settings(const Scenario& s) {
    return {s.optimization.convergence_tolerance, s.optimization.convergence_eps_abs, s.optimization.c_max,
            s.optimization.feasibility_tolerance};
}

/// Everything needed to continue a run exactly where it stopped.
struct OptimizerState {
    int iteration = 0;  // next iteration to run
    std::vector<double> phi;
    AdamState adam;
    AugLagState auglag;
    OptimizationHistory history;
    std::vector<double> best_phi;  // best feasible design so far (empty if none)
    double best_objective = 0.0;
    int best_iteration = -1;

    bool operator==(const OptimizerState& o) const {
        return iteration == o.iteration && phi == o.phi && adam == o.adam && auglag == o.auglag &&
               history.rows == o.history.rows && best_phi == o.best_phi && best_objective == o.best_objective &&
               best_iteration == o.best_iteration;
    }
};

inline OptimizerState initial_optimizer_state(const Scenario& s, std::size_t n_design) {
    const auto& o = s.optimization;
    OptimizerState st;
    st.phi.assign(n_design, o.initial_phi);
    st.adam = make_adam(n_design, o.learning_rate, o.adam_beta1, o.adam_beta2, o.adam_epsilon);
    st.auglag.lambda = o.multiplier_initial;
    st.auglag.rho = o.penalty_initial;
    st.auglag.growth = o.penalty_growth;
    st.auglag.start_iteration = o.penalty_start_iteration;
    st.auglag.interval = o.penalty_interval;
    return st;
}

struct OptimizeResult {
    OptimizerState state;
    bool converged = false;
    bool failed = false;
    std::string failure_code;
    std::string failure;
};

struct OptimizeOptions {
    int max_iterations = -1;  // overrides the scenario when >= 0
    /// Called after every completed iteration (e.g. to persist progress).
    std::function<void(const OptimizerState&)> on_iteration;
};

/// Runs iterations from `state` until convergence or the iteration limit.
/// Failures inside an iteration stop the loop; the state then reflects the
/// last completed iteration.
template <int D>
OptimizeResult optimize(Problem<D>& prob, OptimizerState state, const OptimizeOptions& opt = {}) {
    const Scenario& sc = prob.scenario;
    const auto& o = sc.optimization;
    const int max_it = opt.max_iterations >= 0 ? opt.max_iterations : o.max_iterations;
    const auto conv = convergence_settings(sc);
    OptimizeResult res;
    if (state.phi.size() != prob.design_size()) throw ParameterError("optimizer state does not match the design size");
    while (state.iteration < max_it) {
        const auto t0 = std::chrono::steady_clock::now();
        const int it = state.iteration;
        try {
            const double g = gravity_schedule(it, sc.ramp(), sc.boundary.gravity_m_s2, o.gravity_ramp_interval,
                                              o.gravity_ramp_end);
            prob.set_gravity(g);
            GradientResult<D> gr = gradient<D>(prob, state.phi);
            const DesignField design = prob.design(state.phi);
            const double c = constraint_value(design.gamma);
            const double l = gr.forward.objective;

            // d L_aug / d phi = dL/dphi + w dC/dphi
            std::vector<double> grad = gr.d_phi;
            const double w = augmented_constraint_weight(c, state.auglag, o.c_max);
            if (w != 0.0) {
                const auto dc = chain_to_phi(constraint_gradient(design.gamma), design, prob.filter, o.beta);
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += w * dc[i];
            }
            symmetrize_gradient(grad, prob.symmetry);

            HistoryRow row;
            row.iter = it;
            row.objective = l;
            row.constraint = c;
            for (int a = 0; a < D; ++a) row.xg[static_cast<std::size_t>(a)] = gr.forward.xg_end(a);
            row.mass = gr.forward.mass;
            row.gravity = g;
            row.lambda = state.auglag.lambda;
            row.rho = state.auglag.rho;
            row.augmented = augmented_objective(l, c, state.auglag, o.c_max);

            std::vector<double> next = state.phi;
            AdamState adam = state.adam;
            adam_update(next, grad, adam);

            // commit
            if (c <= o.c_max + o.feasibility_tolerance && (state.best_iteration < 0 || l > state.best_objective)) {
                state.best_objective = l;
                state.best_iteration = it;
                state.best_phi = state.phi;
            }
            state.phi = std::move(next);
            state.adam = std::move(adam);
            state.auglag = update_multipliers(c, o.c_max, state.auglag, it);
            row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            state.history.append(row);
            state.iteration = it + 1;
        } catch (const Error& e) {
            res.failed = true;
            res.failure_code = e.code();
            res.failure = "iteration " + std::to_string(it) + ": " + e.what();
            break;
        }
        if (opt.on_iteration) opt.on_iteration(state);
        // The problem keeps changing while gravity is still ramping up.
        const bool ramp_done = gravity_schedule(state.iteration - 1, sc.ramp(), sc.boundary.gravity_m_s2,
                                                o.gravity_ramp_interval, o.gravity_ramp_end) >=
                               sc.boundary.gravity_m_s2;
        if (ramp_done && convergence_check(state.history, conv)) {
            res.converged = true;
            break;
        }
    }
    res.state = std::move(state);
    return res;
}

}  // namespace soro
