#pragma once

// Reverse-mode sensitivity of the locomotion objective with respect to the
// design, by hand-written adjoints of every stage of the MPM step.
//
// Forward states are kept only at checkpoints; during the reverse sweep each
// segment is replayed from its checkpoint, and each step's adjoint then
// recomputes that step's intermediates (stencils, stresses, grid fields)
// from the stored pre-step state. The no-slip clamp is treated as a
// constant-zero branch: clamped nodes pass no sensitivity.

#include "soro/constitutive.hpp"
#include "soro/design.hpp"
#include "soro/error.hpp"
#include "soro/mpm.hpp"
#include "soro/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

namespace soro {

struct CheckpointPlan {
    long total_steps = 0;
    long segment_length = 1;
    std::vector<long> checkpoints;  // step indices whose pre-step state is stored
    std::size_t memory_bytes = 0;   // estimate for checkpoints + one segment tape

    std::size_t stored_states() const { return checkpoints.size(); }
};

/// Segment length ceil(sqrt(N)); with a budget on the number of stored
/// checkpoint states the segments grow until the budget is met.
inline CheckpointPlan plan_checkpoints(long total_steps, std::optional<long> max_checkpoints = std::nullopt,
                                       std::size_t state_bytes = 0) {
    if (total_steps < 1) throw ParameterError("checkpoint plan needs at least one step");
    if (max_checkpoints && *max_checkpoints < 1) throw CapacityError("checkpoint budget below one stored state");
    CheckpointPlan plan;
    plan.total_steps = total_steps;
    long s = static_cast<long>(std::ceil(std::sqrt(static_cast<double>(total_steps))));
    while (s * s < total_steps) ++s;
    while (s > 1 && (s - 1) * (s - 1) >= total_steps) --s;
    if (max_checkpoints) s = std::max(s, (total_steps + *max_checkpoints - 1) / *max_checkpoints);
    plan.segment_length = s;
    for (long k = 0; k < total_steps; k += s) plan.checkpoints.push_back(k);
    plan.memory_bytes = (plan.checkpoints.size() + static_cast<std::size_t>(s)) * state_bytes;
    return plan;
}

template <int D>
std::size_t state_bytes(const ParticleSet<D>& ps) {
    const std::size_t per = sizeof(Vec<D>) * 2 + sizeof(Mat<D>) * (2 + static_cast<std::size_t>(ps.n_elements));
    return per * ps.size();
}

/// Adjoint of the time-dependent particle state.
template <int D>
struct StateAdjoint {
    VecList<D> x, v;
    MatList<D> c, f;
    MatList<D> h;  // n_elements per particle, same layout as ParticleSet::history

    void reset(std::size_t n, int n_elements) {
        x.assign(n, Vec<D>::Zero());
        v.assign(n, Vec<D>::Zero());
        c.assign(n, Mat<D>::Zero());
        f.assign(n, Mat<D>::Zero());
        h.assign(n * static_cast<std::size_t>(n_elements), Mat<D>::Zero());
    }

    bool all_finite() const {
        auto ok = [](const auto& list) {
            for (const auto& m : list)
                if (!m.allFinite()) return false;
            return true;
        };
        return ok(x) && ok(v) && ok(c) && ok(f) && ok(h);
    }
};

struct GradientStats {
    long clamps = 0;             // clamp activations met during the reverse sweep
    std::size_t peak_states = 0;  // most full states held at once
    long replayed_steps = 0;
};

template <int D>
struct GradientResult {
    std::vector<double> d_gamma;  // dL/dgamma per design particle
    std::vector<double> d_phi;    // dL/dphi through projection and filter
    GradientStats stats;
    CheckpointPlan plan;
    Trajectory<D> forward;        // summary of the forward pass
};

namespace detail {

/// Reverse of one MPM step. On entry `adj` holds the adjoint of the state
/// after step k; on exit, the adjoint of `s` (the state before step k).
/// Sensitivities to the design densities are added to `g_gamma` and to
/// `g_mass` (per particle mass).
template <int D>
long reverse_step(const StepContext<D>& ctx, const std::vector<MaxwellCoefficients>& coeff, const ParticleSet<D>& s,
                  long k, StateAdjoint<D>& adj, std::vector<double>& g_mass, std::vector<double>& g_gamma_direct) {
    const std::size_t n = s.size();
    const double dt = ctx.dt;
    const double h = ctx.spacing;
    const double inertia = 4.0 / (h * h);
    const double t = static_cast<double>(k) * dt;
    const double p_act = sample_actuation(ctx.waveform, t);
    const int ne = s.n_elements;
    const bool visco = ne > 0;
    const SolidMaterial& solid = ctx.solid;

    // ---- recompute the forward step ----
    std::vector<Stencil<D>> st(n);
    MatList<D> tau(n), q(n);
    for (std::size_t p = 0; p < n; ++p) {
        st[p] = make_stencil<D>(s.position[p], h, ctx.resolution, p);
        tau[p] = particle_kirchhoff<D>(s, p, ctx, p_act);
        q[p] = s.mass[p] * s.affine[p] - (dt * inertia * s.volume0[p]) * tau[p];
    }
    GridField<D> grid(ctx.resolution, h);
    particle_to_grid_kirchhoff<D>(s, tau, grid, dt);
    const long clamps = grid_update<D>(grid, ctx.gravity, ctx.boundaries, dt);

    MatList<D> c_new(n), f_new(n);
    for (std::size_t p = 0; p < n; ++p) {
        Mat<D> b = Mat<D>::Zero();
        st[p].for_each([&](const Veci<D>& off) {
            b += st[p].weight(off) * grid.velocity[grid.index(st[p].base + off)] * st[p].offset(off, h).transpose();
        });
        c_new[p] = inertia * b;
        f_new[p] = (Mat<D>::Identity() + dt * c_new[p]) * s.deformation[p];
    }

    // ---- Maxwell history: H' = a H + b (S(F') - S(F)) ----
    MatList<D> f_bar(n, Mat<D>::Zero());
    MatList<D> f_new_bar = adj.f;
    MatList<D> h_bar(adj.h.size(), Mat<D>::Zero());
    if (visco) {
        for (std::size_t p = 0; p < n; ++p) {
            if (s.phase[p] == Phase::Fluid) continue;
            Mat<D> s_bar = Mat<D>::Zero();
            for (int e = 0; e < ne; ++e) {
                const std::size_t idx = p * static_cast<std::size_t>(ne) + static_cast<std::size_t>(e);
                const auto& ce = coeff[static_cast<std::size_t>(e)];
                h_bar[idx] = ce.decay * adj.h[idx];
                s_bar += ce.gain * adj.h[idx];
            }
            const double mu = solid_moduli<D>(solid, s.gamma[p]).mu;
            f_new_bar[p] += mu * maxwell_input_vjp_f<D>(f_new[p], s_bar);
            f_bar[p] -= mu * maxwell_input_vjp_f<D>(s.deformation[p], s_bar);
            if (s.phase[p] == Phase::SolidDesign) {
                const double dmu = solid.mu * interpolation_factor_derivative(s.gamma[p], solid.void_floor);
                const Mat<D> diff = detail::pulled_back_deviatoric<double, D>(f_new[p]) -
                                    detail::pulled_back_deviatoric<double, D>(s.deformation[p]);
                g_gamma_direct[p] += dmu * ddot(s_bar, diff);
            }
        }
    }

    // ---- G2P: F' = (I + dt C') F, x' = x + dt v', v' and C' from grid ----
    VecList<D> grid_v_bar(grid.node_count(), Vec<D>::Zero());
    VecList<D> x_bar(n);
    for (std::size_t p = 0; p < n; ++p) {
        const Mat<D> c_bar = adj.c[p] + dt * f_new_bar[p] * s.deformation[p].transpose();
        f_bar[p] += (Mat<D>::Identity() + dt * c_new[p]).transpose() * f_new_bar[p];
        const Vec<D> v_bar = adj.v[p] + dt * adj.x[p];
        Vec<D> xb = adj.x[p];
        const Stencil<D>& sp = st[p];
        sp.for_each([&](const Veci<D>& off) {
            const std::size_t i = grid.index(sp.base + off);
            const double w = sp.weight(off);
            const Vec<D> d = sp.offset(off, h);
            const Vec<D>& vi = grid.velocity[i];
            grid_v_bar[i] += w * v_bar + (inertia * w) * (c_bar * d);
            xb += sp.weight_gradient(off) * (v_bar.dot(vi) + inertia * vi.dot(c_bar * d));
            xb -= (inertia * w) * (c_bar.transpose() * vi);
        });
        x_bar[p] = xb;
    }

    // ---- grid update: v = P/m + dt g, clamped nodes are constant ----
    VecList<D> mom_bar(grid.node_count(), Vec<D>::Zero());
    std::vector<double> mass_bar(grid.node_count(), 0.0);
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        if (!(grid.mass[i] > 0.0) || grid.clamped[i]) continue;
        const double inv_m = 1.0 / grid.mass[i];
        mom_bar[i] = grid_v_bar[i] * inv_m;
        mass_bar[i] = -grid_v_bar[i].dot(grid.momentum[i]) * inv_m * inv_m;
    }

    // ---- P2G ----
    for (std::size_t p = 0; p < n; ++p) {
        const Stencil<D>& sp = st[p];
        const double m = s.mass[p];
        const Vec<D> mv = m * s.velocity[p];
        double m_bar = 0.0;
        Vec<D> v_bar = Vec<D>::Zero();
        Mat<D> q_bar = Mat<D>::Zero();
        Vec<D> xb = Vec<D>::Zero();
        sp.for_each([&](const Veci<D>& off) {
            const std::size_t i = grid.index(sp.base + off);
            const double w = sp.weight(off);
            const Vec<D> d = sp.offset(off, h);
            const Vec<D>& pb = mom_bar[i];
            m_bar += w * (mass_bar[i] + pb.dot(s.velocity[p]));
            v_bar += (w * m) * pb;
            q_bar += w * pb * d.transpose();
            xb += sp.weight_gradient(off) * (mass_bar[i] * m + pb.dot(mv + q[p] * d));
            xb -= w * (q[p].transpose() * pb);
        });
        x_bar[p] += xb;

        // Q = m C - dt (4/h^2) V0 tau
        Mat<D> c_bar = m * q_bar;
        m_bar += ddot(q_bar, s.affine[p]);
        const Mat<D> tau_bar = -(dt * inertia * s.volume0[p]) * q_bar;

        // stress
        const Mat<D>& f = s.deformation[p];
        if (s.phase[p] == Phase::Fluid) {
            const FluidMaterial& fl = ctx.fluid;
            const double j = det(f);
            Mat<D> dtau_dj = fl.shear_viscosity * (s.affine[p] + s.affine[p].transpose());
            const double diag = -fl.bulk_modulus + 2.0 * fl.bulk_modulus * j - p_act +
                                (fl.volume_viscosity - 2.0 * fl.shear_viscosity / D) * s.affine[p].trace();
            for (int a = 0; a < D; ++a) dtau_dj(a, a) += diag;
            const double sj = ddot(tau_bar, dtau_dj);
            f_bar[p] += (sj * j) * inverse<double, D>(f).transpose();
            Mat<D> cb = fl.shear_viscosity * (tau_bar + tau_bar.transpose());
            const double tr = (fl.volume_viscosity - 2.0 * fl.shear_viscosity / D) * tau_bar.trace();
            for (int a = 0; a < D; ++a) cb(a, a) += tr;
            c_bar += j * cb;
        } else {
            const auto mod = solid_moduli<D>(solid, s.gamma[p]);
            const Mat<D>* hist = s.history_of(p);
            const Mat<D> g_hist = visco ? weighted_history<D>(solid.prony, hist) : Mat<D>::Zero();
            f_bar[p] += solid_kirchhoff_vjp_f<D>(f, g_hist, mod.bulk, solid.prony.g_inf * mod.mu, visco, tau_bar);
            for (int e = 0; e < ne; ++e) {
                const std::size_t idx = p * static_cast<std::size_t>(ne) + static_cast<std::size_t>(e);
                h_bar[idx] += solid_kirchhoff_vjp_history<D>(f, solid.prony.elements[static_cast<std::size_t>(e)].g, tau_bar);
            }
            if (s.phase[p] == Phase::SolidDesign) {
                // elastic stress is linear in the interpolation factor
                const Mat<D> tau_unit = detail::elastic_kirchhoff<double, D>(f, solid.bulk_modulus<D>(),
                                                                            solid.prony.g_inf * solid.mu);
                g_gamma_direct[p] += interpolation_factor_derivative(s.gamma[p], solid.void_floor) * ddot(tau_bar, tau_unit);
            }
        }

        g_mass[p] += m_bar;
        adj.x[p] = x_bar[p];
        adj.v[p] = v_bar;
        adj.c[p] = c_bar;
        adj.f[p] = f_bar[p];
    }
    adj.h = std::move(h_bar);
    return clamps;
}

}  // namespace detail

/// dL/dphi for the design phi (objective scaled by `scale`).
template <int D>
GradientResult<D> gradient(const Problem<D>& prob, std::span<const double> phi, double scale = 1.0) {
    const DesignField design = prob.design(phi);
    const std::size_t nd = prob.design_size();
    const long n_steps = prob.n_steps;

    GradientResult<D> out;
    out.d_gamma.assign(nd, 0.0);
    const ParticleSet<D> initial = prob.initial_state(design.gamma);
    const int budget = prob.scenario.checkpoint.max_checkpoints;
    out.plan = plan_checkpoints(std::max<long>(n_steps, 1), budget > 0 ? std::optional<long>(budget) : std::nullopt,
                                state_bytes(initial));
    const long seg = out.plan.segment_length;

    // forward pass, keeping checkpoints and the states at the objective window
    std::vector<ParticleSet<D>> checkpoints;
    VecList<D> x_start, x_end;  // positions at the objective window ends
    ForwardOptions<D> fo;
    fo.cog_stride = prob.scenario.run.cog_stride;
    fo.on_state = [&](long k, const ParticleSet<D>& ps) {
        if (k < n_steps && k % seg == 0) checkpoints.push_back(ps);
        if (k == prob.start_step) x_start = ps.position;
        if (k == n_steps) x_end = ps.position;
    };
    out.forward = run_forward<D>(prob, design.gamma, fo);
    out.stats.peak_states = checkpoints.size();

    const std::size_t n = initial.size();
    StateAdjoint<D> adj;
    adj.reset(n, initial.n_elements);
    std::vector<double> g_mass(n, 0.0), g_gamma_direct(n, 0.0);

    // objective seeds: L = (x_g(end) - x_g(start)) . e, x_g over design particles
    const double m_total = design_mass(initial);
    auto seed = [&](const VecList<D>& x, double sign) {
        Vec<D> xg = Vec<D>::Zero();
        for (std::size_t p = 0; p < n; ++p)
            if (initial.phase[p] == Phase::SolidDesign) xg += initial.mass[p] * x[p];
        xg /= m_total;
        for (std::size_t p = 0; p < n; ++p) {
            if (initial.phase[p] != Phase::SolidDesign) continue;
            adj.x[p] += (sign * scale * initial.mass[p] / m_total) * prob.direction;
            g_mass[p] += sign * scale * (x[p] - xg).dot(prob.direction) / m_total;
        }
    };
    if (n_steps == prob.start_step) {
        // zero-length window: the two seeds cancel exactly
    } else {
        seed(x_end, 1.0);
    }

    Stepper<D> stepper(prob.ctx);
    const auto& coeff = stepper.coefficients();
    for (long ci = static_cast<long>(checkpoints.size()) - 1; ci >= 0; --ci) {
        const long k0 = ci * seg;
        const long k1 = std::min(n_steps, k0 + seg);
        std::vector<ParticleSet<D>> tape;
        tape.reserve(static_cast<std::size_t>(k1 - k0));
        tape.push_back(checkpoints[static_cast<std::size_t>(ci)]);
        for (long k = k0; k + 1 < k1; ++k) {
            ParticleSet<D> next = tape.back();
            stepper.step(next, static_cast<double>(k) * prob.ctx.dt, k);
            tape.push_back(std::move(next));
            ++out.stats.replayed_steps;
        }
        out.stats.peak_states = std::max(out.stats.peak_states, checkpoints.size() + tape.size());
        for (long k = k1 - 1; k >= k0; --k) {
            if (k + 1 == prob.start_step && n_steps != prob.start_step) seed(x_start, -1.0);
            const auto& s = tape[static_cast<std::size_t>(k - k0)];
            try {
                out.stats.clamps += detail::reverse_step<D>(prob.ctx, coeff, s, k, adj, g_mass, g_gamma_direct);
            } catch (const Error& e) {
                rethrow_at_step(e, k, 0.0);
            }
            if (!adj.all_finite()) {
                std::ostringstream os;
                os << "non-finite adjoint at step " << k;
                throw NumericError(os.str());
            }
        }
        checkpoints.pop_back();
    }
    if (prob.start_step == 0 && n_steps != 0) seed(x_start, -1.0);

    // mass m = rho0 f(gamma) V0 plus the direct stress/history terms
    const SolidMaterial& solid = prob.ctx.solid;
    for (std::size_t p = 0; p < n; ++p) {
        if (initial.phase[p] != Phase::SolidDesign) continue;
        const double df = interpolation_factor_derivative(initial.gamma[p], solid.void_floor);
        const auto di = static_cast<std::size_t>(initial.design_index[p]);
        out.d_gamma[di] += g_mass[p] * solid.density * df * initial.volume0[p] + g_gamma_direct[p];
    }
    for (double g : out.d_gamma)
        if (!std::isfinite(g)) throw NumericError("non-finite design sensitivity");
    out.d_phi = chain_to_phi(out.d_gamma, design, prob.filter, prob.scenario.optimization.beta);
    return out;
}

struct FdEntry {
    std::size_t index = 0;
    double adjoint = 0.0;
    double finite_difference = 0.0;
    double relative_error = 0.0;
};

/// Objective for an arbitrary phi (no bound check, so phi +- delta may step
/// outside [-1, 1] for finite differences).
template <int D>
double objective_at(const Problem<D>& prob, std::span<const double> phi) {
    const auto filtered = apply_filter(phi, prob.filter);
    std::vector<double> gamma(filtered.size());
    for (std::size_t i = 0; i < gamma.size(); ++i)
        gamma[i] = std::clamp(project(filtered[i], prob.scenario.optimization.beta), 0.0, 1.0);
    return run_forward<D>(prob, gamma).objective;
}

/// Central differences of L at the given indices against the adjoint
/// gradient: |(L(phi+d) - L(phi-d)) / 2d - g| / max(|g|, eps_abs).
template <int D>
std::vector<FdEntry> finite_difference_check(const Problem<D>& prob, std::span<const double> phi,
                                             std::span<const double> d_phi, std::span<const std::size_t> indices,
                                             double delta, double eps_abs = 1e-12) {
    if (!(delta > 0.0)) throw ParameterError("finite-difference step must be positive");
    std::vector<FdEntry> out;
    std::vector<double> work(phi.begin(), phi.end());
    for (std::size_t i : indices) {
        if (i >= work.size()) throw ParameterError("finite-difference index out of range");
        const double keep = work[i];
        work[i] = keep + delta;
        const double lp = objective_at<D>(prob, work);
        work[i] = keep - delta;
        const double lm = objective_at<D>(prob, work);
        work[i] = keep;
        FdEntry e;
        e.index = i;
        e.adjoint = d_phi[i];
        e.finite_difference = (lp - lm) / (2.0 * delta);
        const double diff = std::abs(e.finite_difference - e.adjoint);
        e.relative_error = diff == 0.0 ? 0.0 : diff / std::max(std::abs(e.adjoint), eps_abs);
        out.push_back(e);
    }
    return out;
}

}  // namespace soro
