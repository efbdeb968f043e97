#pragma once

// Forward simulation of one scenario for one design.

#include "soro/design.hpp"
#include "soro/error.hpp"
#include "soro/mpm.hpp"
#include "soro/scenario.hpp"

#include <chrono>
#include <functional>
#include <sstream>
#include <span>
#include <vector>

namespace soro {

/// Everything derived from a scenario that does not depend on the design.
template <int D>
struct Problem {
    Scenario scenario;
    StepContext<D> ctx;
    ParticleSet<D> reference;  // seeded lattice; masses are filled per design
    VecList<D> design_x;
    FilterKernel filter;
    SymmetryMap symmetry;
    Vec<D> direction = Vec<D>::UnitX();
    long n_steps = 0;
    long start_step = 0;

    static Problem build(const Scenario& s) {
        validate(s);
        Problem p;
        p.scenario = s;
        p.ctx = step_context<D>(s, s.boundary.gravity_m_s2);
        p.reference = seed_particles<D>(s);
        p.design_x = design_positions<D>(p.reference);
        if (p.design_x.empty()) throw ValidationError("scenario: body has no design particles");
        p.filter = build_filter<D>(std::span<const Vec<D>>(p.design_x.data(), p.design_x.size()),
                                   s.optimization.filter_radius_m);
        p.symmetry = symmetry_map<D>(s, p.design_x);
        p.direction = to_vec<D>(s.objective_direction).normalized();
        p.n_steps = s.total_steps();
        p.start_step = s.start_step();
        return p;
    }

    std::size_t design_size() const { return design_x.size(); }

    void set_gravity(double magnitude) { ctx.gravity = gravity_vector<D>(scenario, magnitude); }

    ParticleSet<D> initial_state(std::span<const double> gamma) const {
        if (gamma.size() != design_size()) throw ParameterError("design field size does not match the design particle count");
        ParticleSet<D> ps = reference;
        assign_design<D>(ps, gamma, ctx.solid, ctx.fluid);
        return ps;
    }

    /// gamma = project(filter(phi)).
    DesignField design(std::span<const double> phi) const {
        DesignField d;
        d.phi.assign(phi.begin(), phi.end());
        d.refresh(filter, scenario.optimization.beta);
        return d;
    }
};

/// Mass-weighted mean position of the design particles.
template <int D>
Vec<D> design_center_of_gravity(const ParticleSet<D>& ps) {
    Vec<D> s = Vec<D>::Zero();
    double m = 0.0;
    for (std::size_t p = 0; p < ps.size(); ++p) {
        if (ps.phase[p] != Phase::SolidDesign) continue;
        s += ps.mass[p] * ps.position[p];
        m += ps.mass[p];
    }
    if (!(m > 0.0)) throw DegenerateDesignError("design domain has zero total mass");
    return s / m;
}

template <int D>
double design_mass(const ParticleSet<D>& ps) {
    double m = 0.0;
    for (std::size_t p = 0; p < ps.size(); ++p)
        if (ps.phase[p] == Phase::SolidDesign) m += ps.mass[p];
    return m;
}

template <int D>
struct ForwardOptions {
    int cog_stride = 0;  // 0: only t_start and t_end
    int snapshot_every = 0;
    std::function<void(long step, const ParticleSet<D>&)> on_snapshot;
    /// Called with the state before step k for every k in [0, n_steps].
    std::function<void(long step, const ParticleSet<D>&)> on_state;
};

template <int D>
struct Trajectory {
    Vec<D> xg_start = Vec<D>::Zero();
    Vec<D> xg_end = Vec<D>::Zero();
    double objective = 0.0;  // L [m]
    double mass = 0.0;       // total interpolated design mass [kg]
    std::vector<double> cog_time;
    VecList<D> cog;
    long clamps = 0;
    long steps = 0;
    double seconds = 0.0;
    ParticleSet<D> final_state;
};

/// Rethrows a step failure with the step index and elapsed wall time added.
[[noreturn]] inline void rethrow_at_step(const Error& e, long step, double seconds) {
    std::ostringstream os;
    os << e.what() << " [step " << step << ", after " << seconds << " s]";
    throw Error(e.code(), os.str());
}

template <int D>
Trajectory<D> run_forward(const Problem<D>& prob, std::span<const double> gamma, const ForwardOptions<D>& opt = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    Trajectory<D> tr;
    ParticleSet<D> ps = prob.initial_state(gamma);
    tr.mass = design_mass(ps);
    Stepper<D> stepper(prob.ctx);
    const double dt = prob.ctx.dt;
    for (long k = 0;; ++k) {
        if (opt.on_state) opt.on_state(k, ps);
        if (k == prob.start_step) tr.xg_start = design_center_of_gravity(ps);
        if (k == prob.n_steps) tr.xg_end = design_center_of_gravity(ps);
        if (k == 0 || k == prob.n_steps || (opt.cog_stride > 0 && k % opt.cog_stride == 0)) {
            tr.cog_time.push_back(static_cast<double>(k) * dt);
            tr.cog.push_back(design_center_of_gravity(ps));
        }
        if (opt.snapshot_every > 0 && opt.on_snapshot && k % opt.snapshot_every == 0) opt.on_snapshot(k, ps);
        if (k == prob.n_steps) break;
        try {
            tr.clamps += stepper.step(ps, static_cast<double>(k) * dt, k).clamps;
        } catch (const Error& e) {
            rethrow_at_step(e, k, elapsed());
        }
    }
    tr.objective = objective_value<D>(tr.xg_start, tr.xg_end, prob.direction);
    tr.steps = prob.n_steps;
    tr.final_state = std::move(ps);
    tr.seconds = elapsed();
    return tr;
}

}  // namespace soro
