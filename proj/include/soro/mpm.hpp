#pragma once

// MLS-MPM time integration on a fixed Cartesian grid.
//
// Transfer formulas (quadratic B-spline weights w_ip, node offset
// d_ip = x_i - x_p, inverse inertia factor 4/h^2):
//
//   P2G   Q_p   = m_p C_p - dt (4/h^2) V0_p tau_p          (tau = J sigma)
//         m_i  += w_ip m_p
//         p_i  += w_ip (m_p v_p + Q_p d_ip)
//   grid  v_i   = p_i / m_i + dt g,  then per boundary plane:
//               v_i = 0 if node is on/behind the plane and v_i . n < 0
//   G2P   v_p   = sum_i w_ip v_i
//         C_p   = (4/h^2) sum_i w_ip v_i d_ip^T
//         x_p  += dt v_p
//         F_p   = (I + dt C_p) F_p
//
// Nodes are at integer multiples of h starting from the origin; a grid of
// `resolution` cells has resolution + 1 nodes per axis. Particles must stay in
// [h, (resolution - 1) h) along every axis.

#include "soro/constitutive.hpp"
#include "soro/error.hpp"
#include "soro/linalg.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace soro {

template <int D>
struct ParticleSet {
    VecList<D> position;
    VecList<D> velocity;
    MatList<D> affine;        // C_p, the MLS/APIC velocity gradient
    MatList<D> deformation;   // F_p
    std::vector<double> volume0;
    std::vector<double> mass;
    std::vector<double> gamma;  // fictitious density (1 for walls, unused for fluid)
    std::vector<Phase> phase;
    std::vector<int> design_index;  // -1 when the particle is not a design variable
    MatList<D> history;             // n_elements tensors per particle, contiguous
    int n_elements = 0;

    std::size_t size() const { return position.size(); }

    Mat<D>* history_of(std::size_t p) { return history.data() + p * static_cast<std::size_t>(n_elements); }
    const Mat<D>* history_of(std::size_t p) const {
        return history.data() + p * static_cast<std::size_t>(n_elements);
    }

    void add(const Vec<D>& x, double vol, Phase ph, int design) {
        position.push_back(x);
        velocity.push_back(Vec<D>::Zero());
        affine.push_back(Mat<D>::Zero());
        deformation.push_back(Mat<D>::Identity());
        volume0.push_back(vol);
        mass.push_back(0.0);
        gamma.push_back(ph == Phase::SolidDesign ? 0.5 : 1.0);
        phase.push_back(ph);
        design_index.push_back(design);
        for (int k = 0; k < n_elements; ++k) history.push_back(Mat<D>::Zero());
    }

    Vec<D> total_momentum() const {
        Vec<D> p = Vec<D>::Zero();
        for (std::size_t i = 0; i < size(); ++i) p += mass[i] * velocity[i];
        return p;
    }

    double total_mass() const {
        double m = 0.0;
        for (double v : mass) m += v;
        return m;
    }

    /// Bitwise equality of the time-dependent fields.
    bool same_dynamic_state(const ParticleSet& o) const {
        return position == o.position && velocity == o.velocity && affine == o.affine &&
               deformation == o.deformation && history == o.history;
    }
};

template <int D>
struct GridField {
    int resolution = 0;  // cells per axis
    double spacing = 0.0;
    std::vector<double> mass;
    VecList<D> momentum;
    VecList<D> velocity;
    std::vector<std::uint8_t> clamped;

    GridField() = default;
    GridField(int res, double h) : resolution(res), spacing(h) {
        const std::size_t n = node_count();
        mass.assign(n, 0.0);
        momentum.assign(n, Vec<D>::Zero());
        velocity.assign(n, Vec<D>::Zero());
        clamped.assign(n, 0);
    }

    int nodes_per_axis() const { return resolution + 1; }

    std::size_t node_count() const {
        std::size_t n = 1;
        for (int a = 0; a < D; ++a) n *= static_cast<std::size_t>(nodes_per_axis());
        return n;
    }

    std::size_t index(const Veci<D>& node) const {
        std::size_t idx = 0;
        for (int a = D - 1; a >= 0; --a) idx = idx * static_cast<std::size_t>(nodes_per_axis()) + static_cast<std::size_t>(node(a));
        return idx;
    }

    Vec<D> node_position(const Veci<D>& node) const { return node.template cast<double>() * spacing; }

    Vec<D> node_position(std::size_t idx) const {
        Vec<D> x;
        for (int a = 0; a < D; ++a) {
            x(a) = static_cast<double>(idx % static_cast<std::size_t>(nodes_per_axis())) * spacing;
            idx /= static_cast<std::size_t>(nodes_per_axis());
        }
        return x;
    }

    void clear() {
        std::fill(mass.begin(), mass.end(), 0.0);
        std::fill(momentum.begin(), momentum.end(), Vec<D>::Zero());
        std::fill(velocity.begin(), velocity.end(), Vec<D>::Zero());
        std::fill(clamped.begin(), clamped.end(), std::uint8_t{0});
    }

    double total_mass() const {
        double m = 0.0;
        for (double v : mass) m += v;
        return m;
    }

    Vec<D> total_momentum() const {
        Vec<D> p = Vec<D>::Zero();
        for (const auto& v : momentum) p += v;
        return p;
    }
};

enum class BoundaryKind { NoSlip };

template <int D>
struct BoundaryPlane {
    Vec<D> point = Vec<D>::Zero();
    Vec<D> normal = Vec<D>::UnitY();  // unit, pointing away from the obstacle
    BoundaryKind kind = BoundaryKind::NoSlip;
};

template <int D>
struct BoundarySet {
    std::vector<BoundaryPlane<D>> planes;

    void add(const Vec<D>& point, const Vec<D>& normal) {
        const double n = normal.norm();
        if (!(n > 0.0)) throw ParameterError("boundary normal must be nonzero");
        planes.push_back({point, normal / n, BoundaryKind::NoSlip});
    }
};

struct SimClock {
    double dt = 1e-5;
    long step = 0;
    double t_start = 0.0;
    double t_end = 0.0;

    double time() const { return static_cast<double>(step) * dt; }
};

inline void validate(const SimClock& c) {
    if (!(c.dt > 0.0)) throw ParameterError("time step must be positive");
    if (!(c.t_start <= c.t_end)) throw ParameterError("t_start must not exceed t_end");
}

/// Quadratic B-spline stencil of one particle.
template <int D>
struct Stencil {
    Veci<D> base;
    Vec<D> fx;                  // x/h - base
    std::array<Vec<D>, 3> w;    // per-axis weights
    std::array<Vec<D>, 3> dw;   // per-axis weight derivatives d/dx (already divided by h)

    template <typename Fn>
    void for_each(Fn&& fn) const {
        if constexpr (D == 2) {
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) fn(Veci<D>(i, j));
        } else {
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    for (int k = 0; k < 3; ++k) fn(Veci<D>(i, j, k));
        }
    }

    double weight(const Veci<D>& off) const {
        double r = 1.0;
        for (int a = 0; a < D; ++a) r *= w[static_cast<std::size_t>(off(a))](a);
        return r;
    }

    Vec<D> weight_gradient(const Veci<D>& off) const {
        Vec<D> g;
        for (int a = 0; a < D; ++a) {
            double r = dw[static_cast<std::size_t>(off(a))](a);
            for (int b = 0; b < D; ++b)
                if (b != a) r *= w[static_cast<std::size_t>(off(b))](b);
            g(a) = r;
        }
        return g;
    }

    /// x_i - x_p for the node at `off`.
    Vec<D> offset(const Veci<D>& off, double h) const { return (off.template cast<double>() - fx) * h; }
};

template <int D>
Stencil<D> make_stencil(const Vec<D>& x, double h, int resolution, std::size_t particle) {
    Stencil<D> s;
    const double inv_h = 1.0 / h;
    for (int a = 0; a < D; ++a) {
        const double xs = x(a) * inv_h;
        if (!(xs >= 1.0 && xs < resolution - 1.0)) {
            std::ostringstream os;
            os << "particle " << particle << " left the grid margin (axis " << a << ", x = " << x(a) << " m)";
            throw OutOfDomainError(os.str());
        }
        const int b = static_cast<int>(std::floor(xs - 0.5));
        const double f = xs - b;
        s.base(a) = b;
        s.fx(a) = f;
        s.w[0](a) = 0.5 * (1.5 - f) * (1.5 - f);
        s.w[1](a) = 0.75 - (f - 1.0) * (f - 1.0);
        s.w[2](a) = 0.5 * (f - 0.5) * (f - 0.5);
        s.dw[0](a) = -(1.5 - f) * inv_h;
        s.dw[1](a) = -2.0 * (f - 1.0) * inv_h;
        s.dw[2](a) = (f - 0.5) * inv_h;
    }
    return s;
}

/// Scatter with precomputed Kirchhoff stresses tau_p = J_p sigma_p.
template <int D>
void particle_to_grid_kirchhoff(const ParticleSet<D>& ps, const MatList<D>& kirchhoff, GridField<D>& grid,
                                double dt) {
    grid.clear();
    const double h = grid.spacing;
    const double inertia = 4.0 / (h * h);
    for (std::size_t p = 0; p < ps.size(); ++p) {
        const auto st = make_stencil<D>(ps.position[p], h, grid.resolution, p);
        const double m = ps.mass[p];
        const Mat<D> q = m * ps.affine[p] - (dt * inertia * ps.volume0[p]) * kirchhoff[p];
        const Vec<D> mv = m * ps.velocity[p];
        st.for_each([&](const Veci<D>& off) {
            const double w = st.weight(off);
            const std::size_t i = grid.index(st.base + off);
            grid.mass[i] += w * m;
            grid.momentum[i] += w * (mv + q * st.offset(off, h));
        });
    }
}

/// Scatter with per-particle Cauchy stresses.
template <int D>
void particle_to_grid(const ParticleSet<D>& ps, const MatList<D>& cauchy, GridField<D>& grid, double dt) {
    MatList<D> tau(ps.size());
    for (std::size_t p = 0; p < ps.size(); ++p) {
        if (!cauchy[p].allFinite()) {
            std::ostringstream os;
            os << "non-finite stress at particle " << p;
            throw NumericError(os.str());
        }
        tau[p] = cauchy[p] * det(ps.deformation[p]);
    }
    particle_to_grid_kirchhoff<D>(ps, tau, grid, dt);
}

/// Momentum to velocity, gravity, no-slip clamp. Returns the number of
/// clamp activations.
template <int D>
long grid_update(GridField<D>& grid, const Vec<D>& gravity, const BoundarySet<D>& boundaries, double dt) {
    long clamps = 0;
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        grid.clamped[i] = 0;
        if (!(grid.mass[i] > 0.0)) {
            grid.velocity[i].setZero();
            continue;
        }
        Vec<D> v = grid.momentum[i] / grid.mass[i] + dt * gravity;
        if (!boundaries.planes.empty()) {
            const Vec<D> xi = grid.node_position(i);
            for (const auto& plane : boundaries.planes) {
                if ((xi - plane.point).dot(plane.normal) <= 0.0 && v.dot(plane.normal) < 0.0) {
                    v.setZero();
                    grid.clamped[i] = 1;
                    ++clamps;
                    break;
                }
            }
        }
        grid.velocity[i] = v;
    }
    return clamps;
}

template <int D>
void grid_to_particle(const GridField<D>& grid, ParticleSet<D>& ps, double dt, long step_index = -1) {
    const double h = grid.spacing;
    const double inertia = 4.0 / (h * h);
    for (std::size_t p = 0; p < ps.size(); ++p) {
        const auto st = make_stencil<D>(ps.position[p], h, grid.resolution, p);
        Vec<D> v = Vec<D>::Zero();
        Mat<D> b = Mat<D>::Zero();
        st.for_each([&](const Veci<D>& off) {
            const double w = st.weight(off);
            const Vec<D>& vi = grid.velocity[grid.index(st.base + off)];
            v += w * vi;
            b += w * vi * st.offset(off, h).transpose();
        });
        const Mat<D> c = inertia * b;
        ps.velocity[p] = v;
        ps.affine[p] = c;
        ps.position[p] += dt * v;
        ps.deformation[p] = (Mat<D>::Identity() + dt * c) * ps.deformation[p];
        const double j = det(ps.deformation[p]);
        if (!(j > 0.0)) {
            std::ostringstream os;
            os << "deformation gradient inverted at particle " << p << " (step " << step_index << ", det F = " << j << ")";
            throw InversionError(os.str());
        }
    }
}

/// Everything a step needs besides the particles.
template <int D>
struct StepContext {
    SolidMaterial solid;
    FluidMaterial fluid;
    ActuationWaveform waveform;
    Vec<D> gravity = Vec<D>::Zero();
    BoundarySet<D> boundaries;
    double dt = 1e-5;
    int resolution = 64;
    double spacing = 1.0 / 64;
};

/// Kirchhoff stress of one particle at actuation pressure p_act.
template <int D>
Mat<D> particle_kirchhoff(const ParticleSet<D>& ps, std::size_t p, const StepContext<D>& ctx, double p_act) {
    const Mat<D>& f = ps.deformation[p];
    if (ps.phase[p] == Phase::Fluid) {
        const double j = det(f);
        try {
            return fluid_stress<D>(j, ps.affine[p], ctx.fluid, p_act) * j;
        } catch (const InversionError&) {
            std::ostringstream os;
            os << "fluid particle " << p << " inverted (J = " << j << ")";
            throw InversionError(os.str());
        }
    }
    try {
        return solid_kirchhoff<D>(f, ps.history_of(p), ctx.solid, ps.gamma[p]);
    } catch (const InversionError&) {
        std::ostringstream os;
        os << "solid particle " << p << " inverted (det F = " << det(f) << ")";
        throw InversionError(os.str());
    }
}

struct StepStats {
    long clamps = 0;
};

/// Advances particles by one time step starting at time t.
template <int D>
class Stepper {
public:
    explicit Stepper(const StepContext<D>& ctx) : ctx_(ctx), grid_(ctx.resolution, ctx.spacing) {
        for (const auto& e : ctx_.solid.prony.elements) coeff_.push_back(maxwell_coefficients(ctx_.dt, e.tau));
    }

    const StepContext<D>& context() const { return ctx_; }
    StepContext<D>& context() { return ctx_; }
    const GridField<D>& grid() const { return grid_; }

    StepStats step(ParticleSet<D>& ps, double t, long step_index) {
        const std::size_t n = ps.size();
        const double p_act = sample_actuation(ctx_.waveform, t);
        tau_.resize(n);
        for (std::size_t p = 0; p < n; ++p) tau_[p] = particle_kirchhoff<D>(ps, p, ctx_, p_act);

        const bool visco = ps.n_elements > 0;
        if (visco) {
            s_old_.resize(n);
            for (std::size_t p = 0; p < n; ++p)
                if (ps.phase[p] != Phase::Fluid)
                    s_old_[p] = maxwell_input<D>(ps.deformation[p], solid_moduli<D>(ctx_.solid, ps.gamma[p]).mu);
        }

        particle_to_grid_kirchhoff<D>(ps, tau_, grid_, ctx_.dt);
        StepStats stats;
        stats.clamps = grid_update<D>(grid_, ctx_.gravity, ctx_.boundaries, ctx_.dt);
        grid_to_particle<D>(grid_, ps, ctx_.dt, step_index);

        if (visco) {
            for (std::size_t p = 0; p < n; ++p) {
                if (ps.phase[p] == Phase::Fluid) continue;
                const Mat<D> s_new =
                    maxwell_input<D>(ps.deformation[p], solid_moduli<D>(ctx_.solid, ps.gamma[p]).mu);
                const Mat<D> ds = s_new - s_old_[p];
                Mat<D>* h = ps.history_of(p);
                for (int k = 0; k < ps.n_elements; ++k) {
                    const auto& c = coeff_[static_cast<std::size_t>(k)];
                    h[k] = c.decay * h[k] + c.gain * ds;
                }
            }
        }
        return stats;
    }

    const std::vector<MaxwellCoefficients>& coefficients() const { return coeff_; }

private:
    StepContext<D> ctx_;
    GridField<D> grid_;
    MatList<D> tau_;
    MatList<D> s_old_;
    std::vector<MaxwellCoefficients> coeff_;
};

// --- CFL ---------------------------------------------------------------------

struct WaveSpeed {
    std::string name;
    double speed = 0.0;  // [m/s]
};

struct StabilityReport {
    std::vector<WaveSpeed> speeds;
    double dt_max = 0.0;
    bool dt_ok = true;  // configured dt <= dt_max
};

/// c = sqrt(K_eff / rho)
inline double wave_speed(double effective_modulus, double density) {
    if (!(effective_modulus > 0.0)) throw ParameterError("wave speed needs a positive modulus");
    if (!(density > 0.0)) throw ParameterError("wave speed needs a positive density");
    return std::sqrt(effective_modulus / density);
}

/// Longitudinal wave speed of the solid at its instantaneous (unrelaxed)
/// shear modulus mu (g_inf + sum g_i).
template <int D>
double solid_wave_speed(const SolidMaterial& m) {
    const double bulk = m.bulk_modulus<D>();
    if (!(bulk > 0.0)) throw ParameterError("solid bulk modulus must be positive");
    const double mu_inst = m.mu * (m.prony.g_inf + m.prony.sum_g());
    return wave_speed(bulk + 2.0 * mu_inst * (1.0 - 1.0 / D), m.density);
}

inline double fluid_wave_speed(const FluidMaterial& m) { return wave_speed(m.bulk_modulus, m.density); }

template <int D>
StabilityReport stable_dt(const SolidMaterial& solid, const FluidMaterial& fluid, double h, double dt,
                          double safety = 0.5) {
    if (!(h > 0.0)) throw ParameterError("grid spacing must be positive");
    StabilityReport r;
    r.speeds.push_back({"solid", solid_wave_speed<D>(solid)});
    r.speeds.push_back({"fluid", fluid_wave_speed(fluid)});
    double cmax = 0.0;
    for (const auto& s : r.speeds) cmax = std::max(cmax, s.speed);
    r.dt_max = safety * h / cmax;
    r.dt_ok = dt <= r.dt_max;
    return r;
}

}  // namespace soro
