#pragma once

// Small fixtures shared by the unit tests and the acceptance binary.

#include "soro/soro.hpp"

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

namespace soro::test {

inline std::filesystem::path source_dir() { return SORO_SOURCE_DIR; }

inline std::filesystem::path scenario_path(const std::string& name) {
    return source_dir() / "scenarios" / (name + ".scenario");
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("soro_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

/// Uniformly random point inside [lo, hi]^D.
template <int D>
Vec<D> random_point(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Vec<D> x;
    for (int a = 0; a < D; ++a) x(a) = u(rng);
    return x;
}

/// Block of particles on a lattice, all solid wall material with unit gamma.
template <int D>
ParticleSet<D> solid_block(const Vec<D>& lo, const Veci<D>& count, double spacing, const SolidMaterial& m) {
    ParticleSet<D> ps;
    ps.n_elements = static_cast<int>(m.prony.elements.size());
    const double vol = std::pow(spacing, D);
    Veci<D> idx = Veci<D>::Zero();
    while (true) {
        ps.add(lo + (idx.template cast<double>().array() + 0.5).matrix() * spacing, vol, Phase::SolidWall, -1);
        ps.mass.back() = m.density * vol;
        int a = 0;
        for (; a < D; ++a) {
            if (++idx(a) < count(a)) break;
            idx(a) = 0;
        }
        if (a == D) break;
    }
    return ps;
}

inline SolidMaterial soft_solid() { return SolidMaterial::from_youngs(0.44e6, 0.4, 1.07e3); }

/// Waveform that is zero at all times.
inline ActuationWaveform no_actuation() {
    ActuationWaveform w;
    w.times = {0.0};
    w.pressures = {0.0};
    w.period = 1.0;
    return w;
}

template <int D>
StepContext<D> plain_context(int resolution, double h, double dt) {
    StepContext<D> c;
    c.solid = soft_solid();
    c.waveform = no_actuation();
    c.dt = dt;
    c.resolution = resolution;
    c.spacing = h;
    return c;
}

/// Relative momentum drift per step over `steps` steps of an elastic block
/// thrown with a spin, gravity and boundaries off. Also checks that the grid
/// mass equals the particle mass after every scatter.
struct ConservationReport {
    double max_momentum_drift = 0.0;  // max over steps of |p_k+1 - p_k| / |p_0|
    double max_mass_error = 0.0;      // max over steps of |M_grid - M_particles| / M_particles
};

template <int D>
ConservationReport conservation_run(int steps) {
    const double h = 1.0 / 32.0;
    auto ctx = plain_context<D>(32, h, 2e-5);
    ctx.solid.density = 1.0e3;
    Veci<D> count = Veci<D>::Constant(D == 2 ? 12 : 6);
    auto ps = solid_block<D>(Vec<D>::Constant(0.35), count, 0.5 * h, ctx.solid);
    const Vec<D> c = ps.position[ps.size() / 2];
    for (std::size_t p = 0; p < ps.size(); ++p) {
        Vec<D> v = Vec<D>::Zero();
        v(0) = 0.3;
        const Vec<D> r = ps.position[p] - c;
        v(0) += -2.0 * r(1);
        v(1) += 2.0 * r(0);
        ps.velocity[p] = v;
        ps.deformation[p] = Mat<D>::Identity() * (1.0 + 0.01 * std::sin(31.0 * r(0)));
    }
    Stepper<D> stepper(ctx);
    ConservationReport rep;
    const Vec<D> p0 = ps.total_momentum();
    const double m0 = ps.total_mass();
    Vec<D> prev = p0;
    for (int k = 0; k < steps; ++k) {
        stepper.step(ps, k * ctx.dt, k);
        rep.max_mass_error = std::max(rep.max_mass_error, std::abs(stepper.grid().total_mass() - m0) / m0);
        const Vec<D> now = ps.total_momentum();
        rep.max_momentum_drift = std::max(rep.max_momentum_drift, (now - prev).norm() / p0.norm());
        prev = now;
    }
    return rep;
}

/// Radial test field 1 - r / (2 R): equals 0.5 on the sphere of radius R.
inline DensityVolume radial_volume(int dimension, std::size_t n, double spacing, double radius) {
    DensityVolume v;
    v.dimension = dimension;
    v.dims = {n, n, dimension == 3 ? n : 1};
    v.spacing = spacing;
    const double c = 0.5 * spacing * double(n - 1);
    v.origin = {-c, -c, dimension == 3 ? -c : 0.0};
    v.values.resize(v.count());
    for (std::size_t k = 0; k < v.dims[2]; ++k)
        for (std::size_t j = 0; j < v.dims[1]; ++j)
            for (std::size_t i = 0; i < v.dims[0]; ++i) {
                Eigen::Vector3d x = v.position(i, j, k);
                if (dimension == 2) x.z() = 0.0;
                v.values[v.index(i, j, k)] = std::clamp(1.0 - x.norm() / (2.0 * radius), 0.0, 1.0);
            }
    return v;
}

struct CliResult {
    int code = -1;
    std::string out;  // stdout
    std::string err;  // stderr
};

/// Runs the command-line tool with a shell-quoted argument string.
inline CliResult run_cli(const std::string& args) {
    static int serial = 0;
    const auto err_file = std::filesystem::temp_directory_path() / ("soro_cli_err_" + std::to_string(++serial));
    const std::string cmd = std::string("\"") + SORO_CLI + "\" " + args + " 2>" + err_file.string();
    CliResult r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (std::filesystem::exists(err_file)) {
        r.err = io::read_text(err_file);
        std::filesystem::remove(err_file);
    }
    return r;
}

/// Value of a "key = value" line in CLI output, empty if absent.
inline std::string cli_value(const std::string& out, const std::string& key) {
    const std::string tag = key + " = ";
    std::size_t at = 0;
    while ((at = out.find(tag, at)) != std::string::npos) {
        if (at == 0 || out[at - 1] == '\n') {
            const auto end = out.find('\n', at);
            return out.substr(at + tag.size(), end - at - tag.size());
        }
        at += tag.size();
    }
    return {};
}

}  // namespace soro::test
