// Command-line front end.
//
//   soro optimize <scenario|manifest.json> [--max-iters N] [--resume state.json]
//   soro simulate <scenario> [--design volume]
//   soro gradcheck <scenario> [--indices i,j,...] [--delta d]
//   soro fit-prony <curve.csv> --terms N
//   soro surface <volume> [--level 0.5]
//
// Common flags: --out <dir> (default $SORO_OUT_DIR or ./soro_out),
// --deterministic. Failures print one line "error: <code>: <message>" to
// stderr and exit 1; usage errors exit 2.

#include "soro/manifest.hpp"
#include "soro/soro.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace soro;

namespace {

struct Common {
    std::string out;
    bool deterministic = false;
};

void print_kv(const std::string& key, const std::string& value) { std::cout << key << " = " << value << "\n"; }
void print_kv(const std::string& key, double value) { print_kv(key, io::format_double(value)); }

template <int D>
void export_design(const Problem<D>& prob, std::span<const double> phi, const fs::path& dir, const std::string& stem,
                   std::map<std::string, std::string>& outputs) {
    const DesignField design = prob.design(phi);
    const DensityVolume vol = density_volume<D>(prob.scenario, prob.reference, design.gamma);
    io::atomic_write(dir / (stem + "_density.bin"), io::volume_to_binary(vol));
    outputs[stem + "_density"] = stem + "_density.bin";
    const SurfaceMesh mesh = extract_isosurface(vol, 0.5);
    if (D == 3) {
        io::atomic_write(dir / (stem + "_surface.stl"), io::mesh_to_stl(mesh, prob.scenario.name));
        outputs[stem + "_surface"] = stem + "_surface.stl";
    } else {
        io::atomic_write(dir / (stem + "_contour.csv"), io::mesh_to_polyline_csv(mesh));
        outputs[stem + "_surface"] = stem + "_contour.csv";
    }
}

template <int D>
int run_optimize(const Scenario& sc, const std::string& scenario_text, int max_iters, const std::string& resume,
                 const Common& c) {
    const fs::path dir = io::output_dir(c.out);
    io::prepare_output_dir(dir);
    Problem<D> prob = Problem<D>::build(sc);
    const bool deterministic = c.deterministic || sc.run.deterministic;
    const int limit = max_iters >= 0 ? max_iters : sc.optimization.max_iterations;

    Manifest manifest;
    manifest.command = "optimize";
    manifest.scenario_text = scenario_text;
    manifest.max_iterations = limit;
    manifest.deterministic = deterministic;

    OptimizerState state = initial_optimizer_state(sc, prob.design_size());
    if (!resume.empty()) {
        state = parse_optimizer_state(io::read_text(resume));
        if (state.phi.size() != prob.design_size()) throw ValidationError("resume file does not match the scenario");
    }
    std::clog << "[optimize] " << sc.name << ": " << prob.reference.size() << " particles, " << prob.design_size()
              << " design variables, " << prob.n_steps << " steps per forward run\n";

    auto persist = [&](const OptimizerState& s) {
        io::atomic_write(dir / "history.csv", s.history.csv(deterministic));
        if (deterministic) io::atomic_write(dir / "timing.csv", s.history.timing_csv());
        io::atomic_write(dir / "resume.json", optimizer_state_json(s));
    };
    OptimizeOptions opt;
    opt.max_iterations = limit;
    opt.on_iteration = [&](const OptimizerState& s) {
        persist(s);
        const auto& r = s.history.rows.back();
        std::clog << "[optimize] iter " << r.iter << " L = " << r.objective << " m, C = " << r.constraint
                  << ", lambda = " << r.lambda << ", rho = " << r.rho << "\n";
    };
    const OptimizeResult res = optimize<D>(prob, state, opt);
    persist(res.state);

    manifest.outputs["history"] = "history.csv";
    manifest.outputs["resume"] = "resume.json";
    if (deterministic) manifest.outputs["timing"] = "timing.csv";
    export_design<D>(prob, res.state.phi, dir, "final", manifest.outputs);
    if (!res.state.best_phi.empty()) export_design<D>(prob, res.state.best_phi, dir, "best", manifest.outputs);
    io::atomic_write(dir / "manifest.json", manifest_json(manifest));

    print_kv("iterations", std::to_string(res.state.history.size()));
    print_kv("converged", res.converged ? "true" : "false");
    if (!res.state.history.empty()) {
        print_kv("first_objective_m", res.state.history.rows.front().objective);
        print_kv("last_objective_m", res.state.history.rows.back().objective);
        print_kv("last_constraint", res.state.history.rows.back().constraint);
    }
    if (res.state.best_iteration >= 0) {
        print_kv("best_iteration", std::to_string(res.state.best_iteration));
        print_kv("best_objective_m", res.state.best_objective);
    }
    print_kv("output_dir", dir.string());
    if (res.failed) {
        std::cerr << "error: " << res.failure_code << ": " << res.failure << "\n";
        return 1;
    }
    return 0;
}

template <int D>
int run_simulate(const Scenario& sc, const std::string& design_path, const Common& c) {
    const fs::path dir = io::output_dir(c.out);
    io::prepare_output_dir(dir);
    const Problem<D> prob = Problem<D>::build(sc);
    std::vector<double> gamma;
    if (design_path.empty()) {
        gamma = prob.design(std::vector<double>(prob.design_size(), sc.optimization.initial_phi)).gamma;
    } else {
        gamma = design_from_volume<D>(sc, prob.reference, io::load_volume(design_path));
    }
    const auto stab = stable_dt<D>(prob.ctx.solid, prob.ctx.fluid, sc.grid.spacing_m, sc.time.dt_s, sc.time.cfl_safety);
    for (const auto& w : stab.speeds) print_kv("wave_speed_" + w.name + "_m_s", w.speed);
    print_kv("dt_max_s", stab.dt_max);
    if (!stab.dt_ok) std::clog << "[simulate] warning: dt exceeds the CFL limit\n";

    ForwardOptions<D> fo;
    fo.cog_stride = sc.run.cog_stride;
    fo.snapshot_every = sc.run.snapshot_every;
    fo.on_snapshot = [&](long k, const ParticleSet<D>& ps) {
        char name[64];
        std::snprintf(name, sizeof name, "snapshot_%08ld.csv", k);
        io::atomic_write(dir / "snapshots" / name, io::particles_csv<D>(ps));
    };
    const Trajectory<D> tr = run_forward<D>(prob, gamma, fo);

    std::ostringstream os;
    os << "t_s,xg_x,xg_y" << (D == 3 ? ",xg_z" : "") << "\n";
    for (std::size_t i = 0; i < tr.cog.size(); ++i) {
        os << io::format_double(tr.cog_time[i]);
        for (int a = 0; a < D; ++a) os << "," << io::format_double(tr.cog[i](a));
        os << "\n";
    }
    io::atomic_write(dir / "trajectory.csv", os.str());
    Manifest manifest;
    manifest.command = "simulate";
    manifest.scenario_text = write_scenario(sc);
    manifest.deterministic = c.deterministic || sc.run.deterministic;
    manifest.outputs["trajectory"] = "trajectory.csv";
    io::atomic_write(dir / "manifest.json", manifest_json(manifest));

    print_kv("objective_m", tr.objective);
    print_kv("design_mass_kg", tr.mass);
    print_kv("clamp_activations", std::to_string(tr.clamps));
    print_kv("seconds", c.deterministic ? 0.0 : tr.seconds);
    return 0;
}

template <int D>
int run_gradcheck(const Scenario& sc, std::vector<std::size_t> indices, double delta, bool dump, const Common& c) {
    const Problem<D> prob = Problem<D>::build(sc);
    const std::vector<double> phi(prob.design_size(), sc.optimization.initial_phi);
    const GradientResult<D> g = gradient<D>(prob, phi);
    if (indices.empty())
        for (std::size_t i = 0; i < 10; ++i) indices.push_back((2 * i + 1) * prob.design_size() / 20);
    const auto fd = finite_difference_check<D>(prob, phi, g.d_phi, indices, delta);
    print_kv("objective_m", g.forward.objective);
    print_kv("clamp_activations", std::to_string(g.stats.clamps));
    std::size_t pass = 0;
    std::cout << "index,adjoint,finite_difference,relative_error\n";
    for (const auto& e : fd) {
        std::cout << e.index << "," << io::format_double(e.adjoint) << "," << io::format_double(e.finite_difference)
                  << "," << io::format_double(e.relative_error) << "\n";
        if (e.relative_error < 1e-3) ++pass;
    }
    print_kv("within_1e-3", std::to_string(pass) + "/" + std::to_string(fd.size()));
    if (dump) {
        const fs::path dir = io::output_dir(c.out);
        io::prepare_output_dir(dir);
        std::ostringstream os;
        os << "design_index,d_gamma,d_phi\n";
        for (std::size_t i = 0; i < g.d_phi.size(); ++i)
            os << i << "," << io::format_double(g.d_gamma[i]) << "," << io::format_double(g.d_phi[i]) << "\n";
        io::atomic_write(dir / "gradient.csv", os.str());
    }
    return 0;
}

Scenario load_any(const std::string& path, std::string& text, int& max_iters, bool& deterministic) {
    if (fs::path(path).extension() == ".json") {
        const Manifest m = parse_manifest(io::read_text(path));
        text = m.scenario_text;
        if (max_iters < 0) max_iters = m.max_iterations;
        deterministic = deterministic || m.deterministic;
        return parse_scenario(text);
    }
    Scenario sc = load_scenario(path);
    text = write_scenario(sc);
    return sc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Topology optimization of pneumatic soft robots with MLS-MPM"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out", common.out, "output directory");
        sub->add_flag("--deterministic", common.deterministic, "byte-identical outputs (wall times written as 0)");
    };

    std::string path;
    int max_iters = -1;
    std::string resume;
    auto* opt = app.add_subcommand("optimize", "optimize a design");
    opt->add_option("scenario", path, "scenario file or manifest.json")->required()->check(CLI::ExistingFile);
    opt->add_option("--max-iters", max_iters, "iteration limit")->check(CLI::NonNegativeNumber);
    opt->add_option("--resume", resume, "resume state file")->check(CLI::ExistingFile);
    add_common(opt);

    std::string design;
    auto* sim = app.add_subcommand("simulate", "run one forward simulation");
    sim->add_option("scenario", path, "scenario file")->required()->check(CLI::ExistingFile);
    sim->add_option("--design", design, "density volume (binary or CSV)")->check(CLI::ExistingFile);
    add_common(sim);

    std::vector<std::size_t> indices;
    double delta = 1e-4;
    bool dump = false;
    auto* gc = app.add_subcommand("gradcheck", "compare adjoint and finite-difference gradients");
    gc->add_option("scenario", path, "scenario file")->required()->check(CLI::ExistingFile);
    gc->add_option("--indices", indices, "design indices to probe")->delimiter(',');
    gc->add_option("--delta", delta, "finite-difference step")->check(CLI::PositiveNumber);
    gc->add_flag("--dump-gradient", dump, "write gradient.csv");
    add_common(gc);

    int terms = 0;
    double tau_min = 0.0, tau_max = 0.0, omega_cap = 1e7;
    auto* fp = app.add_subcommand("fit-prony", "fit a Prony series to a master curve");
    fp->add_option("curve", path, "CSV omega_rad_s,G_storage,G_loss")->required()->check(CLI::ExistingFile);
    fp->add_option("--terms", terms, "number of Maxwell elements")->required()->check(CLI::PositiveNumber);
    fp->add_option("--tau-min", tau_min, "shortest relaxation time [s] (default 1/omega_max)");
    fp->add_option("--tau-max", tau_max, "longest relaxation time [s] (default 1/omega_min)");
    fp->add_option("--omega-cap", omega_cap, "ignore samples above this frequency [rad/s]");

    double level = 0.5;
    auto* sf = app.add_subcommand("surface", "extract the isosurface of a density volume");
    sf->add_option("volume", path, "density volume (binary or CSV)")->required()->check(CLI::ExistingFile);
    sf->add_option("--level", level, "iso level in (0, 1)")
        ->check(CLI::Validator([](std::string& s) -> std::string {
            double v = 0.0;
            if (!io::parse_double(s, v) || !(v > 0.0 && v < 1.0)) return "level must lie in (0, 1)";
            return {};
        }, "in (0,1)"));
    add_common(sf);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*opt) {
            std::string text;
            const Scenario sc = load_any(path, text, max_iters, common.deterministic);
            return sc.dimension == 2 ? run_optimize<2>(sc, text, max_iters, resume, common)
                                     : run_optimize<3>(sc, text, max_iters, resume, common);
        }
        if (*sim) {
            const Scenario sc = load_scenario(path);
            return sc.dimension == 2 ? run_simulate<2>(sc, design, common) : run_simulate<3>(sc, design, common);
        }
        if (*gc) {
            const Scenario sc = load_scenario(path);
            return sc.dimension == 2 ? run_gradcheck<2>(sc, indices, delta, dump, common)
                                     : run_gradcheck<3>(sc, indices, delta, dump, common);
        }
        if (*fp) {
            const auto curve = io::load_master_curve(path);
            const double wmin = curve.samples.front().omega, wmax = curve.samples.back().omega;
            const auto r = prony::fit_prony(curve, terms, tau_min > 0.0 ? tau_min : 1.0 / std::min(wmax, omega_cap),
                                            tau_max > 0.0 ? tau_max : 1.0 / wmin, {omega_cap});
            std::cout << prony::to_scenario_block(r.series);
            print_kv("residual", r.error);
            print_kv("samples_used", std::to_string(r.samples_used));
            return 0;
        }
        if (*sf) {
            const DensityVolume vol = io::load_volume(path);
            const SurfaceMesh mesh = extract_isosurface(vol, level);
            const fs::path dir = io::output_dir(common.out);
            io::prepare_output_dir(dir);
            const std::string file = vol.dimension == 3 ? "surface.stl" : "contour.csv";
            io::atomic_write(dir / file, vol.dimension == 3 ? io::mesh_to_stl(mesh) : io::mesh_to_polyline_csv(mesh));
            print_kv("vertices", std::to_string(mesh.vertices.size()));
            print_kv(vol.dimension == 3 ? "triangles" : "segments",
                     std::to_string(vol.dimension == 3 ? mesh.triangles.size() : mesh.segments.size()));
            print_kv("components", std::to_string(mesh.components));
            print_kv("watertight", mesh.watertight ? "true" : "false");
            print_kv("enclosed", enclosed_measure(mesh));
            print_kv("file", (dir / file).string());
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
