#pragma once

// Scenario files: a sectioned key-value text format with units in the key
// names, e.g.
//
//   [grid]
//   resolution = 64
//   spacing_m = 2.5e-3
//
// Every key is declared once in the field table below together with its
// default; keys without a default are required. Vectors are comma-separated
// and carry one component per spatial dimension.

#include "soro/constitutive.hpp"
#include "soro/design.hpp"
#include "soro/error.hpp"
#include "soro/io.hpp"
#include "soro/mpm.hpp"
#include "soro/prony.hpp"
#include "soro/surface.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace soro {

enum class GravityRamp { Off, Stair, Linear };

struct Scenario {
    std::string name = "unnamed";
    int dimension = 2;

    struct Grid {
        int resolution = 0;
        double spacing_m = 0.0;
        bool operator==(const Grid&) const = default;
    } grid;

    struct Body {
        std::vector<double> origin_m;        // lower corner of the outer box
        std::vector<double> size_m;
        std::vector<double> chamber_size_m;  // centered in the outer box plus offset
        std::vector<double> chamber_offset_m;
        double wall_thickness_m = 0.0;
        int particles_per_cell = 2;          // per axis
        bool operator==(const Body&) const = default;
    } body;

    struct Solid {
        double density_kg_m3 = 1.07e3;
        double youngs_modulus_pa = 0.44e6;
        double poisson_ratio = 0.4;
        double void_floor = 1e-6;
        double prony_g_inf = 1.0;
        std::vector<double> prony_g;
        std::vector<double> prony_tau_s;
        std::string prony_reference = "equilibrium";  // or "instantaneous"
        double prony_cutoff_factor = 10.0;
        bool operator==(const Solid&) const = default;
    } solid;

    struct Fluid {
        double bulk_modulus_pa = 1.4e5;
        double shear_viscosity_pa_s = 1.83e-5;
        double volume_viscosity_pa_s = 0.0;
        double density_kg_m3 = 1.0e2;
        bool operator==(const Fluid&) const = default;
    } fluid;

    struct Actuation {
        std::string waveform = "synthetic";  // or a CSV path
        double peak_pa = 80e3;
        double frequency_hz = 5.0;
        double rise_time_s = 0.01;
        bool operator==(const Actuation&) const = default;
    } actuation;

    struct Time {
        double dt_s = 1e-5;
        double t_start_s = 0.0;
        double t_end_s = 0.0;
        double cfl_safety = 0.5;
        bool operator==(const Time&) const = default;
    } time;

    struct Boundary {
        bool ground = true;
        double ground_height_m = 0.0;
        bool walls = false;
        double wall_gap_m = 0.0;
        bool domain = true;  // no-slip planes two cells inside the grid faces
        double gravity_m_s2 = 9.8;
        double slope_percent = 0.0;
        bool operator==(const Boundary&) const = default;
    } boundary;

    std::vector<double> objective_direction;

    struct Optimization {
        double filter_radius_m = 0.0;
        double beta = 8.0;
        double c_max = 0.0125;
        double learning_rate = 0.02;
        int max_iterations = 100;
        std::vector<int> symmetry_axes;
        std::string gravity_ramp = "off";  // off | stair | linear
        int gravity_ramp_interval = 20;
        int gravity_ramp_end = 200;
        double penalty_initial = 1.0;
        double penalty_growth = 2.0;
        int penalty_start_iteration = 50;
        int penalty_interval = 50;
        double multiplier_initial = 0.0;
        double adam_beta1 = 0.9;
        double adam_beta2 = 0.999;
        double adam_epsilon = 1e-8;
        double initial_phi = 0.0;
        double convergence_tolerance = 1e-3;
        double convergence_eps_abs = 1e-9;
        double feasibility_tolerance = 1e-3;
        bool operator==(const Optimization&) const = default;
    } optimization;

    struct Checkpoint {
        int max_checkpoints = 0;  // 0: no budget, use ceil(sqrt(N))
        bool operator==(const Checkpoint&) const = default;
    } checkpoint;

    struct Run {
        bool deterministic = false;  // history wall times written as 0
        int cog_stride = 100;     // steps between recorded centre-of-gravity samples
        int snapshot_every = 0;   // steps between particle snapshots, 0 = off
        bool operator==(const Run&) const = default;
    } run;

    bool operator==(const Scenario&) const = default;

    long total_steps() const { return std::lround(time.t_end_s / time.dt_s); }
    long start_step() const { return std::lround(time.t_start_s / time.dt_s); }
    int vertical_axis() const { return dimension - 1; }

    GravityRamp ramp() const {
        if (optimization.gravity_ramp == "stair") return GravityRamp::Stair;
        if (optimization.gravity_ramp == "linear") return GravityRamp::Linear;
        return GravityRamp::Off;
    }
};

namespace detail {

struct BadValue : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FieldDef {
    std::string section;
    std::string key;
    bool required = false;
    std::function<void(Scenario&, const std::string&)> parse;  // throws BadValue on type errors
    std::function<std::string(const Scenario&)> print;
};

inline std::string join(const std::vector<std::string>& parts) {
    std::string s;
    for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? ", " : "") + parts[i];
    return s;
}

template <typename T>
T parse_value(const std::string& text);

template <>
inline double parse_value<double>(const std::string& text) {
    double v = 0.0;
    if (!io::parse_double(text, v) || !std::isfinite(v)) throw BadValue("expected a number");
    return v;
}

template <>
inline int parse_value<int>(const std::string& text) {
    const auto s = io::trim(text);
    int v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) throw BadValue("expected an integer");
    return v;
}

template <>
inline bool parse_value<bool>(const std::string& text) {
    const auto s = io::trim(text);
    if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "off" || s == "no" || s == "0") return false;
    throw BadValue("expected true or false");
}

template <>
inline std::string parse_value<std::string>(const std::string& text) {
    const auto s = io::trim(text);
    if (s.empty()) throw BadValue("expected a non-empty string");
    return std::string(s);
}

template <>
inline std::vector<double> parse_value<std::vector<double>>(const std::string& text) {
    std::vector<double> out;
    if (io::trim(text).empty()) return out;
    for (auto part : io::split(text, ',')) out.push_back(parse_value<double>(std::string(part)));
    return out;
}

template <>
inline std::vector<int> parse_value<std::vector<int>>(const std::string& text) {
    std::vector<int> out;
    if (io::trim(text).empty()) return out;
    for (auto part : io::split(text, ',')) out.push_back(parse_value<int>(std::string(part)));
    return out;
}

inline std::string print_value(double v) { return io::format_double(v); }
inline std::string print_value(int v) { return std::to_string(v); }
inline std::string print_value(bool v) { return v ? "true" : "false"; }
inline std::string print_value(const std::string& v) { return v; }
inline std::string print_value(const std::vector<double>& v) {
    std::vector<std::string> p;
    for (double x : v) p.push_back(io::format_double(x));
    return join(p);
}
inline std::string print_value(const std::vector<int>& v) {
    std::vector<std::string> p;
    for (int x : v) p.push_back(std::to_string(x));
    return join(p);
}

template <typename T, typename Access>
FieldDef field(std::string section, std::string key, Access access, bool required = false) {
    FieldDef f;
    f.section = std::move(section);
    f.key = std::move(key);
    f.required = required;
    f.parse = [access](Scenario& s, const std::string& text) { access(s) = parse_value<T>(text); };
    f.print = [access](const Scenario& s) { return print_value(access(const_cast<Scenario&>(s))); };
    return f;
}

#define SORO_FIELD(T, section, key, member, ...) \
    field<T>(section, key, [](Scenario& s) -> T& { return s.member; } __VA_OPT__(, ) __VA_ARGS__)

inline const std::vector<FieldDef>& scenario_fields() {
    using VD = std::vector<double>;
    using VI = std::vector<int>;
    using S = std::string;
    static const std::vector<FieldDef> fields = {
        SORO_FIELD(S, "scenario", "name", name),
        SORO_FIELD(int, "scenario", "dimension", dimension, true),

        SORO_FIELD(int, "grid", "resolution", grid.resolution, true),
        SORO_FIELD(double, "grid", "spacing_m", grid.spacing_m, true),

        SORO_FIELD(VD, "body", "origin_m", body.origin_m, true),
        SORO_FIELD(VD, "body", "size_m", body.size_m, true),
        SORO_FIELD(VD, "body", "chamber_size_m", body.chamber_size_m, true),
        SORO_FIELD(VD, "body", "chamber_offset_m", body.chamber_offset_m),
        SORO_FIELD(double, "body", "wall_thickness_m", body.wall_thickness_m, true),
        SORO_FIELD(int, "body", "particles_per_cell", body.particles_per_cell),

        SORO_FIELD(double, "solid", "density_kg_m3", solid.density_kg_m3),
        SORO_FIELD(double, "solid", "youngs_modulus_pa", solid.youngs_modulus_pa),
        SORO_FIELD(double, "solid", "poisson_ratio", solid.poisson_ratio),
        SORO_FIELD(double, "solid", "void_floor", solid.void_floor),
        SORO_FIELD(double, "solid", "prony.g_inf", solid.prony_g_inf),
        SORO_FIELD(VD, "solid", "prony.g", solid.prony_g),
        SORO_FIELD(VD, "solid", "prony.tau_s", solid.prony_tau_s),
        SORO_FIELD(S, "solid", "prony.reference", solid.prony_reference),
        SORO_FIELD(double, "solid", "prony.cutoff_factor", solid.prony_cutoff_factor),

        SORO_FIELD(double, "fluid", "bulk_modulus_pa", fluid.bulk_modulus_pa),
        SORO_FIELD(double, "fluid", "shear_viscosity_pa_s", fluid.shear_viscosity_pa_s),
        SORO_FIELD(double, "fluid", "volume_viscosity_pa_s", fluid.volume_viscosity_pa_s),
        SORO_FIELD(double, "fluid", "density_kg_m3", fluid.density_kg_m3),

        SORO_FIELD(S, "actuation", "waveform", actuation.waveform),
        SORO_FIELD(double, "actuation", "peak_pa", actuation.peak_pa),
        SORO_FIELD(double, "actuation", "frequency_hz", actuation.frequency_hz),
        SORO_FIELD(double, "actuation", "rise_time_s", actuation.rise_time_s),

        SORO_FIELD(double, "time", "dt_s", time.dt_s, true),
        SORO_FIELD(double, "time", "t_start_s", time.t_start_s),
        SORO_FIELD(double, "time", "t_end_s", time.t_end_s, true),
        SORO_FIELD(double, "time", "cfl_safety", time.cfl_safety),

        SORO_FIELD(bool, "boundary", "ground", boundary.ground),
        SORO_FIELD(double, "boundary", "ground_height_m", boundary.ground_height_m),
        SORO_FIELD(bool, "boundary", "walls", boundary.walls),
        SORO_FIELD(double, "boundary", "wall_gap_m", boundary.wall_gap_m),
        SORO_FIELD(bool, "boundary", "domain", boundary.domain),
        SORO_FIELD(double, "boundary", "gravity_m_s2", boundary.gravity_m_s2),
        SORO_FIELD(double, "boundary", "slope_percent", boundary.slope_percent),

        SORO_FIELD(VD, "objective", "direction", objective_direction),

        SORO_FIELD(double, "optimization", "filter_radius_m", optimization.filter_radius_m),
        SORO_FIELD(double, "optimization", "beta", optimization.beta),
        SORO_FIELD(double, "optimization", "c_max", optimization.c_max),
        SORO_FIELD(double, "optimization", "learning_rate", optimization.learning_rate),
        SORO_FIELD(int, "optimization", "max_iterations", optimization.max_iterations),
        SORO_FIELD(VI, "optimization", "symmetry_axes", optimization.symmetry_axes),
        SORO_FIELD(S, "optimization", "gravity_ramp", optimization.gravity_ramp),
        SORO_FIELD(int, "optimization", "gravity_ramp.interval", optimization.gravity_ramp_interval),
        SORO_FIELD(int, "optimization", "gravity_ramp.end_iteration", optimization.gravity_ramp_end),
        SORO_FIELD(double, "optimization", "penalty.initial", optimization.penalty_initial),
        SORO_FIELD(double, "optimization", "penalty.growth", optimization.penalty_growth),
        SORO_FIELD(int, "optimization", "penalty.start_iteration", optimization.penalty_start_iteration),
        SORO_FIELD(int, "optimization", "penalty.interval", optimization.penalty_interval),
        SORO_FIELD(double, "optimization", "multiplier.initial", optimization.multiplier_initial),
        SORO_FIELD(double, "optimization", "adam.beta1", optimization.adam_beta1),
        SORO_FIELD(double, "optimization", "adam.beta2", optimization.adam_beta2),
        SORO_FIELD(double, "optimization", "adam.epsilon", optimization.adam_epsilon),
        SORO_FIELD(double, "optimization", "initial_phi", optimization.initial_phi),
        SORO_FIELD(double, "optimization", "convergence.tolerance", optimization.convergence_tolerance),
        SORO_FIELD(double, "optimization", "convergence.eps_abs", optimization.convergence_eps_abs),
        SORO_FIELD(double, "optimization", "feasibility_tolerance", optimization.feasibility_tolerance),

        SORO_FIELD(int, "checkpoint", "max_checkpoints", checkpoint.max_checkpoints),

        SORO_FIELD(bool, "run", "deterministic", run.deterministic),
        SORO_FIELD(int, "run", "cog_stride", run.cog_stride),
        SORO_FIELD(int, "run", "snapshot_every", run.snapshot_every),
    };
    return fields;
}

#undef SORO_FIELD

inline void fail_validation(const std::string& msg) { throw ValidationError("scenario: " + msg); }

inline bool box_inside(const std::vector<double>& lo_in, const std::vector<double>& hi_in,
                       const std::vector<double>& lo_out, const std::vector<double>& hi_out, bool strict) {
    for (std::size_t a = 0; a < lo_in.size(); ++a) {
        if (strict ? !(lo_in[a] > lo_out[a] && hi_in[a] < hi_out[a])
                   : !(lo_in[a] >= lo_out[a] && hi_in[a] <= hi_out[a]))
            return false;
    }
    return true;
}

}  // namespace detail

inline Scenario default_scenario(int dimension = 2) {
    Scenario s;
    s.dimension = dimension;
    s.body.chamber_offset_m.assign(static_cast<std::size_t>(dimension), 0.0);
    s.objective_direction.assign(static_cast<std::size_t>(dimension), 0.0);
    s.objective_direction[0] = 1.0;
    return s;
}

/// Lattice spacing of the particle seeding.
inline double seed_spacing(const Scenario& s) { return s.grid.spacing_m / s.body.particles_per_cell; }

struct ChamberBox {
    std::vector<double> lo, hi;
};

inline ChamberBox chamber_box(const Scenario& s) {
    ChamberBox c;
    for (int a = 0; a < s.dimension; ++a) {
        const auto i = static_cast<std::size_t>(a);
        const double center = s.body.origin_m[i] + 0.5 * s.body.size_m[i] + s.body.chamber_offset_m[i];
        c.lo.push_back(center - 0.5 * s.body.chamber_size_m[i]);
        c.hi.push_back(center + 0.5 * s.body.chamber_size_m[i]);
    }
    return c;
}

inline void validate(const Scenario& s) {
    using detail::fail_validation;
    if (s.dimension != 2 && s.dimension != 3) fail_validation("dimension must be 2 or 3");
    if (s.grid.resolution < 8) fail_validation("grid.resolution must be >= 8");
    if (!(s.grid.spacing_m > 0.0)) fail_validation("grid.spacing_m must be positive");
    const auto d = static_cast<std::size_t>(s.dimension);
    auto check_len = [&](const std::vector<double>& v, const char* key) {
        if (v.size() != d) fail_validation(std::string(key) + " needs " + std::to_string(d) + " components");
    };
    check_len(s.body.origin_m, "body.origin_m");
    check_len(s.body.size_m, "body.size_m");
    check_len(s.body.chamber_size_m, "body.chamber_size_m");
    check_len(s.body.chamber_offset_m, "body.chamber_offset_m");
    check_len(s.objective_direction, "objective.direction");
    if (s.body.particles_per_cell < 1) fail_validation("body.particles_per_cell must be >= 1");
    for (std::size_t a = 0; a < d; ++a) {
        if (!(s.body.size_m[a] > 0.0)) fail_validation("body.size_m must be positive");
        if (!(s.body.chamber_size_m[a] >= 0.0)) fail_validation("body.chamber_size_m must be >= 0");
    }

    // body within the grid, leaving two cells for the stencil and boundary planes
    const double h = s.grid.spacing_m;
    std::vector<double> body_lo = s.body.origin_m, body_hi(d), grid_lo(d, 2.0 * h), grid_hi(d, (s.grid.resolution - 2) * h);
    for (std::size_t a = 0; a < d; ++a) body_hi[a] = body_lo[a] + s.body.size_m[a];
    if (!detail::box_inside(body_lo, body_hi, grid_lo, grid_hi, false))
        fail_validation("body does not fit inside the grid with a two-cell margin");

    const bool has_chamber = std::all_of(s.body.chamber_size_m.begin(), s.body.chamber_size_m.end(),
                                         [](double x) { return x > 0.0; });
    if (has_chamber) {
        const auto c = chamber_box(s);
        if (!detail::box_inside(c.lo, c.hi, body_lo, body_hi, true)) fail_validation("chamber is not strictly inside the body");
        std::vector<double> wlo = c.lo, whi = c.hi;
        for (std::size_t a = 0; a < d; ++a) {
            wlo[a] -= s.body.wall_thickness_m;
            whi[a] += s.body.wall_thickness_m;
        }
        if (!detail::box_inside(wlo, whi, body_lo, body_hi, false))
            fail_validation("chamber plus wall thickness does not fit inside the body");
        if (s.body.wall_thickness_m < seed_spacing(s) * (1.0 - 1e-9))
            fail_validation("body.wall_thickness_m must be at least one particle spacing");
    }

    validate(SimClock{s.time.dt_s, 0, s.time.t_start_s, s.time.t_end_s});
    if (!(s.time.t_start_s >= 0.0)) fail_validation("time.t_start_s must be >= 0");
    if (std::abs(s.time.t_end_s / s.time.dt_s - std::round(s.time.t_end_s / s.time.dt_s)) > 1e-6 ||
        std::abs(s.time.t_start_s / s.time.dt_s - std::round(s.time.t_start_s / s.time.dt_s)) > 1e-6)
        fail_validation("time.t_start_s and time.t_end_s must be whole multiples of time.dt_s");
    if (!(s.time.cfl_safety > 0.0 && s.time.cfl_safety <= 1.0)) fail_validation("time.cfl_safety must lie in (0, 1]");

    if (s.solid.prony_g.size() != s.solid.prony_tau_s.size())
        fail_validation("solid.prony.g and solid.prony.tau_s must have the same length");
    if (s.solid.prony_reference != "equilibrium" && s.solid.prony_reference != "instantaneous")
        fail_validation("solid.prony.reference must be 'equilibrium' or 'instantaneous'");
    if (!(s.solid.poisson_ratio > -1.0 && s.solid.poisson_ratio < 0.5)) fail_validation("solid.poisson_ratio must lie in (-1, 0.5)");
    if (!(s.solid.youngs_modulus_pa > 0.0)) fail_validation("solid.youngs_modulus_pa must be positive");

    if (s.actuation.waveform == "synthetic") {
        if (!(s.actuation.frequency_hz > 0.0) || !(s.actuation.rise_time_s > 0.0))
            fail_validation("synthetic actuation needs positive frequency_hz and rise_time_s");
    } else if (!std::filesystem::exists(s.actuation.waveform)) {
        fail_validation("actuation waveform file not found: " + s.actuation.waveform);
    }

    if (s.boundary.walls && !(s.boundary.wall_gap_m > 0.0)) fail_validation("boundary.wall_gap_m must be positive");
    if (s.boundary.ground && s.boundary.ground_height_m > s.body.origin_m[d - 1] + 1e-12)
        fail_validation("body starts below the ground plane");
    if (!(s.boundary.gravity_m_s2 >= 0.0)) fail_validation("boundary.gravity_m_s2 must be >= 0");

    double norm = 0.0;
    for (double x : s.objective_direction) norm += x * x;
    if (std::abs(std::sqrt(norm) - 1.0) > 1e-9) fail_validation("objective.direction must be a unit vector");

    const auto& o = s.optimization;
    if (!(o.beta > 0.0)) fail_validation("optimization.beta must be positive");
    if (!(o.c_max >= 0.0 && o.c_max <= 0.25)) fail_validation("optimization.c_max must lie in [0, 0.25]");
    if (!(o.learning_rate > 0.0)) fail_validation("optimization.learning_rate must be positive");
    if (o.max_iterations < 0) fail_validation("optimization.max_iterations must be >= 0");
    for (int a : o.symmetry_axes)
        if (a < 0 || a >= s.dimension) fail_validation("optimization.symmetry_axes entries must be axis indices");
    if (o.gravity_ramp != "off" && o.gravity_ramp != "stair" && o.gravity_ramp != "linear")
        fail_validation("optimization.gravity_ramp must be off, stair or linear");
    if (o.gravity_ramp_interval < 1 || o.gravity_ramp_end < o.gravity_ramp_interval)
        fail_validation("optimization.gravity_ramp interval/end_iteration are inconsistent");
    if (!(o.penalty_initial > 0.0) || !(o.penalty_growth >= 1.0) || o.penalty_interval < 1 || o.penalty_start_iteration < 0)
        fail_validation("optimization.penalty settings are invalid");
    if (!(o.multiplier_initial >= 0.0)) fail_validation("optimization.multiplier.initial must be >= 0");
    if (!(o.adam_beta1 >= 0.0 && o.adam_beta1 < 1.0 && o.adam_beta2 >= 0.0 && o.adam_beta2 < 1.0 && o.adam_epsilon > 0.0))
        fail_validation("optimization.adam settings are invalid");
    if (!(o.initial_phi >= -1.0 && o.initial_phi <= 1.0)) fail_validation("optimization.initial_phi must lie in [-1, 1]");
    if (s.checkpoint.max_checkpoints < 0) fail_validation("checkpoint.max_checkpoints must be >= 0");
    if (s.run.cog_stride < 1) fail_validation("run.cog_stride must be >= 1");
    if (s.run.snapshot_every < 0) fail_validation("run.snapshot_every must be >= 0");
}

/// Parses scenario text. Relative waveform paths are resolved against
/// `base_dir` and stored absolute, so a written copy loads identically.
inline Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {}) {
    const auto& fields = detail::scenario_fields();
    std::map<std::string, const detail::FieldDef*> by_name;
    for (const auto& f : fields) by_name[f.section + "." + f.key] = &f;

    // dimension-dependent defaults need the dimension first
    int dimension = 0;
    std::vector<std::tuple<std::string, std::string, int>> entries;
    std::set<std::string> seen;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = io::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError("line " + std::to_string(line_no) + ": malformed section header");
            section = std::string(io::trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = std::string(io::trim(line.substr(0, eq)));
        const std::string value = std::string(io::trim(line.substr(eq + 1)));
        const std::string full = section.empty() ? key : section + "." + key;
        if (!by_name.count(full)) throw ParseError("unknown key '" + full + "' on line " + std::to_string(line_no));
        if (!seen.insert(full).second) throw ParseError("duplicate key '" + full + "' on line " + std::to_string(line_no));
        entries.emplace_back(full, value, line_no);
        if (full == "scenario.dimension") {
            try {
                dimension = detail::parse_value<int>(value);
            } catch (const detail::BadValue& why) {
                throw ParseError("key 'scenario.dimension' on line " + std::to_string(line_no) + ": " + why.what());
            }
        }
    }
    for (const auto& f : fields)
        if (f.required && !seen.count(f.section + "." + f.key))
            throw ParseError("missing required key '" + f.section + "." + f.key + "' (end of file, line " +
                             std::to_string(line_no) + ")");
    if (dimension != 2 && dimension != 3) throw ValidationError("scenario: dimension must be 2 or 3");

    Scenario s = default_scenario(dimension);
    for (const auto& [full, value, ln] : entries) {
        try {
            by_name.at(full)->parse(s, value);
        } catch (const detail::BadValue& why) {
            throw ParseError("key '" + full + "' on line " + std::to_string(ln) + ": " + why.what() + ", got '" + value + "'");
        }
    }
    if (s.actuation.waveform != "synthetic") {
        std::filesystem::path p = s.actuation.waveform;
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        s.actuation.waveform = std::filesystem::absolute(p).lexically_normal().string();
    }
    validate(s);
    return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    return parse_scenario(io::read_text(path), path.parent_path());
}

/// Full text of the scenario with every key, defaults included.
inline std::string write_scenario(const Scenario& s) {
    std::ostringstream os;
    std::string section;
    for (const auto& f : detail::scenario_fields()) {
        if (f.section != section) {
            os << (section.empty() ? "" : "\n") << "[" << f.section << "]\n";
            section = f.section;
        }
        os << f.key << " = " << f.print(s) << "\n";
    }
    return os.str();
}

// --- building simulation inputs --------------------------------------------------

/// Active Prony series after normalization and time-step truncation.
inline prony::PronySeries active_prony(const Scenario& s) {
    prony::PronySeries p;
    p.g_inf = s.solid.prony_g_inf;
    for (std::size_t i = 0; i < s.solid.prony_g.size(); ++i) p.elements.push_back({s.solid.prony_g[i], s.solid.prony_tau_s[i]});
    prony::validate(p);
    if (s.solid.prony_reference == "equilibrium") p = prony::normalized_to_equilibrium(p);
    return prony::truncate_for_dt(p, s.time.dt_s, s.solid.prony_cutoff_factor);
}

inline SolidMaterial solid_material(const Scenario& s) {
    SolidMaterial m = SolidMaterial::from_youngs(s.solid.youngs_modulus_pa, s.solid.poisson_ratio, s.solid.density_kg_m3);
    m.prony = active_prony(s);
    m.void_floor = s.solid.void_floor;
    validate(m);
    return m;
}

inline FluidMaterial fluid_material(const Scenario& s) {
    FluidMaterial f{s.fluid.bulk_modulus_pa, s.fluid.shear_viscosity_pa_s, s.fluid.volume_viscosity_pa_s,
                    s.fluid.density_kg_m3};
    validate(f);
    return f;
}

inline ActuationWaveform actuation_waveform(const Scenario& s) {
    if (s.actuation.waveform == "synthetic")
        return synthetic_square_waveform(s.actuation.peak_pa, s.actuation.frequency_hz, s.actuation.rise_time_s,
                                         s.time.t_start_s);
    return io::load_waveform(s.actuation.waveform, s.time.t_start_s);
}

template <int D>
Vec<D> to_vec(const std::vector<double>& v) {
    if (v.size() != static_cast<std::size_t>(D)) throw ParameterError("vector has the wrong number of components");
    Vec<D> out;
    for (int a = 0; a < D; ++a) out(a) = v[static_cast<std::size_t>(a)];
    return out;
}

/// Gravity vector of magnitude g, tilted by the slope so that travelling
/// along +x climbs.
template <int D>
Vec<D> gravity_vector(const Scenario& s, double g) {
    const double theta = std::atan(s.boundary.slope_percent / 100.0);
    Vec<D> v = Vec<D>::Zero();
    v(D - 1) = -g * std::cos(theta);
    v(0) = -g * std::sin(theta);
    return v;
}

template <int D>
Vec<D> body_center(const Scenario& s) {
    Vec<D> c;
    for (int a = 0; a < D; ++a)
        c(a) = s.body.origin_m[static_cast<std::size_t>(a)] + 0.5 * s.body.size_m[static_cast<std::size_t>(a)];
    return c;
}

template <int D>
BoundarySet<D> boundaries(const Scenario& s) {
    BoundarySet<D> b;
    const double h = s.grid.spacing_m;
    if (s.boundary.ground) {
        Vec<D> p = Vec<D>::Zero();
        p(D - 1) = s.boundary.ground_height_m;
        b.add(p, Vec<D>::Unit(D - 1));
    }
    if (s.boundary.walls) {
        const Vec<D> c = body_center<D>(s);
        Vec<D> left = c, right = c;
        left(0) -= 0.5 * s.boundary.wall_gap_m;
        right(0) += 0.5 * s.boundary.wall_gap_m;
        b.add(left, Vec<D>::Unit(0));
        b.add(right, -Vec<D>::Unit(0));
    }
    if (s.boundary.domain) {
        for (int a = 0; a < D; ++a) {
            b.add(Vec<D>::Unit(a) * (2.0 * h), Vec<D>::Unit(a));
            b.add(Vec<D>::Unit(a) * ((s.grid.resolution - 2) * h), -Vec<D>::Unit(a));
        }
    }
    return b;
}

template <int D>
StepContext<D> step_context(const Scenario& s, double gravity_magnitude) {
    if (s.dimension != D) throw ParameterError("scenario dimension does not match the instantiation");
    StepContext<D> c;
    c.solid = solid_material(s);
    c.fluid = fluid_material(s);
    c.waveform = actuation_waveform(s);
    c.gravity = gravity_vector<D>(s, gravity_magnitude);
    c.boundaries = boundaries<D>(s);
    c.dt = s.time.dt_s;
    c.resolution = s.grid.resolution;
    c.spacing = s.grid.spacing_m;
    return c;
}

/// Regular lattice seeding of the body box: particles inside the chamber are
/// air, those within the wall thickness around it are fixed solid, and the
/// rest are design particles (numbered in seeding order).
template <int D>
ParticleSet<D> seed_particles(const Scenario& s) {
    if (s.dimension != D) throw ParameterError("scenario dimension does not match the instantiation");
    ParticleSet<D> ps;
    ps.n_elements = static_cast<int>(active_prony(s).elements.size());
    const double sp = seed_spacing(s);
    const double vol = std::pow(sp, D);
    Veci<D> n;
    for (int a = 0; a < D; ++a) n(a) = static_cast<int>(std::lround(s.body.size_m[static_cast<std::size_t>(a)] / sp));
    const bool has_chamber = std::all_of(s.body.chamber_size_m.begin(), s.body.chamber_size_m.end(),
                                         [](double x) { return x > 0.0; });
    const auto cb = chamber_box(s);
    const double wall = s.body.wall_thickness_m;
    const double tol = 1e-9 * sp;
    int design = 0;
    Veci<D> idx = Veci<D>::Zero();
    while (true) {
        Vec<D> x;
        bool in_chamber = has_chamber, in_wall = has_chamber;
        for (int a = 0; a < D; ++a) {
            const auto u = static_cast<std::size_t>(a);
            x(a) = s.body.origin_m[u] + (idx(a) + 0.5) * sp;
            if (!(x(a) > cb.lo[u] + tol && x(a) < cb.hi[u] - tol)) in_chamber = false;
            if (!(x(a) > cb.lo[u] - wall + tol && x(a) < cb.hi[u] + wall - tol)) in_wall = false;
        }
        if (in_chamber)
            ps.add(x, vol, Phase::Fluid, -1);
        else if (in_wall)
            ps.add(x, vol, Phase::SolidWall, -1);
        else
            ps.add(x, vol, Phase::SolidDesign, design++);
        int a = 0;
        for (; a < D; ++a) {
            if (++idx(a) < n(a)) break;
            idx(a) = 0;
        }
        if (a == D) break;
    }
    return ps;
}

/// Sets fictitious densities of the design particles and the masses of all
/// particles: rho_0 f(gamma) V0 for solids, rho_f V0 for air.
template <int D>
void assign_design(ParticleSet<D>& ps, std::span<const double> gamma, const SolidMaterial& solid,
                   const FluidMaterial& fluid) {
    for (std::size_t p = 0; p < ps.size(); ++p) {
        switch (ps.phase[p]) {
            case Phase::SolidDesign: {
                const auto di = static_cast<std::size_t>(ps.design_index[p]);
                if (di >= gamma.size()) throw ParameterError("design field is smaller than the design particle count");
                ps.gamma[p] = gamma[di];
                ps.mass[p] = interpolate_properties(gamma[di], solid).density * ps.volume0[p];
                break;
            }
            case Phase::SolidWall:
                ps.gamma[p] = 1.0;
                ps.mass[p] = solid.density * ps.volume0[p];
                break;
            case Phase::Fluid:
                ps.gamma[p] = 0.0;
                ps.mass[p] = fluid.density * ps.volume0[p];
                break;
        }
    }
}

template <int D>
std::size_t design_count(const ParticleSet<D>& ps) {
    std::size_t n = 0;
    for (int d : ps.design_index)
        if (d >= 0) ++n;
    return n;
}

/// Reference positions of the design particles, by design index.
template <int D>
VecList<D> design_positions(const ParticleSet<D>& ps) {
    VecList<D> x(design_count(ps));
    for (std::size_t p = 0; p < ps.size(); ++p)
        if (ps.design_index[p] >= 0) x[static_cast<std::size_t>(ps.design_index[p])] = ps.position[p];
    return x;
}

/// Mirror tables for the configured symmetry planes (through the body center).
template <int D>
SymmetryMap symmetry_map(const Scenario& s, const VecList<D>& design_x) {
    SymmetryMap m;
    const Vec<D> c = body_center<D>(s);
    for (int axis : s.optimization.symmetry_axes)
        m.mirror.push_back(mirror_pairs<D>(std::span<const Vec<D>>(design_x.data(), design_x.size()), c, axis,
                                           seed_spacing(s)));
    return m;
}

/// Gamma of every seeded particle on the lattice (design gamma, walls 1,
/// air 0), framed by a ring of zero samples so the 0.5 contour closes.
template <int D>
DensityVolume density_volume(const Scenario& s, const ParticleSet<D>& reference, std::span<const double> gamma) {
    DensityVolume v;
    v.dimension = D;
    const double sp = seed_spacing(s);
    v.spacing = sp;
    std::array<std::size_t, 3> n{1, 1, 1};
    for (int a = 0; a < D; ++a) {
        const auto u = static_cast<std::size_t>(a);
        n[u] = static_cast<std::size_t>(std::lround(s.body.size_m[u] / sp));
        v.dims[u] = n[u] + 2;
        v.origin[u] = s.body.origin_m[u] + 0.5 * sp - sp;
    }
    if (D == 2) v.dims[2] = 1;
    v.values.assign(v.count(), 0.0);
    for (std::size_t p = 0; p < reference.size(); ++p) {
        std::array<std::size_t, 3> ijk{0, 0, 0};
        for (int a = 0; a < D; ++a) {
            const auto u = static_cast<std::size_t>(a);
            ijk[u] = static_cast<std::size_t>(std::lround((reference.position[p](a) - v.origin[u]) / sp));
        }
        double g = 0.0;
        if (reference.phase[p] == Phase::SolidWall) g = 1.0;
        if (reference.phase[p] == Phase::SolidDesign) g = gamma[static_cast<std::size_t>(reference.design_index[p])];
        v.values[v.index(ijk[0], ijk[1], ijk[2])] = g;
    }
    return v;
}

/// Inverse of density_volume: reads the design gamma back from a volume laid
/// out on the same lattice.
template <int D>
std::vector<double> design_from_volume(const Scenario& s, const ParticleSet<D>& reference, const DensityVolume& v) {
    validate(v);
    const DensityVolume layout = density_volume<D>(s, reference, std::vector<double>(design_count(reference), 0.0));
    if (v.dimension != layout.dimension || v.dims != layout.dims ||
        std::abs(v.spacing - layout.spacing) > 1e-9 * layout.spacing)
        throw ValidationError("density volume does not match the scenario's particle lattice");
    std::vector<double> gamma(design_count(reference), 0.0);
    for (std::size_t p = 0; p < reference.size(); ++p) {
        if (reference.design_index[p] < 0) continue;
        std::array<std::size_t, 3> ijk{0, 0, 0};
        for (int a = 0; a < D; ++a) {
            const auto u = static_cast<std::size_t>(a);
            ijk[u] = static_cast<std::size_t>(std::lround((reference.position[p](a) - layout.origin[u]) / layout.spacing));
        }
        gamma[static_cast<std::size_t>(reference.design_index[p])] = v.at(ijk[0], ijk[1], ijk[2]);
    }
    return gamma;
}

}  // namespace soro
