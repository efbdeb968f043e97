#pragma once

// File formats: waveform and master-curve CSV input, density volumes (binary
// and CSV), ASCII STL, 2D polylines, particle snapshots, and atomic writes.

#include "soro/constitutive.hpp"
#include "soro/error.hpp"
#include "soro/mpm.hpp"
#include "soro/prony.hpp"
#include "soro/surface.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace soro::io {

namespace fs = std::filesystem;

// --- small text helpers -------------------------------------------------------

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// Parses a complete double; false if any character is left over.
inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

/// Shortest round-trip representation of a double.
inline std::string format_double(double v) {
    std::array<char, 32> buf{};
    const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), r.ptr);
}

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// Writes to a temporary sibling and renames it over the target.
inline void atomic_write(const fs::path& p, std::string_view content) {
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + p.parent_path().string() + ": " + ec.message());
    }
    fs::path tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, p, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + p.string() + ": " + ec.message());
}

/// Output directory: explicit value, else $SORO_OUT_DIR, else ./soro_out.
inline fs::path output_dir(const std::string& explicit_dir = {}) {
    if (!explicit_dir.empty()) return explicit_dir;
    if (const char* env = std::getenv("SORO_OUT_DIR"); env && *env) return env;
    return "soro_out";
}

/// Creates the directory and proves it writable before anything is exported.
inline void prepare_output_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
    const fs::path probe = dir / ".soro_write_probe";
    {
        std::ofstream out(probe, std::ios::trunc);
        if (!out) throw IoError("output directory is not writable: " + dir.string());
    }
    fs::remove(probe, ec);
}

// --- numeric CSV ------------------------------------------------------------------

struct NumericTable {
    std::vector<std::vector<double>> rows;
    std::vector<std::string> header;                         // empty when headerless
    std::vector<std::pair<std::string, std::string>> meta;   // "# key = value" lines
};

/// Comma-separated numbers; blank lines skipped; lines starting with '#' are
/// comments, and "# key = value" comments are kept as metadata. A first
/// non-comment line that is not numeric is taken as the header.
inline NumericTable parse_numeric_csv(const std::string& text, const std::string& what, std::size_t columns) {
    NumericTable t;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        const auto s = trim(line);
        if (s.empty()) continue;
        if (s.front() == '#') {
            const auto body = trim(s.substr(1));
            const auto eq = body.find('=');
            if (eq != std::string_view::npos)
                t.meta.emplace_back(std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))));
            continue;
        }
        const auto cells = split(s, ',');
        std::vector<double> row;
        bool numeric = cells.size() >= columns;
        for (std::size_t c = 0; numeric && c < columns; ++c) {
            double v = 0.0;
            if (!parse_double(cells[c], v)) numeric = false;
            row.push_back(v);
        }
        if (!numeric) {
            if (first) {
                for (const auto& c : cells) t.header.emplace_back(c);
                first = false;
                continue;
            }
            std::ostringstream os;
            os << what << ": line " << line_no << " needs " << columns << " numeric columns";
            throw FormatError(os.str());
        }
        first = false;
        t.rows.push_back(std::move(row));
    }
    if (t.rows.empty()) throw FormatError(what + ": no data rows");
    return t;
}

inline const std::string* find_meta(const NumericTable& t, std::string_view key) {
    for (const auto& [k, v] : t.meta)
        if (k == key) return &v;
    return nullptr;
}

// --- actuation waveform ---------------------------------------------------------

/// Two-column CSV (time_s, pressure_pa), with or without a header row.
/// The period comes from a "# period_s = ..." comment when present;
/// otherwise it is the sampled span plus the median sample interval, which
/// treats the file as exactly one period of a uniformly sampled signal.
inline ActuationWaveform parse_waveform(const std::string& text, double t_start, const std::string& what = "waveform") {
    const auto t = parse_numeric_csv(text, what, 2);
    ActuationWaveform w;
    w.t_start = t_start;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        if (i > 0 && !(t.rows[i][0] > t.rows[i - 1][0])) {
            std::ostringstream os;
            os << what << ": time is not strictly increasing at data row " << i + 1;
            throw FormatError(os.str());
        }
        if (!std::isfinite(t.rows[i][1])) throw FormatError(what + ": non-finite pressure");
        w.times.push_back(t.rows[i][0]);
        w.pressures.push_back(t.rows[i][1]);
    }
    if (const auto* p = find_meta(t, "period_s")) {
        if (!parse_double(*p, w.period) || !(w.period > 0.0)) throw FormatError(what + ": bad period_s header");
    } else if (w.times.size() >= 2) {
        std::vector<double> d;
        for (std::size_t i = 1; i < w.times.size(); ++i) d.push_back(w.times[i] - w.times[i - 1]);
        std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
        w.period = w.times.back() - w.times.front() + d[d.size() / 2];
    } else {
        throw FormatError(what + ": a single sample needs a period_s header");
    }
    try {
        validate(w);
    } catch (const ConfigError& e) {
        throw FormatError(what + ": " + e.what());
    }
    return w;
}

inline ActuationWaveform load_waveform(const fs::path& p, double t_start) {
    return parse_waveform(read_text(p), t_start, p.string());
}

inline std::string waveform_csv(const ActuationWaveform& w) {
    std::ostringstream os;
    os << "# period_s = " << format_double(w.period) << "\n";
    os << "time_s,pressure_pa\n";
    for (std::size_t i = 0; i < w.times.size(); ++i)
        os << format_double(w.times[i]) << "," << format_double(w.pressures[i]) << "\n";
    return os.str();
}

// --- master curve ----------------------------------------------------------------

/// Three-column CSV: omega_rad_s, storage, loss (header optional).
inline prony::MasterCurve parse_master_curve(const std::string& text, const std::string& what = "master curve") {
    const auto t = parse_numeric_csv(text, what, 3);
    prony::MasterCurve c;
    for (const auto& r : t.rows) c.samples.push_back({r[0], r[1], r[2]});
    if (const auto* n = find_meta(t, "note")) c.note = *n;
    prony::validate(c);
    return c;
}

inline prony::MasterCurve load_master_curve(const fs::path& p) { return parse_master_curve(read_text(p), p.string()); }

inline std::string master_curve_csv(const prony::MasterCurve& c) {
    std::ostringstream os;
    if (!c.note.empty()) os << "# note = " << c.note << "\n";
    os << "omega_rad_s,G_storage,G_loss\n";
    for (const auto& s : c.samples)
        os << format_double(s.omega) << "," << format_double(s.storage) << "," << format_double(s.loss) << "\n";
    return os.str();
}

// --- density volume ---------------------------------------------------------------
//
// Binary layout (little endian):
//   char[16]  "SORO_DENSITY_V01"
//   uint32    dimension (2 or 3)
//   uint32    reserved (0)
//   uint64[3] dims (x, y, z; z = 1 in 2D)
//   float64   spacing [m]
//   float64[3] origin [m]
//   float64[] values, x fastest

inline constexpr char kVolumeMagic[17] = "SORO_DENSITY_V01";

namespace detail {

template <typename T>
void put(std::string& out, T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.append(b, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw FormatError("density volume: truncated file");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace detail

inline std::string volume_to_binary(const DensityVolume& v) {
    validate(v);
    std::string out(kVolumeMagic, 16);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(v.dimension));
    detail::put<std::uint32_t>(out, 0);
    for (auto d : v.dims) detail::put<std::uint64_t>(out, d);
    detail::put<double>(out, v.spacing);
    for (double o : v.origin) detail::put<double>(out, o);
    for (double x : v.values) detail::put<double>(out, x);
    return out;
}

inline DensityVolume volume_from_binary(const std::string& in) {
    if (in.size() < 16 || in.compare(0, 16, kVolumeMagic) != 0) throw FormatError("density volume: bad magic");
    std::size_t pos = 16;
    DensityVolume v;
    v.dimension = static_cast<int>(detail::take<std::uint32_t>(in, pos));
    detail::take<std::uint32_t>(in, pos);
    for (auto& d : v.dims) d = detail::take<std::uint64_t>(in, pos);
    v.spacing = detail::take<double>(in, pos);
    for (auto& o : v.origin) o = detail::take<double>(in, pos);
    const std::size_t n = v.dims[0] * v.dims[1] * v.dims[2];
    if (in.size() != pos + n * sizeof(double)) throw FormatError("density volume: payload size does not match dims");
    v.values.resize(n);
    for (auto& x : v.values) x = detail::take<double>(in, pos);
    try {
        validate(v);
    } catch (const ValidationError& e) {
        throw FormatError(std::string("density volume: ") + e.what());
    }
    return v;
}

/// Inspection format: a "# dimension/dims/spacing/origin" header followed by
/// one "i,j,k,gamma" row per sample.
inline std::string volume_to_csv(const DensityVolume& v) {
    validate(v);
    std::ostringstream os;
    os << "# dimension = " << v.dimension << "\n";
    os << "# dims = " << v.dims[0] << " " << v.dims[1] << " " << v.dims[2] << "\n";
    os << "# spacing = " << format_double(v.spacing) << "\n";
    os << "# origin = " << format_double(v.origin[0]) << " " << format_double(v.origin[1]) << " "
       << format_double(v.origin[2]) << "\n";
    os << "i,j,k,gamma\n";
    for (std::size_t k = 0; k < v.dims[2]; ++k)
        for (std::size_t j = 0; j < v.dims[1]; ++j)
            for (std::size_t i = 0; i < v.dims[0]; ++i)
                os << i << "," << j << "," << k << "," << format_double(v.at(i, j, k)) << "\n";
    return os.str();
}

inline DensityVolume volume_from_csv(const std::string& text) {
    const auto t = parse_numeric_csv(text, "density volume csv", 4);
    DensityVolume v;
    auto need = [&](const char* key) {
        const auto* s = find_meta(t, key);
        if (!s) throw FormatError(std::string("density volume csv: missing '# ") + key + "' header");
        return std::istringstream(*s);
    };
    need("dimension") >> v.dimension;
    {
        auto s = need("dims");
        s >> v.dims[0] >> v.dims[1] >> v.dims[2];
    }
    {
        const auto* s = find_meta(t, "spacing");
        if (!s || !parse_double(*s, v.spacing)) throw FormatError("density volume csv: bad spacing");
    }
    {
        const auto* s = find_meta(t, "origin");
        if (!s) throw FormatError("density volume csv: missing origin");
        const auto parts = split(trim(*s), ' ');
        if (parts.size() != 3) throw FormatError("density volume csv: origin needs three values");
        for (std::size_t a = 0; a < 3; ++a)
            if (!parse_double(parts[a], v.origin[a])) throw FormatError("density volume csv: bad origin");
    }
    v.values.assign(v.dims[0] * v.dims[1] * v.dims[2], 0.0);
    std::vector<std::uint8_t> seen(v.values.size(), 0);
    for (const auto& r : t.rows) {
        const auto i = static_cast<std::size_t>(r[0]), j = static_cast<std::size_t>(r[1]), k = static_cast<std::size_t>(r[2]);
        if (i >= v.dims[0] || j >= v.dims[1] || k >= v.dims[2]) throw FormatError("density volume csv: index out of range");
        v.values[v.index(i, j, k)] = r[3];
        seen[v.index(i, j, k)] = 1;
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw FormatError("density volume csv: missing samples");
    validate(v);
    return v;
}

/// Reads either format, recognized by the magic bytes.
inline DensityVolume load_volume(const fs::path& p) {
    const std::string data = read_text(p);
    if (data.size() >= 16 && data.compare(0, 16, kVolumeMagic) == 0) return volume_from_binary(data);
    return volume_from_csv(data);
}

// --- meshes -------------------------------------------------------------------------

/// ASCII STL; coordinates in metres.
inline std::string mesh_to_stl(const SurfaceMesh& m, const std::string& name = "soro") {
    if (m.dimension != 3) throw ParameterError("STL export needs a 3D mesh");
    std::ostringstream os;
    os << std::scientific << std::setprecision(9);
    os << "solid " << name << "\n";
    for (const auto& t : m.triangles) {
        const Eigen::Vector3d n = face_normal(m, t);
        os << "  facet normal " << n.x() << " " << n.y() << " " << n.z() << "\n";
        os << "    outer loop\n";
        for (auto idx : t) {
            const auto& v = m.vertices[idx];
            os << "      vertex " << v.x() << " " << v.y() << " " << v.z() << "\n";
        }
        os << "    endloop\n";
        os << "  endfacet\n";
    }
    os << "endsolid " << name << "\n";
    return os.str();
}

/// Strict reader for the subset written above; vertices are welded by exact
/// coordinate match so watertightness can be rechecked after a round trip.
inline SurfaceMesh mesh_from_stl(const std::string& text) {
    std::istringstream in(text);
    std::string tok;
    auto expect = [&](const char* word) {
        if (!(in >> tok) || tok != word) throw FormatError(std::string("stl: expected '") + word + "', got '" + tok + "'");
    };
    SurfaceMesh m;
    m.dimension = 3;
    expect("solid");
    std::string name;
    std::getline(in, name);
    std::map<std::array<double, 3>, std::uint32_t> ids;
    while (in >> tok) {
        if (tok == "endsolid") break;
        if (tok != "facet") throw FormatError("stl: expected 'facet', got '" + tok + "'");
        expect("normal");
        double n[3];
        if (!(in >> n[0] >> n[1] >> n[2])) throw FormatError("stl: bad normal");
        expect("outer");
        expect("loop");
        std::array<std::uint32_t, 3> tri{};
        for (auto& idx : tri) {
            expect("vertex");
            std::array<double, 3> p{};
            if (!(in >> p[0] >> p[1] >> p[2])) throw FormatError("stl: bad vertex");
            const auto it = ids.find(p);
            if (it != ids.end()) {
                idx = it->second;
            } else {
                idx = static_cast<std::uint32_t>(m.vertices.size());
                ids.emplace(p, idx);
                m.vertices.emplace_back(p[0], p[1], p[2]);
            }
        }
        expect("endloop");
        expect("endfacet");
        m.triangles.push_back(tri);
    }
    if (tok != "endsolid") throw FormatError("stl: missing 'endsolid'");
    soro::detail::finish_components(m);
    m.watertight = is_watertight(m);
    return m;
}

/// 2D contour as CSV segments: x0_m,y0_m,x1_m,y1_m (interior on the left).
inline std::string mesh_to_polyline_csv(const SurfaceMesh& m) {
    if (m.dimension != 2) throw ParameterError("polyline export needs a 2D mesh");
    std::ostringstream os;
    os << "x0_m,y0_m,x1_m,y1_m\n";
    for (const auto& s : m.segments) {
        const auto& a = m.vertices[s[0]];
        const auto& b = m.vertices[s[1]];
        os << format_double(a.x()) << "," << format_double(a.y()) << "," << format_double(b.x()) << ","
           << format_double(b.y()) << "\n";
    }
    return os.str();
}

// --- particle snapshots -----------------------------------------------------------

template <int D>
std::string particles_csv(const ParticleSet<D>& ps) {
    std::ostringstream os;
    os << "id,phase,gamma,x_m,y_m" << (D == 3 ? ",z_m" : "") << ",vx_m_s,vy_m_s" << (D == 3 ? ",vz_m_s" : "")
       << ",J\n";
    for (std::size_t p = 0; p < ps.size(); ++p) {
        os << p << "," << static_cast<int>(ps.phase[p]) << "," << format_double(ps.gamma[p]);
        for (int a = 0; a < D; ++a) os << "," << format_double(ps.position[p](a));
        for (int a = 0; a < D; ++a) os << "," << format_double(ps.velocity[p](a));
        os << "," << format_double(det(ps.deformation[p])) << "\n";
    }
    return os.str();
}

}  // namespace soro::io
