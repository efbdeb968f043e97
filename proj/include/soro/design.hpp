#pragma once

// Density-method design field: raw variables phi in [-1, 1] live on the design
// particles, are smoothed by a particle filter, sharpened by a normalized tanh
// projection, and become the fictitious density gamma in [0, 1].

#include "soro/error.hpp"
#include "soro/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace soro {

namespace detail {

/// Uniform hash grid over a point cloud for fixed-radius queries.
template <int D>
class PointHash {
public:
    PointHash(std::span<const Vec<D>> points, double cell) : points_(points), cell_(cell) {
        for (std::size_t i = 0; i < points.size(); ++i) buckets_[key(cell_of(points[i]))].push_back(i);
    }

    /// Calls fn(j) for every point within `radius` (inclusive of the cell
    /// neighborhood; callers filter by exact distance).
    template <typename Fn>
    void near(const Vec<D>& x, double radius, Fn&& fn) const {
        const int reach = static_cast<int>(std::ceil(radius / cell_));
        const Veci<D> c = cell_of(x);
        Veci<D> o = Veci<D>::Constant(-reach);
        while (true) {
            const auto it = buckets_.find(key(c + o));
            if (it != buckets_.end())
                for (std::size_t j : it->second) fn(j);
            int a = 0;
            for (; a < D; ++a) {
                if (++o(a) <= reach) break;
                o(a) = -reach;
            }
            if (a == D) break;
        }
    }

private:
    Veci<D> cell_of(const Vec<D>& x) const {
        Veci<D> c;
        for (int a = 0; a < D; ++a) c(a) = static_cast<int>(std::floor(x(a) / cell_));
        return c;
    }

    static std::int64_t key(const Veci<D>& c) {
        std::int64_t k = 0;
        for (int a = 0; a < D; ++a) k = k * 2097152 + (static_cast<std::int64_t>(c(a)) + 1048576);
        return k;
    }

    std::span<const Vec<D>> points_;
    double cell_;
    std::unordered_map<std::int64_t, std::vector<std::size_t>> buckets_;
};

}  // namespace detail

/// Row-normalized sparse smoothing operator with profile (1 - r/R)^3.
struct FilterKernel {
    double radius = 0.0;
    std::vector<std::size_t> row_begin;  // CSR row pointers, size n + 1
    std::vector<std::size_t> column;
    std::vector<double> weight;          // normalized, each row sums to 1

    std::size_t size() const { return row_begin.empty() ? 0 : row_begin.size() - 1; }

    std::size_t neighbors(std::size_t i) const { return row_begin[i + 1] - row_begin[i]; }
};

inline double filter_profile(double r, double radius) {
    if (!(r < radius)) return 0.0;
    const double s = 1.0 - r / radius;
    return s * s * s;
}

/// Builds the kernel from reference (undeformed) design particle positions.
template <int D>
FilterKernel build_filter(std::span<const Vec<D>> points, double radius) {
    FilterKernel k;
    k.radius = radius;
    k.row_begin.reserve(points.size() + 1);
    k.row_begin.push_back(0);
    std::size_t identity_rows = 0;
    if (!(radius > 0.0)) {
        for (std::size_t i = 0; i < points.size(); ++i) {
            k.column.push_back(i);
            k.weight.push_back(1.0);
            k.row_begin.push_back(k.column.size());
        }
        identity_rows = points.size();
    } else {
        const detail::PointHash<D> hash(points, radius);
        std::vector<std::pair<std::size_t, double>> row;
        for (std::size_t i = 0; i < points.size(); ++i) {
            row.clear();
            double total = 0.0;
            hash.near(points[i], radius, [&](std::size_t j) {
                const double w = filter_profile((points[j] - points[i]).norm(), radius);
                if (w > 0.0) row.emplace_back(j, w);
            });
            std::sort(row.begin(), row.end());
            for (const auto& [j, w] : row) total += w;
            if (row.size() == 1) ++identity_rows;
            for (const auto& [j, w] : row) {
                k.column.push_back(j);
                k.weight.push_back(w / total);
            }
            k.row_begin.push_back(k.column.size());
        }
    }
    if (identity_rows == points.size() && !points.empty())
        std::clog << "[design] filter radius " << radius
                  << " m reaches no neighbors; the filter reduces to the identity\n";
    return k;
}

/// phi_filtered_i = sum_j w_ij phi_j
inline std::vector<double> apply_filter(std::span<const double> phi, const FilterKernel& k) {
    if (phi.size() != k.size()) throw ParameterError("filter size does not match the design field");
    std::vector<double> out(phi.size(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double s = 0.0;
        for (std::size_t e = k.row_begin[i]; e < k.row_begin[i + 1]; ++e) s += k.weight[e] * phi[k.column[e]];
        out[i] = s;
    }
    return out;
}

/// Transpose of the filter, for pulling sensitivities back to phi.
inline std::vector<double> apply_filter_transpose(std::span<const double> grad_filtered, const FilterKernel& k) {
    if (grad_filtered.size() != k.size()) throw ParameterError("filter size does not match the gradient");
    std::vector<double> out(grad_filtered.size(), 0.0);
    for (std::size_t i = 0; i < grad_filtered.size(); ++i)
        for (std::size_t e = k.row_begin[i]; e < k.row_begin[i + 1]; ++e)
            out[k.column[e]] += k.weight[e] * grad_filtered[i];
    return out;
}

/// gamma = (tanh(beta x) / tanh(beta) + 1) / 2
inline double project(double x, double beta) { return 0.5 * (std::tanh(beta * x) / std::tanh(beta) + 1.0); }

inline double project_derivative(double x, double beta) {
    const double t = std::tanh(beta * x);
    return 0.5 * beta * (1.0 - t * t) / std::tanh(beta);
}

struct DesignField {
    std::vector<double> phi;
    std::vector<double> filtered;
    std::vector<double> gamma;

    std::size_t size() const { return phi.size(); }

    /// Recomputes filtered and gamma from phi.
    void refresh(const FilterKernel& k, double beta) {
        for (double v : phi)
            if (!(v >= -1.0 && v <= 1.0)) throw DomainError("design variable outside [-1, 1]");
        filtered = apply_filter(phi, k);
        gamma.resize(phi.size());
        for (std::size_t i = 0; i < phi.size(); ++i) {
            const double g = project(filtered[i], beta);
            gamma[i] = std::clamp(g, 0.0, 1.0);
        }
    }

    static DesignField uniform(std::size_t n, double value) {
        DesignField d;
        d.phi.assign(n, value);
        return d;
    }
};

/// dF/dphi from dF/dgamma through projection and filter.
inline std::vector<double> chain_to_phi(std::span<const double> grad_gamma, const DesignField& d,
                                        const FilterKernel& k, double beta) {
    std::vector<double> g(grad_gamma.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_gamma[i] * project_derivative(d.filtered[i], beta);
    return apply_filter_transpose(g, k);
}

// --- objective and constraint ---------------------------------------------

/// Mass-weighted mean position.
template <int D>
Vec<D> center_of_gravity(std::span<const Vec<D>> x, std::span<const double> mass) {
    Vec<D> s = Vec<D>::Zero();
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        s += mass[i] * x[i];
        m += mass[i];
    }
    if (!(m > 0.0)) throw DegenerateDesignError("design domain has zero total mass");
    return s / m;
}

/// L = (x_g(t_end) - x_g(t_start)) . e
template <int D>
double objective_value(const Vec<D>& xg_start, const Vec<D>& xg_end, const Vec<D>& direction) {
    if (std::abs(direction.norm() - 1.0) > 1e-12) throw ParameterError("objective direction must be a unit vector");
    return (xg_end - xg_start).dot(direction);
}

/// C = mean gamma (1 - gamma) over the design particles.
inline double constraint_value(std::span<const double> gamma) {
    if (gamma.empty()) return 0.0;
    double s = 0.0;
    for (double g : gamma) s += g * (1.0 - g);
    return s / static_cast<double>(gamma.size());
}

inline std::vector<double> constraint_gradient(std::span<const double> gamma) {
    std::vector<double> g(gamma.size());
    const double inv_n = gamma.empty() ? 0.0 : 1.0 / static_cast<double>(gamma.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (1.0 - 2.0 * gamma[i]) * inv_n;
    return g;
}

// --- symmetry ----------------------------------------------------------------

struct SymmetryMap {
    std::vector<std::vector<std::size_t>> mirror;  // one partner table per plane, applied in order

    bool empty() const { return mirror.empty(); }
};

/// Pairs each design particle with its mirror image across the plane through
/// `point` with normal along `axis`. Matching tolerance is half the spacing.
template <int D>
std::vector<std::size_t> mirror_pairs(std::span<const Vec<D>> x, const Vec<D>& point, int axis, double spacing) {
    const double tol = 0.5 * spacing;
    const detail::PointHash<D> hash(x, spacing);
    std::vector<std::size_t> partner(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        Vec<D> m = x[i];
        m(axis) = 2.0 * point(axis) - m(axis);
        std::size_t best = x.size();
        double best_d = tol;
        hash.near(m, tol, [&](std::size_t j) {
            const double d = (x[j] - m).norm();
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        });
        if (best == x.size()) {
            std::ostringstream os;
            os << "design particle " << i << " has no mirror partner across axis " << axis;
            throw ValidationError(os.str());
        }
        partner[i] = best;
    }
    for (std::size_t i = 0; i < x.size(); ++i)
        if (partner[partner[i]] != i) throw ValidationError("mirror pairing is not an involution");
    return partner;
}

/// Averages the sensitivity over mirror pairs, plane by plane.
inline void symmetrize_gradient(std::span<double> grad, const SymmetryMap& map) {
    std::vector<double> tmp(grad.size());
    for (const auto& partner : map.mirror) {
        if (partner.size() != grad.size()) throw ParameterError("symmetry map size mismatch");
        for (std::size_t i = 0; i < grad.size(); ++i) tmp[i] = 0.5 * (grad[i] + grad[partner[i]]);
        std::copy(tmp.begin(), tmp.end(), grad.begin());
    }
}

}  // namespace soro
