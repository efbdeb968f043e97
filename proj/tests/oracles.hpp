#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Each returns a worst relative error.

#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace soro::test {

/// tau = (dPsi/dF) F^T by central differences of the strain energy.
template <int D>
Mat<D> kirchhoff_from_energy(const Mat<D>& f, double bulk, double mu) {
    Mat<D> p;
    for (int r = 0; r < D; ++r)
        for (int c = 0; c < D; ++c) {
            const double h = 1e-6;
            Mat<D> a = f, b = f;
            a(r, c) += h;
            b(r, c) -= h;
            p(r, c) = (strain_energy<D>(a, bulk, mu) - strain_energy<D>(b, bulk, mu)) / (2.0 * h);
        }
    return p * f.transpose();
}

template <int D>
Mat<D> random_deformation(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 0.15);
    while (true) {
        Mat<D> f = Mat<D>::Identity();
        for (int r = 0; r < D; ++r)
            for (int c = 0; c < D; ++c) f(r, c) += n(rng);
        if (f.determinant() > 0.3) return f;
    }
}

template <int D>
double worst_energy_mismatch(int samples) {
    std::mt19937_64 rng(7);
    const auto m = soft_solid();
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        const Mat<D> f = random_deformation<D>(rng);
        const Mat<D> tau = solid_kirchhoff<D>(f, nullptr, m, 1.0);
        const Mat<D> ref = kirchhoff_from_energy<D>(f, m.bulk_modulus<D>(), m.mu);
        worst = std::max(worst, (tau - ref).norm() / ref.norm());
    }
    return worst;
}

/// Recursive Maxwell update against H(t) = int_0^t exp(-(t-s)/tau) dS/ds ds
/// for S(t) = sin(w t), by composite Simpson quadrature every 50 steps.
inline double maxwell_quadrature_error(int steps = 1000) {
    const double tau = 0.02, dt = tau / 10.0, w = 2.0 * M_PI / (20.0 * tau);
    const prony::MaxwellElement e{1.0, tau};
    Mat<2> h = Mat<2>::Zero();
    auto input = [&](double t) { return Mat<2>(Mat<2>::Identity() * std::sin(w * t)); };
    double worst = 0.0, scale = 0.0;
    for (int k = 0; k < steps; ++k) {
        const double t1 = (k + 1) * dt;
        h = maxwell_advance<2>(h, input(k * dt), input(t1), Mat<2>::Identity(), dt, e).history;
        if ((k + 1) % 50 != 0) continue;
        const int n = 20000;
        const double q = t1 / n;
        double sum = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double s = i * q;
            const double fx = std::exp(-(t1 - s) / tau) * w * std::cos(w * s);
            sum += fx * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
        }
        const double ref = sum * q / 3.0;
        worst = std::max(worst, std::abs(h(0, 0) - ref));
        scale = std::max(scale, std::abs(ref));
    }
    return worst / scale;
}

struct CyclicModuli {
    double storage = 0.0, loss = 0.0;          // measured
    double ref_storage = 0.0, ref_loss = 0.0;  // from the series
    double error() const {
        return std::max(std::abs(storage - ref_storage) / ref_storage, std::abs(loss - ref_loss) / ref_loss);
    }
};

/// Sinusoidal shear strain for ten cycles, then the in-phase and quadrature
/// stress amplitudes over the eleventh give storage and loss moduli.
inline CyclicModuli cyclic_moduli(const prony::PronySeries& series, double omega) {
    const double period = 2.0 * M_PI / omega, amp = 1e-3;
    const int cycles = 11, per = 2000;
    const double dt = period / per;
    std::vector<Mat<2>> h(series.elements.size(), Mat<2>::Zero());
    auto strain = [&](double t) {
        Mat<2> e = Mat<2>::Zero();
        e(0, 1) = e(1, 0) = amp * std::sin(omega * t);
        return e;
    };
    double in_phase = 0.0, quadrature = 0.0;
    for (int k = 0; k < cycles * per; ++k) {
        const double t1 = (k + 1) * dt;
        for (std::size_t i = 0; i < h.size(); ++i)
            h[i] = maxwell_advance<2>(h[i], strain(k * dt), strain(t1), Mat<2>::Identity(), dt, series.elements[i])
                       .history;
        if (k < (cycles - 1) * per) continue;
        double sigma = series.g_inf * strain(t1)(0, 1);
        for (std::size_t i = 0; i < h.size(); ++i) sigma += series.elements[i].g * h[i](0, 1);
        in_phase += sigma * std::sin(omega * t1) * dt;
        quadrature += sigma * std::cos(omega * t1) * dt;
    }
    CyclicModuli out;
    out.storage = 2.0 * in_phase / (period * amp);
    out.loss = 2.0 * quadrature / (period * amp);
    const auto ref = prony::eval_moduli(series, omega);
    out.ref_storage = ref.storage;
    out.ref_loss = ref.loss;
    return out;
}

/// Direct O(n^2) evaluation of the normalized (1 - r/R)^3 filter.
template <int D>
std::vector<double> brute_force_filter(const std::vector<Vec<D>>& x, const std::vector<double>& phi, double radius) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double r = (x[i] - x[j]).norm();
            if (r >= radius) continue;
            const double w = std::pow(1.0 - r / radius, 3);
            num += w * phi[j];
            den += w;
        }
        out[i] = num / den;
    }
    return out;
}

}  // namespace soro::test
