#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace soro;

using test::kirchhoff_from_energy;
using test::worst_energy_mismatch;

TEST(Interpolation, Endpoints) {
    auto m = test::soft_solid();
    EXPECT_EQ(interpolate_properties(1.0, m).density, m.density);
    EXPECT_DOUBLE_EQ(interpolate_properties(0.0, m).density, m.void_floor * m.density);
    m.void_floor = 0.0;
    EXPECT_DOUBLE_EQ(interpolate_properties(0.5, m).density, 0.125 * m.density);
    EXPECT_THROW(interpolate_properties(1.01, m), DomainError);
    EXPECT_THROW(interpolate_properties(-0.01, m), DomainError);
}

TEST(Interpolation, DerivativeMatchesDifferences) {
    for (double g : {0.1, 0.5, 0.93}) {
        const double h = 1e-6;
        const double fd = (interpolation_factor(g + h, 1e-6) - interpolation_factor(g - h, 1e-6)) / (2 * h);
        EXPECT_NEAR(interpolation_factor_derivative(g, 1e-6), fd, 1e-8);
    }
}

TEST(SolidStress, IdentityIsStressFree) {
    const auto m = test::soft_solid();
    EXPECT_EQ(solid_stress<3>(Mat<3>::Identity(), {}, m, 1.0), Mat<3>::Zero());
    EXPECT_EQ(solid_stress<2>(Mat<2>::Identity(), {}, m, 1.0), Mat<2>::Zero());
}

TEST(SolidStress, PureDilation) {
    const auto m = test::soft_solid();
    const double j = 1.1;
    const Mat<3> f = Mat<3>::Identity() * std::cbrt(j);
    const Mat<3> s = solid_stress<3>(f, {}, m, 1.0);
    const double k = m.bulk_modulus<3>();
    EXPECT_NEAR(k, 0.7333e6, 0.0001e6);
    const double expected = 0.5 * k * ((j - 1.0) + std::log(j) / j);
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(s(a, a), expected, 1e-9 * expected);
    EXPECT_NEAR(expected, 68.4e3, 0.1e3);
    EXPECT_LT(dev(s).norm(), 1e-9 * expected);
}

TEST(SolidStress, SimpleShearMatchesEnergy) {
    const auto m = test::soft_solid();
    Mat<3> f = Mat<3>::Identity();
    f(0, 1) = 0.01;
    const Mat<3> tau = solid_kirchhoff<3>(f, nullptr, m, 1.0);
    const Mat<3> ref = kirchhoff_from_energy<3>(f, m.bulk_modulus<3>(), m.mu);
    EXPECT_LT((tau - ref).norm() / ref.norm(), 1e-6);
}

TEST(SolidStress, RandomDeformationsMatchEnergy) {
    EXPECT_LT(worst_energy_mismatch<3>(100), 1e-5);
    EXPECT_LT(worst_energy_mismatch<2>(100), 1e-5);
}

TEST(SolidStress, InvertedAndNonFinite) {
    const auto m = test::soft_solid();
    Mat<3> f = Mat<3>::Identity();
    f(2, 2) = -0.5;
    EXPECT_THROW(solid_stress<3>(f, {}, m, 1.0), InversionError);
    f(2, 2) = std::nan("");
    EXPECT_THROW(solid_stress<3>(f, {}, m, 1.0), Error);
}

TEST(SolidStress, HistorySizeMustMatch) {
    auto m = test::soft_solid();
    m.prony.elements = {{0.5, 0.1}};
    EXPECT_THROW(solid_stress<2>(Mat<2>::Identity(), {}, m, 1.0), ParameterError);
}

TEST(SolidStress, ViscousPartIsTraceFree) {
    auto m = test::soft_solid();
    m.prony.elements = {{0.5, 0.1}};
    Mat<3> f;
    f << 1.1, 0.2, 0.0, -0.1, 0.95, 0.05, 0.0, 0.1, 1.02;
    Mat<3> h;
    h << 0.3, 0.1, -0.2, 0.1, -0.1, 0.05, -0.2, 0.05, -0.2;
    const Mat<3> with = solid_stress<3>(f, {h}, m, 1.0);
    const Mat<3> without = solid_stress<3>(f, {Mat<3>::Zero()}, m, 1.0);
    EXPECT_NEAR((with - without).trace(), 0.0, 1e-12 * with.norm());
}

TEST(Maxwell, CoefficientsLimits) {
    const auto c = maxwell_coefficients(1e-3, 1.0);
    EXPECT_NEAR(c.decay, std::exp(-1e-3), 1e-15);
    EXPECT_NEAR(c.gain, (1.0 - std::exp(-1e-3)) / 1e-3, 1e-13);
    const auto tiny = maxwell_coefficients(1e-12, 1.0);
    EXPECT_NEAR(tiny.gain, 1.0, 1e-11);
    EXPECT_THROW(maxwell_coefficients(0.0, 1.0), ParameterError);
}

TEST(Maxwell, ConstantInputDecays) {
    const prony::MaxwellElement e{1.0, 0.01};
    Mat<2> h = Mat<2>::Identity();
    const Mat<2> s = Mat<2>::Identity() * 3.0;
    for (int k = 0; k < 10; ++k) h = maxwell_advance<2>(h, s, s, Mat<2>::Identity(), 1e-3, e).history;
    EXPECT_NEAR(h(0, 0), std::exp(-1.0), 1e-12);
}

TEST(Maxwell, RecursionMatchesQuadrature) { EXPECT_LT(test::maxwell_quadrature_error(), 1e-3); }

TEST(Maxwell, CyclicModuli) {
    const auto series = prony::truncate_for_dt(prony::reference_table_series(), 1e-5);
    for (double omega : {20.0, 132.0, 4000.0}) EXPECT_LT(test::cyclic_moduli(series, omega).error(), 0.01) << omega;
}

TEST(Fluid, RestIsStressFree) {
    const FluidMaterial m;
    EXPECT_EQ(fluid_stress<3>(1.0, Mat<3>::Zero(), m, 0.0), Mat<3>::Zero());
}

// Sign convention: compression and actuation raise the pressure P, and the
// Cauchy stress is -P I (the air pushes outward on its surroundings).
TEST(Fluid, PressureSlope) {
    const FluidMaterial m;
    const Mat<3> act = fluid_stress<3>(1.0, Mat<3>::Zero(), m, 50e3);
    EXPECT_TRUE(act.isApprox(-50e3 * Mat<3>::Identity(), 1e-14));
    const Mat<3> comp = fluid_stress<3>(0.95, Mat<3>::Zero(), m, 0.0);
    EXPECT_NEAR(fluid_pressure(0.95, m, 0.0), 7e3, 1e-9);
    EXPECT_TRUE(comp.isApprox(-7e3 * Mat<3>::Identity(), 1e-12));
    const Mat<2> a = fluid_stress<2>(1.0, Mat<2>::Zero(), m, 1.0);
    const Mat<2> b = fluid_stress<2>(1.0, Mat<2>::Zero(), m, 2.0);
    EXPECT_TRUE((b - a).isApprox(-Mat<2>::Identity(), 1e-12));
}

TEST(Fluid, ViscousTermIsTraceFreeWithoutVolumeViscosity) {
    const FluidMaterial m;
    Mat<3> l;
    l << 1, 2, 3, 4, 5, 6, 7, 8, -2;
    const Mat<3> s = fluid_stress<3>(1.0, l, m, 0.0);
    EXPECT_NEAR(s.trace(), 0.0, 1e-15);
    EXPECT_NEAR(s(0, 1), m.shear_viscosity * 6.0, 1e-15);
}

TEST(Fluid, InvertedThrows) {
    EXPECT_THROW(fluid_stress<2>(0.0, Mat<2>::Zero(), FluidMaterial{}, 0.0), InversionError);
}

TEST(Actuation, BeforeStartIsZero) {
    auto w = synthetic_square_waveform(80e3, 5.0, 0.01, 0.25);
    EXPECT_EQ(sample_actuation(w, 0.1), 0.0);
}

TEST(Actuation, TableValuesAndWrap) {
    ActuationWaveform w;
    w.times = {0.0, 0.1};
    w.pressures = {10.0, 30.0};
    w.period = 0.2;
    EXPECT_EQ(sample_actuation(w, 0.1), 30.0);
    EXPECT_DOUBLE_EQ(sample_actuation(w, 0.05), 20.0);
    EXPECT_DOUBLE_EQ(sample_actuation(w, 0.15), 20.0);
    EXPECT_DOUBLE_EQ(sample_actuation(w, 0.2 + 0.05), 20.0);
    ActuationWaveform empty;
    EXPECT_THROW(sample_actuation(empty, 0.0), ConfigError);
}

TEST(Actuation, SyntheticSquareWave) {
    const auto w = synthetic_square_waveform(80e3, 5.0, 0.005, 0.0);
    EXPECT_DOUBLE_EQ(w.period, 0.2);
    EXPECT_EQ(sample_actuation(w, 0.0), 0.0);
    EXPECT_NEAR(sample_actuation(w, 0.099), 80e3, 80e3 * 1e-6);
    EXPECT_LT(sample_actuation(w, 0.199), 80e3 * 1e-6);
    EXPECT_NEAR(sample_actuation(w, 0.005), 80e3 * (1.0 - std::exp(-1.0)), 200.0);
}
