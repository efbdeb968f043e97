#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace soro;

namespace {

template <int D>
ParticleSet<D> random_particles(std::size_t n, int resolution, double h, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ParticleSet<D> ps;
    for (std::size_t p = 0; p < n; ++p) {
        ps.add(test::random_point<D>(rng, 2.0 * h, (resolution - 2) * h), h * h, Phase::SolidWall, -1);
        ps.mass.back() = 0.5 + 0.5 * u(rng) * u(rng);
        for (int a = 0; a < D; ++a) ps.velocity.back()(a) = u(rng);
        for (int r = 0; r < D; ++r)
            for (int c = 0; c < D; ++c) ps.affine.back()(r, c) = 10.0 * u(rng);
    }
    return ps;
}

template <int D>
MatList<D> zero_stress(std::size_t n) {
    return MatList<D>(n, Mat<D>::Zero());
}

}  // namespace

TEST(Transfer, PartitionOfUnityAtNode) {
    const double h = 0.1;
    ParticleSet<3> ps;
    ps.add(Vec<3>(0.5, 0.6, 0.7), 1e-3, Phase::SolidWall, -1);
    ps.mass[0] = 2.5;
    GridField<3> grid(16, h);
    particle_to_grid<3>(ps, zero_stress<3>(1), grid, 1e-3);
    EXPECT_NEAR(grid.total_mass(), 2.5, 1e-12);
    EXPECT_NEAR(grid.mass[grid.index(Veci<3>(5, 6, 7))], 2.5 * 0.75 * 0.75 * 0.75, 1e-12);
    EXPECT_NEAR(grid.mass[grid.index(Veci<3>(4, 6, 7))], 2.5 * 0.125 * 0.75 * 0.75, 1e-12);
}

TEST(Transfer, MassAndMomentumAreConserved) {
    const auto ps = random_particles<2>(500, 32, 1.0 / 32, 3);
    GridField<2> grid(32, 1.0 / 32);
    particle_to_grid<2>(ps, zero_stress<2>(ps.size()), grid, 1e-4);
    EXPECT_NEAR(grid.total_mass(), ps.total_mass(), 1e-12 * ps.total_mass());
    const Vec<2> pp = ps.total_momentum();
    EXPECT_LT((grid.total_momentum() - pp).norm(), 1e-12 * pp.norm());
}

TEST(Transfer, StressDoesNotCreateMomentum) {
    auto ps = random_particles<3>(200, 16, 1.0 / 16, 5);
    MatList<3> stress(ps.size());
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 1e4);
    for (auto& s : stress)
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) s(r, c) = n(rng);
    GridField<3> grid(16, 1.0 / 16);
    particle_to_grid<3>(ps, stress, grid, 1e-4);
    const Vec<3> pp = ps.total_momentum();
    EXPECT_LT((grid.total_momentum() - pp).norm(), 1e-10 * pp.norm());
}

TEST(Transfer, MirrorImageMasses) {
    const double h = 0.05;
    const int res = 20;
    ParticleSet<2> ps;
    ps.add(Vec<2>(0.3137, 0.41), 1e-3, Phase::SolidWall, -1);
    ps.add(Vec<2>(2 * 0.5 - 0.3137, 0.41), 1e-3, Phase::SolidWall, -1);
    ps.mass = {1.0, 1.0};
    GridField<2> grid(res, h);
    particle_to_grid<2>(ps, zero_stress<2>(2), grid, 1e-3);
    for (int i = 0; i <= res; ++i)
        for (int j = 0; j <= res; ++j)
            EXPECT_NEAR(grid.mass[grid.index(Veci<2>(i, j))], grid.mass[grid.index(Veci<2>(res - i, j))], 1e-12);
}

TEST(Transfer, OutOfDomainAndNonFinite) {
    ParticleSet<2> ps;
    ps.add(Vec<2>(0.01, 0.5), 1e-3, Phase::SolidWall, -1);
    ps.mass[0] = 1.0;
    GridField<2> grid(16, 1.0 / 16);
    try {
        particle_to_grid<2>(ps, zero_stress<2>(1), grid, 1e-3);
        FAIL();
    } catch (const OutOfDomainError& e) {
        EXPECT_NE(std::string(e.what()).find("particle 0"), std::string::npos);
    }
    ps.position[0] = Vec<2>(0.5, 0.5);
    MatList<2> bad(1, Mat<2>::Constant(std::nan("")));
    EXPECT_THROW(particle_to_grid<2>(ps, bad, grid, 1e-3), NumericError);
}

TEST(GridUpdate, GravityAndClamp) {
    GridField<3> grid(8, 0.1);
    const auto interior = grid.index(Veci<3>(4, 4, 4));
    const auto ground = grid.index(Veci<3>(4, 4, 1));
    grid.mass[interior] = grid.mass[ground] = 2.0;
    grid.momentum[interior] = Vec<3>(2.0, 0.0, 0.0);
    grid.momentum[ground] = Vec<3>(0.4, 0.0, -0.2);
    BoundarySet<3> b;
    b.add(Vec<3>(0, 0, 0.1), Vec<3>::UnitZ());
    const long clamps = grid_update<3>(grid, Vec<3>(0, 0, -9.8), b, 1e-5);
    EXPECT_EQ(clamps, 1);
    EXPECT_NEAR((grid.velocity[interior] - Vec<3>(1.0, 0.0, -9.8e-5)).norm(), 0.0, 1e-15);
    EXPECT_EQ(grid.velocity[ground], Vec<3>::Zero());
}

TEST(GridUpdate, SeparatingNodeIsFree) {
    GridField<3> grid(8, 0.1);
    const auto ground = grid.index(Veci<3>(4, 4, 1));
    grid.mass[ground] = 1.0;
    grid.momentum[ground] = Vec<3>(0.3, 0.0, 0.1);
    BoundarySet<3> b;
    b.add(Vec<3>(0, 0, 0.1), Vec<3>::UnitZ());
    EXPECT_EQ(grid_update<3>(grid, Vec<3>::Zero(), b, 1e-5), 0);
    EXPECT_EQ(grid.velocity[ground], Vec<3>(0.3, 0.0, 0.1));
}

TEST(GridToParticle, UniformVelocity) {
    auto ps = random_particles<3>(50, 16, 1.0 / 16, 9);
    GridField<3> grid(16, 1.0 / 16);
    const Vec<3> v(0.3, -0.2, 0.1);
    std::fill(grid.velocity.begin(), grid.velocity.end(), v);
    const auto before = ps.deformation;
    grid_to_particle<3>(grid, ps, 1e-3);
    for (std::size_t p = 0; p < ps.size(); ++p) {
        EXPECT_LT((ps.velocity[p] - v).norm(), 1e-12);
        EXPECT_LT(ps.affine[p].norm(), 1e-12);
        EXPECT_LT((ps.deformation[p] - before[p]).norm(), 1e-12);
    }
}

TEST(GridToParticle, ZeroFieldFreezes) {
    auto ps = random_particles<2>(50, 16, 1.0 / 16, 1);
    const auto x = ps.position;
    GridField<2> grid(16, 1.0 / 16);
    grid_to_particle<2>(grid, ps, 1e-3);
    EXPECT_EQ(ps.position, x);
    for (std::size_t p = 0; p < ps.size(); ++p) EXPECT_EQ(ps.deformation[p], Mat<2>::Identity());
}

TEST(GridToParticle, RecoversLinearField) {
    const double h = 1.0 / 16, dt = 1e-3;
    Mat<3> l;
    l << 0.1, -0.3, 0.2, 0.4, 0.05, -0.1, -0.2, 0.3, -0.15;
    const Vec<3> v0(0.1, 0.2, -0.1);
    GridField<3> grid(16, h);
    for (std::size_t i = 0; i < grid.node_count(); ++i) grid.velocity[i] = v0 + l * grid.node_position(i);
    auto ps = random_particles<3>(40, 16, h, 4);
    for (auto& f : ps.deformation) f << 1.1, 0.1, 0.0, 0.0, 0.9, 0.05, 0.02, 0.0, 1.0;
    const auto f0 = ps.deformation;
    const auto x0 = ps.position;
    grid_to_particle<3>(grid, ps, dt);
    for (std::size_t p = 0; p < ps.size(); ++p) {
        EXPECT_LT((ps.affine[p] - l).norm(), 1e-10 * l.norm());
        const Mat<3> expect = (Mat<3>::Identity() + dt * l) * f0[p];
        EXPECT_LT((ps.deformation[p] - expect).norm(), 1e-10 * expect.norm());
        EXPECT_LT((ps.velocity[p] - (v0 + l * x0[p])).norm(), 1e-12);
    }
}

TEST(GridToParticle, InversionIsReported) {
    const double h = 1.0 / 16;
    GridField<2> grid(16, h);
    for (std::size_t i = 0; i < grid.node_count(); ++i) grid.velocity[i] = Vec<2>(-2000.0 * grid.node_position(i)(0), 0.0);
    auto ps = random_particles<2>(3, 16, h, 2);
    try {
        grid_to_particle<2>(grid, ps, 1e-3, 42);
        FAIL();
    } catch (const InversionError& e) {
        EXPECT_NE(std::string(e.what()).find("step 42"), std::string::npos);
    }
}

TEST(Step, BodyAtRestStaysAtRest) {
    auto ctx = test::plain_context<2>(32, 1.0 / 32, 1e-5);
    auto ps = test::solid_block<2>(Vec<2>(0.3, 0.3), Veci<2>(10, 8), 1.0 / 64, ctx.solid);
    const auto x0 = ps.position;
    Stepper<2> stepper(ctx);
    for (int k = 0; k < 100; ++k) stepper.step(ps, k * ctx.dt, k);
    for (std::size_t p = 0; p < ps.size(); ++p) {
        EXPECT_LT((ps.position[p] - x0[p]).norm(), 1e-12);
        EXPECT_LT((ps.deformation[p] - Mat<2>::Identity()).norm(), 1e-12);
    }
}

TEST(Step, Conservation1000Steps) {
    const auto r2 = test::conservation_run<2>(1000);
    EXPECT_LT(r2.max_mass_error, 1e-12);
    EXPECT_LT(r2.max_momentum_drift, 1e-10);
    const auto r3 = test::conservation_run<3>(200);
    EXPECT_LT(r3.max_mass_error, 1e-12);
    EXPECT_LT(r3.max_momentum_drift, 1e-10);
}

// Without boundaries every particle of a stress-free block falls with the
// discrete symplectic-Euler trajectory x_k = x_0 + g dt^2 k (k + 1) / 2.
TEST(Step, FreeFall) {
    auto ctx = test::plain_context<2>(64, 1.0 / 64, 1e-4);
    ctx.gravity = Vec<2>(0.0, -9.8);
    auto ps = test::solid_block<2>(Vec<2>(0.4, 0.7), Veci<2>(6, 6), 1.0 / 128, ctx.solid);
    const auto x0 = ps.position;
    Stepper<2> stepper(ctx);
    const int n = 500;
    for (int k = 0; k < n; ++k) stepper.step(ps, k * ctx.dt, k);
    const double drop = 9.8 * ctx.dt * ctx.dt * n * (n + 1) / 2.0;
    for (std::size_t p = 0; p < ps.size(); ++p) {
        EXPECT_NEAR(ps.position[p](1), x0[p](1) - drop, 1e-10);
        EXPECT_NEAR(ps.position[p](0), x0[p](0), 1e-10);
    }
}

TEST(Step, WholeCellShiftGivesShiftedTrajectory) {
    const double h = 1.0 / 32;
    auto ctx = test::plain_context<2>(32, h, 2e-5);
    ctx.gravity = Vec<2>(0.0, -9.8);
    auto a = test::solid_block<2>(Vec<2>(0.25, 0.25), Veci<2>(8, 8), 0.5 * h, ctx.solid);
    for (std::size_t p = 0; p < a.size(); ++p) a.velocity[p] = Vec<2>(0.2 * std::sin(40.0 * a.position[p](1)), 0.0);
    auto b = a;
    const Vec<2> shift(4 * h, 3 * h);
    for (auto& x : b.position) x += shift;
    Stepper<2> sa(ctx), sb(ctx);
    for (int k = 0; k < 300; ++k) {
        sa.step(a, k * ctx.dt, k);
        sb.step(b, k * ctx.dt, k);
    }
    for (std::size_t p = 0; p < a.size(); ++p) {
        EXPECT_LT((b.position[p] - a.position[p] - shift).norm(), 1e-12);
        EXPECT_LT((b.deformation[p] - a.deformation[p]).norm(), 1e-9);
    }
}

TEST(Step, Deterministic) {
    auto ctx = test::plain_context<2>(32, 1.0 / 32, 2e-5);
    ctx.gravity = Vec<2>(0.0, -9.8);
    ctx.boundaries.add(Vec<2>(0.0, 0.2), Vec<2>::UnitY());
    ctx.solid.prony.elements = {{0.5, 1e-2}};
    auto a = test::solid_block<2>(Vec<2>(0.3, 0.21), Veci<2>(10, 10), 1.0 / 64, ctx.solid);
    auto b = a;
    Stepper<2> sa(ctx), sb(ctx);
    for (int k = 0; k < 200; ++k) {
        sa.step(a, k * ctx.dt, k);
        sb.step(b, k * ctx.dt, k);
    }
    EXPECT_TRUE(a.same_dynamic_state(b));
}

// A viscoelastic block dropped on the ground comes to rest on it.
TEST(Step, ViscoelasticBlockSettles) {
    const double h = 1.0 / 64;
    auto ctx = test::plain_context<2>(64, h, 2e-5);
    ctx.gravity = Vec<2>(0.0, -9.8);
    ctx.boundaries.add(Vec<2>(0.0, 0.1), Vec<2>::UnitY());
    ctx.solid.mu *= 0.1;
    ctx.solid.lambda *= 0.1;
    ctx.solid.prony.elements = {{1.0, 5e-3}};
    auto ps = test::solid_block<2>(Vec<2>(0.4, 0.11), Veci<2>(16, 12), 0.5 * h, ctx.solid);
    Stepper<2> stepper(ctx);
    for (int k = 0; k < 15000; ++k) stepper.step(ps, k * ctx.dt, k);
    double vmax = 0.0, ymin = 1.0;
    for (std::size_t p = 0; p < ps.size(); ++p) {
        vmax = std::max(vmax, ps.velocity[p].norm());
        ymin = std::min(ymin, ps.position[p](1));
    }
    EXPECT_LT(vmax, 5e-3);
    EXPECT_GT(ymin, 0.1 - h);
    for (std::size_t p = 0; p < ps.size(); ++p) EXPECT_GT(det(ps.deformation[p]), 0.9);
}

TEST(Step, PressurizedAirExpands) {
    const double h = 1.0 / 64;
    auto ctx = test::plain_context<2>(64, h, 1e-5);
    ctx.waveform.pressures = {2e3};
    ParticleSet<2> ps;
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            ps.add(Vec<2>(0.45 + (i + 0.5) * 0.5 * h, 0.45 + (j + 0.5) * 0.5 * h), 0.25 * h * h, Phase::Fluid, -1);
            ps.mass.back() = ctx.fluid.density * 0.25 * h * h;
        }
    Stepper<2> stepper(ctx);
    for (int k = 0; k < 200; ++k) stepper.step(ps, k * ctx.dt, k);
    double jmean = 0.0;
    for (const auto& f : ps.deformation) jmean += det(f);
    EXPECT_GT(jmean / ps.size(), 1.0);
}

TEST(Stability, ArtificialAirDensityPassesPhysicalFails) {
    FluidMaterial air;
    EXPECT_NEAR(fluid_wave_speed(air), 37.4, 0.05);
    const auto solid = test::soft_solid();
    const auto ok = stable_dt<3>(solid, air, 1.75e-3, 1e-5);
    EXPECT_TRUE(ok.dt_ok);
    EXPECT_LT(1e-5 * fluid_wave_speed(air), 1.75e-3);
    air.density = 1.2;
    EXPECT_NEAR(fluid_wave_speed(air), 342.0, 0.5);
    EXPECT_FALSE(stable_dt<3>(solid, air, 1.75e-3, 1e-5).dt_ok);
    EXPECT_GT(1e-5 * fluid_wave_speed(air), 1.75e-3);
}

TEST(Stability, InvalidMaterials) {
    auto solid = test::soft_solid();
    solid.lambda = 0.0;
    solid.mu = 0.0;
    EXPECT_THROW(stable_dt<3>(solid, FluidMaterial{}, 1e-3, 1e-5), ParameterError);
    FluidMaterial air;
    air.density = 0.0;
    EXPECT_THROW(fluid_wave_speed(air), ParameterError);
}
