#include "helpers.hpp"

#include <vector>

#include "sdb/errors.hpp"
#include "sdb/forward.hpp"
#include "sdb/oracle.hpp"

using namespace sdb;
using sdb::test::gaussian_matrix;
using sdb::test::max_abs;

namespace {

LinearSystem mask_r2() {
    Matrix a(1, 2);
    a << 1.0, 0.0;
    return build_dense_system(a, NoiseFactor::none());
}

}  // namespace

TEST_CASE("noiseless forward draws keep the range component exactly") {
    Rng rng(1);
    const Matrix a = gaussian_matrix(2, 4, rng);
    const LinearSystem sys = build_dense_system(a, NoiseFactor::none());
    const Vector x0 = rng.normal_vector(4);
    for (double t : {0.1, 0.5, 0.9}) {
        const ProcessState s = forward_sample(sys, eval(ScheduleSpec::sb(0.1, 0.3), t), x0, rng);
        CHECK(max_abs(project_range(sys, s.x) - project_range(sys, x0)) < 1e-12);
        CHECK(s.t == t);
    }
}

TEST_CASE("VP at t = 1 on a pure-null system returns the null noise") {
    const LinearSystem sys = build_dense_system(Matrix::Zero(2, 3), NoiseFactor::none());
    const ScheduleCoeffs c = eval_unclipped(ScheduleSpec::vp(), 1.0);
    Rng rng(2);
    const Vector eps_null = rng.normal_vector(3);
    const Vector xt = forward_sample_with_noise(sys, c, Vector::Constant(3, 5.0), Vector::Zero(2), eps_null);
    CHECK(max_abs(xt - eps_null) < 1e-15);
}

TEST_CASE("range covariance scales with gamma") {
    const double sigma = 0.7;
    const LinearSystem sys = build_dense_system(Matrix::Identity(3, 3), sigma);
    ScheduleCoeffs c;
    c.alpha = 0.5;
    c.gamma = 0.25;
    c.beta = 0.1;
    Rng rng(3);
    const int n = 100000;
    Matrix draws(3, n);
    for (int j = 0; j < n; ++j) draws.col(j) = forward_sample(sys, c, Vector::Zero(3), rng).x;
    const GaussianBelief est = empirical_moments(draws);
    CHECK(sdb::test::rel_frobenius(est.cov, 0.25 * sigma * sigma * Matrix::Identity(3, 3)) < 0.03);
}

TEST_CASE("analytic marginals") {
    SUBCASE("identity system without noise") {
        const LinearSystem sys = build_dense_system(Matrix::Identity(3, 3), NoiseFactor::none());
        const Vector x0 = Vector::LinSpaced(3, 1.0, 3.0);
        const GaussianBelief g = analytic_marginal(sys, eval(ScheduleSpec::vp(), 0.4), x0);
        CHECK(max_abs(g.mean - x0) < 1e-15);
        CHECK(max_abs(g.cov) < 1e-15);
    }
    SUBCASE("R2 mask with alpha = 0.5, beta = 0.25") {
        ScheduleCoeffs c;
        c.alpha = 0.5;
        c.beta = 0.25;
        c.gamma = 0.3;
        Vector x0(2);
        x0 << 2.0, 4.0;
        const GaussianBelief g = analytic_marginal(mask_r2(), c, x0);
        CHECK(g.mean[0] == doctest::Approx(2.0));
        CHECK(g.mean[1] == doctest::Approx(2.0));
        CHECK(max_abs(g.cov - Eigen::Vector2d(0.0, 0.25).asDiagonal().toDenseMatrix()) < 1e-15);
    }
    SUBCASE("identity with Sigma = diag(1, 4), gamma = 0.5") {
        Matrix s = Matrix::Zero(2, 2);
        s(0, 0) = 1.0;
        s(1, 1) = 2.0;
        const LinearSystem sys = build_dense_system(Matrix::Identity(2, 2), NoiseFactor::dense(s));
        ScheduleCoeffs c;
        c.alpha = 0.7;
        c.beta = 0.2;
        c.gamma = 0.5;
        const GaussianBelief g = analytic_marginal(sys, c, Vector::Zero(2));
        CHECK(g.cov(0, 0) == doctest::Approx(0.5));
        CHECK(g.cov(1, 1) == doctest::Approx(2.0));
        CHECK(g.cov(0, 1) == doctest::Approx(0.0));
    }
}

TEST_CASE("drift operator") {
    Rng rng(4);
    const Matrix a = gaussian_matrix(2, 4, rng);
    const LinearSystem sys = build_dense_system(a, 0.3);
    const Vector x = rng.normal_vector(4);
    SUBCASE("VE has zero drift") {
        CHECK(max_abs(drift_diffusion(sys, eval(ScheduleSpec::ve(10.0), 0.3)).apply_F(x)) == 0.0);
    }
    SUBCASE("VP at t = 0.5 scales the null part by -2") {
        const DriftDiffusion dd = drift_diffusion(sys, eval(ScheduleSpec::vp(), 0.5));
        CHECK(max_abs(dd.apply_F(x) + 2.0 * project_null(sys, x)) < 1e-12);
    }
    SUBCASE("drift annihilates range vectors and commutes across times") {
        const Vector r = project_range(sys, x);
        const DriftDiffusion d1 = drift_diffusion(sys, eval(ScheduleSpec::sb(0.1, 0.3), 0.2));
        const DriftDiffusion d2 = drift_diffusion(sys, eval(ScheduleSpec::sb(0.1, 0.3), 0.7));
        CHECK(max_abs(d1.apply_F(r)) < 1e-12);
        CHECK(max_abs(d1.apply_F(d2.apply_F(x)) - d2.apply_F(d1.apply_F(x))) < 1e-12);
    }
    SUBCASE("negative null diffusion is rejected") {
        ScheduleCoeffs c = eval(ScheduleSpec::vp(), 0.5);
        c.gnull_sq = -1.0;
        CHECK_THROWS_AS(drift_diffusion(sys, c), ParameterError);
    }
}

TEST_CASE("integrating dH/dt = F H and dS/dt = F S + S F^T + G G^T reproduces the marginal") {
    Rng rng(5);
    const Matrix a = gaussian_matrix(2, 3, rng);
    const LinearSystem sys = build_dense_system(a, 0.4);
    for (const ScheduleSpec& spec : {ScheduleSpec::sb(0.1, 0.3), ScheduleSpec::vp(), ScheduleSpec::ve(5.0)}) {
        const double t0 = 0.05;
        const double t1 = 0.9;
        Matrix h = marginal_transition(sys, eval(spec, t0));
        Matrix s = marginal_covariance(sys, eval(spec, t0));
        const Matrix pn = Matrix::Identity(3, 3) - materialize_range_projector(sys);
        auto fmat = [&](double t) -> Matrix { return eval(spec, t).dlog_alpha_dt * pn; };
        auto dh = [&](double t, const Matrix& hm) -> Matrix { return fmat(t) * hm; };
        auto ds = [&](double t, const Matrix& sm) -> Matrix {
            const Matrix ft = fmat(t);
            return ft * sm + sm * ft.transpose() + diffusion_matrix(sys, eval(spec, t));
        };
        const int n = 2000;
        const double dt = (t1 - t0) / n;
        for (int k = 0; k < n; ++k) {
            const double t = t0 + k * dt;
            const Matrix k1 = dh(t, h), k2 = dh(t + dt / 2, h + dt / 2 * k1), k3 = dh(t + dt / 2, h + dt / 2 * k2),
                         k4 = dh(t + dt, h + dt * k3);
            h += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
            const Matrix q1 = ds(t, s), q2 = ds(t + dt / 2, s + dt / 2 * q1), q3 = ds(t + dt / 2, s + dt / 2 * q2),
                         q4 = ds(t + dt, s + dt * q3);
            s += dt / 6 * (q1 + 2 * q2 + 2 * q3 + q4);
        }
        CHECK(max_abs(h - marginal_transition(sys, eval(spec, t1))) < 1e-4);
        CHECK(max_abs(s - marginal_covariance(sys, eval(spec, t1))) < 1e-4);
    }
}

TEST_CASE("forward draws are affine in x0 for fixed noise") {
    Rng rng(6);
    const LinearSystem sys = build_dense_system(gaussian_matrix(2, 4, rng), 0.2);
    const ScheduleCoeffs c = eval(ScheduleSpec::sb(0.1, 0.3), 0.6);
    const Vector e = rng.normal_vector(2), en = rng.normal_vector(4);
    const Vector x = rng.normal_vector(4), z = rng.normal_vector(4);
    const Vector f0 = forward_sample_with_noise(sys, c, Vector::Zero(4), e, en);
    const Vector lhs = forward_sample_with_noise(sys, c, 2.0 * x - 3.0 * z, e, en) - f0;
    const Vector rhs = 2.0 * (forward_sample_with_noise(sys, c, x, e, en) - f0) -
                       3.0 * (forward_sample_with_noise(sys, c, z, e, en) - f0);
    CHECK(max_abs(lhs - rhs) < 1e-12);
}

TEST_CASE("range and null fluctuations are uncorrelated") {
    Rng rng(7);
    const LinearSystem sys = build_dense_system(gaussian_matrix(2, 3, rng), 0.5);
    const ScheduleCoeffs c = eval(ScheduleSpec::sb(0.2, 0.4), 0.6);
    const Vector x0 = rng.normal_vector(3);
    const int n = 100000;
    Matrix r(3, n), nl(3, n);
    const Vector mean = marginal_transition(sys, c) * x0;
    for (int j = 0; j < n; ++j) {
        const Vector dev = forward_sample(sys, c, x0, rng).x - mean;
        r.col(j) = project_range(sys, dev);
        nl.col(j) = project_null(sys, dev);
    }
    const Matrix cross = r * nl.transpose() / n;
    for (Index i = 0; i < 3; ++i) {
        for (Index k = 0; k < 3; ++k) {
            const double se = std::sqrt(r.row(i).squaredNorm() / n * nl.row(k).squaredNorm() / n / n);
            CHECK(std::abs(cross(i, k)) < 3.0 * se + 1e-15);
        }
    }
}

TEST_CASE("forward SDE reaches the SB terminal null variance") {
    const ScheduleSpec spec = ScheduleSpec::sb(0.1, 0.1);
    const int n = 20000;
    const ForwardTrajectory traj = simulate_forward_sde_batch(mask_r2(), spec, Matrix::Zero(2, n), 200, 8);
    const Matrix& xs = traj.states.back();
    CHECK(traj.times.back() == doctest::Approx(spec.t_start()));
    CHECK(max_abs(xs.row(0)) < 1e-12);
    const double var = xs.row(1).squaredNorm() / n;
    CHECK(var == doctest::Approx(eval(spec, spec.t_start()).beta).epsilon(0.05));
}

TEST_CASE("forward SDE matches the analytic marginal on a dense system") {
    Rng rng(9);
    const LinearSystem sys = build_dense_system(gaussian_matrix(3, 4, rng), 0.1);
    const Vector x0 = rng.normal_vector(4);
    const ScheduleSpec spec = ScheduleSpec::vp();
    const std::vector<double> cps{0.5};
    const ForwardTrajectory traj = simulate_forward_sde_batch(sys, spec, x0.replicate(1, 4000), 400, 10, cps);
    REQUIRE(traj.states.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
        const GaussianBelief ref = analytic_marginal(sys, eval(spec, traj.times[k]), x0);
        const GaussianBelief est = empirical_moments(traj.states[k]);
        CHECK(sdb::test::rel_frobenius(est.mean, ref.mean) < 0.05);
        CHECK(sdb::test::rel_frobenius(est.cov, ref.cov) < 0.1);
    }
    Rng single(11);
    const ProcessState end = simulate_forward_sde(sys, spec, x0, 50, single);
    CHECK(end.x.allFinite());
    CHECK(end.t == doctest::Approx(spec.t_start()));
}

TEST_CASE("forward helpers validate shapes") {
    Rng rng(12);
    const LinearSystem sys = mask_r2();
    const ScheduleCoeffs c = eval(ScheduleSpec::vp(), 0.5);
    CHECK_THROWS_AS(forward_sample(sys, c, Vector::Zero(3), rng), ContractViolation);
    CHECK_THROWS_AS(analytic_marginal(sys, c, Vector::Zero(1)), ContractViolation);
    const LinearSystem big = build_dense_system(Matrix::Zero(1, 300), NoiseFactor::none());
    CHECK_THROWS_AS(analytic_marginal(big, c, Vector::Zero(300)), CapacityError);
}
