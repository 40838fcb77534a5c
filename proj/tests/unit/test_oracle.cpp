#include "helpers.hpp"

#include "sdb/errors.hpp"
#include "sdb/forward.hpp"
#include "sdb/oracle.hpp"
#include "sdb/sampler.hpp"

using namespace sdb;
using sdb::test::gaussian_matrix;
using sdb::test::max_abs;

namespace {

GaussianBelief std_normal(Index d) { return {Vector::Zero(d), Matrix::Identity(d, d)}; }

GaussianBelief random_prior(Index d, Rng& rng) {
    const Matrix l = gaussian_matrix(d, d, rng);
    return {rng.normal_vector(d), l * l.transpose() / static_cast<double>(d) + 0.3 * Matrix::Identity(d, d)};
}

LinearSystem mask_r2(NoiseFactor noise = NoiseFactor::none()) {
    Matrix a(1, 2);
    a << 1.0, 0.0;
    return build_dense_system(a, std::move(noise));
}

}  // namespace

TEST_CASE("posterior for near-exact observation collapses onto y") {
    const LinearSystem sys = build_dense_system(Matrix::Identity(3, 3), 1e-6);
    const Vector y = Vector::LinSpaced(3, -1.0, 1.0);
    const GaussianBelief p = gaussian_posterior(std_normal(3), sys, y);
    CHECK(max_abs(p.mean - y) < 1e-9);
    CHECK(max_abs(p.cov) < 1e-9);
}

TEST_CASE("a zero operator leaves the prior unchanged") {
    Rng rng(1);
    const GaussianBelief prior = random_prior(3, rng);
    const LinearSystem sys = build_dense_system(Matrix::Zero(2, 3), 0.5);
    const GaussianBelief p = gaussian_posterior(prior, sys, rng.normal_vector(2));
    CHECK(max_abs(p.mean - prior.mean) < 1e-12);
    CHECK(max_abs(p.cov - prior.cov) < 1e-12);
}

TEST_CASE("hand-computed conjugate posterior on the R2 mask") {
    const LinearSystem sys = mask_r2(NoiseFactor::isotropic(std::sqrt(0.5)));
    const double y = 1.2;
    const GaussianBelief p = gaussian_posterior(std_normal(2), sys, Vector::Constant(1, y));
    CHECK(p.mean[0] == doctest::Approx(y / 1.5));
    CHECK(p.mean[1] == doctest::Approx(0.0));
    CHECK(p.cov(0, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(p.cov(1, 1) == doctest::Approx(1.0));
    CHECK(p.cov(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("conjugate posterior agrees with importance-weighted Monte Carlo") {
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const Index d = 1 + trial % 4;
        const Index m = 1 + trial % 3;
        const GaussianBelief prior = random_prior(d, rng);
        const double sigma = 0.8;
        const Matrix a = gaussian_matrix(m, d, rng);
        const LinearSystem sys = build_dense_system(a, sigma);
        const Vector x = prior.mean + psd_sqrt(prior.cov) * rng.normal_vector(d);
        const Vector y = a * x + sigma * rng.normal_vector(m);
        const GaussianBelief post = gaussian_posterior(prior, sys, y);

        const int n = 1000000;
        const Matrix root = psd_sqrt(prior.cov);
        std::vector<double> logw(n);
        Matrix xs(d, n);
        for (int j = 0; j < n; ++j) {
            xs.col(j) = prior.mean + root * rng.normal_vector(d);
            logw[static_cast<std::size_t>(j)] = -0.5 * (a * xs.col(j) - y).squaredNorm() / (sigma * sigma);
        }
        const double mx = *std::max_element(logw.begin(), logw.end());
        Vector w(n);
        for (int j = 0; j < n; ++j) w[j] = std::exp(logw[static_cast<std::size_t>(j)] - mx);
        w /= w.sum();
        const double ess = 1.0 / w.squaredNorm();
        const Vector mean = xs * w;
        for (Index i = 0; i < d; ++i) {
            const double var = post.cov(i, i);
            const double mean_se = std::sqrt(var / ess);
            CHECK(std::abs(mean[i] - post.mean[i]) < 3.0 * mean_se + 1e-12);
            const double est_var = ((xs.row(i).array() - mean[i]).square() * w.transpose().array()).sum();
            const double var_se = var * std::sqrt(2.0 / ess);
            CHECK(std::abs(est_var - var) < 3.0 * var_se + 1e-12);
        }
    }
}

TEST_CASE("oracle denoiser limits and scalar formula") {
    SUBCASE("approaches the identity at the SB clean end") {
        Rng rng(3);
        const LinearSystem sys = build_dense_system(gaussian_matrix(2, 3, rng), NoiseFactor::none());
        const ScheduleSpec spec = ScheduleSpec::sb(0.1, 0.3, 1e-3, 1e-6);
        const Denoiser den = oracle_denoiser(std_normal(3), sys, spec);
        const Vector x = rng.normal_vector(3);
        CHECK(max_abs(den(x, 1e-6) - x) < 1e-4);
    }
    SUBCASE("point-mass prior returns its mean") {
        Rng rng(4);
        const LinearSystem sys = build_dense_system(gaussian_matrix(2, 3, rng), 0.3);
        const GaussianBelief point{Vector::Constant(3, 0.7), 1e-12 * Matrix::Identity(3, 3)};
        const Denoiser den = oracle_denoiser(point, sys, ScheduleSpec::vp());
        CHECK(max_abs(den(rng.normal_vector(3), 0.4) - point.mean) < 1e-4);
    }
    SUBCASE("R2 mask, VP at t = 0.5, null coordinate") {
        const Denoiser den = oracle_denoiser(std_normal(2), mask_r2(), ScheduleSpec::vp());
        Vector x(2);
        x << 0.3, 1.7;
        const double alpha = 0.5;
        const double beta = std::sqrt(0.5);
        const Vector out = den(x, 0.5);
        CHECK(out[1] == doctest::Approx(alpha * x[1] / (alpha * alpha + beta)).epsilon(1e-12));
        CHECK(out[0] == doctest::Approx(x[0]).epsilon(1e-12));
    }
    SUBCASE("matches a regression estimate from forward draws") {
        const LinearSystem sys = mask_r2();
        const ScheduleCoeffs c = eval(ScheduleSpec::vp(), 0.5);
        Rng rng(5);
        const int n = 100000;
        double sxx = 0.0, sxy = 0.0;
        for (int j = 0; j < n; ++j) {
            const Vector x0 = rng.normal_vector(2);
            const Vector xt = forward_sample(sys, c, x0, rng).x;
            sxx += xt[1] * xt[1];
            sxy += xt[1] * x0[1];
        }
        const double slope = sxy / sxx;
        const double expect = 0.5 / (0.25 + std::sqrt(0.5));
        CHECK(slope == doctest::Approx(expect).epsilon(0.02));
    }
}

TEST_CASE("oracle denoiser is affine with constant Jacobian") {
    Rng rng(6);
    const LinearSystem sys = build_dense_system(gaussian_matrix(2, 4, rng), 0.4);
    const Denoiser den = oracle_denoiser(random_prior(4, rng), sys, ScheduleSpec::sb(0.1, 0.3));
    const double h = 1e-3;
    auto jac = [&](const Vector& x) {
        Matrix j(4, 4);
        for (Index k = 0; k < 4; ++k) {
            Vector e = Vector::Zero(4);
            e[k] = h;
            j.col(k) = (den(Vector(x + e), 0.3) - den(Vector(x - e), 0.3)) / (2 * h);
        }
        return j;
    };
    const Matrix j0 = jac(rng.normal_vector(4));
    const Matrix j1 = jac(10.0 * rng.normal_vector(4));
    CHECK(max_abs(j0 - j1) < 1e-8);
}

TEST_CASE("tower property: averaging the denoiser over forward draws gives the prior mean") {
    Rng rng(7);
    const LinearSystem sys = build_dense_system(gaussian_matrix(2, 3, rng), 0.3);
    const GaussianBelief prior = random_prior(3, rng);
    const ScheduleSpec spec = ScheduleSpec::vp();
    const ScheduleCoeffs c = eval(spec, 0.6);
    const Denoiser den = oracle_denoiser(prior, sys, spec);
    const Matrix root = psd_sqrt(prior.cov);
    const int n = 100000;
    Matrix xt(3, n);
    for (int j = 0; j < n; ++j) xt.col(j) = forward_sample(sys, c, Vector(prior.mean + root * rng.normal_vector(3)), rng).x;
    const Matrix d = den(xt, 0.6);
    const Vector mean = d.rowwise().mean();
    const GaussianBelief em = empirical_moments(d);
    for (Index i = 0; i < 3; ++i) CHECK(std::abs(mean[i] - prior.mean[i]) < 4.0 * std::sqrt(em.cov(i, i) / n) + 1e-12);
}

TEST_CASE("dense score") {
    Rng rng(8);
    const LinearSystem sys = build_dense_system(gaussian_matrix(2, 3, rng), 0.5);
    const GaussianBelief prior = random_prior(3, rng);
    const ScheduleCoeffs c = eval(ScheduleSpec::sb(0.1, 0.3), 0.4);
    SUBCASE("zero at the marginal mean") {
        const GaussianBelief marg = gaussian_marginal(prior, sys, c);
        const DenseScore s = dense_score(prior, sys, c, marg.mean);
        CHECK(max_abs(s.score) < 1e-10);
        CHECK_FALSE(s.restricted);
    }
    SUBCASE("isotropic marginal gives -x / sigma^2") {
        const LinearSystem id = build_dense_system(Matrix::Identity(2, 2), 1.0);
        ScheduleCoeffs k;
        k.alpha = 1.0;
        k.gamma = 0.5;
        const GaussianBelief g{Vector::Zero(2), 1.5 * Matrix::Identity(2, 2)};
        const Vector x = rng.normal_vector(2);
        CHECK(max_abs(dense_score(g, id, k, x).score + x / 2.0) < 1e-12);
    }
    SUBCASE("sampler drift equals G G^T times the score at d = 3") {
        const Vector xt = rng.normal_vector(3);
        const Vector denoised = posterior_mean_map(prior, sys, c).apply_cols(xt);
        const Vector lhs = score_drift(sys, c, xt, denoised);
        const Vector rhs = diffusion_matrix(sys, c) * dense_score(prior, sys, c, xt).score;
        CHECK(max_abs(lhs - rhs) < 1e-8);
    }
    SUBCASE("noiseless systems restrict the score to the support") {
        const LinearSystem clean = mask_r2();
        const ScheduleCoeffs k = eval(ScheduleSpec::vp(), 0.5);
        const GaussianBelief point{Vector::Zero(2), Matrix::Zero(2, 2)};
        CHECK(dense_score(point, clean, k, Vector::Ones(2)).restricted);
    }
}

TEST_CASE("dense score integrates to a normalized density in one dimension") {
    const LinearSystem sys = build_dense_system(Matrix::Identity(1, 1), 0.5);
    const GaussianBelief prior{Vector::Constant(1, 0.3), Matrix::Constant(1, 1, 0.8)};
    const ScheduleCoeffs c = eval(ScheduleSpec::vp(), 0.5);
    const GaussianBelief marg = gaussian_marginal(prior, sys, c);
    const double sd = std::sqrt(marg.cov(0, 0));
    const double lo = marg.mean[0] - 12.0 * sd;
    const double hi = marg.mean[0] + 12.0 * sd;
    const int n = 200000;
    const double h = (hi - lo) / n;
    // log p(x) = integral of the score from the mean; then normalize by quadrature.
    std::vector<double> logp(n + 1);
    const int mid = n / 2;
    auto score = [&](double x) { return dense_score(prior, sys, c, Vector::Constant(1, x)).score[0]; };
    logp[static_cast<std::size_t>(mid)] = 0.0;
    for (int i = mid + 1; i <= n; ++i)
        logp[static_cast<std::size_t>(i)] = logp[static_cast<std::size_t>(i - 1)] + 0.5 * h * (score(lo + (i - 1) * h) + score(lo + i * h));
    for (int i = mid - 1; i >= 0; --i)
        logp[static_cast<std::size_t>(i)] = logp[static_cast<std::size_t>(i + 1)] - 0.5 * h * (score(lo + (i + 1) * h) + score(lo + i * h));
    double z = 0.0;
    for (int i = 0; i <= n; ++i) z += (i == 0 || i == n ? 0.5 : 1.0) * std::exp(logp[static_cast<std::size_t>(i)]) * h;
    const double x_mid = lo + mid * h;
    const double expected_peak = std::exp(-0.5 * std::pow(x_mid - marg.mean[0], 2) / marg.cov(0, 0)) / (std::sqrt(2 * M_PI) * sd);
    CHECK(1.0 / z == doctest::Approx(expected_peak).epsilon(1e-6));
}

TEST_CASE("capacity limit") {
    const LinearSystem sys = build_dense_system(Matrix::Zero(1, 300), NoiseFactor::none());
    CHECK_THROWS_AS(oracle_denoiser(std_normal(300), sys, ScheduleSpec::vp()), CapacityError);
}
