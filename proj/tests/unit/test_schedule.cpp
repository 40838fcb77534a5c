#include "helpers.hpp"

#include <vector>

#include "sdb/errors.hpp"
#include "sdb/schedule.hpp"

using namespace sdb;

namespace {

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
    return g;
}

// Trapezoid integral of g^2 over [lo, hi].
double quad_g2(const ScheduleSpec& spec, double lo, double hi, int n) {
    const double h = (hi - lo) / n;
    double s = 0.5 * (sb_g2(spec, lo) + sb_g2(spec, hi));
    for (int i = 1; i < n; ++i) s += sb_g2(spec, lo + i * h);
    return s * h;
}

}  // namespace

TEST_CASE("VP coefficients at t = 0.5") {
    const ScheduleCoeffs c = eval(ScheduleSpec::vp(), 0.5);
    CHECK(c.alpha == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(c.beta == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
    CHECK(c.gamma == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
    CHECK(c.dlog_alpha_dt == doctest::Approx(-2.0));
}

TEST_CASE("SB approaches the clean endpoint near t = 0") {
    const ScheduleCoeffs c = eval_unclipped(ScheduleSpec::sb(0.1, 0.3), 1e-9);
    CHECK(c.alpha == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(c.beta < 1e-9);
    CHECK(c.gamma < 1e-8);
    const ScheduleCoeffs z = eval_unclipped(ScheduleSpec::sb(0.1, 0.3), 0.0);
    CHECK(z.alpha == 1.0);
    CHECK(z.beta == 0.0);
    CHECK(z.gamma == 0.0);
}

TEST_CASE("SB with constant g^2 has the closed-form coefficients") {
    const double c = 0.2;
    const ScheduleSpec spec = ScheduleSpec::sb(c, c);
    for (double t : {0.01, 0.2, 0.5, 0.77, 0.99}) {
        const ScheduleCoeffs k = eval(spec, t);
        CHECK(k.alpha == doctest::Approx(1.0 - t).epsilon(1e-12));
        CHECK(k.beta == doctest::Approx(c * t * (1.0 - t)).epsilon(1e-12));
        CHECK(k.gamma == doctest::Approx(t).epsilon(1e-12));
        const auto [s, sbar] = sb_variances(spec, t);
        CHECK(s == doctest::Approx(c * t).epsilon(1e-12));
        CHECK(sbar == doctest::Approx(c * (1.0 - t)).epsilon(1e-12));
    }
}

TEST_CASE("SB variances match quadrature of g^2") {
    for (const ScheduleSpec& spec : {ScheduleSpec::sb(0.2, 0.2), ScheduleSpec::sb(0.01, 1.0), ScheduleSpec::sb(2.0, 0.05)}) {
        for (double t : {0.1, 0.5, 0.8}) {
            const auto [s, sbar] = sb_variances(spec, t);
            CHECK(std::abs(s - quad_g2(spec, 0.0, t, 1000000)) < 1e-9);
            CHECK(std::abs(sbar - quad_g2(spec, t, 1.0, 1000000)) < 1e-9);
        }
    }
}

TEST_CASE("g^2 identity") {
    const auto grid = linspace(1e-3, 1.0 - 1e-3, 101);
    CHECK(verify_g2_identity(ScheduleSpec::sb(0.1, 0.1), grid) < 1e-8);
    CHECK(verify_g2_identity(ScheduleSpec::sb(0.01, 1.0), grid) < 1e-8);
    CHECK_THROWS_AS(verify_g2_identity(ScheduleSpec::vp(), grid), UnsupportedVariant);
}

TEST_CASE("terminal limits") {
    SUBCASE("VP") {
        const TerminalLimits l = terminal_limits(ScheduleSpec::vp());
        CHECK(l.gamma == doctest::Approx(std::sqrt(0.999)).epsilon(1e-12));
        CHECK(l.alpha_sq_over_beta == doctest::Approx(1e-6 / std::sqrt(0.999)).epsilon(1e-9));
    }
    SUBCASE("VE") {
        const TerminalLimits l = terminal_limits(ScheduleSpec::ve(10.0));
        CHECK(l.gamma == doctest::Approx(std::sqrt(0.999)).epsilon(1e-12));
        CHECK(l.alpha_sq_over_beta == doctest::Approx(1.0 / (10.0 * std::sqrt(0.999))).epsilon(1e-12));
    }
    SUBCASE("SB with constant g^2") {
        const double c = 0.3;
        const TerminalLimits l = terminal_limits(ScheduleSpec::sb(c, c));
        CHECK(l.gamma == doctest::Approx(0.999).epsilon(1e-12));
        CHECK(l.alpha_sq_over_beta == doctest::Approx(1e-6 / (c * 0.999 * 1e-3)).epsilon(1e-9));
    }
}

TEST_CASE("domain and parameter errors") {
    CHECK_THROWS_AS(eval(ScheduleSpec::vp(), 0.9995), DomainError);
    CHECK_THROWS_AS(eval(ScheduleSpec::vp(), 0.0), DomainError);
    CHECK_THROWS_AS(eval(ScheduleSpec::sb(0.0, 0.3), 0.5), ParameterError);
    CHECK_THROWS_AS(ScheduleSpec::ve(0.5).validate(), ParameterError);
    CHECK_THROWS_AS(ScheduleSpec::sb(0.1, 0.3, 0.6, 1e-3).validate(), ParameterError);
    CHECK(parse_variant("vp") == Variant::VP);
    CHECK(parse_variant("SB") == Variant::SB);
    CHECK_THROWS(parse_variant("XX"));
}

TEST_CASE("analytic derivatives match central differences") {
    Rng rng(11);
    const double h = 1e-6;
    for (const ScheduleSpec& spec : {ScheduleSpec::sb(0.1, 0.3), ScheduleSpec::sb(0.02, 2.0), ScheduleSpec::vp(),
                                     ScheduleSpec::ve(10.0)}) {
        for (int i = 0; i < 50; ++i) {
            const double t = rng.uniform(0.01, 0.99);
            const ScheduleCoeffs c = eval(spec, t);
            const ScheduleCoeffs up = eval(spec, t + h);
            const ScheduleCoeffs dn = eval(spec, t - h);
            auto close = [](double fd, double an) { return std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(an)); };
            CHECK(close((up.alpha - dn.alpha) / (2 * h), c.dalpha_dt));
            CHECK(close((up.beta - dn.beta) / (2 * h), c.dbeta_dt));
            CHECK(close((up.gamma - dn.gamma) / (2 * h), c.dgamma_dt));
            CHECK(c.dlog_alpha_dt == doctest::Approx(c.dalpha_dt / c.alpha));
        }
    }
}

TEST_CASE("SB total variance is constant in t") {
    const ScheduleSpec spec = ScheduleSpec::sb(0.05, 0.7);
    const auto [s0, sb0] = sb_variances(spec, 0.0);
    for (double t : linspace(0.0, 1.0, 57)) {
        const auto [s, sbar] = sb_variances(spec, t);
        CHECK(std::abs(s + sbar - (s0 + sb0)) < 1e-12);
    }
}

TEST_CASE("VP and VE align range and null rates; SB does not") {
    for (double t : {0.1, 0.4, 0.9}) {
        const ScheduleCoeffs vp = eval(ScheduleSpec::vp(), t);
        const ScheduleCoeffs ve = eval(ScheduleSpec::ve(20.0), t);
        CHECK(vp.f_range == doctest::Approx(vp.f_null).epsilon(1e-12));
        CHECK(ve.f_range == doctest::Approx(ve.f_null).epsilon(1e-12));
    }
    const ScheduleCoeffs sb = eval(ScheduleSpec::sb(0.1, 0.3), 0.3);
    CHECK(std::abs(sb.f_range - sb.f_null) > 1e-3);
}

TEST_CASE("coefficients stay finite and in range on tightly clipped grids") {
    for (const ScheduleSpec& spec : {ScheduleSpec::sb(0.1, 0.3, 1e-4, 1e-4), ScheduleSpec::vp(1e-4, 1e-4),
                                     ScheduleSpec::ve(10.0, 1e-4, 1e-4)}) {
        for (double t : linspace(1e-4, 1.0 - 1e-4, 1001)) {
            const ScheduleCoeffs c = eval(spec, t);
            const double vals[] = {c.alpha, c.beta, c.gamma, c.dalpha_dt, c.dbeta_dt, c.dgamma_dt,
                                   c.dlog_alpha_dt, c.gnull_sq, c.f_range, c.f_null};
            for (double v : vals) CHECK(std::isfinite(v));
            CHECK(c.alpha > 0.0);
            CHECK(c.alpha <= 1.0);
            CHECK(c.beta >= 0.0);
            CHECK(c.gamma >= 0.0);
            CHECK(c.gnull_sq >= -1e-12);
        }
    }
}

TEST_CASE("canonical string distinguishes schedules") {
    CHECK(canonical_string(ScheduleSpec::sb(0.1, 0.3)) != canonical_string(ScheduleSpec::sb(0.1, 0.31)));
    CHECK(canonical_string(ScheduleSpec::vp()) == canonical_string(ScheduleSpec::vp()));
}
