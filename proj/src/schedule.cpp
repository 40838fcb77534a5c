#include "sdb/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sdb/errors.hpp"

namespace sdb {

namespace {

constexpr double kTimeSlack = 1e-12;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Antiderivative of (sqrt(b0) + u (sqrt(b1) - sqrt(b0)))^2 from 0 to u.
double ghat_integral(double a, double k, double u) {
    return a * a * u + a * k * u * u + k * k * u * u * u / 3.0;
}

double ghat(double a, double k, double u) {
    const double r = a + k * u;
    return r * r;
}

}  // namespace

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::SB: return "SB";
        case Variant::VP: return "VP";
        case Variant::VE: return "VE";
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    std::string up(name);
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
    if (up == "SB") return Variant::SB;
    if (up == "VP") return Variant::VP;
    if (up == "VE") return Variant::VE;
    throw ParameterError("unknown schedule variant '" + std::string(name) + "'");
}

void ScheduleSpec::validate() const {
    if (!(eps1 > 0.0 && eps1 < 0.5) || !(eps2 > 0.0 && eps2 < 0.5)) {
        throw ParameterError("eps1 and eps2 must lie in (0, 0.5)");
    }
    switch (variant) {
        case Variant::SB:
            if (!(b0 > 0.0) || !(b1 > 0.0) || !std::isfinite(b0) || !std::isfinite(b1)) {
                throw ParameterError("SB schedule requires b0 > 0 and b1 > 0");
            }
            break;
        case Variant::VE:
            if (!(sigma_max > 1.0) || !std::isfinite(sigma_max)) {
                throw ParameterError("VE schedule requires sigma_max > 1");
            }
            break;
        case Variant::VP: break;
    }
}

ScheduleSpec ScheduleSpec::sb(double b0, double b1, double eps1, double eps2) {
    ScheduleSpec s;
    s.variant = Variant::SB;
    s.b0 = b0;
    s.b1 = b1;
    s.eps1 = eps1;
    s.eps2 = eps2;
    return s;
}

ScheduleSpec ScheduleSpec::vp(double eps1, double eps2) {
    ScheduleSpec s;
    s.variant = Variant::VP;
    s.eps1 = eps1;
    s.eps2 = eps2;
    return s;
}

ScheduleSpec ScheduleSpec::ve(double sigma_max, double eps1, double eps2) {
    ScheduleSpec s;
    s.variant = Variant::VE;
    s.sigma_max = sigma_max;
    s.eps1 = eps1;
    s.eps2 = eps2;
    return s;
}

double sb_g2(const ScheduleSpec& spec, double t) {
    const double a = std::sqrt(spec.b0);
    const double k = std::sqrt(spec.b1) - a;
    return t <= 0.5 ? ghat(a, k, t) : ghat(a, k, 1.0 - t);
}

std::pair<double, double> sb_variances(const ScheduleSpec& spec, double t) {
    const double a = std::sqrt(spec.b0);
    const double k = std::sqrt(spec.b1) - a;
    const double half = ghat_integral(a, k, 0.5);
    // g^2 is symmetric about 1/2, so bar sigma_t^2 = sigma_{1-t}^2. Each side
    // is evaluated from its nearer endpoint to keep small values accurate.
    auto forward = [&](double u) { return u <= 0.5 ? ghat_integral(a, k, u) : 2.0 * half - ghat_integral(a, k, 1.0 - u); };
    return {forward(t), forward(1.0 - t)};
}

ScheduleCoeffs eval_unclipped(const ScheduleSpec& spec, double t) {
    spec.validate();
    if (!(t >= 0.0 && t <= 1.0)) {
        throw DomainError("schedule time " + fmt(t) + " outside [0, 1]");
    }
    ScheduleCoeffs c;
    c.t = t;
    switch (spec.variant) {
        case Variant::SB: {
            const auto [s2, sbar2] = sb_variances(spec, t);
            const double total = s2 + sbar2;
            const double g2 = sb_g2(spec, t);
            c.alpha = sbar2 / total;
            c.beta = s2 * sbar2 / total;
            c.gamma = s2 / total;
            c.dalpha_dt = -g2 / total;
            c.dbeta_dt = g2 * (sbar2 - s2) / total;
            c.dgamma_dt = g2 / total;
            c.dlog_alpha_dt = -g2 / sbar2;
            break;
        }
        case Variant::VP: {
            const double rt = std::sqrt(t);
            c.alpha = 1.0 - t;
            c.beta = rt;
            c.gamma = rt;
            c.dalpha_dt = -1.0;
            c.dbeta_dt = 0.5 / rt;
            c.dgamma_dt = 0.5 / rt;
            c.dlog_alpha_dt = -1.0 / (1.0 - t);
            break;
        }
        case Variant::VE: {
            const double rt = std::sqrt(t);
            c.alpha = 1.0;
            c.beta = spec.sigma_max * rt;
            c.gamma = rt;
            c.dalpha_dt = 0.0;
            c.dbeta_dt = 0.5 * spec.sigma_max / rt;
            c.dgamma_dt = 0.5 / rt;
            c.dlog_alpha_dt = 0.0;
            break;
        }
    }
    c.gnull_sq = c.dbeta_dt - 2.0 * c.beta * c.dlog_alpha_dt;
    c.f_range = c.dgamma_dt / c.gamma;
    c.f_null = c.dbeta_dt / c.beta;
    return c;
}

ScheduleCoeffs eval(const ScheduleSpec& spec, double t) {
    spec.validate();
    if (!(t >= spec.t_end() - kTimeSlack && t <= spec.t_start() + kTimeSlack)) {
        std::ostringstream msg;
        msg << "schedule time " << fmt(t) << " outside the clipped interval [" << fmt(spec.t_end()) << ", "
            << fmt(spec.t_start()) << "]";
        throw DomainError(msg.str());
    }
    return eval_unclipped(spec, std::clamp(t, spec.t_end(), spec.t_start()));
}

double verify_g2_identity(const ScheduleSpec& spec, std::span<const double> grid) {
    if (spec.variant != Variant::SB) {
        throw UnsupportedVariant("g^2 identity is defined for the SB variant only");
    }
    double worst = 0.0;
    for (double t : grid) {
        const ScheduleCoeffs c = eval(spec, t);
        const double lhs = c.dbeta_dt - 2.0 * c.beta * c.dlog_alpha_dt;
        worst = std::max(worst, std::abs(lhs - sb_g2(spec, t)));
    }
    return worst;
}

TerminalLimits terminal_limits(const ScheduleSpec& spec) {
    const ScheduleCoeffs c = eval(spec, spec.t_start());
    return {c.gamma, c.alpha * c.alpha / c.beta};
}

std::string canonical_string(const ScheduleSpec& spec) {
    std::string s = "variant=" + std::string(to_string(spec.variant));
    if (spec.variant == Variant::SB) s += ";b0=" + fmt(spec.b0) + ";b1=" + fmt(spec.b1);
    if (spec.variant == Variant::VE) s += ";sigma_max=" + fmt(spec.sigma_max);
    s += ";eps1=" + fmt(spec.eps1) + ";eps2=" + fmt(spec.eps2);
    return s;
}

}  // namespace sdb
