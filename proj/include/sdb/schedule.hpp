#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace sdb {

enum class Variant { SB, VP, VE };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

/// Parameters of one coefficient schedule. Only the fields relevant to the
/// chosen variant are read; `validate` rejects out-of-range values.
struct ScheduleSpec {
    Variant variant = Variant::SB;
    double b0 = 0.1;          // SB: g^2 at t = 0
    double b1 = 0.3;          // SB: g^2 at t = 0.5
    double sigma_max = 10.0;  // VE terminal scale
    double eps1 = 1e-3;       // sampling starts at 1 - eps1
    double eps2 = 1e-3;       // sampling ends at eps2

    void validate() const;
    double t_start() const { return 1.0 - eps1; }
    double t_end() const { return eps2; }

    static ScheduleSpec sb(double b0, double b1, double eps1 = 1e-3, double eps2 = 1e-3);
    static ScheduleSpec vp(double eps1 = 1e-3, double eps2 = 1e-3);
    static ScheduleSpec ve(double sigma_max, double eps1 = 1e-3, double eps2 = 1e-3);
};

/// Scalar coefficients of the bridge at one time, with analytic derivatives.
struct ScheduleCoeffs {
    double t = 0.0;
    double alpha = 1.0;   // null-space signal weight
    double beta = 0.0;    // null-space noise variance
    double gamma = 0.0;   // range-space noise weight
    double dalpha_dt = 0.0;
    double dbeta_dt = 0.0;
    double dgamma_dt = 0.0;
    double dlog_alpha_dt = 0.0;
    double gnull_sq = 0.0;   // d(beta)/dt - 2 beta d(log alpha)/dt
    double f_range = 0.0;    // gamma'/gamma
    double f_null = 0.0;     // beta'/beta
};

/// Coefficients at `t`, which must lie in [eps2, 1 - eps1].
ScheduleCoeffs eval(const ScheduleSpec& spec, double t);

/// Same formulas without the clipping check; t must be in [0, 1]. Endpoint
/// values may be infinite (e.g. SB's f_range at t = 0).
ScheduleCoeffs eval_unclipped(const ScheduleSpec& spec, double t);

/// SB diffusion rate g^2(t), symmetric about t = 0.5.
double sb_g2(const ScheduleSpec& spec, double t);

/// SB accumulated variances: sigma_t^2 = int_0^t g^2 and bar sigma_t^2 = int_t^1 g^2.
std::pair<double, double> sb_variances(const ScheduleSpec& spec, double t);

/// max over `grid` of |d(beta)/dt - 2 beta d(log alpha)/dt - g^2(t)|. SB only.
double verify_g2_identity(const ScheduleSpec& spec, std::span<const double> grid);

struct TerminalLimits {
    double gamma = 0.0;
    double alpha_sq_over_beta = 0.0;
};

/// gamma and alpha^2/beta at t = 1 - eps1.
TerminalLimits terminal_limits(const ScheduleSpec& spec);

/// Canonical text form; used for hashing and config round trips.
std::string canonical_string(const ScheduleSpec& spec);

}  // namespace sdb
