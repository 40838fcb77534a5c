#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "sdb/denoiser.hpp"
#include "sdb/forward.hpp"
#include "sdb/linop.hpp"
#include "sdb/rng.hpp"
#include "sdb/schedule.hpp"

namespace sdb {

/// Placement of the reverse-time nodes between 1 - eps1 and eps2.
enum class TimeGrid {
    uniform,  // equal steps in t
    logit,    // equal steps in log(t / (1 - t)); refines both endpoints
};

std::string_view to_string(TimeGrid g);
TimeGrid parse_time_grid(std::string_view name);

struct SamplerConfig {
    int n_steps = 100;
    ScheduleSpec spec;
    /// Hold the range component at A+y when the system is noiseless.
    /// Unset means "on exactly when Sigma = 0".
    std::optional<bool> noiseless_range_lock;
    std::uint64_t seed = 0;
    TimeGrid grid = TimeGrid::uniform;
    /// Keep every k-th state in the trace (0 = final state only).
    int checkpoint_every = 0;
    int threads = 1;

    void validate() const;
    bool range_lock_for(const LinearSystem& sys) const;
};

struct SampleTrace {
    std::vector<ProcessState> states;
    Vector final;
};

/// Reverse-time nodes, starting at 1 - eps1 and ending at eps2.
std::vector<double> reverse_time_grid(const ScheduleSpec& spec, int n_steps, TimeGrid grid);

/// PR plus null-space noise at scale sqrt(beta) at t = 1 - eps1.
ProcessState initialize(const LinearSystem& sys, const ScheduleSpec& spec, const Vector& y, Rng& rng);

/// G_t G_t^T grad log p(x_t) written through the x0-prediction `denoised`:
///   f_range A+A (D - x) + (f_null - 2 dlog(alpha)/dt) (I - A+A)(alpha D - x).
/// The range term is dropped for noiseless systems.
Matrix score_drift_cols(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Matrix& x, const Matrix& denoised);
Vector score_drift(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Vector& x, const Vector& denoised);

/// One Euler-Maruyama step of the reverse SDE from t to t - dt. When
/// `locked_range` is given the range component is reset to it afterwards.
ProcessState reverse_step(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const ProcessState& state,
                          const Vector& denoised, double dt, Rng& rng, const Vector* locked_range = nullptr);

/// Column-wise reverse step with caller-supplied noise (eps: m x n, eps_null: d x n).
Matrix reverse_step_cols(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Matrix& x, const Matrix& denoised,
                         double dt, const Matrix& eps, const Matrix& eps_null);

/// Full reverse run for one measurement (chain 0 of `config.seed`).
SampleTrace sample(const LinearSystem& sys, const SamplerConfig& config, const Vector& y, const Denoiser& denoiser);

/// One chain per column of `ys`; chain j draws its noise from
/// stream_seed(config.seed, j).
Matrix sample_batch(const LinearSystem& sys, const SamplerConfig& config, const Matrix& ys, const Denoiser& denoiser);

}  // namespace sdb
