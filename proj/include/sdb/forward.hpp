#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sdb/gaussian.hpp"
#include "sdb/linop.hpp"
#include "sdb/rng.hpp"
#include "sdb/schedule.hpp"

namespace sdb {

struct ProcessState {
    Vector x;
    double t = 0.0;
};

/// Drift F_t and the two square-root diffusion factors of the bridge SDE.
///   F_t x            = dlog(alpha)/dt * (I - A+A) x
///   range factor eps = sqrt(gamma') A+ Sigma^{1/2} eps     (eps in R^m)
///   null factor eps' = sqrt(g_null^2) (I - A+A) eps'       (eps' in R^d)
class DriftDiffusion {
public:
    DriftDiffusion(LinearSystem sys, const ScheduleCoeffs& coeffs);

    Vector apply_F(const Vector& x) const { return apply_F_cols(x); }
    Vector apply_GGT_half_range(const Vector& eps) const { return apply_GGT_half_range_cols(eps); }
    Vector apply_GGT_half_null(const Vector& eps) const { return apply_GGT_half_null_cols(eps); }

    Matrix apply_F_cols(const Matrix& x) const;
    Matrix apply_GGT_half_range_cols(const Matrix& eps) const;
    Matrix apply_GGT_half_null_cols(const Matrix& eps) const;

    const ScheduleCoeffs& coeffs() const { return coeffs_; }

private:
    LinearSystem sys_;
    ScheduleCoeffs coeffs_;
};

/// One-shot draw of x_t | x0 (range noise eps drawn first, then null noise eps').
ProcessState forward_sample(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Vector& x0, Rng& rng);

/// Same draw with caller-supplied noise; affine in x0 for fixed noise.
Vector forward_sample_with_noise(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Vector& x0,
                                 const Vector& eps_range, const Vector& eps_null);

/// Column-wise forward draw: column j uses rngs[j].
Matrix forward_sample_cols(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Matrix& x0,
                           std::span<Rng> rngs);

/// Dense N(H_t x0, Sigma_t); d must not exceed kMaxOracleDim.
GaussianBelief analytic_marginal(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Vector& x0);

/// Dense H_t and Sigma_t.
Matrix marginal_transition(const LinearSystem& sys, const ScheduleCoeffs& coeffs);
Matrix marginal_covariance(const LinearSystem& sys, const ScheduleCoeffs& coeffs);

DriftDiffusion drift_diffusion(const LinearSystem& sys, const ScheduleCoeffs& coeffs);

/// Euler-Maruyama time nodes from eps2 to 1 - eps1, clustered towards both
/// ends (cosine spacing) where the coefficients vary fastest.
std::vector<double> forward_time_grid(const ScheduleSpec& spec, int n_steps);

struct ForwardTrajectory {
    std::vector<double> times;   // grid time of each checkpoint
    std::vector<Matrix> states;  // d x n_trajectories per checkpoint
};

/// Euler-Maruyama simulation of dx = F_t x dt + G_t dw for many trajectories.
/// Trajectory j starts from an exact marginal draw at eps2 given x0.col(j)
/// and uses the generator stream_seed(seed, j). A checkpoint is recorded at
/// the first grid node at or after each requested time; the terminal state
/// at 1 - eps1 is always recorded last.
ForwardTrajectory simulate_forward_sde_batch(const LinearSystem& sys, const ScheduleSpec& spec, const Matrix& x0,
                                             int n_steps, std::uint64_t seed,
                                             std::span<const double> checkpoints = {});

/// Single trajectory; returns the state at 1 - eps1.
ProcessState simulate_forward_sde(const LinearSystem& sys, const ScheduleSpec& spec, const Vector& x0, int n_steps,
                                  Rng& rng);

}  // namespace sdb
