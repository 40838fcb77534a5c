#pragma once

#include "sdb/denoiser.hpp"
#include "sdb/gaussian.hpp"
#include "sdb/linop.hpp"
#include "sdb/schedule.hpp"

namespace sdb {

/// Conjugate posterior p(x | y) for x ~ prior and y = A x + Sigma^{1/2} eps,
/// obtained by conditioning the joint Gaussian of (x, y).
GaussianBelief gaussian_posterior(const GaussianBelief& prior, const LinearSystem& sys, const Vector& y);

/// Marginal of x_t when x0 ~ prior: N(H_t mu0, H_t C0 H_t^T + Sigma_t).
GaussianBelief gaussian_marginal(const GaussianBelief& prior, const LinearSystem& sys, const ScheduleCoeffs& coeffs);

/// Affine map x_t -> E[x0 | x_t] = offset + gain * x_t at one schedule point.
struct AffineMap {
    Matrix gain;
    Vector offset;

    Matrix apply_cols(const Matrix& x) const { return (gain * x).colwise() + offset; }
};

AffineMap posterior_mean_map(const GaussianBelief& prior, const LinearSystem& sys, const ScheduleCoeffs& coeffs);

/// Exact E[x0 | x_t] under a Gaussian prior; coefficients are taken from
/// `spec` at whatever time the sampler asks for.
Denoiser oracle_denoiser(const GaussianBelief& prior, const LinearSystem& sys, const ScheduleSpec& spec);

struct DenseScore {
    Vector score;
    bool restricted = false;  // marginal covariance was singular; score lives on its range
};

/// grad log p(x_t) for the Gaussian marginal of x_t.
DenseScore dense_score(const GaussianBelief& prior, const LinearSystem& sys, const ScheduleCoeffs& coeffs,
                       const Vector& xt);

/// Dense G_t G_t^T.
Matrix diffusion_matrix(const LinearSystem& sys, const ScheduleCoeffs& coeffs);

}  // namespace sdb
