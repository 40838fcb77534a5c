#pragma once

#include "sdb/linop.hpp"

namespace sdb {

/// Mean and dense covariance of a multivariate normal.
struct GaussianBelief {
    Vector mean;
    Matrix cov;

    Index dim() const { return mean.size(); }
    /// Throws InvalidCovariance unless cov is symmetric and PSD within 1e-10.
    void validate() const;
};

/// Largest dimension for which dense d x d covariances are built.
inline constexpr Index kMaxOracleDim = 256;

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Pseudo-inverse of a symmetric PSD matrix through its eigendecomposition.
/// Eigenvalues at or below `rel_tol * lambda_max` are dropped.
Matrix psd_pinv(const Matrix& m, double rel_tol = 1e-12);

/// Symmetric square root of a PSD matrix.
Matrix psd_sqrt(const Matrix& m);

/// Sample mean and (1/(n-1)) covariance of the columns of `samples`.
GaussianBelief empirical_moments(const Matrix& samples);

}  // namespace sdb
