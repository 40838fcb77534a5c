#include "sdb/oracle.hpp"

#include <cmath>
#include <memory>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "sdb/forward.hpp"

namespace sdb {

namespace {

constexpr double kPinvTol = 1e-12;

void check_prior(const GaussianBelief& prior, const LinearSystem& sys) {
    if (prior.dim() != sys.d() || prior.cov.rows() != sys.d() || prior.cov.cols() != sys.d()) {
        throw ContractViolation("prior dimension does not match the system");
    }
    if (sys.d() > kMaxOracleDim) throw CapacityError("Gaussian oracle limited to d <= 256");
}

}  // namespace

GaussianBelief gaussian_posterior(const GaussianBelief& prior, const LinearSystem& sys, const Vector& y) {
    check_prior(prior, sys);
    if (y.size() != sys.m()) throw ContractViolation("gaussian_posterior: measurement has wrong length");

    const Matrix a = materialize_matrix(sys);
    const Matrix& c0 = prior.cov;
    const Matrix s = symmetrized(a * c0 * a.transpose() + sys.noise().covariance(sys.m()));
    const Vector residual = y - a * prior.mean;

    Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
    if (eig.info() != Eigen::Success) throw NumericalFailure("eigendecomposition failed in gaussian_posterior");
    const Vector& lam = eig.eigenvalues();
    const Matrix& q = eig.eigenvectors();
    const double top = lam.size() ? std::max(lam.cwiseAbs().maxCoeff(), 0.0) : 0.0;
    Vector inv = Vector::Zero(lam.size());
    std::ostringstream bad;
    int n_bad = 0;
    for (Index i = 0; i < lam.size(); ++i) {
        if (lam[i] > kPinvTol * top && lam[i] > 0.0) {
            inv[i] = 1.0 / lam[i];
            continue;
        }
        // A measurement with weight along a zero-variance direction has probability zero.
        const double along = q.col(i).dot(residual);
        if (std::abs(along) > 1e-8 * (1.0 + residual.norm())) {
            bad << (n_bad++ ? "; " : "") << "[" << q.col(i).transpose() << "] (residual " << along << ")";
        }
    }
    if (n_bad > 0) {
        throw DegeneratePosterior("measurement is inconsistent with a degenerate observation model along: " +
                                  bad.str());
    }
    const Matrix s_pinv = q * inv.asDiagonal() * q.transpose();
    const Matrix gain = c0 * a.transpose() * s_pinv;
    GaussianBelief post;
    post.mean = prior.mean + gain * residual;
    post.cov = symmetrized(c0 - gain * a * c0);
    return post;
}

GaussianBelief gaussian_marginal(const GaussianBelief& prior, const LinearSystem& sys, const ScheduleCoeffs& coeffs) {
    check_prior(prior, sys);
    const Matrix h = marginal_transition(sys, coeffs);
    return {h * prior.mean, symmetrized(h * prior.cov * h.transpose() + marginal_covariance(sys, coeffs))};
}

AffineMap posterior_mean_map(const GaussianBelief& prior, const LinearSystem& sys, const ScheduleCoeffs& coeffs) {
    check_prior(prior, sys);
    const Matrix h = marginal_transition(sys, coeffs);
    const Matrix m = symmetrized(h * prior.cov * h.transpose() + marginal_covariance(sys, coeffs));
    const Matrix gain = prior.cov * h.transpose() * psd_pinv(m, kPinvTol);
    return {gain, prior.mean - gain * (h * prior.mean)};
}

Denoiser oracle_denoiser(const GaussianBelief& prior, const LinearSystem& sys, const ScheduleSpec& spec) {
    check_prior(prior, sys);
    spec.validate();
    auto p = std::make_shared<const GaussianBelief>(prior);
    return Denoiser([p, sys, spec](const Matrix& xt, double t) -> Matrix {
        const AffineMap map = posterior_mean_map(*p, sys, eval(spec, t));
        return map.apply_cols(xt);
    });
}

DenseScore dense_score(const GaussianBelief& prior, const LinearSystem& sys, const ScheduleCoeffs& coeffs,
                       const Vector& xt) {
    if (xt.size() != sys.d()) throw ContractViolation("dense_score: x_t has wrong length");
    const GaussianBelief marginal = gaussian_marginal(prior, sys, coeffs);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(marginal.cov);
    if (eig.info() != Eigen::Success) throw NumericalFailure("eigendecomposition failed in dense_score");
    const Vector& lam = eig.eigenvalues();
    const double top = std::max(lam.cwiseAbs().maxCoeff(), 0.0);
    Vector inv = Vector::Zero(lam.size());
    bool restricted = false;
    for (Index i = 0; i < lam.size(); ++i) {
        if (lam[i] > kPinvTol * top && lam[i] > 0.0) {
            inv[i] = 1.0 / lam[i];
        } else {
            restricted = true;
        }
    }
    const Matrix& q = eig.eigenvectors();
    return {-(q * (inv.asDiagonal() * (q.transpose() * (xt - marginal.mean)))), restricted};
}

Matrix diffusion_matrix(const LinearSystem& sys, const ScheduleCoeffs& coeffs) {
    if (sys.d() > kMaxOracleDim) throw CapacityError("diffusion matrix limited to d <= 256");
    const Index d = sys.d();
    const Matrix p = materialize_range_projector(sys);
    Matrix ggt = coeffs.gnull_sq * (Matrix::Identity(d, d) - p);
    if (!sys.noise().is_zero()) {
        const Matrix pinv = materialize_pinv(sys);
        ggt += coeffs.dgamma_dt * pinv * sys.noise().covariance(sys.m()) * pinv.transpose();
    }
    return symmetrized(ggt);
}

}  // namespace sdb
