#include "sdb/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace sdb {

void GaussianBelief::validate() const {
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
        throw ContractViolation("covariance shape does not match the mean");
    }
    if (!mean.allFinite() || !cov.allFinite()) throw InvalidCovariance("belief has non-finite entries");
    if (mean.size() == 0) return;
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        throw InvalidCovariance("covariance is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10) {
        std::ostringstream msg;
        msg << "covariance has negative eigenvalue " << eig.eigenvalues().minCoeff();
        throw InvalidCovariance(msg.str());
    }
}

Matrix psd_pinv(const Matrix& m, double rel_tol) {
    if (m.size() == 0) return m;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(m));
    if (eig.info() != Eigen::Success) throw NumericalFailure("eigendecomposition failed in psd_pinv");
    const Vector& lam = eig.eigenvalues();
    const double top = std::max(lam.cwiseAbs().maxCoeff(), 0.0);
    Vector inv = Vector::Zero(lam.size());
    for (Index i = 0; i < lam.size(); ++i) {
        if (lam[i] > rel_tol * top && lam[i] > 0.0) inv[i] = 1.0 / lam[i];
    }
    const Matrix& q = eig.eigenvectors();
    return symmetrized(q * inv.asDiagonal() * q.transpose());
}

Matrix psd_sqrt(const Matrix& m) {
    if (m.size() == 0) return m;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(m));
    if (eig.info() != Eigen::Success) throw NumericalFailure("eigendecomposition failed in psd_sqrt");
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Matrix& q = eig.eigenvectors();
    return symmetrized(q * root.asDiagonal() * q.transpose());
}

GaussianBelief empirical_moments(const Matrix& samples) {
    const Index n = samples.cols();
    if (n < 2) throw ContractViolation("need at least two samples for moments");
    GaussianBelief b;
    b.mean = samples.rowwise().mean();
    const Matrix centered = samples.colwise() - b.mean;
    b.cov = (centered * centered.transpose()) / static_cast<double>(n - 1);
    return b;
}

}  // namespace sdb
