#include "sdb/linop.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace sdb {

std::string_view to_string(SystemKind kind) {
    switch (kind) {
        case SystemKind::dense: return "dense";
        case SystemKind::mask: return "mask";
        case SystemKind::avgpool: return "avgpool";
        case SystemKind::truncated_svd: return "truncated_svd";
        case SystemKind::fourier_mask: return "fourier_mask";
        case SystemKind::linearized: return "linearized";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// NoiseFactor

NoiseFactor NoiseFactor::isotropic(double sigma) {
    if (!std::isfinite(sigma) || sigma < 0.0) {
        throw ParameterError("noise scale must be finite and non-negative");
    }
    NoiseFactor n;
    n.kind_ = sigma == 0.0 ? Kind::zero : Kind::scalar;
    n.sigma_ = sigma;
    return n;
}

NoiseFactor NoiseFactor::dense(Matrix factor) {
    if (factor.rows() != factor.cols()) {
        throw ContractViolation("dense noise factor must be square");
    }
    if (!factor.allFinite()) {
        throw ParameterError("dense noise factor has non-finite entries");
    }
    NoiseFactor n;
    n.kind_ = factor.isZero(0.0) ? Kind::zero : Kind::dense;
    n.factor_ = std::move(factor);
    return n;
}

bool NoiseFactor::is_zero() const { return kind_ == Kind::zero; }

Matrix NoiseFactor::apply_cols(const Matrix& eps) const {
    switch (kind_) {
        case Kind::zero: return Matrix::Zero(eps.rows(), eps.cols());
        case Kind::scalar: return sigma_ * eps;
        case Kind::dense:
            if (factor_.cols() != eps.rows()) {
                throw ContractViolation("noise factor size does not match measurement dimension");
            }
            return factor_ * eps;
    }
    return eps;
}

Matrix NoiseFactor::materialize(Index m) const {
    switch (kind_) {
        case Kind::zero: return Matrix::Zero(m, m);
        case Kind::scalar: return sigma_ * Matrix::Identity(m, m);
        case Kind::dense: return factor_;
    }
    return Matrix::Zero(m, m);
}

Matrix NoiseFactor::covariance(Index m) const {
    const Matrix s = materialize(m);
    return s * s.transpose();
}

// ---------------------------------------------------------------------------
// LinearSystem

LinearSystem::LinearSystem(SystemKind kind, Index m, Index d, Ops ops, NoiseFactor noise)
    : kind_(kind), m_(m), d_(d), ops_(std::make_shared<const Ops>(std::move(ops))), noise_(std::move(noise)) {
    if (m < 0 || d <= 0) {
        throw ContractViolation("system dimensions must be positive");
    }
    if (!ops_->apply || !ops_->apply_transpose || !ops_->apply_pinv) {
        throw ContractViolation("linear system requires apply, apply_transpose and apply_pinv");
    }
    if (noise_.kind() == NoiseFactor::Kind::dense && noise_.factor().rows() != m) {
        std::ostringstream msg;
        msg << "noise factor is " << noise_.factor().rows() << "x" << noise_.factor().cols()
            << " but the measurement dimension is " << m;
        throw ContractViolation(msg.str());
    }
}

void LinearSystem::check_signal(Index rows) const {
    if (rows != d_) {
        std::ostringstream msg;
        msg << "expected signal of length " << d_ << ", got " << rows;
        throw ContractViolation(msg.str());
    }
}

void LinearSystem::check_measurement(Index rows) const {
    if (rows != m_) {
        std::ostringstream msg;
        msg << "expected measurement of length " << m_ << ", got " << rows;
        throw ContractViolation(msg.str());
    }
}

Matrix LinearSystem::apply_cols(const Matrix& x) const {
    check_signal(x.rows());
    return ops_->apply(x);
}

Matrix LinearSystem::apply_transpose_cols(const Matrix& y) const {
    check_measurement(y.rows());
    return ops_->apply_transpose(y);
}

Matrix LinearSystem::apply_pinv_cols(const Matrix& y) const {
    check_measurement(y.rows());
    return ops_->apply_pinv(y);
}

Matrix LinearSystem::noise_scale_cols(const Matrix& eps) const {
    check_measurement(eps.rows());
    return noise_.apply_cols(eps);
}

Matrix LinearSystem::project_range_cols(const Matrix& x) const {
    check_signal(x.rows());
    return ops_->apply_pinv(ops_->apply(x));
}

Matrix LinearSystem::project_null_cols(const Matrix& x) const { return x - project_range_cols(x); }

Vector LinearSystem::apply(const Vector& x) const { return apply_cols(x); }
Vector LinearSystem::apply_transpose(const Vector& y) const { return apply_transpose_cols(y); }
Vector LinearSystem::apply_pinv(const Vector& y) const { return apply_pinv_cols(y); }
Vector LinearSystem::noise_scale(const Vector& eps) const { return noise_scale_cols(eps); }

LinearSystem LinearSystem::with_noise(NoiseFactor noise) const {
    LinearSystem copy = *this;
    if (noise.kind() == NoiseFactor::Kind::dense && noise.factor().rows() != m_) {
        throw ContractViolation("noise factor size does not match measurement dimension");
    }
    copy.noise_ = std::move(noise);
    return copy;
}

// ---------------------------------------------------------------------------
// Free functions

Matrix pseudoinverse(const Matrix& a, double cutoff) {
    if (!a.allFinite()) {
        throw ContractViolation("pseudoinverse: matrix has non-finite entries");
    }
    if (cutoff < 0.0) {
        throw ParameterError("pseudoinverse: cutoff must be non-negative");
    }
    if (a.size() == 0) {
        return Matrix::Zero(a.cols(), a.rows());
    }
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "SVD failed to converge for " << a.rows() << "x" << a.cols() << " matrix";
        throw NumericalFailure(msg.str());
    }
    const Vector& s = svd.singularValues();
    const double threshold = s.size() > 0 ? cutoff * s[0] : 0.0;
    Vector s_inv = Vector::Zero(s.size());
    for (Index i = 0; i < s.size(); ++i) {
        if (s[i] > threshold && s[i] > 0.0) s_inv[i] = 1.0 / s[i];
    }
    return svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().transpose();
}

Vector project_range(const LinearSystem& sys, const Vector& x) { return sys.project_range_cols(x); }

Vector project_null(const LinearSystem& sys, const Vector& x) { return sys.project_null_cols(x); }

Vector pseudoinverse_reconstruction(const LinearSystem& sys, const Vector& y) { return sys.apply_pinv(y); }

LinearSystem build_dense_system_with_pinv(SystemKind kind, const Matrix& a, const Matrix& pinv,
                                          NoiseFactor noise) {
    if (pinv.rows() != a.cols() || pinv.cols() != a.rows()) {
        throw ContractViolation("pseudoinverse shape does not match the transpose of A");
    }
    auto a_ptr = std::make_shared<const Matrix>(a);
    auto p_ptr = std::make_shared<const Matrix>(pinv);
    LinearSystem::Ops ops{
        [a_ptr](const Matrix& x) -> Matrix { return (*a_ptr) * x; },
        [a_ptr](const Matrix& y) -> Matrix { return a_ptr->transpose() * y; },
        [p_ptr](const Matrix& y) -> Matrix { return (*p_ptr) * y; },
    };
    return LinearSystem(kind, a.rows(), a.cols(), std::move(ops), std::move(noise));
}

LinearSystem build_dense_system(const Matrix& a, NoiseFactor noise, double cutoff) {
    if (a.cols() == 0) {
        throw ContractViolation("dense system needs at least one signal dimension");
    }
    return build_dense_system_with_pinv(SystemKind::dense, a, pseudoinverse(a, cutoff), std::move(noise));
}

LinearSystem build_dense_system(const Matrix& a, double sigma) {
    return build_dense_system(a, NoiseFactor::isotropic(sigma));
}

Matrix materialize_matrix(const LinearSystem& sys) {
    if (sys.d() > kMaxDenseDim) throw CapacityError("signal dimension too large to materialize A");
    return sys.apply_cols(Matrix::Identity(sys.d(), sys.d()));
}

Matrix materialize_pinv(const LinearSystem& sys) {
    if (sys.m() > kMaxDenseDim) throw CapacityError("measurement dimension too large to materialize A+");
    return sys.apply_pinv_cols(Matrix::Identity(sys.m(), sys.m()));
}

Matrix materialize_range_projector(const LinearSystem& sys) {
    if (sys.d() > kMaxDenseDim) throw CapacityError("signal dimension too large to materialize A+A");
    return sys.project_range_cols(Matrix::Identity(sys.d(), sys.d()));
}

LinearSystem whiten(const LinearSystem& sys) {
    const NoiseFactor& noise = sys.noise();
    switch (noise.kind()) {
        case NoiseFactor::Kind::zero:
            throw ParameterError("cannot whiten a noiseless system");
        case NoiseFactor::Kind::scalar: {
            const double s = noise.sigma();
            LinearSystem base = sys;
            LinearSystem::Ops ops{
                [base, s](const Matrix& x) -> Matrix { return base.apply_cols(x) / s; },
                [base, s](const Matrix& y) -> Matrix { return base.apply_transpose_cols(y) / s; },
                [base, s](const Matrix& y) -> Matrix { return base.apply_pinv_cols(y) * s; },
            };
            return LinearSystem(sys.kind(), sys.m(), sys.d(), std::move(ops), NoiseFactor::isotropic(1.0));
        }
        case NoiseFactor::Kind::dense: break;
    }

    const Matrix& s = noise.factor();
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw InvalidCovariance("noise factor is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (s + s.transpose()));
    if (eig.info() != Eigen::Success) {
        throw NumericalFailure("eigendecomposition of the noise factor failed");
    }
    const Vector& lam = eig.eigenvalues();
    const double lam_max = lam.cwiseAbs().maxCoeff();
    const double tol = 1e-10 * std::max(lam_max, 1e-300);
    if (lam.minCoeff() < -tol) {
        std::ostringstream msg;
        msg << "noise factor has a negative eigenvalue " << lam.minCoeff();
        throw InvalidCovariance(msg.str());
    }
    Vector inv = Vector::Zero(lam.size());
    Vector keep = Vector::Zero(lam.size());
    for (Index i = 0; i < lam.size(); ++i) {
        if (lam[i] > tol) {
            inv[i] = 1.0 / lam[i];
            keep[i] = 1.0;
        }
    }
    const Matrix& q = eig.eigenvectors();
    const Matrix w = q * inv.asDiagonal() * q.transpose();
    const Matrix a_white = w * materialize_matrix(sys);
    NoiseFactor white_noise = keep.minCoeff() > 0.0 ? NoiseFactor::isotropic(1.0)
                                                   : NoiseFactor::dense(q * keep.asDiagonal() * q.transpose());
    return build_dense_system(a_white, std::move(white_noise));
}

double PenroseResiduals::max() const {
    return std::max(std::max(a_pinv_a, pinv_a_pinv), std::max(a_pinv_sym, pinv_a_sym));
}

PenroseResiduals penrose_residuals(const Matrix& a, const Matrix& pinv) {
    const Matrix ap = a * pinv;
    const Matrix pa = pinv * a;
    PenroseResiduals r;
    r.a_pinv_a = (ap * a - a).cwiseAbs().maxCoeff();
    r.pinv_a_pinv = (pa * pinv - pinv).cwiseAbs().maxCoeff();
    r.a_pinv_sym = (ap.transpose() - ap).cwiseAbs().maxCoeff();
    r.pinv_a_sym = (pa.transpose() - pa).cwiseAbs().maxCoeff();
    return r;
}

}  // namespace sdb
