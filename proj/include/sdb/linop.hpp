#pragma once

#include <functional>
#include <memory>
#include <string_view>

#include <Eigen/Core>

#include "sdb/errors.hpp"

namespace sdb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Largest signal dimension for which dense d x d objects are materialized.
inline constexpr Index kMaxDenseDim = 4096;

/// Default relative singular-value cutoff for generic pseudoinverses.
inline constexpr double kDefaultPinvCutoff = 1e-12;

enum class SystemKind { dense, mask, avgpool, truncated_svd, fourier_mask, linearized };

std::string_view to_string(SystemKind kind);

/// The measurement-noise factor Sigma^{1/2}: absent, sigma * I, or a dense m x m matrix.
class NoiseFactor {
public:
    enum class Kind { zero, scalar, dense };

    static NoiseFactor none() { return NoiseFactor{}; }
    static NoiseFactor isotropic(double sigma);
    static NoiseFactor dense(Matrix factor);

    Kind kind() const { return kind_; }
    double sigma() const { return sigma_; }
    const Matrix& factor() const { return factor_; }
    bool is_zero() const;

    /// Sigma^{1/2} applied to each column of `eps`.
    Matrix apply_cols(const Matrix& eps) const;
    /// Dense Sigma = S S^T for an m-dimensional measurement.
    Matrix covariance(Index m) const;
    /// Dense Sigma^{1/2}.
    Matrix materialize(Index m) const;

private:
    Kind kind_ = Kind::zero;
    double sigma_ = 0.0;
    Matrix factor_;
};

/// Operator acting on the columns of its argument.
using ColumnOp = std::function<Matrix(const Matrix&)>;

/// A linear measurement model y = A x + Sigma^{1/2} eps, exposed through
/// matrix-free actions of A, A^T and A^+. Immutable after construction;
/// copies share the underlying operator state.
class LinearSystem {
public:
    struct Ops {
        ColumnOp apply;
        ColumnOp apply_transpose;
        ColumnOp apply_pinv;
    };

    LinearSystem(SystemKind kind, Index m, Index d, Ops ops, NoiseFactor noise);

    SystemKind kind() const { return kind_; }
    Index m() const { return m_; }
    Index d() const { return d_; }
    const NoiseFactor& noise() const { return noise_; }

    Vector apply(const Vector& x) const;
    Vector apply_transpose(const Vector& y) const;
    Vector apply_pinv(const Vector& y) const;
    Vector noise_scale(const Vector& eps) const;

    // Batched forms; every column is one vector.
    Matrix apply_cols(const Matrix& x) const;
    Matrix apply_transpose_cols(const Matrix& y) const;
    Matrix apply_pinv_cols(const Matrix& y) const;
    Matrix noise_scale_cols(const Matrix& eps) const;
    Matrix project_range_cols(const Matrix& x) const;
    Matrix project_null_cols(const Matrix& x) const;

    /// Same operator, different noise factor.
    LinearSystem with_noise(NoiseFactor noise) const;

private:
    void check_signal(Index rows) const;
    void check_measurement(Index rows) const;

    SystemKind kind_;
    Index m_;
    Index d_;
    std::shared_ptr<const Ops> ops_;
    NoiseFactor noise_;
};

/// Moore-Penrose pseudoinverse via SVD. Singular values at or below
/// `cutoff * sigma_max` are treated as zero.
Matrix pseudoinverse(const Matrix& a, double cutoff = kDefaultPinvCutoff);

/// A^+ A x
Vector project_range(const LinearSystem& sys, const Vector& x);
/// (I - A^+ A) x
Vector project_null(const LinearSystem& sys, const Vector& x);
/// A^+ y
Vector pseudoinverse_reconstruction(const LinearSystem& sys, const Vector& y);

/// Dense-backed system; A^+ is computed once by SVD with the given cutoff.
LinearSystem build_dense_system(const Matrix& a, NoiseFactor noise, double cutoff = kDefaultPinvCutoff);
LinearSystem build_dense_system(const Matrix& a, double sigma);

/// Dense system with an explicitly supplied pseudoinverse (used when the
/// factorization is known, e.g. truncated SVD).
LinearSystem build_dense_system_with_pinv(SystemKind kind, const Matrix& a, const Matrix& pinv,
                                          NoiseFactor noise);

/// Rescale measurements so the noise covariance is the identity on range(Sigma).
LinearSystem whiten(const LinearSystem& sys);

// Dense materialization (tests, oracles, whitening of structured systems).
Matrix materialize_matrix(const LinearSystem& sys);
Matrix materialize_pinv(const LinearSystem& sys);
Matrix materialize_range_projector(const LinearSystem& sys);

struct PenroseResiduals {
    double a_pinv_a = 0.0;       // |A A+ A - A|_max
    double pinv_a_pinv = 0.0;    // |A+ A A+ - A+|_max
    double a_pinv_sym = 0.0;     // |(A A+)^T - A A+|_max
    double pinv_a_sym = 0.0;     // |(A+ A)^T - A+ A|_max

    double max() const;
};

PenroseResiduals penrose_residuals(const Matrix& a, const Matrix& pinv);

}  // namespace sdb
