#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "sdb/linop.hpp"

namespace sdb {

/// A differentiable measurement operator y = A(x) + Sigma^{1/2} eps.
struct NonlinearSystem {
    using Map = std::function<Vector(const Vector&)>;
    using Product = std::function<Vector(const Vector& x, const Vector& v)>;

    Index m = 0;
    Index d = 0;
    Map apply;
    Product jvp;  // J(x) v
    Product vjp;  // J(x)^T u
    /// Dense Jacobian in closed form, when known.
    std::function<Matrix(const Vector&)> jacobian;
    /// For operators known to be affine, the exact constant term b.
    std::optional<Vector> affine_offset;

    bool has_analytic_jacobian() const { return static_cast<bool>(jacobian); }
};

/// Elementwise contrast curve A(x)_i = 1 / (1 + exp(-k (x_i - a))).
NonlinearSystem sigmoid_contrast(Index d, double k, double a);

/// A(x) = M x + b.
NonlinearSystem affine_operator(const Matrix& m, const Vector& b);

/// Dense Jacobian at x: the closed form when available, otherwise one jvp per
/// basis vector.
Matrix jacobian(const NonlinearSystem& nsys, const Vector& x);

struct MleResult {
    Vector x;
    /// |A(x_k) - y|^2 for k = 0..n_iters.
    std::vector<double> residuals;
};

/// Fixed-step gradient descent on |A(x) - y|^2 starting from `x0` (zero when
/// empty). Returns the iterate with the smallest residual.
MleResult mle_init(const NonlinearSystem& nsys, const Vector& y, int n_iters = 5, double step = 0.5,
                   const Vector& x0 = Vector());

/// y ~= J x + offset around the expansion point.
struct LinearizedModel {
    LinearSystem system;
    Vector offset;

    /// Measurement of the linear surrogate: y - offset.
    Vector linear_measurement(const Vector& y) const { return y - offset; }
};

LinearizedModel linearize(const NonlinearSystem& nsys, const Vector& x_hat, NoiseFactor noise,
                          double cutoff = kDefaultPinvCutoff);

}  // namespace sdb
