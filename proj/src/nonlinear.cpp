#include "sdb/nonlinear.hpp"

#include <cmath>
#include <sstream>

namespace sdb {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

NonlinearSystem sigmoid_contrast(Index d, double k, double a) {
    if (d < 1) throw ParameterError("contrast operator needs d >= 1");
    if (!(k > 0.0) || !std::isfinite(a)) throw ParameterError("contrast operator needs k > 0 and a finite center");
    auto slope = [k, a](const Vector& x) -> Vector {
        return x.unaryExpr([k, a](double v) {
            const double s = sigmoid(k * (v - a));
            return k * s * (1.0 - s);
        });
    };
    NonlinearSystem n;
    n.m = d;
    n.d = d;
    n.apply = [k, a](const Vector& x) -> Vector { return x.unaryExpr([k, a](double v) { return sigmoid(k * (v - a)); }); };
    n.jvp = [slope](const Vector& x, const Vector& v) -> Vector { return slope(x).cwiseProduct(v); };
    n.vjp = n.jvp;
    n.jacobian = [slope](const Vector& x) -> Matrix { return slope(x).asDiagonal(); };
    return n;
}

NonlinearSystem affine_operator(const Matrix& m, const Vector& b) {
    if (b.size() != m.rows()) throw ContractViolation("affine offset has the wrong length");
    NonlinearSystem n;
    n.m = m.rows();
    n.d = m.cols();
    n.apply = [m, b](const Vector& x) -> Vector { return m * x + b; };
    n.jvp = [m](const Vector&, const Vector& v) -> Vector { return m * v; };
    n.vjp = [m](const Vector&, const Vector& u) -> Vector { return m.transpose() * u; };
    n.jacobian = [m](const Vector&) -> Matrix { return m; };
    n.affine_offset = b;
    return n;
}

Matrix jacobian(const NonlinearSystem& nsys, const Vector& x) {
    if (x.size() != nsys.d) throw ContractViolation("jacobian: x has wrong length");
    if (nsys.d > kMaxDenseDim) throw CapacityError("dense Jacobian limited to d <= 4096");
    Matrix j;
    if (nsys.jacobian) {
        j = nsys.jacobian(x);
    } else {
        j.resize(nsys.m, nsys.d);
        Vector e = Vector::Zero(nsys.d);
        for (Index i = 0; i < nsys.d; ++i) {
            e[i] = 1.0;
            j.col(i) = nsys.jvp(x, e);
            e[i] = 0.0;
        }
    }
    if (j.rows() != nsys.m || j.cols() != nsys.d) throw ContractViolation("jacobian has the wrong shape");
    if (!j.allFinite()) throw NumericalFailure("jacobian has non-finite entries");
    return j;
}

MleResult mle_init(const NonlinearSystem& nsys, const Vector& y, int n_iters, double step, const Vector& x0) {
    if (n_iters < 1) throw ParameterError("mle_init needs n_iters >= 1");
    if (!(step > 0.0)) throw ParameterError("mle_init needs a positive step");
    if (y.size() != nsys.m) throw ContractViolation("mle_init: y has wrong length");
    Vector x = x0.size() == 0 ? Vector::Zero(nsys.d) : x0;
    if (x.size() != nsys.d) throw ContractViolation("mle_init: start point has wrong length");

    MleResult out;
    Vector r = nsys.apply(x) - y;
    out.residuals.push_back(r.squaredNorm());
    out.x = x;
    double best = out.residuals.back();
    for (int it = 1; it <= n_iters; ++it) {
        x -= step * 2.0 * nsys.vjp(x, r);
        r = nsys.apply(x) - y;
        const double res = r.squaredNorm();
        if (!std::isfinite(res) || !x.allFinite()) {
            std::ostringstream msg;
            msg << "mle_init diverged at iteration " << it << " with step " << step << "; try a smaller step";
            throw DivergenceError(msg.str());
        }
        out.residuals.push_back(res);
        if (res < best) {
            best = res;
            out.x = x;
        }
    }
    return out;
}

LinearizedModel linearize(const NonlinearSystem& nsys, const Vector& x_hat, NoiseFactor noise, double cutoff) {
    if (!x_hat.allFinite()) throw ParameterError("linearization point is not finite");
    const Matrix j = jacobian(nsys, x_hat);
    Vector offset = nsys.affine_offset ? *nsys.affine_offset : Vector(nsys.apply(x_hat) - j * x_hat);
    return {build_dense_system_with_pinv(SystemKind::linearized, j, pseudoinverse(j, cutoff), std::move(noise)),
            std::move(offset)};
}

}  // namespace sdb
