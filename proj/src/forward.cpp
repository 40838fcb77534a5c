#include "sdb/forward.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace sdb {

namespace {

// Draws eps (m) then eps' (d) for every column, column by column.
void draw_noise_pair(Matrix& eps, Matrix& eps_null, std::span<Rng> rngs) {
    for (Index j = 0; j < eps.cols(); ++j) {
        Rng& r = rngs[static_cast<std::size_t>(j)];
        for (Index i = 0; i < eps.rows(); ++i) eps(i, j) = r.normal();
        for (Index i = 0; i < eps_null.rows(); ++i) eps_null(i, j) = r.normal();
    }
}

}  // namespace

DriftDiffusion::DriftDiffusion(LinearSystem sys, const ScheduleCoeffs& coeffs) : sys_(std::move(sys)), coeffs_(coeffs) {
    const double tol = 1e-12 * std::max(1.0, std::abs(coeffs.dbeta_dt));
    if (!(coeffs.gnull_sq >= -tol)) {
        std::ostringstream msg;
        msg << "invalid schedule: null-space diffusion rate " << coeffs.gnull_sq << " < 0 at t=" << coeffs.t;
        throw ParameterError(msg.str());
    }
    if (!(coeffs.dgamma_dt >= -1e-12)) {
        throw ParameterError("invalid schedule: range-space diffusion rate is negative");
    }
}

Matrix DriftDiffusion::apply_F_cols(const Matrix& x) const {
    return coeffs_.dlog_alpha_dt * sys_.project_null_cols(x);
}

Matrix DriftDiffusion::apply_GGT_half_range_cols(const Matrix& eps) const {
    return std::sqrt(std::max(coeffs_.dgamma_dt, 0.0)) * sys_.apply_pinv_cols(sys_.noise_scale_cols(eps));
}

Matrix DriftDiffusion::apply_GGT_half_null_cols(const Matrix& eps) const {
    return std::sqrt(std::max(coeffs_.gnull_sq, 0.0)) * sys_.project_null_cols(eps);
}

DriftDiffusion drift_diffusion(const LinearSystem& sys, const ScheduleCoeffs& coeffs) {
    return DriftDiffusion(sys, coeffs);
}

Vector forward_sample_with_noise(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Vector& x0,
                                 const Vector& eps_range, const Vector& eps_null) {
    if (x0.size() != sys.d() || eps_null.size() != sys.d() || eps_range.size() != sys.m()) {
        throw ContractViolation("forward_sample: dimension mismatch");
    }
    // [A+A + alpha (I - A+A)] x0 = alpha x0 + (1 - alpha) A+A x0
    const Vector range_x0 = sys.project_range_cols(x0);
    Vector xt = coeffs.alpha * x0 + (1.0 - coeffs.alpha) * range_x0;
    if (!sys.noise().is_zero()) {
        xt += std::sqrt(coeffs.gamma) * sys.apply_pinv(sys.noise_scale(eps_range));
    }
    xt += std::sqrt(coeffs.beta) * sys.project_null_cols(eps_null);
    return xt;
}

ProcessState forward_sample(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Vector& x0, Rng& rng) {
    if (x0.size() != sys.d()) throw ContractViolation("forward_sample: x0 has wrong length");
    const Vector eps = rng.normal_vector(sys.m());
    const Vector eps_null = rng.normal_vector(sys.d());
    return {forward_sample_with_noise(sys, coeffs, x0, eps, eps_null), coeffs.t};
}

Matrix forward_sample_cols(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Matrix& x0,
                           std::span<Rng> rngs) {
    if (x0.rows() != sys.d()) throw ContractViolation("forward_sample: x0 has wrong length");
    if (static_cast<Index>(rngs.size()) < x0.cols()) throw ContractViolation("forward_sample: too few generators");
    Matrix eps(sys.m(), x0.cols());
    Matrix eps_null(sys.d(), x0.cols());
    draw_noise_pair(eps, eps_null, rngs);
    Matrix xt = coeffs.alpha * x0 + (1.0 - coeffs.alpha) * sys.project_range_cols(x0);
    if (!sys.noise().is_zero()) {
        xt += std::sqrt(coeffs.gamma) * sys.apply_pinv_cols(sys.noise_scale_cols(eps));
    }
    xt += std::sqrt(coeffs.beta) * sys.project_null_cols(eps_null);
    return xt;
}

Matrix marginal_transition(const LinearSystem& sys, const ScheduleCoeffs& coeffs) {
    if (sys.d() > kMaxOracleDim) throw CapacityError("analytic marginal limited to d <= 256");
    const Matrix p = materialize_range_projector(sys);
    const Index d = sys.d();
    return p + coeffs.alpha * (Matrix::Identity(d, d) - p);
}

Matrix marginal_covariance(const LinearSystem& sys, const ScheduleCoeffs& coeffs) {
    if (sys.d() > kMaxOracleDim) throw CapacityError("analytic marginal limited to d <= 256");
    const Index d = sys.d();
    const Matrix p = materialize_range_projector(sys);
    Matrix cov = coeffs.beta * (Matrix::Identity(d, d) - p);
    if (!sys.noise().is_zero()) {
        const Matrix pinv = materialize_pinv(sys);
        cov += coeffs.gamma * pinv * sys.noise().covariance(sys.m()) * pinv.transpose();
    }
    return symmetrized(cov);
}

GaussianBelief analytic_marginal(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Vector& x0) {
    if (x0.size() != sys.d()) throw ContractViolation("analytic_marginal: x0 has wrong length");
    return {marginal_transition(sys, coeffs) * x0, marginal_covariance(sys, coeffs)};
}

std::vector<double> forward_time_grid(const ScheduleSpec& spec, int n_steps) {
    if (n_steps < 1) throw ContractViolation("n_steps must be at least 1");
    spec.validate();
    const double lo = spec.t_end();
    const double hi = spec.t_start();
    std::vector<double> grid(static_cast<std::size_t>(n_steps) + 1);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (int k = 0; k <= n_steps; ++k) {
        const double u = static_cast<double>(k) / n_steps;
        const double s = u - std::sin(two_pi * u) / two_pi;
        grid[static_cast<std::size_t>(k)] = lo + (hi - lo) * s;
    }
    grid.front() = lo;
    grid.back() = hi;
    return grid;
}

ForwardTrajectory simulate_forward_sde_batch(const LinearSystem& sys, const ScheduleSpec& spec, const Matrix& x0,
                                             int n_steps, std::uint64_t seed, std::span<const double> checkpoints) {
    if (x0.rows() != sys.d()) throw ContractViolation("simulate_forward_sde: x0 has wrong length");
    const std::vector<double> grid = forward_time_grid(spec, n_steps);
    const Index n = x0.cols();

    std::vector<Rng> rngs;
    rngs.reserve(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) rngs.emplace_back(stream_seed(seed, static_cast<std::uint64_t>(j)));

    std::vector<double> pending(checkpoints.begin(), checkpoints.end());
    std::sort(pending.begin(), pending.end());
    std::size_t next_cp = 0;

    ForwardTrajectory out;
    Matrix x = forward_sample_cols(sys, eval(spec, grid.front()), x0, rngs);
    auto record = [&](std::size_t k) {
        while (next_cp < pending.size() && grid[k] >= pending[next_cp] - 1e-12) {
            out.times.push_back(grid[k]);
            out.states.push_back(x);
            ++next_cp;
        }
    };
    record(0);

    Matrix eps(sys.m(), n);
    Matrix eps_null(sys.d(), n);
    for (int k = 0; k < n_steps; ++k) {
        const double t = grid[static_cast<std::size_t>(k)];
        const double dt = grid[static_cast<std::size_t>(k) + 1] - t;
        const DriftDiffusion dd(sys, eval(spec, t));
        draw_noise_pair(eps, eps_null, rngs);
        const double sq = std::sqrt(dt);
        Matrix next = x + dt * dd.apply_F_cols(x) + sq * dd.apply_GGT_half_null_cols(eps_null);
        if (!sys.noise().is_zero()) next += sq * dd.apply_GGT_half_range_cols(eps);
        if (!next.allFinite()) {
            std::ostringstream msg;
            msg << "forward SDE diverged at step " << k << " (t=" << t << ")";
            throw DivergenceError(msg.str());
        }
        x = std::move(next);
        record(static_cast<std::size_t>(k) + 1);
    }
    out.times.push_back(grid.back());
    out.states.push_back(x);
    return out;
}

ProcessState simulate_forward_sde(const LinearSystem& sys, const ScheduleSpec& spec, const Vector& x0, int n_steps,
                                  Rng& rng) {
    if (x0.size() != sys.d()) throw ContractViolation("simulate_forward_sde: x0 has wrong length");
    const std::vector<double> grid = forward_time_grid(spec, n_steps);
    Vector x = forward_sample(sys, eval(spec, grid.front()), x0, rng).x;
    for (int k = 0; k < n_steps; ++k) {
        const double t = grid[static_cast<std::size_t>(k)];
        const double dt = grid[static_cast<std::size_t>(k) + 1] - t;
        const DriftDiffusion dd(sys, eval(spec, t));
        const Vector eps = rng.normal_vector(sys.m());
        const Vector eps_null = rng.normal_vector(sys.d());
        const double sq = std::sqrt(dt);
        Vector next = x + dt * dd.apply_F(x) + sq * dd.apply_GGT_half_null(eps_null);
        if (!sys.noise().is_zero()) next += sq * dd.apply_GGT_half_range(eps);
        if (!next.allFinite()) {
            std::ostringstream msg;
            msg << "forward SDE diverged at step " << k << " (t=" << t << ")";
            throw DivergenceError(msg.str());
        }
        x = std::move(next);
    }
    return {x, grid.back()};
}

}  // namespace sdb
