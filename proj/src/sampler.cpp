#include "sdb/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace sdb {

namespace {

struct ChainBlock {
    Index first = 0;
    Matrix ys;
    Matrix out;
};

void draw_step_noise(Matrix& eps, Matrix& eps_null, std::vector<Rng>& rngs) {
    for (Index j = 0; j < eps.cols(); ++j) {
        Rng& r = rngs[static_cast<std::size_t>(j)];
        for (Index i = 0; i < eps.rows(); ++i) eps(i, j) = r.normal();
        for (Index i = 0; i < eps_null.rows(); ++i) eps_null(i, j) = r.normal();
    }
}

Matrix run_chains(const LinearSystem& sys, const SamplerConfig& config, const std::vector<double>& grid,
                  const Matrix& ys, Index first_chain, const Denoiser& denoiser, bool lock,
                  std::vector<ProcessState>* trace) {
    const Index n = ys.cols();
    std::vector<Rng> rngs;
    rngs.reserve(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) {
        rngs.emplace_back(stream_seed(config.seed, static_cast<std::uint64_t>(first_chain + j)));
    }

    // Initializer: x = A+y + sqrt(beta) (I - A+A) eps'.
    const ScheduleCoeffs c0 = eval(config.spec, grid.front());
    const Matrix pr = sys.apply_pinv_cols(ys);
    Matrix eps_null(sys.d(), n);
    for (Index j = 0; j < n; ++j) {
        Rng& r = rngs[static_cast<std::size_t>(j)];
        for (Index i = 0; i < sys.d(); ++i) eps_null(i, j) = r.normal();
    }
    Matrix x = pr + std::sqrt(c0.beta) * sys.project_null_cols(eps_null);
    Matrix locked;
    if (lock) locked = sys.project_range_cols(pr);
    if (trace) trace->push_back({x.col(0), grid.front()});

    Matrix eps(sys.m(), n);
    const int n_steps = static_cast<int>(grid.size()) - 1;
    for (int k = 0; k < n_steps; ++k) {
        const double t = grid[static_cast<std::size_t>(k)];
        const double dt = t - grid[static_cast<std::size_t>(k) + 1];
        const ScheduleCoeffs c = eval(config.spec, t);
        const Matrix denoised = denoiser(x, t);
        if (denoised.rows() != x.rows() || denoised.cols() != x.cols()) {
            throw ContractViolation("denoiser returned an output of the wrong shape");
        }
        draw_step_noise(eps, eps_null, rngs);
        Matrix next = reverse_step_cols(sys, c, x, denoised, dt, eps, eps_null);
        if (lock) next = sys.project_null_cols(next) + locked;
        if (!next.allFinite()) {
            std::ostringstream msg;
            msg << "reverse SDE diverged at step " << k << " (t=" << t << ", |x|=" << x.norm()
                << ", |D|=" << denoised.norm() << ")";
            throw DivergenceError(msg.str());
        }
        x = std::move(next);
        if (trace && config.checkpoint_every > 0 && (k + 1) % config.checkpoint_every == 0) {
            trace->push_back({x.col(0), grid[static_cast<std::size_t>(k) + 1]});
        }
    }
    return x;
}

}  // namespace

std::string_view to_string(TimeGrid g) {
    return g == TimeGrid::uniform ? "uniform" : "logit";
}

TimeGrid parse_time_grid(std::string_view name) {
    if (name == "uniform") return TimeGrid::uniform;
    if (name == "logit") return TimeGrid::logit;
    throw ParameterError("unknown time grid '" + std::string(name) + "'");
}

void SamplerConfig::validate() const {
    if (n_steps < 1) throw ParameterError("sampler needs n_steps >= 1");
    if (threads < 1) throw ParameterError("sampler needs threads >= 1");
    if (checkpoint_every < 0) throw ParameterError("checkpoint_every must be non-negative");
    spec.validate();
}

bool SamplerConfig::range_lock_for(const LinearSystem& sys) const {
    if (!sys.noise().is_zero()) return false;
    return noiseless_range_lock.value_or(true);
}

std::vector<double> reverse_time_grid(const ScheduleSpec& spec, int n_steps, TimeGrid grid) {
    if (n_steps < 1) throw ContractViolation("n_steps must be at least 1");
    spec.validate();
    const double hi = spec.t_start();
    const double lo = spec.t_end();
    std::vector<double> t(static_cast<std::size_t>(n_steps) + 1);
    if (grid == TimeGrid::uniform) {
        const double h = (hi - lo) / n_steps;
        for (int k = 0; k <= n_steps; ++k) t[static_cast<std::size_t>(k)] = hi - k * h;
    } else {
        const double u0 = std::log(hi / (1.0 - hi));
        const double u1 = std::log(lo / (1.0 - lo));
        for (int k = 0; k <= n_steps; ++k) {
            const double u = u0 + (u1 - u0) * static_cast<double>(k) / n_steps;
            t[static_cast<std::size_t>(k)] = 1.0 / (1.0 + std::exp(-u));
        }
    }
    t.front() = hi;
    t.back() = lo;
    return t;
}

ProcessState initialize(const LinearSystem& sys, const ScheduleSpec& spec, const Vector& y, Rng& rng) {
    if (y.size() != sys.m()) throw ContractViolation("initialize: measurement has wrong length");
    const ScheduleCoeffs c = eval(spec, spec.t_start());
    const Vector eps_null = rng.normal_vector(sys.d());
    const Vector pr = sys.apply_pinv(y);
    return {pr + std::sqrt(c.beta) * project_null(sys, eps_null), c.t};
}

Matrix score_drift_cols(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Matrix& x, const Matrix& denoised) {
    if (x.rows() != sys.d() || denoised.rows() != sys.d() || x.cols() != denoised.cols()) {
        throw ContractViolation("score_drift: dimension mismatch");
    }
    const Matrix null_x = sys.project_null_cols(x);
    const Matrix null_d = sys.project_null_cols(denoised);
    const double null_rate = coeffs.f_null - 2.0 * coeffs.dlog_alpha_dt;
    Matrix drift = null_rate * (coeffs.alpha * null_d - null_x);
    if (!sys.noise().is_zero()) {
        drift += coeffs.f_range * ((denoised - null_d) - (x - null_x));
    }
    return drift;
}

Vector score_drift(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Vector& x, const Vector& denoised) {
    return score_drift_cols(sys, coeffs, x, denoised);
}

Matrix reverse_step_cols(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Matrix& x, const Matrix& denoised,
                         double dt, const Matrix& eps, const Matrix& eps_null) {
    if (!(dt >= 0.0)) throw ContractViolation("reverse_step: dt must be non-negative");
    if (eps.rows() != sys.m() || eps_null.rows() != sys.d() || eps.cols() != x.cols() ||
        eps_null.cols() != x.cols()) {
        throw ContractViolation("reverse_step: noise has wrong shape");
    }
    const DriftDiffusion dd(sys, coeffs);
    const Matrix drift = score_drift_cols(sys, coeffs, x, denoised) - dd.apply_F_cols(x);
    const double sq = std::sqrt(dt);
    Matrix next = x + dt * drift + sq * dd.apply_GGT_half_null_cols(eps_null);
    if (!sys.noise().is_zero()) next += sq * dd.apply_GGT_half_range_cols(eps);
    return next;
}

ProcessState reverse_step(const LinearSystem& sys, const ScheduleCoeffs& coeffs, const ProcessState& state,
                          const Vector& denoised, double dt, Rng& rng, const Vector* locked_range) {
    if (dt > state.t + 1e-12) throw ContractViolation("reverse_step: dt exceeds the current time");
    const Vector eps = rng.normal_vector(sys.m());
    const Vector eps_null = rng.normal_vector(sys.d());
    Vector next = reverse_step_cols(sys, coeffs, state.x, denoised, dt, eps, eps_null);
    if (locked_range) next = project_null(sys, next) + *locked_range;
    if (!next.allFinite()) {
        std::ostringstream msg;
        msg << "reverse step diverged at t=" << state.t << " (|x|=" << state.x.norm() << ", |D|=" << denoised.norm()
            << ")";
        throw DivergenceError(msg.str());
    }
    return {next, state.t - dt};
}

SampleTrace sample(const LinearSystem& sys, const SamplerConfig& config, const Vector& y, const Denoiser& denoiser) {
    config.validate();
    if (y.size() != sys.m()) throw ContractViolation("sample: measurement has wrong length");
    const std::vector<double> grid = reverse_time_grid(config.spec, config.n_steps, config.grid);
    SampleTrace trace;
    std::vector<ProcessState>* states = config.checkpoint_every > 0 ? &trace.states : nullptr;
    trace.final = run_chains(sys, config, grid, y, 0, denoiser, config.range_lock_for(sys), states).col(0);
    return trace;
}

Matrix sample_batch(const LinearSystem& sys, const SamplerConfig& config, const Matrix& ys, const Denoiser& denoiser) {
    config.validate();
    if (ys.rows() != sys.m()) throw ContractViolation("sample_batch: measurements have wrong length");
    const std::vector<double> grid = reverse_time_grid(config.spec, config.n_steps, config.grid);
    const bool lock = config.range_lock_for(sys);
    const Index n = ys.cols();
    const int workers = denoiser.concurrent() ? static_cast<int>(std::min<Index>(config.threads, std::max<Index>(n, 1))) : 1;
    if (workers <= 1) return run_chains(sys, config, grid, ys, 0, denoiser, lock, nullptr);

    std::vector<ChainBlock> blocks(static_cast<std::size_t>(workers));
    const Index per = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        auto& b = blocks[static_cast<std::size_t>(w)];
        b.first = std::min<Index>(w * per, n);
        const Index count = std::min<Index>(per, n - b.first);
        b.ys = ys.middleCols(b.first, count);
    }
    std::vector<std::exception_ptr> errors(blocks.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < blocks.size(); ++w) {
        pool.emplace_back([&, w] {
            try {
                auto& b = blocks[w];
                if (b.ys.cols() > 0) b.out = run_chains(sys, config, grid, b.ys, b.first, denoiser, lock, nullptr);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    Matrix out(sys.d(), n);
    for (const auto& b : blocks)
        if (b.ys.cols() > 0) out.middleCols(b.first, b.ys.cols()) = b.out;
    return out;
}

}  // namespace sdb
