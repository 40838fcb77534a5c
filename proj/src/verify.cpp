#include "sdb/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "sdb/forward.hpp"
#include "sdb/model.hpp"
#include "sdb/oracle.hpp"
#include "sdb/sampler.hpp"
#include "sdb/tasks.hpp"

namespace sdb {

namespace {

CheckRow row(std::string suite, std::string check, double value, double tol) {
    return {std::move(suite), std::move(check), std::isfinite(value) && value < tol, value, tol};
}

Matrix gaussian_matrix(Index r, Index c, Rng& rng) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

int uniform_int(Rng& rng, int lo, int hi) {
    return lo + static_cast<int>(std::floor(rng.uniform() * (hi - lo + 1)));
}

double rel_error(const Matrix& est, const Matrix& ref) {
    const double n = ref.norm();
    return (est - ref).norm() / (n > 0.0 ? n : 1.0);
}

// d = 4 prior with a well-conditioned random covariance.
GaussianBelief random_prior(Index d, Rng& rng) {
    const Matrix l = gaussian_matrix(d, d, rng);
    return {rng.normal_vector(d), 0.5 * l * l.transpose() / static_cast<double>(d) + 0.2 * Matrix::Identity(d, d)};
}

}  // namespace

bool all_pass(const Report& r) {
    return std::all_of(r.begin(), r.end(), [](const CheckRow& c) { return c.pass; });
}

void write_report_csv(std::ostream& out, const Report& r) {
    out << "suite,check,status,value,tolerance\n";
    char buf[64];
    for (const auto& c : r) {
        out << c.suite << ',' << c.check << ',' << (c.pass ? "pass" : "fail") << ',';
        std::snprintf(buf, sizeof buf, "%.6e", c.value);
        out << buf << ',';
        std::snprintf(buf, sizeof buf, "%.6e", c.tolerance);
        out << buf << '\n';
    }
}

Report verify_penrose(const PenroseOptions& opt) {
    Rng rng(opt.seed);
    std::map<std::string, double> worst;
    auto record = [&](const std::string& kind, const LinearSystem& sys) {
        const double r = penrose_residuals(materialize_matrix(sys), materialize_pinv(sys)).max();
        worst[kind] = std::max(worst[kind], r);
    };
    for (int i = 0; i < opt.instances; ++i) {
        {
            const Index m = uniform_int(rng, 1, 12);
            const Index d = uniform_int(rng, 1, 12);
            const Index rank = uniform_int(rng, 0, static_cast<int>(std::min(m, d)));
            const Matrix a = gaussian_matrix(m, rank, rng) * gaussian_matrix(rank, d, rng);
            record("dense", build_dense_system(a, NoiseFactor::none()));
        }
        TaskSpec t;
        t.seed = static_cast<std::uint64_t>(uniform_int(rng, 0, 1 << 20));
        t.kind = TaskKind::inpainting;
        t.image_side = uniform_int(rng, 2, 16);
        t.mask_fraction = rng.uniform();
        record("mask", build_system(t));

        t.kind = TaskKind::superres;
        const int factors[] = {1, 2, 4};
        t.factor = factors[uniform_int(rng, 0, 2)];
        t.image_side = t.factor * uniform_int(rng, 1, 16 / t.factor);
        record("avgpool", build_system(t));

        t.kind = TaskKind::ct;
        t.image_side = uniform_int(rng, 2, 10);
        t.latent_dim = rng.uniform(2.0, 20.0);
        t.tau = rng.uniform(0.0, 0.6);
        record("truncated_svd", build_system(t));

        t.kind = TaskKind::mri;
        t.image_side = uniform_int(rng, 2, 16);
        t.lambda1 = rng.uniform(0.0, 50.0);
        t.lambda2 = rng.uniform(0.0, 100.0 - t.lambda1);
        record("fourier_mask", build_system(t));
    }
    Report out;
    for (const auto& [kind, r] : worst) out.push_back(row("penrose", kind, r, opt.tolerance));
    return out;
}

Report verify_marginals(const MarginalOptions& opt) {
    Rng rng(opt.seed);
    const Matrix a = gaussian_matrix(3, 4, rng);
    const LinearSystem sys = build_dense_system(a, 0.1);
    const Vector x0 = rng.normal_vector(4);
    Report out;
    for (const ScheduleSpec& spec : {ScheduleSpec::sb(0.1, 0.3), ScheduleSpec::vp(), ScheduleSpec::ve(10.0)}) {
        std::vector<double> cps = opt.times;
        if (opt.include_terminal) cps.push_back(spec.t_start());
        const ForwardTrajectory traj =
            simulate_forward_sde_batch(sys, spec, x0.replicate(1, opt.trajectories), opt.steps, opt.seed + 1, cps);
        const std::string v(to_string(spec.variant));
        for (std::size_t k = 0; k < cps.size(); ++k) {
            const double t = traj.times[k];
            const GaussianBelief ref = analytic_marginal(sys, eval(spec, t), x0);
            const GaussianBelief est = empirical_moments(traj.states[k]);
            char label[64];
            std::snprintf(label, sizeof label, "%s_t%.3f", v.c_str(), cps[k]);
            out.push_back(row("marginals", std::string(label) + "_mean", rel_error(est.mean, ref.mean), opt.tolerance));
            out.push_back(row("marginals", std::string(label) + "_cov", rel_error(est.cov, ref.cov), opt.tolerance));
        }
    }
    return out;
}

Report verify_g2(const G2Options& opt) {
    Rng rng(opt.seed);
    Report out;
    for (int i = 0; i < opt.pairs; ++i) {
        const double b0 = std::exp(rng.uniform(std::log(1e-3), std::log(10.0)));
        const double b1 = std::exp(rng.uniform(std::log(1e-3), std::log(10.0)));
        const ScheduleSpec spec = ScheduleSpec::sb(b0, b1);
        std::vector<double> grid(static_cast<std::size_t>(opt.grid_points));
        for (int k = 0; k < opt.grid_points; ++k) {
            grid[static_cast<std::size_t>(k)] =
                spec.t_end() + (spec.t_start() - spec.t_end()) * k / std::max(1, opt.grid_points - 1);
        }
        char label[64];
        std::snprintf(label, sizeof label, "b0=%.4g_b1=%.4g", b0, b1);
        out.push_back(row("g2", label, verify_g2_identity(spec, grid), opt.tolerance));
    }
    return out;
}

Report verify_posterior(const PosteriorOptions& opt) {
    Rng rng(opt.seed);
    const Matrix a = gaussian_matrix(2, 4, rng);
    const LinearSystem sys = build_dense_system(a, 0.5);
    const GaussianBelief prior = random_prior(4, rng);
    const Vector x = prior.mean + psd_sqrt(prior.cov) * rng.normal_vector(4);
    const Vector y = a * x + 0.5 * rng.normal_vector(2);
    const GaussianBelief post = gaussian_posterior(prior, sys, y);

    Report out;
    for (const ScheduleSpec& spec : {ScheduleSpec::sb(0.1, 0.3, 1e-3, opt.eps2), ScheduleSpec::vp(1e-3, opt.eps2),
                                     ScheduleSpec::ve(opt.ve_sigma_max, 1e-3, opt.eps2)}) {
        SamplerConfig cfg;
        cfg.spec = spec;
        cfg.n_steps = opt.steps;
        cfg.seed = opt.seed + 1;
        cfg.grid = TimeGrid::logit;
        const Matrix samples = sample_batch(sys, cfg, y.replicate(1, opt.chains), oracle_denoiser(prior, sys, spec));
        const GaussianBelief est = empirical_moments(samples);
        const std::string v(to_string(spec.variant));
        out.push_back(row("posterior", v + "_mean", rel_error(est.mean, post.mean), opt.mean_tolerance));
        out.push_back(row("posterior", v + "_cov", rel_error(est.cov, post.cov), opt.cov_tolerance));
    }
    return out;
}

Report verify_score_decomposition(const ScoreOptions& opt) {
    Rng rng(opt.seed);
    double worst = 0.0;
    for (int i = 0; i < opt.tuples; ++i) {
        const Index d = uniform_int(rng, 1, 6);
        const Index m = uniform_int(rng, 1, 6);
        const Matrix a = gaussian_matrix(m, d, rng);
        NoiseFactor noise = NoiseFactor::none();
        switch (i % 3) {
            case 1:
                noise = NoiseFactor::isotropic(rng.uniform(0.1, 1.0));
                break;
            case 2:
                noise = NoiseFactor::dense(0.5 * gaussian_matrix(m, m, rng));
                break;
            default:
                break;
        }
        const LinearSystem sys = build_dense_system(a, noise);
        ScheduleSpec spec;
        switch (i % 4) {
            case 0:
                spec = ScheduleSpec::sb(rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0));
                break;
            case 1:
                spec = ScheduleSpec::vp();
                break;
            default:
                spec = ScheduleSpec::ve(rng.uniform(2.0, 50.0));
                break;
        }
        const ScheduleCoeffs c = eval(spec, rng.uniform(0.05, 0.95));
        const GaussianBelief prior = random_prior(d, rng);
        const GaussianBelief marg = gaussian_marginal(prior, sys, c);
        const Vector xt = marg.mean + psd_sqrt(marg.cov) * rng.normal_vector(d);

        const Vector denoised = posterior_mean_map(prior, sys, c).apply_cols(xt);
        const Vector drift = score_drift(sys, c, xt, denoised);
        const Vector ref = diffusion_matrix(sys, c) * dense_score(prior, sys, c, xt).score;
        worst = std::max(worst, (drift - ref).cwiseAbs().maxCoeff() / std::max(1.0, ref.cwiseAbs().maxCoeff()));
    }
    return {row("scores", "drift_vs_dense_score", worst, opt.tolerance)};
}

Report verify_gradients(const GradientOptions& opt) {
    Rng rng(opt.seed);
    const Activation acts[] = {Activation::relu, Activation::tanh, Activation::silu};
    double worst = 0.0;
    for (int p = 0; p < opt.points; ++p) {
        const Activation act = acts[p % 3];
        TimeEmbedding emb;
        if (p % 2) {
            emb.kind = TimeEmbedding::Kind::append_scalar;
        } else {
            emb.frequencies = uniform_int(rng, 1, 4);
        }
        const Index d = uniform_int(rng, 1, 8);
        const std::vector<Index> hidden{uniform_int(rng, 2, 10), uniform_int(rng, 2, 10)};
        DenoiserNet net(d, hidden, act, emb, static_cast<std::uint64_t>(p) + opt.seed);
        for (auto& b : net.biases) b = 0.1 * rng.normal_vector(b.size());

        const Index batch = 3;
        Matrix xt;
        Vector t(batch);
        // Keep every hidden pre-activation away from the ReLU kink.
        for (int attempt = 0;; ++attempt) {
            xt = gaussian_matrix(d, batch, rng);
            for (Index j = 0; j < batch; ++j) t[j] = rng.uniform(0.01, 0.99);
            Matrix a = xt;
            Matrix in(d + emb.width(), batch);
            in.topRows(d) = xt;
            in.bottomRows(emb.width()) = emb.features(t);
            double closest = 1e300;
            for (std::size_t l = 0; l + 1 < net.weights.size(); ++l) {
                const Matrix z = (net.weights[l] * in).colwise() + net.biases[l];
                closest = std::min(closest, z.cwiseAbs().minCoeff());
                in = z.unaryExpr([act](double v) {
                    switch (act) {
                        case Activation::relu:
                            return std::max(v, 0.0);
                        case Activation::tanh:
                            return std::tanh(v);
                        case Activation::silu:
                            return v / (1.0 + std::exp(-v));
                    }
                    return v;
                });
            }
            if (act != Activation::relu || closest > 1e-3 || attempt > 100) break;
        }
        // Targets at least 0.1 away from the output keep the l1 loss smooth.
        const Matrix out0 = net.forward(xt, t);
        Matrix target(d, batch);
        for (Index i = 0; i < d; ++i)
            for (Index j = 0; j < batch; ++j)
                target(i, j) = out0(i, j) + (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);

        const LossGrad lg = l1_loss_and_grad(net, xt, t, target);
        auto loss_at = [&](DenoiserNet& n) { return (n.forward(xt, t) - target).cwiseAbs().sum() / batch; };
        auto check = [&](double& param, double analytic) {
            const double saved = param;
            param = saved + opt.step;
            const double up = loss_at(net);
            param = saved - opt.step;
            const double down = loss_at(net);
            param = saved;
            const double fd = (up - down) / (2.0 * opt.step);
            const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-6});
            worst = std::max(worst, std::abs(fd - analytic) / denom);
        };
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            for (Index i = 0; i < net.weights[l].size(); ++i) check(net.weights[l].data()[i], lg.grad.weights[l].data()[i]);
            for (Index i = 0; i < net.biases[l].size(); ++i) check(net.biases[l][i], lg.grad.biases[l][i]);
        }
    }
    return {row("gradients", "max_relative_error", worst, opt.tolerance)};
}

Report verify_otode(const OtOdeOptions& opt) {
    Matrix a(1, 2);
    a << 1.0, 0.0;
    const LinearSystem sys = build_dense_system(a, NoiseFactor::none());
    const ScheduleSpec spec = ScheduleSpec::sb(opt.b, opt.b);
    Rng rng(opt.seed);
    const GaussianBelief prior{Vector::Zero(2), Matrix::Identity(2, 2)};
    const Vector x_true = rng.normal_vector(2);
    const Vector y = a * x_true;
    const Denoiser den = oracle_denoiser(prior, sys, spec);

    const std::vector<double> grid = reverse_time_grid(spec, opt.steps, TimeGrid::uniform);
    ProcessState state = initialize(sys, spec, y, rng);
    const Vector x1 = state.x;
    std::vector<ProcessState> path{state};
    const Vector locked = project_range(sys, x1);
    const Matrix zero_eps = Matrix::Zero(sys.m(), 1);
    const Matrix zero_null = Matrix::Zero(sys.d(), 1);
    for (int k = 0; k < opt.steps; ++k) {
        const double t = grid[static_cast<std::size_t>(k)];
        const double dt = t - grid[static_cast<std::size_t>(k) + 1];
        const ScheduleCoeffs c = eval(spec, t);
        Vector next = reverse_step_cols(sys, c, state.x, den(state.x, t), dt, zero_eps, zero_null).col(0);
        next = project_null(sys, next) + locked;
        state = {next, grid[static_cast<std::size_t>(k) + 1]};
        path.push_back(state);
    }
    const Vector x0 = state.x;
    const double length = project_null(sys, x0 - x1).norm();
    double worst = 0.0;
    for (const auto& s : path) {
        const double alpha = eval(spec, s.t).alpha;
        const Vector line = alpha * x0 + (1.0 - alpha) * x1;
        worst = std::max(worst, project_null(sys, s.x - line).norm());
    }
    return {row("otode", "max_deviation_over_path_length", worst / std::max(length, 1e-300), opt.tolerance)};
}

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"penrose", "marginals", "g2", "posterior", "scores", "gradients", "otode"};
    return names;
}

Report run_suite(const std::string& name) {
    if (name == "penrose") return verify_penrose();
    if (name == "marginals") return verify_marginals();
    if (name == "g2") return verify_g2();
    if (name == "posterior") return verify_posterior();
    if (name == "scores") return verify_score_decomposition();
    if (name == "gradients") return verify_gradients();
    if (name == "otode") return verify_otode();
    throw ConfigError("unknown verification suite '" + name + "'");
}

}  // namespace sdb
