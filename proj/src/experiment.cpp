#include "sdb/experiment.hpp"

#include <cmath>
#include <cstdio>

#include "sdb/format.hpp"
#include "sdb/gaussian.hpp"
#include "sdb/oracle.hpp"

namespace sdb {

namespace {

NoiseFactor noise_for_var(double var) {
    return var > 0.0 ? NoiseFactor::isotropic(std::sqrt(var)) : NoiseFactor::none();
}

bool is_image(const ExperimentConfig& cfg, Index d) {
    return cfg.task.kind != TaskKind::dense && static_cast<Index>(cfg.task.image_side) * cfg.task.image_side == d;
}

std::string fmt(double v) { return format_double(v); }

void mean_sd(const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    sd = 0.0;
    if (v.empty()) return;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return;
    for (double x : v) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
}

}  // namespace

Vector Problem::measure(const Vector& x, Rng& rng) const {
    Vector y = nonlinear ? nonlinear->apply(x) : system.apply(x);
    if (!system.noise().is_zero()) y += system.noise_scale(rng.normal_vector(system.m()));
    return y;
}

Problem make_problem(const TaskSpec& task) {
    task.validate();
    if (task.kind != TaskKind::contrast) return {task, build_system(task), std::nullopt};
    const Index d = task.signal_dim();
    NonlinearSystem op = sigmoid_contrast(d, task.contrast_k, task.contrast_a);
    LinearizedModel lin = linearize(op, Vector::Constant(d, task.contrast_a), noise_for_var(task.noise_var));
    return {task, std::move(lin.system), std::move(op)};
}

Header run_header(const ExperimentConfig& cfg) {
    return {
        {"run_id", cfg.run_id},
        {"system_hash", system_hash(cfg)},
        {"schedule", canonical_string(cfg.schedule)},
        {"task", canonical_string(cfg.task)},
        {"eps1", fmt(cfg.schedule.eps1)},
        {"eps2", fmt(cfg.schedule.eps2)},
    };
}

void check_checkpoint(const Checkpoint& ckpt, const ExperimentConfig& cfg, Index d) {
    const auto it = ckpt.header.find("system_hash");
    const std::string expected = system_hash(cfg);
    if (it == ckpt.header.end()) throw ConfigError("checkpoint has no system_hash entry");
    if (it->second != expected) {
        const auto sched = ckpt.header.find("schedule");
        throw ConfigError("checkpoint was trained for another embedded system (hash " + it->second + ", config " +
                          expected + (sched != ckpt.header.end() ? ", checkpoint schedule " + sched->second : "") +
                          ")");
    }
    if (ckpt.net.signal_dim() != d) throw ConfigError("checkpoint signal dimension does not match the task");
}

TrainResult train_model(const ExperimentConfig& cfg, const Problem& problem, const EpochCallback& on_epoch) {
    const Index d = problem.d();
    const Matrix data = make_toy_dataset(cfg.dataset(d), cfg.train.n_train, cfg.train.data_seed);
    DenoiserNet net(d, cfg.train.hidden, cfg.train.activation, cfg.train.embed, cfg.train.config.seed);
    return train(std::move(net), problem.system, cfg.schedule, data, cfg.train.config, on_epoch);
}

DenoiserFactory network_denoisers(const DenoiserNet& net) {
    Denoiser den = as_denoiser(net);
    return [den](const LinearSystem&) { return den; };
}

DenoiserFactory oracle_denoisers(const ExperimentConfig& cfg, Index d) {
    const DatasetSpec data = cfg.dataset(d);
    if (data.kind != DatasetSpec::Kind::gaussian) {
        throw ConfigError("the oracle denoiser needs a gaussian dataset");
    }
    const GaussianBelief prior = data.gaussian;
    const ScheduleSpec spec = cfg.schedule;
    return [prior, spec](const LinearSystem& sys) { return oracle_denoiser(prior, sys, spec); };
}

Matrix sample_measurements(const ExperimentConfig& cfg, const Problem& problem, const Matrix& ys,
                           const DenoiserFactory& denoisers) {
    if (ys.rows() != problem.m()) {
        throw ConfigError("measurements have " + std::to_string(ys.rows()) + " rows; the task expects " +
                          std::to_string(problem.m()));
    }
    const Index n = cfg.sample.n_samples;
    const SamplerConfig sc = cfg.sampler();
    Matrix out(problem.d(), ys.cols() * n);
    if (n == 0 || ys.cols() == 0) return out;

    if (!problem.nonlinear) {
        Matrix rep(ys.rows(), out.cols());
        for (Index k = 0; k < ys.cols(); ++k) rep.middleCols(k * n, n) = ys.col(k).replicate(1, n);
        return sample_batch(problem.system, sc, rep, denoisers(problem.system));
    }
    for (Index k = 0; k < ys.cols(); ++k) {
        const Vector y = ys.col(k);
        const MleResult mle = mle_init(*problem.nonlinear, y);
        const LinearizedModel lin = linearize(*problem.nonlinear, mle.x, problem.system.noise());
        SamplerConfig local = sc;
        local.seed = stream_seed(sc.seed, static_cast<std::uint64_t>(k));
        out.middleCols(k * n, n) =
            sample_batch(lin.system, local, lin.linear_measurement(y).replicate(1, n), denoisers(lin.system));
    }
    return out;
}

ImageScore score_sample(const ExperimentConfig& cfg, const Vector& sample, const Vector& truth) {
    Vector s = sample;
    if (cfg.data.kind == DataConfig::Kind::image_blobs) s = s.cwiseMax(0.0).cwiseMin(1.0);
    ImageScore out;
    out.psnr = psnr(s, truth);
    if (is_image(cfg, s.size())) {
        SsimOptions opt;
        opt.window = std::min(opt.window, cfg.task.image_side);
        out.ssim = ssim(s, truth, cfg.task.image_side, opt);
    }
    return out;
}

SimulatedData simulate_measurements(const ExperimentConfig& cfg, const Problem& problem, Index n) {
    SimulatedData out;
    out.x0 = make_toy_dataset(cfg.dataset(problem.d()), n, cfg.eval.test_seed);
    out.ys.resize(problem.m(), n);
    Rng rng(stream_seed(cfg.eval.test_seed, 1));
    for (Index j = 0; j < n; ++j) out.ys.col(j) = problem.measure(out.x0.col(j), rng);
    return out;
}

std::vector<MisspecRow> run_misspec(const ExperimentConfig& cfg, const Problem& problem,
                                    const std::vector<Perturbation>& sweep, const DenoiserFactory& denoisers) {
    if (problem.nonlinear && !sweep.empty()) throw ConfigError("misspecification sweeps need a linear task");
    const Index n = cfg.eval.n_test;
    const Matrix x0 = make_toy_dataset(cfg.dataset(problem.d()), n, cfg.eval.test_seed);
    ExperimentConfig one = cfg;
    one.sample.n_samples = 1;

    std::vector<MisspecRow> rows;
    for (const Perturbation& p : sweep) {
        const PerturbedTask pt = perturb_system(cfg.task, p);
        Rng rng(stream_seed(cfg.eval.test_seed, 1));
        Matrix ys(problem.m(), n);
        for (Index j = 0; j < n; ++j) ys.col(j) = pt.generator.measure(x0.col(j), rng);
        const Matrix samples = sample_measurements(one, problem, ys, denoisers);

        MisspecRow row;
        row.perturbation = p.label();
        row.n = n;
        std::vector<double> ss;
        for (Index j = 0; j < n; ++j) {
            const ImageScore s = score_sample(cfg, samples.col(j), x0.col(j));
            row.psnr.push_back(s.psnr);
            if (s.ssim) ss.push_back(*s.ssim);
        }
        mean_sd(row.psnr, row.psnr_mean, row.psnr_sd);
        if (ss.empty()) {
            row.ssim_mean = row.ssim_sd = std::nan("");
        } else {
            mean_sd(ss, row.ssim_mean, row.ssim_sd);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace sdb
