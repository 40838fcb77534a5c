#include "sdb/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "sdb/config.hpp"
#include "sdb/experiment.hpp"
#include "sdb/gaussian.hpp"
#include "sdb/oracle.hpp"
#include "sdb/tensor_io.hpp"
#include "sdb/verify.hpp"

namespace sdb {

namespace fs = std::filesystem;

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

namespace {

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string output;
    std::optional<int> threads;
};

std::string num(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

/// Appends timestamped lines to the sidecar log; CSV outputs stay free of
/// anything time-dependent.
class RunLog {
public:
    explicit RunLog(const fs::path& path) : out_(path, std::ios::app) {
        if (!out_) throw Error("cannot open log file " + path.string());
    }
    void line(const std::string& msg) {
        const auto now = std::chrono::system_clock::now();
        const std::time_t t = std::chrono::system_clock::to_time_t(now);
        std::tm tm{};
        gmtime_r(&t, &tm);
        out_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << msg << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

ExperimentConfig load_with_overrides(const GlobalOptions& g) {
    if (g.config.empty()) throw ConfigError("--config is required for this command");
    ExperimentConfig cfg = load_config(g.config);
    if (g.seed) {
        cfg.train.config.seed = *g.seed;
        cfg.sample.seed = *g.seed;
    }
    if (!g.output.empty()) cfg.output_dir = g.output;
    if (g.threads) cfg.sample.threads = *g.threads;
    cfg.sampler().validate();
    return cfg;
}

fs::path prepare_output(const ExperimentConfig& cfg) {
    const fs::path dir(cfg.output_dir);
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw ConfigError("output path exists and is not a directory: " + dir.string());
        return dir;
    }
    const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
    if (!fs::is_directory(parent)) {
        throw ConfigError("parent of output directory does not exist: " + parent.string());
    }
    fs::create_directory(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed for " + path.string());
}

Matrix load_measurements(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("measurement file does not exist: " + path);
    if (fs::path(path).extension() == ".csv") return load_csv_matrix(path);
    return to_matrix(load_tensor(path));
}

int cmd_train(const GlobalOptions& g, std::ostream& out) {
    const ExperimentConfig cfg = load_with_overrides(g);
    const fs::path dir = prepare_output(cfg);
    RunLog log(dir / "run.log");
    log.line("train start run_id=" + cfg.run_id);
    write_text(dir / "config.ini", serialize_config(cfg));

    const Problem problem = make_problem(cfg.task);
    const TrainResult res = train_model(cfg, problem, [&](int epoch, double loss) {
        log.line("epoch " + std::to_string(epoch + 1) + " loss " + num(loss));
    });

    std::ostringstream csv;
    csv << "epoch,mean_loss\n";
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) csv << (e + 1) << ',' << num(res.epoch_loss[e]) << '\n';
    write_text(dir / "loss.csv", csv.str());
    save_checkpoint((dir / "checkpoint.sdbc").string(), res.net, run_header(cfg));
    log.line("train done");
    out << "trained " << res.epoch_loss.size() << " epochs; final loss "
        << (res.epoch_loss.empty() ? std::string("n/a") : num(res.epoch_loss.back())) << "\n";
    out << "checkpoint: " << (dir / "checkpoint.sdbc").string() << "\n";
    return kExitOk;
}

struct SampleOptions {
    std::string checkpoint;
    std::string y_path;
    bool simulate = false;
    bool oracle = false;
};

DenoiserFactory pick_denoisers(const ExperimentConfig& cfg, const fs::path& dir, const std::string& checkpoint,
                               bool oracle, Index d) {
    if (oracle) return oracle_denoisers(cfg, d);
    const std::string path = checkpoint.empty() ? (dir / "checkpoint.sdbc").string() : checkpoint;
    if (!fs::exists(path)) throw ConfigError("checkpoint does not exist: " + path);
    Checkpoint ckpt = load_checkpoint(path);
    check_checkpoint(ckpt, cfg, d);
    return network_denoisers(ckpt.net);
}

int cmd_sample(const GlobalOptions& g, const SampleOptions& o, std::ostream& out) {
    if (o.simulate == !o.y_path.empty()) throw ConfigError("sample needs exactly one of --y or --simulate");
    const ExperimentConfig cfg = load_with_overrides(g);
    const fs::path dir = prepare_output(cfg);
    RunLog log(dir / "run.log");
    log.line("sample start run_id=" + cfg.run_id);
    write_text(dir / "config.ini", serialize_config(cfg));

    const Problem problem = make_problem(cfg.task);
    const DenoiserFactory denoisers = pick_denoisers(cfg, dir, o.checkpoint, o.oracle, problem.d());

    std::optional<Matrix> truth;
    Matrix ys;
    if (o.simulate) {
        SimulatedData sim = simulate_measurements(cfg, problem, cfg.eval.n_test);
        truth = std::move(sim.x0);
        ys = std::move(sim.ys);
    } else {
        ys = load_measurements(o.y_path);
    }
    const Matrix samples = sample_measurements(cfg, problem, ys, denoisers);
    const Index n = cfg.sample.n_samples;

    save_tensor((dir / "samples.sdbt").string(), to_tensor(samples));
    save_tensor((dir / "measurements.sdbt").string(), to_tensor(ys));
    if (truth) save_tensor((dir / "truth.sdbt").string(), to_tensor(*truth));
    {
        std::ostringstream meta;
        for (const auto& [k, v] : run_header(cfg)) meta << k << '=' << v << '\n';
        meta << "n_steps=" << cfg.sample.n_steps << '\n';
        meta << "grid=" << to_string(cfg.sample.grid) << '\n';
        meta << "seed=" << cfg.sample.seed << '\n';
        meta << "chains_per_measurement=" << n << '\n';
        meta << "denoiser=" << (o.oracle ? "oracle" : "network") << '\n';
        write_text(dir / "samples.meta", meta.str());
    }

    std::ostringstream csv;
    csv << "measurement,chain,residual,psnr,ssim\n";
    double psnr_sum = 0.0;
    for (Index k = 0; k < ys.cols(); ++k) {
        for (Index j = 0; j < n; ++j) {
            const Vector x = samples.col(k * n + j);
            const Vector pred = problem.nonlinear ? problem.nonlinear->apply(x) : problem.system.apply(x);
            csv << k << ',' << j << ',' << num((pred - ys.col(k)).norm()) << ',';
            if (truth) {
                const ImageScore s = score_sample(cfg, x, truth->col(k));
                psnr_sum += s.psnr;
                csv << num(s.psnr) << ',' << (s.ssim ? num(*s.ssim) : "");
            } else {
                csv << ',';
            }
            csv << '\n';
        }
    }
    write_text(dir / "metrics.csv", csv.str());

    if (o.oracle && !problem.nonlinear && n > 1) {
        const GaussianBelief prior = cfg.dataset(problem.d()).gaussian;
        std::ostringstream post;
        post << "measurement,statistic,i,j,empirical,analytic\n";
        for (Index k = 0; k < ys.cols(); ++k) {
            const GaussianBelief ref = gaussian_posterior(prior, problem.system, ys.col(k));
            const GaussianBelief est = empirical_moments(samples.middleCols(k * n, n));
            for (Index i = 0; i < problem.d(); ++i)
                post << k << ",mean," << i << ",," << num(est.mean[i]) << ',' << num(ref.mean[i]) << '\n';
            for (Index i = 0; i < problem.d(); ++i)
                for (Index j = 0; j < problem.d(); ++j)
                    post << k << ",cov," << i << ',' << j << ',' << num(est.cov(i, j)) << ',' << num(ref.cov(i, j))
                         << '\n';
        }
        write_text(dir / "posterior.csv", post.str());
    }
    log.line("sample done");
    out << "wrote " << samples.cols() << " samples to " << (dir / "samples.sdbt").string() << "\n";
    if (truth && samples.cols() > 0) out << "mean PSNR " << num(psnr_sum / static_cast<double>(samples.cols())) << " dB\n";
    return kExitOk;
}

int cmd_verify(const GlobalOptions& g, std::vector<std::string> suites, std::ostream& out) {
    if (suites.empty()) suites = suite_names();
    for (const auto& s : suites) {
        if (std::find(suite_names().begin(), suite_names().end(), s) == suite_names().end()) {
            throw ConfigError("unknown verification suite '" + s + "'");
        }
    }
    Report report;
    for (const auto& s : suites) {
        Report r = run_suite(s);
        report.insert(report.end(), r.begin(), r.end());
    }
    write_report_csv(out, report);
    if (!g.output.empty()) {
        ExperimentConfig where;
        where.output_dir = g.output;
        std::ostringstream csv;
        write_report_csv(csv, report);
        write_text(prepare_output(where) / "verify.csv", csv.str());
    }
    return all_pass(report) ? kExitOk : kExitRuntime;
}

struct MisspecOptions {
    std::string checkpoint;
    std::optional<std::string> sweep;
    bool oracle = false;
};

int cmd_misspec(const GlobalOptions& g, const MisspecOptions& o, std::ostream& out) {
    ExperimentConfig cfg = load_with_overrides(g);
    if (o.sweep) {
        cfg.eval.sweep.clear();
        std::istringstream in(*o.sweep);
        std::string item;
        while (std::getline(in, item, ';'))
            if (item.find_first_not_of(" \t") != std::string::npos) cfg.eval.sweep.push_back(parse_perturbation(item));
    }
    const fs::path dir = prepare_output(cfg);
    RunLog log(dir / "run.log");
    log.line("misspec start run_id=" + cfg.run_id + " points=" + std::to_string(cfg.eval.sweep.size()));
    write_text(dir / "config.ini", serialize_config(cfg));

    const Problem problem = make_problem(cfg.task);
    std::vector<MisspecRow> rows;
    if (!cfg.eval.sweep.empty()) {
        const DenoiserFactory denoisers = pick_denoisers(cfg, dir, o.checkpoint, o.oracle, problem.d());
        rows = run_misspec(cfg, problem, cfg.eval.sweep, denoisers);
    }
    std::ostringstream csv;
    csv << "run_id,task,variant,perturbation,psnr,psnr_sd,ssim,ssim_sd,n_samples,seed\n";
    for (const auto& r : rows) {
        csv << csv_field(cfg.run_id) << ',' << to_string(cfg.task.kind) << ',' << to_string(cfg.schedule.variant) << ','
            << csv_field(r.perturbation) << ',' << num(r.psnr_mean) << ',' << num(r.psnr_sd) << ','
            << num(r.ssim_mean) << ',' << num(r.ssim_sd) << ',' << r.n << ',' << cfg.sample.seed << '\n';
        out << r.perturbation << ": PSNR " << num(r.psnr_mean) << " +- " << num(r.psnr_sd) << "\n";
    }
    write_text(dir / "misspec.csv", csv.str());
    log.line("misspec done");
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"System-embedded diffusion bridge toolkit", "sdb"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--config", g.config, "Experiment config file (INI)");
    app.add_option("--seed", g.seed, "Override the [train] and [sample] seeds");
    app.add_option("--output", g.output, "Override output_dir");
    app.add_option("--threads", g.threads, "Sampler worker threads")->check(CLI::PositiveNumber);

    auto* train = app.add_subcommand("train", "Train a denoiser and write checkpoint.sdbc and loss.csv");

    SampleOptions so;
    auto* sample = app.add_subcommand("sample", "Reverse-SDE sampling; writes samples.sdbt and metrics.csv");
    sample->add_option("--checkpoint", so.checkpoint, "Checkpoint (default: <output>/checkpoint.sdbc)");
    sample->add_option("--y", so.y_path, "Measurements as SDBT or CSV, one per column");
    sample->add_flag("--simulate", so.simulate, "Draw test signals and measurements from the task");
    sample->add_flag("--oracle-denoiser", so.oracle, "Use the exact Gaussian conditional mean instead of a network");

    std::vector<std::string> suites;
    auto* verify = app.add_subcommand("verify", "Run property suites and print a CSV report");
    verify->add_option("suites", suites, "Suites: penrose, marginals, g2, posterior, scores, gradients, otode");

    MisspecOptions mo;
    std::string sweep;
    auto* misspec = app.add_subcommand("misspec", "Evaluate a fixed checkpoint on perturbed measurement systems");
    misspec->add_option("--checkpoint", mo.checkpoint, "Checkpoint (default: <output>/checkpoint.sdbc)");
    auto* sweep_opt = misspec->add_option("--sweep", sweep, "Perturbations such as \"lambda1=16;lambda1=14\"");
    misspec->add_flag("--oracle-denoiser", mo.oracle, "Use the exact Gaussian conditional mean instead of a network");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    if (sweep_opt->count() > 0) mo.sweep = sweep;

    try {
        if (train->parsed()) return cmd_train(g, out);
        if (sample->parsed()) return cmd_sample(g, so, out);
        if (verify->parsed()) return cmd_verify(g, suites, out);
        if (misspec->parsed()) return cmd_misspec(g, mo, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UnsupportedVariant& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace sdb
