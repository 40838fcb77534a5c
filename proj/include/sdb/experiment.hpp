#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sdb/config.hpp"
#include "sdb/model.hpp"
#include "sdb/nonlinear.hpp"

namespace sdb {

/// The system a network is trained against. Nonlinear tasks are embedded
/// through their linearization at a fixed reference point; sampling then
/// re-linearizes per measurement around an approximate maximum-likelihood
/// estimate.
struct Problem {
    TaskSpec task;
    LinearSystem system;
    std::optional<NonlinearSystem> nonlinear;

    Index d() const { return system.d(); }
    Index m() const { return system.m(); }
    /// Draws y for a clean signal from the task's own measurement model.
    Vector measure(const Vector& x, Rng& rng) const;
};

Problem make_problem(const TaskSpec& task);

/// Header entries stored in checkpoints and compared at sampling time.
Header run_header(const ExperimentConfig& cfg);
/// Throws ConfigError when the checkpoint was trained for another embedded
/// system or has the wrong signal dimension.
void check_checkpoint(const Checkpoint& ckpt, const ExperimentConfig& cfg, Index d);

/// Builds the dataset and network described by `cfg` and trains it.
TrainResult train_model(const ExperimentConfig& cfg, const Problem& problem, const EpochCallback& on_epoch = {});

/// Supplies the denoiser for the system a chain actually runs on.
using DenoiserFactory = std::function<Denoiser(const LinearSystem&)>;

DenoiserFactory network_denoisers(const DenoiserNet& net);
/// Exact conditional mean for Gaussian data; ConfigError for other datasets.
DenoiserFactory oracle_denoisers(const ExperimentConfig& cfg, Index d);

/// Runs `cfg.sample.n_samples` chains per column of `ys`. Column k * n + j of
/// the result is chain j for measurement k.
Matrix sample_measurements(const ExperimentConfig& cfg, const Problem& problem, const Matrix& ys,
                           const DenoiserFactory& denoisers);

struct ImageScore {
    double psnr = 0.0;
    std::optional<double> ssim;
};

/// PSNR always; SSIM when the signal is a square image. Image datasets are
/// clipped to [0, 1] before scoring.
ImageScore score_sample(const ExperimentConfig& cfg, const Vector& sample, const Vector& truth);

struct SimulatedData {
    Matrix x0;  // one clean signal per column
    Matrix ys;  // matching measurements
};

/// n clean signals drawn with `test_seed` and their measurements.
SimulatedData simulate_measurements(const ExperimentConfig& cfg, const Problem& problem, Index n);

struct MisspecRow {
    std::string perturbation;
    Index n = 0;
    double psnr_mean = 0.0;
    double psnr_sd = 0.0;
    double ssim_mean = 0.0;
    double ssim_sd = 0.0;
    std::vector<double> psnr;  // per test draw
};

/// For each perturbation: the same n_test clean signals and noise seeds,
/// measured by the perturbed system, reconstructed with the unchanged
/// embedded system and denoiser.
std::vector<MisspecRow> run_misspec(const ExperimentConfig& cfg, const Problem& problem,
                                    const std::vector<Perturbation>& sweep, const DenoiserFactory& denoisers);

}  // namespace sdb
