#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sdb/model.hpp"
#include "sdb/sampler.hpp"
#include "sdb/schedule.hpp"
#include "sdb/tasks.hpp"

namespace sdb {

/// Training-data distribution named in the [task] section.
struct DataConfig {
    enum class Kind { gaussian, mixture, image_blobs };
    Kind kind = Kind::image_blobs;
    std::vector<double> mean;                  // gaussian: mean (one entry broadcasts)
    double std = 1.0;                          // gaussian / mixture: isotropic component std
    std::vector<std::vector<double>> centers;  // mixture: component means
    std::vector<double> weights;               // mixture: component weights
};

struct TrainSection {
    TrainConfig config;
    std::vector<Index> hidden{128, 128};
    Activation activation = Activation::silu;
    TimeEmbedding embed;
    Index n_train = 1024;
    std::uint64_t data_seed = 1;
};

struct SampleSection {
    int n_steps = 100;
    TimeGrid grid = TimeGrid::uniform;
    std::optional<bool> range_lock;
    std::uint64_t seed = 0;
    Index n_samples = 16;
    int checkpoint_every = 0;
    int threads = 1;
};

struct EvalSection {
    std::vector<Perturbation> sweep;
    Index n_test = 32;
    std::uint64_t test_seed = 2;
};

struct ExperimentConfig {
    std::string run_id = "run";
    std::string output_dir = "out";
    TaskSpec task;
    DataConfig data;
    ScheduleSpec schedule;
    TrainSection train;
    SampleSection sample;
    EvalSection eval;

    /// Training-data distribution for this task's signal dimension.
    DatasetSpec dataset(Index d) const;
    SamplerConfig sampler() const;
};

/// Parses INI text. Relative file paths are resolved against `base_dir`.
/// Throws ConfigError naming the line for syntax errors, unknown sections or
/// keys, and malformed values.
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

/// Canonical INI text; parse_config(serialize_config(c)) reproduces c.
std::string serialize_config(const ExperimentConfig& cfg);

std::string serialize_perturbation(const Perturbation& p);
Perturbation parse_perturbation(const std::string& text);

/// FNV-1a hash of the canonical schedule and task strings. Checkpoints store
/// it so sampling refuses a model trained for another embedded system.
std::string system_hash(const ExperimentConfig& cfg);

}  // namespace sdb
