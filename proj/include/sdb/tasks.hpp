#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sdb/gaussian.hpp"
#include "sdb/linop.hpp"
#include "sdb/rng.hpp"

namespace sdb {

enum class TaskKind { identity, dense, inpainting, superres, ct, mri, contrast };

std::string_view to_string(TaskKind k);
TaskKind parse_task_kind(std::string_view name);

/// Benchmark measurement system at desk scale. Images are side x side,
/// flattened row-major, so d = side^2 (except `dense`, where d comes from
/// the matrix).
struct TaskSpec {
    TaskKind kind = TaskKind::identity;
    int image_side = 8;
    std::uint64_t seed = 0;

    // identity / dense / inpainting / superres: isotropic noise variance.
    double noise_var = 0.0;
    // dense: matrix file (CSV or SDBT).
    std::string matrix_path;

    double mask_fraction = 0.5;  // inpainting: fraction of pixels removed
    int factor = 4;              // superres: pooling block size

    double tau = 0.05;           // ct: absolute singular-value threshold
    double sigma1_sq = 1e-4;     // ct: noise variance
    double latent_dim = 16.0;    // ct: spectrum decay length

    double lambda1 = 16.0;       // mri: % of rows from the lowest frequencies
    double lambda2 = 30.0;       // mri: % of rows drawn at random from the rest
    double sigma2_sq = 5.0;      // mri: noise variance

    double contrast_k = 4.0;     // contrast: sigmoid slope
    double contrast_a = 0.5;     // contrast: sigmoid center

    Index signal_dim() const;
    /// Noise variance of the configured system.
    double measurement_noise_var() const;
    void validate() const;
};

/// Canonical text form of the fields that define the system.
std::string canonical_string(const TaskSpec& spec);

LinearSystem build_system(const TaskSpec& spec);

/// Deployment-time changes applied to a training-time task.
struct Perturbation {
    std::optional<double> lambda1;
    std::optional<double> tau;
    std::optional<double> noise_var;
    std::optional<double> poisson_i0;

    bool is_identity() const { return !lambda1 && !tau && !noise_var && !poisson_i0; }
    /// Short label such as "lambda1=14" or "none".
    std::string label() const;
};

/// Draws measurements from the deployed (perturbed) model and expresses them
/// in the coordinates of the training-time system, zero-filling rows the
/// deployed system does not observe.
class MeasurementGenerator {
public:
    MeasurementGenerator(LinearSystem deployed, Matrix to_training, std::optional<double> poisson_i0);

    const LinearSystem& deployed() const { return deployed_; }
    /// Row map from deployed measurements to training measurements.
    const Matrix& to_training() const { return to_training_; }
    std::optional<double> poisson_i0() const { return poisson_i0_; }

    /// y in deployed coordinates.
    Vector measure_deployed(const Vector& x, Rng& rng) const;
    /// y in training coordinates.
    Vector measure(const Vector& x, Rng& rng) const;
    /// Raw photon counts y ~ Poisson(I0 exp(-A x)); requires a Poisson model.
    Vector poisson_counts(const Vector& x, Rng& rng) const;

private:
    LinearSystem deployed_;
    Matrix to_training_;
    std::optional<double> poisson_i0_;
};

struct PerturbedTask {
    TaskSpec spec;
    LinearSystem system;
    MeasurementGenerator generator;
};

PerturbedTask perturb_system(const TaskSpec& spec, const Perturbation& p);

/// Peak-1 PSNR in dB, capped at 100 dB.
inline constexpr double kPsnrCap = 100.0;
double psnr(const Vector& x, const Vector& ref);

struct SsimOptions {
    int window = 8;
    double c1 = 1e-4;
    double c2 = 9e-4;
};

/// Mean SSIM over all window positions of two side x side images.
double ssim(const Vector& x, const Vector& ref, int side, const SsimOptions& opt = {});

struct MixtureComponent {
    double weight = 0.0;
    GaussianBelief dist;
};

struct DatasetSpec {
    enum class Kind { gaussian, mixture, image_blobs };
    Kind kind = Kind::gaussian;
    GaussianBelief gaussian;
    std::vector<MixtureComponent> mixture;
    int image_side = 8;

    static DatasetSpec make_gaussian(GaussianBelief g);
    static DatasetSpec make_mixture(std::vector<MixtureComponent> components);
    static DatasetSpec make_image_blobs(int side);

    Index dim() const;
    void validate() const;
};

/// n draws, one per column.
Matrix make_toy_dataset(const DatasetSpec& spec, Index n, std::uint64_t seed);

/// Exact p(x | y) for Gaussian-mixture data: per-component conjugate
/// posteriors, reweighted by each component's evidence p(y | k).
std::vector<MixtureComponent> mixture_posterior(const std::vector<MixtureComponent>& prior, const LinearSystem& sys,
                                                const Vector& y);

}  // namespace sdb
