#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace sdb {

/// One line of a verification report.
struct CheckRow {
    std::string suite;
    std::string check;
    bool pass = false;
    double value = 0.0;
    double tolerance = 0.0;
};

using Report = std::vector<CheckRow>;

bool all_pass(const Report& r);
/// CSV with header suite,check,status,value,tolerance.
void write_report_csv(std::ostream& out, const Report& r);

struct PenroseOptions {
    int instances = 5;
    std::uint64_t seed = 101;
    double tolerance = 1e-9;
};
/// Four Penrose identities for each operator family.
Report verify_penrose(const PenroseOptions& opt = {});

struct MarginalOptions {
    int trajectories = 4000;
    int steps = 500;
    std::uint64_t seed = 202;
    double tolerance = 0.1;
    std::vector<double> times{0.2, 0.5, 0.8};
    bool include_terminal = true;
};
/// Forward Euler-Maruyama moments against the analytic marginal, for each
/// variant on a d = 4, m = 3 dense system with Sigma = 0.01 I.
Report verify_marginals(const MarginalOptions& opt = {});

struct G2Options {
    int pairs = 5;
    int grid_points = 1001;
    std::uint64_t seed = 303;
    double tolerance = 1e-8;
};
Report verify_g2(const G2Options& opt = {});

struct PosteriorOptions {
    int chains = 4000;
    int steps = 400;
    std::uint64_t seed = 404;
    double mean_tolerance = 0.05;
    double cov_tolerance = 0.1;
    double eps2 = 1e-8;
    double ve_sigma_max = 50.0;
};
/// Reverse sampling with the exact conditional-expectation denoiser against
/// the conjugate posterior (d = 4, m = 2, Sigma = 0.25 I).
Report verify_posterior(const PosteriorOptions& opt = {});

struct ScoreOptions {
    int tuples = 100;
    std::uint64_t seed = 505;
    double tolerance = 1e-8;
};
/// Sampler drift term against G G^T times the dense Gaussian score.
Report verify_score_decomposition(const ScoreOptions& opt = {});

struct GradientOptions {
    int points = 20;
    std::uint64_t seed = 606;
    double step = 1e-5;
    double tolerance = 1e-4;
};
/// Reverse-mode gradients of 3-layer nets against central differences.
Report verify_gradients(const GradientOptions& opt = {});

struct OtOdeOptions {
    double b = 1e-4;
    int steps = 1000;
    std::uint64_t seed = 707;
    double tolerance = 0.01;
};
/// Noise-free SB reverse run on the d = 2 mask toy against the straight
/// alpha_t interpolation between the initializer and the clean endpoint.
Report verify_otode(const OtOdeOptions& opt = {});

/// Names accepted by run_suite.
const std::vector<std::string>& suite_names();
/// Runs a suite with its default options; throws ConfigError on unknown names.
Report run_suite(const std::string& name);

}  // namespace sdb
