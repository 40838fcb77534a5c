#include "sdb/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "sdb/format.hpp"
#include "sdb/oracle.hpp"
#include "sdb/tensor_io.hpp"

namespace sdb {

namespace {

std::string fmt(double v) { return format_double(v); }

Matrix load_matrix_file(const std::string& path) {
    if (path.empty()) throw ParameterError("dense task needs a matrix file");
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return load_csv_matrix(path);
    return to_matrix(load_tensor(path));
}

NoiseFactor noise_from_var(double var) {
    if (var < 0.0) throw ParameterError("noise variance must be non-negative");
    return var == 0.0 ? NoiseFactor::none() : NoiseFactor::isotropic(std::sqrt(var));
}

// Haar-random orthogonal matrix: QR of a Gaussian matrix with the signs of
// R's diagonal folded into Q.
Matrix random_orthogonal(Index n, Rng& rng) {
    Matrix g(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(n, n);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index j = 0; j < n; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

LinearSystem build_mask(const TaskSpec& spec) {
    const Index d = spec.signal_dim();
    const Index removed = static_cast<Index>(std::llround(spec.mask_fraction * static_cast<double>(d)));
    std::vector<Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng.engine());
    auto keep = std::make_shared<Vector>(Vector::Ones(d));
    for (Index i = 0; i < removed; ++i) (*keep)[order[static_cast<std::size_t>(i)]] = 0.0;
    auto diag = [keep](const Matrix& x) -> Matrix { return keep->asDiagonal() * x; };
    return LinearSystem(SystemKind::mask, d, d, {diag, diag, diag}, noise_from_var(spec.noise_var));
}

LinearSystem build_avgpool(const TaskSpec& spec) {
    const int n = spec.image_side;
    const int k = spec.factor;
    const int c = n / k;
    const Index d = static_cast<Index>(n) * n;
    const Index m = static_cast<Index>(c) * c;
    const double inv_area = 1.0 / (k * k);
    auto pool = [=](const Matrix& x) -> Matrix {
        Matrix y = Matrix::Zero(m, x.cols());
        for (Index col = 0; col < x.cols(); ++col)
            for (int r = 0; r < n; ++r)
                for (int q = 0; q < n; ++q) y((r / k) * c + q / k, col) += x(r * n + q, col);
        return y * inv_area;
    };
    auto spread = [=](const Matrix& y, double scale) -> Matrix {
        Matrix x(d, y.cols());
        for (Index col = 0; col < y.cols(); ++col)
            for (int r = 0; r < n; ++r)
                for (int q = 0; q < n; ++q) x(r * n + q, col) = scale * y((r / k) * c + q / k, col);
        return x;
    };
    LinearSystem::Ops ops{pool, [=](const Matrix& y) { return spread(y, inv_area); },
                          [=](const Matrix& y) { return spread(y, 1.0); }};
    return LinearSystem(SystemKind::avgpool, m, d, std::move(ops), noise_from_var(spec.noise_var));
}

struct CtFactors {
    Matrix u;
    Vector s;
    Matrix v;
};

CtFactors ct_factors(const TaskSpec& spec) {
    const Index d = spec.signal_dim();
    Rng rng(spec.seed);
    CtFactors f;
    f.u = random_orthogonal(d, rng);
    f.v = random_orthogonal(d, rng);
    f.s.resize(d);
    for (Index i = 0; i < d; ++i) f.s[i] = std::exp(-static_cast<double>(i) / spec.latent_dim);
    return f;
}

LinearSystem build_ct(const TaskSpec& spec) {
    const CtFactors f = ct_factors(spec);
    Vector kept = f.s;
    Vector inv = Vector::Zero(kept.size());
    for (Index i = 0; i < kept.size(); ++i) {
        if (kept[i] < spec.tau) {
            kept[i] = 0.0;
        } else {
            inv[i] = 1.0 / kept[i];
        }
    }
    const Matrix a = f.u * kept.asDiagonal() * f.v.transpose();
    const Matrix pinv = f.v * inv.asDiagonal() * f.u.transpose();
    return build_dense_system_with_pinv(SystemKind::truncated_svd, a, pinv, noise_from_var(spec.sigma1_sq));
}

// One realified frequency unit: a self-conjugate frequency (one real row) or a
// conjugate pair (two rows).
struct FreqUnit {
    int k1 = 0;
    int k2 = 0;
    bool self_conjugate = false;
    double radius = 0.0;
    int rows() const { return self_conjugate ? 1 : 2; }
};

std::vector<FreqUnit> frequency_units(int n) {
    auto centered = [n](int k) { return k <= n / 2 ? k : k - n; };
    std::vector<FreqUnit> units;
    for (int k1 = 0; k1 < n; ++k1) {
        for (int k2 = 0; k2 < n; ++k2) {
            const int c1 = (n - k1) % n;
            const int c2 = (n - k2) % n;
            const bool self = (c1 == k1 && c2 == k2);
            // Keep one representative per conjugate pair.
            if (!self && std::make_pair(c1, c2) < std::make_pair(k1, k2)) continue;
            const double a = centered(k1);
            const double b = centered(k2);
            units.push_back({k1, k2, self, std::sqrt(a * a + b * b)});
        }
    }
    std::stable_sort(units.begin(), units.end(),
                     [](const FreqUnit& x, const FreqUnit& y) { return x.radius < y.radius; });
    return units;
}

// Indices into `units` (sorted by radius) selected by the lambda1 / lambda2 rule.
std::vector<std::size_t> mri_selection(const TaskSpec& spec, const std::vector<FreqUnit>& units) {
    const double d = static_cast<double>(spec.signal_dim());
    const auto target1 = static_cast<long>(std::llround(spec.lambda1 / 100.0 * d));
    const auto target2 = static_cast<long>(std::llround(spec.lambda2 / 100.0 * d));
    std::vector<bool> taken(units.size(), false);
    std::vector<std::size_t> chosen;
    long rows = 0;
    for (std::size_t i = 0; i < units.size() && rows < target1; ++i) {
        taken[i] = true;
        chosen.push_back(i);
        rows += units[i].rows();
    }
    // A fixed random ranking of every unit; lambda2 takes the best-ranked
    // units that lambda1 left over.
    std::vector<std::size_t> rank(units.size());
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    Rng rng(spec.seed);
    std::shuffle(rank.begin(), rank.end(), rng.engine());
    long rows2 = 0;
    for (std::size_t i : rank) {
        if (rows2 >= target2) break;
        if (taken[i]) continue;
        taken[i] = true;
        chosen.push_back(i);
        rows2 += units[i].rows();
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

struct MriRow {
    std::size_t unit = 0;
    int part = 0;  // 0: real, 1: imaginary
};

std::vector<MriRow> mri_rows(const TaskSpec& spec, const std::vector<FreqUnit>& units) {
    std::vector<MriRow> rows;
    for (std::size_t i : mri_selection(spec, units)) {
        rows.push_back({i, 0});
        if (!units[i].self_conjugate) rows.push_back({i, 1});
    }
    return rows;
}

Matrix mri_matrix(int n, const std::vector<FreqUnit>& units, const std::vector<MriRow>& rows) {
    const Index d = static_cast<Index>(n) * n;
    Matrix a(static_cast<Index>(rows.size()), d);
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const FreqUnit& u = units[rows[r].unit];
        const double scale = (u.self_conjugate ? 1.0 : std::sqrt(2.0)) / n;
        for (int p1 = 0; p1 < n; ++p1) {
            for (int p2 = 0; p2 < n; ++p2) {
                const double theta = two_pi * static_cast<double>((u.k1 * p1 + u.k2 * p2) % n) / n;
                a(static_cast<Index>(r), p1 * n + p2) =
                    rows[r].part == 0 ? scale * std::cos(theta) : -scale * std::sin(theta);
            }
        }
    }
    return a;
}

LinearSystem build_mri(const TaskSpec& spec) {
    const auto units = frequency_units(spec.image_side);
    const Matrix a = mri_matrix(spec.image_side, units, mri_rows(spec, units));
    return build_dense_system_with_pinv(SystemKind::fourier_mask, a, a.transpose(), noise_from_var(spec.sigma2_sq));
}

// Zero-filling map from the rows of a perturbed MRI mask to the training rows.
Matrix mri_row_map(const TaskSpec& train, const TaskSpec& deployed) {
    const auto units = frequency_units(train.image_side);
    const auto rt = mri_rows(train, units);
    const auto rd = mri_rows(deployed, units);
    Matrix map = Matrix::Zero(static_cast<Index>(rt.size()), static_cast<Index>(rd.size()));
    for (std::size_t i = 0; i < rt.size(); ++i)
        for (std::size_t j = 0; j < rd.size(); ++j)
            if (rt[i].unit == rd[j].unit && rt[i].part == rd[j].part) map(static_cast<Index>(i), static_cast<Index>(j)) = 1.0;
    return map;
}

double poisson_draw(double mean, Rng& rng) {
    std::poisson_distribution<long long> dist(mean);
    return static_cast<double>(dist(rng.engine()));
}

// log N(y; mean, cov) with pseudo-inverse and pseudo-determinant; -inf when y
// leaves the support.
double gaussian_log_density(const Vector& y, const Vector& mean, const Matrix& cov) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrized(cov));
    if (eig.info() != Eigen::Success) throw NumericalFailure("eigendecomposition failed in mixture evidence");
    const Vector& lam = eig.eigenvalues();
    const double top = lam.size() ? lam.cwiseAbs().maxCoeff() : 0.0;
    const Vector proj = eig.eigenvectors().transpose() * (y - mean);
    double logp = 0.0;
    for (Index i = 0; i < lam.size(); ++i) {
        if (lam[i] > 1e-12 * top && lam[i] > 0.0) {
            logp += -0.5 * (proj[i] * proj[i] / lam[i] + std::log(2.0 * std::numbers::pi * lam[i]));
        } else if (std::abs(proj[i]) > 1e-8 * (1.0 + y.norm())) {
            return -std::numeric_limits<double>::infinity();
        }
    }
    return logp;
}

}  // namespace

std::string_view to_string(TaskKind k) {
    switch (k) {
        case TaskKind::identity:
            return "identity";
        case TaskKind::dense:
            return "dense";
        case TaskKind::inpainting:
            return "inpainting";
        case TaskKind::superres:
            return "superres";
        case TaskKind::ct:
            return "ct";
        case TaskKind::mri:
            return "mri";
        case TaskKind::contrast:
            return "contrast";
    }
    return "?";
}

TaskKind parse_task_kind(std::string_view name) {
    for (TaskKind k : {TaskKind::identity, TaskKind::dense, TaskKind::inpainting, TaskKind::superres, TaskKind::ct,
                       TaskKind::mri, TaskKind::contrast}) {
        if (name == to_string(k)) return k;
    }
    throw ParameterError("unknown task '" + std::string(name) + "'");
}

Index TaskSpec::signal_dim() const {
    if (kind == TaskKind::dense) return load_matrix_file(matrix_path).cols();
    return static_cast<Index>(image_side) * image_side;
}

double TaskSpec::measurement_noise_var() const {
    switch (kind) {
        case TaskKind::ct:
            return sigma1_sq;
        case TaskKind::mri:
            return sigma2_sq;
        default:
            return noise_var;
    }
}

void TaskSpec::validate() const {
    if (kind != TaskKind::dense && image_side < 1) throw ParameterError("image_side must be positive");
    if (static_cast<Index>(image_side) * image_side > kMaxDenseDim) throw CapacityError("image_side too large");
    if (!(noise_var >= 0.0)) throw ParameterError("noise_var must be non-negative");
    switch (kind) {
        case TaskKind::identity:
        case TaskKind::contrast:
            break;
        case TaskKind::dense:
            if (matrix_path.empty()) throw ParameterError("dense task needs a matrix file");
            break;
        case TaskKind::inpainting:
            if (!(mask_fraction >= 0.0 && mask_fraction <= 1.0)) throw ParameterError("mask_fraction must lie in [0, 1]");
            break;
        case TaskKind::superres:
            if (factor < 1 || image_side % factor != 0) {
                throw ParameterError("superres factor " + std::to_string(factor) + " must divide image_side " +
                                     std::to_string(image_side));
            }
            break;
        case TaskKind::ct:
            if (!(tau >= 0.0)) throw ParameterError("tau must be non-negative");
            if (!(sigma1_sq >= 0.0)) throw ParameterError("sigma1_sq must be non-negative");
            if (!(latent_dim > 0.0)) throw ParameterError("latent_dim must be positive");
            if (image_side * image_side > kMaxOracleDim) throw CapacityError("ct task is dense; d must be <= 256");
            break;
        case TaskKind::mri:
            if (!(lambda1 >= 0.0 && lambda2 >= 0.0)) throw ParameterError("lambda1 and lambda2 must be non-negative");
            if (lambda1 + lambda2 > 100.0 + 1e-12) {
                throw ParameterError("lambda1 + lambda2 selects more than 100% of the frequencies");
            }
            if (!(sigma2_sq >= 0.0)) throw ParameterError("sigma2_sq must be non-negative");
            if (image_side * image_side > kMaxOracleDim) throw CapacityError("mri task is dense; d must be <= 256");
            break;
    }
    if (kind == TaskKind::contrast && !(contrast_k > 0.0)) throw ParameterError("contrast_k must be positive");
}

std::string canonical_string(const TaskSpec& s) {
    std::ostringstream out;
    out << "task=" << to_string(s.kind);
    switch (s.kind) {
        case TaskKind::identity:
            out << ";image_side=" << s.image_side << ";noise_var=" << fmt(s.noise_var);
            break;
        case TaskKind::dense:
            out << ";matrix=" << s.matrix_path << ";noise_var=" << fmt(s.noise_var);
            break;
        case TaskKind::inpainting:
            out << ";image_side=" << s.image_side << ";mask_fraction=" << fmt(s.mask_fraction)
                << ";noise_var=" << fmt(s.noise_var) << ";seed=" << s.seed;
            break;
        case TaskKind::superres:
            out << ";image_side=" << s.image_side << ";factor=" << s.factor << ";noise_var=" << fmt(s.noise_var);
            break;
        case TaskKind::ct:
            out << ";image_side=" << s.image_side << ";tau=" << fmt(s.tau) << ";sigma1_sq=" << fmt(s.sigma1_sq)
                << ";latent_dim=" << fmt(s.latent_dim) << ";seed=" << s.seed;
            break;
        case TaskKind::mri:
            out << ";image_side=" << s.image_side << ";lambda1=" << fmt(s.lambda1) << ";lambda2=" << fmt(s.lambda2)
                << ";sigma2_sq=" << fmt(s.sigma2_sq) << ";seed=" << s.seed;
            break;
        case TaskKind::contrast:
            out << ";image_side=" << s.image_side << ";k=" << fmt(s.contrast_k) << ";a=" << fmt(s.contrast_a)
                << ";noise_var=" << fmt(s.noise_var);
            break;
    }
    return out.str();
}

LinearSystem build_system(const TaskSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case TaskKind::identity: {
            const Index d = spec.signal_dim();
            auto id = [](const Matrix& x) -> Matrix { return x; };
            return LinearSystem(SystemKind::dense, d, d, {id, id, id}, noise_from_var(spec.noise_var));
        }
        case TaskKind::dense:
            return build_dense_system(load_matrix_file(spec.matrix_path), noise_from_var(spec.noise_var));
        case TaskKind::inpainting:
            return build_mask(spec);
        case TaskKind::superres:
            return build_avgpool(spec);
        case TaskKind::ct:
            return build_ct(spec);
        case TaskKind::mri:
            return build_mri(spec);
        case TaskKind::contrast:
            throw UnsupportedVariant("the contrast task is nonlinear; linearize it before building a system");
    }
    throw UnsupportedVariant("unknown task kind");
}

std::string Perturbation::label() const {
    std::vector<std::string> parts;
    if (lambda1) parts.push_back("lambda1=" + fmt(*lambda1));
    if (tau) parts.push_back("tau=" + fmt(*tau));
    if (noise_var) parts.push_back("noise_var=" + fmt(*noise_var));
    if (poisson_i0) parts.push_back("poisson_i0=" + fmt(*poisson_i0));
    if (parts.empty()) return "none";
    std::string out = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) out += ";" + parts[i];
    return out;
}

MeasurementGenerator::MeasurementGenerator(LinearSystem deployed, Matrix to_training, std::optional<double> poisson_i0)
    : deployed_(std::move(deployed)), to_training_(std::move(to_training)), poisson_i0_(poisson_i0) {
    if (to_training_.cols() != deployed_.m()) throw ContractViolation("measurement row map has the wrong width");
    if (poisson_i0_ && !(*poisson_i0_ > 0.0)) throw ParameterError("Poisson I0 must be positive");
}

Vector MeasurementGenerator::poisson_counts(const Vector& x, Rng& rng) const {
    if (!poisson_i0_) throw UnsupportedVariant("generator has no Poisson noise model");
    const Vector ax = deployed_.apply(x);
    Vector counts(ax.size());
    for (Index i = 0; i < ax.size(); ++i) counts[i] = poisson_draw(*poisson_i0_ * std::exp(-ax[i]), rng);
    return counts;
}

Vector MeasurementGenerator::measure_deployed(const Vector& x, Rng& rng) const {
    if (poisson_i0_) {
        // Post-log transform back to the linear model's units.
        const Vector counts = poisson_counts(x, rng);
        return counts.unaryExpr([&](double c) { return -std::log(std::max(c, 1.0) / *poisson_i0_); });
    }
    Vector y = deployed_.apply(x);
    if (!deployed_.noise().is_zero()) y += deployed_.noise_scale(rng.normal_vector(deployed_.m()));
    return y;
}

Vector MeasurementGenerator::measure(const Vector& x, Rng& rng) const {
    return to_training_ * measure_deployed(x, rng);
}

PerturbedTask perturb_system(const TaskSpec& spec, const Perturbation& p) {
    spec.validate();
    TaskSpec dep = spec;
    if (p.lambda1) {
        if (spec.kind != TaskKind::mri) throw ParameterError("lambda1 perturbation applies to the mri task only");
        dep.lambda1 = *p.lambda1;
    }
    if (p.tau) {
        if (spec.kind != TaskKind::ct) throw ParameterError("tau perturbation applies to the ct task only");
        dep.tau = *p.tau;
    }
    if (p.noise_var) {
        if (!(*p.noise_var >= 0.0)) throw ParameterError("perturbed noise variance must be non-negative");
        if (spec.kind == TaskKind::ct) {
            dep.sigma1_sq = *p.noise_var;
        } else if (spec.kind == TaskKind::mri) {
            dep.sigma2_sq = *p.noise_var;
        } else {
            dep.noise_var = *p.noise_var;
        }
    }
    if (p.poisson_i0 && !(*p.poisson_i0 > 0.0)) throw ParameterError("Poisson I0 must be positive");
    dep.validate();

    LinearSystem train_sys = build_system(spec);
    LinearSystem dep_sys = p.is_identity() ? train_sys : build_system(dep);
    Matrix map = spec.kind == TaskKind::mri ? mri_row_map(spec, dep) : Matrix::Identity(train_sys.m(), dep_sys.m());
    MeasurementGenerator gen(std::move(dep_sys), std::move(map), p.poisson_i0);
    return {spec, std::move(train_sys), std::move(gen)};
}

double psnr(const Vector& x, const Vector& ref) {
    if (x.size() != ref.size() || x.size() == 0) throw ContractViolation("psnr needs equal, non-empty inputs");
    const double mse = (x - ref).squaredNorm() / static_cast<double>(x.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Vector& x, const Vector& ref, int side, const SsimOptions& opt) {
    if (side < 1 || x.size() != static_cast<Index>(side) * side || ref.size() != x.size()) {
        throw ContractViolation("ssim needs two side x side images");
    }
    const int w = opt.window;
    if (w < 1 || w > side) throw ContractViolation("ssim window larger than the image");
    const double n = static_cast<double>(w) * w;
    double total = 0.0;
    int count = 0;
    for (int r0 = 0; r0 + w <= side; ++r0) {
        for (int c0 = 0; c0 + w <= side; ++c0) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            for (int r = r0; r < r0 + w; ++r) {
                for (int c = c0; c < c0 + w; ++c) {
                    const double a = x[r * side + c];
                    const double b = ref[r * side + c];
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            const double mx = sx / n;
            const double my = sy / n;
            const double vx = sxx / n - mx * mx;
            const double vy = syy / n - my * my;
            const double cxy = sxy / n - mx * my;
            total += ((2.0 * mx * my + opt.c1) * (2.0 * cxy + opt.c2)) /
                     ((mx * mx + my * my + opt.c1) * (vx + vy + opt.c2));
            ++count;
        }
    }
    return total / count;
}

DatasetSpec DatasetSpec::make_gaussian(GaussianBelief g) {
    DatasetSpec s;
    s.kind = Kind::gaussian;
    s.gaussian = std::move(g);
    return s;
}

DatasetSpec DatasetSpec::make_mixture(std::vector<MixtureComponent> components) {
    DatasetSpec s;
    s.kind = Kind::mixture;
    s.mixture = std::move(components);
    return s;
}

DatasetSpec DatasetSpec::make_image_blobs(int side) {
    DatasetSpec s;
    s.kind = Kind::image_blobs;
    s.image_side = side;
    return s;
}

Index DatasetSpec::dim() const {
    switch (kind) {
        case Kind::gaussian:
            return gaussian.dim();
        case Kind::mixture:
            return mixture.empty() ? 0 : mixture.front().dist.dim();
        case Kind::image_blobs:
            return static_cast<Index>(image_side) * image_side;
    }
    return 0;
}

void DatasetSpec::validate() const {
    switch (kind) {
        case Kind::gaussian:
            gaussian.validate();
            break;
        case Kind::mixture: {
            if (mixture.empty()) throw ParameterError("mixture needs at least one component");
            double total = 0.0;
            for (const auto& c : mixture) {
                if (!(c.weight >= 0.0)) throw ParameterError("mixture weights must be non-negative");
                if (c.dist.dim() != mixture.front().dist.dim()) throw ParameterError("mixture components differ in dimension");
                c.dist.validate();
                total += c.weight;
            }
            if (std::abs(total - 1.0) > 1e-9) throw ParameterError("mixture weights must sum to 1");
            break;
        }
        case Kind::image_blobs:
            if (image_side < 1) throw ParameterError("image_side must be positive");
            break;
    }
}

Matrix make_toy_dataset(const DatasetSpec& spec, Index n, std::uint64_t seed) {
    spec.validate();
    if (n < 0) throw ParameterError("dataset size must be non-negative");
    const Index d = spec.dim();
    Matrix out(d, n);
    Rng rng(seed);
    switch (spec.kind) {
        case DatasetSpec::Kind::gaussian: {
            const Matrix root = psd_sqrt(spec.gaussian.cov);
            for (Index j = 0; j < n; ++j) out.col(j) = spec.gaussian.mean + root * rng.normal_vector(d);
            break;
        }
        case DatasetSpec::Kind::mixture: {
            std::vector<Matrix> roots;
            for (const auto& c : spec.mixture) roots.push_back(psd_sqrt(c.dist.cov));
            for (Index j = 0; j < n; ++j) {
                const double u = rng.uniform();
                std::size_t k = 0;
                double acc = spec.mixture[0].weight;
                while (u >= acc && k + 1 < spec.mixture.size()) acc += spec.mixture[++k].weight;
                out.col(j) = spec.mixture[k].dist.mean + roots[k] * rng.normal_vector(d);
            }
            break;
        }
        case DatasetSpec::Kind::image_blobs: {
            const int side = spec.image_side;
            for (Index j = 0; j < n; ++j) {
                Vector img = Vector::Constant(d, 0.1 * rng.uniform());
                const int blobs = 1 + static_cast<int>(rng.uniform() * 3.0);
                for (int b = 0; b < blobs; ++b) {
                    const double cr = rng.uniform(0.15, 0.85) * side;
                    const double cc = rng.uniform(0.15, 0.85) * side;
                    const double width = rng.uniform(0.08, 0.25) * side;
                    const double amp = rng.uniform(0.3, 0.9);
                    for (int r = 0; r < side; ++r) {
                        for (int c = 0; c < side; ++c) {
                            const double dr = r + 0.5 - cr;
                            const double dc = c + 0.5 - cc;
                            img[r * side + c] += amp * std::exp(-(dr * dr + dc * dc) / (2.0 * width * width));
                        }
                    }
                }
                out.col(j) = img.cwiseMax(0.0).cwiseMin(1.0);
            }
            break;
        }
    }
    return out;
}

std::vector<MixtureComponent> mixture_posterior(const std::vector<MixtureComponent>& prior, const LinearSystem& sys,
                                                const Vector& y) {
    if (prior.empty()) throw ParameterError("mixture needs at least one component");
    const Matrix a = materialize_matrix(sys);
    const Matrix noise = sys.noise().covariance(sys.m());
    std::vector<double> logw;
    std::vector<MixtureComponent> post;
    for (const auto& c : prior) {
        const double lp = gaussian_log_density(y, a * c.dist.mean, a * c.dist.cov * a.transpose() + noise);
        logw.push_back(c.weight > 0.0 ? std::log(c.weight) + lp : -std::numeric_limits<double>::infinity());
        MixtureComponent pc;
        pc.dist = std::isfinite(logw.back()) ? gaussian_posterior(c.dist, sys, y) : c.dist;
        post.push_back(std::move(pc));
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    if (!std::isfinite(top)) throw DegeneratePosterior("measurement has zero likelihood under every component");
    double total = 0.0;
    for (std::size_t k = 0; k < post.size(); ++k) total += post[k].weight = std::exp(logw[k] - top);
    for (auto& pc : post) pc.weight /= total;
    return post;
}

}  // namespace sdb
