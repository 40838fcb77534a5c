#include "sdb/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "sdb/format.hpp"

namespace sdb {

namespace {

namespace fs = std::filesystem;

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) out.push_back(trim(item));
    if (!s.empty() && s.back() == sep) out.push_back({});
    return out;
}

std::string fmt(double v) { return format_double(v); }

double to_double(const std::string& v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) throw ConfigError("expected a number, got '" + v + "'");
    return out;
}

long long to_int(const std::string& v) {
    long long out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) throw ConfigError("expected an integer, got '" + v + "'");
    return out;
}

std::uint64_t to_seed(const std::string& v) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        throw ConfigError("expected a non-negative integer seed, got '" + v + "'");
    }
    return out;
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("expected a boolean, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& v) {
    std::vector<double> out;
    if (trim(v).empty()) return out;
    for (const auto& item : split(v, ',')) out.push_back(to_double(item));
    return out;
}

std::string join(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
    return out;
}

template <class T>
std::string join_ints(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::string_view data_kind_name(DataConfig::Kind k) {
    switch (k) {
        case DataConfig::Kind::gaussian:
            return "gaussian";
        case DataConfig::Kind::mixture:
            return "mixture";
        case DataConfig::Kind::image_blobs:
            return "image_blobs";
    }
    return "?";
}

DataConfig::Kind parse_data_kind(const std::string& v) {
    for (auto k : {DataConfig::Kind::gaussian, DataConfig::Kind::mixture, DataConfig::Kind::image_blobs}) {
        if (v == data_kind_name(k)) return k;
    }
    throw ConfigError("unknown dataset '" + v + "'");
}

using Setter = std::function<void(const std::string&)>;
using Section = std::map<std::string, Setter>;

std::map<std::string, Section> setters(ExperimentConfig& c, const fs::path& base) {
    std::map<std::string, Section> s;
    s[""] = {
        {"run_id", [&](const std::string& v) { c.run_id = v; }},
        {"output_dir", [&](const std::string& v) { c.output_dir = v; }},
    };
    TaskSpec& t = c.task;
    DataConfig& dc = c.data;
    s["task"] = {
        {"task", [&](const std::string& v) { t.kind = parse_task_kind(v); }},
        {"image_side", [&](const std::string& v) { t.image_side = static_cast<int>(to_int(v)); }},
        {"seed", [&](const std::string& v) { t.seed = to_seed(v); }},
        {"noise_var", [&](const std::string& v) { t.noise_var = to_double(v); }},
        {"matrix",
         [&, base](const std::string& v) {
             fs::path p(v);
             if (p.is_relative()) p = base / p;
             if (!fs::exists(p)) throw ConfigError("matrix file does not exist: " + p.string());
             t.matrix_path = p.lexically_normal().string();
         }},
        {"mask_fraction", [&](const std::string& v) { t.mask_fraction = to_double(v); }},
        {"factor", [&](const std::string& v) { t.factor = static_cast<int>(to_int(v)); }},
        {"tau", [&](const std::string& v) { t.tau = to_double(v); }},
        {"sigma1_sq", [&](const std::string& v) { t.sigma1_sq = to_double(v); }},
        {"latent_dim", [&](const std::string& v) { t.latent_dim = to_double(v); }},
        {"lambda1", [&](const std::string& v) { t.lambda1 = to_double(v); }},
        {"lambda2", [&](const std::string& v) { t.lambda2 = to_double(v); }},
        {"sigma2_sq", [&](const std::string& v) { t.sigma2_sq = to_double(v); }},
        {"contrast_k", [&](const std::string& v) { t.contrast_k = to_double(v); }},
        {"contrast_a", [&](const std::string& v) { t.contrast_a = to_double(v); }},
        {"dataset", [&](const std::string& v) { dc.kind = parse_data_kind(v); }},
        {"data_mean", [&](const std::string& v) { dc.mean = to_doubles(v); }},
        {"data_std", [&](const std::string& v) { dc.std = to_double(v); }},
        {"mixture_centers",
         [&](const std::string& v) {
             dc.centers.clear();
             for (const auto& item : split(v, ';'))
                 if (!item.empty()) dc.centers.push_back(to_doubles(item));
         }},
        {"mixture_weights", [&](const std::string& v) { dc.weights = to_doubles(v); }},
    };
    ScheduleSpec& sc = c.schedule;
    s["schedule"] = {
        {"variant", [&](const std::string& v) { sc.variant = parse_variant(v); }},
        {"b0", [&](const std::string& v) { sc.b0 = to_double(v); }},
        {"b1", [&](const std::string& v) { sc.b1 = to_double(v); }},
        {"sigma_max", [&](const std::string& v) { sc.sigma_max = to_double(v); }},
        {"eps1", [&](const std::string& v) { sc.eps1 = to_double(v); }},
        {"eps2", [&](const std::string& v) { sc.eps2 = to_double(v); }},
    };
    TrainSection& tr = c.train;
    s["train"] = {
        {"lr", [&](const std::string& v) { tr.config.lr = to_double(v); }},
        {"adam_beta1", [&](const std::string& v) { tr.config.adam_beta1 = to_double(v); }},
        {"adam_beta2", [&](const std::string& v) { tr.config.adam_beta2 = to_double(v); }},
        {"adam_eps", [&](const std::string& v) { tr.config.adam_eps = to_double(v); }},
        {"batch_size", [&](const std::string& v) { tr.config.batch_size = static_cast<int>(to_int(v)); }},
        {"n_epochs", [&](const std::string& v) { tr.config.n_epochs = static_cast<int>(to_int(v)); }},
        {"seed", [&](const std::string& v) { tr.config.seed = to_seed(v); }},
        {"lr_milestones",
         [&](const std::string& v) {
             tr.config.lr_milestones.clear();
             if (!v.empty())
                 for (const auto& item : split(v, ',')) tr.config.lr_milestones.push_back(static_cast<int>(to_int(item)));
         }},
        {"hidden",
         [&](const std::string& v) {
             tr.hidden.clear();
             if (!v.empty())
                 for (const auto& item : split(v, ',')) tr.hidden.push_back(static_cast<Index>(to_int(item)));
         }},
        {"activation", [&](const std::string& v) { tr.activation = parse_activation(v); }},
        {"time_embed", [&](const std::string& v) { tr.embed = TimeEmbedding::parse(v); }},
        {"n_train", [&](const std::string& v) { tr.n_train = static_cast<Index>(to_int(v)); }},
        {"data_seed", [&](const std::string& v) { tr.data_seed = to_seed(v); }},
    };
    SampleSection& sa = c.sample;
    s["sample"] = {
        {"n_steps", [&](const std::string& v) { sa.n_steps = static_cast<int>(to_int(v)); }},
        {"grid", [&](const std::string& v) { sa.grid = parse_time_grid(v); }},
        {"range_lock",
         [&](const std::string& v) {
             if (v == "auto") {
                 sa.range_lock.reset();
             } else {
                 sa.range_lock = to_bool(v);
             }
         }},
        {"seed", [&](const std::string& v) { sa.seed = to_seed(v); }},
        {"n_samples", [&](const std::string& v) { sa.n_samples = static_cast<Index>(to_int(v)); }},
        {"checkpoint_every", [&](const std::string& v) { sa.checkpoint_every = static_cast<int>(to_int(v)); }},
        {"threads", [&](const std::string& v) { sa.threads = static_cast<int>(to_int(v)); }},
    };
    EvalSection& ev = c.eval;
    s["eval"] = {
        {"sweep",
         [&](const std::string& v) {
             ev.sweep.clear();
             for (const auto& item : split(v, ';'))
                 if (!item.empty()) ev.sweep.push_back(parse_perturbation(item));
         }},
        {"n_test", [&](const std::string& v) { ev.n_test = static_cast<Index>(to_int(v)); }},
        {"test_seed", [&](const std::string& v) { ev.test_seed = to_seed(v); }},
    };
    return s;
}

void validate(const ExperimentConfig& c) {
    if (c.run_id.empty()) throw ConfigError("run_id must not be empty");
    if (c.run_id.find_first_of(",\"\n") != std::string::npos) throw ConfigError("run_id must not contain , \" or newlines");
    if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
    c.task.validate();
    c.schedule.validate();
    c.train.config.validate();
    if (c.train.n_train < 1) throw ConfigError("n_train must be at least 1");
    for (Index h : c.train.hidden)
        if (h < 1) throw ConfigError("hidden widths must be positive");
    if (c.sample.n_samples < 0) throw ConfigError("n_samples must be non-negative");
    if (c.eval.n_test < 0) throw ConfigError("n_test must be non-negative");
    c.sampler().validate();
    const DataConfig& d = c.data;
    if (d.kind == DataConfig::Kind::mixture) {
        if (d.centers.empty()) throw ConfigError("mixture dataset needs mixture_centers");
        if (!d.weights.empty() && d.weights.size() != d.centers.size()) {
            throw ConfigError("mixture_weights and mixture_centers differ in length");
        }
    }
    if (!(d.std >= 0.0)) throw ConfigError("data_std must be non-negative");
}

}  // namespace

DatasetSpec ExperimentConfig::dataset(Index d) const {
    switch (data.kind) {
        case DataConfig::Kind::gaussian: {
            Vector mean = Vector::Zero(d);
            if (data.mean.size() == 1) {
                mean.setConstant(data.mean.front());
            } else if (!data.mean.empty()) {
                if (static_cast<Index>(data.mean.size()) != d) throw ConfigError("data_mean length does not match d");
                mean = Eigen::Map<const Vector>(data.mean.data(), d);
            }
            return DatasetSpec::make_gaussian({mean, data.std * data.std * Matrix::Identity(d, d)});
        }
        case DataConfig::Kind::mixture: {
            std::vector<MixtureComponent> comps;
            for (std::size_t k = 0; k < data.centers.size(); ++k) {
                const auto& c = data.centers[k];
                if (static_cast<Index>(c.size()) != d) throw ConfigError("mixture center length does not match d");
                const double w = data.weights.empty() ? 1.0 / static_cast<double>(data.centers.size()) : data.weights[k];
                comps.push_back({w, {Eigen::Map<const Vector>(c.data(), d), data.std * data.std * Matrix::Identity(d, d)}});
            }
            return DatasetSpec::make_mixture(std::move(comps));
        }
        case DataConfig::Kind::image_blobs: {
            if (static_cast<Index>(task.image_side) * task.image_side != d) {
                throw ConfigError("image_blobs dataset needs d = image_side^2");
            }
            return DatasetSpec::make_image_blobs(task.image_side);
        }
    }
    throw ConfigError("unknown dataset");
}

SamplerConfig ExperimentConfig::sampler() const {
    SamplerConfig s;
    s.n_steps = sample.n_steps;
    s.spec = schedule;
    s.noiseless_range_lock = sample.range_lock;
    s.seed = sample.seed;
    s.grid = sample.grid;
    s.checkpoint_every = sample.checkpoint_every;
    s.threads = sample.threads;
    return s;
}

std::string serialize_perturbation(const Perturbation& p) {
    std::vector<std::string> parts;
    if (p.lambda1) parts.push_back("lambda1=" + fmt(*p.lambda1));
    if (p.tau) parts.push_back("tau=" + fmt(*p.tau));
    if (p.noise_var) parts.push_back("noise_var=" + fmt(*p.noise_var));
    if (p.poisson_i0) parts.push_back("poisson_i0=" + fmt(*p.poisson_i0));
    if (parts.empty()) return "none";
    std::string out = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) out += "," + parts[i];
    return out;
}

Perturbation parse_perturbation(const std::string& text) {
    Perturbation p;
    const std::string t = trim(text);
    if (t == "none") return p;
    for (const auto& item : split(t, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("perturbation entries look like key=value, got '" + item + "'");
        const std::string key = trim(item.substr(0, eq));
        const double v = to_double(trim(item.substr(eq + 1)));
        if (key == "lambda1") {
            p.lambda1 = v;
        } else if (key == "tau") {
            p.tau = v;
        } else if (key == "noise_var") {
            p.noise_var = v;
        } else if (key == "poisson_i0") {
            p.poisson_i0 = v;
        } else {
            throw ConfigError("unknown perturbation key '" + key + "'");
        }
    }
    return p;
}

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
    ExperimentConfig cfg;
    auto table = setters(cfg, fs::path(base_dir));
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!table.count(section) || section.empty()) throw ConfigError(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto& keys = table[section];
        const auto it = keys.find(key);
        if (it == keys.end()) {
            throw ConfigError(where + "unknown key '" + key + "'" + (section.empty() ? "" : " in [" + section + "]"));
        }
        try {
            it->second(value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + key + ": " + e.what());
        } catch (const Error& e) {
            throw ConfigError(where + key + ": " + e.what());
        }
    }
    try {
        validate(cfg);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const fs::path base = fs::path(path).parent_path();
    return parse_config(buf.str(), base.empty() ? "." : base.string());
}

std::string serialize_config(const ExperimentConfig& c) {
    std::ostringstream o;
    o << "run_id = " << c.run_id << "\n";
    o << "output_dir = " << c.output_dir << "\n";

    const TaskSpec& t = c.task;
    o << "\n[task]\n";
    o << "task = " << to_string(t.kind) << "\n";
    o << "image_side = " << t.image_side << "\n";
    o << "seed = " << t.seed << "\n";
    o << "noise_var = " << fmt(t.noise_var) << "\n";
    if (!t.matrix_path.empty()) o << "matrix = " << t.matrix_path << "\n";
    o << "mask_fraction = " << fmt(t.mask_fraction) << "\n";
    o << "factor = " << t.factor << "\n";
    o << "tau = " << fmt(t.tau) << "\n";
    o << "sigma1_sq = " << fmt(t.sigma1_sq) << "\n";
    o << "latent_dim = " << fmt(t.latent_dim) << "\n";
    o << "lambda1 = " << fmt(t.lambda1) << "\n";
    o << "lambda2 = " << fmt(t.lambda2) << "\n";
    o << "sigma2_sq = " << fmt(t.sigma2_sq) << "\n";
    o << "contrast_k = " << fmt(t.contrast_k) << "\n";
    o << "contrast_a = " << fmt(t.contrast_a) << "\n";
    o << "dataset = " << data_kind_name(c.data.kind) << "\n";
    o << "data_mean = " << join(c.data.mean) << "\n";
    o << "data_std = " << fmt(c.data.std) << "\n";
    std::string centers;
    for (std::size_t k = 0; k < c.data.centers.size(); ++k) centers += (k ? "; " : "") + join(c.data.centers[k]);
    o << "mixture_centers = " << centers << "\n";
    o << "mixture_weights = " << join(c.data.weights) << "\n";

    const ScheduleSpec& s = c.schedule;
    o << "\n[schedule]\n";
    o << "variant = " << to_string(s.variant) << "\n";
    o << "b0 = " << fmt(s.b0) << "\n";
    o << "b1 = " << fmt(s.b1) << "\n";
    o << "sigma_max = " << fmt(s.sigma_max) << "\n";
    o << "eps1 = " << fmt(s.eps1) << "\n";
    o << "eps2 = " << fmt(s.eps2) << "\n";

    const TrainSection& tr = c.train;
    o << "\n[train]\n";
    o << "lr = " << fmt(tr.config.lr) << "\n";
    o << "adam_beta1 = " << fmt(tr.config.adam_beta1) << "\n";
    o << "adam_beta2 = " << fmt(tr.config.adam_beta2) << "\n";
    o << "adam_eps = " << fmt(tr.config.adam_eps) << "\n";
    o << "batch_size = " << tr.config.batch_size << "\n";
    o << "n_epochs = " << tr.config.n_epochs << "\n";
    o << "seed = " << tr.config.seed << "\n";
    o << "lr_milestones = " << join_ints(tr.config.lr_milestones) << "\n";
    o << "hidden = " << join_ints(tr.hidden) << "\n";
    o << "activation = " << to_string(tr.activation) << "\n";
    o << "time_embed = " << tr.embed.to_string() << "\n";
    o << "n_train = " << tr.n_train << "\n";
    o << "data_seed = " << tr.data_seed << "\n";

    const SampleSection& sa = c.sample;
    o << "\n[sample]\n";
    o << "n_steps = " << sa.n_steps << "\n";
    o << "grid = " << to_string(sa.grid) << "\n";
    o << "range_lock = " << (sa.range_lock ? (*sa.range_lock ? "true" : "false") : "auto") << "\n";
    o << "seed = " << sa.seed << "\n";
    o << "n_samples = " << sa.n_samples << "\n";
    o << "checkpoint_every = " << sa.checkpoint_every << "\n";
    o << "threads = " << sa.threads << "\n";

    o << "\n[eval]\n";
    std::string sweep;
    for (std::size_t i = 0; i < c.eval.sweep.size(); ++i) sweep += (i ? "; " : "") + serialize_perturbation(c.eval.sweep[i]);
    o << "sweep = " << sweep << "\n";
    o << "n_test = " << c.eval.n_test << "\n";
    o << "test_seed = " << c.eval.test_seed << "\n";
    return o.str();
}

std::string system_hash(const ExperimentConfig& cfg) {
    const std::string text = canonical_string(cfg.schedule) + "|" + canonical_string(cfg.task);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace sdb
