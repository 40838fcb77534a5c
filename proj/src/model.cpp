#include "sdb/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <numeric>
#include <sstream>

#include "sdb/forward.hpp"
#include "sdb/tensor_io.hpp"

namespace sdb {

namespace {

Matrix activate(Activation act, const Matrix& z) {
    switch (act) {
        case Activation::relu:
            return z.cwiseMax(0.0);
        case Activation::tanh:
            return z.array().tanh().matrix();
        case Activation::silu:
            return (z.array() / (1.0 + (-z.array()).exp())).matrix();
    }
    return z;
}

// Elementwise derivative of the activation evaluated at the pre-activation z.
Matrix activate_grad(Activation act, const Matrix& z) {
    switch (act) {
        case Activation::relu:
            return (z.array() > 0.0).cast<double>().matrix();
        case Activation::tanh: {
            const Eigen::ArrayXXd th = z.array().tanh();
            return (1.0 - th.square()).matrix();
        }
        case Activation::silu: {
            const Eigen::ArrayXXd s = 1.0 / (1.0 + (-z.array()).exp());
            return (s * (1.0 + z.array() * (1.0 - s))).matrix();
        }
    }
    return Matrix::Ones(z.rows(), z.cols());
}

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

struct Tape {
    std::vector<Matrix> inputs;  // a_{l-1} for each layer
    std::vector<Matrix> pre;     // z_l for each layer
    Matrix output;
};

Matrix network_input(const DenoiserNet& net, const Matrix& x, const Vector& t) {
    if (x.rows() != net.signal_dim()) throw ContractViolation("denoiser input has wrong length");
    if (t.size() != x.cols()) throw ContractViolation("denoiser needs one time per column");
    const Matrix emb = net.time_embedding().features(t);
    Matrix in(x.rows() + emb.rows(), x.cols());
    in.topRows(x.rows()) = x;
    in.bottomRows(emb.rows()) = emb;
    return in;
}

Tape run_forward(const DenoiserNet& net, const Matrix& x, const Vector& t) {
    Tape tape;
    Matrix a = network_input(net, x, t);
    const std::size_t L = net.weights.size();
    for (std::size_t l = 0; l < L; ++l) {
        Matrix z = (net.weights[l] * a).colwise() + net.biases[l];
        tape.inputs.push_back(std::move(a));
        a = l + 1 < L ? activate(net.activation(), z) : z;
        tape.pre.push_back(std::move(z));
    }
    tape.output = std::move(a);
    return tape;
}

void write_header_value(std::ostream& out, const std::string& key, const std::string& value) {
    if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
        throw ContractViolation("checkpoint header entries must be single-line key=value pairs");
    }
    out << key << '=' << value << '\n';
}

std::vector<Index> parse_dims(const std::string& text) {
    std::vector<Index> dims;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        long long v = 0;
        const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
        if (res.ec != std::errc{} || res.ptr != item.data() + item.size() || v <= 0) {
            throw ParameterError("checkpoint has malformed layer_dims '" + text + "'");
        }
        dims.push_back(static_cast<Index>(v));
    }
    return dims;
}

}  // namespace

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::relu:
            return "relu";
        case Activation::tanh:
            return "tanh";
        case Activation::silu:
            return "silu";
    }
    return "?";
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "silu") return Activation::silu;
    throw ParameterError("unknown activation '" + std::string(name) + "'");
}

Matrix TimeEmbedding::features(const Vector& t) const {
    Matrix out(width(), t.size());
    if (kind == Kind::append_scalar) {
        out.row(0) = t.transpose();
        return out;
    }
    for (int j = 0; j < frequencies; ++j) {
        const double w = std::ldexp(std::numbers::pi / 2.0, j);
        for (Index c = 0; c < t.size(); ++c) {
            out(2 * j, c) = std::sin(w * t[c]);
            out(2 * j + 1, c) = std::cos(w * t[c]);
        }
    }
    return out;
}

std::string TimeEmbedding::to_string() const {
    if (kind == Kind::append_scalar) return "append_scalar";
    return "sinusoidal:" + std::to_string(frequencies);
}

TimeEmbedding TimeEmbedding::parse(std::string_view text) {
    TimeEmbedding e;
    if (text == "append_scalar") {
        e.kind = Kind::append_scalar;
        return e;
    }
    constexpr std::string_view prefix = "sinusoidal";
    if (text.substr(0, prefix.size()) == prefix) {
        e.kind = Kind::sinusoidal;
        std::string_view rest = text.substr(prefix.size());
        if (rest.empty()) return e;
        if (rest.front() == ':') {
            rest.remove_prefix(1);
            int k = 0;
            const auto res = std::from_chars(rest.data(), rest.data() + rest.size(), k);
            if (res.ec == std::errc{} && res.ptr == rest.data() + rest.size() && k >= 1 && k <= 30) {
                e.frequencies = k;
                return e;
            }
        }
    }
    throw ParameterError("unknown time embedding '" + std::string(text) + "'");
}

DenoiserNet::DenoiserNet(Index d, const std::vector<Index>& hidden, Activation activation, TimeEmbedding embed,
                         std::uint64_t seed)
    : d_(d), activation_(activation), embed_(embed) {
    if (d < 1) throw ParameterError("denoiser signal dimension must be positive");
    std::vector<Index> dims{d + embed.width()};
    for (Index h : hidden) {
        if (h < 1) throw ParameterError("hidden widths must be positive");
        dims.push_back(h);
    }
    dims.push_back(d);
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const Index fan_in = dims[l];
        const Index fan_out = dims[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Matrix w(fan_out, fan_in);
        for (Index i = 0; i < fan_out; ++i)
            for (Index j = 0; j < fan_in; ++j) w(i, j) = rng.uniform(-limit, limit);
        weights.push_back(std::move(w));
        biases.push_back(Vector::Zero(fan_out));
    }
}

std::vector<Index> DenoiserNet::layer_dims() const {
    std::vector<Index> dims;
    if (weights.empty()) return dims;
    dims.push_back(weights.front().cols());
    for (const auto& w : weights) dims.push_back(w.rows());
    return dims;
}

std::size_t DenoiserNet::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

void DenoiserNet::validate() const {
    if (weights.empty() || weights.size() != biases.size()) throw ContractViolation("denoiser has no layers");
    if (weights.front().cols() != d_ + embed_.width()) throw ContractViolation("first layer width mismatch");
    if (weights.back().rows() != d_) throw ContractViolation("last layer must output the signal dimension");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (biases[l].size() != weights[l].rows()) throw ContractViolation("bias shape mismatch");
        if (l > 0 && weights[l].cols() != weights[l - 1].rows()) throw ContractViolation("layer shapes do not chain");
        if (!weights[l].allFinite() || !biases[l].allFinite()) throw NumericalFailure("non-finite network parameter");
    }
}

Matrix DenoiserNet::forward(const Matrix& x, const Vector& t) const {
    return run_forward(*this, x, t).output;
}

Matrix DenoiserNet::forward(const Matrix& x, double t) const {
    return forward(x, Vector::Constant(x.cols(), t));
}

Vector forward_denoise(const DenoiserNet& net, const Vector& x, double t) {
    return net.forward(Matrix(x), t).col(0);
}

Denoiser as_denoiser(const DenoiserNet& net) {
    net.validate();
    auto shared = std::make_shared<const DenoiserNet>(net);
    return Denoiser([shared](const Matrix& xt, double t) { return shared->forward(xt, t); });
}

Gradients Gradients::zeros_like(const DenoiserNet& net) {
    Gradients g;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        g.weights.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
        g.biases.push_back(Vector::Zero(net.biases[l].size()));
    }
    return g;
}

double Gradients::max_abs() const {
    double m = 0.0;
    for (const auto& w : weights)
        if (w.size()) m = std::max(m, w.cwiseAbs().maxCoeff());
    for (const auto& b : biases)
        if (b.size()) m = std::max(m, b.cwiseAbs().maxCoeff());
    return m;
}

LossGrad l1_loss_and_grad(const DenoiserNet& net, const Matrix& xt, const Vector& t, const Matrix& target) {
    if (target.rows() != xt.rows() || target.cols() != xt.cols()) {
        throw ContractViolation("loss target has the wrong shape");
    }
    if (xt.cols() == 0) throw ContractViolation("loss needs at least one sample");
    const Tape tape = run_forward(net, xt, t);
    const Matrix residual = tape.output - target;
    const double n = static_cast<double>(xt.cols());

    LossGrad out;
    out.loss = residual.cwiseAbs().sum() / n;
    if (!std::isfinite(out.loss)) throw NumericalFailure("loss is not finite");

    out.grad = Gradients::zeros_like(net);
    Matrix delta = residual.unaryExpr(&sign0) / n;
    for (std::size_t l = net.weights.size(); l-- > 0;) {
        out.grad.weights[l] = delta * tape.inputs[l].transpose();
        out.grad.biases[l] = delta.rowwise().sum();
        if (l == 0) break;
        delta = (net.weights[l].transpose() * delta).cwiseProduct(activate_grad(net.activation(), tape.pre[l - 1]));
    }
    return out;
}

LossGrad loss_and_grad(const DenoiserNet& net, const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Vector& x0,
                       Rng& rng) {
    const ProcessState xt = forward_sample(sys, coeffs, x0, rng);
    return l1_loss_and_grad(net, xt.x, Vector::Constant(1, coeffs.t), x0);
}

LossGrad loss_and_grad_batch(const DenoiserNet& net, const LinearSystem& sys, const ScheduleSpec& spec,
                             const Matrix& x0, Rng& rng) {
    if (x0.rows() != sys.d()) throw ContractViolation("training data has the wrong signal dimension");
    Matrix xt(sys.d(), x0.cols());
    Vector t(x0.cols());
    for (Index j = 0; j < x0.cols(); ++j) {
        t[j] = rng.uniform(spec.t_end(), spec.t_start());
        const ScheduleCoeffs c = eval(spec, t[j]);
        const Vector eps = rng.normal_vector(sys.m());
        const Vector eps_null = rng.normal_vector(sys.d());
        xt.col(j) = forward_sample_with_noise(sys, c, x0.col(j), eps, eps_null);
    }
    return l1_loss_and_grad(net, xt, t, x0);
}

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ParameterError("learning rate must be finite and non-negative");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ParameterError("adam_beta1 must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ParameterError("adam_beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ParameterError("adam_eps must be positive");
    if (batch_size < 1) throw ParameterError("batch_size must be at least 1");
    if (n_epochs < 0) throw ParameterError("n_epochs must be non-negative");
    for (int m : lr_milestones)
        if (m < 1) throw ParameterError("learning-rate milestones must be positive epochs");
}

Adam::Adam(const DenoiserNet& net, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(Gradients::zeros_like(net)), v_(Gradients::zeros_like(net)) {}

void Adam::step(DenoiserNet& net, const Gradients& grad, double lr) {
    if (grad.weights.size() != net.weights.size()) throw ContractViolation("gradient does not match the network");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseAbs2();
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    };
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        update(net.weights[l], m_.weights[l], v_.weights[l], grad.weights[l]);
        update(net.biases[l], m_.biases[l], v_.biases[l], grad.biases[l]);
    }
}

TrainResult train(DenoiserNet net, const LinearSystem& sys, const ScheduleSpec& spec, const Matrix& data,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    spec.validate();
    net.validate();
    if (data.cols() == 0) throw ParameterError("training dataset is empty");
    if (data.rows() != sys.d() || net.signal_dim() != sys.d()) {
        throw ContractViolation("training data, network and system dimensions disagree");
    }

    Rng rng(config.seed);
    Adam adam(net, config.adam_beta1, config.adam_beta2, config.adam_eps);
    TrainResult result;
    std::vector<Index> order(static_cast<std::size_t>(data.cols()));
    const Index bs = config.batch_size;

    for (int epoch = 0; epoch < config.n_epochs; ++epoch) {
        const auto halvings = std::count_if(config.lr_milestones.begin(), config.lr_milestones.end(),
                                            [&](int m) { return epoch >= m; });
        const double lr = std::ldexp(config.lr, -static_cast<int>(halvings));

        std::iota(order.begin(), order.end(), Index{0});
        std::shuffle(order.begin(), order.end(), rng.engine());

        double total = 0.0;
        int step = 0;
        for (Index start = 0; start < data.cols(); start += bs, ++step) {
            const Index count = std::min(bs, data.cols() - start);
            Matrix batch(data.rows(), count);
            for (Index j = 0; j < count; ++j) batch.col(j) = data.col(order[static_cast<std::size_t>(start + j)]);
            LossGrad lg;
            try {
                lg = loss_and_grad_batch(net, sys, spec, batch, rng);
            } catch (const NumericalFailure&) {
                std::ostringstream msg;
                msg << "training diverged at epoch " << epoch << ", step " << step;
                throw DivergenceError(msg.str());
            }
            total += lg.loss * static_cast<double>(count);
            adam.step(net, lg.grad, lr);
        }
        const double mean = total / static_cast<double>(data.cols());
        result.epoch_loss.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean);
    }
    result.net = std::move(net);
    return result;
}

void save_checkpoint(const std::string& path, const DenoiserNet& net, const Header& extra) {
    net.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open checkpoint for writing: " + path);

    Header header = extra;
    std::ostringstream dims;
    const auto ld = net.layer_dims();
    for (std::size_t i = 0; i < ld.size(); ++i) dims << (i ? "," : "") << ld[i];
    header["format"] = "sdb-checkpoint-1";
    header["layer_dims"] = dims.str();
    header["activation"] = std::string(to_string(net.activation()));
    header["time_embed"] = net.time_embedding().to_string();
    for (const auto& [k, v] : header) write_header_value(out, k, v);
    out << "---\n";
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        write_tensor(out, to_tensor(net.weights[l]));
        write_tensor(out, to_tensor(net.biases[l]));
    }
    if (!out) throw Error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    Checkpoint ck;
    std::string line;
    bool separated = false;
    while (std::getline(in, line)) {
        if (line == "---") {
            separated = true;
            break;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParameterError("malformed checkpoint header line: " + line);
        ck.header[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (!separated) throw ParameterError("checkpoint header is not terminated: " + path);
    for (const char* key : {"layer_dims", "activation", "time_embed"}) {
        if (!ck.header.count(key)) throw ParameterError(std::string("checkpoint header lacks ") + key);
    }
    const auto dims = parse_dims(ck.header["layer_dims"]);
    if (dims.size() < 2) throw ParameterError("checkpoint needs at least one layer");
    const TimeEmbedding embed = TimeEmbedding::parse(ck.header["time_embed"]);
    const Index d = dims.back();
    if (dims.front() != d + embed.width()) throw ParameterError("checkpoint input width disagrees with its embedding");

    std::vector<Index> hidden(dims.begin() + 1, dims.end() - 1);
    DenoiserNet net(d, hidden, parse_activation(ck.header["activation"]), embed, 0);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        Matrix w = to_matrix(read_tensor(in));
        Matrix b = to_matrix(read_tensor(in));
        if (w.rows() != net.weights[l].rows() || w.cols() != net.weights[l].cols() || b.rows() != net.biases[l].size() ||
            b.cols() != 1) {
            throw ParameterError("checkpoint tensor shape disagrees with layer_dims");
        }
        net.weights[l] = std::move(w);
        net.biases[l] = b.col(0);
    }
    net.validate();
    ck.net = std::move(net);
    return ck;
}

}  // namespace sdb
