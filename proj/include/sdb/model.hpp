#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sdb/denoiser.hpp"
#include "sdb/linop.hpp"
#include "sdb/rng.hpp"
#include "sdb/schedule.hpp"

namespace sdb {

enum class Activation { relu, tanh, silu };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

/// Time conditioning appended to the network input.
struct TimeEmbedding {
    enum class Kind { append_scalar, sinusoidal };
    Kind kind = Kind::sinusoidal;
    int frequencies = 8;

    Index width() const { return kind == Kind::append_scalar ? 1 : 2 * frequencies; }
    /// Features for each entry of `t`, one column per entry.
    Matrix features(const Vector& t) const;

    std::string to_string() const;
    static TimeEmbedding parse(std::string_view text);
};

/// Multilayer perceptron D(x, t) -> R^d predicting the clean signal.
/// Layer l computes z_l = W_l a_{l-1} + b_l, with the activation applied to
/// every layer except the last; a_{-1} = [x; embed(t)].
class DenoiserNet {
public:
    DenoiserNet() = default;
    /// Glorot-uniform weights, zero biases.
    DenoiserNet(Index d, const std::vector<Index>& hidden, Activation activation, TimeEmbedding embed,
                std::uint64_t seed);

    Index signal_dim() const { return d_; }
    Activation activation() const { return activation_; }
    const TimeEmbedding& time_embedding() const { return embed_; }
    /// Widths from input (d + embedding) to output (d).
    std::vector<Index> layer_dims() const;
    std::size_t layer_count() const { return weights.size(); }
    std::size_t parameter_count() const;

    /// One output column per input column; `t` holds each column's time.
    Matrix forward(const Matrix& x, const Vector& t) const;
    Matrix forward(const Matrix& x, double t) const;

    void validate() const;

    std::vector<Matrix> weights;
    std::vector<Vector> biases;

private:
    Index d_ = 0;
    Activation activation_ = Activation::silu;
    TimeEmbedding embed_;
};

Vector forward_denoise(const DenoiserNet& net, const Vector& x, double t);

/// Wraps a copy of `net` as a sampler denoiser.
Denoiser as_denoiser(const DenoiserNet& net);

/// Parameter-shaped gradient arrays.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    static Gradients zeros_like(const DenoiserNet& net);
    double max_abs() const;
};

struct LossGrad {
    double loss = 0.0;
    Gradients grad;
};

/// Mean over columns of |D(xt_j, t_j) - target_j|_1 and its reverse-mode
/// gradient. The subgradient at exact zeros of the residual is 0.
LossGrad l1_loss_and_grad(const DenoiserNet& net, const Matrix& xt, const Vector& t, const Matrix& target);

/// Draws x_t ~ p(x_t | x0) at the given schedule point and returns the l1
/// reconstruction loss with its gradient.
LossGrad loss_and_grad(const DenoiserNet& net, const LinearSystem& sys, const ScheduleCoeffs& coeffs, const Vector& x0,
                       Rng& rng);

/// Batch version: each column gets t ~ U[eps2, 1 - eps1], then eps, then eps'.
LossGrad loss_and_grad_batch(const DenoiserNet& net, const LinearSystem& sys, const ScheduleSpec& spec,
                             const Matrix& x0, Rng& rng);

struct TrainConfig {
    double lr = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.99;
    double adam_eps = 1e-8;
    int batch_size = 8;
    int n_epochs = 10;
    std::uint64_t seed = 0;
    /// The learning rate is halved once `milestone` epochs have completed.
    std::vector<int> lr_milestones;

    void validate() const;
};

class Adam {
public:
    Adam(const DenoiserNet& net, double beta1, double beta2, double eps);
    void step(DenoiserNet& net, const Gradients& grad, double lr);
    long long steps() const { return t_; }

private:
    double beta1_;
    double beta2_;
    double eps_;
    long long t_ = 0;
    Gradients m_;
    Gradients v_;
};

struct TrainResult {
    DenoiserNet net;
    std::vector<double> epoch_loss;
};

/// Reports (epoch index, mean loss) after each epoch.
using EpochCallback = std::function<void(int, double)>;

/// Denoiser training with Adam and step-wise learning-rate halving. `data` holds
/// one clean signal per column.
TrainResult train(DenoiserNet net, const LinearSystem& sys, const ScheduleSpec& spec, const Matrix& data,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// Checkpoints: "key=value" header lines, a "---" separator, then one SDBT
// tensor per parameter array in order W0, b0, W1, b1, ...
using Header = std::map<std::string, std::string>;

void save_checkpoint(const std::string& path, const DenoiserNet& net, const Header& extra = {});

struct Checkpoint {
    DenoiserNet net;
    Header header;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace sdb
