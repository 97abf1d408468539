#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fc2s/rng.hpp"
#include "fc2s/tensor.hpp"

namespace fc2s {

// Sinusoidal embedding: entry 2k = sin(t * w_k), 2k+1 = cos(t * w_k), w_k = 10000^(-2k/width).
Tensor time_embed(double t, std::size_t width);

// Layout of a time-conditioned MLP. The input is concat(cond, state, time_embed(t));
// the output has one velocity entry per cond and state entry.
struct NetConfig {
    std::size_t state_dim = 0;
    std::size_t cond_dim = 0;
    std::size_t time_embed = 16;
    std::vector<std::size_t> hidden;

    std::size_t data_width() const noexcept { return cond_dim + state_dim; }
    std::size_t input_width() const noexcept { return data_width() + time_embed; }
    std::size_t output_width() const noexcept { return data_width(); }
    std::vector<std::size_t> widths() const;
    void validate() const;

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

using ParamList = std::vector<Tensor>;

// Gradient-shaped zeros for a parameter list.
ParamList zeros_like(const ParamList& params);
void add_scaled(ParamList& acc, const ParamList& other, double scale);

// Affine layers with tanh between them and identity on the output.
// Weights are [out, in] row-major; parameters are ordered W0, b0, W1, b1, ...
class VectorFieldNet {
public:
    VectorFieldNet() = default;
    // All-zero weights and biases.
    explicit VectorFieldNet(NetConfig config);
    VectorFieldNet(NetConfig config, ParamList params);

    // Normal(0, scale^2 / fan_in) weights, zero biases.
    static VectorFieldNet random(NetConfig config, Rng& rng, double scale = 1.0);

    const NetConfig& config() const noexcept { return config_; }
    std::size_t num_layers() const noexcept { return params_.size() / 2; }
    std::size_t parameter_count() const noexcept;

    ParamList& params() noexcept { return params_; }
    const ParamList& params() const noexcept { return params_; }
    Tensor& weight(std::size_t layer) { return params_[2 * layer]; }
    Tensor& bias(std::size_t layer) { return params_[2 * layer + 1]; }
    const Tensor& weight(std::size_t layer) const { return params_[2 * layer]; }
    const Tensor& bias(std::size_t layer) const { return params_[2 * layer + 1]; }
    std::string param_name(std::size_t index) const;

    // x has data_width() entries.
    Tensor forward(std::span<const double> x, double t) const;
    Tensor forward(const Tensor& x, double t) const { return forward(x.data(), t); }

    // Gradient of <grad_out, forward(x, t)> with respect to every parameter.
    ParamList backward(std::span<const double> x, double t, std::span<const double> grad_out) const;
    // Same, added into `grads` (which must be shaped like params()).
    void accumulate_backward(std::span<const double> x, double t, std::span<const double> grad_out,
                             ParamList& grads) const;

    // Forward pass that also fills `grads` with the backward of <grad_fn(output), output>.
    // Returns the output; grad_fn maps the output to grad_out in place.
    template <class GradFn>
    Tensor forward_backward(std::span<const double> x, double t, GradFn&& grad_fn, ParamList& grads) const {
        std::vector<std::vector<double>> acts;
        Tensor out = run(x, t, &acts);
        std::vector<double> g(out.raw());
        grad_fn(std::span<const double>(out.data()), std::span<double>(g));
        backprop(acts, g, grads);
        return out;
    }

private:
    Tensor run(std::span<const double> x, double t, std::vector<std::vector<double>>* acts) const;
    void backprop(const std::vector<std::vector<double>>& acts, std::vector<double> delta, ParamList& grads) const;

    NetConfig config_;
    ParamList params_;
};

}  // namespace fc2s
