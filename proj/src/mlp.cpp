#include "fc2s/mlp.hpp"

#include <cmath>

#include "fc2s/error.hpp"

namespace fc2s {

Tensor time_embed(double t, std::size_t width) {
    if (width < 2 || width % 2 != 0)
        fail(ErrorKind::config, "time embedding width must be even and >= 2, got " + std::to_string(width));
    std::vector<double> e(width);
    for (std::size_t k = 0; k < width / 2; ++k) {
        const double omega = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(width));
        e[2 * k] = std::sin(t * omega);
        e[2 * k + 1] = std::cos(t * omega);
    }
    return Tensor::vector(std::move(e));
}

std::vector<std::size_t> NetConfig::widths() const {
    std::vector<std::size_t> w{input_width()};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(output_width());
    return w;
}

void NetConfig::validate() const {
    if (state_dim == 0) fail(ErrorKind::config, "network state dimension must be positive");
    if (time_embed < 2 || time_embed % 2 != 0)
        fail(ErrorKind::config, "time embedding width must be even and >= 2, got " + std::to_string(time_embed));
    for (std::size_t h : hidden)
        if (h == 0) fail(ErrorKind::config, "hidden widths must be positive");
}

ParamList zeros_like(const ParamList& params) {
    ParamList out;
    out.reserve(params.size());
    for (const auto& p : params) out.emplace_back(p.shape(), 0.0);
    return out;
}

void add_scaled(ParamList& acc, const ParamList& other, double scale) {
    if (acc.size() != other.size()) fail(ErrorKind::shape, "parameter list length mismatch");
    for (std::size_t i = 0; i < acc.size(); ++i) {
        require_same_shape(acc[i], other[i], "add_scaled");
        auto a = acc[i].data();
        auto b = other[i].data();
        for (std::size_t j = 0; j < a.size(); ++j) a[j] += scale * b[j];
    }
}

VectorFieldNet::VectorFieldNet(NetConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto w = config_.widths();
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
        params_.emplace_back(std::vector<std::size_t>{w[l + 1], w[l]}, 0.0);
        params_.emplace_back(std::vector<std::size_t>{w[l + 1]}, 0.0);
    }
}

VectorFieldNet::VectorFieldNet(NetConfig config, ParamList params) : VectorFieldNet(std::move(config)) {
    if (params.size() != params_.size())
        fail(ErrorKind::shape, "expected " + std::to_string(params_.size()) + " parameter tensors, got " +
                                   std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].shape() != params_[i].shape())
            fail(ErrorKind::shape, param_name(i) + ": expected shape " + shape_string(params_[i].shape()) + ", got " +
                                       shape_string(params[i].shape()));
    }
    params_ = std::move(params);
}

VectorFieldNet VectorFieldNet::random(NetConfig config, Rng& rng, double scale) {
    VectorFieldNet net(std::move(config));
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        auto& W = net.weight(l);
        const double stddev = scale / std::sqrt(static_cast<double>(W.dim(1)));
        for (double& v : W.raw()) v = stddev * rng.normal();
    }
    return net;
}

std::size_t VectorFieldNet::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

std::string VectorFieldNet::param_name(std::size_t index) const {
    return "layer" + std::to_string(index / 2) + (index % 2 == 0 ? ".weight" : ".bias");
}

Tensor VectorFieldNet::run(std::span<const double> x, double t, std::vector<std::vector<double>>* acts) const {
    if (x.size() != config_.data_width())
        fail(ErrorKind::shape, "network expects " + std::to_string(config_.data_width()) + " inputs, got " +
                                   std::to_string(x.size()));
    std::vector<double> a(x.begin(), x.end());
    const Tensor emb = time_embed(t, config_.time_embed);
    a.insert(a.end(), emb.raw().begin(), emb.raw().end());

    const std::size_t layers = num_layers();
    for (std::size_t l = 0; l < layers; ++l) {
        const Tensor& W = weight(l);
        const Tensor& b = bias(l);
        const std::size_t rows = W.dim(0), cols = W.dim(1);
        std::vector<double> z(rows);
        const double* w = W.raw().data();
        for (std::size_t i = 0; i < rows; ++i) {
            const double* row = w + i * cols;
            double s = b[i];
            for (std::size_t j = 0; j < cols; ++j) s += row[j] * a[j];
            z[i] = s;
        }
        if (l + 1 < layers)
            for (double& v : z) v = std::tanh(v);
        if (acts) acts->push_back(std::move(a));
        a = std::move(z);
    }
    Tensor out({a.size()}, 0.0);
    out.raw() = std::move(a);
    return out;
}

void VectorFieldNet::backprop(const std::vector<std::vector<double>>& acts, std::vector<double> delta,
                              ParamList& grads) const {
    if (grads.size() != params_.size()) fail(ErrorKind::shape, "gradient list does not match parameters");
    for (std::size_t l = num_layers(); l-- > 0;) {
        const Tensor& W = weight(l);
        const std::size_t rows = W.dim(0), cols = W.dim(1);
        const std::vector<double>& a = acts[l];
        double* gw = grads[2 * l].raw().data();
        double* gb = grads[2 * l + 1].raw().data();
        for (std::size_t i = 0; i < rows; ++i) {
            const double di = delta[i];
            gb[i] += di;
            if (di == 0.0) continue;
            double* grow = gw + i * cols;
            for (std::size_t j = 0; j < cols; ++j) grow[j] += di * a[j];
        }
        if (l == 0) break;
        std::vector<double> prev(cols, 0.0);
        const double* w = W.raw().data();
        for (std::size_t i = 0; i < rows; ++i) {
            const double di = delta[i];
            if (di == 0.0) continue;
            const double* row = w + i * cols;
            for (std::size_t j = 0; j < cols; ++j) prev[j] += row[j] * di;
        }
        // a is tanh(z) for hidden layers: d tanh = 1 - tanh^2.
        for (std::size_t j = 0; j < cols; ++j) prev[j] *= 1.0 - a[j] * a[j];
        delta = std::move(prev);
    }
}

Tensor VectorFieldNet::forward(std::span<const double> x, double t) const { return run(x, t, nullptr); }

ParamList VectorFieldNet::backward(std::span<const double> x, double t, std::span<const double> grad_out) const {
    ParamList grads = zeros_like(params_);
    accumulate_backward(x, t, grad_out, grads);
    return grads;
}

void VectorFieldNet::accumulate_backward(std::span<const double> x, double t, std::span<const double> grad_out,
                                         ParamList& grads) const {
    if (grad_out.size() != config_.output_width())
        fail(ErrorKind::shape, "grad_out has " + std::to_string(grad_out.size()) + " entries, expected " +
                                   std::to_string(config_.output_width()));
    std::vector<std::vector<double>> acts;
    run(x, t, &acts);
    backprop(acts, std::vector<double>(grad_out.begin(), grad_out.end()), grads);
}

}  // namespace fc2s
