#include "fc2s/optim.hpp"

#include <cmath>
#include <numbers>

#include "fc2s/error.hpp"

namespace fc2s {

OptimizerState::OptimizerState(const ParamList& params, AdamWConfig cfg)
    : config(cfg), first_moment(zeros_like(params)), second_moment(zeros_like(params)) {}

void adamw_step(OptimizerState& state, ParamList& params, const ParamList& grads, double lr,
                const std::vector<std::string>& names) {
    if (!(lr >= 0.0)) fail(ErrorKind::config, "learning rate must be non-negative");
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        fail(ErrorKind::shape, "adamw: parameter, gradient and moment lists differ in length");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_shape(params[i], grads[i], "adamw");
        require_same_shape(params[i], state.first_moment[i], "adamw");
        if (!grads[i].all_finite()) {
            const std::string name = i < names.size() ? names[i] : "parameter " + std::to_string(i);
            fail(ErrorKind::numeric, "adamw: non-finite gradient for " + name + " at step " +
                                         std::to_string(state.step + 1));
        }
    }

    const auto& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    const double decay = 1.0 - lr * c.weight_decay;

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i].data();
        auto g = grads[i].data();
        auto m = state.first_moment[i].data();
        auto v = state.second_moment[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            p[j] *= decay;
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

LrSchedule parse_lr_schedule(const std::string& s) {
    if (s == "constant") return LrSchedule::constant;
    if (s == "linear") return LrSchedule::linear;
    if (s == "cosine") return LrSchedule::cosine;
    fail(ErrorKind::config, "unknown lr schedule '" + s + "' (expected constant, linear or cosine)");
}

const char* to_string(LrSchedule s) {
    switch (s) {
    case LrSchedule::constant: return "constant";
    case LrSchedule::linear: return "linear";
    case LrSchedule::cosine: return "cosine";
    }
    return "?";
}

double lr_schedule(LrSchedule kind, std::uint64_t step, std::uint64_t total_steps, double base_lr) {
    if (total_steps == 0) fail(ErrorKind::config, "lr schedule needs total_steps > 0");
    if (step > total_steps)
        fail(ErrorKind::config, "lr schedule step " + std::to_string(step) + " exceeds total " +
                                    std::to_string(total_steps));
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    switch (kind) {
    case LrSchedule::constant: return base_lr;
    case LrSchedule::linear: return base_lr * (1.0 - frac);
    case LrSchedule::cosine: return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
    }
    return base_lr;
}

}  // namespace fc2s
