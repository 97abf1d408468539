#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fc2s/mlp.hpp"

namespace fc2s {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct OptimizerState {
    AdamWConfig config;
    ParamList first_moment;
    ParamList second_moment;
    std::uint64_t step = 0;

    OptimizerState() = default;
    OptimizerState(const ParamList& params, AdamWConfig cfg);
};

// Decoupled weight decay then bias-corrected Adam update. `names` labels parameters
// in the NaN diagnostic and may be empty.
void adamw_step(OptimizerState& state, ParamList& params, const ParamList& grads, double lr,
                const std::vector<std::string>& names = {});

enum class LrSchedule { constant, linear, cosine };

LrSchedule parse_lr_schedule(const std::string& s);
const char* to_string(LrSchedule s);

double lr_schedule(LrSchedule kind, std::uint64_t step, std::uint64_t total_steps, double base_lr);

}  // namespace fc2s
