#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fc2s/coupling.hpp"
#include "fc2s/mlp.hpp"
#include "fc2s/optim.hpp"
#include "fc2s/rng.hpp"
#include "fc2s/tensor.hpp"
#include "fc2s/video.hpp"

namespace fc2s {

// (1 - t) x0 + t x1.
Tensor interpolate(const Tensor& x0, const Tensor& x1, double t);

struct LossResult {
    double loss = 0.0;
    ParamList grads;
};

// Sum over dimensions, mean over the batch of |u_t(x_t) - (x1 - x0)|^2.
LossResult cfm_loss(const VectorFieldNet& net, std::span<const Tensor> x0, std::span<const Tensor> x1,
                    std::span<const double> t);
LossResult cfm_loss(const VectorFieldNet& net, const Tensor& x0, const Tensor& x1, double t);

enum class TimestepKind { uniform, logit_normal };

struct TimestepSampler {
    TimestepKind kind = TimestepKind::uniform;
    double location = 0.0;
    double scale = 1.0;
    double shift = 1.0;

    void validate() const;
};

TimestepKind parse_timestep_kind(const std::string& s);
const char* to_string(TimestepKind k);

// shift * t / (1 + (shift - 1) t); identity for shift == 1.
double shift_timestep(double t, double shift);
double sample_t(const TimestepSampler& sampler, Rng& rng);

// Identity codec: encode/decode are pass-through and sigma0 scales inverted latents.
struct LatentCodec {
    double sigma0 = 0.3;
    // Optional per-entry scale; overrides sigma0 when non-empty.
    Tensor sigma0_per_dim;

    Tensor encode(const Tensor& x) const { return x; }
    Tensor decode(const Tensor& z) const { return z; }
    Tensor scale(const Tensor& z) const;
    void validate() const;
};

// With probability rho: mu0 + sigma0 * x_hat1, otherwise mu0.
Tensor apply_target_inversion(const Tensor& mu0, const LatentCodec& codec, const Tensor& x_hat1, double rho, Rng& rng);

// Velocity field evaluated on a flat state.
using VelocityField = std::function<Tensor(const Tensor& x, double t)>;
VelocityField as_field(const VectorFieldNet& net);

struct TrajectoryRecord {
    std::vector<Tensor> states;
    std::vector<double> times;
};

// Euler from t = 0 to t = 1 in nfe uniform steps.
Tensor sample_continuation(const VelocityField& field, const Tensor& x0, std::size_t nfe,
                           TrajectoryRecord* trajectory = nullptr);
Tensor sample_continuation(const VectorFieldNet& net, const Tensor& x0, std::size_t nfe,
                           TrajectoryRecord* trajectory = nullptr);

// Feeds each generated chunk back in as the next input.
std::vector<Tensor> rollout(const VelocityField& field, const Tensor& x0, std::size_t n_chunks, std::size_t nfe);
std::vector<Tensor> rollout(const VectorFieldNet& net, const Tensor& x0, std::size_t n_chunks, std::size_t nfe);

struct InversionOptions {
    std::size_t steps = 50;
    int order = 2;
    double r = 0.5;

    void validate() const;
};

// Integrates the field backward from t = 1 to t = 0. Order 1 is Euler; order 2
// adds a Taylor term with dv/dt estimated at an intermediate point r steps back.
Tensor invert_target(const VelocityField& field, const Tensor& x1, const InversionOptions& options = {});
Tensor invert_target(const VectorFieldNet& net, const Tensor& x1, const InversionOptions& options = {});

enum class Algorithm { alg1_oc_ti, alg2_plain, alg3_oc_only, conventional_baseline };
Algorithm parse_algorithm(const std::string& s);
const char* to_string(Algorithm a);

enum class InitKind { pretrained, from_scratch };
InitKind parse_init_kind(const std::string& s);
const char* to_string(InitKind k);

struct TrainRecipe {
    Algorithm algorithm = Algorithm::alg1_oc_ti;
    double rho = 0.7;
    CouplingStrategy coupling;
    std::uint64_t steps = 2000;
    std::size_t batch_size = 16;
    LrSchedule schedule = LrSchedule::linear;
    double lr = 2e-4;
    AdamWConfig adam;
    TimestepSampler timestep;
    LatentCodec codec;
    InversionOptions inversion;
    std::uint64_t seed = 0;
    InitKind init = InitKind::pretrained;
    std::uint64_t checkpoint_every = 0;

    // Algorithm/coupling consistency and value ranges; throws a config error.
    void validate() const;
    std::string hash() const;
};

struct LossRecord {
    std::uint64_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::string note;
};

struct TrainHooks {
    std::function<void(std::uint64_t step, const VectorFieldNet& net)> on_checkpoint;
};

struct TrainResult {
    VectorFieldNet net;
    std::vector<LossRecord> log;
    std::vector<std::string> warnings;
};

// x_hat1 for every pair's succeeding chunk under the frozen pretrained field, indexed like the dataset.
using InversionCache = std::vector<Tensor>;
InversionCache build_inversion_cache(const VectorFieldNet& pretrained, std::span<const ChunkPair> dataset,
                                     const InversionOptions& options);

// Runs one of the current-to-succeeding training loops on `net`. alg1 needs the
// inversion cache unless rho == 0.
TrainResult train(const TrainRecipe& recipe, std::span<const ChunkPair> dataset, VectorFieldNet net,
                  const InversionCache* inversion = nullptr, const TrainHooks& hooks = {});

struct PretrainOptions {
    std::uint64_t steps = 2000;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    LrSchedule schedule = LrSchedule::cosine;
    AdamWConfig adam;
    TimestepSampler timestep;
    std::uint64_t seed = 0;
    double init_scale = 1.0;
    std::uint64_t checkpoint_every = 0;
};

// Standard flow matching from N(0, I) to the succeeding chunks.
TrainResult pretrain_noise_to_data(std::span<const ChunkPair> dataset, const NetConfig& config,
                                   const PretrainOptions& options, const TrainHooks& hooks = {});

// Condition-plus-noise design: input concat(x0, x_t) with x_t on the noise-to-x1
// path; only the target half of the output is supervised.
TrainResult train_conventional_baseline(std::span<const ChunkPair> dataset, const NetConfig& config,
                                        const PretrainOptions& options, const TrainHooks& hooks = {});

// Baseline network layout for chunk dimension d.
NetConfig conventional_config(std::size_t d, std::size_t time_embed, std::vector<std::size_t> hidden);

// Euler over the target half starting from Gaussian noise, conditioned on x0.
Tensor sample_conventional(const VectorFieldNet& net, const Tensor& x0, std::size_t nfe, Rng& rng,
                           TrajectoryRecord* trajectory = nullptr);

struct CheckpointMeta {
    std::string recipe_hash;
    std::uint64_t step = 0;
};

// Text header (widths, recipe hash, step) followed by the parameter tensors.
void save_checkpoint(const std::string& path, const VectorFieldNet& net, const CheckpointMeta& meta);
VectorFieldNet load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace fc2s
