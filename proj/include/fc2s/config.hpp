#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fc2s/coupling.hpp"
#include "fc2s/flow.hpp"
#include "fc2s/video.hpp"

namespace fc2s {

struct RunSection {
    std::uint64_t seed = 0;
    std::string out = "runs";
    friend bool operator==(const RunSection&, const RunSection&) = default;
};

struct DataSection {
    std::string dir = "data";  // dataset directory written by gen-data, read by every other command
    std::size_t videos_per_class = 2;
    std::size_t eval_videos_per_class = 1;
    std::vector<MotionClass> motions{kAllMotionClasses[0], kAllMotionClasses[1], kAllMotionClasses[2]};
    std::vector<CameraClass> cameras{kAllCameraClasses[0], kAllCameraClasses[1], kAllCameraClasses[2],
                                     kAllCameraClasses[3]};
    std::size_t frames = 24;
    std::size_t height = 8;
    std::size_t width = 8;
    std::size_t chunk_len = 4;
    double blob_sigma = 1.2;
    double background = 0.0;
    std::size_t hist_bins = 4;
    double cut_threshold = 0.4;
    friend bool operator==(const DataSection&, const DataSection&) = default;
};

struct ModelSection {
    std::size_t time_embed = 16;
    std::vector<std::size_t> hidden{64};
    double init_scale = 1.0;
    friend bool operator==(const ModelSection&, const ModelSection&) = default;
};

struct PretrainSection {
    std::uint64_t steps = 2000;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    LrSchedule schedule = LrSchedule::cosine;
    friend bool operator==(const PretrainSection&, const PretrainSection&) = default;
};

struct TrainSection {
    Algorithm algorithm = Algorithm::alg1_oc_ti;
    double rho = 0.7;
    CouplingKind coupling = CouplingKind::inherent;
    std::uint64_t steps = 2000;
    std::size_t batch_size = 16;
    double lr = 2e-4;
    LrSchedule schedule = LrSchedule::linear;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double weight_decay = 0.0;
    TimestepKind timestep = TimestepKind::uniform;
    double logit_location = 0.0;
    double logit_scale = 1.0;
    double shift = 1.0;
    double sigma0 = 0.3;
    std::size_t inversion_steps = 50;
    int inversion_order = 2;
    double inversion_r = 0.5;
    InitKind init = InitKind::pretrained;
    std::string pretrained;       // checkpoint of the noise-to-data model
    std::string inversion_cache;  // directory written by the invert command
    std::uint64_t checkpoint_every = 0;
    friend bool operator==(const TrainSection&, const TrainSection&) = default;
};

enum class Split { train, eval };
Split parse_split(const std::string& s);
const char* to_string(Split s);

struct SampleSection {
    std::string checkpoint;
    Split split = Split::eval;
    std::size_t pair = 0;
    std::size_t nfe = 5;
    std::size_t n_chunks = 1;
    friend bool operator==(const SampleSection&, const SampleSection&) = default;
};

struct EvalSection {
    std::string checkpoint;
    std::string baseline;  // optional conventional-baseline checkpoint
    std::vector<std::size_t> nfe_list{1, 2, 5, 10, 40};
    std::size_t nfe = 5;  // used for rollouts and the per-category table
    std::size_t rollout_chunks = 4;
    friend bool operator==(const EvalSection&, const EvalSection&) = default;
};

struct OtplanSection {
    Split split = Split::train;
    std::size_t videos = 10;
    MaskKind mask = MaskKind::no_self;
    bool fallback = true;
    double penalty_factor = 1e6;
    std::size_t max_size = 512;
    friend bool operator==(const OtplanSection&, const OtplanSection&) = default;
};

struct MemfitSection {
    // Chunk shapes LxHxW; V is their product.
    std::vector<std::string> shapes{"4x8x8", "4x16x16", "8x16x16", "8x32x32", "16x32x32"};
    friend bool operator==(const MemfitSection&, const MemfitSection&) = default;
};

struct VerifySection {
    std::string run;
    friend bool operator==(const VerifySection&, const VerifySection&) = default;
};

struct Config {
    RunSection run;
    DataSection data;
    ModelSection model;
    PretrainSection pretrain;
    TrainSection train;
    SampleSection sample;
    EvalSection eval;
    OtplanSection otplan;
    MemfitSection memfit;
    VerifySection verify;
    friend bool operator==(const Config&, const Config&) = default;
};

// key = value lines under [section] headers; '#' starts a comment. Unknown
// sections, unknown keys and malformed values are config errors naming the line.
Config parse_config(const std::string& text, const std::string& source = "<config>");
Config load_config(const std::string& path);

// Every key with its resolved value, grouped by section, with a one-line description.
std::string echo_config(const Config& config);

struct ConfigKeyInfo {
    std::string section;
    std::string key;
    std::string default_value;
    std::string doc;
};
std::vector<ConfigKeyInfo> config_keys();

// Derived objects.
TrainRecipe make_recipe(const Config& config, std::uint64_t seed);
PretrainOptions make_pretrain_options(const Config& config, std::uint64_t seed);
NetConfig make_net_config(const Config& config, std::size_t state_dim);

}  // namespace fc2s
