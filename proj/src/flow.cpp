#include "fc2s/flow.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fc2s/error.hpp"

namespace fc2s {

Tensor interpolate(const Tensor& x0, const Tensor& x1, double t) {
    require_same_shape(x0, x1, "interpolate");
    Tensor out = x0;
    auto a = out.data();
    auto b = x1.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = (1.0 - t) * a[i] + t * b[i];
    return out;
}

namespace {

// One supervised example: net input (without the time embedding), time, and the
// velocity target for outputs [offset, offset + target.size()).
struct Example {
    std::vector<double> input;
    double t = 0.0;
    std::vector<double> target;
    std::size_t offset = 0;
};

std::vector<double> flat(const Tensor& x) { return x.raw(); }

double accumulate_example(const VectorFieldNet& net, const Example& ex, double batch, ParamList& grads) {
    double loss = 0.0;
    net.forward_backward(
        ex.input, ex.t,
        [&](std::span<const double> out, std::span<double> g) {
            for (double& v : g) v = 0.0;
            for (std::size_t k = 0; k < ex.target.size(); ++k) {
                const double diff = out[ex.offset + k] - ex.target[k];
                loss += diff * diff;
                g[ex.offset + k] = 2.0 * diff / batch;
            }
        },
        grads);
    return loss;
}

std::vector<std::string> param_names(const VectorFieldNet& net) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < net.params().size(); ++i) names.push_back(net.param_name(i));
    return names;
}

struct LoopSettings {
    std::uint64_t steps = 0;
    LrSchedule schedule = LrSchedule::constant;
    double lr = 0.0;
    AdamWConfig adam;
    std::uint64_t checkpoint_every = 0;
};

TrainResult run_loop(VectorFieldNet net, const LoopSettings& s,
                     const std::function<std::vector<Example>(std::uint64_t)>& make_batch, const TrainHooks& hooks) {
    TrainResult result;
    OptimizerState opt(net.params(), s.adam);
    const auto names = param_names(net);
    for (std::uint64_t step = 0; step < s.steps; ++step) {
        const auto batch = make_batch(step);
        const double b = static_cast<double>(batch.size());
        ParamList grads = zeros_like(net.params());
        double loss = 0.0;
        for (const auto& ex : batch) loss += accumulate_example(net, ex, b, grads);
        loss /= b;
        if (!std::isfinite(loss)) fail(ErrorKind::divergence, "training loss became non-finite at step " + std::to_string(step));
        const double lr = lr_schedule(s.schedule, step, s.steps, s.lr);
        adamw_step(opt, net.params(), grads, lr, names);
        result.log.push_back({step, loss, lr, ""});
        if (s.checkpoint_every > 0 && (step + 1) % s.checkpoint_every == 0 && hooks.on_checkpoint)
            hooks.on_checkpoint(step + 1, net);
    }
    result.net = std::move(net);
    return result;
}

}  // namespace

LossResult cfm_loss(const VectorFieldNet& net, std::span<const Tensor> x0, std::span<const Tensor> x1,
                    std::span<const double> t) {
    if (x0.size() != x1.size() || x0.size() != t.size() || x0.empty())
        fail(ErrorKind::shape, "cfm_loss: x0, x1 and t batches must be equal and non-empty");
    LossResult r;
    r.grads = zeros_like(net.params());
    const double b = static_cast<double>(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        const Tensor xt = interpolate(x0[i], x1[i], t[i]);
        Example ex{flat(xt), t[i], flat(x1[i] - x0[i]), 0};
        r.loss += accumulate_example(net, ex, b, r.grads);
    }
    r.loss /= b;
    return r;
}

LossResult cfm_loss(const VectorFieldNet& net, const Tensor& x0, const Tensor& x1, double t) {
    return cfm_loss(net, std::span(&x0, 1), std::span(&x1, 1), std::span(&t, 1));
}

void TimestepSampler::validate() const {
    if (kind == TimestepKind::logit_normal && !(scale > 0.0))
        fail(ErrorKind::config, "logit-normal timestep scale must be positive");
    if (!(shift >= 1.0)) fail(ErrorKind::config, "timestep shift must be >= 1");
}

TimestepKind parse_timestep_kind(const std::string& s) {
    if (s == "uniform") return TimestepKind::uniform;
    if (s == "logit_normal") return TimestepKind::logit_normal;
    fail(ErrorKind::config, "unknown timestep weighting '" + s + "' (expected uniform or logit_normal)");
}

const char* to_string(TimestepKind k) { return k == TimestepKind::uniform ? "uniform" : "logit_normal"; }

double shift_timestep(double t, double shift) {
    if (shift == 1.0) return t;
    return shift * t / (1.0 + (shift - 1.0) * t);
}

double sample_t(const TimestepSampler& sampler, Rng& rng) {
    sampler.validate();
    double t;
    if (sampler.kind == TimestepKind::uniform) {
        t = rng.uniform_open();
    } else {
        const double z = rng.normal();
        t = 1.0 / (1.0 + std::exp(-(sampler.location + sampler.scale * z)));
    }
    t = shift_timestep(t, sampler.shift);
    // Keep strictly inside (0, 1) after rounding.
    if (t <= 0.0) t = 0x1.0p-53;
    if (t >= 1.0) t = 1.0 - 0x1.0p-53;
    return t;
}

Tensor LatentCodec::scale(const Tensor& z) const {
    if (sigma0_per_dim.empty()) return sigma0 * z;
    return hadamard(sigma0_per_dim, z);
}

void LatentCodec::validate() const {
    if (sigma0_per_dim.empty()) {
        if (!(sigma0 >= 0.0)) fail(ErrorKind::config, "sigma0 must be non-negative");
    } else {
        for (double v : sigma0_per_dim.raw())
            if (!(v > 0.0)) fail(ErrorKind::config, "per-dimension sigma0 entries must be positive");
    }
}

Tensor apply_target_inversion(const Tensor& mu0, const LatentCodec& codec, const Tensor& x_hat1, double rho, Rng& rng) {
    require_same_shape(mu0, x_hat1, "apply_target_inversion");
    if (!(rho >= 0.0 && rho <= 1.0)) fail(ErrorKind::config, "target inversion probability must lie in [0, 1]");
    const double p = rng.uniform();
    if (p < rho) return mu0 + codec.scale(x_hat1);
    return mu0;
}

VelocityField as_field(const VectorFieldNet& net) {
    return [&net](const Tensor& x, double t) { return net.forward(x.data(), t).reshaped(x.shape()); };
}

Tensor sample_continuation(const VelocityField& field, const Tensor& x0, std::size_t nfe, TrajectoryRecord* trajectory) {
    if (nfe == 0) fail(ErrorKind::config, "sampling needs nfe >= 1");
    const double dt = 1.0 / static_cast<double>(nfe);
    Tensor x = x0;
    if (trajectory) {
        trajectory->states = {x};
        trajectory->times = {0.0};
    }
    for (std::size_t k = 0; k < nfe; ++k) {
        const double t = static_cast<double>(k) * dt;
        const Tensor v = field(x, t);
        require_same_shape(v, x, "velocity field");
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += dt * v[i];
        if (!x.all_finite()) fail(ErrorKind::divergence, "sampling diverged at step " + std::to_string(k));
        if (trajectory) {
            trajectory->states.push_back(x);
            trajectory->times.push_back(static_cast<double>(k + 1) * dt);
        }
    }
    return x;
}

Tensor sample_continuation(const VectorFieldNet& net, const Tensor& x0, std::size_t nfe, TrajectoryRecord* trajectory) {
    return sample_continuation(as_field(net), x0, nfe, trajectory);
}

std::vector<Tensor> rollout(const VelocityField& field, const Tensor& x0, std::size_t n_chunks, std::size_t nfe) {
    if (n_chunks == 0) fail(ErrorKind::config, "rollout needs at least one chunk");
    std::vector<Tensor> out;
    Tensor cur = x0;
    for (std::size_t c = 0; c < n_chunks; ++c) {
        try {
            cur = sample_continuation(field, cur, nfe);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::divergence) throw;
            fail(ErrorKind::divergence, "rollout chunk " + std::to_string(c) + ": " + e.what());
        }
        out.push_back(cur);
    }
    return out;
}

std::vector<Tensor> rollout(const VectorFieldNet& net, const Tensor& x0, std::size_t n_chunks, std::size_t nfe) {
    return rollout(as_field(net), x0, n_chunks, nfe);
}

void InversionOptions::validate() const {
    if (steps == 0) fail(ErrorKind::config, "inversion needs at least one step");
    if (order != 1 && order != 2) fail(ErrorKind::config, "inversion order must be 1 or 2");
    if (!(r > 0.0 && r <= 1.0)) fail(ErrorKind::config, "inversion midpoint fraction r must lie in (0, 1]");
}

Tensor invert_target(const VelocityField& field, const Tensor& x1, const InversionOptions& options) {
    options.validate();
    const double dt = 1.0 / static_cast<double>(options.steps);
    Tensor x = x1;
    for (std::size_t k = 0; k < options.steps; ++k) {
        const double t = 1.0 - static_cast<double>(k) * dt;
        const Tensor v1 = field(x, t);
        require_same_shape(v1, x, "velocity field");
        if (options.order == 1) {
            for (std::size_t i = 0; i < x.size(); ++i) x[i] -= dt * v1[i];
        } else {
            const double h = options.r * dt;
            Tensor probe = x;
            for (std::size_t i = 0; i < x.size(); ++i) probe[i] -= h * v1[i];
            const Tensor v2 = field(probe, t - h);
            // dv/dt along the path, estimated from the point h behind.
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double dvdt = (v1[i] - v2[i]) / h;
                x[i] += -dt * v1[i] + 0.5 * dt * dt * dvdt;
            }
        }
        if (!x.all_finite()) fail(ErrorKind::divergence, "inversion diverged at step " + std::to_string(k));
    }
    return x;
}

Tensor invert_target(const VectorFieldNet& net, const Tensor& x1, const InversionOptions& options) {
    return invert_target(as_field(net), x1, options);
}

Algorithm parse_algorithm(const std::string& s) {
    if (s == "alg1_oc_ti") return Algorithm::alg1_oc_ti;
    if (s == "alg2_plain") return Algorithm::alg2_plain;
    if (s == "alg3_oc_only") return Algorithm::alg3_oc_only;
    if (s == "conventional_baseline") return Algorithm::conventional_baseline;
    fail(ErrorKind::config,
         "unknown algorithm '" + s + "' (expected alg1_oc_ti, alg2_plain, alg3_oc_only or conventional_baseline)");
}

const char* to_string(Algorithm a) {
    switch (a) {
    case Algorithm::alg1_oc_ti: return "alg1_oc_ti";
    case Algorithm::alg2_plain: return "alg2_plain";
    case Algorithm::alg3_oc_only: return "alg3_oc_only";
    case Algorithm::conventional_baseline: return "conventional_baseline";
    }
    return "?";
}

InitKind parse_init_kind(const std::string& s) {
    if (s == "pretrained") return InitKind::pretrained;
    if (s == "from_scratch") return InitKind::from_scratch;
    fail(ErrorKind::config, "unknown init '" + s + "' (expected pretrained or from_scratch)");
}

const char* to_string(InitKind k) { return k == InitKind::pretrained ? "pretrained" : "from_scratch"; }

void TrainRecipe::validate() const {
    const auto need = [&](CouplingKind k) {
        if (coupling.kind != k)
            fail(ErrorKind::config, std::string("algorithm ") + to_string(algorithm) + " requires coupling=" +
                                        to_string(k) + ", got coupling=" + to_string(coupling.kind));
    };
    switch (algorithm) {
    case Algorithm::alg1_oc_ti:
    case Algorithm::alg3_oc_only: need(CouplingKind::inherent); break;
    case Algorithm::alg2_plain: need(CouplingKind::independent); break;
    case Algorithm::conventional_baseline: break;
    }
    if (!(rho >= 0.0 && rho <= 1.0)) fail(ErrorKind::config, "rho must lie in [0, 1]");
    if (batch_size == 0) fail(ErrorKind::config, "batch size must be positive");
    if (!(lr >= 0.0)) fail(ErrorKind::config, "learning rate must be non-negative");
    timestep.validate();
    codec.validate();
    inversion.validate();
}

std::string TrainRecipe::hash() const {
    std::ostringstream os;
    os.precision(17);
    os << to_string(algorithm) << '|' << rho << '|' << to_string(coupling.kind) << '|' << steps << '|' << batch_size
       << '|' << to_string(schedule) << '|' << lr << '|' << adam.beta1 << '|' << adam.beta2 << '|' << adam.eps << '|'
       << adam.weight_decay << '|' << to_string(timestep.kind) << '|' << timestep.location << '|' << timestep.scale
       << '|' << timestep.shift << '|' << codec.sigma0 << '|' << inversion.steps << '|' << inversion.order << '|'
       << inversion.r << '|' << seed << '|' << to_string(init);
    if (!codec.sigma0_per_dim.empty()) os << '|' << hex64(hash_tensor(codec.sigma0_per_dim));
    return hex64(fnv1a(os.str()));
}

InversionCache build_inversion_cache(const VectorFieldNet& pretrained, std::span<const ChunkPair> dataset,
                                     const InversionOptions& options) {
    InversionCache cache;
    cache.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        try {
            cache.push_back(invert_target(pretrained, dataset[i].x1, options));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::divergence) throw;
            fail(ErrorKind::divergence, "inverting pair " + std::to_string(i) + ": " + e.what());
        }
    }
    return cache;
}

TrainResult train(const TrainRecipe& recipe, std::span<const ChunkPair> dataset, VectorFieldNet net,
                  const InversionCache* inversion, const TrainHooks& hooks) {
    recipe.validate();
    if (recipe.algorithm == Algorithm::conventional_baseline)
        fail(ErrorKind::config, "use train_conventional_baseline for the conventional design");
    if (dataset.empty()) fail(ErrorKind::config, "training dataset is empty");
    if (net.config().cond_dim != 0 || net.config().state_dim != dataset[0].dim())
        fail(ErrorKind::shape, "network state dimension " + std::to_string(net.config().state_dim) +
                                   " does not match chunk dimension " + std::to_string(dataset[0].dim()));
    const bool use_ti = recipe.algorithm == Algorithm::alg1_oc_ti && recipe.rho > 0.0;
    if (use_ti && (!inversion || inversion->size() != dataset.size()))
        fail(ErrorKind::config, "alg1 with rho > 0 needs an inversion cache covering the dataset");

    std::vector<std::string> warnings;
    if (recipe.algorithm == Algorithm::alg1_oc_ti && recipe.init == InitKind::from_scratch)
        warnings.push_back("alg1 trained from scratch: the pretrained field is used only for target inversion");

    const Rng root(recipe.seed);
    Rng batch_rng = root.fork("batch");
    Rng t_rng = root.fork("timestep");
    Rng ti_rng = root.fork("target-inversion");
    bool replacement_warned = false;

    const auto make_batch = [&](std::uint64_t) {
        const CoupledBatch batch = draw_coupled_batch(recipe.coupling, dataset, batch_rng, recipe.batch_size);
        if (batch.with_replacement && !replacement_warned) {
            warnings.push_back("batch size exceeds dataset; sampling pairs with replacement");
            replacement_warned = true;
        }
        std::vector<Example> out;
        out.reserve(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            Tensor x0 = recipe.codec.encode(batch.x0[i]);
            const Tensor x1 = recipe.codec.encode(batch.x1[i]);
            if (use_ti) x0 = apply_target_inversion(x0, recipe.codec, (*inversion)[batch.x1_source[i]], recipe.rho, ti_rng);
            const double t = sample_t(recipe.timestep, t_rng);
            out.push_back({flat(interpolate(x0, x1, t)), t, flat(x1 - x0), 0});
        }
        return out;
    };

    LoopSettings s{recipe.steps, recipe.schedule, recipe.lr, recipe.adam, recipe.checkpoint_every};
    TrainResult result = run_loop(std::move(net), s, make_batch, hooks);
    result.warnings = std::move(warnings);
    return result;
}

namespace {

Tensor gaussian_like(const Tensor& like, Rng& rng) {
    Tensor z(like.shape(), 0.0);
    for (double& v : z.raw()) v = rng.normal();
    return z;
}

}  // namespace

TrainResult pretrain_noise_to_data(std::span<const ChunkPair> dataset, const NetConfig& config,
                                   const PretrainOptions& options, const TrainHooks& hooks) {
    if (dataset.empty()) fail(ErrorKind::config, "pretraining dataset is empty");
    if (config.cond_dim != 0 || config.state_dim != dataset[0].dim())
        fail(ErrorKind::shape, "pretraining network must have state_dim equal to the chunk dimension");
    if (options.batch_size == 0) fail(ErrorKind::config, "batch size must be positive");
    options.timestep.validate();

    const Rng root(options.seed);
    Rng init_rng = root.fork("init");
    Rng batch_rng = root.fork("batch");
    Rng t_rng = root.fork("timestep");
    Rng noise_rng = root.fork("noise");
    VectorFieldNet net = VectorFieldNet::random(config, init_rng, options.init_scale);

    const auto make_batch = [&](std::uint64_t) {
        std::vector<Example> out;
        for (std::size_t i = 0; i < options.batch_size; ++i) {
            const Tensor& x1 = dataset[batch_rng.below(dataset.size())].x1;
            const Tensor x0 = gaussian_like(x1, noise_rng);
            const double t = sample_t(options.timestep, t_rng);
            out.push_back({flat(interpolate(x0, x1, t)), t, flat(x1 - x0), 0});
        }
        return out;
    };
    LoopSettings s{options.steps, options.schedule, options.lr, options.adam, options.checkpoint_every};
    return run_loop(std::move(net), s, make_batch, hooks);
}

NetConfig conventional_config(std::size_t d, std::size_t time_embed, std::vector<std::size_t> hidden) {
    NetConfig c;
    c.state_dim = d;
    c.cond_dim = d;
    c.time_embed = time_embed;
    c.hidden = std::move(hidden);
    return c;
}

TrainResult train_conventional_baseline(std::span<const ChunkPair> dataset, const NetConfig& config,
                                        const PretrainOptions& options, const TrainHooks& hooks) {
    if (dataset.empty()) fail(ErrorKind::config, "baseline dataset is empty");
    const std::size_t d = dataset[0].dim();
    if (config.cond_dim != d || config.state_dim != d)
        fail(ErrorKind::shape, "baseline network needs cond_dim == state_dim == chunk dimension");
    if (options.batch_size == 0) fail(ErrorKind::config, "batch size must be positive");
    options.timestep.validate();

    const Rng root(options.seed);
    Rng init_rng = root.fork("init");
    Rng batch_rng = root.fork("batch");
    Rng t_rng = root.fork("timestep");
    Rng noise_rng = root.fork("noise");
    VectorFieldNet net = VectorFieldNet::random(config, init_rng, options.init_scale);

    const auto make_batch = [&](std::uint64_t) {
        std::vector<Example> out;
        for (std::size_t i = 0; i < options.batch_size; ++i) {
            const ChunkPair& p = dataset[batch_rng.below(dataset.size())];
            const Tensor eps = gaussian_like(p.x1, noise_rng);
            const double t = sample_t(options.timestep, t_rng);
            std::vector<double> input = flat(p.x0);
            const Tensor xt = interpolate(eps, p.x1, t);
            input.insert(input.end(), xt.raw().begin(), xt.raw().end());
            out.push_back({std::move(input), t, flat(p.x1 - eps), d});
        }
        return out;
    };
    LoopSettings s{options.steps, options.schedule, options.lr, options.adam, options.checkpoint_every};
    return run_loop(std::move(net), s, make_batch, hooks);
}

Tensor sample_conventional(const VectorFieldNet& net, const Tensor& x0, std::size_t nfe, Rng& rng,
                           TrajectoryRecord* trajectory) {
    const std::size_t d = x0.size();
    if (net.config().cond_dim != d || net.config().state_dim != d)
        fail(ErrorKind::shape, "baseline network does not match the conditioning chunk");
    const Tensor start = gaussian_like(x0, rng);
    const VelocityField field = [&](const Tensor& x, double t) {
        std::vector<double> input = x0.raw();
        input.insert(input.end(), x.raw().begin(), x.raw().end());
        const Tensor out = net.forward(input, t);
        return Tensor(x.shape(), std::vector<double>(out.raw().begin() + static_cast<std::ptrdiff_t>(d), out.raw().end()));
    };
    return sample_continuation(field, start, nfe, trajectory);
}

void save_checkpoint(const std::string& path, const VectorFieldNet& net, const CheckpointMeta& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot open " + path + " for writing");
    const auto& c = net.config();
    out << "fc2s-checkpoint 1\n";
    out << "state_dim " << c.state_dim << "\ncond_dim " << c.cond_dim << "\ntime_embed " << c.time_embed << "\nhidden";
    for (std::size_t h : c.hidden) out << ' ' << h;
    out << "\nrecipe " << (meta.recipe_hash.empty() ? "-" : meta.recipe_hash) << "\nstep " << meta.step << "\nend\n";
    for (const auto& p : net.params()) write_tensor(out, p);
    if (!out) fail(ErrorKind::io, "checkpoint write failed for " + path);
}

VectorFieldNet load_checkpoint(const std::string& path, CheckpointMeta* meta) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open checkpoint " + path);
    std::string line;
    if (!std::getline(in, line) || line != "fc2s-checkpoint 1") fail(ErrorKind::io, path + ": not a checkpoint");
    NetConfig c;
    CheckpointMeta m;
    while (std::getline(in, line) && line != "end") {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "state_dim") ls >> c.state_dim;
        else if (key == "cond_dim") ls >> c.cond_dim;
        else if (key == "time_embed") ls >> c.time_embed;
        else if (key == "hidden") {
            std::size_t h;
            while (ls >> h) c.hidden.push_back(h);
        } else if (key == "recipe") {
            ls >> m.recipe_hash;
            if (m.recipe_hash == "-") m.recipe_hash.clear();
        } else if (key == "step") ls >> m.step;
        else fail(ErrorKind::io, path + ": unknown checkpoint header key '" + key + "'");
    }
    if (line != "end") fail(ErrorKind::io, path + ": truncated checkpoint header");
    VectorFieldNet shape(c);
    ParamList params;
    for (std::size_t i = 0; i < shape.params().size(); ++i) params.push_back(read_tensor(in));
    if (meta) *meta = m;
    return VectorFieldNet(c, std::move(params));
}

}  // namespace fc2s
