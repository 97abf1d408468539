#include "fc2s/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "fc2s/dataset.hpp"
#include "fc2s/error.hpp"
#include "fc2s/metrics.hpp"

namespace fc2s {

namespace fs = std::filesystem;

namespace {

std::string config_hash(const std::string& command, const Config& config) {
    return hex64(fnv1a(command + "\n" + echo_config(config)));
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string pair_id(std::uint64_t video_id, std::size_t chunk_index) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "v%05llu_c%03zu", static_cast<unsigned long long>(video_id), chunk_index);
    return buf;
}

std::string video_file(std::uint64_t video_id) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "videos/v%05llu.tensor", static_cast<unsigned long long>(video_id));
    return buf;
}

std::string join(const std::vector<std::size_t>& v, char sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(1, sep) : "") + std::to_string(v[i]);
    return out;
}

std::string loss_csv(const std::vector<LossRecord>& log) {
    std::string out = "step,loss,lr,note\n";
    for (const auto& r : log)
        out += std::to_string(r.step) + "," + format_double(r.loss) + "," + format_double(r.lr) + "," + r.note + "\n";
    return out;
}

double median(std::vector<double> v) {
    if (v.empty()) fail(ErrorKind::degenerate, "median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

Dataset load_split(const Config& config, Split split) {
    return load_dataset(split_manifest(config.data.dir, split));
}

Dataset load_train_split(const Config& config) {
    Dataset ds = load_split(config, Split::train);
    if (ds.empty()) fail(ErrorKind::config, "training split in " + config.data.dir + " is empty");
    return ds;
}

void require_key(const std::string& value, const std::string& key) {
    if (value.empty()) fail(ErrorKind::config, key + " is not set");
}

void save_final(RunDirectory& run, const TrainResult& result, const std::string& recipe_hash, std::uint64_t steps) {
    save_checkpoint(run.artifact("checkpoint.bin"), result.net, {recipe_hash, steps});
    run.write_text("loss.csv", loss_csv(result.log));
}

TrainHooks checkpoint_hooks(RunDirectory& run, std::uint64_t every, const std::string& recipe_hash) {
    TrainHooks hooks;
    if (every == 0) return hooks;
    hooks.on_checkpoint = [&run, recipe_hash](std::uint64_t step, const VectorFieldNet& net) {
        save_checkpoint(run.artifact("checkpoint_step" + std::to_string(step) + ".bin"), net, {recipe_hash, step});
    };
    return hooks;
}

// Inversion cache layout: <dir named by the checkpoint hash>/<pair id>.tensor
InversionCache write_inversion_cache(RunDirectory& run, const std::string& checkpoint_path,
                                     const VectorFieldNet& pretrained, const Dataset& ds,
                                     const InversionOptions& options, std::ostream& log) {
    const std::string key = file_hash(checkpoint_path);
    log << "inverting " << ds.pairs.size() << " targets under checkpoint " << key << "\n";
    InversionCache cache = build_inversion_cache(pretrained, ds.pairs, options);
    for (std::size_t i = 0; i < cache.size(); ++i)
        save_tensor(run.artifact("inversion/" + key + "/" + pair_id(ds.pairs[i].video_id, ds.pairs[i].chunk_index) +
                                 ".tensor"),
                    cache[i]);
    return cache;
}

InversionCache read_inversion_cache(const std::string& dir, const std::string& checkpoint_path, const Dataset& ds) {
    const std::string key = file_hash(checkpoint_path);
    if (fs::path(dir).filename().string() != key)
        fail(ErrorKind::config, "inversion cache " + dir + " was not built from checkpoint " + checkpoint_path +
                                    " (expected a directory named " + key + ")");
    InversionCache cache;
    for (const auto& p : ds.pairs) {
        Tensor t = load_tensor((fs::path(dir) / (pair_id(p.video_id, p.chunk_index) + ".tensor")).string());
        if (t.shape() != p.x1.shape()) fail(ErrorKind::shape, "inversion cache entry does not match its pair");
        cache.push_back(std::move(t));
    }
    return cache;
}

VectorFieldNet load_direct(const std::string& path, std::size_t d) {
    VectorFieldNet net = load_checkpoint(path);
    if (net.config().cond_dim != 0 || net.config().state_dim != d)
        fail(ErrorKind::config, path + " is not a direct model for chunks of dimension " + std::to_string(d));
    return net;
}

bool is_conventional(const VectorFieldNet& net) { return net.config().cond_dim != 0; }

std::vector<Tensor> conventional_rollout(const VectorFieldNet& net, const Tensor& x0, std::size_t n_chunks,
                                         std::size_t nfe, Rng& rng, TrajectoryRecord* first) {
    std::vector<Tensor> out;
    Tensor current = x0;
    for (std::size_t k = 0; k < n_chunks; ++k) {
        current = sample_conventional(net, current, nfe, rng, k == 0 ? first : nullptr);
        out.push_back(current);
    }
    return out;
}

void write_frames(RunDirectory& run, const std::string& prefix, const Tensor& chunk) {
    const std::vector<std::size_t> frame{chunk.dim(1), chunk.dim(2)};
    for (std::size_t f = 0; f < chunk.dim(0); ++f)
        write_pgm(run.artifact("frames/" + prefix + "_f" + std::to_string(f) + ".pgm"),
                  chunk.slice(f, f + 1).reshaped(frame));
}

struct ScalingRow {
    std::string design;
    std::vector<std::size_t> hidden;
    ScalingFit fit;
};

ScalingFit fit_costs(const std::vector<std::string>& shapes, bool conventional, std::size_t time_embed,
                     const std::vector<std::size_t>& hidden) {
    std::vector<std::pair<double, double>> points;
    for (const auto& s : shapes) {
        const auto dims = parse_shape(s);
        const std::size_t d = dims[0] * dims[1] * dims[2];
        NetConfig c = conventional ? conventional_config(d, time_embed, hidden) : NetConfig{d, 0, time_embed, hidden};
        points.emplace_back(static_cast<double>(d), static_cast<double>(activation_cost(c)));
    }
    return ols_fit(points);
}

std::string scaling_csv(const std::vector<ScalingRow>& rows) {
    std::string out = "design,hidden,k,b,residual_norm\n";
    for (const auto& r : rows)
        out += r.design + "," + join(r.hidden, ';') + "," + format_double(r.fit.k) + "," + format_double(r.fit.b) +
               "," + format_double(r.fit.residual_norm) + "\n";
    return out;
}

}  // namespace

RunDirectory::RunDirectory(fs::path path) : path_(std::move(path)) {}

RunDirectory::RunDirectory(RunDirectory&& other) noexcept
    : path_(std::move(other.path_)), artifacts_(std::move(other.artifacts_)), finished_(other.finished_) {
    other.path_.clear();
    other.finished_ = true;
}

RunDirectory::~RunDirectory() {
    if (!finished_ && !path_.empty()) {
        std::error_code ec;
        fs::remove(path_ / ".lock", ec);
    }
}

RunDirectory RunDirectory::create(const std::string& root, const std::string& command, const Config& resolved) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) fail(ErrorKind::io, "cannot create output directory " + root + ": " + ec.message());
    const std::string base = command + "-" + utc_timestamp() + "-" + config_hash(command, resolved).substr(0, 8);
    fs::path path = fs::path(root) / base;
    for (int suffix = 2; !fs::create_directory(path, ec); ++suffix) {
        if (ec) fail(ErrorKind::io, "cannot create run directory " + path.string() + ": " + ec.message());
        path = fs::path(root) / (base + "-" + std::to_string(suffix));
    }
    std::FILE* lock = std::fopen((path / ".lock").c_str(), "wx");
    if (!lock) fail(ErrorKind::io, "run directory " + path.string() + " is locked by another process");
    std::fputs(command.c_str(), lock);
    std::fclose(lock);
    RunDirectory run(path);
    run.write_text("config.resolved", echo_config(resolved));
    return run;
}

std::string RunDirectory::artifact(const std::string& relative) {
    const fs::path full = path_ / relative;
    fs::create_directories(full.parent_path());
    if (std::find(artifacts_.begin(), artifacts_.end(), relative) == artifacts_.end()) artifacts_.push_back(relative);
    return full.string();
}

void RunDirectory::write_text(const std::string& relative, const std::string& content) {
    const std::string full = artifact(relative);
    std::ofstream out(full, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write " + full);
    out << content;
    if (!out) fail(ErrorKind::io, "short write to " + full);
}

void RunDirectory::finish() {
    std::vector<std::string> names = artifacts_;
    std::sort(names.begin(), names.end());
    std::string manifest;
    for (const auto& name : names) {
        const std::string full = (path_ / name).string();
        manifest += file_hash(full) + "\t" + std::to_string(fs::file_size(full)) + "\t" + name + "\n";
    }
    std::ofstream out(path_ / kRunManifest, std::ios::binary);
    out << manifest;
    out.close();
    fs::remove(path_ / ".lock");
    finished_ = true;
}

std::string file_hash(const std::string& path) {
    const std::string bytes = read_file(path);
    return hex64(fnv1a(std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size())));
}

std::vector<std::string> verify_run(const std::string& run_dir) {
    std::vector<std::string> problems;
    const fs::path manifest = fs::path(run_dir) / kRunManifest;
    if (!fs::exists(manifest)) return {"no " + std::string(kRunManifest) + " in " + run_dir + " (run incomplete?)"};
    std::istringstream in(read_file(manifest.string()));
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream fields(line);
        std::string hash, size, name;
        if (!std::getline(fields, hash, '\t') || !std::getline(fields, size, '\t') || !std::getline(fields, name)) {
            problems.push_back("malformed manifest line: " + line);
            continue;
        }
        const fs::path file = fs::path(run_dir) / name;
        if (!fs::exists(file)) {
            problems.push_back("missing: " + name);
        } else if (std::to_string(fs::file_size(file)) != size || file_hash(file.string()) != hash) {
            problems.push_back("modified: " + name);
        }
    }
    return problems;
}

std::uint64_t subsystem_seed(std::uint64_t root_seed, const std::string& subsystem) {
    return Rng(root_seed).fork(subsystem).next_u64();
}

std::string split_manifest(const std::string& data_dir, Split split) {
    return (fs::path(data_dir) / (std::string(to_string(split)) + ".manifest")).string();
}

std::vector<VideoRecord> read_video_index(const std::string& data_dir) {
    const std::string path = (fs::path(data_dir) / "videos.csv").string();
    std::istringstream in(read_file(path));
    std::string line;
    std::getline(in, line);
    std::vector<VideoRecord> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        std::vector<std::string> f;
        std::istringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) f.push_back(item);
        if (line.back() == ',') f.emplace_back();
        if (f.size() != 7) fail(ErrorKind::io, path + ":" + std::to_string(line_no) + ": expected 7 fields");
        VideoRecord r;
        r.video_id = std::stoull(f[0]);
        r.split = parse_split(f[1]);
        r.motion = parse_motion_class(f[2]);
        r.camera = parse_camera_class(f[3]);
        r.seed = std::stoull(f[4]);
        std::istringstream cuts(f[5]);
        while (std::getline(cuts, item, ';'))
            if (!item.empty()) r.cuts.push_back(std::stoull(item));
        r.path = f[6];
        out.push_back(r);
    }
    return out;
}

std::vector<std::size_t> parse_shape(const std::string& s) {
    std::vector<std::size_t> dims;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, 'x')) {
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != item.size() || item.empty() || v == 0) fail(ErrorKind::config, "bad shape '" + s + "' (want LxHxW)");
        dims.push_back(static_cast<std::size_t>(v));
    }
    if (dims.size() != 3) fail(ErrorKind::config, "bad shape '" + s + "' (want LxHxW)");
    return dims;
}

std::string cmd_gen_data(const Config& config, std::ostream& log) {
    const DataSection& d = config.data;
    if (d.chunk_len == 0 || d.height == 0 || d.width == 0)
        fail(ErrorKind::config, "data.chunk_len, data.height and data.width must be positive");
    if (d.frames < 2 * d.chunk_len) fail(ErrorKind::config, "data.frames must be at least 2 * data.chunk_len");
    if (d.motions.empty() || d.cameras.empty()) fail(ErrorKind::config, "data.motions and data.cameras must be non-empty");

    RunDirectory run = RunDirectory::create(config.run.out, "gen-data", config);
    const Rng data_rng(subsystem_seed(config.run.seed, "data"));
    DatasetManifest manifests[2];
    for (auto& m : manifests) {
        m.chunk_len = d.chunk_len;
        m.height = d.height;
        m.width = d.width;
    }
    std::string index = "video_id,split,motion,camera,seed,cuts,path\n";
    std::uint64_t video_id = 0;
    std::size_t cut_count = 0;
    for (const Split split : {Split::train, Split::eval}) {
        const std::size_t per_cell = split == Split::train ? d.videos_per_class : d.eval_videos_per_class;
        for (const MotionClass motion : d.motions) {
            for (const CameraClass camera : d.cameras) {
                for (std::size_t i = 0; i < per_cell; ++i, ++video_id) {
                    BlobVideoParams p;
                    p.seed = data_rng.fork(video_id).next_u64();
                    p.frames = d.frames;
                    p.height = d.height;
                    p.width = d.width;
                    p.motion = motion;
                    p.camera = camera;
                    p.blob_sigma = d.blob_sigma;
                    p.background = d.background;
                    const SyntheticVideo video = gen_blob_video(p);
                    const auto cuts = detect_scene_cuts(video.frames, d.hist_bins, d.cut_threshold);
                    cut_count += cuts.size();
                    save_tensor(run.artifact("data/" + video_file(video_id)), video.frames);
                    index += std::to_string(video_id) + "," + to_string(split) + "," + to_string(motion) + "," +
                             to_string(camera) + "," + std::to_string(p.seed) + "," + join(cuts, ';') + "," +
                             video_file(video_id) + "\n";
                    for (ChunkPair& pair : chunk_video(video.frames, d.chunk_len, cuts, video_id)) {
                        pair.motion = motion;
                        pair.camera = camera;
                        const std::string rel = "pairs/" + pair_id(video_id, pair.chunk_index) + ".tensor";
                        save_pair(run.artifact("data/" + rel), pair);
                        manifests[static_cast<int>(split)].records.push_back(
                            {rel, video_id, pair.chunk_index, motion, camera});
                    }
                }
            }
        }
    }
    run.write_text("data/videos.csv", index);
    write_manifest(run.artifact("data/train.manifest"), manifests[0]);
    write_manifest(run.artifact("data/eval.manifest"), manifests[1]);
    log << "generated " << video_id << " videos, " << manifests[0].records.size() << " training pairs, "
        << manifests[1].records.size() << " evaluation pairs, " << cut_count << " scene cuts\n";
    run.finish();
    return run.path().string();
}

std::string cmd_pretrain(const Config& config, std::ostream& log) {
    PretrainOptions options = make_pretrain_options(config, subsystem_seed(config.run.seed, "pretrain"));
    options.timestep.validate();
    if (options.batch_size == 0) fail(ErrorKind::config, "pretrain.batch_size must be positive");
    const Dataset ds = load_train_split(config);
    const NetConfig net_config = make_net_config(config, ds.dim());

    RunDirectory run = RunDirectory::create(config.run.out, "pretrain", config);
    const std::string hash = config_hash("pretrain", config);
    log << "pretraining on " << ds.pairs.size() << " chunks of dimension " << ds.dim() << "\n";
    const TrainResult result =
        pretrain_noise_to_data(ds.pairs, net_config, options, checkpoint_hooks(run, config.train.checkpoint_every, hash));
    save_final(run, result, hash, options.steps);
    if (!result.log.empty()) log << "final loss " << format_double(result.log.back().loss) << "\n";
    run.finish();
    return run.path().string();
}

std::string cmd_finetune(const Config& config, std::ostream& log) {
    const std::uint64_t seed = subsystem_seed(config.run.seed, "train");
    const TrainRecipe recipe = make_recipe(config, seed);
    recipe.validate();
    const bool baseline = recipe.algorithm == Algorithm::conventional_baseline;
    const bool use_ti = recipe.algorithm == Algorithm::alg1_oc_ti && recipe.rho > 0.0;
    if (!baseline && recipe.init == InitKind::pretrained && config.train.pretrained.empty())
        fail(ErrorKind::config, "finetune needs train.pretrained (set train.init = from_scratch to train without one)");
    if (use_ti && config.train.pretrained.empty())
        fail(ErrorKind::config, "alg1_oc_ti needs train.pretrained for target inversion, even when training from scratch");

    const Dataset ds = load_train_split(config);
    std::optional<VectorFieldNet> pretrained;
    if (!baseline && !config.train.pretrained.empty()) pretrained = load_direct(config.train.pretrained, ds.dim());

    RunDirectory run = RunDirectory::create(config.run.out, "finetune", config);
    const std::string hash = recipe.hash();
    const TrainHooks hooks = checkpoint_hooks(run, recipe.checkpoint_every, hash);
    TrainResult result;
    if (baseline) {
        PretrainOptions o = make_pretrain_options(config, seed);
        o.steps = recipe.steps;
        o.batch_size = recipe.batch_size;
        o.lr = recipe.lr;
        o.schedule = recipe.schedule;
        log << "training the conventional baseline on " << ds.pairs.size() << " pairs\n";
        result = train_conventional_baseline(
            ds.pairs, conventional_config(ds.dim(), config.model.time_embed, config.model.hidden), o, hooks);
    } else {
        VectorFieldNet net;
        if (recipe.init == InitKind::pretrained) {
            net = *pretrained;
        } else {
            Rng init = Rng(seed).fork("init");
            net = VectorFieldNet::random(make_net_config(config, ds.dim()), init, config.model.init_scale);
        }
        InversionCache cache;
        if (use_ti) {
            cache = config.train.inversion_cache.empty()
                        ? write_inversion_cache(run, config.train.pretrained, *pretrained, ds, recipe.inversion, log)
                        : read_inversion_cache(config.train.inversion_cache, config.train.pretrained, ds);
        }
        log << "training " << to_string(recipe.algorithm) << " on " << ds.pairs.size() << " pairs\n";
        result = train(recipe, ds.pairs, std::move(net), use_ti ? &cache : nullptr, hooks);
    }
    for (const auto& w : result.warnings) log << "warning: " << w << "\n";
    if (!result.warnings.empty()) {
        std::string text;
        for (const auto& w : result.warnings) text += w + "\n";
        run.write_text("warnings.txt", text);
    }
    save_final(run, result, hash, recipe.steps);
    if (!result.log.empty()) log << "final loss " << format_double(result.log.back().loss) << "\n";
    run.finish();
    return run.path().string();
}

std::string cmd_invert(const Config& config, std::ostream& log) {
    require_key(config.train.pretrained, "train.pretrained");
    const InversionOptions options{config.train.inversion_steps, config.train.inversion_order, config.train.inversion_r};
    options.validate();
    const Dataset ds = load_train_split(config);
    const VectorFieldNet net = load_direct(config.train.pretrained, ds.dim());

    RunDirectory run = RunDirectory::create(config.run.out, "invert", config);
    const InversionCache cache = write_inversion_cache(run, config.train.pretrained, net, ds, options, log);
    std::string csv = "pair,relative_error\n";
    double worst = 0.0;
    for (std::size_t i = 0; i < cache.size(); ++i) {
        const Tensor back = sample_continuation(net, cache[i], options.steps);
        const double rel = std::sqrt(squared_distance(back.data(), ds.pairs[i].x1.data()) /
                                     std::max(squared_norm(ds.pairs[i].x1.data()), 1e-300));
        worst = std::max(worst, rel);
        csv += pair_id(ds.pairs[i].video_id, ds.pairs[i].chunk_index) + "," + format_double(rel) + "\n";
    }
    run.write_text("roundtrip.csv", csv);
    log << "cache: " << (run.path() / "inversion" / file_hash(config.train.pretrained)).string() << "\n";
    log << "worst round-trip relative error " << format_double(worst) << "\n";
    run.finish();
    return run.path().string();
}

std::string cmd_sample(const Config& config, std::ostream& log) {
    const SampleSection& s = config.sample;
    require_key(s.checkpoint, "sample.checkpoint");
    if (s.nfe == 0 || s.n_chunks == 0) fail(ErrorKind::config, "sample.nfe and sample.n_chunks must be positive");
    const Dataset ds = load_split(config, s.split);
    if (s.pair >= ds.pairs.size())
        fail(ErrorKind::config, "sample.pair " + std::to_string(s.pair) + " is out of range for the " +
                                    to_string(s.split) + " split (" + std::to_string(ds.pairs.size()) + " pairs)");
    const VectorFieldNet net = load_checkpoint(s.checkpoint);
    if (net.config().state_dim != ds.dim()) fail(ErrorKind::config, "checkpoint does not match the chunk dimension");
    const ChunkPair& pair = ds.pairs[s.pair];

    RunDirectory run = RunDirectory::create(config.run.out, "sample", config);
    TrajectoryRecord traj;
    std::vector<Tensor> chunks;
    if (is_conventional(net)) {
        Rng rng(subsystem_seed(config.run.seed, "sample"));
        chunks = conventional_rollout(net, pair.x0, s.n_chunks, s.nfe, rng, &traj);
    } else {
        chunks = rollout(net, pair.x0, s.n_chunks, s.nfe);
        sample_continuation(net, pair.x0, s.nfe, &traj);
    }
    save_tensor(run.artifact("input.tensor"), pair.x0);
    write_frames(run, "input", pair.x0);
    for (std::size_t k = 0; k < chunks.size(); ++k) {
        save_tensor(run.artifact("chunk_" + std::to_string(k + 1) + ".tensor"), chunks[k]);
        write_frames(run, "chunk" + std::to_string(k + 1), chunks[k]);
    }
    std::vector<Tensor> flat;
    std::string tcsv = "step,t,distance_from_start\n";
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        flat.push_back(traj.states[i].reshaped({traj.states[i].size()}));
        tcsv += std::to_string(i) + "," + format_double(traj.times[i]) + "," +
                format_double(std::sqrt(squared_distance(traj.states[i].data(), traj.states[0].data()))) + "\n";
    }
    save_tensor(run.artifact("trajectory.tensor"), stack(flat));
    run.write_text("trajectory.csv", tcsv);
    const SeamMetrics seam = seam_metrics(pair.x0, chunks[0]);
    run.write_text("metrics.csv", "nfe,n_chunks,curvature,seam_jump,seam_accel,endpoint_mse\n" + std::to_string(s.nfe) +
                                      "," + std::to_string(s.n_chunks) + "," + format_double(path_curvature(traj)) +
                                      "," + format_double(seam.jump) + "," + format_double(seam.accel) + "," +
                                      format_double(endpoint_mse(chunks[0], pair.x1)) + "\n");
    log << "generated " << chunks.size() << " chunk(s) from pair " << s.pair << " of the " << to_string(s.split)
        << " split\n";
    run.finish();
    return run.path().string();
}

std::string cmd_otplan(const Config& config, std::ostream& log) {
    const OtplanSection& o = config.otplan;
    std::vector<Tensor> chunks;
    std::vector<ChunkLabel> labels;
    std::size_t used = 0;
    for (const auto& v : read_video_index(config.data.dir)) {
        if (v.split != o.split || used == o.videos) continue;
        ++used;
        const Tensor frames = load_tensor((fs::path(config.data.dir) / v.path).string());
        for (auto& c : consecutive_chunks(frames, config.data.chunk_len, v.cuts, v.video_id)) {
            chunks.push_back(std::move(c.data));
            labels.push_back(c.label);
        }
    }
    if (chunks.size() < 2) fail(ErrorKind::config, "otplan needs at least two chunks");
    const OtOptions options{o.fallback, o.penalty_factor, o.max_size};
    if (chunks.size() > o.max_size)
        fail(ErrorKind::config, std::to_string(chunks.size()) + " chunks exceed otplan.max_size");

    const TransportPlan plan = solve_ot_exact(cost_matrix(chunks, labels), make_mask(labels, o.mask), options);
    // Control: the same chunks under randomly permuted labels.
    std::vector<ChunkLabel> permuted = labels;
    Rng rng(subsystem_seed(config.run.seed, "otplan"));
    for (std::size_t i = permuted.size() - 1; i > 0; --i) std::swap(permuted[i], permuted[rng.below(i + 1)]);
    const TransportPlan control = solve_ot_exact(cost_matrix(chunks, permuted), make_mask(permuted, o.mask), options);

    RunDirectory run = RunDirectory::create(config.run.out, "otplan", config);
    write_plan_pgm(run.artifact("plan.pgm"), plan);
    std::ostringstream text;
    write_plan_text(text, plan);
    run.write_text("plan.txt", text.str());
    run.write_text("boundaries.txt", join(video_boundaries(labels), '\n') + "\n");
    const double mass = adjacency_mass(plan, labels, labels);
    const double control_mass = adjacency_mass(control, permuted, permuted);
    run.write_text("stats.csv", "n,mask,objective,penalized_matches,adjacency_mass,control_adjacency_mass\n" +
                                    std::to_string(plan.n()) + "," + to_string(o.mask) + "," +
                                    format_double(plan.objective) + "," + std::to_string(plan.penalized_matches) + "," +
                                    format_double(mass) + "," + format_double(control_mass) + "\n");
    log << "plan over " << plan.n() << " chunks from " << used << " videos: adjacency mass " << format_double(mass)
        << " (control " << format_double(control_mass) << ")\n";
    run.finish();
    return run.path().string();
}

std::string cmd_evaluate(const Config& config, std::ostream& log) {
    const EvalSection& e = config.eval;
    require_key(e.checkpoint, "eval.checkpoint");
    if (e.nfe_list.empty() || e.nfe == 0 || e.rollout_chunks == 0)
        fail(ErrorKind::config, "eval.nfe_list, eval.nfe and eval.rollout_chunks must be non-empty / positive");
    const Dataset ds = load_split(config, Split::eval);
    if (ds.empty()) fail(ErrorKind::config, "evaluation split in " + config.data.dir + " is empty");
    const VectorFieldNet net = load_direct(e.checkpoint, ds.dim());
    std::optional<VectorFieldNet> base;
    if (!e.baseline.empty()) {
        base = load_checkpoint(e.baseline);
        if (!is_conventional(*base) || base->config().state_dim != ds.dim())
            fail(ErrorKind::config, e.baseline + " is not a conventional baseline for this dataset");
    }

    RunDirectory run = RunDirectory::create(config.run.out, "evaluate", config);
    const std::string hash = config_hash("evaluate", config);
    std::vector<std::pair<std::string, double>> summary{{"eval_pairs", static_cast<double>(ds.pairs.size())}};

    std::ostringstream sweep;
    write_sweep_csv(sweep, e.nfe_list, nfe_sweep(direct_sampler(net), ds.pairs, e.nfe_list, hash));
    run.write_text("sweep.csv", sweep.str());
    if (base) {
        Rng rng(subsystem_seed(config.run.seed, "eval"));
        const ContinuationSampler sampler = [&](const Tensor& x0, std::size_t nfe, TrajectoryRecord* traj) {
            return sample_conventional(*base, x0, nfe, rng, traj);
        };
        std::ostringstream bsweep;
        write_sweep_csv(bsweep, e.nfe_list, nfe_sweep(sampler, ds.pairs, e.nfe_list, hash));
        run.write_text("baseline_sweep.csv", bsweep.str());
    }

    // Rollouts over held-out videos with enough consecutive chunks.
    std::string rollout_rows = "video_id,motion,camera,chunk,endpoint_mse\n";
    std::vector<std::vector<double>> per_chunk(e.rollout_chunks);
    for (const auto& v : read_video_index(config.data.dir)) {
        if (v.split != Split::eval) continue;
        const auto chunks = consecutive_chunks(load_tensor((fs::path(config.data.dir) / v.path).string()),
                                               config.data.chunk_len, v.cuts, v.video_id);
        if (chunks.size() < e.rollout_chunks + 1) continue;
        bool contiguous = true;
        for (std::size_t k = 1; k <= e.rollout_chunks; ++k)
            contiguous = contiguous && chunks[k].label.chunk_index == chunks[0].label.chunk_index + k;
        if (!contiguous) continue;
        const auto generated = rollout(net, chunks[0].data, e.rollout_chunks, e.nfe);
        for (std::size_t k = 0; k < e.rollout_chunks; ++k) {
            const double err = endpoint_mse(generated[k], chunks[k + 1].data);
            per_chunk[k].push_back(err);
            rollout_rows += std::to_string(v.video_id) + "," + to_string(v.motion) + "," + to_string(v.camera) + "," +
                            std::to_string(k + 1) + "," + format_double(err) + "\n";
        }
    }
    run.write_text("rollout.csv", rollout_rows);
    if (!per_chunk[0].empty()) {
        std::string rsum = "chunk,median_endpoint_mse\n";
        for (std::size_t k = 0; k < per_chunk.size(); ++k)
            rsum += std::to_string(k + 1) + "," + format_double(median(per_chunk[k])) + "\n";
        run.write_text("rollout_summary.csv", rsum);
        summary.emplace_back("rollout_videos", static_cast<double>(per_chunk[0].size()));
        summary.emplace_back("rollout_growth", median(per_chunk.back()) / median(per_chunk.front()));
    }

    // Per-category table over the full motion x camera grid.
    std::string cat = "motion,camera,pairs,endpoint_mse,seam_jump,seam_accel,motion_continuity\n";
    for (const MotionClass m : kAllMotionClasses) {
        for (const CameraClass c : kAllCameraClasses) {
            double mse = 0.0, jump = 0.0, accel = 0.0, cont = 0.0;
            std::size_t n = 0, n_cont = 0;
            for (const auto& p : ds.pairs) {
                if (p.motion != m || p.camera != c) continue;
                const Tensor g = sample_continuation(net, p.x0, e.nfe);
                const SeamMetrics seam = seam_metrics(p.x0, g);
                mse += endpoint_mse(g, p.x1);
                jump += seam.jump;
                accel += seam.accel;
                try {
                    cont += motion_continuity(p.x0, g);
                    ++n_cont;
                } catch (const Error& err) {
                    if (err.kind() != ErrorKind::degenerate) throw;
                }
                ++n;
            }
            cat += std::string(to_string(m)) + "," + to_string(c) + "," + std::to_string(n) + ",";
            if (n == 0) {
                cat += ",,,\n";
                continue;
            }
            const double dn = static_cast<double>(n);
            cat += format_double(mse / dn) + "," + format_double(jump / dn) + "," + format_double(accel / dn) + "," +
                   (n_cont ? format_double(cont / static_cast<double>(n_cont)) : "") + "\n";
        }
    }
    run.write_text("categories.csv", cat);

    if (base) {
        const std::vector<ScalingRow> rows{
            {"direct", net.config().hidden,
             fit_costs(config.memfit.shapes, false, net.config().time_embed, net.config().hidden)},
            {"conventional", base->config().hidden,
             fit_costs(config.memfit.shapes, true, base->config().time_embed, base->config().hidden)}};
        run.write_text("scaling.csv", scaling_csv(rows));
        summary.emplace_back("slope_ratio", rows[0].fit.k / rows[1].fit.k);
    }
    std::string sum = "metric,value\n";
    for (const auto& [k, v] : summary) sum += k + "," + format_double(v) + "\n";
    run.write_text("summary.csv", sum);
    log << "evaluated " << ds.pairs.size() << " pairs" << (base ? " against the conventional baseline" : "") << "\n";
    run.finish();
    return run.path().string();
}

std::string cmd_memfit(const Config& config, std::ostream& log) {
    const auto& shapes = config.memfit.shapes;
    const std::size_t e = config.model.time_embed;
    const auto& hidden = config.model.hidden;
    std::string points = "shape,V,direct_cost,conventional_cost\n";
    for (const auto& s : shapes) {
        const auto dims = parse_shape(s);
        const std::size_t d = dims[0] * dims[1] * dims[2];
        points += s + "," + std::to_string(d) + "," + std::to_string(activation_cost(NetConfig{d, 0, e, hidden})) +
                  "," + std::to_string(activation_cost(conventional_config(d, e, hidden))) + "\n";
    }
    const std::vector<ScalingRow> rows{{"direct", hidden, fit_costs(shapes, false, e, hidden)},
                                       {"conventional", hidden, fit_costs(shapes, true, e, hidden)}};
    RunDirectory run = RunDirectory::create(config.run.out, "memfit", config);
    run.write_text("memfit.csv", points);
    run.write_text("fit.csv", scaling_csv(rows) + "slope_ratio,,," + format_double(rows[0].fit.k / rows[1].fit.k) +
                                  ",\n");
    log << "k_direct " << format_double(rows[0].fit.k) << ", k_conventional " << format_double(rows[1].fit.k)
        << ", ratio " << format_double(rows[0].fit.k / rows[1].fit.k) << "\n";
    run.finish();
    return run.path().string();
}

std::string cmd_verify(const Config& config, std::ostream& log) {
    require_key(config.verify.run, "verify.run");
    const auto problems = verify_run(config.verify.run);
    for (const auto& p : problems) log << p << "\n";
    if (!problems.empty())
        fail(ErrorKind::io, config.verify.run + " failed verification (" + std::to_string(problems.size()) + " problems)");
    log << config.verify.run << ": all listed artifacts intact\n";
    return "";
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"gen-data", "pretrain", "finetune", "sample", "invert",
                                                "otplan",   "evaluate", "memfit",   "verify"};
    return names;
}

std::string run_command(const std::string& name, const Config& config, std::ostream& log) {
    using Fn = std::string (*)(const Config&, std::ostream&);
    static const std::map<std::string, Fn> table{
        {"gen-data", cmd_gen_data}, {"pretrain", cmd_pretrain}, {"finetune", cmd_finetune},
        {"sample", cmd_sample},     {"invert", cmd_invert},     {"otplan", cmd_otplan},
        {"evaluate", cmd_evaluate}, {"memfit", cmd_memfit},     {"verify", cmd_verify}};
    const auto it = table.find(name);
    if (it == table.end()) fail(ErrorKind::config, "unknown command '" + name + "'");
    return it->second(config, log);
}

}  // namespace fc2s
