#include "fc2s/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "fc2s/error.hpp"
#include "fc2s/metrics.hpp"

namespace fc2s {

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "eval") return Split::eval;
    fail(ErrorKind::config, "unknown split '" + s + "' (expected train or eval)");
}

const char* to_string(Split s) { return s == Split::train ? "train" : "eval"; }

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

template <class T>
T parse_number(const std::string& s) {
    T v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
        fail(ErrorKind::config, "'" + s + "' is not a valid number");
    return v;
}

void read_value(const std::string& s, std::uint64_t& v) { v = parse_number<std::uint64_t>(s); }
void read_value(const std::string& s, int& v) { v = parse_number<int>(s); }
void read_value(const std::string& s, double& v) { v = parse_number<double>(s); }
void read_value(const std::string& s, std::string& v) { v = s; }
void read_value(const std::string& s, bool& v) {
    if (s == "true") v = true;
    else if (s == "false") v = false;
    else fail(ErrorKind::config, "'" + s + "' is not true or false");
}
void read_value(const std::string& s, Algorithm& v) { v = parse_algorithm(s); }
void read_value(const std::string& s, CouplingKind& v) { v = parse_coupling_kind(s); }
void read_value(const std::string& s, LrSchedule& v) { v = parse_lr_schedule(s); }
void read_value(const std::string& s, TimestepKind& v) { v = parse_timestep_kind(s); }
void read_value(const std::string& s, InitKind& v) { v = parse_init_kind(s); }
void read_value(const std::string& s, MaskKind& v) { v = parse_mask_kind(s); }
void read_value(const std::string& s, Split& v) { v = parse_split(s); }
void read_value(const std::string& s, MotionClass& v) { v = parse_motion_class(s); }
void read_value(const std::string& s, CameraClass& v) { v = parse_camera_class(s); }

template <class T>
void read_value(const std::string& s, std::vector<T>& v) {
    v.clear();
    for (const auto& item : split_list(s)) {
        T x{};
        read_value(item, x);
        v.push_back(x);
    }
}

std::string write_value(std::uint64_t v) { return std::to_string(v); }
std::string write_value(int v) { return std::to_string(v); }
std::string write_value(double v) { return format_double(v); }
std::string write_value(const std::string& v) { return v; }
std::string write_value(bool v) { return v ? "true" : "false"; }
template <class E>
    requires std::is_enum_v<E>
std::string write_value(E v) {
    return to_string(v);
}

template <class T>
std::string write_value(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + write_value(v[i]);
    return out;
}

struct KeySpec {
    std::string section;
    std::string key;
    std::string doc;
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

template <class S, class T>
KeySpec bind(const char* section, const char* key, const char* doc, S Config::*s, T S::*m) {
    return {section, key, doc, [s, m](Config& c, const std::string& v) { read_value(v, c.*s.*m); },
            [s, m](const Config& c) { return write_value(c.*s.*m); }};
}

const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> table = [] {
        using C = Config;
        std::vector<KeySpec> t;
        t.push_back(bind("run", "seed", "root seed; every subsystem forks its own stream", &C::run, &RunSection::seed));
        t.push_back(bind("run", "out", "directory that receives run directories", &C::run, &RunSection::out));

        t.push_back(bind("data", "dir", "dataset directory written by gen-data", &C::data, &DataSection::dir));
        t.push_back(bind("data", "videos_per_class", "training videos per motion/camera cell", &C::data,
                         &DataSection::videos_per_class));
        t.push_back(bind("data", "eval_videos_per_class", "held-out videos per cell", &C::data,
                         &DataSection::eval_videos_per_class));
        t.push_back(bind("data", "motions", "motion classes: slow, medium, fast", &C::data, &DataSection::motions));
        t.push_back(bind("data", "cameras", "camera classes: static, pan_tilt, zoom, complex", &C::data,
                         &DataSection::cameras));
        t.push_back(bind("data", "frames", "frames per video", &C::data, &DataSection::frames));
        t.push_back(bind("data", "height", "frame height in pixels", &C::data, &DataSection::height));
        t.push_back(bind("data", "width", "frame width in pixels", &C::data, &DataSection::width));
        t.push_back(bind("data", "chunk_len", "frames per chunk", &C::data, &DataSection::chunk_len));
        t.push_back(bind("data", "blob_sigma", "blob radius in pixels, 0 for 0.08 * min(height, width)", &C::data,
                         &DataSection::blob_sigma));
        t.push_back(bind("data", "background", "constant background intensity", &C::data, &DataSection::background));
        t.push_back(bind("data", "hist_bins", "histogram bins for cut detection", &C::data, &DataSection::hist_bins));
        t.push_back(bind("data", "cut_threshold", "L1 histogram distance that marks a cut", &C::data,
                         &DataSection::cut_threshold));

        t.push_back(bind("model", "time_embed", "sinusoidal time embedding width (even)", &C::model,
                         &ModelSection::time_embed));
        t.push_back(bind("model", "hidden", "hidden layer widths", &C::model, &ModelSection::hidden));
        t.push_back(bind("model", "init_scale", "weight init scale relative to 1/sqrt(fan_in)", &C::model,
                         &ModelSection::init_scale));

        t.push_back(bind("pretrain", "steps", "noise-to-data optimisation steps", &C::pretrain, &PretrainSection::steps));
        t.push_back(bind("pretrain", "batch_size", "pairs per step", &C::pretrain, &PretrainSection::batch_size));
        t.push_back(bind("pretrain", "lr", "peak learning rate", &C::pretrain, &PretrainSection::lr));
        t.push_back(bind("pretrain", "schedule", "constant, linear or cosine", &C::pretrain, &PretrainSection::schedule));

        t.push_back(bind("train", "algorithm", "alg1_oc_ti, alg2_plain, alg3_oc_only or conventional_baseline",
                         &C::train, &TrainSection::algorithm));
        t.push_back(bind("train", "rho", "target inversion probability", &C::train, &TrainSection::rho));
        t.push_back(bind("train", "coupling", "inherent or independent", &C::train, &TrainSection::coupling));
        t.push_back(bind("train", "steps", "optimisation steps", &C::train, &TrainSection::steps));
        t.push_back(bind("train", "batch_size", "pairs per step", &C::train, &TrainSection::batch_size));
        t.push_back(bind("train", "lr", "peak learning rate", &C::train, &TrainSection::lr));
        t.push_back(bind("train", "schedule", "constant, linear or cosine", &C::train, &TrainSection::schedule));
        t.push_back(bind("train", "beta1", "AdamW first moment decay", &C::train, &TrainSection::beta1));
        t.push_back(bind("train", "beta2", "AdamW second moment decay", &C::train, &TrainSection::beta2));
        t.push_back(bind("train", "eps", "AdamW epsilon", &C::train, &TrainSection::eps));
        t.push_back(bind("train", "weight_decay", "decoupled weight decay", &C::train, &TrainSection::weight_decay));
        t.push_back(bind("train", "timestep", "uniform or logit_normal", &C::train, &TrainSection::timestep));
        t.push_back(bind("train", "logit_location", "logit-normal mean", &C::train, &TrainSection::logit_location));
        t.push_back(bind("train", "logit_scale", "logit-normal standard deviation", &C::train,
                         &TrainSection::logit_scale));
        t.push_back(bind("train", "shift", "timestep shift, 1 disables", &C::train, &TrainSection::shift));
        t.push_back(bind("train", "sigma0", "scale applied to the inverted target", &C::train, &TrainSection::sigma0));
        t.push_back(bind("train", "inversion_steps", "inversion solver steps", &C::train,
                         &TrainSection::inversion_steps));
        t.push_back(bind("train", "inversion_order", "1 (Euler) or 2", &C::train, &TrainSection::inversion_order));
        t.push_back(bind("train", "inversion_r", "probe fraction of a step for the order-2 term", &C::train,
                         &TrainSection::inversion_r));
        t.push_back(bind("train", "init", "pretrained or from_scratch", &C::train, &TrainSection::init));
        t.push_back(bind("train", "pretrained", "pretrained checkpoint", &C::train, &TrainSection::pretrained));
        t.push_back(bind("train", "inversion_cache", "directory from the invert command; empty computes in place",
                         &C::train, &TrainSection::inversion_cache));
        t.push_back(bind("train", "checkpoint_every", "steps between intermediate checkpoints (all training commands), 0 disables", &C::train,
                         &TrainSection::checkpoint_every));

        t.push_back(bind("sample", "checkpoint", "model to sample from", &C::sample, &SampleSection::checkpoint));
        t.push_back(bind("sample", "split", "train or eval", &C::sample, &SampleSection::split));
        t.push_back(bind("sample", "pair", "index of the input pair within the split", &C::sample, &SampleSection::pair));
        t.push_back(bind("sample", "nfe", "Euler steps per chunk", &C::sample, &SampleSection::nfe));
        t.push_back(bind("sample", "n_chunks", "chunks generated autoregressively", &C::sample,
                         &SampleSection::n_chunks));

        t.push_back(bind("eval", "checkpoint", "direct model to evaluate", &C::eval, &EvalSection::checkpoint));
        t.push_back(bind("eval", "baseline", "conventional baseline checkpoint, optional", &C::eval,
                         &EvalSection::baseline));
        t.push_back(bind("eval", "nfe_list", "NFE values for the sweep", &C::eval, &EvalSection::nfe_list));
        t.push_back(bind("eval", "nfe", "NFE for rollouts and the per-category table", &C::eval, &EvalSection::nfe));
        t.push_back(bind("eval", "rollout_chunks", "chunks per rollout", &C::eval, &EvalSection::rollout_chunks));

        t.push_back(bind("otplan", "split", "train or eval", &C::otplan, &OtplanSection::split));
        t.push_back(bind("otplan", "videos", "videos whose chunks enter the plan", &C::otplan, &OtplanSection::videos));
        t.push_back(bind("otplan", "mask", "none, no_self or next_only", &C::otplan, &OtplanSection::mask));
        t.push_back(bind("otplan", "fallback", "penalise masked entries instead of failing", &C::otplan,
                         &OtplanSection::fallback));
        t.push_back(bind("otplan", "penalty_factor", "masked-entry penalty multiplier", &C::otplan,
                         &OtplanSection::penalty_factor));
        t.push_back(bind("otplan", "max_size", "largest allowed problem", &C::otplan, &OtplanSection::max_size));

        t.push_back(bind("memfit", "shapes", "chunk shapes LxHxW for the scaling fit", &C::memfit,
                         &MemfitSection::shapes));

        t.push_back(bind("verify", "run", "run directory to check against its manifest", &C::verify,
                         &VerifySection::run));
        return t;
    }();
    return table;
}

}  // namespace

Config parse_config(const std::string& text, const std::string& source) {
    Config c;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t line_no = 0;
    const auto& table = key_table();
    std::vector<std::string> seen;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no) + ": ";
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(ErrorKind::config, where + "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            bool known = false;
            for (const auto& k : table) known = known || k.section == section;
            if (!known) fail(ErrorKind::config, where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(ErrorKind::config, where + "expected key = value");
        if (section.empty()) fail(ErrorKind::config, where + "key outside of a [section]");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const KeySpec* spec = nullptr;
        for (const auto& k : table)
            if (k.section == section && k.key == key) spec = &k;
        if (!spec) fail(ErrorKind::config, where + "unknown key '" + key + "' in [" + section + "]");
        const std::string full = section + "." + key;
        for (const auto& s : seen)
            if (s == full) fail(ErrorKind::config, where + "duplicate key '" + full + "'");
        seen.push_back(full);
        try {
            spec->set(c, value);
        } catch (const Error& e) {
            fail(ErrorKind::config, where + full + ": " + e.what());
        }
    }
    return c;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::config, "cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

std::string echo_config(const Config& config) {
    std::string out;
    std::string section;
    for (const auto& k : key_table()) {
        if (k.section != section) {
            section = k.section;
            out += (out.empty() ? "[" : "\n[") + section + "]\n";
        }
        out += "# " + k.doc + "\n" + k.key + " = " + k.get(config) + "\n";
    }
    return out;
}

std::vector<ConfigKeyInfo> config_keys() {
    const Config defaults;
    std::vector<ConfigKeyInfo> out;
    for (const auto& k : key_table()) out.push_back({k.section, k.key, k.get(defaults), k.doc});
    return out;
}

TrainRecipe make_recipe(const Config& config, std::uint64_t seed) {
    const auto& t = config.train;
    TrainRecipe r;
    r.algorithm = t.algorithm;
    r.rho = t.rho;
    r.coupling.kind = t.coupling;
    r.steps = t.steps;
    r.batch_size = t.batch_size;
    r.schedule = t.schedule;
    r.lr = t.lr;
    r.adam = {t.beta1, t.beta2, t.eps, t.weight_decay};
    r.timestep = {t.timestep, t.logit_location, t.logit_scale, t.shift};
    r.codec.sigma0 = t.sigma0;
    r.inversion = {t.inversion_steps, t.inversion_order, t.inversion_r};
    r.seed = seed;
    r.init = t.init;
    r.checkpoint_every = t.checkpoint_every;
    return r;
}

PretrainOptions make_pretrain_options(const Config& config, std::uint64_t seed) {
    PretrainOptions o;
    o.steps = config.pretrain.steps;
    o.batch_size = config.pretrain.batch_size;
    o.lr = config.pretrain.lr;
    o.schedule = config.pretrain.schedule;
    o.adam = {config.train.beta1, config.train.beta2, config.train.eps, config.train.weight_decay};
    o.timestep = {config.train.timestep, config.train.logit_location, config.train.logit_scale, config.train.shift};
    o.seed = seed;
    o.init_scale = config.model.init_scale;
    o.checkpoint_every = config.train.checkpoint_every;
    return o;
}

NetConfig make_net_config(const Config& config, std::size_t state_dim) {
    NetConfig n;
    n.state_dim = state_dim;
    n.time_embed = config.model.time_embed;
    n.hidden = config.model.hidden;
    n.validate();
    return n;
}

}  // namespace fc2s
