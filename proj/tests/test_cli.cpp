#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fc2s/commands.hpp"
#include "fc2s/dataset.hpp"
#include "fc2s/error.hpp"
#include "oracles.hpp"

using namespace fc2s;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

struct Workspace {
    fs::path root;
    Config config;

    explicit Workspace(const std::string& name) : root(fs::temp_directory_path() / ("fc2s-cli-" + name)) {
        fs::remove_all(root);
        fs::create_directories(root);
        config.run.out = (root / "runs").string();
        config.run.seed = 11;
        config.data.frames = 8;
        config.data.height = 8;
        config.data.width = 8;
        config.data.chunk_len = 2;
        config.data.blob_sigma = 1.0;
        config.data.motions = {MotionClass::slow};
        config.data.cameras = {CameraClass::still};
        config.data.videos_per_class = 2;
        config.data.eval_videos_per_class = 1;
        config.model.time_embed = 4;
        config.model.hidden = {8};
        config.pretrain.steps = 20;
        config.train.steps = 20;
        config.train.lr = 1e-3;
        config.train.inversion_steps = 5;
    }

    std::string run(const std::string& command) {
        std::ostringstream log;
        return run_command(command, config, log);
    }
    void gen() { config.data.dir = run("gen-data") + "/data"; }
    std::string pretrain() { return run("pretrain") + "/checkpoint.bin"; }

    // Runs the CLI binary and returns its exit status.
    int cli(const std::string& args, const std::string& config_text) {
        const fs::path cfg = root / "cli.cfg";
        std::ofstream(cfg) << config_text;
        const std::string cmd = std::string(FC2S_CLI) + " " + args + " --config " + cfg.string() + " --out " +
                                (root / "cli-runs").string() + " >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
};

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::io;
}

}  // namespace

TEST_CASE("config parsing") {
    SUBCASE("defaults and overrides") {
        const Config c = parse_config("# comment\n[train]\nrho = 0.5  # trailing\nlr=1e-3\n\n[model]\nhidden = 32, 16\n");
        CHECK(c.train.rho == 0.5);
        CHECK(c.train.lr == 1e-3);
        CHECK(c.model.hidden == std::vector<std::size_t>{32, 16});
        CHECK(c.train.algorithm == Algorithm::alg1_oc_ti);
        CHECK(c.train.beta2 == 0.99);
    }
    SUBCASE("unknown keys name the line") {
        try {
            parse_config("[train]\nrho = 0.5\n\nlearning_rate = 1\n", "x.cfg");
            FAIL("expected a config error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::config);
            CHECK(std::string(e.what()).find("x.cfg:4:") != std::string::npos);
            CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
        }
    }
    SUBCASE("malformed input") {
        CHECK(kind_of([] { parse_config("[nope]\n"); }) == ErrorKind::config);
        CHECK(kind_of([] { parse_config("seed = 1\n"); }) == ErrorKind::config);
        CHECK(kind_of([] { parse_config("[run]\nseed = -1\n"); }) == ErrorKind::config);
        CHECK(kind_of([] { parse_config("[run]\nseed = 1\nseed = 2\n"); }) == ErrorKind::config);
        CHECK(kind_of([] { parse_config("[train]\nalgorithm = alg4\n"); }) == ErrorKind::config);
        CHECK(kind_of([] { parse_config("[otplan]\nfallback = yes\n"); }) == ErrorKind::config);
        CHECK(kind_of([] { parse_config("[train]\nrho\n"); }) == ErrorKind::config);
    }
    SUBCASE("echo round trip") {
        CHECK(parse_config(echo_config(Config{})) == Config{});
        Config c;
        c.run.seed = 987654321987ULL;
        c.train.lr = 0.1 + 0.2;
        c.train.algorithm = Algorithm::alg2_plain;
        c.train.coupling = CouplingKind::independent;
        c.train.timestep = TimestepKind::logit_normal;
        c.data.cameras = {CameraClass::zoom, CameraClass::still};
        c.model.hidden = {};
        c.otplan.mask = MaskKind::next_only;
        c.memfit.shapes = {"1x2x3", "4x5x6"};
        c.sample.split = Split::train;
        c.eval.baseline = "some/path.bin";
        CHECK(parse_config(echo_config(c)) == c);
    }
    SUBCASE("every key is documented") {
        for (const auto& k : config_keys()) CHECK_FALSE(k.doc.empty());
    }
}

TEST_CASE("gen-data") {
    SUBCASE("one static slow video of 2L frames gives one pair") {
        Workspace w("gen-one");
        w.config.data.videos_per_class = 1;
        w.config.data.eval_videos_per_class = 0;
        w.config.data.frames = 2 * w.config.data.chunk_len;
        w.gen();
        CHECK(read_manifest(split_manifest(w.config.data.dir, Split::train)).records.size() == 1);
        CHECK(read_video_index(w.config.data.dir).size() == 1);
    }
    SUBCASE("full grid with ten videos per cell") {
        Workspace w("gen-grid");
        w.config.data.motions = {MotionClass::slow, MotionClass::medium, MotionClass::fast};
        w.config.data.cameras = {CameraClass::still, CameraClass::pan_tilt, CameraClass::zoom, CameraClass::complex};
        w.config.data.videos_per_class = 10;
        w.config.data.eval_videos_per_class = 0;
        w.config.data.frames = 4;
        w.config.data.height = 8;
        w.config.data.width = 8;
        w.gen();
        const auto videos = read_video_index(w.config.data.dir);
        CHECK(videos.size() == 120);
        std::set<std::uint64_t> ids;
        for (const auto& r : read_manifest(split_manifest(w.config.data.dir, Split::train)).records)
            ids.insert(r.video_id);
        CHECK(ids.size() == 120);
    }
    SUBCASE("same seed gives byte-identical dataset files") {
        Workspace w("gen-repeat");
        const std::string a = w.run("gen-data"), b = w.run("gen-data");
        CHECK(a != b);
        CHECK(slurp(fs::path(a) / kRunManifest) == slurp(fs::path(b) / kRunManifest));
        w.config.run.seed = 12;
        CHECK(slurp(fs::path(a) / kRunManifest) != slurp(fs::path(w.run("gen-data")) / kRunManifest));
    }
    SUBCASE("invalid class names are rejected") {
        Workspace w("gen-bad");
        CHECK(w.cli("gen-data", "[data]\ncameras = static, dolly\n") == 2);
    }
}

TEST_CASE("pretrain and finetune") {
    Workspace w("train");
    w.gen();
    const std::string pre = w.pretrain();

    SUBCASE("alg1 with independent coupling is rejected before any compute") {
        w.config.train.pretrained = pre;
        w.config.train.coupling = CouplingKind::independent;
        const auto before = std::distance(fs::directory_iterator(w.config.run.out), fs::directory_iterator{});
        try {
            w.run("finetune");
            FAIL("expected a config error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::config);
            CHECK(std::string(e.what()).find("requires coupling=inherent") != std::string::npos);
        }
        CHECK(std::distance(fs::directory_iterator(w.config.run.out), fs::directory_iterator{}) == before);
    }
    SUBCASE("missing pretrained checkpoint") {
        CHECK(kind_of([&] { w.run("finetune"); }) == ErrorKind::config);
        w.config.train.pretrained = (w.root / "absent.bin").string();
        CHECK(kind_of([&] { w.run("finetune"); }) == ErrorKind::io);
    }
    SUBCASE("zero steps leaves only the initial checkpoint") {
        w.config.train.pretrained = pre;
        w.config.train.steps = 0;
        w.config.train.algorithm = Algorithm::alg3_oc_only;
        const fs::path run = w.run("finetune");
        CHECK(lines(slurp(run / "loss.csv")).size() == 1);
        CHECK(load_checkpoint((run / "checkpoint.bin").string()).params() == load_checkpoint(pre).params());
        std::size_t checkpoints = 0;
        for (const auto& e : fs::directory_iterator(run)) checkpoints += e.path().extension() == ".bin";
        CHECK(checkpoints == 1);
    }
    SUBCASE("two finetunes with the same config give identical loss logs") {
        w.config.train.pretrained = pre;
        const fs::path a = w.run("finetune"), b = w.run("finetune");
        CHECK(slurp(a / "loss.csv") == slurp(b / "loss.csv"));
        CHECK(lines(slurp(a / "loss.csv")).size() == 21);
    }
    SUBCASE("the invert cache is reused and keyed by checkpoint") {
        w.config.train.pretrained = pre;
        const fs::path inv = w.run("invert");
        const fs::path cache = inv / "inversion" / file_hash(pre);
        CHECK(fs::is_directory(cache));
        const fs::path direct = w.run("finetune");
        w.config.train.inversion_cache = cache.string();
        const fs::path cached = w.run("finetune");
        CHECK(slurp(direct / "loss.csv") == slurp(cached / "loss.csv"));
        CHECK_FALSE(fs::exists(cached / "inversion"));
        w.config.train.inversion_cache = (inv / "inversion" / "0000000000000000").string();
        CHECK(kind_of([&] { w.run("finetune"); }) == ErrorKind::config);
    }
    SUBCASE("conventional baseline and intermediate checkpoints") {
        w.config.train.algorithm = Algorithm::conventional_baseline;
        w.config.train.checkpoint_every = 10;
        const fs::path run = w.run("finetune");
        CHECK(fs::exists(run / "checkpoint_step10.bin"));
        CHECK(fs::exists(run / "checkpoint_step20.bin"));
        const auto net = load_checkpoint((run / "checkpoint.bin").string());
        CHECK(net.config().cond_dim == net.config().state_dim);
    }
}

TEST_CASE("sample") {
    Workspace w("sample");
    w.gen();
    w.config.train.init = InitKind::from_scratch;
    w.config.train.algorithm = Algorithm::alg3_oc_only;
    w.config.train.steps = 0;
    w.config.model.init_scale = 0.0;
    w.config.sample.checkpoint = w.run("finetune") + "/checkpoint.bin";
    w.config.sample.nfe = 1;
    w.config.sample.n_chunks = 3;
    const fs::path run = w.run("sample");
    const Tensor input = load_tensor((run / "input.tensor").string());
    for (int k = 1; k <= 3; ++k) CHECK(load_tensor((run / ("chunk_" + std::to_string(k) + ".tensor")).string()) == input);
    CHECK_FALSE(fs::exists(run / "chunk_4.tensor"));
    CHECK(slurp(run / "frames" / "chunk1_f0.pgm") == slurp(run / "frames" / "input_f0.pgm"));
    CHECK(lines(slurp(run / "metrics.csv")).size() == 2);

    SUBCASE("repeat invocations are identical") {
        w.config.sample.nfe = 4;
        const fs::path a = w.run("sample"), b = w.run("sample");
        CHECK(slurp(a / kRunManifest) == slurp(b / kRunManifest));
    }
    SUBCASE("pair out of range") {
        w.config.sample.pair = 1000;
        CHECK(kind_of([&] { w.run("sample"); }) == ErrorKind::config);
    }
}

TEST_CASE("otplan") {
    Workspace w("otplan");
    w.config.data.frames = 4;  // two chunks per video
    w.config.data.videos_per_class = 3;
    w.gen();

    const auto plan_of = [](const fs::path& run) {
        std::vector<std::vector<double>> rows;
        for (const auto& line : lines(slurp(run / "plan.txt"))) {
            std::istringstream in(line);
            std::vector<double> row;
            double v;
            while (in >> v) row.push_back(v);
            if (!row.empty()) rows.push_back(row);
        }
        return rows;
    };

    SUBCASE("two videos of two chunks under no_self") {
        w.config.otplan.videos = 2;
        const auto pi = plan_of(w.run("otplan"));
        REQUIRE(pi.size() == 4);
        for (std::size_t i = 0; i < 4; ++i) CHECK(pi[i][i] == 0.0);
    }
    SUBCASE("objective matches brute force") {
        w.config.otplan.videos = 2;
        const fs::path run = w.run("otplan");
        std::vector<Tensor> chunks;
        for (const auto& v : read_video_index(w.config.data.dir)) {
            if (v.split != Split::train || chunks.size() == 4) continue;
            for (auto& c : consecutive_chunks(load_tensor((fs::path(w.config.data.dir) / v.path).string()), 2, v.cuts,
                                              v.video_id))
                chunks.push_back(c.data);
        }
        REQUIRE(chunks.size() == 4);
        std::vector<std::vector<double>> cost(4, std::vector<double>(4));
        std::vector<std::vector<bool>> allowed(4, std::vector<bool>(4, true));
        for (std::size_t i = 0; i < 4; ++i) {
            allowed[i][i] = false;
            for (std::size_t j = 0; j < 4; ++j) cost[i][j] = squared_distance(chunks[i].data(), chunks[j].data());
        }
        const auto bf = oracle::min_permutation(cost, &allowed);
        const auto stats = lines(slurp(run / "stats.csv"));
        REQUIRE(stats.size() == 2);
        const double objective = std::stod(stats[1].substr(stats[1].find(",no_self,") + 9));
        CHECK(objective == doctest::Approx(bf.best / 4.0).epsilon(1e-9));
    }
    SUBCASE("mask none gives the scaled identity") {
        w.config.otplan.mask = MaskKind::none;
        const auto pi = plan_of(w.run("otplan"));
        for (std::size_t i = 0; i < pi.size(); ++i)
            for (std::size_t j = 0; j < pi.size(); ++j) CHECK(pi[i][j] == (i == j ? 1.0 / 6.0 : 0.0));
    }
    SUBCASE("infeasible mask without fallback") {
        w.config.otplan.mask = MaskKind::next_only;
        w.config.otplan.fallback = false;
        CHECK(kind_of([&] { w.run("otplan"); }) == ErrorKind::infeasible);
    }
}

TEST_CASE("evaluate") {
    Workspace w("evaluate");
    w.config.data.motions = {MotionClass::slow, MotionClass::fast};
    w.config.data.frames = 10;
    w.gen();
    w.config.train.pretrained = w.pretrain();
    w.config.train.algorithm = Algorithm::alg3_oc_only;
    w.config.eval.checkpoint = w.run("finetune") + "/checkpoint.bin";
    w.config.eval.nfe_list = {1, 5};

    const fs::path run = w.run("evaluate");
    const auto cats = lines(slurp(run / "categories.csv"));
    CHECK(cats.size() == 13);
    CHECK(cats[1].rfind("slow,static,", 0) == 0);
    CHECK(cats[2] == "slow,pan_tilt,0,,,,");
    CHECK(lines(slurp(run / "sweep.csv")).size() == 3);
    CHECK(lines(slurp(run / "rollout_summary.csv")).size() == 5);
    CHECK(slurp(run / "summary.csv").find("slope_ratio") == std::string::npos);
    CHECK_FALSE(fs::exists(run / "scaling.csv"));

    SUBCASE("a baseline adds the slope ratio") {
        Config base_cfg = w.config;
        base_cfg.train.algorithm = Algorithm::conventional_baseline;
        std::ostringstream log;
        w.config.eval.baseline = run_command("finetune", base_cfg, log) + "/checkpoint.bin";
        const fs::path with = w.run("evaluate");
        CHECK(slurp(with / "summary.csv").find("slope_ratio,0.5\n") != std::string::npos);
        CHECK(lines(slurp(with / "scaling.csv")).size() == 3);
        CHECK(fs::exists(with / "baseline_sweep.csv"));
    }
    SUBCASE("empty eval split is an error") {
        Workspace e("evaluate-empty");
        e.config.data.eval_videos_per_class = 0;
        e.gen();
        e.config.eval.checkpoint = w.config.eval.checkpoint;
        CHECK(kind_of([&] { e.run("evaluate"); }) == ErrorKind::config);
    }
}

TEST_CASE("memfit") {
    Workspace w("memfit");
    const fs::path run = w.run("memfit");
    const auto fit = lines(slurp(run / "fit.csv"));
    REQUIRE(fit.size() == 4);
    CHECK(fit[3] == "slope_ratio,,,0.5,");
    CHECK(lines(slurp(run / "memfit.csv")).size() == 6);
    w.config.memfit.shapes = {"4x4x4", "2x8x4"};
    CHECK(kind_of([&] { w.run("memfit"); }) == ErrorKind::degenerate);
}

TEST_CASE("run directories and verify") {
    Workspace w("verify");
    const fs::path run = w.run("memfit");
    CHECK_FALSE(fs::exists(run / ".lock"));
    CHECK(parse_config(slurp(run / "config.resolved")) == w.config);
    CHECK(verify_run(run.string()).empty());
    const auto listed = lines(slurp(run / kRunManifest));
    CHECK(listed.size() == 3);  // config.resolved, fit.csv, memfit.csv

    std::ofstream(run / "notes.txt") << "unlisted";
    CHECK(verify_run(run.string()).empty());
    fs::remove(run / "notes.txt");

    std::ofstream(run / "fit.csv", std::ios::app) << "x";
    CHECK(verify_run(run.string()).size() == 1);
    fs::remove(run / "memfit.csv");
    CHECK(verify_run(run.string()).size() == 2);

    w.config.verify.run = run.string();
    CHECK(kind_of([&] { w.run("verify"); }) == ErrorKind::io);
}

TEST_CASE("command line exit codes") {
    Workspace w("exit");
    CHECK(w.cli("memfit", "[model]\nhidden = 8\n") == 0);
    CHECK(w.cli("memfit", "[model]\nhiden = 8\n") == 2);
    CHECK(w.cli("frobnicate", "") == 2);
    CHECK(std::system((std::string(FC2S_CLI) + " memfit >/dev/null 2>&1").c_str()) != 0);

    const std::string data = w.run("gen-data") + "/data";
    CHECK(w.cli("pretrain", "[data]\ndir = " + data + "\n[pretrain]\nsteps = 5\nlr = 1e300\n[model]\ntime_embed = 4\n") ==
          3);
    CHECK(w.cli("otplan", "[data]\ndir = " + data + "\n[otplan]\nmask = next_only\nfallback = false\n") == 4);
    CHECK(w.cli("finetune", "[data]\ndir = " + data + "\n[train]\nalgorithm = alg2_plain\n") == 2);
}
