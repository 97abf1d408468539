#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "fc2s/commands.hpp"
#include "fc2s/error.hpp"

namespace {

const char* describe(const std::string& name) {
    if (name == "gen-data") return "generate synthetic videos, detect cuts, chunk and write the dataset";
    if (name == "pretrain") return "train the noise-to-data model";
    if (name == "finetune") return "train a continuation model (alg1/alg2/alg3 or the conventional baseline)";
    if (name == "sample") return "generate continuation chunks from one input pair";
    if (name == "invert") return "invert training targets under the pretrained model and cache them";
    if (name == "otplan") return "solve the exact OT plan between chunks and export the heatmap";
    if (name == "evaluate") return "NFE sweep, rollouts, per-category metrics and the scaling fit";
    if (name == "memfit") return "fit activation cost against input volume for both designs";
    return "re-hash a run directory against its manifest";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Flow matching from current to succeeding video chunks at desk scale"};
    app.require_subcommand(0, 1);
    bool print_defaults = false;
    app.add_flag("--print-defaults", print_defaults, "print every config key with its default and exit");

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    for (const auto& name : fc2s::command_names()) {
        CLI::App* sub = app.add_subcommand(name, describe(name));
        sub->add_option("--config", config_path, "config file (key = value under [sections])")->required();
        sub->add_option("--seed", seed, "overrides run.seed");
        sub->add_option("--out", out, "overrides run.out");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (print_defaults) {
        std::cout << fc2s::echo_config(fc2s::Config{});
        return 0;
    }
    if (app.get_subcommands().empty()) {
        std::cerr << app.help();
        return 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        fc2s::Config config = fc2s::load_config(config_path);
        if (seed) config.run.seed = *seed;
        if (out) config.run.out = *out;
        const std::string run_dir = fc2s::run_command(command, config, std::cerr);
        if (!run_dir.empty()) std::cout << run_dir << "\n";
        return 0;
    } catch (const fc2s::Error& e) {
        std::cerr << "fc2s " << command << ": " << e.what() << "\n";
        return fc2s::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "fc2s " << command << ": " << e.what() << "\n";
        return 1;
    }
}
