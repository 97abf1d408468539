#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "fc2s/config.hpp"

namespace fc2s {

// A fresh directory named <command>-<UTC timestamp>-<config hash>, held under a
// lock file until finish() writes manifest.txt listing every artifact.
class RunDirectory {
public:
    static RunDirectory create(const std::string& root, const std::string& command, const Config& resolved);

    RunDirectory(RunDirectory&& other) noexcept;
    RunDirectory& operator=(RunDirectory&&) = delete;
    ~RunDirectory();

    const std::filesystem::path& path() const { return path_; }
    // Absolute path for an artifact; parent directories are created and the file is listed.
    std::string artifact(const std::string& relative);
    void write_text(const std::string& relative, const std::string& content);
    void finish();

private:
    explicit RunDirectory(std::filesystem::path path);

    std::filesystem::path path_;
    std::vector<std::string> artifacts_;
    bool finished_ = false;
};

inline constexpr const char* kRunManifest = "manifest.txt";

std::string file_hash(const std::string& path);

// Problems found when re-hashing the files listed in a run manifest; empty when intact.
std::vector<std::string> verify_run(const std::string& run_dir);

// Seed of one subsystem ("data", "pretrain", "train", "sample", "eval", "otplan").
std::uint64_t subsystem_seed(std::uint64_t root_seed, const std::string& subsystem);

struct VideoRecord {
    std::uint64_t video_id = 0;
    Split split = Split::train;
    MotionClass motion = MotionClass::slow;
    CameraClass camera = CameraClass::still;
    std::uint64_t seed = 0;
    std::vector<std::size_t> cuts;
    std::string path;  // relative to the dataset directory
};

// videos.csv in the dataset directory.
std::vector<VideoRecord> read_video_index(const std::string& data_dir);
std::string split_manifest(const std::string& data_dir, Split split);

// Every command returns its run directory ("" for verify) and reports progress on `log`.
std::string cmd_gen_data(const Config& config, std::ostream& log);
std::string cmd_pretrain(const Config& config, std::ostream& log);
std::string cmd_finetune(const Config& config, std::ostream& log);
std::string cmd_invert(const Config& config, std::ostream& log);
std::string cmd_sample(const Config& config, std::ostream& log);
std::string cmd_otplan(const Config& config, std::ostream& log);
std::string cmd_evaluate(const Config& config, std::ostream& log);
std::string cmd_memfit(const Config& config, std::ostream& log);
std::string cmd_verify(const Config& config, std::ostream& log);

const std::vector<std::string>& command_names();
std::string run_command(const std::string& name, const Config& config, std::ostream& log);

// Parses "LxHxW".
std::vector<std::size_t> parse_shape(const std::string& s);

}  // namespace fc2s
