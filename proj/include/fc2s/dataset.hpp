#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fc2s/video.hpp"

namespace fc2s {

struct ManifestRecord {
    std::string path;  // relative to the manifest's directory
    std::uint64_t video_id = 0;
    std::size_t chunk_index = 0;
    MotionClass motion = MotionClass::slow;
    CameraClass camera = CameraClass::still;

    friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

// Tab-separated text: a header line "fc2s-manifest <version> <L> <H> <W>",
// then one record per line in the field order of ManifestRecord.
struct DatasetManifest {
    static constexpr std::uint32_t kVersion = 1;
    std::uint32_t version = kVersion;
    std::size_t chunk_len = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<ManifestRecord> records;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

// A pair file holds one [2, L, H, W] tensor: x0 stacked over x1.
void save_pair(const std::string& path, const ChunkPair& pair);
ChunkPair load_pair(const std::string& path);

struct Dataset {
    std::size_t chunk_len = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<ChunkPair> pairs;

    std::size_t dim() const { return chunk_len * height * width; }
    bool empty() const { return pairs.empty(); }
};

// Loads every pair listed in the manifest and checks shapes against the header.
Dataset load_dataset(const std::string& manifest_path);

}  // namespace fc2s
