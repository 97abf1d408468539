#include "fc2s/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fc2s/error.hpp"

namespace fc2s {

namespace fs = std::filesystem;

void write_manifest(const std::string& path, const DatasetManifest& m) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot open " + path + " for writing");
    out << "fc2s-manifest\t" << m.version << '\t' << m.chunk_len << '\t' << m.height << '\t' << m.width << '\n';
    for (const auto& r : m.records) {
        out << r.path << '\t' << r.video_id << '\t' << r.chunk_index << '\t' << to_string(r.motion) << '\t'
            << to_string(r.camera) << '\n';
    }
    if (!out) fail(ErrorKind::io, "manifest write failed for " + path);
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open manifest " + path);
    DatasetManifest m;
    std::string line, tag;
    if (!std::getline(in, line)) fail(ErrorKind::io, path + ": empty manifest");
    {
        std::istringstream hs(line);
        if (!(hs >> tag >> m.version >> m.chunk_len >> m.height >> m.width) || tag != "fc2s-manifest")
            fail(ErrorKind::io, path + ": bad manifest header");
        if (m.version != DatasetManifest::kVersion)
            fail(ErrorKind::io, path + ": unsupported manifest version " + std::to_string(m.version));
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string f;
        while (std::getline(ls, f, '\t')) fields.push_back(f);
        if (fields.size() != 5)
            fail(ErrorKind::io, path + ":" + std::to_string(lineno) + ": expected 5 tab-separated fields");
        ManifestRecord r;
        r.path = fields[0];
        try {
            r.video_id = std::stoull(fields[1]);
            r.chunk_index = std::stoull(fields[2]);
        } catch (const std::exception&) {
            fail(ErrorKind::io, path + ":" + std::to_string(lineno) + ": bad numeric field");
        }
        r.motion = parse_motion_class(fields[3]);
        r.camera = parse_camera_class(fields[4]);
        m.records.push_back(std::move(r));
    }
    return m;
}

void save_pair(const std::string& path, const ChunkPair& pair) { save_tensor(path, stack({pair.x0, pair.x1})); }

ChunkPair load_pair(const std::string& path) {
    const Tensor t = load_tensor(path);
    if (t.rank() != 4 || t.dim(0) != 2) fail(ErrorKind::io, path + ": expected a [2, L, H, W] pair tensor");
    ChunkPair p;
    const std::vector<std::size_t> chunk_shape(t.shape().begin() + 1, t.shape().end());
    p.x0 = t.slice(0, 1).reshaped(chunk_shape);
    p.x1 = t.slice(1, 2).reshaped(chunk_shape);
    return p;
}

Dataset load_dataset(const std::string& manifest_path) {
    const DatasetManifest m = read_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    Dataset ds;
    ds.chunk_len = m.chunk_len;
    ds.height = m.height;
    ds.width = m.width;
    const std::vector<std::size_t> expect{m.chunk_len, m.height, m.width};
    for (const auto& r : m.records) {
        ChunkPair p = load_pair((base / r.path).string());
        if (p.x0.shape() != expect)
            fail(ErrorKind::io, r.path + ": chunk shape " + shape_string(p.x0.shape()) + " does not match manifest " +
                                    shape_string(expect));
        p.video_id = r.video_id;
        p.chunk_index = r.chunk_index;
        p.motion = r.motion;
        p.camera = r.camera;
        ds.pairs.push_back(std::move(p));
    }
    return ds;
}

}  // namespace fc2s
