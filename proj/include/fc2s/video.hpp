#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fc2s/tensor.hpp"

namespace fc2s {

enum class MotionClass { slow, medium, fast };
enum class CameraClass { still, pan_tilt, zoom, complex };

MotionClass parse_motion_class(const std::string& s);
CameraClass parse_camera_class(const std::string& s);
const char* to_string(MotionClass m);
const char* to_string(CameraClass c);

inline constexpr MotionClass kAllMotionClasses[] = {MotionClass::slow, MotionClass::medium, MotionClass::fast};
inline constexpr CameraClass kAllCameraClasses[] = {CameraClass::still, CameraClass::pan_tilt, CameraClass::zoom,
                                                     CameraClass::complex};

// Speed range in px/frame for a motion class.
std::pair<double, double> speed_range(MotionClass m);

struct Point2 {
    double row = 0.0;
    double col = 0.0;
};

struct BlobVideoParams {
    std::uint64_t seed = 0;
    std::size_t frames = 32;
    std::size_t height = 16;
    std::size_t width = 16;
    MotionClass motion = MotionClass::slow;
    CameraClass camera = CameraClass::still;
    // 0 selects 0.08 * min(height, width).
    double blob_sigma = 0.0;
    // Constant intensity added under the blob before clamping.
    double background = 0.0;
    // Overrides for the randomly drawn start point and velocity (px/frame).
    std::optional<Point2> start;
    std::optional<Point2> velocity;
};

struct SyntheticVideo {
    Tensor frames;  // [F, H, W], values in [0, 1]
    MotionClass motion = MotionClass::slow;
    CameraClass camera = CameraClass::still;
    std::uint64_t seed = 0;
    std::vector<Point2> trajectory;  // rendered blob centre per frame

    std::size_t num_frames() const { return frames.dim(0); }
    Tensor frame(std::size_t i) const;
};

SyntheticVideo gen_blob_video(const BlobVideoParams& params);

// Trajectory of x_{k+1} = A x_k + noise * N(0, I). Returns [frames, d].
Tensor gen_lds_sequence(const Tensor& transition, const Tensor& initial, std::size_t frames, double noise,
                        std::uint64_t seed);
// Random orthogonal transition scaled to the given spectral radius, random unit start.
Tensor gen_lds_sequence(std::uint64_t seed, std::size_t frames, std::size_t dim, double spectral_radius,
                        double noise = 0.0);

// L1-normalised intensity histogram of a frame over equal-width bins on [0, 1].
std::vector<double> intensity_histogram(const Tensor& frame, std::size_t bins);

// Frame indices i where the histogram L1 distance between frames i-1 and i exceeds threshold.
std::vector<std::size_t> detect_scene_cuts(const Tensor& frames, std::size_t bins = 32, double threshold = 0.4);

struct ChunkPair {
    Tensor x0;  // [L, H, W]
    Tensor x1;  // [L, H, W], the L frames right after x0
    std::uint64_t video_id = 0;
    std::size_t chunk_index = 0;
    std::size_t start_frame = 0;
    MotionClass motion = MotionClass::slow;
    CameraClass camera = CameraClass::still;

    std::size_t dim() const { return x0.size(); }
};

// Pairs tiled at stride 2L inside each cut-free segment; remainders dropped.
std::vector<ChunkPair> chunk_video(const Tensor& frames, std::size_t chunk_len, const std::vector<std::size_t>& cuts,
                                   std::uint64_t video_id = 0);

struct ChunkLabel {
    std::uint64_t video_id = 0;
    std::size_t chunk_index = 0;
    friend bool operator==(const ChunkLabel&, const ChunkLabel&) = default;
};

struct LabeledChunk {
    Tensor data;  // [L, H, W]
    ChunkLabel label;
};

// Consecutive non-overlapping L-frame chunks. Indices are consecutive within a
// segment and skip one at every cut, so chunks on either side are never adjacent.
std::vector<LabeledChunk> consecutive_chunks(const Tensor& frames, std::size_t chunk_len,
                                             const std::vector<std::size_t>& cuts, std::uint64_t video_id);

// Intensity-weighted mean (row, col) of a [H, W] frame.
Point2 blob_centroid(const Tensor& frame);

// Binary 8-bit PGM; values in [0, 1] map linearly to 0..255.
void write_pgm(const std::string& path, const Tensor& image, double lo = 0.0, double hi = 1.0);

}  // namespace fc2s
