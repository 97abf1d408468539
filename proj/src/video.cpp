#include "fc2s/video.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "fc2s/error.hpp"
#include "fc2s/rng.hpp"

namespace fc2s {

MotionClass parse_motion_class(const std::string& s) {
    if (s == "slow") return MotionClass::slow;
    if (s == "medium") return MotionClass::medium;
    if (s == "fast") return MotionClass::fast;
    fail(ErrorKind::config, "unknown motion class '" + s + "' (expected slow, medium or fast)");
}

CameraClass parse_camera_class(const std::string& s) {
    if (s == "static") return CameraClass::still;
    if (s == "pan_tilt") return CameraClass::pan_tilt;
    if (s == "zoom") return CameraClass::zoom;
    if (s == "complex") return CameraClass::complex;
    fail(ErrorKind::config, "unknown camera class '" + s + "' (expected static, pan_tilt, zoom or complex)");
}

const char* to_string(MotionClass m) {
    switch (m) {
    case MotionClass::slow: return "slow";
    case MotionClass::medium: return "medium";
    case MotionClass::fast: return "fast";
    }
    return "?";
}

const char* to_string(CameraClass c) {
    switch (c) {
    case CameraClass::still: return "static";
    case CameraClass::pan_tilt: return "pan_tilt";
    case CameraClass::zoom: return "zoom";
    case CameraClass::complex: return "complex";
    }
    return "?";
}

std::pair<double, double> speed_range(MotionClass m) {
    switch (m) {
    case MotionClass::slow: return {0.2, 0.6};
    case MotionClass::medium: return {0.6, 1.4};
    case MotionClass::fast: return {1.4, 2.8};
    }
    return {0.0, 0.0};
}

Tensor SyntheticVideo::frame(std::size_t i) const { return frames.slice(i, i + 1).reshaped({frames.dim(1), frames.dim(2)}); }

namespace {

// Reflect x into [lo, hi] as a ball bouncing elastically between the walls.
double fold(double x, double lo, double hi) {
    const double w = hi - lo;
    if (w <= 0.0) return lo;
    double y = std::fmod(x - lo, 2.0 * w);
    if (y < 0.0) y += 2.0 * w;
    if (y > w) y = 2.0 * w - y;
    return lo + y;
}

}  // namespace

SyntheticVideo gen_blob_video(const BlobVideoParams& p) {
    if (p.frames < 4) fail(ErrorKind::shape, "blob video needs at least 4 frames");
    if (p.height < 8 || p.width < 8) fail(ErrorKind::shape, "blob video frames must be at least 8x8");

    Rng rng(p.seed);
    const double H = static_cast<double>(p.height), W = static_cast<double>(p.width);
    const double sigma0 = p.blob_sigma > 0.0 ? p.blob_sigma : 0.08 * std::min(H, W);
    const double margin0 = std::min(2.5 * sigma0, 0.5 * (std::min(H, W) - 1.0));

    Point2 start;
    start.row = rng.uniform(margin0, H - 1.0 - margin0);
    start.col = rng.uniform(margin0, W - 1.0 - margin0);
    if (p.start) start = *p.start;

    Point2 vel;
    {
        const auto [lo, hi] = speed_range(p.motion);
        const double speed = rng.uniform(lo, hi);
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        vel = {speed * std::sin(angle), speed * std::cos(angle)};
    }
    if (p.velocity) vel = *p.velocity;

    Point2 pan;
    double zoom = 1.0;
    {
        const double pan_speed = rng.uniform(0.3, 0.8);
        const double pan_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double z = rng.uniform(0.995, 1.005);
        const bool has_pan = p.camera == CameraClass::pan_tilt || p.camera == CameraClass::complex;
        const bool has_zoom = p.camera == CameraClass::zoom || p.camera == CameraClass::complex;
        if (has_pan) pan = {pan_speed * std::sin(pan_angle), pan_speed * std::cos(pan_angle)};
        if (has_zoom) zoom = z;
    }

    SyntheticVideo video;
    video.motion = p.motion;
    video.camera = p.camera;
    video.seed = p.seed;
    video.frames = Tensor({p.frames, p.height, p.width}, 0.0);
    const Point2 centre{0.5 * (H - 1.0), 0.5 * (W - 1.0)};
    const std::size_t plane = p.height * p.width;

    for (std::size_t k = 0; k < p.frames; ++k) {
        const double kk = static_cast<double>(k);
        const double scale = std::pow(zoom, kk);
        const double sigma = sigma0 * scale;
        const double margin = std::min(2.5 * sigma, 0.5 * (std::min(H, W) - 1.0));
        Point2 q{start.row + kk * (vel.row + pan.row), start.col + kk * (vel.col + pan.col)};
        q.row = centre.row + scale * (q.row - centre.row);
        q.col = centre.col + scale * (q.col - centre.col);
        q.row = fold(q.row, margin, H - 1.0 - margin);
        q.col = fold(q.col, margin, W - 1.0 - margin);
        video.trajectory.push_back(q);

        double* f = video.frames.raw().data() + k * plane;
        const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
        for (std::size_t r = 0; r < p.height; ++r) {
            for (std::size_t c = 0; c < p.width; ++c) {
                const double dr = static_cast<double>(r) - q.row;
                const double dc = static_cast<double>(c) - q.col;
                const double v = p.background + std::exp(-(dr * dr + dc * dc) * inv2s2);
                f[r * p.width + c] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return video;
}

Tensor gen_lds_sequence(const Tensor& transition, const Tensor& initial, std::size_t frames, double noise,
                        std::uint64_t seed) {
    const std::size_t d = initial.size();
    if (transition.rank() != 2 || transition.dim(0) != d || transition.dim(1) != d)
        fail(ErrorKind::shape, "transition must be [d, d] with d = " + std::to_string(d));
    if (frames == 0) fail(ErrorKind::shape, "sequence needs at least one frame");
    Rng rng(seed);
    Tensor out({frames, d}, 0.0);
    std::copy(initial.raw().begin(), initial.raw().end(), out.raw().begin());
    for (std::size_t k = 1; k < frames; ++k) {
        const double* prev = out.raw().data() + (k - 1) * d;
        double* cur = out.raw().data() + k * d;
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += transition.at(i, j) * prev[j];
            cur[i] = s + (noise != 0.0 ? noise * rng.normal() : 0.0);
        }
    }
    return out;
}

Tensor gen_lds_sequence(std::uint64_t seed, std::size_t frames, std::size_t dim, double spectral_radius,
                        double noise) {
    if (!(spectral_radius > 0.0 && spectral_radius <= 1.0))
        fail(ErrorKind::config, "spectral radius must lie in (0, 1]");
    if (dim == 0) fail(ErrorKind::shape, "sequence dimension must be positive");
    Rng rng = Rng(seed).fork("lds-system");
    // Modified Gram-Schmidt on a Gaussian matrix: every eigenvalue of the
    // orthogonal factor has modulus one, so scaling sets the spectral radius exactly.
    std::vector<std::vector<double>> q(dim, std::vector<double>(dim));
    for (auto& col : q)
        for (double& v : col) v = rng.normal();
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double proj = 0.0;
            for (std::size_t k = 0; k < dim; ++k) proj += q[i][k] * q[j][k];
            for (std::size_t k = 0; k < dim; ++k) q[i][k] -= proj * q[j][k];
        }
        double n = 0.0;
        for (double v : q[i]) n += v * v;
        n = std::sqrt(n);
        for (double& v : q[i]) v /= n;
    }
    Tensor A({dim, dim}, 0.0);
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) A.at(i, j) = spectral_radius * q[j][i];

    Tensor x0({dim}, 0.0);
    double n = 0.0;
    for (double& v : x0.raw()) {
        v = rng.normal();
        n += v * v;
    }
    for (double& v : x0.raw()) v /= std::sqrt(n);
    return gen_lds_sequence(A, x0, frames, noise, Rng(seed).fork("lds-noise").next_u64());
}

std::vector<double> intensity_histogram(const Tensor& frame, std::size_t bins) {
    if (bins < 2) fail(ErrorKind::config, "histogram needs at least 2 bins");
    std::vector<double> h(bins, 0.0);
    for (double v : frame.raw()) {
        const double c = std::clamp(v, 0.0, 1.0);
        std::size_t b = static_cast<std::size_t>(c * static_cast<double>(bins));
        h[std::min(b, bins - 1)] += 1.0;
    }
    for (double& v : h) v /= static_cast<double>(frame.size());
    return h;
}

std::vector<std::size_t> detect_scene_cuts(const Tensor& frames, std::size_t bins, double threshold) {
    if (bins < 2) fail(ErrorKind::config, "scene detection needs at least 2 bins");
    if (frames.rank() != 3) fail(ErrorKind::shape, "scene detection expects [F, H, W] frames");
    std::vector<std::size_t> cuts;
    std::vector<double> prev;
    for (std::size_t i = 0; i < frames.dim(0); ++i) {
        auto h = intensity_histogram(frames.slice(i, i + 1), bins);
        if (i > 0) {
            double l1 = 0.0;
            for (std::size_t b = 0; b < bins; ++b) l1 += std::abs(h[b] - prev[b]);
            if (l1 > threshold) cuts.push_back(i);
        }
        prev = std::move(h);
    }
    return cuts;
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> segments(std::size_t frames, const std::vector<std::size_t>& cuts) {
    std::vector<std::size_t> bounds{0};
    for (std::size_t c : cuts)
        if (c > bounds.back() && c < frames) bounds.push_back(c);
    bounds.push_back(frames);
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i + 1 < bounds.size(); ++i) out.emplace_back(bounds[i], bounds[i + 1]);
    return out;
}

}  // namespace

std::vector<ChunkPair> chunk_video(const Tensor& frames, std::size_t chunk_len, const std::vector<std::size_t>& cuts,
                                   std::uint64_t video_id) {
    if (chunk_len == 0) fail(ErrorKind::config, "chunk length must be positive");
    if (frames.rank() != 3) fail(ErrorKind::shape, "chunking expects [F, H, W] frames");
    std::vector<ChunkPair> pairs;
    std::size_t index = 0;
    for (auto [begin, end] : segments(frames.dim(0), cuts)) {
        for (std::size_t s = begin; s + 2 * chunk_len <= end; s += 2 * chunk_len) {
            ChunkPair p;
            p.x0 = frames.slice(s, s + chunk_len);
            p.x1 = frames.slice(s + chunk_len, s + 2 * chunk_len);
            p.video_id = video_id;
            p.chunk_index = index++;
            p.start_frame = s;
            pairs.push_back(std::move(p));
        }
    }
    return pairs;
}

std::vector<LabeledChunk> consecutive_chunks(const Tensor& frames, std::size_t chunk_len,
                                             const std::vector<std::size_t>& cuts, std::uint64_t video_id) {
    if (chunk_len == 0) fail(ErrorKind::config, "chunk length must be positive");
    if (frames.rank() != 3) fail(ErrorKind::shape, "chunking expects [F, H, W] frames");
    std::vector<LabeledChunk> out;
    std::size_t index = 0;
    bool first_segment = true;
    for (auto [begin, end] : segments(frames.dim(0), cuts)) {
        if (!first_segment) ++index;
        first_segment = false;
        for (std::size_t s = begin; s + chunk_len <= end; s += chunk_len)
            out.push_back({frames.slice(s, s + chunk_len), {video_id, index++}});
    }
    return out;
}

Point2 blob_centroid(const Tensor& frame) {
    if (frame.rank() != 2) fail(ErrorKind::shape, "centroid expects a [H, W] frame");
    const std::size_t H = frame.dim(0), W = frame.dim(1);
    double mass = 0.0, sr = 0.0, sc = 0.0;
    for (std::size_t r = 0; r < H; ++r) {
        for (std::size_t c = 0; c < W; ++c) {
            const double v = frame[r * W + c];
            mass += v;
            sr += v * static_cast<double>(r);
            sc += v * static_cast<double>(c);
        }
    }
    if (!(mass > 0.0)) fail(ErrorKind::degenerate, "centroid of a frame with no positive mass");
    return {sr / mass, sc / mass};
}

void write_pgm(const std::string& path, const Tensor& image, double lo, double hi) {
    if (image.rank() != 2) fail(ErrorKind::shape, "PGM export expects a [H, W] image");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot open " + path + " for writing");
    out << "P5\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
    const double span = hi > lo ? hi - lo : 1.0;
    for (double v : image.raw()) {
        const double u = std::clamp((v - lo) / span, 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(u * 255.0))));
    }
    if (!out) fail(ErrorKind::io, "PGM write failed for " + path);
}

}  // namespace fc2s
