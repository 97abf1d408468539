#include "fc2s/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "fc2s/error.hpp"

namespace fc2s {

double path_curvature(std::span<const Tensor> states) {
    if (states.size() < 2) fail(ErrorKind::degenerate, "curvature needs at least two states");
    double length = 0.0;
    for (std::size_t k = 0; k + 1 < states.size(); ++k)
        length += std::sqrt(squared_distance(states[k + 1].data(), states[k].data()));
    const double chord = std::sqrt(squared_distance(states.back().data(), states.front().data()));
    if (chord < 1e-12) return 0.0;
    return std::max(0.0, length / chord - 1.0);
}

double path_curvature(const TrajectoryRecord& trajectory) { return path_curvature(trajectory.states); }

double endpoint_mse(const Tensor& generated, const Tensor& ground_truth) {
    require_same_shape(generated, ground_truth, "endpoint_mse");
    return squared_distance(generated.data(), ground_truth.data()) / static_cast<double>(generated.size());
}

double batch_w2(const std::vector<Tensor>& a, const std::vector<Tensor>& b, const OtOptions& options) {
    if (a.size() != b.size()) fail(ErrorKind::shape, "batch_w2 needs equal set sizes");
    const auto plan = solve_ot_exact(cost_matrix(a, b), options);
    return std::sqrt(static_cast<double>(a.size()) * plan.objective);
}

namespace {

void check_chunks(const Tensor& input, const Tensor& generated) {
    if (input.rank() != 3 || generated.rank() != 3 || input.dim(1) != generated.dim(1) ||
        input.dim(2) != generated.dim(2))
        fail(ErrorKind::shape, "seam metrics need [L, H, W] chunks with a shared frame shape");
    if (input.dim(0) < 2) fail(ErrorKind::degenerate, "seam metrics need at least two input frames");
}

}  // namespace

SeamMetrics seam_metrics(const Tensor& input, const Tensor& generated) {
    check_chunks(input, generated);
    const std::size_t plane = input.dim(1) * input.dim(2);
    const std::size_t L = input.dim(0);
    const double* last = input.raw().data() + (L - 1) * plane;
    const double* before = input.raw().data() + (L - 2) * plane;
    const double* first = generated.raw().data();
    SeamMetrics m;
    for (std::size_t i = 0; i < plane; ++i) {
        const double step_in = last[i] - before[i];
        const double step_out = first[i] - last[i];
        m.jump += step_out * step_out;
        m.accel += (step_out - step_in) * (step_out - step_in);
    }
    m.jump /= static_cast<double>(plane);
    m.accel /= static_cast<double>(plane);
    return m;
}

double motion_continuity(const Tensor& input, const Tensor& generated) {
    check_chunks(input, generated);
    const std::size_t L = input.dim(0);
    const std::vector<std::size_t> frame_shape{input.dim(1), input.dim(2)};
    // Generated frames can dip below zero; negative intensity carries no mass.
    const auto centroid = [&](const Tensor& chunk, std::size_t k) {
        Tensor frame = chunk.slice(k, k + 1).reshaped(frame_shape);
        for (double& v : frame.raw()) v = std::max(v, 0.0);
        return blob_centroid(frame);
    };
    std::vector<Point2> track;
    for (std::size_t k = 0; k < L; ++k) track.push_back(centroid(input, k));
    for (std::size_t k = 0; k < generated.dim(0); ++k) track.push_back(centroid(generated, k));
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t k = L - 1; k + 1 < track.size(); ++k) {
        const double ar = track[k + 1].row - 2.0 * track[k].row + track[k - 1].row;
        const double ac = track[k + 1].col - 2.0 * track[k].col + track[k - 1].col;
        total += ar * ar + ac * ac;
        ++count;
    }
    return total / static_cast<double>(count);
}

double EvalReport::get(const std::string& name) const {
    for (const auto& [k, v] : metrics)
        if (k == name) return v;
    fail(ErrorKind::config, "report has no metric '" + name + "'");
}

void EvalReport::set(const std::string& name, double value) {
    if (!std::isfinite(value)) fail(ErrorKind::numeric, "metric '" + name + "' is not finite");
    for (auto& [k, v] : metrics) {
        if (k == name) {
            v = value;
            return;
        }
    }
    metrics.emplace_back(name, value);
}

ContinuationSampler direct_sampler(const VectorFieldNet& net) {
    return [&net](const Tensor& x0, std::size_t nfe, TrajectoryRecord* traj) {
        return sample_continuation(net, x0, nfe, traj);
    };
}

std::vector<EvalReport> nfe_sweep(const ContinuationSampler& sampler, std::span<const ChunkPair> eval_set,
                                  std::span<const std::size_t> nfe_list, const std::string& config_hash) {
    if (nfe_list.empty()) fail(ErrorKind::config, "NFE sweep needs at least one NFE value");
    if (eval_set.empty()) fail(ErrorKind::config, "NFE sweep needs a non-empty evaluation set");
    std::vector<EvalReport> reports;
    for (std::size_t nfe : nfe_list) {
        double mse = 0.0, curvature = 0.0, jump = 0.0, accel = 0.0;
        std::vector<Tensor> generated, truth;
        for (const auto& pair : eval_set) {
            TrajectoryRecord traj;
            Tensor g = sampler(pair.x0, nfe, &traj);
            mse += endpoint_mse(g, pair.x1);
            curvature += path_curvature(traj);
            const auto seam = seam_metrics(pair.x0, g);
            jump += seam.jump;
            accel += seam.accel;
            generated.push_back(std::move(g));
            truth.push_back(pair.x1);
        }
        const double n = static_cast<double>(eval_set.size());
        EvalReport r;
        r.config_hash = config_hash;
        r.sample_count = eval_set.size();
        r.set("endpoint_mse", mse / n);
        r.set("w2", batch_w2(generated, truth));
        r.set("curvature", curvature / n);
        r.set("seam_jump", jump / n);
        r.set("seam_accel", accel / n);
        reports.push_back(std::move(r));
    }
    return reports;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_sweep_csv(std::ostream& out, std::span<const std::size_t> nfe_list, const std::vector<EvalReport>& reports) {
    if (nfe_list.size() != reports.size()) fail(ErrorKind::shape, "sweep CSV: NFE list and reports differ in length");
    out << "nfe,endpoint_mse,w2,curvature,seam_jump,seam_accel\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        out << nfe_list[i] << ',' << format_double(r.get("endpoint_mse")) << ',' << format_double(r.get("w2")) << ','
            << format_double(r.get("curvature")) << ',' << format_double(r.get("seam_jump")) << ','
            << format_double(r.get("seam_accel")) << '\n';
    }
}

std::size_t activation_cost(std::span<const std::size_t> widths) {
    std::size_t total = 0;
    for (std::size_t w : widths) total += w;
    return total;
}

std::size_t activation_cost(const NetConfig& config) {
    const auto w = config.widths();
    return activation_cost(std::span<const std::size_t>(w));
}

ScalingFit ols_fit(std::vector<std::pair<double, double>> points) {
    if (points.size() < 2) fail(ErrorKind::degenerate, "OLS fit needs at least two points");
    const double n = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [v, c] : points) {
        mx += v / 1e6;
        my += c;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [v, c] : points) {
        const double dx = v / 1e6 - mx;
        sxx += dx * dx;
        sxy += dx * (c - my);
    }
    if (sxx == 0.0) fail(ErrorKind::degenerate, "OLS fit is rank deficient: all V values are equal");
    ScalingFit fit;
    fit.k = sxy / sxx;
    fit.b = my - fit.k * mx;
    double rss = 0.0;
    for (const auto& [v, c] : points) {
        const double r = c - (fit.k * v / 1e6 + fit.b);
        rss += r * r;
    }
    fit.residual_norm = std::sqrt(rss);
    fit.points = std::move(points);
    return fit;
}

}  // namespace fc2s
