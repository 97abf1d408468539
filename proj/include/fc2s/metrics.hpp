#pragma once

#include <cstddef>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fc2s/coupling.hpp"
#include "fc2s/flow.hpp"

namespace fc2s {

// Polyline length over chord length, minus one. 0 when the chord is below 1e-12.
double path_curvature(std::span<const Tensor> states);
double path_curvature(const TrajectoryRecord& trajectory);

double endpoint_mse(const Tensor& generated, const Tensor& ground_truth);

// sqrt(n * OT objective) between two equal-size chunk sets, i.e. the root of the
// minimum total squared distance over perfect matchings.
double batch_w2(const std::vector<Tensor>& a, const std::vector<Tensor>& b, const OtOptions& options = {});

struct SeamMetrics {
    double jump = 0.0;   // MSE(last input frame, first generated frame)
    double accel = 0.0;  // mean squared second difference across the seam
};

// Chunks are [L, H, W]; the input needs at least two frames.
SeamMetrics seam_metrics(const Tensor& input_chunk, const Tensor& generated_chunk);

// Mean squared second difference of the blob centroid track over the seam and
// inside the generated chunk.
double motion_continuity(const Tensor& input_chunk, const Tensor& generated_chunk);

struct EvalReport {
    std::vector<std::pair<std::string, double>> metrics;
    std::string config_hash;
    std::size_t sample_count = 0;

    double get(const std::string& name) const;
    void set(const std::string& name, double value);
};

// Generates a continuation of x0 with the given number of function evaluations.
using ContinuationSampler = std::function<Tensor(const Tensor& x0, std::size_t nfe, TrajectoryRecord* trajectory)>;
ContinuationSampler direct_sampler(const VectorFieldNet& net);

// One report per NFE: endpoint_mse, w2, curvature, seam_jump, seam_accel (means over the set).
std::vector<EvalReport> nfe_sweep(const ContinuationSampler& sampler, std::span<const ChunkPair> eval_set,
                                  std::span<const std::size_t> nfe_list, const std::string& config_hash = "");
void write_sweep_csv(std::ostream& out, std::span<const std::size_t> nfe_list, const std::vector<EvalReport>& reports);

// Sum of all layer widths, input included (activation units per forward pass, batch 1).
std::size_t activation_cost(std::span<const std::size_t> widths);
std::size_t activation_cost(const NetConfig& config);

struct ScalingFit {
    std::vector<std::pair<double, double>> points;  // (V, cost)
    double k = 0.0;  // slope per 1e6 volume units
    double b = 0.0;
    double residual_norm = 0.0;
};

// Ordinary least squares of cost on V / 1e6.
ScalingFit ols_fit(std::vector<std::pair<double, double>> points);

// Formats a double so that it round-trips exactly.
std::string format_double(double v);

}  // namespace fc2s
