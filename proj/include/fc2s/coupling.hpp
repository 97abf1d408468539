#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fc2s/rng.hpp"
#include "fc2s/tensor.hpp"
#include "fc2s/video.hpp"

namespace fc2s {

// Pairwise squared Euclidean costs between flattened chunks.
struct CostMatrix {
    Tensor m;  // [rows, cols]
    std::vector<ChunkLabel> row_labels;
    std::vector<ChunkLabel> col_labels;

    std::size_t rows() const { return m.dim(0); }
    std::size_t cols() const { return m.dim(1); }
};

// Square matrix over one chunk set; labels may be empty.
CostMatrix cost_matrix(const std::vector<Tensor>& chunks, std::vector<ChunkLabel> labels = {});
// Rows index `sources`, columns index `targets`.
CostMatrix cost_matrix(const std::vector<Tensor>& sources, const std::vector<Tensor>& targets);

enum class MaskKind { none, no_self, next_only };
MaskKind parse_mask_kind(const std::string& s);
const char* to_string(MaskKind k);

// Row-major n x n allowed-entry mask.
struct Mask {
    std::size_t n = 0;
    std::vector<unsigned char> allowed;

    static Mask all(std::size_t n) { return {n, std::vector<unsigned char>(n * n, 1)}; }
    bool operator()(std::size_t i, std::size_t j) const { return allowed[i * n + j] != 0; }
    std::size_t row_count(std::size_t i) const;
};

Mask make_mask(std::span<const ChunkLabel> labels, MaskKind kind);

struct OtOptions {
    bool fallback = true;
    // Forbidden entries cost penalty_factor * max allowed cost under fallback.
    double penalty_factor = 1e6;
    std::size_t max_size = 512;
};

struct TransportPlan {
    Tensor pi;  // [n, n]
    Mask mask;
    std::vector<std::size_t> assignment;  // row i -> column assignment[i]
    // Sum of pi_ij * M_ij over allowed matches only.
    double objective = 0.0;
    // Objective including the penalty paid by forbidden matches.
    double penalized_objective = 0.0;
    // Number of matches that landed on forbidden entries (fallback only).
    std::size_t penalized_matches = 0;

    std::size_t n() const { return assignment.size(); }
};

// Minimum-cost perfect assignment (shortest augmenting path with potentials).
// Scanning order favours the lowest column index among equal candidates.
std::vector<std::size_t> solve_assignment(const Tensor& cost);

// Exact OT with uniform marginals; the optimum is 1/n times a permutation matrix.
TransportPlan solve_ot_exact(const CostMatrix& cost, const Mask& mask, const OtOptions& options = {});
TransportPlan solve_ot_exact(const CostMatrix& cost, const OtOptions& options = {});

// Mass on entries whose column is the same-video immediate successor of the row.
double adjacency_mass(const TransportPlan& plan, std::span<const ChunkLabel> row_labels,
                      std::span<const ChunkLabel> col_labels);

void write_plan_text(std::ostream& out, const TransportPlan& plan);
// Gray heatmap, row = source, column = target, pi in [0, 1/n] mapped to 0..255.
void write_plan_pgm(const std::string& path, const TransportPlan& plan);
// Positions i where labels[i].video_id differs from labels[i-1].video_id.
std::vector<std::size_t> video_boundaries(std::span<const ChunkLabel> labels);

enum class CouplingKind { independent, inherent, minibatch_ot };
CouplingKind parse_coupling_kind(const std::string& s);
const char* to_string(CouplingKind k);

struct CouplingStrategy {
    CouplingKind kind = CouplingKind::inherent;
};

struct CoupledBatch {
    std::vector<Tensor> x0;
    std::vector<Tensor> x1;
    // Dataset indices the x0 / x1 entries were taken from.
    std::vector<std::size_t> x0_source;
    std::vector<std::size_t> x1_source;
    // Set when an inherent draw had to sample with replacement.
    bool with_replacement = false;

    std::size_t size() const { return x0.size(); }
};

CoupledBatch draw_coupled_batch(const CouplingStrategy& strategy, std::span<const ChunkPair> dataset, Rng& rng,
                                std::size_t batch_size);

// Mean squared distance between paired x0 and x1.
double mean_pair_cost(const CoupledBatch& batch);

}  // namespace fc2s
