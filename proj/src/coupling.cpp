#include "fc2s/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "fc2s/error.hpp"

namespace fc2s {

CostMatrix cost_matrix(const std::vector<Tensor>& chunks, std::vector<ChunkLabel> labels) {
    if (chunks.empty()) fail(ErrorKind::shape, "cost matrix needs at least one chunk");
    if (!labels.empty() && labels.size() != chunks.size())
        fail(ErrorKind::shape, "cost matrix: label count does not match chunk count");
    const std::size_t n = chunks.size();
    CostMatrix c;
    c.m = Tensor({n, n}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (chunks[i].size() != chunks[0].size())
            fail(ErrorKind::shape, "cost matrix: chunk " + std::to_string(i) + " has " +
                                       std::to_string(chunks[i].size()) + " entries, expected " +
                                       std::to_string(chunks[0].size()));
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = squared_distance(chunks[i].data(), chunks[j].data());
            c.m.at(i, j) = d;
            c.m.at(j, i) = d;
        }
    }
    c.row_labels = labels;
    c.col_labels = std::move(labels);
    return c;
}

CostMatrix cost_matrix(const std::vector<Tensor>& sources, const std::vector<Tensor>& targets) {
    if (sources.empty() || targets.empty()) fail(ErrorKind::shape, "cost matrix needs non-empty chunk sets");
    const std::size_t d = sources[0].size();
    CostMatrix c;
    c.m = Tensor({sources.size(), targets.size()}, 0.0);
    for (std::size_t i = 0; i < sources.size(); ++i) {
        if (sources[i].size() != d) fail(ErrorKind::shape, "cost matrix: mixed source dimensionalities");
        for (std::size_t j = 0; j < targets.size(); ++j) {
            if (targets[j].size() != d) fail(ErrorKind::shape, "cost matrix: mixed target dimensionalities");
            c.m.at(i, j) = squared_distance(sources[i].data(), targets[j].data());
        }
    }
    return c;
}

MaskKind parse_mask_kind(const std::string& s) {
    if (s == "none") return MaskKind::none;
    if (s == "no_self") return MaskKind::no_self;
    if (s == "next_only") return MaskKind::next_only;
    fail(ErrorKind::config, "unknown mask kind '" + s + "' (expected none, no_self or next_only)");
}

const char* to_string(MaskKind k) {
    switch (k) {
    case MaskKind::none: return "none";
    case MaskKind::no_self: return "no_self";
    case MaskKind::next_only: return "next_only";
    }
    return "?";
}

std::size_t Mask::row_count(std::size_t i) const {
    return static_cast<std::size_t>(std::count(allowed.begin() + static_cast<std::ptrdiff_t>(i * n),
                                               allowed.begin() + static_cast<std::ptrdiff_t>((i + 1) * n), 1));
}

Mask make_mask(std::span<const ChunkLabel> labels, MaskKind kind) {
    const std::size_t n = labels.size();
    Mask mask = Mask::all(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            bool ok = true;
            switch (kind) {
            case MaskKind::none: break;
            case MaskKind::no_self: ok = !(labels[i] == labels[j]); break;
            case MaskKind::next_only: ok = labels[j].chunk_index == labels[i].chunk_index + 1; break;
            }
            mask.allowed[i * n + j] = ok ? 1 : 0;
        }
    }
    return mask;
}

std::vector<std::size_t> solve_assignment(const Tensor& cost) {
    if (cost.rank() != 2 || cost.dim(0) != cost.dim(1)) fail(ErrorKind::shape, "assignment needs a square matrix");
    const std::size_t n = cost.dim(0);
    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials; column 0 is the virtual source of each augmenting search.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> rows(n);
    for (std::size_t j = 1; j <= n; ++j) rows[match[j] - 1] = j - 1;
    return rows;
}

namespace {

constexpr std::size_t kNoRow = std::numeric_limits<std::size_t>::max();

bool augment(const Mask& mask, std::size_t row, std::vector<char>& seen, std::vector<std::size_t>& col_owner) {
    for (std::size_t j = 0; j < mask.n; ++j) {
        if (!mask(row, j) || seen[j]) continue;
        seen[j] = 1;
        if (col_owner[j] == kNoRow || augment(mask, col_owner[j], seen, col_owner)) {
            col_owner[j] = row;
            return true;
        }
    }
    return false;
}

// Rows left unmatched by a maximum bipartite matching on the mask (Kuhn).
std::vector<std::size_t> unmatched_rows(const Mask& mask) {
    std::vector<std::size_t> col_owner(mask.n, kNoRow), missing;
    for (std::size_t r = 0; r < mask.n; ++r) {
        std::vector<char> seen(mask.n, 0);
        if (!augment(mask, r, seen, col_owner)) missing.push_back(r);
    }
    return missing;
}

}  // namespace

TransportPlan solve_ot_exact(const CostMatrix& cost, const Mask& mask, const OtOptions& options) {
    const std::size_t n = cost.rows();
    if (cost.cols() != n) fail(ErrorKind::shape, "OT with uniform marginals needs a square cost matrix");
    if (mask.n != n) fail(ErrorKind::shape, "mask size does not match cost matrix");
    if (n > options.max_size)
        fail(ErrorKind::config, "OT problem size " + std::to_string(n) + " exceeds cap " +
                                    std::to_string(options.max_size));
    for (double v : cost.m.raw())
        if (v < 0.0) fail(ErrorKind::numeric, "OT cost matrix has a negative entry");

    if (!options.fallback) {
        const auto missing = unmatched_rows(mask);
        if (!missing.empty()) {
            std::ostringstream os;
            os << "mask admits no perfect matching; unmatched rows:";
            for (std::size_t r : missing) os << ' ' << r;
            fail(ErrorKind::infeasible, os.str());
        }
    }

    double max_allowed = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (mask(i, j)) max_allowed = std::max(max_allowed, cost.m.at(i, j));
    // Without fallback a perfect allowed matching exists, so any penalty above
    // n * max_allowed keeps forbidden entries out of the optimum.
    const double base = max_allowed > 0.0 ? max_allowed : 1.0;
    const double penalty = std::max(options.penalty_factor, 2.0 * static_cast<double>(n) + 1.0) * base;

    Tensor work = cost.m;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (!mask(i, j)) work.at(i, j) = penalty;

    TransportPlan plan;
    plan.mask = mask;
    plan.assignment = solve_assignment(work);
    plan.pi = Tensor({n, n}, 0.0);
    const double mass = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = plan.assignment[i];
        plan.pi.at(i, j) = mass;
        if (mask(i, j)) {
            plan.objective += mass * cost.m.at(i, j);
            plan.penalized_objective += mass * cost.m.at(i, j);
        } else {
            ++plan.penalized_matches;
            plan.penalized_objective += mass * penalty;
        }
    }
    if (!options.fallback && plan.penalized_matches > 0)
        fail(ErrorKind::infeasible, "assignment used a forbidden entry despite a feasible mask");
    return plan;
}

TransportPlan solve_ot_exact(const CostMatrix& cost, const OtOptions& options) {
    return solve_ot_exact(cost, Mask::all(cost.rows()), options);
}

double adjacency_mass(const TransportPlan& plan, std::span<const ChunkLabel> row_labels,
                      std::span<const ChunkLabel> col_labels) {
    const std::size_t n = plan.pi.dim(0);
    if (row_labels.size() != n || col_labels.size() != plan.pi.dim(1))
        fail(ErrorKind::shape, "adjacency_mass: labels do not match plan size");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < plan.pi.dim(1); ++j) {
            const double p = plan.pi.at(i, j);
            if (p == 0.0) continue;
            if (col_labels[j].video_id == row_labels[i].video_id &&
                col_labels[j].chunk_index == row_labels[i].chunk_index + 1)
                total += p;
        }
    }
    return total;
}

void write_plan_text(std::ostream& out, const TransportPlan& plan) {
    const std::size_t n = plan.pi.dim(0);
    out.precision(17);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < plan.pi.dim(1); ++j) out << (j ? " " : "") << plan.pi.at(i, j);
        out << '\n';
    }
}

void write_plan_pgm(const std::string& path, const TransportPlan& plan) {
    const double top = 1.0 / static_cast<double>(plan.pi.dim(0));
    write_pgm(path, plan.pi, 0.0, top);
}

std::vector<std::size_t> video_boundaries(std::span<const ChunkLabel> labels) {
    std::vector<std::size_t> out;
    for (std::size_t i = 1; i < labels.size(); ++i)
        if (labels[i].video_id != labels[i - 1].video_id) out.push_back(i);
    return out;
}

CouplingKind parse_coupling_kind(const std::string& s) {
    if (s == "independent") return CouplingKind::independent;
    if (s == "inherent") return CouplingKind::inherent;
    if (s == "minibatch_ot") return CouplingKind::minibatch_ot;
    fail(ErrorKind::config, "unknown coupling '" + s + "' (expected independent, inherent or minibatch_ot)");
}

const char* to_string(CouplingKind k) {
    switch (k) {
    case CouplingKind::independent: return "independent";
    case CouplingKind::inherent: return "inherent";
    case CouplingKind::minibatch_ot: return "minibatch_ot";
    }
    return "?";
}

CoupledBatch draw_coupled_batch(const CouplingStrategy& strategy, std::span<const ChunkPair> dataset, Rng& rng,
                                std::size_t batch_size) {
    if (dataset.empty()) fail(ErrorKind::config, "cannot draw a batch from an empty dataset");
    if (batch_size == 0) fail(ErrorKind::config, "batch size must be positive");
    const std::size_t n = dataset.size();
    CoupledBatch batch;

    switch (strategy.kind) {
    case CouplingKind::inherent: {
        std::vector<std::size_t> idx;
        if (batch_size <= n) {
            // Partial Fisher-Yates: first batch_size entries of a random permutation.
            std::vector<std::size_t> perm(n);
            for (std::size_t i = 0; i < n; ++i) perm[i] = i;
            for (std::size_t i = 0; i < batch_size; ++i) std::swap(perm[i], perm[i + rng.below(n - i)]);
            idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(batch_size));
        } else {
            batch.with_replacement = true;
            for (std::size_t i = 0; i < batch_size; ++i) idx.push_back(rng.below(n));
        }
        batch.x0_source = idx;
        batch.x1_source = idx;
        break;
    }
    case CouplingKind::independent: {
        for (std::size_t i = 0; i < batch_size; ++i) {
            batch.x0_source.push_back(rng.below(n));
            batch.x1_source.push_back(rng.below(n));
        }
        break;
    }
    case CouplingKind::minibatch_ot: {
        std::vector<std::size_t> src(batch_size), dst(batch_size);
        for (auto& i : src) i = rng.below(n);
        for (auto& j : dst) j = rng.below(n);
        std::vector<Tensor> a, b;
        for (std::size_t i : src) a.push_back(dataset[i].x0);
        for (std::size_t j : dst) b.push_back(dataset[j].x1);
        const auto plan = solve_ot_exact(cost_matrix(a, b));
        batch.x0_source = src;
        for (std::size_t i = 0; i < batch_size; ++i) batch.x1_source.push_back(dst[plan.assignment[i]]);
        break;
    }
    }
    for (std::size_t i = 0; i < batch_size; ++i) {
        batch.x0.push_back(dataset[batch.x0_source[i]].x0);
        batch.x1.push_back(dataset[batch.x1_source[i]].x1);
    }
    return batch;
}

double mean_pair_cost(const CoupledBatch& batch) {
    if (batch.size() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) s += squared_distance(batch.x0[i].data(), batch.x1[i].data());
    return s / static_cast<double>(batch.size());
}

}  // namespace fc2s
