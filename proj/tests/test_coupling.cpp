#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "fc2s/coupling.hpp"
#include "fc2s/error.hpp"
#include "oracles.hpp"

using namespace fc2s;

namespace {

Tensor random_costs(Rng& rng, std::size_t n) {
    Tensor m({n, n}, 0.0);
    for (double& v : m.raw()) v = rng.uniform(0.0, 10.0);
    return m;
}

CostMatrix wrap(Tensor m) {
    CostMatrix c;
    c.m = std::move(m);
    return c;
}

std::vector<std::vector<bool>> to_bool(const Mask& mask) {
    std::vector<std::vector<bool>> out(mask.n, std::vector<bool>(mask.n));
    for (std::size_t i = 0; i < mask.n; ++i)
        for (std::size_t j = 0; j < mask.n; ++j) out[i][j] = mask(i, j);
    return out;
}

void check_marginals(const TransportPlan& plan) {
    const std::size_t n = plan.pi.dim(0);
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0, col = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row += plan.pi.at(i, j);
            col += plan.pi.at(j, i);
        }
        CHECK(std::abs(row - 1.0 / n) <= 1e-12);
        CHECK(std::abs(col - 1.0 / n) <= 1e-12);
    }
    std::size_t nonzero = 0;
    for (double v : plan.pi.raw()) nonzero += v != 0.0;
    CHECK(nonzero == n);
}

std::vector<ChunkLabel> grid_labels(std::size_t videos, std::size_t chunks) {
    std::vector<ChunkLabel> labels;
    for (std::size_t v = 0; v < videos; ++v)
        for (std::size_t c = 0; c < chunks; ++c) labels.push_back({v, c});
    return labels;
}

}  // namespace

TEST_CASE("cost_matrix") {
    SUBCASE("two zero vectors") {
        const auto c = cost_matrix({Tensor({3}, 0.0), Tensor({3}, 0.0)});
        CHECK(c.m.raw() == std::vector<double>{0, 0, 0, 0});
    }
    SUBCASE("1-d chunks 0 and 3") {
        const auto c = cost_matrix({Tensor::vector({0.0}), Tensor::vector({3.0})});
        CHECK(c.m.raw() == std::vector<double>{0, 9, 9, 0});
    }
    SUBCASE("matches a double loop") {
        Rng rng(8);
        std::vector<Tensor> chunks;
        for (int i = 0; i < 5; ++i) {
            Tensor t({4}, 0.0);
            for (double& v : t.raw()) v = rng.normal();
            chunks.push_back(t);
        }
        const auto c = cost_matrix(chunks);
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 5; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < 4; ++k) s += (chunks[i][k] - chunks[j][k]) * (chunks[i][k] - chunks[j][k]);
                CHECK(std::abs(c.m.at(i, j) - s) <= 1e-12);
            }
            CHECK(c.m.at(i, i) == 0.0);
        }
    }
    SUBCASE("mixed dimensionalities are a shape error") {
        CHECK_THROWS_AS(cost_matrix({Tensor({3}, 0.0), Tensor({4}, 0.0)}), Error);
    }
}

TEST_CASE("make_mask") {
    SUBCASE("no_self removes the diagonal") {
        const auto labels = grid_labels(1, 4);
        const auto mask = make_mask(labels, MaskKind::no_self);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) CHECK(mask(i, j) == (i != j));
    }
    SUBCASE("next_only leaves terminal chunks without a valid column") {
        const auto labels = grid_labels(2, 3);
        const auto mask = make_mask(labels, MaskKind::next_only);
        for (std::size_t i = 0; i < 6; ++i) {
            if (labels[i].chunk_index == 2) CHECK(mask.row_count(i) == 0);
            else CHECK(mask.row_count(i) == 2);
        }
        CHECK_THROWS_AS(solve_ot_exact(wrap(Tensor({6, 6}, 1.0)), mask, {.fallback = false}), Error);
        const auto plan = solve_ot_exact(wrap(Tensor({6, 6}, 1.0)), mask, {.fallback = true});
        CHECK(plan.penalized_matches >= 2);
    }
    SUBCASE("none allows everything") {
        const auto mask = make_mask(grid_labels(3, 2), MaskKind::none);
        for (std::size_t i = 0; i < 6; ++i) CHECK(mask.row_count(i) == 6);
    }
}

TEST_CASE("solve_ot_exact") {
    SUBCASE("zero diagonal gives the identity plan") {
        Tensor m({3, 3}, std::vector<double>{0, 2, 5, 1, 0, 4, 3, 7, 0});
        const auto plan = solve_ot_exact(wrap(m));
        for (std::size_t i = 0; i < 3; ++i) CHECK(plan.pi.at(i, i) == doctest::Approx(1.0 / 3.0));
        CHECK(plan.objective == 0.0);
        check_marginals(plan);
    }
    SUBCASE("masked diagonal matches the masked brute force") {
        Tensor m({3, 3}, std::vector<double>{0, 2, 5, 1, 0, 4, 3, 7, 0});
        const auto mask = make_mask(grid_labels(1, 3), MaskKind::no_self);
        const auto plan = solve_ot_exact(wrap(m), mask, {.fallback = false});
        const auto allowed = to_bool(mask);
        const auto ref = oracle::min_permutation(oracle::to_rows(m), &allowed);
        CHECK(plan.objective * 3.0 == doctest::Approx(ref.best));
        for (std::size_t i = 0; i < 3; ++i) CHECK(plan.pi.at(i, i) == 0.0);
    }
    SUBCASE("random matrices match the permutation brute force") {
        Rng rng(1234);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t n = 1 + trial % 6;
            const Tensor m = random_costs(rng, n);
            const auto plan = solve_ot_exact(wrap(m));
            const auto ref = oracle::min_permutation(oracle::to_rows(m));
            CHECK(std::abs(plan.objective * n - ref.best) <= 1e-9);
            check_marginals(plan);
        }
    }
    SUBCASE("infeasible mask without fallback lists the unmatched rows") {
        Mask mask = Mask::all(3);
        for (std::size_t j = 0; j < 3; ++j) mask.allowed[1 * 3 + j] = 0;
        try {
            solve_ot_exact(wrap(Tensor({3, 3}, 1.0)), mask, {.fallback = false});
            FAIL("expected infeasibility");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::infeasible);
            CHECK(std::string(e.what()).find("unmatched rows: 1") != std::string::npos);
        }
    }
    SUBCASE("without fallback forbidden entries carry no mass") {
        Rng rng(77);
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t n = 2 + trial % 5;
            Mask mask = Mask::all(n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (j != (i + 1) % n && rng.uniform() < 0.5) mask.allowed[i * n + j] = 0;
            const auto plan = solve_ot_exact(wrap(random_costs(rng, n)), mask, {.fallback = false});
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (!mask(i, j)) CHECK(plan.pi.at(i, j) == 0.0);
            CHECK(plan.penalized_matches == 0);
        }
    }
    SUBCASE("size cap") {
        OtOptions opts;
        opts.max_size = 4;
        CHECK_THROWS_AS(solve_ot_exact(wrap(Tensor({5, 5}, 0.0)), opts), Error);
    }
}

TEST_CASE("adjacency_mass") {
    const auto labels = grid_labels(2, 3);
    SUBCASE("successor permutation") {
        // Rows 0,1 -> 1,2 and 3,4 -> 4,5; the terminal rows 2 and 5 take the leftovers.
        TransportPlan plan;
        plan.pi = Tensor({6, 6}, 0.0);
        const std::vector<std::size_t> to{1, 2, 0, 4, 5, 3};
        for (std::size_t i = 0; i < 6; ++i) plan.pi.at(i, to[i]) = 1.0 / 6.0;
        CHECK(adjacency_mass(plan, labels, labels) == doctest::Approx(4.0 / 6.0));
        // Pure successor pairing on a (source, target) layout reaches 1.
        const std::vector<ChunkLabel> rows{{0, 0}, {0, 1}, {1, 0}};
        const std::vector<ChunkLabel> cols{{0, 1}, {0, 2}, {1, 1}};
        TransportPlan p2;
        p2.pi = Tensor({3, 3}, 0.0);
        for (std::size_t i = 0; i < 3; ++i) p2.pi.at(i, i) = 1.0 / 3.0;
        CHECK(adjacency_mass(p2, rows, cols) == doctest::Approx(1.0));
    }
    SUBCASE("identity plan has no successor mass") {
        TransportPlan plan;
        plan.pi = Tensor({6, 6}, 0.0);
        for (std::size_t i = 0; i < 6; ++i) plan.pi.at(i, i) = 1.0 / 6.0;
        CHECK(adjacency_mass(plan, labels, labels) == 0.0);
    }
}

TEST_CASE("plan export") {
    namespace fs = std::filesystem;
    Tensor m({4, 4}, std::vector<double>{0, 1, 4, 9, 1, 0, 1, 4, 4, 1, 0, 1, 9, 4, 1, 0});
    const auto plan = solve_ot_exact(wrap(m));
    std::ostringstream os;
    write_plan_text(os, plan);
    const std::string text = os.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
    const auto path = fs::temp_directory_path() / "fc2s_plan.pgm";
    write_plan_pgm(path.string(), plan);
    CHECK(fs::file_size(path) == std::string("P5\n4 4\n255\n").size() + 16);
    fs::remove(path);
    CHECK(video_boundaries(grid_labels(3, 2)) == std::vector<std::size_t>{2, 4});
}

namespace {

std::vector<ChunkPair> toy_dataset(Rng& rng, std::size_t n, std::size_t d) {
    std::vector<ChunkPair> ds;
    for (std::size_t i = 0; i < n; ++i) {
        ChunkPair p;
        p.x0 = Tensor({d}, 0.0);
        for (double& v : p.x0.raw()) v = rng.normal();
        p.x1 = p.x0;
        for (double& v : p.x1.raw()) v += 0.1 * rng.normal();
        p.video_id = i;
        ds.push_back(p);
    }
    return ds;
}

}  // namespace

TEST_CASE("draw_coupled_batch") {
    Rng data_rng(5);
    const auto ds = toy_dataset(data_rng, 12, 6);

    SUBCASE("inherent returns stored pairs") {
        Rng rng(1);
        const auto b = draw_coupled_batch({CouplingKind::inherent}, ds, rng, 8);
        CHECK_FALSE(b.with_replacement);
        for (std::size_t i = 0; i < b.size(); ++i) {
            CHECK(b.x0_source[i] == b.x1_source[i]);
            CHECK(b.x0[i] == ds[b.x0_source[i]].x0);
            CHECK(b.x1[i] == ds[b.x1_source[i]].x1);
        }
        auto sorted = b.x0_source;
        std::sort(sorted.begin(), sorted.end());
        CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    }
    SUBCASE("oversized inherent batch samples with replacement and warns") {
        Rng rng(1);
        const auto b = draw_coupled_batch({CouplingKind::inherent}, ds, rng, 30);
        CHECK(b.with_replacement);
        CHECK(b.size() == 30);
    }
    SUBCASE("independent is reproducible") {
        Rng a(9), b(9);
        const auto x = draw_coupled_batch({CouplingKind::independent}, ds, a, 10);
        const auto y = draw_coupled_batch({CouplingKind::independent}, ds, b, 10);
        CHECK(x.x0_source == y.x0_source);
        CHECK(x.x1_source == y.x1_source);
    }
    SUBCASE("translated target pool pairs every chunk with its own translate") {
        Rng rng(3);
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t n = 2 + trial % 5;
            std::vector<Tensor> a, b;
            Tensor c({4}, 0.0);
            for (double& v : c.raw()) v = rng.normal();
            for (std::size_t i = 0; i < n; ++i) {
                Tensor x({4}, 0.0);
                for (double& v : x.raw()) v = rng.normal();
                a.push_back(x);
                b.push_back(x + c);
            }
            const auto cost = cost_matrix(a, b);
            const auto plan = solve_ot_exact(cost);
            const auto ref = oracle::min_permutation(oracle::to_rows(cost.m));
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(plan.assignment[i] == i);
                CHECK(ref.perm[i] == i);
            }
        }
    }
    SUBCASE("minibatch OT matches are optimal and never costlier than the drawn pairing") {
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            Rng rng(seed);
            const std::size_t n = 2 + seed % 5;
            const auto b = draw_coupled_batch({CouplingKind::minibatch_ot}, ds, rng, n);
            // Re-draw the same indices to rebuild the pools.
            Rng replay(seed);
            std::vector<Tensor> src, dst;
            std::vector<std::size_t> si(n), di(n);
            for (auto& i : si) i = replay.below(ds.size());
            for (auto& j : di) j = replay.below(ds.size());
            for (auto i : si) src.push_back(ds[i].x0);
            for (auto j : di) dst.push_back(ds[j].x1);
            const auto cost = cost_matrix(src, dst);
            const auto ref = oracle::min_permutation(oracle::to_rows(cost.m));
            double independent = 0.0;
            for (std::size_t i = 0; i < n; ++i) independent += cost.m.at(i, i);
            CHECK(mean_pair_cost(b) * n == doctest::Approx(ref.best).epsilon(1e-12));
            CHECK(mean_pair_cost(b) <= independent / n + 1e-12);
        }
    }
    SUBCASE("empty dataset") {
        Rng rng(1);
        CHECK_THROWS_AS(draw_coupled_batch({CouplingKind::inherent}, std::span<const ChunkPair>{}, rng, 4), Error);
    }
}
