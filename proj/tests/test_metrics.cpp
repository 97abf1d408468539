#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "fc2s/error.hpp"
#include "fc2s/metrics.hpp"
#include "oracles.hpp"

using namespace fc2s;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
    Tensor t(std::move(shape), 0.0);
    for (double& v : t.raw()) v = scale * rng.normal();
    return t;
}

std::vector<Tensor> random_set(Rng& rng, std::size_t n, std::size_t d) {
    std::vector<Tensor> s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(random_tensor(rng, {d}));
    return s;
}

SyntheticVideo linear_blob(std::size_t frames, Point2 velocity) {
    BlobVideoParams p;
    p.frames = frames;
    p.height = 24;
    p.width = 24;
    p.blob_sigma = 1.5;
    p.start = Point2{8.0, 8.0};
    p.velocity = velocity;
    return gen_blob_video(p);
}

}  // namespace

TEST_CASE("path_curvature") {
    SUBCASE("straight paths are flat at any resolution") {
        for (std::size_t n : {2u, 3u, 17u}) {
            std::vector<Tensor> states;
            for (std::size_t k = 0; k < n; ++k) {
                const double s = static_cast<double>(k) / static_cast<double>(n - 1);
                states.push_back(Tensor::vector({s, 2.0 * s, -s}));
            }
            CHECK(std::abs(path_curvature(states)) <= 1e-12);
        }
    }
    SUBCASE("half circle") {
        std::vector<Tensor> states;
        const int n = 4000;
        for (int k = 0; k <= n; ++k) {
            const double a = std::numbers::pi * k / n;
            states.push_back(Tensor::vector({std::cos(a), std::sin(a)}));
        }
        CHECK(std::abs(path_curvature(states) - (std::numbers::pi / 2 - 1)) <= 1e-3);
    }
    SUBCASE("random paths match direct summation and stay non-negative") {
        Rng rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            const auto states = random_set(rng, 2 + trial % 6, 3);
            double length = 0.0;
            for (std::size_t k = 0; k + 1 < states.size(); ++k) {
                double s = 0.0;
                for (std::size_t i = 0; i < 3; ++i) s += std::pow(states[k + 1][i] - states[k][i], 2);
                length += std::sqrt(s);
            }
            double chord = 0.0;
            for (std::size_t i = 0; i < 3; ++i) chord += std::pow(states.back()[i] - states.front()[i], 2);
            const double expected = length / std::sqrt(chord) - 1.0;
            const double got = path_curvature(states);
            CHECK(got >= 0.0);
            CHECK(got == doctest::Approx(expected).epsilon(1e-12));
            if (states.size() == 2) CHECK(got == 0.0);
        }
    }
    SUBCASE("closed loop has curvature zero by convention") {
        const std::vector<Tensor> states{Tensor::vector({0.0}), Tensor::vector({1.0}), Tensor::vector({0.0})};
        CHECK(path_curvature(states) == 0.0);
    }
}

TEST_CASE("endpoint_mse") {
    Rng rng(1);
    const Tensor a = random_tensor(rng, {3, 4});
    CHECK(endpoint_mse(a, a) == 0.0);
    Tensor b = a;
    for (double& v : b.raw()) v += 2.0;
    CHECK(endpoint_mse(a, b) == doctest::Approx(4.0));
    const Tensor c = random_tensor(rng, {3, 4});
    double s = 0.0;
    for (std::size_t i = 0; i < 12; ++i) s += (a.raw()[i] - c.raw()[i]) * (a.raw()[i] - c.raw()[i]);
    CHECK(endpoint_mse(a, c) == doctest::Approx(s / 12.0).epsilon(1e-14));
    CHECK_THROWS_AS(endpoint_mse(a, Tensor({12}, 0.0)), Error);
}

TEST_CASE("batch_w2") {
    Rng rng(2);
    SUBCASE("identical sets and singletons") {
        const auto s = random_set(rng, 5, 4);
        CHECK(batch_w2(s, s) == 0.0);
        auto shuffled = s;
        std::swap(shuffled[0], shuffled[3]);
        CHECK(batch_w2(s, shuffled) == 0.0);
        const Tensor a = Tensor::vector({0.0, 3.0}), b = Tensor::vector({4.0, 0.0});
        CHECK(batch_w2({a}, {b}) == doctest::Approx(5.0));
    }
    SUBCASE("brute-force oracle") {
        for (int trial = 0; trial < 30; ++trial) {
            const auto a = random_set(rng, 5, 3), b = random_set(rng, 5, 3);
            std::vector<std::vector<double>> cost(5, std::vector<double>(5));
            for (std::size_t i = 0; i < 5; ++i)
                for (std::size_t j = 0; j < 5; ++j) cost[i][j] = squared_distance(a[i].data(), b[j].data());
            const auto bf = oracle::min_permutation(cost);
            CHECK(batch_w2(a, b) == doctest::Approx(std::sqrt(bf.best)).epsilon(1e-12));
        }
    }
    SUBCASE("metric axioms on random triples") {
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t n = 1 + trial % 5;
            const auto a = random_set(rng, n, 2), b = random_set(rng, n, 2), c = random_set(rng, n, 2);
            const double ab = batch_w2(a, b), bc = batch_w2(b, c), ac = batch_w2(a, c);
            CHECK(ab == doctest::Approx(batch_w2(b, a)).epsilon(1e-12));
            CHECK(ab > 0.0);
            CHECK(ac <= ab + bc + 1e-12);
        }
    }
    CHECK_THROWS_AS(batch_w2(random_set(rng, 2, 2), random_set(rng, 3, 2)), Error);
}

TEST_CASE("seam_metrics") {
    SUBCASE("repeating the last frame gives zero jump") {
        const auto v = linear_blob(6, {0.5, 0.25});
        const Tensor input = v.frames.slice(0, 3);
        Tensor gen = v.frames.slice(2, 5);
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t i = 0; i < 24 * 24; ++i) gen.raw()[k * 576 + i] = input.raw()[2 * 576 + i];
        CHECK(seam_metrics(input, gen).jump == 0.0);
    }
    SUBCASE("static video continued statically") {
        const auto v = linear_blob(6, {0.0, 0.0});
        const auto m = seam_metrics(v.frames.slice(0, 3), v.frames.slice(3, 6));
        CHECK(m.jump == 0.0);
        CHECK(m.accel == 0.0);
    }
    SUBCASE("constant velocity continued at the same velocity") {
        const auto v = linear_blob(8, {0.05, 0.05});
        const auto m = seam_metrics(v.frames.slice(0, 4), v.frames.slice(4, 8));
        CHECK(m.jump > 0.0);
        CHECK(m.accel < 0.05 * m.jump);
        // A frozen continuation has the same jump scale but a large second difference.
        const auto frozen = seam_metrics(v.frames.slice(0, 4), v.frames.slice(3, 7));
        CHECK(frozen.accel > 10.0 * m.accel);
    }
    SUBCASE("errors") {
        const Tensor one({1, 4, 4}, 0.0), two({2, 4, 4}, 0.0);
        try {
            seam_metrics(one, two);
            FAIL("expected degenerate input");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::degenerate);
        }
        CHECK_THROWS_AS(seam_metrics(two, Tensor({2, 4, 5}, 0.0)), Error);
    }
}

TEST_CASE("motion_continuity") {
    SUBCASE("constant velocity continued perfectly") {
        const auto v = linear_blob(8, {0.7, -0.4});
        CHECK(motion_continuity(v.frames.slice(0, 4), v.frames.slice(4, 8)) <= 0.25);
    }
    SUBCASE("identical chunks repeated on a static blob") {
        const auto v = linear_blob(4, {0.0, 0.0});
        CHECK(motion_continuity(v.frames, v.frames) <= 0.25);
    }
    SUBCASE("frozen continuation equals v squared") {
        // Track ..., p - v, p, then p again: the seam second difference is -v.
        const Point2 vel{0.6, 0.8};
        const auto v = linear_blob(4, vel);
        const Tensor input = v.frames;
        const Tensor frozen = v.frames.slice(3, 4);
        const double v2 = vel.row * vel.row + vel.col * vel.col;
        CHECK(motion_continuity(input, frozen) == doctest::Approx(v2).epsilon(0.05));
    }
    SUBCASE("blank frames are degenerate") {
        const Tensor blank({3, 4, 4}, 0.0);
        try {
            motion_continuity(blank, blank);
            FAIL("expected degenerate input");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::degenerate);
        }
    }
}

TEST_CASE("activation_cost") {
    const std::vector<std::size_t> single{7, 7};
    CHECK(activation_cost(single) == 14);
    const std::vector<std::size_t> widths{4, 8, 2};
    CHECK(activation_cost(widths) == 14);
    NetConfig direct;
    direct.state_dim = 10;
    direct.time_embed = 4;
    direct.hidden = {32, 32};
    NetConfig conv = conventional_config(10, 4, {32, 32});
    CHECK(conv.input_width() - direct.input_width() == 10);
    CHECK(activation_cost(direct) == 14 + 64 + 10);
}

TEST_CASE("ols_fit") {
    SUBCASE("exact line") {
        std::vector<std::pair<double, double>> pts;
        for (double v : {1e6, 2e6, 5e6, 9e6}) pts.emplace_back(v, 2.0 * v / 1e6 + 1.0);
        const auto f = ols_fit(pts);
        CHECK(f.k == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(f.b == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(f.residual_norm <= 1e-9);
    }
    SUBCASE("two points interpolate") {
        const auto f = ols_fit({{1e6, 3.0}, {3e6, 7.0}});
        CHECK(f.k == doctest::Approx(2.0));
        CHECK(f.b == doctest::Approx(1.0));
    }
    SUBCASE("noisy points match the normal equations") {
        Rng rng(4);
        std::vector<std::pair<double, double>> pts;
        for (int i = 0; i < 5; ++i) pts.emplace_back(rng.uniform(0, 1e7), rng.uniform(0, 100));
        const auto f = ols_fit(pts);
        // Solve [[n, Sx], [Sx, Sxx]] [b, k] = [Sy, Sxy] by Cramer's rule.
        double n = 0, sx = 0, sxx = 0, sy = 0, sxy = 0;
        for (auto [v, c] : pts) {
            const double x = v / 1e6;
            n += 1;
            sx += x;
            sxx += x * x;
            sy += c;
            sxy += x * c;
        }
        const double det = n * sxx - sx * sx;
        CHECK(std::abs(f.k - (n * sxy - sx * sy) / det) <= 1e-9);
        CHECK(std::abs(f.b - (sxx * sy - sx * sxy) / det) <= 1e-9);
        double rss = 0.0;
        for (auto [v, c] : pts) rss += std::pow(c - f.k * v / 1e6 - f.b, 2);
        CHECK(f.residual_norm == doctest::Approx(std::sqrt(rss)).epsilon(1e-9));
    }
    CHECK_THROWS_AS(ols_fit({{1e6, 1.0}, {1e6, 2.0}}), Error);
    CHECK_THROWS_AS(ols_fit({{1e6, 1.0}}), Error);
}

TEST_CASE("nfe_sweep") {
    Rng rng(6);
    std::vector<ChunkPair> eval(4);
    for (auto& p : eval) {
        p.x0 = random_tensor(rng, {2, 2, 2}, 0.5);
        p.x1 = random_tensor(rng, {2, 2, 2}, 0.5);
    }
    SUBCASE("zero net returns the identity continuation") {
        NetConfig c;
        c.state_dim = 8;
        c.time_embed = 4;
        c.hidden = {8};
        const std::vector<std::size_t> nfe{1};
        const auto reports = nfe_sweep(direct_sampler(VectorFieldNet(c)), eval, nfe);
        double mse = 0.0;
        for (const auto& p : eval) mse += endpoint_mse(p.x0, p.x1);
        CHECK(reports.at(0).get("endpoint_mse") == doctest::Approx(mse / 4.0).epsilon(1e-14));
        CHECK(reports[0].get("curvature") == 0.0);
        CHECK(reports[0].sample_count == 4);
    }
    SUBCASE("exponential field error shrinks with nfe and the CSV is reproducible") {
        // Exact velocity v = x, so the true endpoint is e * x0.
        for (auto& p : eval) p.x1 = std::exp(1.0) * p.x0;
        const ContinuationSampler sampler = [](const Tensor& x0, std::size_t nfe, TrajectoryRecord* traj) {
            return sample_continuation([](const Tensor& x, double) { return x; }, x0, nfe, traj);
        };
        const std::vector<std::size_t> nfe{1, 2, 5, 10, 40};
        const auto reports = nfe_sweep(sampler, eval, nfe, "cafe");
        for (std::size_t i = 1; i < reports.size(); ++i)
            CHECK(reports[i].get("endpoint_mse") <= reports[i - 1].get("endpoint_mse"));
        std::ostringstream a, b;
        write_sweep_csv(a, nfe, reports);
        write_sweep_csv(b, nfe, nfe_sweep(sampler, eval, nfe, "cafe"));
        CHECK(a.str() == b.str());
        CHECK(a.str().rfind("nfe,endpoint_mse,w2,curvature,seam_jump,seam_accel\n", 0) == 0);
    }
    CHECK_THROWS_AS(nfe_sweep(direct_sampler(VectorFieldNet()), eval, std::vector<std::size_t>{}), Error);
}

TEST_CASE("EvalReport") {
    EvalReport r;
    r.set("a", 1.0);
    r.set("a", 2.0);
    CHECK(r.metrics.size() == 1);
    CHECK(r.get("a") == 2.0);
    CHECK_THROWS_AS(r.get("b"), Error);
    CHECK_THROWS_AS(r.set("c", std::nan("")), Error);
    CHECK(format_double(0.1) == "0.1");
}
