#include <cmath>

#include <gtest/gtest.h>

#include "prism/benchmarks.hpp"
#include "test_support.hpp"

using namespace prism;
namespace pt = prism::testing;

namespace {

/// Q = (1/2W) sum_ij (A_ij - k_i k_j / 2W) [c_i = c_j]
double double_sum_modularity(const Graph& g, const Labels& c) {
    const Matrix& a = g.weights();
    const double two_w = a.sum();
    const Vector k = a.rowwise().sum();
    double q = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (c[static_cast<std::size_t>(i)] == c[static_cast<std::size_t>(j)]) q += a(i, j) - k(i) * k(j) / two_w;
    return q / two_w;
}

Graph disjoint_cliques(Eigen::Index m, bool bridge) {
    Matrix w = Matrix::Zero(2 * m, 2 * m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            if (i != j) w(i, j) = w(m + i, m + j) = 1.0;
    if (bridge) w(m - 1, m) = w(m, m - 1) = 1.0;
    return Graph(w);
}

Graph single_edge() {
    Matrix w(2, 2);
    w << 0, 1, 1, 0;
    return Graph(w);
}

bool swap_invariant(const Graph& g, std::size_t m) {
    const auto n = g.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (g.weight(i, j) != g.weight((i + m) % n, (j + m) % n)) return false;
    return true;
}

} // namespace

TEST(DualNetwork, ExactSymmetryAtConstruction) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto net = generate_dual_network(20, 0.4, 0.1, seed);
        EXPECT_EQ(net.graph.size(), 40u);
        EXPECT_TRUE(swap_invariant(net.graph, 20));
        EXPECT_TRUE(is_connected(net.graph));
        EXPECT_LE(duality_defect(laplacian(net.graph), net.true_operator), 1e-10);
    }
}

TEST(DualNetwork, SeedSevenZeroDefect) {
    const auto net = generate_dual_network(20, 0.4, 0.1, 7);
    EXPECT_LE(duality_defect(laplacian(net.graph), net.true_operator), 1e-10);
    const auto proj = commutant_projection(laplacian(net.graph), net.true_operator);
    EXPECT_EQ(proj.projected, laplacian(net.graph));
    EXPECT_LE(proj.defect_before, 1e-10);
}

TEST(DualNetwork, DeterministicPerSeed) {
    EXPECT_EQ(generate_dual_network(10, 0.5, 0.2, 3).graph, generate_dual_network(10, 0.5, 0.2, 3).graph);
    EXPECT_FALSE(generate_dual_network(10, 0.5, 0.2, 3).graph == generate_dual_network(10, 0.5, 0.2, 4).graph);
}

TEST(DualNetwork, ForcedDisconnectionFails) {
    try {
        generate_dual_network(2, 1.0, 0.0, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DegenerateGraph);
    }
    EXPECT_THROW(generate_dual_network(1, 0.5, 0.5, 1), Error);
    EXPECT_THROW(generate_dual_network(4, 1.5, 0.5, 1), Error);
}

TEST(DualNetwork, PositiveModularityForAssortativeDensities) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto net = generate_dual_network(20, 0.4, 0.1, seed);
        const double q = modularity(net.graph, net.partition);
        EXPECT_NEAR(q, double_sum_modularity(net.graph, net.partition), 1e-12);
        EXPECT_GT(q, 0.0);
    }
}

TEST(Rewire, ZeroFractionAndForcedCases) {
    const auto net = generate_dual_network(10, 0.5, 0.2, 1);
    EXPECT_EQ(rewire(net.graph, 0.0, 5), net.graph);
    EXPECT_EQ(rewire(single_edge(), 1.0, 5), single_edge());
    EXPECT_THROW(rewire(Graph::empty(3), 0.5, 1), Error);
    EXPECT_THROW(rewire(net.graph, 1.5, 1), Error);
}

TEST(Rewire, PreservesEdgeCountAndIsDeterministic) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Graph g = pt::random_graph(rng, static_cast<Eigen::Index>(3 + rng.below(30)), 0.3);
        if (g.edge_count() == 0) continue;
        const double f = rng.uniform();
        const Graph r = rewire(g, f, 77);
        EXPECT_EQ(r.edge_count(), g.edge_count());
        EXPECT_NEAR(r.weights().sum(), g.weights().sum(), 1e-9);
        EXPECT_EQ(r, rewire(g, f, 77));
    }
}

TEST(Rewire, BreaksTrueSymmetry) {
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto net = generate_dual_network(20, 0.4, 0.1, seed);
        mean += duality_defect(laplacian(rewire(net.graph, 0.2, seed + 100)), net.true_operator);
    }
    EXPECT_GT(mean / 10.0, 0.0);
}

TEST(IndexReversal, Examples) {
    EXPECT_EQ(*index_reversal_operator(2).permutation(), (std::vector<std::size_t>{1, 0}));
    EXPECT_EQ(*index_reversal_operator(3).permutation(), (std::vector<std::size_t>{2, 1, 0}));
    const auto p40 = index_reversal_operator(40);
    for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ((*p40.permutation())[i], 39 - i);
    EXPECT_THROW(index_reversal_operator(0), Error);
}

TEST(Modularity, SingleCommunityIsZero) {
    const auto net = generate_dual_network(10, 0.5, 0.2, 2);
    EXPECT_NEAR(modularity(net.graph, Labels(20, 0)), 0.0, 1e-15);
}

TEST(Modularity, DisjointEqualCliques) {
    const Graph g = disjoint_cliques(5, false);
    Labels truth(10, 0);
    std::fill(truth.begin() + 5, truth.end(), 1);
    const double oracle = double_sum_modularity(g, truth);
    EXPECT_NEAR(oracle, 0.5, 1e-15);
    EXPECT_NEAR(modularity(g, truth), oracle, 1e-15);
}

TEST(Modularity, MatchesDoubleSumOnRandomGraphs) {
    Rng rng(17);
    int checked = 0;
    while (checked < 100) {
        const auto n = static_cast<Eigen::Index>(2 + rng.below(30));
        const Graph g = pt::random_graph(rng, n, 0.3);
        if (g.edge_count() == 0) continue;
        Labels c(static_cast<std::size_t>(n));
        const auto k = 1 + rng.below(5);
        for (auto& x : c) x = static_cast<int>(rng.below(k));
        const double q = modularity(g, c);
        EXPECT_NEAR(q, double_sum_modularity(g, c), 1e-12);
        EXPECT_GE(q, -1.0);
        EXPECT_LE(q, 1.0);
        ++checked;
    }
}

TEST(Modularity, Errors) {
    EXPECT_THROW(modularity(Graph::empty(3), Labels(3, 0)), Error);
    EXPECT_THROW(modularity(single_edge(), Labels(3, 0)), Error);
}

TEST(FlipEdges, CountZeroAndCompleteGraph) {
    const auto kc = karate_club();
    EXPECT_EQ(flip_edges(kc.graph, 0, 1), kc.graph);
    Matrix full = Matrix::Ones(4, 4) - Matrix::Identity(4, 4);
    for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_EQ(flip_edges(Graph(full), 1, seed).edge_count(), 5u);
}

TEST(FlipEdges, ChangesEdgeCountByAtMostCount) {
    const auto kc = karate_club();
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const std::size_t count = seed % 12;
        const Graph g = flip_edges(kc.graph, count, seed);
        const auto diff = static_cast<long>(g.edge_count()) - 78;
        EXPECT_LE(static_cast<std::size_t>(std::abs(diff)), count);
        EXPECT_EQ(g, flip_edges(kc.graph, count, seed));
    }
}

TEST(FlipEdges, KarateFivePercentIsThreeFlips) {
    EXPECT_EQ(static_cast<std::size_t>(std::floor(0.05 * 78 + 1e-9)), 3u);
    NoiseConfig cfg;
    cfg.levels = {0.05};
    cfg.trials = 1;
    EXPECT_EQ(noise_benchmark(cfg).rows[0].flips, 3u);
}

TEST(FiedlerBipartition, Examples) {
    const Graph cliques = disjoint_cliques(4, true);
    const auto labels = fiedler_bipartition(cliques);
    for (int i = 0; i < 8; ++i) EXPECT_EQ(labels[i] == labels[0], i < 4);
    const auto pair = fiedler_bipartition(single_edge());
    EXPECT_NE(pair[0], pair[1]);
    EXPECT_THROW(fiedler_bipartition(disjoint_cliques(3, false)), Error);
}

TEST(FiedlerBipartition, KarateCleanMisses2Of34) {
    const auto kc = karate_club();
    EXPECT_NEAR(accuracy(fiedler_bipartition(kc.graph), kc.truth), 32.0 / 34.0, 1e-15);
}

TEST(Rmt, FallbackWhenNothingClearsTheEdge) {
    // two disjoint K_5: spectrum {0, 0, 5 x 8}, mean 4, edge 16
    const auto r = rmt_denoise(disjoint_cliques(5, false));
    EXPECT_NEAR(r.upper_edge, 16.0, 1e-12);
    EXPECT_EQ(r.surviving, 0u);
    EXPECT_TRUE(r.fallback);
    EXPECT_LE(r.denoised.norm(), 1e-12);
}

TEST(Rmt, SurvivingComponentsDriveClustering) {
    // a star has spectrum {0, 1 x (n-2), n}; for n = 12 the edge is
    // 4 * 22 / 12 = 7.33 so only the hub mode survives, still a fallback
    Matrix star = Matrix::Zero(12, 12);
    for (int i = 1; i < 12; ++i) star(0, i) = star(i, 0) = 1.0;
    const auto r = rmt_denoise(Graph(star));
    EXPECT_EQ(r.surviving, 1u);
    EXPECT_TRUE(r.fallback);

    // disjoint stars with 7 and 6 leaves: spectra {0, 1 x 6, 8} and
    // {0, 1 x 5, 7}; edge 4 * 26 / 15 = 6.93, so 7 and 8 survive
    Matrix stars = Matrix::Zero(15, 15);
    for (int i = 1; i <= 7; ++i) stars(0, i) = stars(i, 0) = 1.0;
    for (int i = 9; i <= 14; ++i) stars(8, i) = stars(i, 8) = 1.0;
    const auto two = rmt_denoise(Graph(stars));
    EXPECT_NEAR(two.upper_edge, 4.0 * 26.0 / 15.0, 1e-12);
    EXPECT_EQ(two.surviving, 2u);
    EXPECT_FALSE(two.fallback);
    ASSERT_TRUE(two.cluster_vector.has_value());
    // the smaller surviving mode lives on the 6-leaf star
    const Vector& v = *two.cluster_vector;
    EXPECT_LE(v.head(8).norm(), 1e-9);
    EXPECT_GT(v.tail(7).norm(), 0.99);
    const Matrix& d = two.denoised;
    EXPECT_LE((d - d.transpose()).norm(), 1e-10);
}

TEST(Rmt, KarateCleanFallsBackToRawFiedler) {
    const auto kc = karate_club();
    const auto r = rmt_denoise(kc.graph);
    EXPECT_TRUE(r.fallback);
    EXPECT_EQ(rmt_bipartition(kc.graph), fiedler_bipartition(kc.graph));
}

TEST(Accuracy, Examples) {
    Labels x(34, 0);
    for (std::size_t i = 17; i < 34; ++i) x[i] = 1;
    EXPECT_EQ(accuracy(x, x), 1.0);
    Labels inverted = x;
    for (auto& v : inverted) v = 1 - v;
    EXPECT_EQ(accuracy(inverted, x), 1.0);
    Labels one_wrong = x;
    one_wrong[3] = 1;
    EXPECT_NEAR(accuracy(one_wrong, x), 33.0 / 34.0, 1e-15);
    EXPECT_THROW(accuracy(Labels{0, 1}, Labels{0}), Error);
    EXPECT_THROW(accuracy(Labels{0, 2}, Labels{0, 1}), Error);
}

TEST(Accuracy, PermutationInvariantOnRandomLabels) {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        Labels x(1 + rng.below(50));
        for (auto& v : x) v = static_cast<int>(rng.below(2));
        Labels flipped = x;
        for (auto& v : flipped) v = 1 - v;
        EXPECT_EQ(accuracy(x, x), 1.0);
        EXPECT_EQ(accuracy(flipped, x), 1.0);
    }
}

TEST(Karate, Shape) {
    const auto kc = karate_club();
    EXPECT_EQ(kc.graph.size(), 34u);
    EXPECT_EQ(kc.graph.edge_count(), 78u);
    EXPECT_TRUE(is_connected(kc.graph));
    EXPECT_EQ(kc.truth.size(), 34u);
    EXPECT_EQ(std::count(kc.truth.begin(), kc.truth.end(), 0), 17);
}

TEST(RewireExperiment, ZeroFractionOnly) {
    RewireConfig cfg;
    cfg.fractions = {0.0};
    cfg.seeds = replicate_seeds(1, 5);
    const auto report = rewire_experiment(cfg);
    ASSERT_EQ(report.rows.size(), 1u);
    EXPECT_LE(report.rows[0].defect_true, 1e-10);
}

TEST(RewireExperiment, TrueDefectRisesFasterThanIndexDefect) {
    RewireConfig cfg;
    cfg.seeds = replicate_seeds(0, 20);
    const auto report = rewire_experiment(cfg);
    ASSERT_EQ(report.rows.size(), 5u);
    for (std::size_t k = 1; k < report.rows.size(); ++k) {
        EXPECT_GE(report.rows[k].defect_true, report.rows[k - 1].defect_true);
        EXPECT_GT(report.rows[k].fraction, report.rows[k - 1].fraction);
    }
    for (const auto& row : report.rows) {
        EXPECT_GE(row.defect_true, 0.0);
        EXPECT_LE(row.defect_index, 2.0);
    }
    EXPECT_GE(report.sensitivity_true / report.sensitivity_index, 2.0);
    EXPECT_GT(report.sensitivity_modularity, 0.0);
}

TEST(RewireExperiment, RejectsBadFractions) {
    RewireConfig cfg;
    cfg.seeds = {1};
    cfg.fractions = {0.2, 0.1};
    EXPECT_THROW(rewire_experiment(cfg), Error);
    cfg.fractions = {};
    EXPECT_THROW(rewire_experiment(cfg), Error);
}

TEST(NoiseBenchmark, CleanLevel) {
    NoiseConfig cfg;
    cfg.levels = {0.0};
    cfg.trials = 3;
    const auto report = noise_benchmark(cfg);
    const auto& row = report.rows.at(0);
    EXPECT_EQ(row.prism.mean, 1.0);
    EXPECT_NEAR(row.baseline.mean, 32.0 / 34.0, 1e-15);
    EXPECT_EQ(row.trials, 3u);
}

TEST(NoiseBenchmark, FlipBaseSetsFlipCounts) {
    NoiseConfig cfg;
    cfg.levels = {0.05, 0.1};
    cfg.trials = 1;
    const auto edges = noise_benchmark(cfg);
    EXPECT_EQ(edges.rows[0].flips, 3u);
    EXPECT_EQ(edges.rows[1].flips, 7u);
    cfg.flip_base = FlipBase::NodePairs;
    const auto pairs = noise_benchmark(cfg);
    EXPECT_EQ(pairs.rows[0].flips, 28u);  // floor(0.05 * 561)
    EXPECT_EQ(pairs.rows[1].flips, 56u);
    EXPECT_EQ(parse_flip_base("pairs"), FlipBase::NodePairs);
    EXPECT_THROW(parse_flip_base("nodes"), Error);
}

TEST(NoiseBenchmark, ThreadCountDoesNotChangeResults) {
    NoiseConfig cfg;
    cfg.levels = {0.05, 0.2};
    cfg.trials = 10;
    cfg.seed = 9;
    setenv("PRISM_THREADS", "1", 1);
    const auto serial = noise_benchmark(cfg);
    setenv("PRISM_THREADS", "4", 1);
    const auto threaded = noise_benchmark(cfg);
    unsetenv("PRISM_THREADS");
    for (std::size_t k = 0; k < serial.rows.size(); ++k) {
        EXPECT_EQ(serial.rows[k].prism.mean, threaded.rows[k].prism.mean);
        EXPECT_EQ(serial.rows[k].baseline.std, threaded.rows[k].baseline.std);
        EXPECT_EQ(serial.rows[k].resampled, threaded.rows[k].resampled);
    }
}

TEST(NoiseBenchmark, AccuraciesInRange) {
    NoiseConfig cfg;
    cfg.trials = 5;
    const auto report = noise_benchmark(cfg);
    for (const auto& row : report.rows)
        for (const auto* s : {&row.baseline, &row.rmt, &row.prism}) {
            EXPECT_GE(s->mean, 0.5);
            EXPECT_LE(s->mean, 1.0);
        }
}

TEST(Slope, LeastSquares) {
    EXPECT_NEAR(least_squares_slope({0, 1, 2, 3}, {1, 3, 5, 7}), 2.0, 1e-15);
    EXPECT_EQ(least_squares_slope({1}, {4}), 0.0);
}
