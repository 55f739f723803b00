#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "prism/duality.hpp"
#include "prism/graph.hpp"
#include "prism/karate.hpp"
#include "prism/learn.hpp"
#include "prism/parallel.hpp"
#include "prism/random.hpp"

namespace prism {

// ---------------------------------------------------------------------------
// Synthetic dual networks

struct SyntheticDualNetwork {
    Graph graph;
    DualityOperator true_operator;  // i <-> i + m
    Labels partition;               // 0 = group A, 1 = group B
};

inline DualityOperator group_swap_operator(std::size_t group_size) {
    std::vector<std::size_t> sigma(2 * group_size);
    for (std::size_t i = 0; i < group_size; ++i) {
        sigma[i] = i + group_size;
        sigma[i + group_size] = i;
    }
    return DualityOperator::from_permutation(std::move(sigma));
}

/// Random graph on 2m nodes whose adjacency is exactly invariant under the
/// swap i <-> i+m. Edges within group A and from A to B are sampled, and
/// every sampled edge is added together with its mirror image. Disconnected
/// draws are resampled (up to 100 attempts).
inline SyntheticDualNetwork generate_dual_network(std::size_t group_size, double edge_prob_intra,
                                                  double edge_prob_cross, std::uint64_t seed) {
    if (group_size < 2) fail(ErrorKind::InvalidArgument, "group size must be at least 2");
    if (!(edge_prob_intra >= 0.0 && edge_prob_intra <= 1.0) || !(edge_prob_cross >= 0.0 && edge_prob_cross <= 1.0))
        fail(ErrorKind::InvalidArgument, "edge probabilities must lie in [0, 1]");

    const std::size_t m = group_size;
    const auto n = static_cast<Eigen::Index>(2 * m);
    for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
        Rng rng(split_seed(seed, {attempt}));
        Matrix w = Matrix::Zero(n, n);
        auto link = [&](std::size_t a, std::size_t b) {
            w(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = 1.0;
            w(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = 1.0;
        };
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i + 1; j < m; ++j)
                if (rng.bernoulli(edge_prob_intra)) {
                    link(i, j);
                    link(i + m, j + m);
                }
        // {i, j+m} mirrors to {j, i+m}; i == j is its own mirror
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = i; j < m; ++j)
                if (rng.bernoulli(edge_prob_cross)) {
                    link(i, j + m);
                    link(j, i + m);
                }
        Graph g(std::move(w));
        if (!is_connected(g)) continue;
        Labels partition(2 * m, 0);
        std::fill(partition.begin() + static_cast<std::ptrdiff_t>(m), partition.end(), 1);
        return {std::move(g), group_swap_operator(m), std::move(partition)};
    }
    fail(ErrorKind::DegenerateGraph, "no connected dual network after 100 attempts");
}

/// Deletes floor(fraction * |E|) distinct random edges, replacing each with
/// an edge between a uniformly chosen non-adjacent pair. Edge count and the
/// multiset of weights are preserved.
///
/// Selection and insertion draw from separate streams, so for a fixed seed
/// the result at a smaller fraction is an intermediate state of the result
/// at a larger one (gradual rewiring).
inline Graph rewire(const Graph& g, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) fail(ErrorKind::InvalidArgument, "rewire fraction must lie in [0, 1]");
    auto edges = g.edges();
    if (edges.empty()) fail(ErrorKind::ZeroEdges, "cannot rewire a graph without edges");
    const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(edges.size()) + 1e-9));
    if (count == 0) return g;

    Rng select(split_seed(seed, {1}));
    Rng insert(split_seed(seed, {2}));
    Matrix w = g.weights();
    const std::size_t n = g.size();
    for (std::size_t k = 0; k < count; ++k) {
        // partial Fisher-Yates: edges[0..k] are the distinct picks so far
        const auto pick = k + static_cast<std::size_t>(select.below(edges.size() - k));
        std::swap(edges[k], edges[pick]);
        const auto [a, b] = edges[k];
        const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
        const double weight = w(ia, ib);
        w(ia, ib) = w(ib, ia) = 0.0;
        std::vector<std::pair<Eigen::Index, Eigen::Index>> open;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) == 0.0)
                    open.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        // the pair just vacated is always open
        const auto [i, j] = open[static_cast<std::size_t>(insert.below(open.size()))];
        w(i, j) = w(j, i) = weight;
    }
    return Graph(g.labels(), std::move(w));
}

/// sigma(i) = n - 1 - i
inline DualityOperator index_reversal_operator(std::size_t n) {
    if (n < 1) fail(ErrorKind::TooSmall, "index reversal needs n >= 1");
    std::vector<std::size_t> sigma(n);
    for (std::size_t i = 0; i < n; ++i) sigma[i] = n - 1 - i;
    return DualityOperator::from_permutation(std::move(sigma));
}

/// Newman-Girvan modularity, Q = sum_c (e_cc - a_c^2), weighted.
inline double modularity(const Graph& g, const Labels& partition) {
    if (partition.size() != g.size()) fail(ErrorKind::LengthMismatch, "partition length does not match node count");
    const Matrix& w = g.weights();
    const double two_w = w.sum();
    if (!(two_w > 0.0)) fail(ErrorKind::ZeroEdges, "modularity undefined without edges");

    int communities = 0;
    for (int c : partition) {
        if (c < 0) fail(ErrorKind::InvalidArgument, "negative community label");
        communities = std::max(communities, c + 1);
    }
    std::vector<double> inside(static_cast<std::size_t>(communities), 0.0);
    std::vector<double> degree(static_cast<std::size_t>(communities), 0.0);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        const auto ci = static_cast<std::size_t>(partition[static_cast<std::size_t>(i)]);
        degree[ci] += w.row(i).sum();
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            if (partition[static_cast<std::size_t>(j)] == partition[static_cast<std::size_t>(i)]) inside[ci] += w(i, j);
    }
    double q = 0.0;
    for (std::size_t c = 0; c < inside.size(); ++c) {
        const double a = degree[c] / two_w;
        q += inside[c] / two_w - a * a;
    }
    return q;
}

/// Each step removes a random existing edge or adds a random missing one
/// (unit weight) with equal probability; an impossible action falls
/// through to the other one.
inline Graph flip_edges(const Graph& g, std::size_t count, std::uint64_t seed) {
    if (count == 0) return g;
    Rng rng(seed);
    Matrix w = g.weights();
    const std::size_t n = g.size();
    for (std::size_t step = 0; step < count; ++step) {
        std::vector<std::pair<Eigen::Index, Eigen::Index>> present, absent;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                (w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0.0 ? present : absent)
                    .emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        bool remove = rng.bernoulli(0.5);
        if (remove && present.empty()) remove = false;
        if (!remove && absent.empty()) remove = true;
        if (remove && present.empty()) break;  // n < 2
        const auto& pool = remove ? present : absent;
        const auto [i, j] = pool[static_cast<std::size_t>(rng.below(pool.size()))];
        w(i, j) = w(j, i) = remove ? 0.0 : 1.0;
    }
    return Graph(g.labels(), std::move(w));
}

/// Sign split of the Fiedler vector; zero entries join the positive side
/// (label 1).
inline Labels sign_labels(const Vector& v) {
    Labels out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = v(i) < -1e-12 ? 0 : 1;
    return out;
}

inline Labels fiedler_bipartition(const Matrix& lap) { return sign_labels(fiedler_vector(lap)); }
inline Labels fiedler_bipartition(const Graph& g) { return sign_labels(fiedler_vector(g)); }

struct RmtResult {
    Matrix denoised;
    double upper_edge = 0.0;
    std::size_t surviving = 0;
    bool fallback = false;       // fewer than 2 components survived
    std::optional<Vector> cluster_vector;  // eigenvector used for clustering
};

/// Eigenvalue thresholding of L at the Marchenko-Pastur upper edge
/// sigma^2 (1 + sqrt(q))^2 with q = 1 and sigma^2 the mean eigenvalue.
inline RmtResult rmt_denoise(const Graph& g) {
    const Matrix lap = laplacian(g);
    const auto eig = symmetric_eig(lap);
    RmtResult out;
    out.upper_edge = eig.eigenvalues.mean() * 4.0;
    Vector kept = eig.eigenvalues;
    std::optional<Eigen::Index> smallest;
    for (Eigen::Index k = 0; k < kept.size(); ++k) {
        if (kept(k) < out.upper_edge || kept(k) <= 1e-12) {
            kept(k) = 0.0;
        } else {
            ++out.surviving;
            if (!smallest) smallest = k;
        }
    }
    out.denoised = eig.eigenvectors * kept.asDiagonal() * eig.eigenvectors.transpose();
    out.fallback = out.surviving < 2;
    if (!out.fallback) out.cluster_vector = eig.eigenvectors.col(*smallest);
    return out;
}

inline Labels rmt_bipartition(const Graph& g) {
    const auto r = rmt_denoise(g);
    if (r.fallback) return fiedler_bipartition(g);
    return sign_labels(*r.cluster_vector);
}

/// Best-of-two agreement between binary labelings, in [0.5, 1].
inline double accuracy(const Labels& predicted, const Labels& truth) {
    if (predicted.size() != truth.size()) fail(ErrorKind::LengthMismatch, "label vectors differ in length");
    if (truth.empty()) fail(ErrorKind::LengthMismatch, "empty labelings");
    std::size_t agree = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if ((predicted[i] != 0 && predicted[i] != 1) || (truth[i] != 0 && truth[i] != 1))
            fail(ErrorKind::NonBinary, "labels must be 0 or 1");
        agree += predicted[i] == truth[i];
    }
    const double frac = static_cast<double>(agree) / static_cast<double>(truth.size());
    return std::max(frac, 1.0 - frac);
}

// ---------------------------------------------------------------------------
// Least squares slope

inline double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) fail(ErrorKind::LengthMismatch, "slope inputs differ in length");
    if (x.size() < 2) return 0.0;
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

// ---------------------------------------------------------------------------
// Experiment 1: rewiring sweep

struct RewireRow {
    double fraction = 0.0;
    double defect_true = 0.0;
    double defect_index = 0.0;
    double modularity = 0.0;
};

struct RewireConfig {
    std::size_t group_size = 20;
    double edge_prob_intra = 0.4;
    double edge_prob_cross = 0.1;
    std::vector<double> fractions{0.0, 0.2, 0.4, 0.6, 0.8};
    std::vector<std::uint64_t> seeds;
};

struct RewireReport {
    RewireConfig config;
    std::vector<RewireRow> rows;
    double sensitivity_true = 0.0;
    double sensitivity_index = 0.0;
    double sensitivity_modularity = 0.0;  // magnitude of decline
};

inline std::vector<std::uint64_t> replicate_seeds(std::uint64_t seed, std::size_t count) {
    std::vector<std::uint64_t> out;
    for (std::size_t r = 0; r < count; ++r) out.push_back(split_seed(seed, {0x5eedULL, r}));
    return out;
}

inline RewireReport rewire_experiment(const RewireConfig& cfg) {
    if (cfg.fractions.empty()) fail(ErrorKind::InvalidArgument, "no rewiring fractions given");
    if (cfg.seeds.empty()) fail(ErrorKind::InvalidArgument, "no seeds given");
    for (std::size_t k = 0; k < cfg.fractions.size(); ++k) {
        if (!(cfg.fractions[k] >= 0.0 && cfg.fractions[k] <= 1.0))
            fail(ErrorKind::InvalidArgument, "rewiring fractions must lie in [0, 1]");
        if (k > 0 && !(cfg.fractions[k] > cfg.fractions[k - 1]))
            fail(ErrorKind::InvalidArgument, "rewiring fractions must be strictly increasing");
    }

    const std::size_t fcount = cfg.fractions.size();
    std::vector<std::vector<RewireRow>> per_seed(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), [&](std::size_t s) {
        const auto net = generate_dual_network(cfg.group_size, cfg.edge_prob_intra, cfg.edge_prob_cross, cfg.seeds[s]);
        const auto reversal = index_reversal_operator(net.graph.size());
        auto& rows = per_seed[s];
        rows.resize(fcount);
        for (std::size_t k = 0; k < fcount; ++k) {
            const Graph g = rewire(net.graph, cfg.fractions[k], split_seed(cfg.seeds[s], {0x7e01ULL}));
            const Matrix lap = laplacian(g);
            rows[k] = {cfg.fractions[k], duality_defect(lap, net.true_operator), duality_defect(lap, reversal),
                       modularity(g, net.partition)};
        }
    });

    RewireReport report;
    report.config = cfg;
    const double count = static_cast<double>(cfg.seeds.size());
    std::vector<double> xs, dt, di, q;
    for (std::size_t k = 0; k < fcount; ++k) {
        RewireRow mean{cfg.fractions[k], 0.0, 0.0, 0.0};
        for (const auto& rows : per_seed) {
            mean.defect_true += rows[k].defect_true;
            mean.defect_index += rows[k].defect_index;
            mean.modularity += rows[k].modularity;
        }
        mean.defect_true /= count;
        mean.defect_index /= count;
        mean.modularity /= count;
        report.rows.push_back(mean);
        xs.push_back(mean.fraction);
        dt.push_back(mean.defect_true);
        di.push_back(mean.defect_index);
        q.push_back(mean.modularity);
    }
    report.sensitivity_true = least_squares_slope(xs, dt);
    report.sensitivity_index = least_squares_slope(xs, di);
    report.sensitivity_modularity = -least_squares_slope(xs, q);
    return report;
}

// ---------------------------------------------------------------------------
// Experiment 2: karate club under edge noise

struct AccuracyStats {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single trial
};

struct NoiseRow {
    double level = 0.0;
    std::size_t flips = 0;
    AccuracyStats baseline, rmt, prism;
    std::size_t trials = 0;
    std::size_t resampled = 0;  // disconnected noisy draws that were redrawn
};

/// What the noise level is a fraction of when counting flips.
enum class FlipBase { Edges, NodePairs };

inline std::string to_string(FlipBase b) { return b == FlipBase::Edges ? "edges" : "pairs"; }

inline FlipBase parse_flip_base(const std::string& s) {
    if (s == "edges") return FlipBase::Edges;
    if (s == "pairs") return FlipBase::NodePairs;
    fail(ErrorKind::InvalidArgument, "flip base must be 'edges' or 'pairs', got '" + s + "'");
}

struct NoiseConfig {
    std::vector<double> levels{0.0, 0.02, 0.05, 0.10, 0.15, 0.20};
    std::size_t trials = 50;
    std::uint64_t seed = 0;
    FlipBase flip_base = FlipBase::Edges;  // floor(level * |E|)
};

struct NoiseBenchmarkReport {
    NoiseConfig config;
    std::vector<NoiseRow> rows;
};

struct TrialOutcome {
    double baseline = 0.0, rmt = 0.0, prism = 0.0;
    std::size_t resampled = 0;
};

inline AccuracyStats summarize(const std::vector<double>& xs) {
    AccuracyStats s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return s;
}

/// Runs one (level, trial) cell: perturb the clean graph, then score the raw
/// Fiedler split, the thresholded spectrum, and the split of the Laplacian
/// projected onto the commutant of the clean graph's Fiedler operator.
inline TrialOutcome noise_trial(const LabelledGraph& clean, const DualityOperator& prior, std::size_t flips,
                                std::uint64_t seed) {
    TrialOutcome out;
    for (std::uint64_t attempt = 0;; ++attempt) {
        if (attempt == 1000) fail(ErrorKind::DegenerateGraph, "noisy graph stayed disconnected for 1000 draws");
        const Graph noisy = flip_edges(clean.graph, flips, split_seed(seed, {attempt}));
        if (!is_connected(noisy)) {
            ++out.resampled;
            continue;
        }
        const Matrix lap = laplacian(noisy);
        out.baseline = accuracy(fiedler_bipartition(lap), clean.truth);
        out.rmt = accuracy(rmt_bipartition(noisy), clean.truth);
        out.prism = accuracy(fiedler_bipartition(commutant_projection(lap, prior).projected), clean.truth);
        return out;
    }
}

inline NoiseBenchmarkReport noise_benchmark(const NoiseConfig& cfg) {
    if (cfg.trials < 1) fail(ErrorKind::InvalidArgument, "need at least one trial");
    for (double e : cfg.levels)
        if (!(e >= 0.0 && e <= 1.0)) fail(ErrorKind::InvalidArgument, "noise levels must lie in [0, 1]");

    const auto clean = karate_club();
    const auto prior = fiedler_duality_operator(clean.graph);
    const double n = static_cast<double>(clean.graph.size());
    const double base =
        cfg.flip_base == FlipBase::Edges ? static_cast<double>(clean.graph.edge_count()) : n * (n - 1.0) / 2.0;
    const std::size_t cells = cfg.levels.size() * cfg.trials;
    std::vector<TrialOutcome> outcomes(cells);
    parallel_for(cells, [&](std::size_t cell) {
        const std::size_t level = cell / cfg.trials, trial = cell % cfg.trials;
        const auto flips = static_cast<std::size_t>(std::floor(cfg.levels[level] * base + 1e-9));
        outcomes[cell] = noise_trial(clean, prior, flips, split_seed(cfg.seed, {level, trial}));
    });

    NoiseBenchmarkReport report;
    report.config = cfg;
    for (std::size_t level = 0; level < cfg.levels.size(); ++level) {
        std::vector<double> b, r, p;
        NoiseRow row;
        row.level = cfg.levels[level];
        row.flips = static_cast<std::size_t>(std::floor(cfg.levels[level] * base + 1e-9));
        row.trials = cfg.trials;
        for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
            const auto& o = outcomes[level * cfg.trials + trial];
            b.push_back(o.baseline);
            r.push_back(o.rmt);
            p.push_back(o.prism);
            row.resampled += o.resampled;
        }
        row.baseline = summarize(b);
        row.rmt = summarize(r);
        row.prism = summarize(p);
        report.rows.push_back(row);
    }
    return report;
}

} // namespace prism
