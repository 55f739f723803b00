#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prism/duality.hpp"
#include "prism/graph.hpp"

namespace prism {

struct AlternatingConfig {
    double defect_tolerance = 1e-4;
    double step_tolerance = 1e-6;
    std::size_t max_outer_iterations = 50;
    double penalty_weight = 10.0;
    std::size_t inner_gradient_steps = 200;
    double inner_step_tolerance = 1e-8;

    void validate() const {
        if (!(defect_tolerance > 0.0) || !(step_tolerance > 0.0) || !(inner_step_tolerance > 0.0))
            fail(ErrorKind::InvalidArgument, "tolerances must be positive");
        if (!(penalty_weight > 0.0)) fail(ErrorKind::InvalidArgument, "penalty weight must be positive");
        if (max_outer_iterations < 1 || inner_gradient_steps < 1)
            fail(ErrorKind::InvalidArgument, "iteration counts must be at least 1");
    }
};

// ---------------------------------------------------------------------------
// Fiedler pairing

struct FiedlerPairing {
    std::vector<std::size_t> permutation;   // sigma, an involution
    std::optional<std::size_t> fixed_point; // median node, odd n only
    std::vector<std::size_t> order;         // nodes by ascending Fiedler value
};

/// Values closer than this are treated as tied in the Fiedler ranking.
inline constexpr double kFiedlerTieTolerance = 1e-10;

/// Nodes sorted by ascending `values`. Runs of values within the tie
/// tolerance of the run's first value are ordered by node index, so
/// rounding noise between structurally equivalent nodes cannot reorder them.
inline std::vector<std::size_t> rank_nodes(const Vector& values) {
    std::vector<std::size_t> order(static_cast<std::size_t>(values.size()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return values(static_cast<Eigen::Index>(a)) < values(static_cast<Eigen::Index>(b));
    });
    for (std::size_t start = 0; start < order.size();) {
        const double anchor = values(static_cast<Eigen::Index>(order[start]));
        std::size_t stop = start + 1;
        while (stop < order.size() && values(static_cast<Eigen::Index>(order[stop])) - anchor <= kFiedlerTieTolerance)
            ++stop;
        std::sort(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(stop));
        start = stop;
    }
    return order;
}

/// Pairs the node ranked k with the node ranked n+1-k by Fiedler value.
inline FiedlerPairing fiedler_pairing(const Matrix& lap) {
    const Vector v = fiedler_vector(lap);
    FiedlerPairing out;
    out.order = rank_nodes(v);
    const std::size_t n = out.order.size();
    out.permutation.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k) out.permutation[out.order[k]] = out.order[n - 1 - k];
    if (n % 2 == 1) out.fixed_point = out.order[n / 2];
    return out;
}

inline FiedlerPairing fiedler_pairing(const Graph& g) {
    if (g.size() < 2) fail(ErrorKind::TooSmall, "Fiedler pairing needs at least 2 nodes");
    return fiedler_pairing(laplacian(g));
}

inline DualityOperator fiedler_duality_operator(const Matrix& lap) {
    return DualityOperator::from_permutation(fiedler_pairing(lap).permutation);
}

inline DualityOperator fiedler_duality_operator(const Graph& g) {
    return DualityOperator::from_permutation(fiedler_pairing(g).permutation);
}

// ---------------------------------------------------------------------------
// Snapping and the P-step

/// Nearest symmetric involution by spectral sign; zero eigenvalues map to +1.
/// A result within 1e-9 of a permutation matrix is returned as that exact
/// permutation.
inline DualityOperator snap_to_involution(const Matrix& m) {
    require_square(m, "matrix");
    if (!all_finite(m)) fail(ErrorKind::NonFinite, "cannot snap a non-finite matrix");
    const Matrix sym = 0.5 * (m + m.transpose());
    const auto eig = symmetric_eig(sym);
    const double zero_band = 1e-12 * std::max(1.0, eig.eigenvalues.cwiseAbs().maxCoeff());
    Vector signs(eig.eigenvalues.size());
    for (Eigen::Index k = 0; k < signs.size(); ++k) signs(k) = eig.eigenvalues(k) < -zero_band ? -1.0 : 1.0;
    Matrix snapped = eig.eigenvectors * signs.asDiagonal() * eig.eigenvectors.transpose();
    snapped = 0.5 * (snapped + snapped.transpose()).eval();

    Matrix rounded = snapped.array().round().matrix();
    if ((snapped - rounded).cwiseAbs().maxCoeff() <= 1e-9) {
        if (auto sigma = as_permutation(rounded)) {
            bool involutive = true;
            for (std::size_t i = 0; i < sigma->size(); ++i) involutive &= (*sigma)[(*sigma)[i]] == i;
            if (involutive) return DualityOperator::from_permutation(std::move(*sigma));
        }
    }
    return validate_involution(snapped);
}

/// f(P) = ||[Lp, P]||_F^2 + mu ||P^2 - I||_F^2
inline double p_step_objective(const Matrix& lp, const Matrix& p, double mu) {
    const Matrix c = lp * p - p * lp;
    const Matrix e = p * p - Matrix::Identity(p.rows(), p.cols());
    return c.squaredNorm() + mu * e.squaredNorm();
}

/// Analytic gradient of `p_step_objective` for symmetric Lp, projected
/// onto symmetric matrices.
inline Matrix p_step_gradient(const Matrix& lp, const Matrix& p, double mu) {
    const Matrix c = lp * p - p * lp;
    const Matrix e = p * p - Matrix::Identity(p.rows(), p.cols());
    Matrix g = 2.0 * (lp * c - c * lp) + 2.0 * mu * (p * e + e * p);
    return 0.5 * (g + g.transpose());
}

namespace detail {

inline double inner(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

/// L-BFGS with Armijo backtracking over symmetric matrices.
inline Matrix minimize_p_objective(const Matrix& lp, const Matrix& start, const AlternatingConfig& cfg) {
    constexpr std::size_t memory = 8;
    const double mu = cfg.penalty_weight;
    Matrix x = start;
    double fx = p_step_objective(lp, x, mu);
    Matrix gx = p_step_gradient(lp, x, mu);
    if (!std::isfinite(fx) || !gx.allFinite()) fail(ErrorKind::NonFinite, "P-step objective is not finite");

    std::deque<Matrix> s_hist, y_hist;
    std::deque<double> rho_hist;
    for (std::size_t it = 0; it < cfg.inner_gradient_steps; ++it) {
        const double gnorm = gx.norm();
        if (gnorm <= 1e-12 * std::max(1.0, fx) || fx == 0.0) break;

        // two-loop recursion
        Matrix d = gx;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t k = s_hist.size(); k-- > 0;) {
            alpha[k] = rho_hist[k] * inner(s_hist[k], d);
            d -= alpha[k] * y_hist[k];
        }
        if (!s_hist.empty()) d *= inner(s_hist.back(), y_hist.back()) / y_hist.back().squaredNorm();
        else d /= std::max(1.0, gnorm);
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
            const double beta = rho_hist[k] * inner(y_hist[k], d);
            d += (alpha[k] - beta) * s_hist[k];
        }
        d = -d;
        double slope = inner(gx, d);
        if (!(slope < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = -gx / std::max(1.0, gnorm);
            slope = inner(gx, d);
        }

        double t = 1.0;
        Matrix xn;
        double fn = 0.0;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
            xn = x + t * d;
            fn = p_step_objective(lp, xn, mu);
            if (std::isfinite(fn) && fn <= fx + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;

        Matrix gn = p_step_gradient(lp, xn, mu);
        if (!gn.allFinite()) fail(ErrorKind::NonFinite, "P-step gradient is not finite");
        Matrix s = xn - x;
        Matrix y = gn - gx;
        const double sy = inner(s, y);
        const double improvement = fx - fn;
        x = std::move(xn);
        gx = std::move(gn);
        const double previous = fx;
        fx = fn;
        if (sy > 1e-14 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (s_hist.size() > memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        if (improvement <= cfg.inner_step_tolerance * std::max(1.0, std::abs(previous))) break;
    }
    return x;
}

} // namespace detail

/// One P-update: minimize the penalized commutator objective from p0, then
/// snap to an involution. Falls back to p0 when the snapped operator does
/// not commute with Lp at least as well as p0 did.
inline DualityOperator optimize_p_step(const Matrix& lp, const DualityOperator& p0, const AlternatingConfig& cfg) {
    cfg.validate();
    require_same_size(lp, p0);
    if (!all_finite(lp)) fail(ErrorKind::NonFinite, "Laplacian has non-finite entries");
    const double start = commutator_norm(lp, p0);
    if (start == 0.0) return p0;
    const Matrix relaxed = detail::minimize_p_objective(lp, p0.matrix(), cfg);
    DualityOperator candidate = snap_to_involution(relaxed);
    if (commutator_norm(lp, candidate) <= start + 1e-9) return candidate;
    return p0;
}

// ---------------------------------------------------------------------------
// Alternating optimization

enum class StopReason { DefectTolerance, StepTolerance, MaxIterations };

inline std::string_view to_string(StopReason r) {
    switch (r) {
    case StopReason::DefectTolerance: return "defect_tolerance";
    case StopReason::StepTolerance: return "step_tolerance";
    case StopReason::MaxIterations: return "max_iterations";
    }
    return "unknown";
}

struct LearnResult {
    DualityOperator op;
    Matrix projected;
    double initial_defect = 0.0;
    std::vector<double> defect_trajectory;     // delta(L, P_t), t = 1..iterations
    std::vector<double> objective_trajectory;  // ||[L'_t, P_t]||_F
    bool converged = false;
    std::size_t iterations = 0;
    StopReason stop_reason = StopReason::MaxIterations;
};

/// Alternates the closed-form commutant projection with the P-step.
inline LearnResult alternate(const Matrix& l, const DualityOperator& p0, const AlternatingConfig& cfg = {}) {
    cfg.validate();
    require_same_size(l, p0);
    if ((l - l.transpose()).norm() > 1e-9 * l.norm()) fail(ErrorKind::NotSymmetric, "Laplacian is not symmetric");

    const double initial = duality_defect(l, p0);
    DualityOperator p = p0;
    std::vector<double> defects, objectives;
    double previous = initial;
    StopReason reason = StopReason::MaxIterations;
    for (std::size_t t = 1; t <= cfg.max_outer_iterations; ++t) {
        const Matrix lp = commutant_projection(l, p).projected;
        p = optimize_p_step(lp, p, cfg);
        objectives.push_back(commutator_norm(lp, p));
        const double delta = duality_defect(l, p);
        defects.push_back(delta);
        if (delta < cfg.defect_tolerance) {
            reason = StopReason::DefectTolerance;
            break;
        }
        if (std::abs(delta - previous) < cfg.step_tolerance) {
            reason = StopReason::StepTolerance;
            break;
        }
        previous = delta;
    }
    const std::size_t iterations = defects.size();
    return LearnResult{p,
                       commutant_projection(l, p).projected,
                       initial,
                       std::move(defects),
                       std::move(objectives),
                       reason != StopReason::MaxIterations,
                       iterations,
                       reason};
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json operator_to_json(const DualityOperator& p) {
    nlohmann::ordered_json j;
    j["n"] = p.size();
    j["plus_dim"] = p.plus_dim();
    j["minus_dim"] = p.minus_dim();
    if (const auto& sigma = p.permutation()) {
        j["kind"] = "pairing";
        auto pairs = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < sigma->size(); ++i)
            if ((*sigma)[i] >= i) pairs.push_back({i, (*sigma)[i]});
        j["pairs"] = std::move(pairs);
    } else {
        j["kind"] = "dense";
        auto rows = nlohmann::ordered_json::array();
        for (Eigen::Index i = 0; i < p.matrix().rows(); ++i) {
            auto row = nlohmann::ordered_json::array();
            for (Eigen::Index k = 0; k < p.matrix().cols(); ++k) row.push_back(p.matrix()(i, k));
            rows.push_back(std::move(row));
        }
        j["matrix"] = std::move(rows);
    }
    return j;
}

inline nlohmann::ordered_json to_json(const LearnResult& r) {
    nlohmann::ordered_json j;
    j["operator"] = operator_to_json(r.op);
    j["trajectory"] = r.defect_trajectory;
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["initial_defect"] = r.initial_defect;
    j["objective_trajectory"] = r.objective_trajectory;
    j["stop_reason"] = std::string(to_string(r.stop_reason));
    j["final_defect"] = r.defect_trajectory.empty() ? r.initial_defect : r.defect_trajectory.back();
    return j;
}

} // namespace prism
