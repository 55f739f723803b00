#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "prism/error.hpp"
#include "prism/format.hpp"

namespace prism {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_square(const Matrix& m, const char* what) {
    if (m.rows() != m.cols())
        fail(ErrorKind::DimensionMismatch,
             std::string(what) + " must be square, got " + std::to_string(m.rows()) + "x" +
                 std::to_string(m.cols()));
}

/// Undirected weighted graph on a fixed, labelled node order.
///
/// The weight matrix is symmetric (exactly), nonnegative and has a zero
/// diagonal; the constructor rejects anything else.
class Graph {
public:
    Graph() = default;

    explicit Graph(const Matrix& weights) : Graph(default_labels(weights.rows()), weights) {}

    Graph(std::vector<std::string> labels, Matrix weights)
        : labels_(std::move(labels)), weights_(std::move(weights)) {
        require_square(weights_, "weight matrix");
        if (static_cast<Eigen::Index>(labels_.size()) != weights_.rows())
            fail(ErrorKind::DimensionMismatch, "label count does not match weight matrix");
        if (!all_finite(weights_)) fail(ErrorKind::NonFinite, "weight matrix has non-finite entries");
        std::unordered_map<std::string_view, int> seen;
        for (const auto& label : labels_) {
            if (label.empty() || label.find_first_of(",\t\r\n") != std::string::npos || label.front() == '#')
                fail(ErrorKind::InvalidGraph, "node label '" + label + "' is empty or contains a separator");
            if (!seen.emplace(label, 0).second) fail(ErrorKind::InvalidGraph, "duplicate node label '" + label + "'");
        }
        const auto n = weights_.rows();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (weights_(i, i) != 0.0)
                fail(ErrorKind::InvalidGraph, "self-loop at node " + labels_[i]);
            for (Eigen::Index j = 0; j < n; ++j) {
                if (weights_(i, j) < 0.0)
                    fail(ErrorKind::InvalidGraph, "negative weight between " + labels_[i] + " and " + labels_[j]);
                if (weights_(i, j) != weights_(j, i))
                    fail(ErrorKind::InvalidGraph, "asymmetric weight between " + labels_[i] + " and " + labels_[j]);
            }
        }
    }

    static Graph empty(std::size_t n) {
        return Graph(Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
    }

    static std::vector<std::string> default_labels(Eigen::Index n) {
        std::vector<std::string> labels;
        labels.reserve(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) labels.push_back(std::to_string(i));
        return labels;
    }

    std::size_t size() const noexcept { return labels_.size(); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    const Matrix& weights() const noexcept { return weights_; }
    double weight(std::size_t i, std::size_t j) const {
        return weights_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    bool has_edge(std::size_t i, std::size_t j) const { return weight(i, j) != 0.0; }

    std::size_t edge_count() const {
        std::size_t count = 0;
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = i + 1; j < size(); ++j)
                if (has_edge(i, j)) ++count;
        return count;
    }

    /// Edges as (i, j) with i < j, in row-major order.
    std::vector<std::pair<std::size_t, std::size_t>> edges() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = i + 1; j < size(); ++j)
                if (has_edge(i, j)) out.emplace_back(i, j);
        return out;
    }

    /// Induced subgraph on `nodes`, in the given order.
    Graph subgraph(const std::vector<std::size_t>& nodes) const {
        const auto k = static_cast<Eigen::Index>(nodes.size());
        Matrix w(k, k);
        std::vector<std::string> labels;
        labels.reserve(nodes.size());
        for (Eigen::Index a = 0; a < k; ++a) {
            labels.push_back(labels_.at(nodes[a]));
            for (Eigen::Index b = 0; b < k; ++b) w(a, b) = weight(nodes[a], nodes[b]);
        }
        return Graph(std::move(labels), std::move(w));
    }

    friend bool operator==(const Graph& a, const Graph& b) {
        return a.labels_ == b.labels_ && a.weights_.rows() == b.weights_.rows() && a.weights_ == b.weights_;
    }

private:
    std::vector<std::string> labels_;
    Matrix weights_;
};

/// L = D - A with weighted degrees.
inline Matrix laplacian(const Graph& g) {
    const Matrix& a = g.weights();
    Matrix l = -a;
    l.diagonal() = a.rowwise().sum();
    return l;
}

/// Connected components of the graph whose edges are the nonzero
/// off-diagonal entries of `m`; each component is sorted ascending and
/// components are ordered by their smallest node.
inline std::vector<std::vector<std::size_t>> connected_components(const Matrix& m) {
    const auto n = static_cast<std::size_t>(m.rows());
    std::vector<int> seen(n, 0);
    std::vector<std::vector<std::size_t>> components;
    for (std::size_t start = 0; start < n; ++start) {
        if (seen[start]) continue;
        std::vector<std::size_t> component{start};
        seen[start] = 1;
        for (std::size_t head = 0; head < component.size(); ++head) {
            const auto u = static_cast<Eigen::Index>(component[head]);
            for (std::size_t v = 0; v < n; ++v) {
                if (!seen[v] && static_cast<Eigen::Index>(v) != u && m(u, static_cast<Eigen::Index>(v)) != 0.0) {
                    seen[v] = 1;
                    component.push_back(v);
                }
            }
        }
        std::sort(component.begin(), component.end());
        components.push_back(std::move(component));
    }
    return components;
}

inline std::vector<std::vector<std::size_t>> connected_components(const Graph& g) {
    return connected_components(g.weights());
}

inline bool is_connected(const Matrix& m) { return connected_components(m).size() <= 1; }
inline bool is_connected(const Graph& g) { return is_connected(g.weights()); }

/// Largest component; ties go to the component with the smallest node.
inline std::vector<std::size_t> largest_component(const Graph& g) {
    auto comps = connected_components(g);
    if (comps.empty()) return {};
    std::size_t best = 0;
    for (std::size_t c = 1; c < comps.size(); ++c)
        if (comps[c].size() > comps[best].size()) best = c;
    return comps[best];
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition

struct SpectralDecomposition {
    Vector eigenvalues;   // ascending
    Matrix eigenvectors;  // column k pairs with eigenvalues[k]
};

/// Flip `v` so that its entry of largest magnitude is positive. Entries
/// within a relative 1e-9 of the maximum count as tied; the lowest index
/// wins.
inline void apply_sign_convention(Eigen::Ref<Vector> v) {
    const double peak = v.cwiseAbs().maxCoeff();
    if (peak == 0.0) return;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) >= peak * (1.0 - 1e-9)) {
            if (v(i) < 0.0) v = -v;
            return;
        }
    }
}

inline SpectralDecomposition symmetric_eig(const Matrix& m) {
    require_square(m, "matrix");
    if (m.rows() == 0) fail(ErrorKind::TooSmall, "empty matrix");
    if (!all_finite(m)) fail(ErrorKind::NonFinite, "matrix has non-finite entries");
    const double scale = m.norm();
    const double asym = (m - m.transpose()).norm();
    if (asym > 1e-9 * scale)
        fail(ErrorKind::NotSymmetric, "||M - M^T||_F = " + format_double(asym));

    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) fail(ErrorKind::NonFinite, "eigensolver did not converge");

    SpectralDecomposition out{solver.eigenvalues(), solver.eigenvectors()};
    for (Eigen::Index k = 0; k < out.eigenvectors.cols(); ++k) {
        auto col = out.eigenvectors.col(k);
        apply_sign_convention(col);
    }
    return out;
}

/// Second eigenvector of a Laplacian-like matrix. Connectivity is read off
/// the nonzero off-diagonal pattern.
inline Vector fiedler_vector(const Matrix& lap) {
    require_square(lap, "Laplacian");
    if (lap.rows() < 2) fail(ErrorKind::TooSmall, "Fiedler vector needs at least 2 nodes");
    const auto comps = connected_components(lap);
    if (comps.size() > 1)
        fail(ErrorKind::DisconnectedGraph, "graph has " + std::to_string(comps.size()) +
                                               " components; only " + std::to_string(comps.front().size()) +
                                               " of " + std::to_string(lap.rows()) + " nodes reachable");
    return symmetric_eig(lap).eigenvectors.col(1);
}

inline Vector fiedler_vector(const Graph& g) {
    if (g.size() < 2) fail(ErrorKind::TooSmall, "Fiedler vector needs at least 2 nodes");
    return fiedler_vector(laplacian(g));
}

// ---------------------------------------------------------------------------
// Edge-list text format
//
//   #nodes: a,b,c
//   a<TAB>b<TAB>weight

inline void write_edge_list(std::ostream& out, const Graph& g) {
    out << "#nodes: ";
    for (std::size_t i = 0; i < g.size(); ++i) out << (i ? "," : "") << g.labels()[i];
    out << '\n';
    for (const auto& [i, j] : g.edges())
        out << g.labels()[i] << '\t' << g.labels()[j] << '\t' << format_double(g.weight(i, j)) << '\n';
}

inline std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        parts.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

inline Graph read_edge_list(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> labels;
    std::unordered_map<std::string, std::size_t> index;
    bool have_header = false;
    std::vector<std::tuple<std::size_t, std::size_t, double>> edges;

    auto parse_error = [&](const std::string& msg) {
        fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + msg);
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("#nodes:", 0) == 0) {
            if (have_header) parse_error("duplicate #nodes header");
            std::string rest = line.substr(7);
            const auto first = rest.find_first_not_of(' ');
            rest = first == std::string::npos ? std::string() : rest.substr(first);
            if (!rest.empty()) labels = split(rest, ',');
            for (std::size_t i = 0; i < labels.size(); ++i) {
                if (labels[i].empty()) parse_error("empty node label");
                if (!index.emplace(labels[i], i).second) parse_error("duplicate node label '" + labels[i] + "'");
            }
            have_header = true;
            continue;
        }
        if (line.front() == '#') continue;
        if (!have_header) parse_error("edge before #nodes header");
        const auto fields = split(line, '\t');
        if (fields.size() != 3) parse_error("expected label<TAB>label<TAB>weight");
        const auto a = index.find(fields[0]);
        const auto b = index.find(fields[1]);
        if (a == index.end()) parse_error("unknown node '" + fields[0] + "'");
        if (b == index.end()) parse_error("unknown node '" + fields[1] + "'");
        double w = 0.0;
        if (!parse_double(fields[2], w)) parse_error("bad weight '" + fields[2] + "'");
        edges.emplace_back(a->second, b->second, w);
    }
    if (!have_header) fail(ErrorKind::ParseError, "missing #nodes header");

    const auto n = static_cast<Eigen::Index>(labels.size());
    Matrix w = Matrix::Zero(n, n);
    for (const auto& [i, j, weight] : edges) {
        if (i == j) fail(ErrorKind::InvalidGraph, "self-loop at node " + labels[i]);
        const auto a = static_cast<Eigen::Index>(i);
        const auto b = static_cast<Eigen::Index>(j);
        if (w(a, b) != 0.0) fail(ErrorKind::InvalidGraph, "duplicate edge " + labels[i] + "-" + labels[j]);
        w(a, b) = weight;
        w(b, a) = weight;
    }
    return Graph(std::move(labels), std::move(w));
}

// ---------------------------------------------------------------------------
// Dense matrix text: one row per line, whitespace-delimited.

inline void write_matrix(std::ostream& out, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
        out << '\n';
    }
}

inline Matrix read_matrix(std::istream& in) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        std::istringstream ss(line);
        std::vector<double> row;
        std::string tok;
        while (ss >> tok) {
            double v = 0.0;
            if (!parse_double(tok, v))
                fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": bad number '" + tok + "'");
            row.push_back(v);
        }
        if (row.empty()) continue;
        if (!rows.empty() && row.size() != rows.front().size())
            fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) fail(ErrorKind::ParseError, "empty matrix");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

} // namespace prism
