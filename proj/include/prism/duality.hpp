#pragma once

#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "prism/graph.hpp"

namespace prism {

/// Tolerance for P^2 = I, P = P^T and the +-1 spectrum.
inline constexpr double kInvolutionTolerance = 1e-9;
/// Below this Frobenius norm a matrix counts as zero for defect purposes.
inline constexpr double kZeroNormTolerance = 1e-12;

/// A validated symmetric involution (P^2 = I, P = P^T).
///
/// Instances only come out of `validate_involution` and the permutation
/// factories, so holding one is proof the invariants were checked. The
/// dimensions of the +1 and -1 eigenspaces are cached.
class DualityOperator {
public:
    const Matrix& matrix() const noexcept { return matrix_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(matrix_.rows()); }
    std::size_t plus_dim() const noexcept { return plus_dim_; }
    std::size_t minus_dim() const noexcept { return minus_dim_; }

    /// The node pairing when the operator is a permutation matrix.
    const std::optional<std::vector<std::size_t>>& permutation() const noexcept { return permutation_; }
    bool is_permutation() const noexcept { return permutation_.has_value(); }

    static DualityOperator identity(std::size_t n) {
        std::vector<std::size_t> sigma(n);
        for (std::size_t i = 0; i < n; ++i) sigma[i] = i;
        return from_permutation(std::move(sigma));
    }

    /// Permutation matrix of an involutive permutation; P_ij = 1 iff j = sigma(i).
    static DualityOperator from_permutation(std::vector<std::size_t> sigma) {
        const std::size_t n = sigma.size();
        if (n == 0) fail(ErrorKind::TooSmall, "empty permutation");
        std::size_t fixed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (sigma[i] >= n) fail(ErrorKind::InvalidArgument, "permutation entry out of range at " + std::to_string(i));
            if (sigma[sigma[i]] != i)
                fail(ErrorKind::NotInvolution, "sigma(sigma(" + std::to_string(i) + ")) != " + std::to_string(i));
            if (sigma[i] == i) ++fixed;
        }
        DualityOperator op;
        const auto dim = static_cast<Eigen::Index>(n);
        op.matrix_ = Matrix::Zero(dim, dim);
        for (std::size_t i = 0; i < n; ++i)
            op.matrix_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(sigma[i])) = 1.0;
        // each 2-cycle contributes one +1 and one -1 eigenvector
        op.minus_dim_ = (n - fixed) / 2;
        op.plus_dim_ = n - op.minus_dim_;
        op.permutation_ = std::move(sigma);
        return op;
    }

    friend DualityOperator validate_involution(const Matrix& m);

private:
    DualityOperator() = default;

    Matrix matrix_;
    std::size_t plus_dim_ = 0;
    std::size_t minus_dim_ = 0;
    std::optional<std::vector<std::size_t>> permutation_;
};

/// Reads a permutation off a matrix whose entries are exactly 0 or 1 with a
/// single 1 per row and column.
inline std::optional<std::vector<std::size_t>> as_permutation(const Matrix& m) {
    if (m.rows() != m.cols()) return std::nullopt;
    const auto n = m.rows();
    std::vector<std::size_t> sigma(static_cast<std::size_t>(n));
    std::vector<int> col_hits(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        int hits = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double v = m(i, j);
            if (v == 1.0) {
                ++hits;
                sigma[static_cast<std::size_t>(i)] = static_cast<std::size_t>(j);
                ++col_hits[static_cast<std::size_t>(j)];
            } else if (v != 0.0) {
                return std::nullopt;
            }
        }
        if (hits != 1) return std::nullopt;
    }
    for (int c : col_hits)
        if (c != 1) return std::nullopt;
    return sigma;
}

inline DualityOperator validate_involution(const Matrix& m) {
    require_square(m, "duality operator");
    if (m.rows() == 0) fail(ErrorKind::TooSmall, "empty operator");
    if (!all_finite(m)) fail(ErrorKind::NonFinite, "operator has non-finite entries");
    const double asym = (m - m.transpose()).norm();
    if (asym > kInvolutionTolerance) fail(ErrorKind::NotSymmetric, "||P - P^T||_F = " + format_double(asym));
    const auto n = m.rows();
    const double invol = (m * m - Matrix::Identity(n, n)).norm();
    if (invol > kInvolutionTolerance)
        fail(ErrorKind::NotInvolution, "not an involution: ||P^2 - I||_F = " + format_double(invol));

    if (auto sigma = as_permutation(m)) return DualityOperator::from_permutation(std::move(*sigma));

    const auto spectrum = symmetric_eig(m).eigenvalues;
    DualityOperator op;
    for (Eigen::Index k = 0; k < n; ++k) {
        const double lambda = spectrum(k);
        if (std::abs(lambda - 1.0) <= kInvolutionTolerance) {
            ++op.plus_dim_;
        } else if (std::abs(lambda + 1.0) <= kInvolutionTolerance) {
            ++op.minus_dim_;
        } else {
            fail(ErrorKind::NotInvolution, "eigenvalue " + format_double(lambda) + " is not +-1");
        }
    }
    op.matrix_ = m;
    return op;
}

inline void require_same_size(const Matrix& l, const DualityOperator& p) {
    require_square(l, "Laplacian");
    if (static_cast<std::size_t>(l.rows()) != p.size())
        fail(ErrorKind::DimensionMismatch, "matrix is " + std::to_string(l.rows()) + "x" + std::to_string(l.cols()) +
                                               " but operator is " + std::to_string(p.size()) + "x" +
                                               std::to_string(p.size()));
}

/// ||LP - PL||_F
inline double commutator_norm(const Matrix& l, const DualityOperator& p) {
    require_same_size(l, p);
    const Matrix& pm = p.matrix();
    return (l * pm - pm * l).norm();
}

/// delta(L, P) = ||LP - PL||_F / ||L||_F, in [0, 2].
inline double duality_defect(const Matrix& l, const DualityOperator& p) {
    require_same_size(l, p);
    const double scale = l.norm();
    if (!(scale > kZeroNormTolerance)) fail(ErrorKind::ZeroMatrix, "duality defect of a zero matrix is undefined");
    return commutator_norm(l, p) / scale;
}

struct ProjectionResult {
    Matrix projected;
    double defect_before = 0.0;
    double defect_after = 0.0;
    double deformation = 0.0;
};

/// Nearest matrix to L (Frobenius) that commutes with P.
///
/// For an involution the block-zeroing in the P-eigenbasis reduces to the
/// conjugation average (L + PLP)/2, which is what is computed here.
inline ProjectionResult commutant_projection(const Matrix& l, const DualityOperator& p) {
    require_same_size(l, p);
    const Matrix& pm = p.matrix();
    ProjectionResult out;
    out.projected = 0.5 * (l + pm * l * pm);
    out.defect_before = duality_defect(l, p);
    // zero lies in every commutant
    out.defect_after = out.projected.norm() > kZeroNormTolerance ? duality_defect(out.projected, p) : 0.0;
    out.deformation = (out.projected - l).norm();
    return out;
}

// ---------------------------------------------------------------------------
// Operator text formats
//
//   #pairing: <n>            followed by i<TAB>sigma(i), each pair once,
//                            fixed points as i<TAB>i
//   #dense: <n>              followed by a whitespace-delimited matrix

inline void write_operator(std::ostream& out, const DualityOperator& p) {
    if (const auto& sigma = p.permutation()) {
        out << "#pairing: " << sigma->size() << '\n';
        for (std::size_t i = 0; i < sigma->size(); ++i)
            if ((*sigma)[i] >= i) out << i << '\t' << (*sigma)[i] << '\n';
        return;
    }
    out << "#dense: " << p.size() << '\n';
    write_matrix(out, p.matrix());
}

namespace detail {

inline DualityOperator read_pairing(const std::vector<std::string>& lines, std::optional<std::size_t> declared) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::size_t max_index = 0;
    for (std::size_t k = 0; k < lines.size(); ++k) {
        const auto fields = split(lines[k], '\t');
        std::size_t a = 0, b = 0;
        if (fields.size() != 2 || !parse_index(fields[0], a) || !parse_index(fields[1], b))
            fail(ErrorKind::ParseError, "pairing entry " + std::to_string(k + 1) + ": expected i<TAB>j");
        pairs.emplace_back(a, b);
        max_index = std::max({max_index, a, b});
    }
    const std::size_t n = declared.value_or(pairs.empty() ? 0 : max_index + 1);
    if (n == 0) fail(ErrorKind::ParseError, "empty pairing");
    constexpr std::size_t unset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> sigma(n, unset);
    for (const auto& [a, b] : pairs) {
        if (a >= n || b >= n) fail(ErrorKind::ParseError, "pairing index out of range");
        if (sigma[a] != unset || sigma[b] != unset)
            fail(ErrorKind::NotInvolution, "node paired twice in involution listing");
        sigma[a] = b;
        sigma[b] = a;
    }
    for (std::size_t i = 0; i < n; ++i)
        if (sigma[i] == unset) fail(ErrorKind::ParseError, "node " + std::to_string(i) + " missing from pairing");
    return DualityOperator::from_permutation(std::move(sigma));
}

} // namespace detail

inline DualityOperator read_operator(std::istream& in) {
    enum class Kind { Unknown, Pairing, Dense } kind = Kind::Unknown;
    std::optional<std::size_t> declared;
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            std::string tag;
            std::size_t colon = line.find(':');
            if (colon != std::string::npos) tag = line.substr(1, colon - 1);
            if (tag == "pairing" || tag == "dense") {
                kind = tag == "pairing" ? Kind::Pairing : Kind::Dense;
                std::istringstream rest(line.substr(colon + 1));
                std::size_t n = 0;
                if (rest >> n) declared = n;
            }
            continue;
        }
        lines.push_back(line);
    }
    if (kind == Kind::Unknown) {
        bool pairing_like = !lines.empty();
        for (const auto& l : lines) {
            const auto fields = split(l, '\t');
            std::size_t a = 0, b = 0;
            if (fields.size() != 2 || !parse_index(fields[0], a) || !parse_index(fields[1], b)) pairing_like = false;
        }
        kind = pairing_like ? Kind::Pairing : Kind::Dense;
    }
    if (kind == Kind::Pairing) return detail::read_pairing(lines, declared);

    std::string joined;
    for (const auto& l : lines) joined += l + '\n';
    std::istringstream body(joined);
    Matrix m = read_matrix(body);
    if (declared && static_cast<std::size_t>(m.rows()) != *declared)
        fail(ErrorKind::ParseError, "dense operator declares " + std::to_string(*declared) + " rows, found " +
                                        std::to_string(m.rows()));
    return validate_involution(m);
}

} // namespace prism
