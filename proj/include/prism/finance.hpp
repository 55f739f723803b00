#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "prism/benchmarks.hpp"
#include "prism/duality.hpp"
#include "prism/format.hpp"
#include "prism/graph.hpp"
#include "prism/learn.hpp"
#include "prism/parallel.hpp"
#include "prism/random.hpp"

namespace prism {

// ---------------------------------------------------------------------------
// Calendar dates

/// Proleptic Gregorian date stored as days since 1970-01-01.
class Date {
public:
    Date() = default;

    static Date from_ymd(int y, unsigned m, unsigned d) {
        // days_from_civil
        y -= m <= 2;
        const int era = (y >= 0 ? y : y - 399) / 400;
        const auto yoe = static_cast<unsigned>(y - era * 400);
        const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
        const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        Date out;
        out.days_ = era * 146097 + static_cast<int>(doe) - 719468;
        return out;
    }

    static std::optional<Date> parse(std::string_view s) {
        if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
        auto digits = [&](std::size_t from, std::size_t len) -> std::optional<int> {
            int v = 0;
            for (std::size_t i = from; i < from + len; ++i) {
                if (s[i] < '0' || s[i] > '9') return std::nullopt;
                v = v * 10 + (s[i] - '0');
            }
            return v;
        };
        const auto y = digits(0, 4), m = digits(5, 2), d = digits(8, 2);
        if (!y || !m || !d || *m < 1 || *m > 12 || *d < 1) return std::nullopt;
        const Date out = from_ymd(*y, static_cast<unsigned>(*m), static_cast<unsigned>(*d));
        if (out.to_string() != s) return std::nullopt;  // rejects 2023-02-30
        return out;
    }

    int days() const { return days_; }
    /// 0 = Monday
    int weekday() const { return ((days_ % 7) + 7 + 3) % 7; }
    Date plus_days(int n) const {
        Date out;
        out.days_ = days_ + n;
        return out;
    }

    std::string to_string() const {
        // civil_from_days
        const int z = days_ + 719468;
        const int era = (z >= 0 ? z : z - 146096) / 146097;
        const auto doe = static_cast<unsigned>(z - era * 146097);
        const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const unsigned mp = (5 * doy + 2) / 153;
        const unsigned d = doy - (153 * mp + 2) / 5 + 1;
        const unsigned m = mp < 10 ? mp + 3 : mp - 9;
        const int y = static_cast<int>(yoe) + era * 400 + (m <= 2);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", y, m, d);
        return buf;
    }

    friend auto operator<=>(const Date&, const Date&) = default;

private:
    int days_ = 0;
};

inline Date parse_date(std::string_view s) {
    const auto d = Date::parse(s);
    if (!d) fail(ErrorKind::ParseError, "invalid ISO date '" + std::string(s) + "'");
    return *d;
}

// ---------------------------------------------------------------------------
// Panels

/// Closing prices, one row per date; NaN marks a missing observation.
struct PricePanel {
    std::vector<Date> dates;
    std::vector<std::string> tickers;
    Matrix prices;
};

struct ReturnPanel {
    std::vector<Date> dates;  // date of the later price in each return
    std::vector<std::string> tickers;
    Matrix returns;                    // dates x tickers
    std::vector<std::string> dropped;  // tickers below the coverage floor
};

/// CSV with header `date,T1,T2,...`; an empty cell is a missing price.
inline PricePanel parse_prices(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto where = [&](std::size_t column) {
        return "line " + std::to_string(line_no) + ", column " + std::to_string(column) + ": ";
    };
    auto strip = [](std::string& s) {
        if (!s.empty() && s.back() == '\r') s.pop_back();
    };

    PricePanel panel;
    while (std::getline(in, line)) {
        ++line_no;
        strip(line);
        if (!line.empty()) break;
    }
    if (line.empty()) fail(ErrorKind::EmptyPanel, "price file has no header");
    const auto header = split(line, ',');
    if (header[0] != "date") fail(ErrorKind::ParseError, where(1) + "header must start with 'date'");
    std::set<std::string> seen;
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (header[c].empty()) fail(ErrorKind::ParseError, where(c + 1) + "empty ticker name");
        if (!seen.insert(header[c]).second)
            fail(ErrorKind::ParseError, where(c + 1) + "duplicate ticker '" + header[c] + "'");
        panel.tickers.push_back(header[c]);
    }
    if (panel.tickers.empty()) fail(ErrorKind::EmptyPanel, "price file has no tickers");

    std::vector<std::pair<Date, std::vector<double>>> rows;
    std::map<Date, std::size_t> first_line;
    while (std::getline(in, line)) {
        ++line_no;
        strip(line);
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != header.size())
            fail(ErrorKind::ParseError, where(cells.size() < header.size() ? cells.size() + 1 : header.size() + 1) +
                                            "expected " + std::to_string(header.size()) + " fields, found " +
                                            std::to_string(cells.size()));
        const auto date = Date::parse(cells[0]);
        if (!date) fail(ErrorKind::ParseError, where(1) + "invalid ISO date '" + cells[0] + "'");
        if (const auto [it, fresh] = first_line.emplace(*date, line_no); !fresh)
            fail(ErrorKind::DuplicateDate, where(1) + "date " + cells[0] + " already appeared on line " +
                                               std::to_string(it->second));
        std::vector<double> values(panel.tickers.size(), std::numeric_limits<double>::quiet_NaN());
        for (std::size_t c = 1; c < cells.size(); ++c) {
            if (cells[c].empty()) continue;
            double v = 0.0;
            if (!parse_double(cells[c], v) || !std::isfinite(v))
                fail(ErrorKind::ParseError, where(c + 1) + "invalid price '" + cells[c] + "'");
            if (v <= 0.0) fail(ErrorKind::NonPositivePrice, where(c + 1) + "price must be positive");
            values[c - 1] = v;
        }
        rows.emplace_back(*date, std::move(values));
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    panel.prices.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(panel.tickers.size()));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        panel.dates.push_back(rows[t].first);
        for (std::size_t c = 0; c < panel.tickers.size(); ++c)
            panel.prices(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = rows[t].second[c];
    }
    return panel;
}

inline PricePanel load_prices(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoError, "cannot open price file '" + path + "'");
    return parse_prices(in);
}

/// Tickers observed on fewer than `min_coverage` of the dates are dropped.
/// Returns are taken between consecutive dates on which every remaining
/// ticker has a price, so each return spans the same interval across the
/// cross-section.
inline ReturnPanel log_returns(const PricePanel& p, double min_coverage = 0.95) {
    if (!(min_coverage >= 0.0 && min_coverage <= 1.0))
        fail(ErrorKind::InvalidArgument, "coverage must lie in [0, 1]");
    if (p.dates.size() < 2) fail(ErrorKind::EmptyPanel, "need at least two dates for returns");

    ReturnPanel r;
    std::vector<Eigen::Index> kept;
    const auto total = static_cast<double>(p.dates.size());
    for (std::size_t c = 0; c < p.tickers.size(); ++c) {
        const auto col = static_cast<Eigen::Index>(c);
        const auto present = static_cast<double>(p.prices.col(col).array().isFinite().count());
        if (present / total >= min_coverage && present >= 2) {
            kept.push_back(col);
            r.tickers.push_back(p.tickers[c]);
        } else {
            r.dropped.push_back(p.tickers[c]);
        }
    }
    if (kept.empty()) fail(ErrorKind::EmptyPanel, "no ticker meets the coverage floor");

    std::vector<Eigen::Index> full_rows;
    for (Eigen::Index t = 0; t < p.prices.rows(); ++t) {
        bool complete = true;
        for (auto c : kept) complete = complete && std::isfinite(p.prices(t, c));
        if (complete) full_rows.push_back(t);
    }
    if (full_rows.size() < 2) fail(ErrorKind::EmptyPanel, "fewer than two dates with complete prices");

    const auto rows = static_cast<Eigen::Index>(full_rows.size() - 1);
    r.returns.resize(rows, static_cast<Eigen::Index>(kept.size()));
    for (Eigen::Index t = 0; t < rows; ++t) {
        const auto prev = full_rows[static_cast<std::size_t>(t)], cur = full_rows[static_cast<std::size_t>(t) + 1];
        r.dates.push_back(p.dates[static_cast<std::size_t>(cur)]);
        for (std::size_t c = 0; c < kept.size(); ++c)
            r.returns(t, static_cast<Eigen::Index>(c)) = std::log(p.prices(cur, kept[c]) / p.prices(prev, kept[c]));
    }
    return r;
}

/// Copy of `r` without the named tickers.
inline ReturnPanel drop_tickers(const ReturnPanel& r, const std::vector<std::string>& names) {
    ReturnPanel out;
    out.dates = r.dates;
    out.dropped = r.dropped;
    std::vector<Eigen::Index> keep;
    for (std::size_t c = 0; c < r.tickers.size(); ++c) {
        if (std::find(names.begin(), names.end(), r.tickers[c]) != names.end()) {
            out.dropped.push_back(r.tickers[c]);
            continue;
        }
        keep.push_back(static_cast<Eigen::Index>(c));
        out.tickers.push_back(r.tickers[c]);
    }
    out.returns.resize(r.returns.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) out.returns.col(static_cast<Eigen::Index>(c)) = r.returns.col(keep[c]);
    return out;
}

/// Index of the last return date on or before `d`.
inline std::optional<std::size_t> date_position(const ReturnPanel& r, Date d) {
    const auto it = std::upper_bound(r.dates.begin(), r.dates.end(), d);
    if (it == r.dates.begin()) return std::nullopt;
    return static_cast<std::size_t>(it - r.dates.begin()) - 1;
}

// ---------------------------------------------------------------------------
// Window graphs

struct WindowSpec {
    std::size_t window_len = 60;
    double threshold = 0.2;

    void validate() const {
        if (window_len < 2) fail(ErrorKind::InvalidArgument, "window length must be at least 2");
        if (!(threshold >= 0.0 && threshold <= 1.0)) fail(ErrorKind::InvalidArgument, "threshold must lie in [0, 1]");
    }
};

struct CorrelationWindow {
    Date window_end;
    std::vector<std::string> tickers;   // usable tickers, panel order
    Matrix correlation;                 // signed Pearson, unit diagonal
    Graph graph;                        // thresholded correlations
    double mean_correlation = 0.0;      // off-diagonal mean of `correlation`
    std::vector<std::string> constant;  // dropped for zero variance
};

/// Pearson correlations over the `window_len` return rows ending at row
/// `end` (inclusive).
inline CorrelationWindow correlation_window_at(const ReturnPanel& r, std::size_t end, const WindowSpec& spec) {
    spec.validate();
    if (end >= r.dates.size()) fail(ErrorKind::InsufficientHistory, "window end lies beyond the return history");
    if (end + 1 < spec.window_len)
        fail(ErrorKind::InsufficientHistory, "window of " + std::to_string(spec.window_len) + " rows ending at " +
                                                 r.dates[end].to_string() + " has only " + std::to_string(end + 1));

    const auto len = static_cast<Eigen::Index>(spec.window_len);
    const Matrix block = r.returns.middleRows(static_cast<Eigen::Index>(end + 1) - len, len);

    CorrelationWindow out;
    out.window_end = r.dates[end];
    std::vector<Vector> centred;
    std::vector<double> scale;
    for (Eigen::Index c = 0; c < block.cols(); ++c) {
        const Vector x = block.col(c);
        const Vector d = x.array() - x.mean();
        const double ss = d.squaredNorm();
        const double floor = 1e-24 * std::max(1.0, x.squaredNorm());
        if (!(ss > floor)) {
            out.constant.push_back(r.tickers[static_cast<std::size_t>(c)]);
            continue;
        }
        out.tickers.push_back(r.tickers[static_cast<std::size_t>(c)]);
        centred.push_back(d);
        scale.push_back(std::sqrt(ss));
    }
    const auto n = static_cast<Eigen::Index>(out.tickers.size());
    if (n < 2) fail(ErrorKind::DegenerateWindow, "fewer than two tickers vary within the window");

    out.correlation = Matrix::Identity(n, n);
    Matrix w = Matrix::Zero(n, n);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(j);
            const double c = std::clamp(centred[a].dot(centred[b]) / (scale[a] * scale[b]), -1.0, 1.0);
            out.correlation(i, j) = out.correlation(j, i) = c;
            sum += 2.0 * c;
            if (c >= spec.threshold && c > 0.0) w(i, j) = w(j, i) = c;
        }
    out.mean_correlation = sum / static_cast<double>(n * (n - 1));
    out.graph = Graph(out.tickers, std::move(w));
    return out;
}

inline CorrelationWindow correlation_window(const ReturnPanel& r, Date window_end, const WindowSpec& spec) {
    const auto end = date_position(r, window_end);
    if (!end) fail(ErrorKind::InsufficientHistory, "no returns on or before " + window_end.to_string());
    return correlation_window_at(r, *end, spec);
}

struct WindowDefect {
    Date window_end;
    std::size_t window_len = 0;
    double mean_correlation = 0.0;
    double defect = 0.0;
    std::size_t edges = 0;                   // in the largest component
    std::vector<std::string> component;      // tickers the defect is measured on
    std::vector<std::string> excluded;       // outside the largest component
    std::vector<std::string> constant;       // zero variance in the window
};

/// Defect of the largest component's Laplacian against that component's
/// own Fiedler operator.
inline WindowDefect window_defect_at(const ReturnPanel& r, std::size_t end, const WindowSpec& spec) {
    const auto cw = correlation_window_at(r, end, spec);
    if (cw.graph.edge_count() == 0)
        fail(ErrorKind::ZeroMatrix, "no correlation clears the threshold in the window ending " +
                                        cw.window_end.to_string());
    const auto nodes = largest_component(cw.graph);
    const Graph comp = cw.graph.subgraph(nodes);

    WindowDefect out;
    out.window_end = cw.window_end;
    out.window_len = spec.window_len;
    out.mean_correlation = cw.mean_correlation;
    out.edges = comp.edge_count();
    out.component = comp.labels();
    out.constant = cw.constant;
    for (std::size_t i = 0; i < cw.tickers.size(); ++i)
        if (std::find(nodes.begin(), nodes.end(), i) == nodes.end()) out.excluded.push_back(cw.tickers[i]);
    out.defect = duality_defect(laplacian(comp), fiedler_duality_operator(comp));
    return out;
}

inline WindowDefect window_defect(const ReturnPanel& r, Date window_end, const WindowSpec& spec) {
    const auto end = date_position(r, window_end);
    if (!end) fail(ErrorKind::InsufficientHistory, "no returns on or before " + window_end.to_string());
    return window_defect_at(r, *end, spec);
}

// ---------------------------------------------------------------------------
// Rolling defect

struct RollingRecord {
    Date window_end;
    std::size_t window_len = 0;
    double mean_correlation = 0.0;
    double defect = 0.0;
};

struct SkippedWindow {
    Date window_end;
    std::string reason;
};

struct RollingSeries {
    std::vector<RollingRecord> records;
    std::vector<SkippedWindow> skipped;
    double slope = 0.0;  // least-squares trend of the defect per record
};

/// Windows end on the last return date and every `stride` rows before it,
/// reported in ascending order. A window that fails is skipped and listed.
inline RollingSeries rolling_defect(const ReturnPanel& r, const WindowSpec& spec, std::size_t stride) {
    spec.validate();
    if (stride < 1) fail(ErrorKind::InvalidArgument, "stride must be at least 1");
    RollingSeries out;
    if (r.dates.size() < spec.window_len) return out;

    std::vector<std::size_t> ends;
    for (std::size_t e = r.dates.size() - 1;; e -= stride) {
        ends.push_back(e);
        if (e < spec.window_len - 1 + stride) break;
    }
    std::reverse(ends.begin(), ends.end());

    std::vector<std::optional<WindowDefect>> results(ends.size());
    std::vector<std::string> errors(ends.size());
    parallel_for(ends.size(), [&](std::size_t k) {
        try {
            results[k] = window_defect_at(r, ends[k], spec);
        } catch (const Error& e) {
            errors[k] = e.what();
        }
    });

    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < ends.size(); ++k) {
        if (!results[k]) {
            out.skipped.push_back({r.dates[ends[k]], errors[k]});
            continue;
        }
        const auto& w = *results[k];
        xs.push_back(static_cast<double>(out.records.size()));
        ys.push_back(w.defect);
        out.records.push_back({w.window_end, w.window_len, w.mean_correlation, w.defect});
    }
    out.slope = least_squares_slope(xs, ys);
    return out;
}

// ---------------------------------------------------------------------------
// Communities

struct Community {
    std::size_t id = 0;
    std::vector<std::string> members;
    std::optional<double> internal_coupling;  // absent for singletons
};

struct CommunityReport {
    Date window_end;
    std::size_t window_len = 0;
    std::vector<Community> communities;
    Matrix coupling;  // NaN on the diagonal of singleton communities
    std::optional<std::pair<std::size_t, std::size_t>> fault_line;
    std::vector<std::string> excluded;
    std::size_t learn_iterations = 0;
};

/// Lloyd's k-means on the rows of `x` with farthest-point seeding: the first
/// centre is a seeded random row, each further centre the row farthest from
/// the centres chosen so far (lowest index on ties). Returns a label per row.
inline Labels kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t max_iterations = 300) {
    const auto n = static_cast<std::size_t>(x.rows());
    if (k < 1 || k > n) fail(ErrorKind::TooFewNodes, "k-means needs 1 <= k <= number of points");
    Rng rng(seed);
    std::vector<Eigen::Index> seeds{static_cast<Eigen::Index>(rng.below(n))};
    Vector nearest = (x.rowwise() - x.row(seeds[0])).rowwise().squaredNorm();
    while (seeds.size() < k) {
        Eigen::Index far = 0;
        for (Eigen::Index i = 1; i < x.rows(); ++i)
            if (nearest(i) > nearest(far)) far = i;
        seeds.push_back(far);
        nearest = nearest.cwiseMin((x.rowwise() - x.row(far)).rowwise().squaredNorm());
    }
    Matrix centres(static_cast<Eigen::Index>(k), x.cols());
    for (std::size_t c = 0; c < k; ++c) centres.row(static_cast<Eigen::Index>(c)) = x.row(seeds[c]);

    Labels labels(n, -1);
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            int best = 0;
            double best_d = (x.row(row) - centres.row(0)).squaredNorm();
            for (std::size_t c = 1; c < k; ++c) {
                const double d = (x.row(row) - centres.row(static_cast<Eigen::Index>(c))).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(c);
                }
            }
            changed = changed || labels[i] != best;
            labels[i] = best;
        }
        if (!changed) break;
        for (std::size_t c = 0; c < k; ++c) {
            Vector sum = Vector::Zero(x.cols());
            std::size_t count = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (labels[i] == static_cast<int>(c)) {
                    sum += x.row(static_cast<Eigen::Index>(i)).transpose();
                    ++count;
                }
            if (count > 0) centres.row(static_cast<Eigen::Index>(c)) = (sum / static_cast<double>(count)).transpose();
        }
    }
    return labels;
}

/// Renumbers labels by first appearance and drops unused ones.
inline Labels canonical_labels(const Labels& labels) {
    std::map<int, int> remap;
    Labels out;
    out.reserve(labels.size());
    for (int l : labels) {
        const auto [it, fresh] = remap.emplace(l, static_cast<int>(remap.size()));
        out.push_back(it->second);
    }
    return out;
}

/// Fraction of items whose label agrees with `truth` under the best
/// one-to-one relabelling (exact assignment over subsets, k <= 16).
inline double matched_accuracy(const Labels& predicted, const Labels& truth) {
    if (predicted.size() != truth.size()) fail(ErrorKind::LengthMismatch, "label vectors differ in length");
    if (truth.empty()) fail(ErrorKind::LengthMismatch, "empty labelings");
    int kp = 0, kt = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (predicted[i] < 0 || truth[i] < 0) fail(ErrorKind::InvalidArgument, "labels must be nonnegative");
        kp = std::max(kp, predicted[i] + 1);
        kt = std::max(kt, truth[i] + 1);
    }
    const int k = std::max(kp, kt);
    if (k > 16) fail(ErrorKind::InvalidArgument, "matched accuracy supports at most 16 labels");
    std::vector<std::vector<std::size_t>> overlap(static_cast<std::size_t>(k), std::vector<std::size_t>(static_cast<std::size_t>(k), 0));
    for (std::size_t i = 0; i < truth.size(); ++i)
        ++overlap[static_cast<std::size_t>(predicted[i])][static_cast<std::size_t>(truth[i])];
    // best[mask]: predicted labels 0..popcount(mask)-1 assigned to the truth labels in mask
    std::vector<std::size_t> best(std::size_t{1} << k, 0);
    for (std::size_t mask = 1; mask < best.size(); ++mask) {
        const auto p = static_cast<std::size_t>(__builtin_popcountll(mask)) - 1;
        for (int t = 0; t < k; ++t)
            if (mask & (std::size_t{1} << t))
                best[mask] = std::max(best[mask], best[mask ^ (std::size_t{1} << t)] + overlap[p][static_cast<std::size_t>(t)]);
    }
    return static_cast<double>(best.back()) / static_cast<double>(truth.size());
}

/// Unsupervised k-way split of a window: learn P from the Fiedler start,
/// embed the nodes with the k lowest eigenvectors of the projected
/// Laplacian, row-normalise, and cluster. Couplings use the signed
/// correlations.
inline CommunityReport communities_at(const ReturnPanel& r, std::size_t end, const WindowSpec& spec, std::size_t k,
                                      std::uint64_t seed, const AlternatingConfig& learn = {}) {
    if (k < 1) fail(ErrorKind::InvalidArgument, "k must be at least 1");
    const auto cw = correlation_window_at(r, end, spec);
    const auto nodes = largest_component(cw.graph);
    if (nodes.size() < std::max<std::size_t>(k, 2))
        fail(ErrorKind::TooFewNodes, "largest component has " + std::to_string(nodes.size()) + " nodes, need " +
                                         std::to_string(std::max<std::size_t>(k, 2)));
    const Graph comp = cw.graph.subgraph(nodes);
    const Matrix lap = laplacian(comp);
    const auto learned = alternate(lap, fiedler_duality_operator(comp), learn);

    const auto eig = symmetric_eig(learned.projected);
    Matrix embed = eig.eigenvectors.leftCols(static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < embed.rows(); ++i) {
        const double norm = embed.row(i).norm();
        if (norm > 0.0) embed.row(i) /= norm;
    }
    const Labels labels = canonical_labels(kmeans(embed, k, seed));
    const auto groups = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end()) + 1);

    CommunityReport out;
    out.window_end = cw.window_end;
    out.window_len = spec.window_len;
    out.learn_iterations = learned.iterations;
    for (std::size_t i = 0; i < cw.tickers.size(); ++i)
        if (std::find(nodes.begin(), nodes.end(), i) == nodes.end()) out.excluded.push_back(cw.tickers[i]);

    std::vector<std::vector<std::size_t>> members(groups);  // indices into cw
    for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(nodes[i]);

    const auto g = static_cast<Eigen::Index>(groups);
    out.coupling = Matrix::Constant(g, g, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t a = 0; a < groups; ++a)
        for (std::size_t b = a; b < groups; ++b) {
            double sum = 0.0;
            std::size_t count = 0;
            for (std::size_t i = 0; i < members[a].size(); ++i)
                for (std::size_t j = (a == b ? i + 1 : 0); j < members[b].size(); ++j) {
                    sum += cw.correlation(static_cast<Eigen::Index>(members[a][i]), static_cast<Eigen::Index>(members[b][j]));
                    ++count;
                }
            if (count == 0) continue;
            const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
            out.coupling(ia, ib) = out.coupling(ib, ia) = sum / static_cast<double>(count);
        }
    for (std::size_t a = 0; a < groups; ++a) {
        Community c;
        c.id = a;
        for (auto i : members[a]) c.members.push_back(cw.tickers[i]);
        const double internal = out.coupling(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a));
        if (!std::isnan(internal)) c.internal_coupling = internal;
        out.communities.push_back(std::move(c));
    }
    for (std::size_t a = 0; a < groups; ++a)
        for (std::size_t b = a + 1; b < groups; ++b) {
            const double v = out.coupling(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
            if (!out.fault_line ||
                v < out.coupling(static_cast<Eigen::Index>(out.fault_line->first), static_cast<Eigen::Index>(out.fault_line->second)))
                out.fault_line = std::pair{a, b};
        }
    return out;
}

inline CommunityReport communities(const ReturnPanel& r, Date window_end, const WindowSpec& spec, std::size_t k,
                                   std::uint64_t seed, const AlternatingConfig& learn = {}) {
    const auto end = date_position(r, window_end);
    if (!end) fail(ErrorKind::InsufficientHistory, "no returns on or before " + window_end.to_string());
    return communities_at(r, *end, spec, k, seed, learn);
}

// ---------------------------------------------------------------------------
// Event study

struct EventSpec {
    std::string label;
    Date date;
};

struct EventCell {
    int offset = 0;
    std::size_t window_len = 0;
    std::optional<Date> window_end;
    std::optional<double> defect, mean_correlation;
    std::string note;  // why the cell is empty
};

struct EventDelta {
    std::size_t window_len = 0;
    std::optional<double> delta_defect, delta_correlation;  // value at 0 minus value at -60
};

struct EventRow {
    EventSpec event;
    std::optional<Date> anchor;  // trading date the offsets count from
    bool partial = false;        // some cell lacks history or failed
    std::string error;           // set when the event lies outside the history
    std::vector<EventCell> cells;
    std::vector<EventDelta> deltas;
};

struct EventStudy {
    std::vector<int> offsets;
    std::vector<std::size_t> window_lens;
    double threshold = 0.2;
    std::vector<EventRow> rows;
};

inline const std::vector<int>& default_event_offsets() {
    static const std::vector<int> offsets{-90, -60, -30, -10, 0};
    return offsets;
}

/// Offsets count trading rows from the last return date on or before the
/// event. Cells without enough history are left empty and the row is
/// flagged partial; events outside the history are flagged and skipped.
inline EventStudy event_study(const ReturnPanel& r, const std::vector<EventSpec>& events,
                              const std::vector<int>& offsets, const std::vector<std::size_t>& window_lens,
                              double threshold) {
    if (offsets.empty() || window_lens.empty()) fail(ErrorKind::InvalidArgument, "need offsets and window lengths");
    for (auto w : window_lens) WindowSpec{w, threshold}.validate();

    EventStudy out{offsets, window_lens, threshold, {}};
    const std::size_t per_event = offsets.size() * window_lens.size();
    std::vector<EventCell> cells(events.size() * per_event);
    std::vector<std::optional<std::size_t>> anchors(events.size());
    for (std::size_t e = 0; e < events.size(); ++e) {
        const auto& d = events[e].date;
        if (!r.dates.empty() && d >= r.dates.front() && d <= r.dates.back()) anchors[e] = date_position(r, d);
    }

    parallel_for(cells.size(), [&](std::size_t idx) {
        const std::size_t e = idx / per_event, rest = idx % per_event;
        const std::size_t o = rest / window_lens.size(), w = rest % window_lens.size();
        EventCell& cell = cells[idx];
        cell.offset = offsets[o];
        cell.window_len = window_lens[w];
        if (!anchors[e]) return;
        const auto pos = static_cast<long long>(*anchors[e]) + offsets[o];
        if (pos < 0 || pos >= static_cast<long long>(r.dates.size())) {
            cell.note = "offset outside the history";
            return;
        }
        cell.window_end = r.dates[static_cast<std::size_t>(pos)];
        try {
            const auto wd = window_defect_at(r, static_cast<std::size_t>(pos), {window_lens[w], threshold});
            cell.defect = wd.defect;
            cell.mean_correlation = wd.mean_correlation;
        } catch (const Error& err) {
            cell.note = err.what();
        }
    });

    const auto find_offset = [&](int target) -> std::optional<std::size_t> {
        const auto it = std::find(offsets.begin(), offsets.end(), target);
        if (it == offsets.end()) return std::nullopt;
        return static_cast<std::size_t>(it - offsets.begin());
    };
    const auto before = find_offset(-60), at = find_offset(0);

    for (std::size_t e = 0; e < events.size(); ++e) {
        EventRow row;
        row.event = events[e];
        if (!anchors[e]) {
            row.partial = true;
            row.error = std::string(to_string(ErrorKind::EventOutOfRange)) + ": " + events[e].date.to_string() +
                        " lies outside the return history";
            out.rows.push_back(std::move(row));
            continue;
        }
        row.anchor = r.dates[*anchors[e]];
        for (std::size_t k = 0; k < per_event; ++k) {
            row.cells.push_back(cells[e * per_event + k]);
            row.partial = row.partial || !row.cells.back().defect;
        }
        for (std::size_t w = 0; w < window_lens.size(); ++w) {
            EventDelta delta;
            delta.window_len = window_lens[w];
            if (before && at) {
                const auto& b = row.cells[*before * window_lens.size() + w];
                const auto& a = row.cells[*at * window_lens.size() + w];
                if (a.defect && b.defect) {
                    delta.delta_defect = *a.defect - *b.defect;
                    delta.delta_correlation = *a.mean_correlation - *b.mean_correlation;
                }
            }
            row.deltas.push_back(delta);
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

} // namespace prism
