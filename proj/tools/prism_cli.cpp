#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prism/benchmarks.hpp"
#include "prism/duality.hpp"
#include "prism/finance.hpp"
#include "prism/fixture.hpp"
#include "prism/graph.hpp"
#include "prism/learn.hpp"

using namespace prism;
using json = nlohmann::ordered_json;

namespace {

enum class Format { Csv, Json };

Format parse_format(const std::string& s) {
    if (s == "csv") return Format::Csv;
    if (s == "json") return Format::Json;
    fail(ErrorKind::InvalidArgument, "format must be 'csv' or 'json', got '" + s + "'");
}

std::string num(double v) { return format_double(v); }

json num_or_null(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : ""; }

/// Config echo for CSV output: one `# key: value` line per entry.
void echo_config(std::ostream& out, const json& config) {
    for (const auto& [key, value] : config.items())
        out << "# " << key << ": " << (value.is_string() ? value.get<std::string>() : value.dump()) << '\n';
}

void print_json(std::ostream& out, json body, const json& config) {
    json doc;
    doc["config"] = config;
    for (auto& [key, value] : body.items()) doc[key] = std::move(value);
    out << doc.dump(2) << '\n';
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoError, "cannot open '" + path + "'");
    return in;
}

std::string join(const std::vector<std::string>& xs, char sep = ' ') {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? std::string(1, sep) : "") + xs[i];
    return out;
}

// ---------------------------------------------------------------------------
// Graph and operator inputs shared by defect, project and learn

struct MatrixInput {
    std::string graph_path, laplacian_path;

    void add(CLI::App* cmd) {
        auto* g = cmd->add_option("--graph", graph_path, "Edge list (#nodes header, tab-separated edges)");
        auto* l = cmd->add_option("--laplacian", laplacian_path, "Dense Laplacian, whitespace-delimited");
        g->excludes(l);
    }

    Matrix load() const {
        if (graph_path.empty() == laplacian_path.empty())
            fail(ErrorKind::InvalidArgument, "give exactly one of --graph or --laplacian");
        if (!graph_path.empty()) {
            auto in = open_input(graph_path);
            return laplacian(read_edge_list(in));
        }
        auto in = open_input(laplacian_path);
        Matrix l = read_matrix(in);
        require_square(l, "Laplacian");
        if (!l.allFinite()) fail(ErrorKind::NonFinite, "Laplacian has non-finite entries");
        if ((l - l.transpose()).norm() > 1e-12 * std::max(1.0, l.norm()))
            fail(ErrorKind::NotSymmetric, "Laplacian is not symmetric");
        return l;
    }

    void echo(json& config) const {
        if (!graph_path.empty()) config["graph"] = graph_path;
        if (!laplacian_path.empty()) config["laplacian"] = laplacian_path;
    }
};

struct OperatorInput {
    bool fiedler = false, index_reversal = false;
    std::string operator_arg;

    void add(CLI::App* cmd) {
        auto* f = cmd->add_flag("--fiedler", fiedler, "Pair nodes by Fiedler rank");
        auto* r = cmd->add_flag("--index-reversal", index_reversal, "sigma(i) = n - 1 - i");
        auto* o = cmd->add_option("--operator", operator_arg, "Operator file, or 'identity'");
        f->excludes(r)->excludes(o);
        r->excludes(o);
    }

    std::string mode() const {
        if (fiedler) return "fiedler";
        if (index_reversal) return "index-reversal";
        if (operator_arg == "identity") return "identity";
        if (!operator_arg.empty()) return "file";
        return "";
    }

    DualityOperator load(const Matrix& l, const std::string& fallback) const {
        const std::string m = mode().empty() ? fallback : mode();
        const auto n = static_cast<std::size_t>(l.rows());
        if (m == "fiedler") return fiedler_duality_operator(l);
        if (m == "index-reversal") return index_reversal_operator(n);
        if (m == "identity") return DualityOperator::identity(n);
        if (m == "file") {
            auto in = open_input(operator_arg);
            return read_operator(in);
        }
        fail(ErrorKind::InvalidArgument, "choose an operator: --fiedler, --index-reversal or --operator FILE|identity");
    }

    void echo(json& config, const std::string& fallback) const {
        config["operator"] = mode().empty() ? fallback : mode();
        if (mode() == "file") config["operator_file"] = operator_arg;
    }
};

// ---------------------------------------------------------------------------
// Commands

int cmd_defect(const MatrixInput& input, const OperatorInput& op, Format format) {
    json config{{"command", "defect"}};
    input.echo(config);
    op.echo(config, "");
    const Matrix l = input.load();
    const auto p = op.load(l, "");
    const double d = duality_defect(l, p);
    const double c = commutator_norm(l, p);
    if (format == Format::Json) {
        print_json(std::cout, {{"n", l.rows()}, {"defect", d}, {"l_norm", l.norm()}, {"commutator_norm", c}}, config);
    } else {
        echo_config(std::cout, config);
        std::cout << "n,defect,l_norm,commutator_norm\n"
                  << l.rows() << ',' << num(d) << ',' << num(l.norm()) << ',' << num(c) << '\n';
    }
    return 0;
}

int cmd_project(const MatrixInput& input, const OperatorInput& op, const std::string& out_path, Format format) {
    json config{{"command", "project"}};
    input.echo(config);
    op.echo(config, "");
    config["out"] = out_path;
    const Matrix l = input.load();
    const auto r = commutant_projection(l, op.load(l, ""));
    {
        std::ofstream out(out_path);
        if (!out) fail(ErrorKind::IoError, "cannot write '" + out_path + "'");
        write_matrix(out, r.projected);
    }
    if (format == Format::Json) {
        print_json(std::cout,
                   {{"defect_before", r.defect_before}, {"defect_after", r.defect_after}, {"deformation", r.deformation}},
                   config);
    } else {
        echo_config(std::cout, config);
        std::cout << "defect_before,defect_after,deformation\n"
                  << num(r.defect_before) << ',' << num(r.defect_after) << ',' << num(r.deformation) << '\n';
    }
    return 0;
}

int cmd_learn(const MatrixInput& input, const OperatorInput& op, const AlternatingConfig& cfg,
              const std::string& operator_out, Format format) {
    cfg.validate();
    json config{{"command", "learn"}};
    input.echo(config);
    op.echo(config, "fiedler");
    config["defect_tolerance"] = cfg.defect_tolerance;
    config["step_tolerance"] = cfg.step_tolerance;
    config["max_outer_iterations"] = cfg.max_outer_iterations;
    config["penalty_weight"] = cfg.penalty_weight;
    config["inner_gradient_steps"] = cfg.inner_gradient_steps;
    config["inner_step_tolerance"] = cfg.inner_step_tolerance;
    const Matrix l = input.load();
    const auto r = alternate(l, op.load(l, "fiedler"), cfg);
    if (!operator_out.empty()) {
        std::ofstream out(operator_out);
        if (!out) fail(ErrorKind::IoError, "cannot write '" + operator_out + "'");
        write_operator(out, r.op);
    }
    if (format == Format::Json) {
        print_json(std::cout, to_json(r), config);
    } else {
        echo_config(std::cout, config);
        std::cout << "# initial_defect: " << num(r.initial_defect) << '\n'
                  << "# converged: " << (r.converged ? "true" : "false") << '\n'
                  << "# stop_reason: " << to_string(r.stop_reason) << '\n'
                  << "iteration,defect,objective\n";
        for (std::size_t t = 0; t < r.iterations; ++t)
            std::cout << t + 1 << ',' << num(r.defect_trajectory[t]) << ',' << num(r.objective_trajectory[t]) << '\n';
    }
    return 0;
}

int cmd_synth_rewire(const RewireConfig& base, std::uint64_t seed, std::size_t replicates, Format format) {
    RewireConfig cfg = base;
    if (replicates < 1) fail(ErrorKind::InvalidArgument, "need at least one replicate");
    cfg.seeds = replicate_seeds(seed, replicates);
    json config{{"command", "synth-rewire"},     {"seed", seed},
                {"replicates", replicates},      {"group_size", cfg.group_size},
                {"edge_prob_intra", cfg.edge_prob_intra}, {"edge_prob_cross", cfg.edge_prob_cross},
                {"fractions", cfg.fractions}};
    const auto report = rewire_experiment(cfg);
    if (format == Format::Json) {
        json rows = json::array();
        for (const auto& r : report.rows)
            rows.push_back({{"fraction", r.fraction},
                            {"defect_true", r.defect_true},
                            {"defect_index", r.defect_index},
                            {"modularity", r.modularity}});
        print_json(std::cout,
                   {{"rows", rows},
                    {"sensitivity_true", report.sensitivity_true},
                    {"sensitivity_index", report.sensitivity_index},
                    {"sensitivity_modularity", report.sensitivity_modularity}},
                   config);
    } else {
        echo_config(std::cout, config);
        std::cout << "fraction,defect_true,defect_index,modularity\n";
        for (const auto& r : report.rows)
            std::cout << num(r.fraction) << ',' << num(r.defect_true) << ',' << num(r.defect_index) << ','
                      << num(r.modularity) << '\n';
        std::cout << "# sensitivity_true: " << num(report.sensitivity_true) << '\n'
                  << "# sensitivity_index: " << num(report.sensitivity_index) << '\n'
                  << "# sensitivity_modularity: " << num(report.sensitivity_modularity) << '\n';
    }
    return 0;
}

int cmd_karate_noise(const NoiseConfig& cfg, Format format) {
    json config{{"command", "karate-noise"},
                {"seed", cfg.seed},
                {"trials", cfg.trials},
                {"levels", cfg.levels},
                {"flip_base", to_string(cfg.flip_base)}};
    const auto report = noise_benchmark(cfg);
    if (format == Format::Json) {
        json rows = json::array();
        auto stats = [](const AccuracyStats& s) { return json{{"mean", s.mean}, {"std", s.std}}; };
        for (const auto& r : report.rows)
            rows.push_back({{"level", r.level},
                            {"flips", r.flips},
                            {"baseline", stats(r.baseline)},
                            {"rmt", stats(r.rmt)},
                            {"prism", stats(r.prism)},
                            {"trials", r.trials},
                            {"resampled", r.resampled}});
        print_json(std::cout, {{"rows", rows}}, config);
    } else {
        echo_config(std::cout, config);
        std::cout << "level,flips,baseline_mean,baseline_std,rmt_mean,rmt_std,prism_mean,prism_std,trials,resampled\n";
        for (const auto& r : report.rows)
            std::cout << num(r.level) << ',' << r.flips << ',' << num(r.baseline.mean) << ',' << num(r.baseline.std)
                      << ',' << num(r.rmt.mean) << ',' << num(r.rmt.std) << ',' << num(r.prism.mean) << ','
                      << num(r.prism.std) << ',' << r.trials << ',' << r.resampled << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Finance

struct FinanceArgs {
    std::string prices;
    std::size_t window = 60;
    double threshold = 0.2;
    double min_coverage = 0.95;
    std::uint64_t seed = 0;

    bool has_window = true;

    void add(CLI::App* cmd, std::optional<std::size_t> default_window) {
        has_window = default_window.has_value();
        cmd->add_option("--prices", prices, "Price CSV (date,T1,T2,...)")->required();
        if (has_window) {
            window = *default_window;
            cmd->add_option("--window", window, "Window length in trading days")->capture_default_str();
        }
        cmd->add_option("--threshold", threshold, "Correlation threshold for edges")->capture_default_str();
        cmd->add_option("--min-coverage", min_coverage, "Drop tickers observed on fewer dates")->capture_default_str();
        cmd->add_option("--seed", seed, "Seed for stochastic steps")->capture_default_str();
    }

    json echo(const std::string& sub) const {
        json config{{"command", "finance " + sub}, {"prices", prices}};
        if (has_window) config["window"] = window;
        config["threshold"] = threshold;
        config["min_coverage"] = min_coverage;
        config["seed"] = seed;
        return config;
    }

    ReturnPanel returns() const { return log_returns(load_prices(prices), min_coverage); }
};

std::size_t resolve_end(const ReturnPanel& r, const std::string& date) {
    if (date.empty()) return r.dates.size() - 1;
    const auto pos = date_position(r, parse_date(date));
    if (!pos) fail(ErrorKind::InsufficientHistory, "no returns on or before " + date);
    return *pos;
}

int cmd_finance_window(const FinanceArgs& a, const std::string& date, Format format) {
    json config = a.echo("window");
    config["date"] = date.empty() ? "last" : date;
    const auto r = a.returns();
    const auto w = window_defect_at(r, resolve_end(r, date), {a.window, a.threshold});
    if (format == Format::Json) {
        print_json(std::cout,
                   {{"window_end", w.window_end.to_string()},
                    {"window_len", w.window_len},
                    {"mean_corr", w.mean_correlation},
                    {"defect", w.defect},
                    {"component_size", w.component.size()},
                    {"edges", w.edges},
                    {"excluded", w.excluded},
                    {"constant", w.constant},
                    {"dropped", r.dropped}},
                   config);
    } else {
        echo_config(std::cout, config);
        std::cout << "# dropped: " << join(r.dropped) << '\n'
                  << "# excluded: " << join(w.excluded) << '\n'
                  << "# constant: " << join(w.constant) << '\n'
                  << "window_end,window_len,mean_corr,defect,component_size,edges\n"
                  << w.window_end.to_string() << ',' << w.window_len << ',' << num(w.mean_correlation) << ','
                  << num(w.defect) << ',' << w.component.size() << ',' << w.edges << '\n';
    }
    return 0;
}

int cmd_finance_rolling(const FinanceArgs& a, std::size_t stride, Format format) {
    json config = a.echo("rolling");
    config["stride"] = stride;
    const auto r = a.returns();
    const auto s = rolling_defect(r, {a.window, a.threshold}, stride);
    if (format == Format::Json) {
        json records = json::array(), skipped = json::array();
        for (const auto& x : s.records)
            records.push_back({{"window_end", x.window_end.to_string()},
                               {"window_len", x.window_len},
                               {"mean_corr", x.mean_correlation},
                               {"defect", x.defect}});
        for (const auto& x : s.skipped) skipped.push_back({{"window_end", x.window_end.to_string()}, {"reason", x.reason}});
        print_json(std::cout, {{"records", records}, {"slope", s.slope}, {"skipped", skipped}, {"dropped", r.dropped}},
                   config);
    } else {
        echo_config(std::cout, config);
        std::cout << "# dropped: " << join(r.dropped) << '\n' << "window_end,window_len,mean_corr,defect\n";
        for (const auto& x : s.records)
            std::cout << x.window_end.to_string() << ',' << x.window_len << ',' << num(x.mean_correlation) << ','
                      << num(x.defect) << '\n';
        std::cout << "# slope: " << num(s.slope) << '\n';
        for (const auto& x : s.skipped) std::cout << "# skipped: " << x.window_end.to_string() << ' ' << x.reason << '\n';
    }
    return 0;
}

int cmd_finance_communities(const FinanceArgs& a, const std::string& date, std::size_t k, Format format) {
    json config = a.echo("communities");
    config["date"] = date.empty() ? "last" : date;
    config["k"] = k;
    const auto r = a.returns();
    const auto rep = communities_at(r, resolve_end(r, date), {a.window, a.threshold}, k, a.seed);
    const auto g = rep.coupling.rows();
    if (format == Format::Json) {
        json comms = json::array(), coupling = json::array();
        for (const auto& c : rep.communities)
            comms.push_back({{"id", c.id}, {"members", c.members}, {"internal_coupling", num_or_null(c.internal_coupling)}});
        for (Eigen::Index i = 0; i < g; ++i) {
            json row = json::array();
            for (Eigen::Index j = 0; j < g; ++j)
                row.push_back(std::isnan(rep.coupling(i, j)) ? json(nullptr) : json(rep.coupling(i, j)));
            coupling.push_back(row);
        }
        json fault = rep.fault_line ? json::array({rep.fault_line->first, rep.fault_line->second}) : json(nullptr);
        print_json(std::cout,
                   {{"window_end", rep.window_end.to_string()},
                    {"window_len", rep.window_len},
                    {"communities", comms},
                    {"coupling", coupling},
                    {"fault_line", fault},
                    {"excluded", rep.excluded},
                    {"dropped", r.dropped},
                    {"learn_iterations", rep.learn_iterations}},
                   config);
    } else {
        echo_config(std::cout, config);
        std::cout << "# window_end: " << rep.window_end.to_string() << '\n'
                  << "# excluded: " << join(rep.excluded) << '\n'
                  << "# dropped: " << join(r.dropped) << '\n';
        if (rep.fault_line) std::cout << "# fault_line: " << rep.fault_line->first << ' ' << rep.fault_line->second << '\n';
        std::cout << "community,members,internal_coupling";
        for (Eigen::Index j = 0; j < g; ++j) std::cout << ",coupling_" << j;
        std::cout << '\n';
        for (const auto& c : rep.communities) {
            std::cout << c.id << ',' << join(c.members) << ',' << opt_num(c.internal_coupling);
            for (Eigen::Index j = 0; j < g; ++j) {
                const double v = rep.coupling(static_cast<Eigen::Index>(c.id), j);
                std::cout << ',' << (std::isnan(v) ? "" : num(v));
            }
            std::cout << '\n';
        }
    }
    return 0;
}

std::vector<EventSpec> parse_events(const std::vector<std::string>& args, const std::string& fixture_config) {
    std::vector<EventSpec> events;
    for (const auto& a : args) {
        const auto eq = a.find('=');
        if (eq == std::string::npos || eq == 0) fail(ErrorKind::InvalidArgument, "events are LABEL=YYYY-MM-DD, got '" + a + "'");
        events.push_back({a.substr(0, eq), parse_date(a.substr(eq + 1))});
    }
    if (!fixture_config.empty()) {
        auto in = open_input(fixture_config);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::ParseError, fixture_config + ": " + e.what());
        }
        const auto cfg = parse_fixture_config(j);
        const auto dates = fixture_dates(cfg);
        for (const auto& e : cfg.events) events.push_back({e.label, dates[e.day]});
    }
    if (events.empty()) fail(ErrorKind::InvalidArgument, "no events given (--event or --events-from)");
    return events;
}

int cmd_finance_events(const FinanceArgs& a, const std::vector<EventSpec>& events, const std::vector<int>& offsets,
                       const std::vector<std::size_t>& windows, Format format) {
    json config = a.echo("events");
    config["windows"] = windows;
    config["offsets"] = offsets;
    json ev = json::array();
    for (const auto& e : events) ev.push_back(e.label + "=" + e.date.to_string());
    config["events"] = ev;
    const auto r = a.returns();
    const auto study = event_study(r, events, offsets, windows, a.threshold);
    if (format == Format::Json) {
        json rows = json::array();
        for (const auto& row : study.rows) {
            json cells = json::array(), deltas = json::array();
            for (const auto& c : row.cells)
                cells.push_back({{"offset", c.offset},
                                 {"window_len", c.window_len},
                                 {"window_end", c.window_end ? json(c.window_end->to_string()) : json(nullptr)},
                                 {"defect", num_or_null(c.defect)},
                                 {"mean_corr", num_or_null(c.mean_correlation)},
                                 {"note", c.note}});
            for (const auto& d : row.deltas)
                deltas.push_back({{"window_len", d.window_len},
                                  {"delta_defect", num_or_null(d.delta_defect)},
                                  {"delta_corr", num_or_null(d.delta_correlation)}});
            rows.push_back({{"label", row.event.label},
                            {"date", row.event.date.to_string()},
                            {"anchor", row.anchor ? json(row.anchor->to_string()) : json(nullptr)},
                            {"partial", row.partial},
                            {"error", row.error},
                            {"cells", cells},
                            {"deltas", deltas}});
        }
        print_json(std::cout, {{"events", rows}}, config);
    } else {
        echo_config(std::cout, config);
        std::cout << "event,date,offset,window_len,window_end,mean_corr,defect,partial,note\n";
        for (const auto& row : study.rows) {
            if (!row.error.empty()) {
                std::cout << row.event.label << ',' << row.event.date.to_string() << ",,,,,,true," << row.error << '\n';
                continue;
            }
            for (const auto& c : row.cells)
                std::cout << row.event.label << ',' << row.event.date.to_string() << ',' << c.offset << ','
                          << c.window_len << ',' << (c.window_end ? c.window_end->to_string() : "") << ','
                          << opt_num(c.mean_correlation) << ',' << opt_num(c.defect) << ','
                          << (row.partial ? "true" : "false") << ',' << c.note << '\n';
        }
        for (const auto& row : study.rows)
            for (const auto& d : row.deltas)
                std::cout << "# delta " << row.event.label << " window " << d.window_len
                          << ": delta_defect=" << opt_num(d.delta_defect) << " delta_corr=" << opt_num(d.delta_correlation)
                          << '\n';
    }
    return 0;
}

int cmd_fixture(const std::string& config_path, const std::string& out_path) {
    auto in = open_input(config_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::ParseError, config_path + ": " + e.what());
    }
    const auto cfg = parse_fixture_config(j);
    const auto panel = generate_fixture(cfg);
    if (out_path.empty() || out_path == "-") {
        write_prices(std::cout, panel, cfg.decimals);
        return 0;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write '" + out_path + "'");
    write_prices(out, panel, cfg.decimals);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"prism: duality defect experiments"};
    app.require_subcommand(1);
    std::string format_name;

    auto add_format = [&](CLI::App* cmd, const std::string& fallback) {
        cmd->add_option("--format", format_name, "csv or json (default " + fallback + ")");
    };
    auto format_for = [&](const std::string& fallback) { return parse_format(format_name.empty() ? fallback : format_name); };

    // defect
    MatrixInput defect_in;
    OperatorInput defect_op;
    auto* defect = app.add_subcommand("defect", "Duality defect of a Laplacian under an operator");
    defect_in.add(defect);
    defect_op.add(defect);
    add_format(defect, "csv");

    // project
    MatrixInput project_in;
    OperatorInput project_op;
    std::string project_out;
    auto* project = app.add_subcommand("project", "Project a Laplacian onto the operator's commutant");
    project_in.add(project);
    project_op.add(project);
    project->add_option("--out", project_out, "Where to write the projected matrix")->required();
    add_format(project, "json");

    // learn
    MatrixInput learn_in;
    OperatorInput learn_op;
    AlternatingConfig learn_cfg;
    std::string learn_operator_out;
    auto* learn = app.add_subcommand("learn", "Alternate projection and operator updates");
    learn_in.add(learn);
    learn_op.add(learn);
    learn->add_option("--defect-tol", learn_cfg.defect_tolerance)->capture_default_str();
    learn->add_option("--step-tol", learn_cfg.step_tolerance)->capture_default_str();
    learn->add_option("--max-iter", learn_cfg.max_outer_iterations)->capture_default_str();
    learn->add_option("--penalty", learn_cfg.penalty_weight)->capture_default_str();
    learn->add_option("--inner-steps", learn_cfg.inner_gradient_steps)->capture_default_str();
    learn->add_option("--inner-tol", learn_cfg.inner_step_tolerance)->capture_default_str();
    learn->add_option("--operator-out", learn_operator_out, "Write the learned operator here");
    add_format(learn, "json");

    // synth-rewire
    RewireConfig rewire_cfg;
    std::uint64_t rewire_seed = 0;
    std::size_t rewire_replicates = 20;
    auto* synth = app.add_subcommand("synth-rewire", "Defect and modularity of rewired dual networks");
    synth->add_option("--fractions", rewire_cfg.fractions, "Rewiring fractions")->delimiter(',')->capture_default_str();
    synth->add_option("--seed", rewire_seed)->capture_default_str();
    synth->add_option("--replicates", rewire_replicates)->capture_default_str();
    synth->add_option("--group-size", rewire_cfg.group_size)->capture_default_str();
    synth->add_option("--p-intra", rewire_cfg.edge_prob_intra)->capture_default_str();
    synth->add_option("--p-cross", rewire_cfg.edge_prob_cross)->capture_default_str();
    add_format(synth, "csv");

    // karate-noise
    NoiseConfig noise_cfg;
    std::string flip_base = "edges";
    auto* noise = app.add_subcommand("karate-noise", "Bipartition accuracy on the karate club under edge flips");
    noise->add_option("--levels", noise_cfg.levels, "Noise levels")->delimiter(',')->capture_default_str();
    noise->add_option("--trials", noise_cfg.trials)->capture_default_str();
    noise->add_option("--seed", noise_cfg.seed)->capture_default_str();
    noise->add_option("--flip-base", flip_base, "Flips per level as a fraction of 'edges' or node 'pairs'")
        ->capture_default_str();
    add_format(noise, "csv");

    // finance
    auto* finance = app.add_subcommand("finance", "Correlation-network defect on price panels");
    finance->require_subcommand(1);

    FinanceArgs window_args;
    std::string window_date;
    auto* fwindow = finance->add_subcommand("window", "Defect of one window");
    window_args.add(fwindow, 60);
    fwindow->add_option("--date", window_date, "Window end (default: last date)");
    add_format(fwindow, "csv");

    FinanceArgs rolling_args;
    std::size_t stride = 20;
    auto* frolling = finance->add_subcommand("rolling", "Defect over rolling windows");
    rolling_args.add(frolling, 60);
    frolling->add_option("--stride", stride, "Rows between window ends")->capture_default_str();
    add_format(frolling, "csv");

    FinanceArgs comm_args;
    std::string comm_date;
    std::size_t comm_k = 6;
    auto* fcomm = finance->add_subcommand("communities", "Unsupervised k-way communities and coupling");
    comm_args.add(fcomm, 90);
    fcomm->add_option("--date", comm_date, "Window end (default: last date)");
    fcomm->add_option("--k", comm_k)->capture_default_str();
    add_format(fcomm, "json");

    FinanceArgs event_args;
    std::vector<std::string> event_list;
    std::string events_from;
    std::vector<int> offsets = default_event_offsets();
    std::vector<std::size_t> event_windows{30, 60, 90};
    auto* fevents = finance->add_subcommand("events", "Defect and correlation around events");
    event_args.add(fevents, std::nullopt);
    fevents->add_option("--event", event_list, "LABEL=YYYY-MM-DD (repeatable)");
    fevents->add_option("--events-from", events_from, "Fixture config whose events to use");
    fevents->add_option("--offsets", offsets, "Trading-day offsets")->delimiter(',')->capture_default_str();
    fevents->add_option("--windows", event_windows, "Window lengths")->delimiter(',')->capture_default_str();
    add_format(fevents, "csv");

    // fixture
    std::string fixture_config, fixture_out;
    auto* fixture = app.add_subcommand("fixture", "Generate a synthetic price panel from a config");
    fixture->add_option("--config", fixture_config, "JSON fixture config")->required();
    fixture->add_option("--out", fixture_out, "Output CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*defect) return cmd_defect(defect_in, defect_op, format_for("csv"));
        if (*project) return cmd_project(project_in, project_op, project_out, format_for("json"));
        if (*learn) return cmd_learn(learn_in, learn_op, learn_cfg, learn_operator_out, format_for("json"));
        if (*synth) return cmd_synth_rewire(rewire_cfg, rewire_seed, rewire_replicates, format_for("csv"));
        if (*noise) {
            noise_cfg.flip_base = parse_flip_base(flip_base);
            return cmd_karate_noise(noise_cfg, format_for("csv"));
        }
        if (*fwindow) return cmd_finance_window(window_args, window_date, format_for("csv"));
        if (*frolling) return cmd_finance_rolling(rolling_args, stride, format_for("csv"));
        if (*fcomm) return cmd_finance_communities(comm_args, comm_date, comm_k, format_for("json"));
        if (*fevents) {
            return cmd_finance_events(event_args, parse_events(event_list, events_from), offsets, event_windows,
                                      format_for("csv"));
        }
        if (*fixture) return cmd_fixture(fixture_config, fixture_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.is_input_error() ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
