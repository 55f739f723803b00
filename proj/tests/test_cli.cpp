#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "prism/karate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
};

fs::path scratch() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("prism_cli_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write(const std::string& name, const std::string& text) {
    const auto p = scratch() / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
}

Run run(const std::string& args, const std::string& env = "") {
    const auto err = scratch() / "stderr.txt";
    const std::string cmd = env + (env.empty() ? "" : " ") + "'" + PRISM_CLI + "' " + args + " 2>'" + err.string() + "'";
    Run r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t got = 0;
    while ((got = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, got);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
}

std::string fixture(const std::string& name) { return std::string(PRISM_SOURCE_DIR) + "/fixtures/" + name; }

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> comments;

    double num(std::size_t row, const std::string& col) const {
        const auto it = std::find(header.begin(), header.end(), col);
        return std::stod(rows.at(row).at(static_cast<std::size_t>(it - header.begin())));
    }
};

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

Csv parse_csv(const std::string& text) {
    Csv c;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') c.comments.push_back(line);
        else if (c.header.empty()) c.header = split_commas(line);
        else c.rows.push_back(split_commas(line));
    }
    return c;
}

std::string comment_value(const Csv& c, const std::string& key) {
    for (const auto& line : c.comments)
        if (line.rfind("# " + key + ": ", 0) == 0) return line.substr(key.size() + 4);
    return {};
}

const fs::path& path_graph() {
    static const fs::path p = write("path.tsv", "#nodes: a,b,c\na\tb\t1\nb\tc\t1\n");
    return p;
}

const fs::path& karate_graph() {
    static const fs::path p = [] {
        std::ostringstream out;
        prism::write_edge_list(out, prism::karate_club().graph);
        return write("karate.tsv", out.str());
    }();
    return p;
}

struct ScratchCleanup : ::testing::Environment {
    void TearDown() override { fs::remove_all(scratch()); }
};
const auto* const cleanup = ::testing::AddGlobalTestEnvironment(new ScratchCleanup);

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

} // namespace

// ---------------------------------------------------------------------------
// defect / project / learn

TEST(CliDefect, PathWithSwapOperator) {
    const auto op = write("swap.txt", "#pairing: 3\n0\t1\n2\t2\n");
    const auto r = run("defect --graph " + q(path_graph()) + " --operator " + q(op));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = parse_csv(r.out);
    // ||[L,P]|| = sqrt(6), ||L|| = sqrt(10)
    EXPECT_NEAR(csv.num(0, "defect"), std::sqrt(0.6), 1e-12);
    EXPECT_NEAR(csv.num(0, "commutator_norm"), std::sqrt(6.0), 1e-12);
    EXPECT_NEAR(csv.num(0, "l_norm"), std::sqrt(10.0), 1e-12);
    EXPECT_EQ(comment_value(csv, "command"), "defect");
}

TEST(CliDefect, IdentityOperatorOnKarate) {
    const auto r = run("defect --graph " + q(karate_graph()) + " --operator identity --format json");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(r.out).at("defect").get<double>(), 0.0);
}

TEST(CliDefect, InputErrorsExitTwo) {
    const auto bad = write("bad_op.txt", "#dense: 3\n1 0 0\n0 1 0\n0 0 2\n");
    auto r = run("defect --graph " + q(path_graph()) + " --operator " + q(bad));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("involution"), std::string::npos) << r.err;

    r = run("defect --graph " + q(path_graph()));
    EXPECT_EQ(r.code, 2);
    r = run("defect --graph /nonexistent/graph.tsv --fiedler");
    EXPECT_EQ(r.code, 2);
    r = run("defect --graph " + q(path_graph()) + " --fiedler --index-reversal");
    EXPECT_EQ(r.code, 2);
    const auto wrong_size = write("swap4.txt", "#pairing: 4\n0\t1\n2\t3\n");
    r = run("defect --graph " + q(path_graph()) + " --operator " + q(wrong_size));
    EXPECT_EQ(r.code, 2);
}

TEST(CliProject, IdentityRoundTrip) {
    const auto out = scratch() / "identity_lp.txt";
    const auto r = run("project --graph " + q(karate_graph()) + " --operator identity --out " + q(out));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto summary = json::parse(r.out);
    EXPECT_EQ(summary.at("deformation").get<double>(), 0.0);

    std::istringstream text(slurp(out));
    const auto l = prism::laplacian(prism::karate_club().graph);
    for (Eigen::Index i = 0; i < l.rows(); ++i)
        for (Eigen::Index j = 0; j < l.cols(); ++j) {
            double v = 0;
            text >> v;
            EXPECT_NEAR(v, l(i, j), 1e-12);
        }
}

TEST(CliProject, PathDeformationAndIdempotence) {
    const auto op = write("swap_p.txt", "#pairing: 3\n0\t1\n2\t2\n");
    const auto out = scratch() / "path_lp.txt";
    auto r = run("project --graph " + q(path_graph()) + " --operator " + q(op) + " --out " + q(out));
    ASSERT_EQ(r.code, 0) << r.err;
    auto summary = json::parse(r.out);
    EXPECT_NEAR(summary.at("deformation").get<double>(), std::sqrt(1.5), 1e-12);
    EXPECT_NEAR(summary.at("defect_before").get<double>(), std::sqrt(0.6), 1e-12);
    EXPECT_LE(summary.at("defect_after").get<double>(), 1e-12);

    const auto again = scratch() / "path_lp2.txt";
    r = run("project --laplacian " + q(out) + " --operator " + q(op) + " --out " + q(again));
    ASSERT_EQ(r.code, 0) << r.err;
    summary = json::parse(r.out);
    EXPECT_LE(summary.at("deformation").get<double>(), 1e-10);
}

TEST(CliLearn, CommutingPairConvergesAtOnce) {
    const auto r = run("learn --graph " + q(path_graph()));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_TRUE(j.at("converged").get<bool>());
    EXPECT_EQ(j.at("iterations").get<int>(), 1);
    EXPECT_EQ(j.at("final_defect").get<double>(), 0.0);
}

TEST(CliLearn, KarateTrajectoryIsNonIncreasing) {
    const auto op_out = scratch() / "karate_op.txt";
    const auto r = run("learn --graph " + q(karate_graph()) + " --operator-out " + q(op_out));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    const auto objective = j.at("objective_trajectory").get<std::vector<double>>();
    ASSERT_FALSE(objective.empty());
    for (std::size_t k = 1; k < objective.size(); ++k) EXPECT_LE(objective[k], objective[k - 1] + 1e-12);
    EXPECT_LE(j.at("final_defect").get<double>(), j.at("initial_defect").get<double>());
    EXPECT_NE(slurp(op_out).find("#pairing: 34"), std::string::npos);

    // the written operator reproduces the final defect
    const auto d = run("defect --graph " + q(karate_graph()) + " --operator " + q(op_out) + " --format json");
    ASSERT_EQ(d.code, 0) << d.err;
    EXPECT_NEAR(json::parse(d.out).at("defect").get<double>(), j.at("final_defect").get<double>(), 1e-12);
}

TEST(CliLearn, SingleIterationBudget) {
    const auto r = run("learn --graph " + q(karate_graph()) + " --index-reversal --max-iter 1");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j.at("iterations").get<int>(), 1);
    // a single step either meets a tolerance or reports non-convergence
    EXPECT_EQ(j.at("converged").get<bool>(), j.at("stop_reason").get<std::string>() != "max_iterations");
}

// ---------------------------------------------------------------------------
// experiments

TEST(CliSynthRewire, DefaultShape) {
    const auto r = run("synth-rewire");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = parse_csv(r.out);
    EXPECT_EQ(csv.header, (std::vector<std::string>{"fraction", "defect_true", "defect_index", "modularity"}));
    ASSERT_EQ(csv.rows.size(), 5u);
    EXPECT_LE(csv.num(0, "defect_true"), 1e-10);
    for (const char* key : {"sensitivity_true", "sensitivity_index", "sensitivity_modularity"})
        EXPECT_FALSE(comment_value(csv, key).empty()) << key;
    EXPECT_EQ(comment_value(csv, "seed"), "0");
}

TEST(CliSynthRewire, ZeroFractionAndDeterminism) {
    const auto r = run("synth-rewire --fractions 0 --seed 9 --replicates 5");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = parse_csv(r.out);
    ASSERT_EQ(csv.rows.size(), 1u);
    EXPECT_LE(csv.num(0, "defect_true"), 1e-10);
    EXPECT_EQ(run("synth-rewire --seed 4 --replicates 4").out, run("synth-rewire --seed 4 --replicates 4").out);
    EXPECT_EQ(run("synth-rewire --fractions 0.5,x").code, 2);
}

TEST(CliKarateNoise, CleanLevelAndShape) {
    auto r = run("karate-noise --levels 0 --trials 1");
    ASSERT_EQ(r.code, 0) << r.err;
    auto csv = parse_csv(r.out);
    ASSERT_EQ(csv.rows.size(), 1u);
    EXPECT_EQ(csv.num(0, "prism_mean"), 1.0);
    EXPECT_NEAR(csv.num(0, "baseline_mean"), 32.0 / 34.0, 1e-12);

    r = run("karate-noise --trials 4");
    ASSERT_EQ(r.code, 0) << r.err;
    csv = parse_csv(r.out);
    ASSERT_EQ(csv.rows.size(), 6u);
    for (const char* col : {"level", "baseline_mean", "baseline_std", "rmt_mean", "rmt_std", "prism_mean", "prism_std"})
        EXPECT_NE(std::find(csv.header.begin(), csv.header.end(), col), csv.header.end()) << col;
    EXPECT_EQ(r.out, run("karate-noise --trials 4").out);
    EXPECT_EQ(run("karate-noise --levels 1.5").code, 2);
}

// ---------------------------------------------------------------------------
// finance

TEST(CliFinance, WindowGolden) {
    const auto r = run("finance window --prices " + fixture("synthetic_universe.csv") + " --date 2024-04-19");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = parse_csv(r.out);
    ASSERT_EQ(csv.rows.size(), 1u);
    EXPECT_EQ(csv.rows[0][0], "2024-04-19");
    EXPECT_NEAR(csv.num(0, "mean_corr"), 0.15967072572865, 1e-12);
    EXPECT_NEAR(csv.num(0, "defect"), 0.31939533188075, 1e-10);
    EXPECT_EQ(csv.num(0, "edges"), 126);
    EXPECT_EQ(comment_value(csv, "dropped"), "F5");
}

TEST(CliFinance, EventDeltaSignature) {
    const auto r = run("finance events --prices " + fixture("synthetic_event.csv") + " --event spike=2023-12-29 --format json");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    const auto& deltas = j.at("events").at(0).at("deltas");
    ASSERT_EQ(deltas.size(), 3u);
    for (const auto& d : deltas) {
        EXPECT_GT(d.at("delta_corr").get<double>(), 0.0);
        EXPECT_LT(d.at("delta_defect").get<double>(), 0.0);
    }
}

TEST(CliFinance, CommunitiesFaultLine) {
    const auto r = run("finance communities --prices " + fixture("fault_line.csv") + " --k 4");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    const auto fault = j.at("fault_line").get<std::vector<std::size_t>>();
    std::string sectors;
    for (auto c : fault) sectors += j.at("communities").at(c).at("members").at(0).get<std::string>()[0];
    std::sort(sectors.begin(), sectors.end());
    EXPECT_EQ(sectors, "AB");
}

TEST(CliFinance, InputErrors) {
    EXPECT_EQ(run("finance window --prices /nonexistent/prices.csv").code, 2);
    EXPECT_EQ(run("finance window --prices " + fixture("synthetic_universe.csv") + " --date 2024-02-30").code, 2);
    EXPECT_EQ(run("finance window --prices " + fixture("synthetic_universe.csv") + " --threshold 2").code, 2);
    EXPECT_EQ(run("finance events --prices " + fixture("synthetic_universe.csv") + " --event nodate").code, 2);
    // numeric failure: history shorter than the window
    EXPECT_EQ(run("finance window --prices " + fixture("synthetic_universe.csv") + " --window 5000").code, 2);
}

TEST(CliFixture, RegeneratesCheckedInPanel) {
    const auto r = run("fixture --config " + fixture("synthetic_event.json"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, slurp(fixture("synthetic_event.csv")));
}

// ---------------------------------------------------------------------------
// cross-format consistency and thread independence

TEST(CliFormats, JsonAndCsvCarryTheSameNumbers) {
    {
        const auto csv = parse_csv(run("synth-rewire --replicates 3").out);
        const auto j = json::parse(run("synth-rewire --replicates 3 --format json").out);
        ASSERT_EQ(j.at("rows").size(), csv.rows.size());
        for (std::size_t i = 0; i < csv.rows.size(); ++i)
            for (const auto& col : csv.header) EXPECT_EQ(j["rows"][i].at(col).get<double>(), csv.num(i, col)) << col;
        EXPECT_EQ(j.at("sensitivity_true").get<double>(), std::stod(comment_value(csv, "sensitivity_true")));
    }
    {
        const auto csv = parse_csv(run("karate-noise --trials 3").out);
        const auto j = json::parse(run("karate-noise --trials 3 --format json").out);
        ASSERT_EQ(j.at("rows").size(), csv.rows.size());
        for (std::size_t i = 0; i < csv.rows.size(); ++i) {
            const auto& row = j["rows"][i];
            EXPECT_EQ(row.at("level").get<double>(), csv.num(i, "level"));
            for (const char* m : {"baseline", "rmt", "prism"}) {
                EXPECT_EQ(row.at(m).at("mean").get<double>(), csv.num(i, std::string(m) + "_mean"));
                EXPECT_EQ(row.at(m).at("std").get<double>(), csv.num(i, std::string(m) + "_std"));
            }
        }
    }
    {
        const std::string args = "finance rolling --prices " + fixture("synthetic_drift.csv");
        const auto csv = parse_csv(run(args).out);
        const auto j = json::parse(run(args + " --format json").out);
        ASSERT_EQ(j.at("records").size(), csv.rows.size());
        for (std::size_t i = 0; i < csv.rows.size(); ++i) {
            EXPECT_EQ(j["records"][i].at("window_end").get<std::string>(), csv.rows[i][0]);
            EXPECT_EQ(j["records"][i].at("defect").get<double>(), csv.num(i, "defect"));
            EXPECT_EQ(j["records"][i].at("mean_corr").get<double>(), csv.num(i, "mean_corr"));
        }
        EXPECT_EQ(j.at("slope").get<double>(), std::stod(comment_value(csv, "slope")));
    }
    {
        const std::string args = "finance window --prices " + fixture("synthetic_shocked.csv");
        const auto csv = parse_csv(run(args).out);
        const auto j = json::parse(run(args + " --format json").out);
        for (const char* col : {"mean_corr", "defect", "component_size", "edges"})
            EXPECT_EQ(j.at(col).get<double>(), csv.num(0, col)) << col;
    }
}

TEST(CliDeterminism, OneThreadMatchesMany) {
    const std::vector<std::string> commands = {
        "synth-rewire --replicates 6 --seed 3",
        "karate-noise --trials 8 --seed 5",
        "finance rolling --prices " + fixture("synthetic_universe.csv") + " --stride 10",
        "finance communities --prices " + fixture("synthetic_universe.csv") + " --seed 2",
        "finance events --prices " + fixture("synthetic_event.csv") + " --events-from " + fixture("synthetic_event.json"),
    };
    for (const auto& c : commands) {
        const auto one = run(c, "PRISM_THREADS=1");
        const auto many = run(c, "PRISM_THREADS=8");
        ASSERT_EQ(one.code, 0) << c << "\n" << one.err;
        EXPECT_EQ(one.out, many.out) << c;
        EXPECT_EQ(one.out, run(c).out) << c;
    }
}
