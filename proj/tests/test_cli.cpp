#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "levykit/cli.hpp"

using namespace levykit;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("levykit_test_" + name)).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// runs cfg into a file and returns (exit code, file contents, stderr)
struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run_to_file(RunConfig cfg, const std::string& name) {
    cfg.output = temp_path(name);
    std::filesystem::remove(cfg.output);
    std::ostringstream err;
    const int code = run(cfg, err);
    return {code, slurp(cfg.output), err.str()};
}

// value of column `col` in the first data row of a CSV table
double csv_value(const std::string& text, const std::string& col) {
    std::istringstream in(text);
    std::string line, header;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') {
            header = line;
            break;
        }
    std::getline(in, line);
    std::istringstream h(header), r(line);
    std::string name, cell;
    while (std::getline(h, name, ',')) {
        std::getline(r, cell, ',');
        if (name == col) return std::stod(cell);
    }
    ADD_FAILURE() << "no column " << col;
    return 0.0;
}

}  // namespace

TEST(Cli, TailsRow) {
    RunConfig c;
    c.command = "tails";
    c.spec = "bessel:1.0";
    c.params["t"] = {1.0};
    const auto o = run_to_file(c, "tails.csv");
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(o.out.rfind("# levykit v0.1.0\n", 0), 0u);
    EXPECT_NEAR(csv_value(o.out, "nu_dot"), 0.398942, 1e-6);
    EXPECT_LT(csv_value(o.out, "nu_dot_err"), 1e-8);
}

TEST(Cli, EigenAtZero) {
    RunConfig c;
    c.command = "eigen";
    c.params["x"] = {1.0};
    c.params["gamma"] = {0.0};
    const auto o = run_to_file(c, "eigen.csv");
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(csv_value(o.out, "A"), 1.0);
    EXPECT_EQ(csv_value(o.out, "C"), 1.0);
}

TEST(Cli, LocalTimeTailRatio) {
    RunConfig c;
    c.command = "mc";
    c.subcommand = "localtime-tail";
    c.params = {{"x", {0.0}}, {"ell", {1.0}}, {"t", {1e4}}, {"n", {100000}}};
    const auto o = run_to_file(c, "lt.csv");
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_NEAR(csv_value(o.out, "ratio"), 1.0, 0.03);
    EXPECT_GT(csv_value(o.out, "std_error"), 0.0);
    EXPECT_EQ(csv_value(o.out, "seed"), static_cast<double>(default_seed));
}

TEST(Cli, ByteIdenticalReruns) {
    RunConfig c;
    c.command = "penalize";
    c.subcommand = "mean";
    c.params = {{"u", {0.5, 1.0}}, {"n", {20000}}};
    c.seed = 77;
    const auto a = run_to_file(c, "rep_a.csv");
    c.threads = 3;
    const auto b = run_to_file(c, "rep_b.csv");
    ASSERT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
    c.format = "json";
    EXPECT_EQ(run_to_file(c, "rep_c.json").out, run_to_file(c, "rep_d.json").out);
}

TEST(Cli, JsonMirrorsColumns) {
    RunConfig c;
    c.command = "subexp-check";
    c.text["family"] = "pareto:0.5";
    c.params = {{"x", {1e4}}, {"c", {3.0}}};
    c.format = "json";
    const auto o = run_to_file(c, "subexp.json");
    ASSERT_EQ(o.code, 0) << o.err;
    const auto j = nlohmann::json::parse(o.out);
    EXPECT_EQ(j["levykit"], "0.1.0");
    ASSERT_EQ(j["rows"].size(), 1u);
    const double r = j["rows"][0]["mixed_ratio"];
    EXPECT_GE(r, 0.95);
    EXPECT_LE(r, 1.05);
    EXPECT_TRUE(j["rows"][0].contains("abs_err_est"));
}

TEST(Cli, MalformedJsonReportsLineAndColumn) {
    RunConfig c;
    c.command = "tails";
    c.spec = "{\"kind\": \"bessel\",\n  \"delta\": 1.0,,\n}";
    c.params["t"] = {1.0};
    const auto o = run_to_file(c, "bad.csv");
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find("line 2, column 16"), std::string::npos) << o.err;
}

TEST(Cli, ValidationAndToleranceCodes) {
    RunConfig c;
    c.command = "nope";
    EXPECT_EQ(run_to_file(c, "x1").code, 2);
    c.command = "tails";
    EXPECT_EQ(run_to_file(c, "x2").code, 2);  // missing --t
    c.params["t"] = {1.0};
    c.spec = "bessel:2.5";
    EXPECT_EQ(run_to_file(c, "x3").code, 2);
    c.command = "penalize";
    c.subcommand = "mean";
    c.spec = "bessel:1.0";
    c.weight = R"({"kind":"indicator","ell0":0})";
    c.params["u"] = {1.0};
    EXPECT_EQ(run_to_file(c, "x4").code, 2);
    // x^2/2t far beyond what the eigenfunction sums resolve
    RunConfig d;
    d.command = "density";
    d.params = {{"t", {1e-3}}, {"x", {5.0}}, {"y", {5.1}}};
    EXPECT_EQ(run_to_file(d, "x5").code, 3);
}

TEST(Cli, ConfigFromJson) {
    const auto c = config_from_json(R"({"command":"mc","subcommand":"levy-exponent",
        "spec":{"kind":"bessel","delta":1.5},"params":{"lambda":[1,2],"n":1000,"method":"exact"},"seed":5})");
    EXPECT_EQ(c.command, "mc");
    EXPECT_EQ(c.params.at("lambda").size(), 2u);
    EXPECT_EQ(c.params.at("n")[0], 1000.0);
    EXPECT_EQ(c.text.at("method"), "exact");
    EXPECT_EQ(c.seed, 5u);
    const auto o = run_to_file(c, "cfg.csv");
    EXPECT_EQ(o.code, 0) << o.err;
    EXPECT_THROW(config_from_json("{\"command\": }"), ValidationError);
}

TEST(Cli, CustomSpecWithMeasure) {
    RunConfig c;
    c.command = "density";
    c.spec = R"({"kind":"custom","scale":"x","speed_density":"2"})";
    c.measure = R"({"kind":"bessel","alpha":0.5})";
    c.params = {{"t", {1.0}}, {"x", {0.5}}, {"y", {0.7}}};
    c.tol = 1e-8;
    const auto o = run_to_file(c, "custom.csv");
    ASSERT_EQ(o.code, 0) << o.err;
    // reflected BM, w.r.t. m(dy) = 2dy
    EXPECT_NEAR(csv_value(o.out, "value"), 0.292614374479334, 1e-8);
}
