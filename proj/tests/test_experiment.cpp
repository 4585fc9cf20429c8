#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cmpgeo/experiment.hpp"

using namespace cmpgeo;
using namespace cmpgeo::experiment;

namespace {

const char* kScenario = R"(# comment line
name = tiny
kind = growth
seed = 7
chart.family = euclidean
chart.dim = 2
chart.lo = -6, -6
chart.hi = 6, 6
param.p = 0, 0
param.t = 1, 2, 4
param.samples_per_shell = 8
param.expect.alpha = 1
tolerance.alpha = 0.01
)";

std::string config_error(const std::string& text) {
    try {
        parse_scenario(text);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ConfigInvalid);
        return e.what();
    }
    return "";
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("scenario text round-trips") {
    Scenario s = parse_scenario(kScenario);
    CHECK(s.name == "tiny");
    CHECK(s.seed == 7);
    REQUIRE(s.chart);
    CHECK(s.chart->lo == std::vector<double>{-6, -6});
    CHECK(s.list("t") == std::vector<double>{1, 2, 4});
    Scenario back = parse_scenario(to_text(s));
    CHECK(to_text(back) == to_text(s));
    CHECK(back.params == s.params);
    CHECK(back.tolerances == s.tolerances);
}

TEST_CASE("surface records inside a scenario round-trip") {
    Scenario s = parse_scenario("name = m\nkind = model-build\nseed = 1\nsurface.family = sinh\n"
                                "surface.param.k = 2.5\nsurface.T_max = 6\n");
    REQUIRE(s.surface);
    CHECK(s.surface->params.at("k") == 2.5);
    CHECK(s.surface->t_max == 6);
    Scenario back = parse_scenario(to_text(s));
    CHECK(back.surface->params == s.surface->params);
}

TEST_CASE("config errors name the field") {
    std::string base = "name = x\nkind = growth\nseed = 1\n";
    CHECK(config_error(base + "tolerance.alpha = small\n").find("tolerance.alpha") != std::string::npos);
    CHECK(config_error(base + "chart.colour = red\n").find("chart.colour") != std::string::npos);
    CHECK(config_error(base + "seed = 2\n").find("seed") != std::string::npos);
    CHECK(config_error("name = x\nkind = dance\nseed = 1\n").find("kind") != std::string::npos);
    CHECK(config_error("name = x\nkind = growth\n").find("seed") != std::string::npos);
    CHECK(config_error(base + "just words\n").find("line 4") != std::string::npos);
}

TEST_CASE("bad list entries name the parameter") {
    Scenario s = parse_scenario("name = x\nkind = growth\nseed = 1\nparam.t = 1, two\n");
    try {
        s.list("t");
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("param.t") != std::string::npos);
    }
}

TEST_CASE("missing tolerance is reported") {
    Scenario s = parse_scenario(kScenario);
    try {
        s.tolerance("diameter");
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("tolerance.diameter") != std::string::npos);
    }
}

TEST_CASE("list shows the builtin families") {
    std::string l = list_builtins();
    CHECK(l.find("exp(-t^2) * tanh(t)") != std::string::npos);
    CHECK(l.find("f(t) = t") != std::string::npos);
    for (const auto& k : experiment_kinds()) CHECK(l.find(k) != std::string::npos);
}

TEST_CASE("CSV header carries the schema version") {
    Table t{"margins", {"a", "b"}, {}};
    t.add({fmt(0.1), fmt(2.0)});
    std::string csv = to_csv(t);
    CHECK(csv.rfind("# cmpgeo-csv v1 table=margins\na,b\n", 0) == 0);
    CHECK(fmt(0.1) == "0.1");
}

TEST_CASE("runs are deterministic and write their outputs") {
    Scenario s = parse_scenario(kScenario);
    auto tmp = std::filesystem::temp_directory_path() / "cmpgeo_test_experiment";
    std::filesystem::remove_all(tmp);
    RunReport a = run(s), b = run(s);
    CHECK(a.passed);
    REQUIRE(!a.tables.empty());
    write_outputs(a, tmp / "a");
    write_outputs(b, tmp / "b");
    for (const auto& t : a.tables) {
        std::string name = t.name + ".csv";
        CHECK(slurp(tmp / "a" / name) == slurp(tmp / "b" / name));
        CHECK(!slurp(tmp / "a" / name).empty());
    }
    auto j = nlohmann::json::parse(slurp(tmp / "a" / "report.json"));
    CHECK(j.at("summary").at("passed").get<bool>());
    CHECK(summarize(j).find("tiny") != std::string::npos);
    std::filesystem::remove_all(tmp);
}

TEST_CASE("tolerance scale multiplies every tolerance") {
    Scenario s = parse_scenario(kScenario);
    RunOptions o;
    o.tolerance_scale = 3;
    RunReport r = run(s, o);
    CHECK(r.tolerance_scale == 3);
    bool seen = false;
    for (const auto& c : r.checks)
        if (c.name == "fitted exponent") {
            seen = true;
            CHECK(c.tolerance == doctest::Approx(0.03));
        }
    CHECK(seen);
}
