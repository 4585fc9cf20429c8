#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cmpgeo/experiment.hpp"

namespace ex = cmpgeo::experiment;

int main(int argc, char** argv) {
    CLI::App app{"Comparison-geometry workbench: model surfaces, Finsler charts, triangle comparison"};
    app.require_subcommand(1);

    std::vector<std::string> files;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    double tol_scale = 1.0;

    auto* run = app.add_subcommand("run", "run scenario files and write report.json plus CSV tables");
    run->add_option("files", files, "scenario files")->required()->check(CLI::ExistingFile);
    auto* seed_opt = run->add_option("--seed", seed, "override the scenario seed");
    run->add_option("--out-dir", out_dir, "output directory (one subdirectory per scenario)");
    run->add_option("--tolerance-scale", tol_scale, "multiply every tolerance")->check(CLI::PositiveNumber);

    auto* list = app.add_subcommand("list", "list surface families, chart families and experiment kinds");

    std::string report_file;
    auto* report = app.add_subcommand("report", "summarize a report.json");
    report->add_option("file", report_file, "report.json")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // usage errors share exit code 2 with configuration errors
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*list) {
            std::cout << ex::list_builtins();
            return 0;
        }
        if (*report) {
            std::ifstream in(report_file);
            std::cout << ex::summarize(nlohmann::json::parse(in));
            return 0;
        }
        ex::RunOptions opts;
        if (*seed_opt) opts.seed = seed;
        opts.tolerance_scale = tol_scale;
        bool all = true;
        for (const auto& f : files) {
            ex::Scenario s = ex::load_scenario(f);
            ex::RunReport r = ex::run(s, opts);
            ex::write_outputs(r, std::filesystem::path(out_dir) / s.name);
            std::cout << ex::summarize(ex::to_json(r));
            all = all && r.passed;
        }
        return all ? 0 : 1;
    } catch (const cmpgeo::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
