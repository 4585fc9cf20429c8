// Runs the acceptance batch: every scenario under --scenarios once for the
// verdicts and once more for the byte comparison of the CSV outputs.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "cmpgeo/comparison.hpp"
#include "cmpgeo/experiment.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
namespace ex = cmpgeo::experiment;
using namespace cmpgeo;
using finsler::Vec;
using finsler::vec2;

namespace {

struct Batch {
    std::map<std::string, ex::RunReport> reports;
    double seconds = 0.0;
};

Batch run_batch(const std::vector<fs::path>& files, const fs::path& out) {
    Batch b;
    auto t0 = std::chrono::steady_clock::now();
    for (const auto& f : files) {
        ex::Scenario s = ex::load_scenario(f);
        ex::RunReport r = ex::run(s);
        ex::write_outputs(r, out / s.name);
        b.reports.emplace(s.name, std::move(r));
    }
    b.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return b;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Verdicts {
public:
    explicit Verdicts(const Batch& b) : b_(b) {}

    // every check of the scenarios whose name starts with prefix, filtered by check name
    bool scenarios(const std::string& prefix, std::ostream& why,
                   const std::function<bool(const std::string&)>& keep = {}, double max_seconds = 0) const {
        int matched = 0;
        bool ok = true;
        for (const auto& [name, r] : b_.reports) {
            if (name.rfind(prefix, 0) != 0) continue;
            ++matched;
            for (const auto& e : r.errors) {
                ok = false;
                why << "    " << name << ": " << e << "\n";
            }
            int used = 0;
            for (const auto& c : r.checks) {
                if (keep && !keep(c.name)) continue;
                ++used;
                if (!c.pass) {
                    ok = false;
                    why << "    " << name << ": " << c.name << " = " << ex::fmt(c.value) << "\n";
                }
            }
            if (used == 0) {
                ok = false;
                why << "    " << name << ": no checks\n";
            }
            if (max_seconds > 0 && r.wall_seconds > max_seconds) {
                ok = false;
                why << "    " << name << ": took " << r.wall_seconds << " s\n";
            }
        }
        if (matched == 0) {
            why << "    no scenario named " << prefix << "*\n";
            return false;
        }
        return ok;
    }

private:
    const Batch& b_;
};

bool contains(const std::string& s, const char* part) { return s.find(part) != std::string::npos; }

// Skew chart against the Brioschi formula at 50 random points.
bool skew_oracle(std::ostream& why) {
    finsler::ChartSpec s;
    s.family = "skew";
    s.lo = {-1, -1};
    s.hi = {1, 1};
    s.params = {{"a", 0.5}, {"b", 0.3}};
    auto c = finsler::make_chart(s);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-0.9, 0.9), a(0, 2 * oracle::pi);
    double worst = 0;
    for (int i = 0; i < 50; ++i) {
        Vec x = vec2(u(rng), u(rng));
        double th = a(rng);
        double K = finsler::flag_curvature(c, x, vec2(std::cos(th), std::sin(th)), vec2(-std::sin(th), std::cos(th)));
        worst = std::max(worst, std::abs(K - oracle::skew_gauss_curvature(0.5, 0.3, x[0], x[1])));
    }
    why << "    skew chart vs Brioschi: max |K - K_oracle| = " << worst << "\n";
    return worst <= 1e-3;
}

bool angle_operator(std::ostream& why) {
    finsler::ChartSpec s;
    s.lo = {-6, -6};
    s.hi = {6, 6};
    auto c = finsler::make_chart(s);
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-4, 4);
    double worst = 0;
    int done = 0;
    while (done < 10) {
        Vec p = vec2(u(rng), u(rng)), x = vec2(u(rng), u(rng)), y = vec2(u(rng), u(rng));
        if ((p - x).norm() < 0.5 || (p - y).norm() < 0.5 || (x - y).norm() < 0.5) continue;
        auto t = comparison::build_forward_triangle(c, p, x, y);
        Eigen::VectorXd P = p, X = x, Y = y;
        worst = std::max(worst, std::abs(t.angle_x - oracle::euclid_angle(P, X, Y)));
        worst = std::max(worst, std::abs(t.angle_y - oracle::euclid_angle(P, Y, X)));
        ++done;
    }
    Vec dir = vec2(0.6, -0.8);
    auto g = finsler::integrate_geodesic(c, vec2(1, 1) + dir, dir, 1.0);
    double radial = finsler::forward_angle(c, vec2(1, 1), g, 0.0);
    why << "    Euclidean angles: max error " << worst << "; radial extension " << radial << "\n";
    return worst <= 1e-4 && std::abs(radial - oracle::pi) <= 1e-3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance batch"};
    std::string dir;
    std::string work = "acceptance_out";
    app.add_option("--scenarios", dir, "scenario directory")->required()->check(CLI::ExistingDirectory);
    app.add_option("--work-dir", work, "where the two batch runs write their outputs");
    CLI11_PARSE(app, argc, argv);

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".scn") files.push_back(e.path());
    std::sort(files.begin(), files.end());

    fs::remove_all(work);
    Batch first, second;
    try {
        first = run_batch(files, fs::path(work) / "run1");
        second = run_batch(files, fs::path(work) / "run2");
    } catch (const std::exception& e) {
        std::cerr << "batch aborted: " << e.what() << "\n";
        return 2;
    }
    Verdicts v(first);

    auto not_conv = [](const std::string& n) { return !contains(n, "convexity"); };
    auto conv = [](const std::string& n) { return contains(n, "convexity"); };
    auto clairaut = [](const std::string& n) { return contains(n, "Clairaut") || contains(n, "traced"); };
    auto length = [](const std::string& n) { return contains(n, "lower bound") || contains(n, "segments"); };

    std::vector<std::pair<int, std::function<bool(std::ostream&)>>> criteria = {
        {1, [&](std::ostream& w) { return v.scenarios("c01_", w, {}, 1.0); }},
        {2, [&](std::ostream& w) { return v.scenarios("c02_", w, {}, 1.0); }},
        {3, [&](std::ostream& w) { return v.scenarios("c03_", w, clairaut); }},
        {4, [&](std::ostream& w) { return v.scenarios("c03_", w, length); }},
        {5, [&](std::ostream& w) { return v.scenarios("c05_", w); }},
        {6, [&](std::ostream& w) { return v.scenarios("c06_", w); }},
        {7, [&](std::ostream& w) { return v.scenarios("c07_", w); }},
        {8, [&](std::ostream& w) {
             bool a = v.scenarios("c08_", w, not_conv);
             bool b = skew_oracle(w);
             return a && b;
         }},
        {9, [&](std::ostream& w) {
             bool ok = true;
             for (const char* n : {"c08_curvature_sphere", "c08_curvature_hyperbolic", "c08_curvature_skew",
                                   "c08_curvature_warped"})
                 ok = v.scenarios(n, w, conv) && ok;
             return ok;
         }},
        {10, angle_operator},
        {11, [&](std::ostream& w) { return v.scenarios("c11_", w); }},
        {12, [&](std::ostream& w) { return v.scenarios("c12_", w); }},
        {13, [&](std::ostream& w) { return v.scenarios("c13_", w); }},
        {14, [&](std::ostream& w) {
             int compared = 0, differ = 0;
             for (const auto& e : fs::recursive_directory_iterator(fs::path(work) / "run1")) {
                 if (e.path().extension() != ".csv") continue;
                 auto rel = fs::relative(e.path(), fs::path(work) / "run1");
                 ++compared;
                 if (slurp(e.path()) != slurp(fs::path(work) / "run2" / rel)) {
                     ++differ;
                     w << "    differs: " << rel.string() << "\n";
                 }
             }
             w << "    " << compared << " CSV files compared; batch took " << first.seconds << " s and "
               << second.seconds << " s\n";
             return compared > 0 && differ == 0 && first.seconds < 300 && second.seconds < 300;
         }},
    };

    bool all = true;
    for (auto& [n, fn] : criteria) {
        std::ostringstream why;
        bool ok = false;
        try {
            ok = fn(why);
        } catch (const std::exception& e) {
            why << "    exception: " << e.what() << "\n";
        }
        std::cout << "criterion " << n << ": " << (ok ? "PASS" : "FAIL") << "\n" << why.str();
        all = all && ok;
    }
    return all ? 0 : 1;
}
