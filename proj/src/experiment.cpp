#include "cmpgeo/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

#include "cmpgeo/comparison.hpp"
#include "cmpgeo/finsler.hpp"

namespace cmpgeo::experiment {

namespace {

constexpr double kPi = 3.14159265358979323846;

using finsler::Vec;

std::string trim(const std::string& s) {
    auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    return out;
}

double to_number(const std::string& text, const std::string& field) {
    try {
        std::size_t used = 0;
        double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::ConfigInvalid, field + ": not a number '" + text + "'");
    }
}

std::vector<double> to_list(const std::string& text, const std::string& field) {
    std::vector<double> out;
    for (const auto& item : split(text, ',')) out.push_back(to_number(item, field));
    return out;
}

std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string exact_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + exact(v[i]);
    return out;
}

void set_surface_key(model::SurfaceSpec& s, const std::string& key, const std::string& value,
                     const std::string& field) {
    if (key == "family") s.family = value;
    else if (key == "base_family") s.base_family = value;
    else if (key == "T_max") s.t_max = to_number(value, field);
    else if (key == "t_min") s.t_min = to_number(value, field);
    else if (key.rfind("param.", 0) == 0) s.params[key.substr(6)] = to_number(value, field);
    else throw Error(ErrorKind::ConfigInvalid, field + ": unknown key");
}

void surface_text(std::ostringstream& os, const std::string& prefix, const model::SurfaceSpec& s) {
    os << prefix << "family = " << s.family << "\n";
    if (!s.base_family.empty()) os << prefix << "base_family = " << s.base_family << "\n";
    os << prefix << "T_max = " << exact(s.t_max) << "\n";
    os << prefix << "t_min = " << exact(s.t_min) << "\n";
    for (const auto& [k, v] : s.params) os << prefix << "param." << k << " = " << exact(v) << "\n";
}

} // namespace

const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> kinds = {"model-build", "geodesic-trace", "distance-check", "tct-batch",
                                                   "critical-scan", "growth", "chain-demo", "curvature-probe"};
    return kinds;
}

// ---- scenario ----

double Scenario::num(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end()) throw Error(ErrorKind::ConfigInvalid, "param." + key + ": missing");
    return to_number(it->second, "param." + key);
}

double Scenario::num(const std::string& key, double fallback) const { return has(key) ? num(key) : fallback; }

std::vector<double> Scenario::list(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end()) throw Error(ErrorKind::ConfigInvalid, "param." + key + ": missing");
    return to_list(it->second, "param." + key);
}

std::string Scenario::word(const std::string& key, const std::string& fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

double Scenario::tolerance(const std::string& key) const {
    auto it = tolerances.find(key);
    if (it == tolerances.end()) throw Error(ErrorKind::ConfigInvalid, "tolerance." + key + ": missing");
    return it->second;
}

Scenario parse_scenario(const std::string& text) {
    Scenario s;
    std::map<std::string, int> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool has_seed = false;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::ConfigInvalid, "line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (seen[key]++) throw Error(ErrorKind::ConfigInvalid, key + ": given twice");
        if (key == "name") {
            s.name = value;
        } else if (key == "kind") {
            s.kind = value;
        } else if (key == "seed") {
            try {
                std::size_t used = 0;
                s.seed = std::stoull(value, &used);
                if (used != value.size()) throw std::invalid_argument(value);
            } catch (const std::exception&) {
                throw Error(ErrorKind::ConfigInvalid, "seed: not an unsigned integer '" + value + "'");
            }
            has_seed = true;
        } else if (key.rfind("surface.", 0) == 0) {
            if (!s.surface) s.surface.emplace();
            set_surface_key(*s.surface, key.substr(8), value, key);
        } else if (key.rfind("chart.surface.", 0) == 0) {
            if (!s.chart) s.chart.emplace();
            set_surface_key(s.chart->surface, key.substr(14), value, key);
        } else if (key.rfind("chart.", 0) == 0) {
            if (!s.chart) s.chart.emplace();
            std::string k = key.substr(6);
            if (k == "family") s.chart->family = value;
            else if (k == "dim") s.chart->dim = static_cast<int>(to_number(value, key));
            else if (k == "lo") s.chart->lo = to_list(value, key);
            else if (k == "hi") s.chart->hi = to_list(value, key);
            else if (k.rfind("param.", 0) == 0) s.chart->params[k.substr(6)] = to_number(value, key);
            else throw Error(ErrorKind::ConfigInvalid, key + ": unknown key");
        } else if (key.rfind("param.", 0) == 0) {
            s.params[key.substr(6)] = value;
        } else if (key.rfind("tolerance.", 0) == 0) {
            s.tolerances[key.substr(10)] = to_number(value, key);
        } else {
            throw Error(ErrorKind::ConfigInvalid, key + ": unknown key");
        }
    }
    if (s.name.empty()) throw Error(ErrorKind::ConfigInvalid, "name: missing");
    const auto& kinds = experiment_kinds();
    if (std::find(kinds.begin(), kinds.end(), s.kind) == kinds.end())
        throw Error(ErrorKind::ConfigInvalid, "kind: unknown experiment '" + s.kind + "'");
    if (!has_seed) throw Error(ErrorKind::ConfigInvalid, "seed: missing");
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigInvalid, "cannot read scenario file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

std::string to_text(const Scenario& s) {
    std::ostringstream os;
    os << "name = " << s.name << "\n";
    os << "kind = " << s.kind << "\n";
    os << "seed = " << s.seed << "\n";
    if (s.surface) surface_text(os, "surface.", *s.surface);
    if (s.chart) {
        const auto& c = *s.chart;
        os << "chart.family = " << c.family << "\n";
        os << "chart.dim = " << c.dim << "\n";
        os << "chart.lo = " << exact_list(c.lo) << "\n";
        os << "chart.hi = " << exact_list(c.hi) << "\n";
        for (const auto& [k, v] : c.params) os << "chart.param." << k << " = " << exact(v) << "\n";
        if (c.family == "warped_polar") surface_text(os, "chart.surface.", c.surface);
    }
    for (const auto& [k, v] : s.params) os << "param." << k << " = " << v << "\n";
    for (const auto& [k, v] : s.tolerances) os << "tolerance." << k << " = " << exact(v) << "\n";
    return os.str();
}

// ---- output ----

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::string to_csv(const Table& t) {
    std::ostringstream os;
    os << "# cmpgeo-csv v" << kCsvSchema << " table=" << t.name << "\n";
    for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
    os << "\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << "\n";
    }
    return os.str();
}

nlohmann::json to_json(const RunReport& r) {
    nlohmann::json j;
    j["tool_version"] = r.version;
    j["scenario"] = {{"name", r.scenario.name}, {"kind", r.scenario.kind}, {"seed", r.scenario.seed},
                     {"text", to_text(r.scenario)}};
    j["tolerance_scale"] = r.tolerance_scale;
    nlohmann::json checks = nlohmann::json::array();
    int failed = 0;
    for (const auto& c : r.checks) {
        checks.push_back({{"name", c.name},
                          {"value", c.value},
                          {"relation", c.relation},
                          {"target", c.target},
                          {"tolerance", c.tolerance},
                          {"pass", c.pass},
                          {"detail", c.detail}});
        if (!c.pass) ++failed;
    }
    j["checks"] = checks;
    j["errors"] = r.errors;
    j["details"] = r.details;
    nlohmann::json tables = nlohmann::json::array();
    for (const auto& t : r.tables) tables.push_back({{"name", t.name}, {"file", t.name + ".csv"}, {"rows", t.rows.size()}});
    j["tables"] = tables;
    j["summary"] = {{"passed", r.passed},
                    {"checks", r.checks.size()},
                    {"failed", failed},
                    {"errors", r.errors.size()}};
    j["wall_seconds"] = r.wall_seconds;
    return j;
}

void write_outputs(const RunReport& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "report.json");
        out << to_json(r).dump(2) << "\n";
    }
    for (const auto& t : r.tables) {
        std::ofstream out(dir / (t.name + ".csv"));
        out << to_csv(t);
    }
}

std::string summarize(const nlohmann::json& report) {
    std::ostringstream os;
    const auto& sc = report.at("scenario");
    os << sc.at("name").get<std::string>() << " [" << sc.at("kind").get<std::string>()
       << "] seed=" << sc.at("seed").get<std::uint64_t>() << "\n";
    for (const auto& c : report.at("checks")) {
        os << (c.at("pass").get<bool>() ? "  PASS " : "  FAIL ") << c.at("name").get<std::string>() << ": "
           << fmt(c.at("value").get<double>()) << " " << c.at("relation").get<std::string>() << " "
           << fmt(c.at("target").get<double>()) << " (tol " << fmt(c.at("tolerance").get<double>()) << ")";
        auto d = c.at("detail").get<std::string>();
        if (!d.empty()) os << "  " << d;
        os << "\n";
    }
    for (const auto& e : report.at("errors")) os << "  ERROR " << e.get<std::string>() << "\n";
    const auto& s = report.at("summary");
    os << (s.at("passed").get<bool>() ? "PASSED" : "FAILED") << " (" << s.at("failed").get<int>() << " of "
       << s.at("checks").get<int>() << " checks failed, " << s.at("errors").get<int>() << " errors)\n";
    return os.str();
}

std::string list_builtins() {
    std::ostringstream os;
    auto block = [&](const char* title, const std::vector<model::FamilyInfo>& fams) {
        os << title << ":\n";
        for (const auto& f : fams) {
            os << "  " << f.name << "  " << f.formula << "\n";
            for (const auto& [k, v] : f.params) os << "      " << k << ": " << v << "\n";
        }
    };
    block("surface families", model::warp_families());
    block("chart families", finsler::chart_families());
    os << "experiment kinds:\n";
    for (const auto& k : experiment_kinds()) os << "  " << k << "\n";
    return os.str();
}

// ---- experiments ----

namespace {

struct Ctx {
    const Scenario& s;
    RunReport& rep;
    double scale;
    std::mt19937_64 rng;

    Ctx(const Scenario& sc, RunReport& r, double sc_scale, std::uint64_t seed) : s(sc), rep(r), scale(sc_scale), rng(seed) {}

    // 53-bit uniforms, independent of the standard library's distributions
    double u01() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * u01(); }
    double uniform(const std::vector<double>& r) { return uniform(r.at(0), r.at(1)); }

    double tol(const std::string& key) const { return s.tolerance(key) * scale; }

    void check(const std::string& name, double value, const std::string& rel, double target, double tolerance,
               const std::string& detail = "") {
        Check c{name, value, rel, target, tolerance, false, detail};
        if (rel == "<=") c.pass = value <= target + tolerance;
        else if (rel == ">=") c.pass = value >= target - tolerance;
        else c.pass = std::abs(value - target) <= tolerance;
        if (std::isnan(value)) c.pass = false;
        rep.checks.push_back(c);
    }
    void flag(const std::string& name, bool ok, const std::string& detail = "") {
        check(name, ok ? 1.0 : 0.0, "==", 1.0, 0.0, detail);
    }
    void error(const std::string& item, const std::exception& e) { rep.errors.push_back(item + ": " + e.what()); }

    model::ModelSurface surface() const {
        if (!s.surface) throw Error(ErrorKind::ConfigInvalid, "surface.family: missing");
        return model::make_surface(*s.surface);
    }
    finsler::FinslerChart chart() const {
        if (!s.chart) throw Error(ErrorKind::ConfigInvalid, "chart.family: missing");
        return finsler::make_chart(*s.chart);
    }
    Vec point(const std::string& key, int n) const {
        if (!s.has(key)) return Vec::Zero(n);
        auto v = s.list(key);
        if (static_cast<int>(v.size()) != n) throw Error(ErrorKind::ConfigInvalid, "param." + key + ": wrong dimension");
        Vec p(n);
        for (int i = 0; i < n; ++i) p[i] = v[i];
        return p;
    }
};

std::vector<std::string> vec_cells(const Vec& v) {
    std::vector<std::string> out;
    for (int i = 0; i < v.size(); ++i) out.push_back(fmt(v[i]));
    return out;
}

std::vector<std::string> vec_columns(const std::string& prefix, int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

template <class... T>
std::vector<std::string> concat(T&&... parts) {
    std::vector<std::string> out;
    (out.insert(out.end(), parts.begin(), parts.end()), ...);
    return out;
}

void model_build(Ctx& c) {
    model::ModelSurface m = c.surface();
    auto& d = c.rep.details;
    d["family"] = m.spec.family;
    for (const auto& f : model::warp_families())
        if (f.name == m.spec.family) d["formula"] = f.formula;
    d["T_max"] = m.t_max();
    d["t_min"] = m.t_min();
    d["von_mangoldt"] = m.von_mangoldt;
    if (m.rho) d["rho"] = *m.rho;
    if (m.G_at_rho) d["G_at_rho"] = *m.G_at_rho;

    if (c.s.has("G_small.t")) {
        double t = c.s.num("G_small.t");
        double G = m.G(t);
        d["G_small"] = {{"t", t}, {"G", G}};
        if (c.s.has("expect.G_small")) {
            double e = c.s.num("expect.G_small");
            c.check("G(t_small) relative error", std::abs(G - e) / std::abs(e), "<=", 0.0, c.tol("G_small_rel"),
                    "G = " + fmt(G));
        }
    }
    if (c.s.has("monotone.range")) {
        auto r = c.s.list("monotone.range");
        int n = static_cast<int>(c.s.num("monotone.n", 10000));
        double worst = -std::numeric_limits<double>::infinity();
        double prev = m.G(r.at(0));
        for (int i = 1; i < n; ++i) {
            double g = m.G(r[0] + (r[1] - r[0]) * i / (n - 1));
            worst = std::max(worst, g - prev);
            prev = g;
        }
        c.check("largest increase of G on the grid", worst, "<=", 0.0, c.tol("monotone"));
    }
    if (c.s.has("expect.negative_at")) {
        for (double t : c.s.list("expect.negative_at")) c.check("G(" + fmt(t) + ")", m.G(t), "<=", 0.0, 0.0);
    }
    if (c.s.has("expect.von_mangoldt"))
        c.flag("von Mangoldt classification", m.von_mangoldt == (c.s.num("expect.von_mangoldt") != 0));
    if (c.s.has("expect.rho")) {
        double e = c.s.num("expect.rho");
        c.check("critical radius", m.rho ? *m.rho : std::nan(""), "==", e, c.tol("rho"));
    }

    Table prof{"profile", {"t", "f", "df", "G"}, {}};
    {
        std::vector<double> r = c.s.has("profile.range") ? c.s.list("profile.range")
                                                         : std::vector<double>{0.01, std::min(m.t_max(), 5.0)};
        int n = static_cast<int>(c.s.num("profile.n", 200));
        for (int i = 0; i < n; ++i) {
            double t = r.at(0) + (r.at(1) - r[0]) * i / (n - 1);
            auto w = m.warp.eval(t);
            prof.add({fmt(t), fmt(w.f), fmt(w.df), fmt(m.G(t))});
        }
    }
    c.rep.tables.push_back(std::move(prof));

    if (c.s.has("roundtrip.range")) {
        auto r = c.s.list("roundtrip.range");
        double step = c.s.num("roundtrip.step", 1e-3);
        model::WarpFunction back = model::warp_from_curvature(m.curvature, r.at(1) + 0.1, step);
        Table tab{"roundtrip", {"t", "f", "f_roundtrip", "relative_error"}, {}};
        double worst = 0;
        const int n = 2001;
        for (int i = 0; i < n; ++i) {
            double t = r.at(0) + (r[1] - r[0]) * i / (n - 1);
            double f = m.f(t), fb = back.f(t);
            double rel = std::abs(fb - f) / std::abs(f);
            worst = std::max(worst, rel);
            if (i % 20 == 0) tab.add({fmt(t), fmt(f), fmt(fb), fmt(rel)});
        }
        c.check("warp/curvature roundtrip relative error", worst, "<=", 0.0, c.tol("roundtrip"));
        c.rep.tables.push_back(std::move(tab));
    }

    if (c.s.has("cut.t_x")) {
        Table tab{"cut_locus", {"t_x", "empty", "t_cut", "conjugate_s", "conjugate_t"}, {}};
        for (double tx : c.s.list("cut.t_x")) {
            try {
                model::CutLocus cut = model::cut_locus(m, {tx, 0.0});
                auto conj = model::first_conjugate_point(m, tx);
                double ct = conj ? *conj - tx : std::nan("");
                tab.add({fmt(tx), cut.empty ? "1" : "0", fmt(cut.empty ? std::nan("") : cut.t_cut),
                         fmt(conj ? *conj : std::nan("")), fmt(ct)});
                if (c.s.has("expect.cut_empty"))
                    c.flag("cut locus of (" + fmt(tx) + ", 0) empty = " + c.s.word("expect.cut_empty"),
                           cut.empty == (c.s.num("expect.cut_empty") != 0));
                if (!cut.empty && c.s.tolerances.count("cut_conjugate"))
                    c.check("cut start vs conjugate point, t_x = " + fmt(tx), cut.t_cut, "==", ct, c.tol("cut_conjugate"));
            } catch (const Error& e) {
                c.error("cut locus t_x = " + fmt(tx), e);
            }
        }
        c.rep.tables.push_back(std::move(tab));
    }
}

void geodesic_trace(Ctx& c) {
    model::ModelSurface m = c.surface();
    const int count = static_cast<int>(c.s.num("count"));
    const double Lmax = c.s.num("length_max");
    const auto tr = c.s.list("t_range");
    const double margin = c.s.num("psi_margin", 0.05);
    const double step = c.s.num("step", 1e-3);
    const double min_speed = c.s.num("segment.min_dt", 0.05);
    Table tab{"geodesics",
              {"i", "t0", "psi", "length", "nu", "clairaut_drift", "seg_t0", "seg_t1", "seg_length", "bound"},
              {}};
    double worst_drift = 0, worst_gap = std::numeric_limits<double>::infinity();
    int traced = 0, segments = 0, pole_redrawn = 0;
    for (int i = 0; (traced < count || segments < count) && i < 10 * count; ++i) {
        double t0 = c.uniform(tr), psi = c.uniform(margin, kPi - margin), L = c.uniform(1.0, Lmax);
        try {
            model::ModelGeodesic g = model::integrate_geodesic(m, {t0, 0.0}, psi, L, step);
            double drift = g.max_clairaut_drift(m);
            if (traced < count) {
                worst_drift = std::max(worst_drift, drift);
                ++traced;
            }
            std::vector<std::string> row{std::to_string(i), fmt(t0), fmt(psi), fmt(L), fmt(g.nu), fmt(drift)};
            // leading t-monotone stretch, stopped short of the turning point
            const auto& S = g.samples;
            double sign = S[0].dt > 0 ? 1.0 : -1.0;
            std::size_t j = 0;
            while (j + 1 < S.size() && sign * S[j + 1].dt >= min_speed) ++j;
            bool used = false;
            if (segments < count && j >= 2 && sign * S[0].dt >= min_speed) {
                double ta = std::min(S[0].t, S[j].t), tb = std::max(S[0].t, S[j].t);
                try {
                    double bound = model::length_lower_bound(m, g.nu, ta, tb);
                    worst_gap = std::min(worst_gap, S[j].s - bound);
                    ++segments;
                    used = true;
                    for (auto v : {ta, tb, S[j].s, bound}) row.push_back(fmt(v));
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::IntegrandSingular) throw;
                }
            }
            if (!used) row.insert(row.end(), 4, "");
            tab.add(std::move(row));
        } catch (const Error& e) {
            // draws that graze the pole are redrawn, not failures
            if (e.kind() == ErrorKind::PoleCrossing) ++pole_redrawn;
            else c.error("geodesic " + std::to_string(i), e);
        }
    }
    c.rep.details["pole_redrawn"] = pole_redrawn;
    c.check("geodesics traced", traced, ">=", count, 0.0);
    c.check("max Clairaut drift", worst_drift, "<=", 0.0, c.tol("clairaut"));
    c.check("t-monotone segments checked", segments, ">=", count, 0.0);
    c.check("min of length - lower bound", worst_gap, ">=", 0.0, c.tol("length_bound"));
    c.rep.tables.push_back(std::move(tab));
}

void distance_check(Ctx& c) {
    model::ModelSurface m = c.surface();
    const std::string mode = c.s.word("mode", "law-of-cosines");
    if (mode != "law-of-cosines" && mode != "self-consistency")
        throw Error(ErrorKind::ConfigInvalid, "param.mode: expected law-of-cosines or self-consistency");
    const int count = static_cast<int>(c.s.num("count"));
    const auto tr = c.s.list("t_range");
    const auto dr = c.s.list("dtheta_range");
    Table tab{"triangles",
              {"i", "t_x", "t_y", "side", "dtheta", "angle_x", "angle_y", "angle_p", "expected_x", "expected_y",
               "expected_p", "realized_side"},
              {}};
    double worst_angle = 0, worst_side = 0;
    int done = 0;
    for (int i = 0; i < count; ++i) {
        double tx = c.uniform(tr), ty = c.uniform(tr), dth = c.uniform(dr);
        try {
            double side, ex, ey, ep;
            if (mode == "law-of-cosines") {
                side = std::sqrt(tx * tx + ty * ty - 2 * tx * ty * std::cos(dth));
                auto ang = [](double a, double b, double opp) {
                    return std::acos(std::clamp((a * a + b * b - opp * opp) / (2 * a * b), -1.0, 1.0));
                };
                ex = ang(tx, side, ty);
                ey = ang(ty, side, tx);
                ep = ang(tx, ty, side);
            } else {
                side = model::model_distance(m, {tx, 0.0}, {ty, dth}).d;
                ex = ey = std::nan("");
                ep = dth;
            }
            auto tri = comparison::build_comparison_triangle(m, tx, ty, side);
            if (mode == "law-of-cosines") {
                worst_angle = std::max({worst_angle, std::abs(tri.angle_x - ex), std::abs(tri.angle_y - ey),
                                        std::abs(tri.angle_p - ep)});
            } else {
                worst_angle = std::max(worst_angle, std::abs(tri.angle_p - ep));
            }
            worst_side = std::max(worst_side, std::abs(tri.realized_side - side));
            ++done;
            tab.add({std::to_string(i), fmt(tx), fmt(ty), fmt(side), fmt(tri.dtheta), fmt(tri.angle_x),
                     fmt(tri.angle_y), fmt(tri.angle_p), fmt(ex), fmt(ey), fmt(ep), fmt(tri.realized_side)});
        } catch (const Error& e) {
            c.error("triangle " + std::to_string(i), e);
        }
    }
    c.check("triangles built", done, ">=", count, 0.0);
    c.check(mode == "law-of-cosines" ? "max angle error vs law of cosines" : "max error of the recovered separation",
            worst_angle, "<=", 0.0, c.tol("angle"));
    c.check("max realized side error", worst_side, "<=", 0.0, c.tol("side"));
    c.rep.tables.push_back(std::move(tab));
}

void tct_batch(Ctx& c) {
    finsler::FinslerChart chart = c.chart();
    model::ModelSurface m = c.surface();
    const int n = chart.dim();
    if (n != 2) throw Error(ErrorKind::ConfigInvalid, "chart.dim: tct-batch samples planar triangles");
    Vec p = c.point("p", n);
    const int count = static_cast<int>(c.s.num("count"));
    const auto tr = c.s.list("t_range");
    const auto dr = c.s.list("dtheta_range");
    const std::string expect = c.s.word("expect", "equality");
    if (expect != "equality" && expect != "inequality")
        throw Error(ErrorKind::ConfigInvalid, "param.expect: expected equality or inequality");
    comparison::TCTOptions o;
    o.path_samples = static_cast<int>(c.s.num("path_samples", 32));
    o.w_samples = static_cast<int>(c.s.num("w_samples", 64));
    o.tube_radius = c.s.num("tube_radius", 0.05);
    const double band = c.tol("margin");
    o.equality_band = band;

    Table tab{"triangles",
              {"i", "x0", "x1", "y0", "y1", "d_px", "d_py", "lm_xy", "angle_x", "angle_y", "model_angle_x",
               "model_angle_y", "margin_x", "margin_y", "class_x", "class_y", "outside_ball", "convexity",
               "tangent_max", "reverse_residual"},
              {}};
    int accepted = 0, gated = 0;
    double min_margin = std::numeric_limits<double>::infinity(), max_abs = 0;
    for (int i = 0; accepted < count && i < 5 * count; ++i) {
        double t1 = c.uniform(tr), t2 = c.uniform(tr), th = c.uniform(0, 2 * kPi), dth = c.uniform(dr);
        if (c.u01() < 0.5) dth = -dth;
        Vec x = p + t1 * finsler::vec2(std::cos(th), std::sin(th));
        Vec y = p + t2 * finsler::vec2(std::cos(th + dth), std::sin(th + dth));
        try {
            auto r = comparison::verify_tct(chart, m, p, x, y, o);
            const auto& h = r.hypotheses;
            std::vector<std::string> row{std::to_string(i), fmt(x[0]), fmt(x[1]), fmt(y[0]), fmt(y[1]),
                                         fmt(r.triangle.d_px), fmt(r.triangle.d_py), fmt(r.triangle.lm_xy),
                                         fmt(r.triangle.angle_x), fmt(r.triangle.angle_y)};
            if (r.admissible) {
                for (double v : {r.comparison->angle_x, r.comparison->angle_y, *r.margin_x, *r.margin_y})
                    row.push_back(fmt(v));
                row.push_back(comparison::to_string(comparison::classify_margin(*r.margin_x, band)));
                row.push_back(comparison::to_string(comparison::classify_margin(*r.margin_y, band)));
                ++accepted;
                min_margin = std::min({min_margin, *r.margin_x, *r.margin_y});
                max_abs = std::max({max_abs, std::abs(*r.margin_x), std::abs(*r.margin_y)});
            } else {
                row.insert(row.end(), 6, "");
                if (!h.passed) ++gated;
            }
            for (double v : {h.outside_ball ? 1.0 : 0.0, h.convexity_margin, h.tangent_curvature_max,
                             h.reverse_geodesic_residual})
                row.push_back(fmt(v));
            tab.add(std::move(row));
        } catch (const Error& e) {
            c.error("triangle " + std::to_string(i), e);
        }
    }
    c.rep.details["hypothesis_gated"] = gated;
    c.rep.details["samples"] = {{"path", o.path_samples}, {"w", o.w_samples}, {"tube_radius", o.tube_radius}};
    c.check("admissible triangles with all hypotheses passing", accepted, ">=", count, 0.0);
    if (expect == "equality") c.check("max |margin|", max_abs, "<=", 0.0, band);
    else c.check("min margin", min_margin, ">=", 0.0, band);
    if (c.s.has("radial.t")) {
        auto rb = finsler::radial_bound_check(chart, m, p, c.s.list("radial.t"),
                                              static_cast<int>(c.s.num("radial.w", 8)));
        c.check("radial flag curvature minus model G", rb.min_margin, ">=", 0.0, c.tol("radial"));
    }
    c.rep.tables.push_back(std::move(tab));
}

void critical_scan(Ctx& c) {
    finsler::FinslerChart chart = c.chart();
    const int n = chart.dim();
    Vec p = c.point("p", n);
    const int points = static_cast<int>(c.s.num("points_per_shell", 16));
    const int w = static_cast<int>(c.s.num("w_samples", 64));
    auto rep = comparison::critical_scan(chart, p, c.s.list("radii"), points, w);
    for (const auto& f : rep.failures) c.rep.errors.push_back(f);
    Table tab{"verdicts", concat(std::vector<std::string>{"radius"}, vec_columns("x", n),
                                 std::vector<std::string>{"connectors", "critical", "worst"}),
              {}};
    int critical = 0, min_conn = std::numeric_limits<int>::max();
    for (std::size_t i = 0; i < rep.verdicts.size(); ++i) {
        const auto& v = rep.verdicts[i];
        critical += v.critical;
        min_conn = std::min(min_conn, v.connectors);
        tab.add(concat(std::vector<std::string>{fmt(rep.verdict_radius[i])}, vec_cells(v.point),
                       std::vector<std::string>{std::to_string(v.connectors), v.critical ? "1" : "0", fmt(v.worst)}));
    }
    c.rep.tables.push_back(std::move(tab));
    c.rep.details["outermost_critical_radius"] =
        rep.outermost_critical_radius ? nlohmann::json(*rep.outermost_critical_radius) : nlohmann::json(nullptr);
    c.rep.details["samples"] = {{"points_per_shell", points}, {"w", w}};
    if (c.s.has("expect.critical")) c.check("critical points found", critical, "==", c.s.num("expect.critical"), 0.0);
    c.check("connectors per point", rep.verdicts.empty() ? 0 : min_conn, ">=", 1.0, 0.0);

    if (c.s.has("synthetic.point")) {
        Vec x = c.point("synthetic.point", n);
        Vec v = comparison::connector_set(chart, p, x).front();
        auto W = finsler::indicatrix_directions(chart, x, w);
        auto both = comparison::is_forward_critical(chart, p, x, W, std::vector<Vec>{v, Vec(-v)});
        c.flag("{v, -v} is critical", both.critical);
        auto single = comparison::is_forward_critical(chart, p, x, {v}, std::vector<Vec>{v});
        c.flag("{v} with w = v is not critical", !single.critical);
    }
    if (c.s.has("brute.count")) {
        const int m = static_cast<int>(c.s.num("brute.count"));
        const int dense = static_cast<int>(c.s.num("brute.w", 1000));
        const auto rr = c.s.list("brute.range");
        Table bt{"brute_force", concat(std::vector<std::string>{"i"}, vec_columns("x", n),
                                       std::vector<std::string>{"connectors", "critical", "critical_dense"}),
                 {}};
        int mismatch = 0, done = 0;
        for (int i = 0; i < m; ++i) {
            Vec u = finsler::unit_directions(n, 1).front();
            if (n == 2) {
                double a = c.uniform(0, 2 * kPi);
                u = finsler::vec2(std::cos(a), std::sin(a));
            } else {
                double z = c.uniform(-1, 1), a = c.uniform(0, 2 * kPi), r = std::sqrt(1 - z * z);
                u = finsler::vec3(r * std::cos(a), r * std::sin(a), z);
            }
            Vec x = p + c.uniform(rr) * u;
            try {
                auto G = comparison::connector_set(chart, p, x);
                auto a = comparison::is_forward_critical(chart, p, x, finsler::indicatrix_directions(chart, x, w), G);
                auto b = comparison::is_forward_critical(chart, p, x, finsler::indicatrix_directions(chart, x, dense), G);
                mismatch += a.critical != b.critical;
                ++done;
                bt.add(concat(std::vector<std::string>{std::to_string(i)}, vec_cells(x),
                              std::vector<std::string>{std::to_string(G.size()), a.critical ? "1" : "0",
                                                       b.critical ? "1" : "0"}));
            } catch (const Error& e) {
                c.error("brute-force point " + std::to_string(i), e);
            }
        }
        c.check("points compared with the dense-direction verdict", done, ">=", m, 0.0);
        c.check("verdict mismatches", mismatch, "==", 0.0, 0.0);
        c.rep.tables.push_back(std::move(bt));
    }
}

void growth(Ctx& c) {
    finsler::FinslerChart chart = c.chart();
    Vec p = c.point("p", chart.dim());
    const int samples = static_cast<int>(c.s.num("samples_per_shell", 12));
    auto rep = comparison::diameter_growth(chart, p, c.s.list("t"), samples);
    std::optional<model::ModelSurface> m;
    if (c.s.surface) m = c.surface();
    Table tab{"diameters", {"t", "diameter", "circle_bound"}, {}};
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rep.t.size(); ++i) {
        double bound = m ? kPi * m->f(rep.t[i]) : std::nan("");
        if (m) worst = std::max(worst, rep.diameter[i] - bound);
        tab.add({fmt(rep.t[i]), fmt(rep.diameter[i]), fmt(bound)});
    }
    c.rep.tables.push_back(std::move(tab));
    auto& d = c.rep.details;
    d["samples_per_shell"] = samples;
    d["alpha"] = rep.alpha ? nlohmann::json(*rep.alpha) : nlohmann::json(nullptr);
    if (rep.alpha && rep.alpha_stderr)
        d["alpha_band"] = {*rep.alpha - 2 * *rep.alpha_stderr, *rep.alpha + 2 * *rep.alpha_stderr};
    if (m) c.check("diameter minus pi f(t)", worst, "<=", 0.0, c.tol("diameter"));
    if (c.s.has("expect.alpha"))
        c.check("fitted exponent", rep.alpha ? *rep.alpha : std::nan(""), "==", c.s.num("expect.alpha"), c.tol("alpha"));
    if (c.s.has("expect.alpha_max"))
        c.check("fitted exponent", rep.alpha ? *rep.alpha : std::nan(""), "<=", c.s.num("expect.alpha_max"),
                c.tol("alpha"));
    if (c.s.has("expect.alpha_undefined")) c.flag("fitted exponent undefined", !rep.alpha);
}

void chain_demo(Ctx& c) {
    model::ModelSurface m = c.surface();
    const double tx = c.s.num("t_x");
    const double theta_end = c.s.num("theta_end", kPi / 2);
    const int panels = static_cast<int>(c.s.num("panels", 8));
    comparison::ChainOptions o;
    o.hinge_tolerance = c.tol("hinge");
    o.length_tolerance = c.tol("length");
    o.under_tolerance = c.tol("under");
    Table chains{"chains",
                 {"t_end", "panels", "nu", "lhs", "rhs", "integral", "excess_xi", "excess_eta", "max_hinge_minus_pi",
                  "under_gap"},
                 {}};
    Table pan{"panels", {"t_end", "panel", "t0", "t1", "excess", "dtheta", "theta_offset", "angle_x", "angle_y"}, {}};
    std::vector<double> nus;
    for (double te : c.s.list("ends")) {
        const std::string tag = "t_end = " + fmt(te);
        try {
            auto r = comparison::chain_demo(m, tx, te, theta_end, panels, o);
            double hinge = -kPi;
            for (double h : r.hinge_sums) hinge = std::max(hinge, h - kPi);
            chains.add({fmt(te), std::to_string(r.panels.size()), fmt(r.nu), fmt(r.lhs), fmt(r.rhs), fmt(r.integral),
                        fmt(r.excess_xi), fmt(r.excess_eta), fmt(hinge), fmt(r.under_gap)});
            for (std::size_t l = 0; l < r.panels.size(); ++l) {
                const auto& p = r.panels[l];
                pan.add({fmt(te), std::to_string(l), fmt(p.t_x), fmt(p.t_y), fmt(p.excess), fmt(p.dtheta),
                         fmt(r.theta_offsets[l]), fmt(p.angle_x), fmt(p.angle_y)});
            }
            c.check("hinge sums - pi, " + tag, hinge, "<=", 0.0, o.hinge_tolerance);
            c.check("L(eta) - L(xi), " + tag, r.excess_eta - r.excess_xi, "<=", 0.0, o.length_tolerance);
            c.check("4 t_x - nu^2 int f^-2, " + tag, r.lhs - r.rhs, ">=", 0.0, 0.0,
                    "lhs " + fmt(r.lhs) + ", rhs " + fmt(r.rhs));
            c.check("t(eta) - t(xi) at matched theta, " + tag, r.under_gap, "<=", 0.0, o.under_tolerance);
            if (!r.note.empty()) c.rep.errors.push_back(tag + ": " + r.note);
            nus.push_back(r.nu);
        } catch (const Error& e) {
            c.error(tag, e);
            nus.push_back(std::nan(""));
        }
    }
    int bad = 0;
    for (std::size_t i = 1; i < nus.size(); ++i) bad += !(nus[i] < nus[i - 1]);
    c.check("non-decreasing steps of nu over the ends", bad, "==", 0.0, 0.0);
    c.rep.details["nu"] = nus;
    c.rep.tables.push_back(std::move(chains));
    c.rep.tables.push_back(std::move(pan));
}

void curvature_probe(Ctx& c) {
    finsler::FinslerChart chart = c.chart();
    const int n = chart.dim();
    const int count = static_cast<int>(c.s.num("count"));
    const std::string oracle = c.s.word("oracle", "none");
    if (oracle != "none" && oracle != "constant" && oracle != "radial")
        throw Error(ErrorKind::ConfigInvalid, "param.oracle: expected none, constant or radial");
    std::optional<model::ModelSurface> m;
    if (oracle == "radial") {
        if (!chart.surface) throw Error(ErrorKind::ConfigInvalid, "param.oracle: radial needs a warped_polar chart");
        m = *chart.surface;
    }
    const double shrink = c.s.num("shrink", 0.1);
    const int w_count = static_cast<int>(c.s.num("w_samples", 64));
    const auto& box = chart.box();
    auto random_unit = [&]() {
        Vec u(n);
        for (int i = 0; i < n; ++i) u[i] = c.uniform(-1, 1);
        return Vec(u / u.norm());
    };
    Table tab{"probes", concat(std::vector<std::string>{"i"}, vec_columns("x", n), vec_columns("v", n),
                               vec_columns("w", n),
                               std::vector<std::string>{"K", "K_expected", "T", "convexity_margin"}),
              {}};
    double worst_K = 0, worst_T = 0, worst_conv = 0, min_conv = std::numeric_limits<double>::infinity();
    int done = 0;
    for (int i = 0; i < 20 * count && done < count; ++i) {
        Vec x(n), v, w;
        double expected = std::nan("");
        if (oracle == "radial") {
            auto tr = c.s.list("t_range");
            double t = c.uniform(tr), a = c.uniform(0, 2 * kPi);
            v = finsler::vec2(std::cos(a), std::sin(a));
            x = t * v;
            w = finsler::vec2(-v[1], v[0]);
            expected = m->G(t);
        } else {
            for (int k = 0; k < n; ++k) {
                double lo = box.lo[k], hi = box.hi[k], pad = shrink * (hi - lo);
                x[k] = c.uniform(lo + pad, hi - pad);
            }
            v = random_unit();
            w = random_unit();
            if (oracle == "constant") expected = c.s.num("expect.K");
        }
        if (!chart.contains(x)) continue;
        if ((w - w.dot(v) * v).norm() < 0.1) continue;
        try {
            v /= chart.F(x, v);
            double K = finsler::flag_curvature(chart, x, v, w);
            double T = finsler::tangent_curvature(chart, x, v, w);
            double conv = finsler::uniform_convexity_margin(chart, x, v, finsler::indicatrix_directions(chart, x, w_count));
            if (!std::isnan(expected)) worst_K = std::max(worst_K, std::abs(K - expected));
            worst_T = std::max(worst_T, std::abs(T));
            worst_conv = std::max(worst_conv, std::abs(conv));
            min_conv = std::min(min_conv, conv);
            tab.add(concat(std::vector<std::string>{std::to_string(i)}, vec_cells(x), vec_cells(v), vec_cells(w),
                           std::vector<std::string>{fmt(K), fmt(expected), fmt(T), fmt(conv)}));
            ++done;
        } catch (const Error& e) {
            c.error("probe " + std::to_string(i), e);
        }
    }
    c.check("samples probed", done, ">=", count, 0.0);
    if (oracle != "none") c.check("max |K - oracle|", worst_K, "<=", 0.0, c.tol("K"));
    if (c.s.tolerances.count("T")) c.check("max |T|", worst_T, "<=", 0.0, c.tol("T"));
    if (c.s.tolerances.count("convexity")) {
        if (c.s.word("convexity", "zero") == "zero") c.check("max |convexity margin|", worst_conv, "<=", 0.0, c.tol("convexity"));
        else c.check("min convexity margin", min_conv, ">=", 0.0, c.tol("convexity"));
    }
    c.rep.details["w_samples"] = w_count;
    c.rep.tables.push_back(std::move(tab));
}

} // namespace

RunReport run(const Scenario& scenario, const RunOptions& opts) {
    auto start = std::chrono::steady_clock::now();
    RunReport rep;
    rep.scenario = scenario;
    if (opts.seed) rep.scenario.seed = *opts.seed;
    if (!(opts.tolerance_scale > 0)) throw Error(ErrorKind::ConfigInvalid, "tolerance scale must be positive");
    rep.tolerance_scale = opts.tolerance_scale;
    Ctx c(rep.scenario, rep, opts.tolerance_scale, rep.scenario.seed);
    const std::string& k = scenario.kind;
    if (k == "model-build") model_build(c);
    else if (k == "geodesic-trace") geodesic_trace(c);
    else if (k == "distance-check") distance_check(c);
    else if (k == "tct-batch") tct_batch(c);
    else if (k == "critical-scan") critical_scan(c);
    else if (k == "growth") growth(c);
    else if (k == "chain-demo") chain_demo(c);
    else if (k == "curvature-probe") curvature_probe(c);
    else throw Error(ErrorKind::ConfigInvalid, "kind: unknown experiment '" + k + "'");
    rep.passed = !rep.checks.empty() && rep.errors.empty() &&
                 std::all_of(rep.checks.begin(), rep.checks.end(), [](const Check& ch) { return ch.pass; });
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

} // namespace cmpgeo::experiment
