#include "cmpgeo/model_surface.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/toms748_solve.hpp>
#include <nlohmann/json.hpp>

namespace cmpgeo::model {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct State {
    double t, th, p, q, ep, em;
};

State axpy(const State& y, double a, const State& k) {
    return {y.t + a * k.t, y.th + a * k.th, y.p + a * k.p, y.q + a * k.q, y.ep + a * k.ep, y.em + a * k.em};
}

enum class Status { Done, Event, Pole, Domain };

struct Trace {
    Status status = Status::Done;
    State end{};
    double s_end = 0.0;
    std::vector<GeodesicSample> samples;
};

double hermite(double y0, double y1, double d0, double d1, double u, double h) {
    double u2 = u * u, u3 = u2 * u;
    return (2 * u3 - 3 * u2 + 1) * y0 + (u3 - 2 * u2 + u) * h * d0 + (-2 * u3 + 3 * u2) * y1 + (u3 - u2) * h * d1;
}

class Tracer {
public:
    Tracer(const ModelSurface& s, double h, double pole_r) : s_(s), h_(h), pole_r_(pole_r) {}

    State deriv(const State& y) const {
        if (y.t < 0.5 * pole_r_) {
            hit_pole_ = true;
            return {0, 0, 0, 0, 0, 0};
        }
        WarpSample w = s_.warp.eval(y.t);
        double fq = w.f * y.q;
        State d;
        d.t = y.p;
        d.th = y.q;
        d.p = w.f * w.df * y.q * y.q;
        d.q = -2.0 * (w.df / w.f) * y.p * y.q;
        // 1 -+ t' rewritten with the speed identity where it would cancel
        d.ep = y.p > 0 ? fq * fq / (1 + y.p) : 1 - y.p;
        d.em = y.p < 0 ? fq * fq / (1 - y.p) : 1 + y.p;
        return d;
    }

    // cap: arclength budget. target: theta value to stop at (NaN: none).
    Trace run(const State& y0, double cap, double target, bool record) const {
        Trace tr;
        State y = y0;
        double s = 0.0;
        hit_pole_ = false;
        State k1 = deriv(y);
        if (record) tr.samples.push_back(sample(s, y));
        while (true) {
            double hs = std::min(h_, 0.02 * y.t);
            bool last = false;
            if (s + hs >= cap) {
                hs = cap - s;
                last = true;
            }
            if (hs <= 0) {
                tr.status = Status::Done;
                break;
            }
            State k2 = deriv(axpy(y, 0.5 * hs, k1));
            State k3 = deriv(axpy(y, 0.5 * hs, k2));
            State k4 = deriv(axpy(y, hs, k3));
            State y1{y.t + hs / 6 * (k1.t + 2 * k2.t + 2 * k3.t + k4.t),
                     y.th + hs / 6 * (k1.th + 2 * k2.th + 2 * k3.th + k4.th),
                     y.p + hs / 6 * (k1.p + 2 * k2.p + 2 * k3.p + k4.p),
                     y.q + hs / 6 * (k1.q + 2 * k2.q + 2 * k3.q + k4.q),
                     y.ep + hs / 6 * (k1.ep + 2 * k2.ep + 2 * k3.ep + k4.ep),
                     y.em + hs / 6 * (k1.em + 2 * k2.em + 2 * k3.em + k4.em)};
            if (hit_pole_ || y1.t < pole_r_) {
                tr.status = Status::Pole;
                tr.end = y;
                tr.s_end = s;
                return tr;
            }
            if (y1.t > s_.t_max()) {
                tr.status = Status::Domain;
                tr.end = y;
                tr.s_end = s;
                return tr;
            }
            State k1n = deriv(y1);
            if (!std::isnan(target) && y1.th >= target) {
                double lo = 0, hi = 1;
                for (int it = 0; it < 60; ++it) {
                    double m = 0.5 * (lo + hi);
                    if (hermite(y.th, y1.th, k1.th, k1n.th, m, hs) < target) lo = m;
                    else hi = m;
                }
                double u = 0.5 * (lo + hi);
                State e;
                e.t = hermite(y.t, y1.t, k1.t, k1n.t, u, hs);
                e.th = target;
                e.p = hermite(y.p, y1.p, k1.p, k1n.p, u, hs);
                e.q = hermite(y.q, y1.q, k1.q, k1n.q, u, hs);
                e.ep = hermite(y.ep, y1.ep, k1.ep, k1n.ep, u, hs);
                e.em = hermite(y.em, y1.em, k1.em, k1n.em, u, hs);
                tr.status = Status::Event;
                tr.end = e;
                tr.s_end = s + u * hs;
                if (record) tr.samples.push_back(sample(tr.s_end, e));
                return tr;
            }
            s = last ? cap : s + hs;
            y = y1;
            k1 = k1n;
            if (record) tr.samples.push_back(sample(s, y));
            if (last) break;
        }
        tr.status = Status::Done;
        tr.end = y;
        tr.s_end = s;
        return tr;
    }

private:
    static GeodesicSample sample(double s, const State& y) { return {s, y.t, y.th, y.p, y.q, y.ep, y.em}; }

    const ModelSurface& s_;
    double h_;
    double pole_r_;
    mutable bool hit_pole_ = false;
};

State initial_state(const ModelSurface& s, double t, double psi) {
    return {t, 0.0, std::cos(psi), std::sin(psi) / s.f(t), 0.0, 0.0};
}

// Initial direction stored as psi, or as pi - psi when near pi, so that
// directions just short of the pole keep full precision.
struct Dir {
    bool high = false;
    double v = 0.0;
    double psi() const { return high ? kPi - v : v; }
    double sin_psi() const { return std::sin(v); }
};

State initial_state(const ModelSurface& s, double t, Dir d) {
    double c = d.high ? -std::cos(d.v) : std::cos(d.v);
    return {t, 0.0, c, d.sin_psi() / s.f(t), 0.0, 0.0};
}

double wrap_angle(double th) {
    double r = std::fmod(th, 2 * kPi);
    if (r < 0) r += 2 * kPi;
    return r;
}

void check_point(const ModelSurface& s, const ModelPoint& p, const char* what) {
    if (!(p.t > s.t_min()) || !(p.t <= s.t_max())) {
        std::ostringstream os;
        os << what << ".t = " << p.t << " outside (t_min, t_max] = (" << s.t_min() << ", " << s.t_max() << "]";
        throw Error(ErrorKind::ConfigInvalid, os.str(), p.t);
    }
}

ModelGeodesic meridian(const ModelSurface& s, const ModelPoint& start, bool inward, double length, double step) {
    ModelGeodesic g;
    g.start = start;
    g.psi = inward ? kPi : 0.0;
    g.nu = 0.0;
    g.step = step;
    g.length = length;
    const double t0 = start.t;
    if (!inward && t0 + length > s.t_max())
        throw Error(ErrorKind::DomainExit, "meridian leaves the domain", s.t_max() - t0);
    if (inward && length - t0 > s.t_max())
        throw Error(ErrorKind::DomainExit, "meridian leaves the domain", s.t_max() + t0);
    int n = std::max(1, static_cast<int>(std::ceil(length / step)));
    g.samples.reserve(n + 1);
    for (int i = 0; i <= n; ++i) {
        double sv = length * i / n;
        GeodesicSample q;
        q.s = sv;
        if (!inward) {
            q.t = t0 + sv;
            q.theta = start.theta;
            q.dt = 1;
            q.excess_plus = 0;
            q.excess_minus = 2 * sv;
        } else if (sv <= t0) {
            q.t = t0 - sv;
            q.theta = start.theta;
            q.dt = -1;
            q.excess_plus = 2 * sv;
            q.excess_minus = 0;
        } else {
            q.t = sv - t0;
            q.theta = start.theta + kPi;
            q.dt = 1;
            q.excess_plus = 2 * t0;
            q.excess_minus = 2 * (sv - t0);
        }
        g.samples.push_back(q);
    }
    return g;
}

ModelGeodesic to_geodesic(const ModelPoint& start, double psi, int orientation, double nu, double step,
                          std::vector<GeodesicSample> samples) {
    ModelGeodesic g;
    g.start = start;
    g.psi = psi;
    g.orientation = orientation;
    g.nu = nu;
    g.step = step;
    for (auto& q : samples) {
        q.theta = start.theta + orientation * q.theta;
        q.dtheta *= orientation;
    }
    g.samples = std::move(samples);
    g.length = g.samples.back().s;
    return g;
}

// accepted endpoint mismatch in t when the length is corrected for it
constexpr double kLooseResidual = 1e-7;

struct Connector {
    Dir dir;
    double length;
    double excess;  // relative to sign(t_b - t_a)
};

// All theta-monotone connectors from (ta, 0) to (tb, dtheta) shorter than cap.
std::vector<Connector> shoot_connectors(const ModelSurface& s, double ta, double tb, double dtheta, double cap,
                                        const DistanceOptions& o) {
    const double pole_r = o.pole_radius > 0 ? o.pole_radius : s.t_min();
    Tracer coarse(s, o.coarse_step, pole_r);
    Tracer fine(s, o.step, pole_r);
    const bool outward = tb >= ta;
    // trace past the cap so the residual changes sign continuously near
    // connectors whose length is close to it
    const double range = cap + std::max(1.0, 0.5 * cap);

    auto residual_dir = [&](const Tracer& tr, Dir d) {
        Trace r = tr.run(initial_state(s, ta, d), range, dtheta, false);
        if (r.status == Status::Pole) return kNaN;
        if (r.status != Status::Event) return kInf;
        return r.end.t - tb;
    };

    struct Pt {
        Dir d;
        double r;
    };
    const int n = std::max(8, o.starts);
    std::vector<Dir> dirs;
    for (int i = 1; i < n; ++i) {
        if (2 * i <= n) dirs.push_back({false, kPi * i / n});
        else dirs.push_back({true, kPi * (n - i) / n});
    }
    for (int j = 1; j <= 8; ++j) dirs.push_back({true, (kPi / n) * std::pow(4.0, -j)});
    std::sort(dirs.begin(), dirs.end(), [](const Dir& p, const Dir& q) {
        if (p.high != q.high) return !p.high;
        return p.high ? p.v > q.v : p.v < q.v;
    });
    std::vector<Pt> pts;
    for (const Dir& d : dirs) pts.push_back({d, residual_dir(coarse, d)});

    // Towards psi = 0 the geodesic hugs the meridian and never reaches dtheta;
    // follow the residual down geometrically when it is still negative there.
    if (std::isfinite(pts.front().r) && pts.front().r < 0) {
        double lo = pts.front().d.v;
        for (int it = 0; it < 110; ++it) {
            lo *= 1e-3;
            if (lo < 1e-305) break;
            double r = residual_dir(coarse, {false, lo});
            pts.insert(pts.begin(), {{false, lo}, r});
            if (std::isnan(r) || r > 0) break;
        }
    }
    // Towards psi = pi the geodesic skims the pole; nearly opposite targets
    // need directions closer to it than the fixed points.
    if (pts.back().r > 0) {
        double lo = pts.back().d.v;
        for (int it = 0; it < 110; ++it) {
            lo *= 1e-3;
            if (lo < 1e-305) break;
            double r = residual_dir(coarse, {true, lo});
            pts.push_back({{true, lo}, r});
            if (!(r > 0)) break;
        }
    }

    // A pole crossing means theta had not reached dtheta before the pole; past
    // the pole it would arrive at a small t, so NaN counts as negative here.
    auto positive = [](double r) { return r > 0; };
    std::vector<Connector> out;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        double fa = pts[i].r, fb = pts[i + 1].r;
        if (positive(fa) == positive(fb)) continue;
        // work in the bracket's own coordinate: psi, or pi - psi when both
        // ends are on the high side
        const bool high = pts[i].d.high && pts[i + 1].d.high;
        auto coord = [&](const Dir& d) { return high ? d.v : d.psi(); };
        double a = coord(pts[i].d), b = coord(pts[i + 1].d);
        if (a > b) {
            std::swap(a, b);
            std::swap(fa, fb);
        }
        auto residual = [&](const Tracer& tr, double x) { return residual_dir(tr, Dir{high, x}); };
        // make both ends finite, bisecting in log space across wide brackets
        bool ok = true;
        for (int it = 0; it < 400 && (!std::isfinite(fa) || !std::isfinite(fb)); ++it) {
            if (b - a <= 1e-14 * b) {
                ok = false;
                break;
            }
            double m = (b > 4 * a) ? std::sqrt(a) * std::sqrt(b) : 0.5 * (a + b);
            double fm = residual(coarse, m);
            if (positive(fm) == positive(fa)) {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
        }
        if (!ok || !std::isfinite(fa) || !std::isfinite(fb)) continue;
        // wide brackets in log scale first: toms748 works on a linear scale
        for (int it = 0; it < 400 && b > 1.5 * a; ++it) {
            double m = std::sqrt(a) * std::sqrt(b);
            double fm = residual(coarse, m);
            if (!std::isfinite(fm)) {
                ok = false;
                break;
            }
            if (positive(fm) == positive(fa)) {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
        }
        if (!ok) continue;
        auto tol = [](double x, double y) { return std::abs(x - y) <= 4e-16 * std::max(std::abs(x), std::abs(y)); };
        std::uintmax_t iters = 100;
        auto fcoarse = [&](double p) {
            double r = residual(coarse, p);
            return std::isfinite(r) ? r : 1e300;
        };
        std::pair<double, double> br;
        try {
            br = boost::math::tools::toms748_solve(fcoarse, a, b, fa, fb, tol, iters);
        } catch (const std::exception&) {
            continue;
        }
        double pc = 0.5 * (br.first + br.second);
        // fine-step root in a small bracket around the coarse root
        double rf = residual(fine, pc);
        if (!std::isfinite(rf)) continue;
        double slope = (fb - fa) / (b - a);
        double delta = std::max(std::abs(rf / slope) * 2, 1e-15 * pc);
        double lo = pc, hi = pc, flo = rf, fhi = rf;
        bool bracketed = rf == 0;
        // the fine root may sit just outside the coarse bracket when the
        // connector starts on a grid direction (psi = pi/2 for right angles)
        const double lo_lim = std::max(a - 0.25 * (b - a), 0.5 * a);
        const double hi_lim = high ? b + 0.25 * (b - a) : std::min(b + 0.25 * (b - a), kPi);
        for (int it = 0; it < 40 && !bracketed; ++it) {
            lo = std::max(lo_lim, pc - delta);
            hi = std::min(hi_lim, pc + delta);
            flo = residual(fine, lo);
            fhi = residual(fine, hi);
            if (std::isfinite(flo) && std::isfinite(fhi) && positive(flo) != positive(fhi)) bracketed = true;
            else if (lo == lo_lim && hi == hi_lim) break;
            delta *= 4;
        }
        if (!bracketed) continue;
        double root = pc;
        if (rf != 0) {
            iters = 100;
            auto ffine = [&](double p) {
                double r = residual(fine, p);
                return std::isfinite(r) ? r : 1e300;
            };
            try {
                br = boost::math::tools::toms748_solve(ffine, lo, hi, flo, fhi, tol, iters);
            } catch (const std::exception&) {
                continue;
            }
            double r1 = ffine(br.first), r2 = ffine(br.second);
            root = std::abs(r1) <= std::abs(r2) ? br.first : br.second;
        }
        Trace tr = fine.run(initial_state(s, ta, Dir{high, root}), range, dtheta, false);
        if (tr.status != Status::Event) continue;
        // Targets nearly opposite across the pole make t at the theta event
        // ill-conditioned in psi. The length is not: moving the end by dt along
        // the meridian changes it by t' dt, which is corrected to first order.
        const double res = tr.end.t - tb;
        if (std::abs(res) > std::max(o.residual_tolerance, kLooseResidual)) continue;
        const double p = tr.end.p;
        const double q2 = tr.end.q * tr.end.q * s.f(tr.end.t) * s.f(tr.end.t);  // (f theta')^2 = 1 - p^2
        const double len = tr.s_end - p * res;
        if (len > cap) continue;
        const double ex = outward ? tr.end.ep + q2 / (1 + p) * res : tr.end.em - (1 + p) * res;
        Dir found{high, root};
        // a widened fine bracket can land on the neighbour's connector
        bool seen = std::any_of(out.begin(), out.end(), [&](const Connector& c) {
            return std::abs(c.dir.psi() - found.psi()) <= 1e-9 * std::max(1.0, found.psi());
        });
        if (!seen) out.push_back({found, len, ex});
    }
    return out;
}

ModelDistance finish(const ModelSurface& s, const ModelPoint& a, double dtheta, int orientation,
                     const std::vector<Connector>& cons, const DistanceOptions& o) {
    const double pole_r = o.pole_radius > 0 ? o.pole_radius : s.t_min();
    auto best = std::min_element(cons.begin(), cons.end(),
                                 [](const Connector& x, const Connector& y) { return x.length < y.length; });
    ModelDistance md;
    md.d = best->length;
    md.excess = best->excess;
    for (const auto& c : cons) {
        if (c.length - md.d < o.tie_tolerance) {
            md.connector_psi.push_back(c.dir.psi());
            md.connector_length.push_back(c.length);
        }
    }
    Tracer fine(s, o.step, pole_r);
    Trace tr = fine.run(initial_state(s, a.t, best->dir), best->length + 1.0, dtheta, true);
    md.geodesic = to_geodesic(a, best->dir.psi(), orientation, s.f(a.t) * best->dir.sin_psi(), o.step,
                              std::move(tr.samples));
    return md;
}

} // namespace

std::string to_record(const SurfaceSpec& spec) {
    nlohmann::json j;
    j["family"] = spec.family;
    j["params"] = spec.params;
    if (!spec.base_family.empty()) j["base_family"] = spec.base_family;
    j["T_max"] = spec.t_max;
    j["t_min"] = spec.t_min;
    return j.dump();
}

SurfaceSpec surface_from_record(const std::string& text) {
    SurfaceSpec s;
    try {
        auto j = nlohmann::json::parse(text);
        s.family = j.at("family").get<std::string>();
        if (j.contains("params")) s.params = j["params"].get<Params>();
        if (j.contains("base_family")) s.base_family = j["base_family"].get<std::string>();
        s.t_max = j.at("T_max").get<double>();
        s.t_min = j.at("t_min").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigInvalid, std::string("surface record: ") + e.what());
    }
    return s;
}

std::vector<double> uniform_grid(double a, double b, int n) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) g[i] = a + (b - a) * i / (n - 1);
    return g;
}

Classification classify_model(const ModelSurface& surface, const std::vector<double>& grid) {
    Classification c;
    double worst = -kInf;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        double inc = surface.curvature.unguarded(grid[i + 1]) - surface.curvature.unguarded(grid[i]);
        worst = std::max(worst, inc);
    }
    c.worst_increase = worst;
    c.von_mangoldt = worst <= 1e-9;

    std::vector<std::size_t> changes;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        double a = surface.warp.df(grid[i]), b = surface.warp.df(grid[i + 1]);
        if ((a > 0) != (b > 0)) changes.push_back(i);
    }
    if (changes.size() > 1) {
        std::ostringstream os;
        os << "f' changes sign " << changes.size() << " times on the grid";
        throw Error(ErrorKind::MultipleCriticalRadii, os.str(), static_cast<double>(changes.size()));
    }
    if (changes.size() == 1) {
        double lo = grid[changes[0]], hi = grid[changes[0] + 1];
        bool lo_pos = surface.warp.df(lo) > 0;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
            double m = 0.5 * (lo + hi);
            double d = surface.warp.df(m);
            if (d == 0) {
                lo = hi = m;
                break;
            }
            if ((d > 0) == lo_pos) lo = m;
            else hi = m;
        }
        double rho = std::abs(surface.warp.df(lo)) <= std::abs(surface.warp.df(hi)) ? lo : hi;
        c.rho = rho;
        c.G_at_rho = surface.curvature.unguarded(rho);
    }
    return c;
}

ModelSurface make_surface(const WarpFunction& warp, const RadialCurvature& curvature, double t_min,
                          const std::string& label) {
    ModelSurface m;
    m.spec.family = label;
    m.spec.t_max = warp.t_max();
    m.spec.t_min = t_min;
    m.warp = warp;
    m.curvature = curvature.with_t_min(t_min);
    Classification c = classify_model(m, uniform_grid(t_min, warp.t_max(), 10000));
    m.von_mangoldt = c.von_mangoldt;
    m.rho = c.rho;
    m.G_at_rho = c.G_at_rho;
    return m;
}

ModelSurface make_surface(const SurfaceSpec& spec) {
    if (!(spec.t_max > 0) || !(spec.t_min > 0) || spec.t_min >= spec.t_max)
        throw Error(ErrorKind::ConfigInvalid, "surface: need 0 < t_min < T_max");
    WarpFunction warp;
    RadialCurvature curv;
    if (is_analytic_family(spec.family)) {
        warp = builtin_warp(spec.family, spec.params, spec.t_max);
        curv = builtin_curvature(spec.family, spec.params, spec.t_min);
    } else if (spec.family == "curvature_bump") {
        if (!is_analytic_family(spec.base_family))
            throw Error(ErrorKind::ConfigInvalid, "surface.base_family: unknown family '" + spec.base_family + "'");
        auto get = [&](const char* k, double def) {
            auto it = spec.params.find(k);
            return it == spec.params.end() ? def : it->second;
        };
        if (!spec.params.count("lo") || !spec.params.count("hi"))
            throw Error(ErrorKind::ConfigInvalid, "surface.params: curvature_bump needs lo and hi");
        curv = bumped_curvature(builtin_curvature(spec.base_family, spec.params, spec.t_min), get("amp", 0.2),
                                get("lo", 0), get("hi", 0), get("ramp", 0.15));
        warp = warp_from_curvature(curv, spec.t_max, get("step", 1e-2));
    } else {
        throw Error(ErrorKind::ConfigInvalid, "surface.family: unknown family '" + spec.family + "'");
    }
    ModelSurface m = make_surface(warp, curv, spec.t_min, spec.family);
    m.spec = spec;
    return m;
}

double compatibility_residual(const ModelSurface& surface, const std::vector<double>& grid) {
    double worst = 0;
    for (double t : grid) {
        WarpSample w = surface.warp.eval(t);
        worst = std::max(worst, std::abs(w.d2f + surface.curvature.unguarded(t) * w.f) / (1 + std::abs(w.f)));
    }
    return worst;
}

double ModelGeodesic::excess() const {
    const auto& e = samples.back();
    return e.t >= start.t ? e.excess_plus : e.excess_minus;
}

ModelPoint ModelGeodesic::end() const { return {samples.back().t, wrap_angle(samples.back().theta)}; }

double ModelGeodesic::max_clairaut_drift(const ModelSurface& surface) const {
    double worst = 0;
    for (const auto& q : samples) {
        double f = surface.f(q.t);
        worst = std::max(worst, std::abs(f * f * std::abs(q.dtheta) - nu));
    }
    return worst;
}

double ModelGeodesic::max_speed_residual(const ModelSurface& surface) const {
    double worst = 0;
    for (const auto& q : samples) {
        double f = surface.f(q.t);
        worst = std::max(worst, std::abs(q.dt * q.dt + f * f * q.dtheta * q.dtheta - 1));
    }
    return worst;
}

GeodesicSample ModelGeodesic::at(double s) const {
    if (s <= samples.front().s) return samples.front();
    if (s >= samples.back().s) return samples.back();
    auto it = std::upper_bound(samples.begin(), samples.end(), s,
                               [](double v, const GeodesicSample& q) { return v < q.s; });
    const GeodesicSample& b = *it;
    const GeodesicSample& a = *(it - 1);
    double h = b.s - a.s;
    double u = (s - a.s) / h;
    GeodesicSample r;
    r.s = s;
    r.t = hermite(a.t, b.t, a.dt, b.dt, u, h);
    r.theta = hermite(a.theta, b.theta, a.dtheta, b.dtheta, u, h);
    r.dt = a.dt + u * (b.dt - a.dt);
    r.dtheta = a.dtheta + u * (b.dtheta - a.dtheta);
    r.excess_plus = a.excess_plus + u * (b.excess_plus - a.excess_plus);
    r.excess_minus = a.excess_minus + u * (b.excess_minus - a.excess_minus);
    return r;
}

double clairaut_constant(const ModelSurface& surface, const ModelPoint& point, double psi) {
    check_point(surface, point, "point");
    if (psi == 0 || psi == kPi) return 0.0;
    return surface.f(point.t) * std::sin(psi);
}

ModelGeodesic integrate_geodesic(const ModelSurface& surface, const ModelPoint& start, double psi, double length,
                                 double step) {
    check_point(surface, start, "start");
    if (!(psi >= 0 && psi <= kPi)) throw Error(ErrorKind::ConfigInvalid, "psi must lie in [0, pi]", psi);
    if (!(step > 0) || !(length >= 0)) throw Error(ErrorKind::ConfigInvalid, "need step > 0 and length >= 0");
    if (psi == 0 || psi == kPi) return meridian(surface, start, psi == kPi, length, step);

    const double nu = surface.f(start.t) * std::sin(psi);
    double h = step;
    ModelGeodesic g;
    for (int k = 0; k < 8; ++k, h *= 0.5) {
        Tracer tr(surface, h, surface.t_min());
        Trace r = tr.run(initial_state(surface, start.t, psi), length, kNaN, true);
        if (r.status == Status::Pole)
            throw Error(ErrorKind::PoleCrossing, "geodesic enters the pole-exclusion disc", r.s_end);
        if (r.status == Status::Domain) throw Error(ErrorKind::DomainExit, "geodesic leaves t <= T_max", r.s_end);
        g = to_geodesic(start, psi, 1, nu, h, std::move(r.samples));
        if (g.max_clairaut_drift(surface) <= 1e-6 && g.max_speed_residual(surface) <= 1e-8) break;
    }
    return g;
}

ModelDistance model_distance(const ModelSurface& surface, const ModelPoint& a, const ModelPoint& b,
                             const DistanceOptions& opts) {
    check_point(surface, a, "a");
    check_point(surface, b, "b");
    double dth = wrap_angle(b.theta - a.theta);
    int orientation = 1;
    if (dth > kPi) {
        dth = 2 * kPi - dth;
        orientation = -1;
    }
    if (dth == 0) {
        ModelDistance md;
        bool inward = b.t < a.t;
        md.d = std::abs(b.t - a.t);
        md.excess = 0.0;
        md.geodesic = meridian(surface, a, inward, md.d, opts.step);
        md.connector_psi = {md.geodesic.psi};
        md.connector_length = {md.d};
        return md;
    }
    const bool pole_ok = opts.include_pole_path && dth >= kPi - 1e-15;
    const double pole_len = a.t + b.t;
    double cap = opts.length_cap > 0 ? opts.length_cap : pole_len + 1e-9;
    auto cons = shoot_connectors(surface, a.t, b.t, dth, cap, opts);
    // nearly opposite points: the connector may pass inside the pole-exclusion
    // disc, which is only a guard for the tracer, so shrink it
    DistanceOptions near = opts;
    near.pole_radius = opts.pole_radius > 0 ? opts.pole_radius : surface.t_min();
    while (cons.empty() && !pole_ok && near.pole_radius > 1e-13) {
        near.pole_radius *= 1e-3;
        cons = shoot_connectors(surface, a.t, b.t, dth, cap, near);
    }
    if (pole_ok && (cons.empty() ||
                    std::min_element(cons.begin(), cons.end(), [](auto& x, auto& y) { return x.length < y.length; })
                                ->length >= pole_len)) {
        ModelDistance md;
        md.d = pole_len;
        md.excess = 2 * std::min(a.t, b.t);
        md.via_pole = true;
        md.geodesic = meridian(surface, a, true, pole_len, opts.step);
        md.connector_psi = {kPi};
        md.connector_length = {pole_len};
        for (const auto& c : cons) {
            if (c.length - pole_len < opts.tie_tolerance) {
                md.connector_psi.push_back(c.dir.psi());
                md.connector_length.push_back(c.length);
            }
        }
        return md;
    }
    if (cons.empty()) {
        std::ostringstream os;
        os << "no connector from (" << a.t << "," << a.theta << ") to (" << b.t << "," << b.theta << ")";
        throw Error(ErrorKind::ShootingFailed, os.str(), kInf);
    }
    ModelDistance md = finish(surface, a, dth, orientation, cons, near);
    if (dth >= kPi - 1e-15) {
        // the mirror images tie at dtheta = pi
        std::size_t n = md.connector_psi.size();
        for (std::size_t i = 0; i < n; ++i) {
            md.connector_psi.push_back(md.connector_psi[i]);
            md.connector_length.push_back(md.connector_length[i]);
        }
    }
    return md;
}

std::optional<ModelDistance> shoot_to(const ModelSurface& surface, double t_a, double t_b, double dtheta,
                                      const DistanceOptions& opts) {
    if (!(dtheta > 0)) throw Error(ErrorKind::ConfigInvalid, "shoot_to needs dtheta > 0", dtheta);
    double cap = opts.length_cap > 0 ? opts.length_cap : t_a + t_b + 1e-9;
    auto cons = shoot_connectors(surface, t_a, t_b, dtheta, cap, opts);
    if (cons.empty()) return std::nullopt;
    return finish(surface, {t_a, 0.0}, dtheta, 1, cons, opts);
}

double length_lower_bound(const ModelSurface& surface, double nu, double t0, double t1) {
    if (!(t1 > t0)) throw Error(ErrorKind::ConfigInvalid, "length_lower_bound needs t1 > t0");
    if (nu == 0) return t1 - t0;
    const int n = 2000;
    for (int i = 0; i <= n; ++i) {
        double t = t0 + (t1 - t0) * i / n;
        if (surface.f(t) - nu < 1e-8) {
            std::ostringstream os;
            os << "f - nu = " << surface.f(t) - nu << " at t = " << t;
            throw Error(ErrorKind::IntegrandSingular, os.str(), t);
        }
    }
    auto integrand = [&](double t) {
        double f = surface.f(t);
        return 1.0 / (f * std::sqrt((f - nu) * (f + nu)));
    };
    // tanh-sinh copes with the inverse square root where f approaches nu
    static boost::math::quadrature::tanh_sinh<double> quad;
    double integral = quad.integrate(integrand, t0, t1, 1e-12);
    return (t1 - t0) + 0.5 * nu * nu * integral;
}

std::optional<double> first_conjugate_point(const ModelSurface& surface, double t_start, double step) {
    check_point(surface, {t_start, 0}, "t_start");
    auto K = [&](double s) { return surface.curvature.unguarded(std::abs(t_start - s)); };
    const double s_end = t_start + surface.t_max();
    double s = 0, J = 0, dJ = 1;
    while (s < s_end) {
        double h = std::min(step, s_end - s);
        auto acc = [&](double ss, double j) { return -K(ss) * j; };
        double k1j = dJ, k1d = acc(s, J);
        double k2j = dJ + 0.5 * h * k1d, k2d = acc(s + 0.5 * h, J + 0.5 * h * k1j);
        double k3j = dJ + 0.5 * h * k2d, k3d = acc(s + 0.5 * h, J + 0.5 * h * k2j);
        double k4j = dJ + h * k3d, k4d = acc(s + h, J + h * k3j);
        double J1 = J + h / 6 * (k1j + 2 * k2j + 2 * k3j + k4j);
        double dJ1 = dJ + h / 6 * (k1d + 2 * k2d + 2 * k3d + k4d);
        if (s > 0 && J1 <= 0) {
            double lo = 0, hi = 1;
            for (int it = 0; it < 60; ++it) {
                double m = 0.5 * (lo + hi);
                if (hermite(J, J1, dJ, dJ1, m, h) > 0) lo = m;
                else hi = m;
            }
            return s + 0.5 * (lo + hi) * h;
        }
        s += h;
        J = J1;
        dJ = dJ1;
    }
    return std::nullopt;
}

CutLocus cut_locus(const ModelSurface& surface, const ModelPoint& x, const CutLocusOptions& opts) {
    check_point(surface, x, "x");
    CutLocus out;
    out.theta_opposite = wrap_angle(x.theta + kPi);
    DistanceOptions d;
    d.pole_radius = opts.pole_radius;
    d.include_pole_path = false;
    const double t_hi = opts.t_search_max > 0 ? opts.t_search_max : std::min(surface.t_max(), x.t + 4.0);
    const double t_lo = 10 * opts.pole_radius;

    // side connectors to (t, pi) at most as long as the path through the pole
    auto beyond_cut = [&](double t) {
        double cap = x.t + t + 1e-9;
        auto cons = shoot_connectors(surface, x.t, t, kPi, cap, d);
        for (const auto& c : cons)
            if (c.length <= x.t + t + 1e-9) return true;
        return false;
    };
    double prev = t_lo;
    if (beyond_cut(prev)) {
        out.empty = false;
        out.t_cut = prev;
        return out;
    }
    for (int i = 1; i <= opts.coarse_points; ++i) {
        double t = t_lo + (t_hi - t_lo) * i / opts.coarse_points;
        if (beyond_cut(t)) {
            double lo = prev, hi = t;
            while (hi - lo > opts.t_tolerance) {
                double m = 0.5 * (lo + hi);
                if (beyond_cut(m)) hi = m;
                else lo = m;
            }
            out.empty = false;
            out.t_cut = 0.5 * (lo + hi);
            return out;
        }
        prev = t;
    }
    return out;
}

AngleLemma check_angle_lemma(const ModelSurface& surface, const ModelPoint& x, const ModelPoint& y) {
    if (!surface.rho) throw Error(ErrorKind::HypothesisViolated, "surface has no critical radius");
    const double rho = *surface.rho;
    if (!(x.t > rho) || !(y.t > rho))
        throw Error(ErrorKind::HypothesisViolated, "angle lemma needs both points outside t = rho");
    if (x.t > y.t) throw Error(ErrorKind::HypothesisViolated, "angle lemma needs t(x) <= t(y)");
    ModelDistance md = model_distance(surface, x, y);
    AngleLemma r;
    r.angle_at_x = md.geodesic.psi;
    r.min_t = kInf;
    for (const auto& q : md.geodesic.samples) r.min_t = std::min(r.min_t, q.t);
    r.passes = r.angle_at_x < kPi / 2 && r.min_t > rho;
    return r;
}

double parallel_geodesic_residual(const ModelSurface& surface, double length, double step) {
    if (!surface.rho) throw Error(ErrorKind::HypothesisViolated, "surface has no critical radius");
    ModelGeodesic g = integrate_geodesic(surface, {*surface.rho, 0.0}, kPi / 2, length, step);
    double worst = 0;
    for (const auto& q : g.samples) worst = std::max(worst, std::abs(q.t - *surface.rho));
    return worst;
}

} // namespace cmpgeo::model
