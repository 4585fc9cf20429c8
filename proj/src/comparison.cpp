#include "cmpgeo/comparison.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

namespace cmpgeo::comparison {

namespace {

constexpr double kPi = 3.14159265358979323846;

using finsler::ChartSample;
using finsler::Mat;

// angles of the model triangle from the realizing geodesic x~ -> y~
void fill_angles(const model::ModelSurface& model, ComparisonTriangle& tri, bool via_pole) {
    tri.angle_p = tri.dtheta;
    if (via_pole) {
        tri.angle_x = 0.0;
        tri.angle_y = 0.0;
        return;
    }
    tri.angle_x = kPi - tri.xy.psi;
    const auto& e = tri.xy.back();
    tri.angle_y = std::atan2(model.f(e.t) * std::abs(e.dtheta), e.dt);
}

ComparisonTriangle degenerate(double t_x, double t_y) {
    ComparisonTriangle tri;
    tri.t_x = t_x;
    tri.t_y = t_y;
    tri.side_xy = std::abs(t_y - t_x);
    tri.realized_side = tri.side_xy;
    tri.angle_x = t_y > t_x ? kPi : 0.0;
    tri.angle_y = t_y > t_x ? 0.0 : kPi;
    tri.angle_p = 0.0;
    return tri;
}

} // namespace

// ---- forward triangles ----

double lm_length(const FinslerChart& chart, const ChartGeodesic& path) {
    if (chart.reversible()) return path.length;
    return finsler::reversed_length(chart, path);
}

ForwardTriangle build_forward_triangle(const FinslerChart& chart, const Vec& p, const Vec& x, const Vec& y,
                                       const finsler::AngleOptions& angle_opts) {
    if ((p - x).norm() == 0 || (p - y).norm() == 0 || (x - y).norm() == 0)
        throw Error(ErrorKind::ConfigInvalid, "triangle vertices must be distinct");
    ForwardTriangle tri;
    tri.p = p;
    tri.x = x;
    tri.y = y;
    tri.gamma = finsler::distance(chart, p, x);
    tri.sigma = finsler::distance(chart, p, y);
    tri.c = finsler::distance(chart, x, y);
    tri.d_px = tri.gamma.d;
    tri.d_py = tri.sigma.d;
    tri.lm_xy = std::max(lm_length(chart, tri.c.path), tri.c.d);
    finsler::AngleOptions ax = angle_opts;
    ax.from_p = &tri.gamma;
    tri.angle_x = finsler::forward_angle(chart, p, tri.c.path, 0.0, ax);
    finsler::AngleOptions ay = angle_opts;
    ay.from_p = &tri.sigma;
    tri.angle_y = finsler::backward_angle(chart, p, tri.c.path, tri.c.path.length, ay);
    return tri;
}

// ---- comparison triangles ----

ComparisonTriangle build_comparison_triangle(const model::ModelSurface& model, double t_x, double t_y,
                                             double side_xy, const ComparisonOptions& opts) {
    double gap = std::abs(t_y - t_x);
    if (!(side_xy > gap - 1e-9)) {
        std::ostringstream os;
        os << "side " << side_xy << " is shorter than |t_y - t_x| = " << gap;
        throw Error(ErrorKind::NotAdmissible, os.str(), side_xy);
    }
    ComparisonTriangle tri = build_comparison_triangle_excess(model, t_x, t_y, std::max(0.0, side_xy - gap), opts);
    tri.side_xy = side_xy;
    return tri;
}

ComparisonTriangle build_comparison_triangle_excess(const model::ModelSurface& model, double t_x, double t_y,
                                                    double excess, const ComparisonOptions& opts) {
    for (double t : {t_x, t_y}) {
        if (!(t > model.t_min() && t <= model.t_max()))
            throw Error(ErrorKind::ConfigInvalid, "triangle side from the pole outside (t_min, T_max]", t);
    }
    if (!(excess >= 0)) throw Error(ErrorKind::NotAdmissible, "negative excess", excess);
    if (excess == 0) {
        if (t_x == t_y) throw Error(ErrorKind::NotAdmissible, "x~ and y~ coincide");
        return degenerate(t_x, t_y);
    }

    const model::ModelPoint a{t_x, 0.0};
    auto measure = [&](double dtheta) { return model::model_distance(model, a, {t_y, dtheta}, opts.distance); };

    model::ModelDistance far = measure(kPi);
    if (excess > far.excess * (1 + 1e-12) + 1e-15) {
        std::ostringstream os;
        os << "excess " << excess << " exceeds the largest realizable " << far.excess;
        throw Error(ErrorKind::NotAdmissible, os.str(), excess);
    }

    // Work in u = log(dtheta): the excess grows like dtheta^2 for small
    // dtheta, so log(excess) is close to linear in u.
    const double log_target = std::log(excess);
    auto g = [&](double u) {
        double e = measure(std::exp(u)).excess;
        return std::log(std::max(e, 1e-300)) - log_target;
    };
    const double u_pi = std::log(kPi);
    double u_hi = u_pi, g_hi = std::log(std::max(far.excess, 1e-300)) - log_target;
    ComparisonTriangle tri;
    tri.t_x = t_x;
    tri.t_y = t_y;
    tri.excess = excess;
    tri.side_xy = std::abs(t_y - t_x) + excess;

    double u_root;
    if (g_hi <= 0) {
        u_root = u_pi;
    } else {
        double guess = std::min(u_pi, u_pi + 0.5 * (log_target - std::log(far.excess)));
        double u_lo = guess, g_lo = g(u_lo);
        if (g_lo > 0) {
            u_hi = u_lo;
            g_hi = g_lo;
            double step = std::log(10.0);
            while (g_lo > 0) {
                u_lo = u_hi - step;
                if (u_lo < std::log(1e-300)) throw Error(ErrorKind::NotAdmissible, "no separation realizes the excess", excess);
                g_lo = g(u_lo);
                if (g_lo > 0) {
                    u_hi = u_lo;
                    g_hi = g_lo;
                }
                step *= 2;
            }
        } else if (guess < u_pi) {
            double step = std::log(10.0);
            double u = u_lo;
            while (true) {
                double un = std::min(u_pi, u + step);
                double gn = un == u_pi ? g_hi : g(un);
                if (gn > 0) {
                    u_lo = u;
                    u_hi = un;
                    g_hi = gn;
                    break;
                }
                u = un;
                g_lo = gn;
                step *= 2;
            }
        }
        if (g_lo == 0) {
            u_root = u_lo;
        } else {
            boost::uintmax_t iters = opts.max_iterations;
            auto r = boost::math::tools::toms748_solve(g, u_lo, u_hi, g_lo, g_hi,
                                                       boost::math::tools::eps_tolerance<double>(48), iters);
            u_root = 0.5 * (r.first + r.second);
        }
    }
    tri.dtheta = u_root == u_pi ? kPi : std::exp(u_root);
    model::ModelDistance md = u_root == u_pi ? far : measure(tri.dtheta);
    tri.xy = md.geodesic;
    tri.realized_side = md.d;
    fill_angles(model, tri, md.via_pole);
    return tri;
}

// ---- TCT ----

const char* to_string(MarginClass m) {
    switch (m) {
    case MarginClass::Strict: return "strict";
    case MarginClass::Equality: return "equality";
    case MarginClass::Violation: return "violation";
    }
    return "unknown";
}

MarginClass classify_margin(double margin, double band) {
    if (margin > band) return MarginClass::Strict;
    if (margin >= -band) return MarginClass::Equality;
    return MarginClass::Violation;
}

namespace {

struct PointCheck {
    double convexity = std::numeric_limits<double>::infinity();
    double tangent = 0.0;
};

void check_velocities(const FinslerChart& chart, const Vec& z, const std::vector<Vec>& velocities, int w_count,
                      PointCheck& acc) {
    std::vector<Vec> W = finsler::indicatrix_directions(chart, z, w_count);
    for (const Vec& v : velocities) {
        acc.convexity = std::min(acc.convexity, finsler::uniform_convexity_margin(chart, z, v, W));
        for (const Vec& w : W) {
            if (std::abs((v / v.norm()).dot(w / w.norm())) > 1 - 1e-9) continue;
            acc.tangent = std::max(acc.tangent, std::abs(finsler::tangent_curvature(chart, z, v, w)));
        }
    }
}

} // namespace

TCTReport verify_tct(const FinslerChart& chart, const model::ModelSurface& model, const Vec& p, const Vec& x,
                     const Vec& y, const TCTOptions& opts) {
    if (!model.rho) throw Error(ErrorKind::ConfigInvalid, "model has no critical radius");
    const double rho = *model.rho;
    TCTReport rep;
    rep.path_samples = opts.path_samples;
    rep.w_samples = opts.w_samples;
    rep.triangle = build_forward_triangle(chart, p, x, y, opts.angle);
    const ForwardTriangle& tri = rep.triangle;
    const ChartGeodesic& c = tri.c.path;
    TCTHypotheses& h = rep.hypotheses;

    PointCheck acc;
    double min_d = std::numeric_limits<double>::infinity();
    const int n = std::max(2, opts.path_samples);
    for (int i = 0; i < n; ++i) {
        Vec z = c.at(c.length * i / (n - 1)).x;
        MinimalConnector mc = finsler::distance(chart, p, z);
        min_d = std::min(min_d, mc.d);
        std::vector<Vec> vs;
        if (mc.all_connectors.empty()) vs.push_back(mc.path.back().xdot);
        for (const auto& g : mc.all_connectors) vs.push_back(g.back().xdot);
        check_velocities(chart, z, vs, opts.w_samples, acc);
    }
    // the neighborhood: a tube around c, where G_p(z) is replaced by the whole indicatrix
    if (opts.tube_points > 0 && opts.tube_radius > 0) {
        std::vector<Vec> dirs = finsler::unit_directions(chart.dim(), opts.tube_points);
        for (int i = 0; i < opts.tube_points; ++i) {
            Vec z = c.at(c.length * (i + 0.5) / opts.tube_points).x + opts.tube_radius * dirs[i];
            if (!chart.contains(z)) continue;
            check_velocities(chart, z, finsler::indicatrix_directions(chart, z, 16), opts.w_samples, acc);
        }
    }
    h.min_distance_to_p = min_d;
    h.outside_ball = min_d > rho;
    h.convexity_margin = acc.convexity;
    h.tangent_curvature_max = acc.tangent;
    h.reverse_geodesic_residual = std::max({finsler::reverse_geodesic_check(chart, c).residual,
                                            finsler::reverse_geodesic_check(chart, tri.gamma.path).residual,
                                            finsler::reverse_geodesic_check(chart, tri.sigma.path).residual});
    h.passed = h.outside_ball && h.convexity_margin >= -opts.convexity_tolerance &&
               h.tangent_curvature_max <= opts.tangent_tolerance &&
               h.reverse_geodesic_residual <= opts.reverse_tolerance;
    if (!h.passed) {
        rep.note = "hypothesis check failed";
        return rep;
    }
    try {
        double gap = std::abs(tri.d_py - tri.d_px);
        rep.comparison = build_comparison_triangle_excess(model, tri.d_px, tri.d_py, std::max(0.0, tri.lm_xy - gap),
                                                          opts.comparison);
        rep.comparison->side_xy = tri.lm_xy;
        rep.admissible = true;
        rep.margin_x = tri.angle_x - rep.comparison->angle_x;
        rep.margin_y = tri.angle_y - rep.comparison->angle_y;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::NotAdmissible) throw;
        rep.note = e.what();
    }
    return rep;
}

// ---- critical points ----

std::vector<Vec> connector_set(const FinslerChart& chart, const Vec& p, const Vec& x) {
    MinimalConnector mc = finsler::distance(chart, p, x);
    std::vector<Vec> out;
    for (const auto& g : mc.all_connectors) out.push_back(g.back().xdot);
    if (out.empty()) out.push_back(mc.path.back().xdot);
    return out;
}

CriticalVerdict is_forward_critical(const FinslerChart& chart, const Vec& p, const Vec& x,
                                    const std::vector<Vec>& w_samples,
                                    const std::optional<std::vector<Vec>>& connectors, double threshold) {
    if ((x - p).norm() == 0) throw Error(ErrorKind::ConfigInvalid, "x must differ from p");
    CriticalVerdict out;
    out.point = x;
    std::vector<Vec> vs = connectors ? *connectors : connector_set(chart, p, x);
    out.connectors = static_cast<int>(vs.size());
    if (vs.empty()) throw Error(ErrorKind::ConfigInvalid, "empty connector set");

    // g_v(v, .) as a covector, one per connector
    std::vector<Vec> forms;
    for (const Vec& v : vs) forms.push_back(finsler::fundamental_tensor(chart, x, v).g * v);

    std::vector<Vec> W = w_samples;
    for (const Vec& v : vs) W.push_back(v / chart.F(x, v));

    out.critical = true;
    out.worst = -std::numeric_limits<double>::infinity();
    for (const Vec& w : W) {
        double m = std::numeric_limits<double>::infinity();
        for (const Vec& f : forms) m = std::min(m, f.dot(w));
        if (m > out.worst) {
            out.worst = m;
            if (m > threshold) out.witness = w;
        }
        if (m > threshold) out.critical = false;
    }
    return out;
}

CriticalScanReport critical_scan(const FinslerChart& chart, const Vec& p, const std::vector<double>& radii,
                                 int points_per_shell, int w_samples) {
    for (std::size_t i = 1; i < radii.size(); ++i) {
        if (!(radii[i] > radii[i - 1])) throw Error(ErrorKind::ConfigInvalid, "radii must increase");
    }
    CriticalScanReport rep;
    rep.p = p;
    rep.radii = radii;
    rep.points_per_shell = points_per_shell;
    rep.w_samples = w_samples;
    std::vector<Vec> dirs = finsler::unit_directions(chart.dim(), points_per_shell);
    for (double r : radii) {
        for (const Vec& d : dirs) {
            Vec u = d / chart.F(p, d);
            try {
                ChartGeodesic g = finsler::integrate_geodesic(chart, p, u, r);
                g.require_inside();
                Vec q = g.back().x;
                CriticalVerdict v = is_forward_critical(chart, p, q, finsler::indicatrix_directions(chart, q, w_samples));
                if (v.critical && (!rep.outermost_critical_radius || r > *rep.outermost_critical_radius))
                    rep.outermost_critical_radius = r;
                rep.verdicts.push_back(std::move(v));
                rep.verdict_radius.push_back(r);
            } catch (const Error& e) {
                std::ostringstream os;
                os << "r = " << r << ", u = (" << u.transpose() << "): " << e.what();
                rep.failures.push_back(os.str());
            }
        }
    }
    return rep;
}

// ---- diameter growth ----

GrowthReport diameter_growth(const FinslerChart& chart, const Vec& p, const std::vector<double>& t_list,
                             int samples_per_shell) {
    for (std::size_t i = 1; i < t_list.size(); ++i) {
        if (!(t_list[i] > t_list[i - 1])) throw Error(ErrorKind::ConfigInvalid, "t_list must increase");
    }
    GrowthReport rep;
    rep.t = t_list;
    rep.samples_per_shell = samples_per_shell;
    std::vector<Vec> dirs = finsler::unit_directions(chart.dim(), samples_per_shell);
    for (double t : t_list) {
        std::vector<Vec> q;
        for (const Vec& d : dirs) {
            ChartGeodesic g = finsler::integrate_geodesic(chart, p, d / chart.F(p, d), t);
            g.require_inside();
            q.push_back(g.back().x);
        }
        double diam = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) {
            for (std::size_t j = 0; j < q.size(); ++j) {
                if (i == j || (chart.reversible() && j < i)) continue;
                diam = std::max(diam, finsler::distance(chart, q[i], q[j]).d);
            }
        }
        rep.diameter.push_back(diam);
    }
    const std::size_t n = t_list.size();
    if (n >= 2) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += std::log(t_list[i]);
            my += std::log(rep.diameter[i]);
        }
        mx /= n;
        my /= n;
        double sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double dx = std::log(t_list[i]) - mx;
            sxx += dx * dx;
            sxy += dx * (std::log(rep.diameter[i]) - my);
        }
        double a = sxy / sxx;
        rep.alpha = a;
        if (n >= 3) {
            double ssr = 0;
            for (std::size_t i = 0; i < n; ++i) {
                double r = std::log(rep.diameter[i]) - (my + a * (std::log(t_list[i]) - mx));
                ssr += r * r;
            }
            rep.alpha_stderr = std::sqrt(ssr / (n - 2) / sxx);
        }
    }
    return rep;
}

// ---- broken geodesic chain ----

namespace {

// parameter s with theta(s) = target on a theta-nondecreasing model geodesic
double t_at_theta(const model::ModelGeodesic& g, double target) {
    double lo = 0.0, hi = g.length;
    if (target <= g.samples.front().theta) return g.samples.front().t;
    if (target >= g.back().theta) return g.back().t;
    for (int i = 0; i < 100 && hi - lo > 1e-15 * std::max(1.0, g.length); ++i) {
        double mid = 0.5 * (lo + hi);
        (g.at(mid).theta < target ? lo : hi) = mid;
    }
    return g.at(0.5 * (lo + hi)).t;
}

} // namespace

ChainReport broken_geodesic_chain(const model::ModelSurface& model, const std::vector<PanelSide>& panels,
                                  const ChainOptions& opts) {
    if (panels.empty()) throw Error(ErrorKind::ConfigInvalid, "chain needs at least one panel");
    ChainReport rep;
    rep.t_x = panels.front().t0;
    rep.t_end = panels.back().t1;
    rep.theta_offsets.push_back(0.0);
    double sum_sides = 0.0;
    rep.subdivision.push_back(0.0);
    for (std::size_t l = 0; l < panels.size(); ++l) {
        const PanelSide& ps = panels[l];
        ComparisonTriangle tri;
        try {
            tri = std::isnan(ps.excess) ? build_comparison_triangle(model, ps.t0, ps.t1, ps.side, opts.comparison)
                                        : build_comparison_triangle_excess(model, ps.t0, ps.t1, ps.excess,
                                                                           opts.comparison);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::NotAdmissible) throw;
            std::ostringstream os;
            os << "panel " << l << ": " << e.what();
            throw Error(ErrorKind::NotAdmissible, os.str(), static_cast<double>(l));
        }
        tri.side_xy = ps.side;
        rep.excess_xi += tri.excess + (std::abs(ps.t1 - ps.t0) - (ps.t1 - ps.t0));
        sum_sides += ps.side;
        rep.subdivision.push_back(sum_sides);
        rep.theta_offsets.push_back(rep.theta_offsets.back() + tri.dtheta);
        rep.panels.push_back(std::move(tri));
    }
    rep.length_xi = sum_sides;

    for (std::size_t l = 0; l + 1 < rep.panels.size(); ++l) {
        double h = rep.panels[l].angle_y + rep.panels[l + 1].angle_x;
        rep.hinge_sums.push_back(h);
        if (h > kPi + opts.hinge_tolerance) ++rep.hinge_violations;
    }

    for (std::size_t l = 0; l < rep.panels.size(); ++l) {
        const ComparisonTriangle& tri = rep.panels[l];
        if (tri.xy.samples.empty()) {
            rep.xi.push_back({rep.theta_offsets[l], tri.t_x});
            rep.xi.push_back({rep.theta_offsets[l + 1], tri.t_y});
            continue;
        }
        for (const auto& q : tri.xy.samples) rep.xi.push_back({rep.theta_offsets[l] + q.theta, q.t});
    }

    const double Theta = rep.theta_offsets.back();
    const double t0 = rep.t_x, t1 = rep.t_end;
    if (Theta > 0) {
        if (auto md = model::shoot_to(model, t0, t1, Theta, opts.comparison.distance)) rep.eta = md->geodesic;
    }
    if (Theta > 0 && !rep.eta) {
        rep.note = "no theta-monotone geodesic joins the ends of the chain";
    } else {
        if (rep.eta) {
            rep.nu = rep.eta->nu;
            rep.excess_eta = rep.eta->excess();
            for (const auto& q : rep.eta->samples) rep.eta_samples.push_back({q.theta, q.t});
        }
        rep.length_eta = std::abs(t1 - t0) + rep.excess_eta;
        rep.length_ok = rep.excess_eta <= rep.excess_xi + opts.length_tolerance;
    }

    double lo = std::min(t0, t1), hi = std::max(t0, t1);
    if (hi > lo) {
        auto integrand = [&](double t) {
            double f = model.f(t);
            return 1.0 / (f * f);
        };
        rep.integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, lo, hi, 25, 1e-12);
    }
    rep.lhs = 4.0 * t0;
    rep.rhs = rep.nu * rep.nu * rep.integral;
    rep.estimate_ok = rep.lhs >= rep.rhs;

    // t(eta) <= t(xi) at matched theta
    rep.passes_under = rep.eta.has_value() || Theta == 0;
    rep.under_gap = -std::numeric_limits<double>::infinity();
    if (rep.eta) {
        const int m = std::max(2, opts.theta_grid);
        std::size_t l = 0;
        for (int j = 1; j < m; ++j) {
            double th = Theta * j / m;
            while (l + 1 < rep.panels.size() && rep.theta_offsets[l + 1] < th) ++l;
            const ComparisonTriangle& tri = rep.panels[l];
            double t_xi = tri.xy.samples.empty() ? tri.t_x : t_at_theta(tri.xy, th - rep.theta_offsets[l]);
            double t_eta = t_at_theta(*rep.eta, th);
            rep.under_gap = std::max(rep.under_gap, t_eta - t_xi);
        }
        rep.passes_under = rep.under_gap <= opts.under_tolerance;
    }
    return rep;
}

std::vector<PanelSide> panels_from_geodesic(const model::ModelGeodesic& g, int panels) {
    if (panels < 1) throw Error(ErrorKind::ConfigInvalid, "need at least one panel");
    const auto& S = g.samples;
    const int last = static_cast<int>(S.size()) - 1;
    if (last < panels) throw Error(ErrorKind::ConfigInvalid, "geodesic has fewer samples than panels");
    // cut at sample nodes so that the excess comes from the integrated sums
    std::vector<int> cut;
    for (int l = 0; l <= panels; ++l) {
        double s = g.length * l / panels;
        auto it = std::lower_bound(S.begin(), S.end(), s,
                                   [](const model::GeodesicSample& q, double v) { return q.s < v; });
        int i = static_cast<int>(it - S.begin());
        if (i > last) i = last;
        if (i > 0 && std::abs(S[i - 1].s - s) < std::abs(S[i].s - s)) --i;
        if (l == 0) i = 0;
        if (l == panels) i = last;
        if (!cut.empty() && i <= cut.back()) i = cut.back() + 1;
        cut.push_back(i);
    }
    std::vector<PanelSide> out;
    for (int l = 0; l < panels; ++l) {
        const auto& a = S[cut[l]];
        const auto& b = S[cut[l + 1]];
        PanelSide p;
        p.t0 = a.t;
        p.t1 = b.t;
        p.side = b.s - a.s;
        bool up = true, down = true;
        for (int i = cut[l]; i <= cut[l + 1]; ++i) {
            up = up && S[i].dt > 0;
            down = down && S[i].dt < 0;
        }
        if (up) p.excess = b.excess_plus - a.excess_plus;
        else if (down) p.excess = b.excess_minus - a.excess_minus;
        out.push_back(p);
    }
    return out;
}

ChainReport chain_demo(const model::ModelSurface& model, double t_x, double t_end, double theta_end, int panels,
                       const ChainOptions& opts) {
    model::ModelDistance md = model::model_distance(model, {t_x, 0.0}, {t_end, theta_end}, opts.comparison.distance);
    for (int k = panels;; k *= 2) {
        try {
            return broken_geodesic_chain(model, panels_from_geodesic(md.geodesic, k), opts);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::NotAdmissible || k * 2 > 64) throw;
        }
    }
}

} // namespace cmpgeo::comparison
