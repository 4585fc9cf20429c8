#include "cmpgeo/warp.hpp"

#include <quadmath.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cmpgeo::model {

namespace {

inline double xexp(double x) { return std::exp(x); }
inline double xtanh(double x) { return std::tanh(x); }
inline double xsinh(double x) { return std::sinh(x); }
inline double xcosh(double x) { return std::cosh(x); }
inline double xsqrt(double x) { return std::sqrt(x); }
inline quad xexp(quad x) { return expq(x); }
inline quad xtanh(quad x) { return tanhq(x); }
inline quad xsinh(quad x) { return sinhq(x); }
inline quad xcosh(quad x) { return coshq(x); }
inline quad xsqrt(quad x) { return sqrtq(x); }

double param(const Params& p, const std::string& key, double fallback) {
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

template <class R>
R gauss_tanh_G(R t) {
    if (t == R(0)) return R(8);
    R ch = xcosh(t);
    R sech2 = R(1) / (ch * ch);
    return R(2) * sech2 + R(2) + R(8) * t / xsinh(R(2) * t) - R(4) * t * t;
}

template <class R>
WarpSample gauss_tanh_warp(R t) {
    R e = xexp(-t * t);
    R th = xtanh(t);
    R ch = xcosh(t);
    R sech2 = R(1) / (ch * ch);
    WarpSample s;
    s.f = static_cast<double>(e * th);
    s.df = static_cast<double>(e * (sech2 - R(2) * t * th));
    s.d2f = static_cast<double>(e * (-R(2) * sech2 * th - R(2) * th - R(4) * t * sech2 + R(4) * t * t * th));
    return s;
}

WarpSampleQ gauss_tanh_warp_q(quad t) {
    quad e = expq(-t * t);
    quad th = tanhq(t);
    quad ch = coshq(t);
    quad sech2 = 1 / (ch * ch);
    return {e * th, e * (-2 * sech2 * th - 2 * th - 4 * t * sech2 + 4 * t * t * th)};
}

template <class R>
R plateau_step(R u) {
    // C-infinity step from 0 (u <= 0) to 1 (u >= 1)
    if (u <= R(0)) return R(0);
    if (u >= R(1)) return R(1);
    R a = xexp(-R(1) / u);
    R b = xexp(-R(1) / (R(1) - u));
    return a / (a + b);
}

template <class R>
R plateau(R t, R lo, R hi, R ramp) {
    return plateau_step((t - (lo - ramp)) / ramp) * plateau_step(((hi + ramp) - t) / ramp);
}

// Quintic Hermite grid produced by warp_from_curvature.
struct WarpGrid {
    double h = 0.0;
    std::vector<double> f, df, d2f;

    WarpSample eval(double t) const {
        const std::size_t n = f.size();
        double x = t / h;
        std::size_t i = static_cast<std::size_t>(std::max(0.0, std::floor(x)));
        if (i >= n - 1) i = n - 2;
        double u = x - static_cast<double>(i);
        double p0 = f[i], p1 = f[i + 1];
        double d0 = h * df[i], d1 = h * df[i + 1];
        double s0 = h * h * d2f[i], s1 = h * h * d2f[i + 1];
        double dp = p1 - p0;
        double c0 = p0, c1 = d0, c2 = 0.5 * s0;
        double c3 = 10 * dp - 6 * d0 - 4 * d1 - 1.5 * s0 + 0.5 * s1;
        double c4 = -15 * dp + 8 * d0 + 7 * d1 + 1.5 * s0 - s1;
        double c5 = 6 * dp - 3 * d0 - 3 * d1 - 0.5 * s0 + 0.5 * s1;
        WarpSample s;
        s.f = c0 + u * (c1 + u * (c2 + u * (c3 + u * (c4 + u * c5))));
        s.df = (c1 + u * (2 * c2 + u * (3 * c3 + u * (4 * c4 + u * 5 * c5)))) / h;
        s.d2f = (2 * c2 + u * (6 * c3 + u * (12 * c4 + u * 20 * c5))) / (h * h);
        return s;
    }
};

} // namespace

WarpFunction::WarpFunction(Eval eval, double t_max, Source source, std::string label, bool has_d2f, EvalQ eval_q)
    : eval_(std::move(eval)), eval_q_(std::move(eval_q)), t_max_(t_max), source_(source),
      label_(std::move(label)), has_d2f_(has_d2f) {}

WarpSample WarpFunction::eval(double t) const {
    WarpSample s = eval_(t);
    if (!has_d2f_) {
        double h = std::min(1e-3, 0.25 * t);
        double fm2 = eval_(t - 2 * h).f, fm1 = eval_(t - h).f, fp1 = eval_(t + h).f, fp2 = eval_(t + 2 * h).f;
        s.d2f = (-fm2 + 16 * fm1 - 30 * s.f + 16 * fp1 - fp2) / (12 * h * h);
    }
    return s;
}

RadialCurvature::RadialCurvature(Eval g, Source source, std::string label, double t_min, EvalQ g_q)
    : g_(std::move(g)), g_q_(std::move(g_q)), source_(source), label_(std::move(label)), t_min_(t_min) {}

double RadialCurvature::operator()(double t) const {
    if (t < t_min_) {
        std::ostringstream os;
        os << "G requested at t = " << t << " below t_min = " << t_min_;
        throw Error(ErrorKind::PoleTooClose, os.str(), t);
    }
    return g_(t);
}

double RadialCurvature::unguarded(double t) const { return g_(std::max(t, 1e-12)); }

quad RadialCurvature::eval_quad(quad t) const {
    if (t < (quad)1e-12) t = (quad)1e-12;
    if (g_q_) return g_q_(t);
    return (quad)g_(static_cast<double>(t));
}

RadialCurvature RadialCurvature::with_t_min(double t_min) const {
    RadialCurvature c = *this;
    c.t_min_ = t_min;
    return c;
}

const std::vector<FamilyInfo>& warp_families() {
    static const std::vector<FamilyInfo> families = {
        {"flat", "f(t) = t, G = 0", {}},
        {"sinh", "f(t) = sinh(sqrt(k) t)/sqrt(k), G = -k", {{"k", "curvature magnitude > 0, default 1"}}},
        {"paraboloid", "f(t) = t/sqrt(1 + a t^2), G = 3a/(1 + a t^2)^2", {{"a", "shape > 0, default 1"}}},
        {"gauss_tanh", "f(t) = exp(-t^2) * tanh(t), G = 2 sech^2 t + 2 + 8t/sinh(2t) - 4t^2", {}},
        {"curvature_bump",
         "G = G_base + amp * plateau(lo, hi, ramp), f solved from f'' + G f = 0",
         {{"base", "base family name (surface field base_family)"},
          {"amp", "added curvature, default 0.2"},
          {"lo", "annulus inner radius"},
          {"hi", "annulus outer radius"},
          {"ramp", "smooth transition width, default 0.15"},
          {"step", "ODE node spacing, default 0.01"}}},
    };
    return families;
}

bool is_analytic_family(const std::string& family) {
    return family == "flat" || family == "sinh" || family == "paraboloid" || family == "gauss_tanh";
}

WarpFunction builtin_warp(const std::string& family, const Params& params, double t_max) {
    using S = WarpFunction::Source;
    if (family == "flat") {
        return WarpFunction([](double t) { return WarpSample{t, 1.0, 0.0}; }, t_max, S::Analytic, "flat", true,
                            [](quad t) { return WarpSampleQ{t, 0}; });
    }
    if (family == "sinh") {
        double k = param(params, "k", 1.0);
        if (!(k > 0)) throw Error(ErrorKind::ConfigInvalid, "params.k must be > 0");
        double r = std::sqrt(k);
        return WarpFunction(
            [r, k](double t) { return WarpSample{std::sinh(r * t) / r, std::cosh(r * t), k * std::sinh(r * t) / r}; },
            t_max, S::Analytic, "sinh", true,
            [r, k](quad t) {
                quad rq = r;
                quad s = sinhq(rq * t) / rq;
                return WarpSampleQ{s, (quad)k * s};
            });
    }
    if (family == "paraboloid") {
        double a = param(params, "a", 1.0);
        if (!(a > 0)) throw Error(ErrorKind::ConfigInvalid, "params.a must be > 0");
        return WarpFunction(
            [a](double t) {
                double q = 1 + a * t * t;
                double sq = std::sqrt(q);
                return WarpSample{t / sq, 1 / (q * sq), -3 * a * t / (q * q * sq)};
            },
            t_max, S::Analytic, "paraboloid", true,
            [a](quad t) {
                quad q = 1 + (quad)a * t * t;
                quad sq = sqrtq(q);
                return WarpSampleQ{t / sq, -3 * (quad)a * t / (q * q * sq)};
            });
    }
    if (family == "gauss_tanh") {
        return WarpFunction([](double t) { return gauss_tanh_warp(t); }, t_max, S::Analytic, "gauss_tanh", true,
                            gauss_tanh_warp_q);
    }
    throw Error(ErrorKind::ConfigInvalid, "surface.family: unknown analytic warp family '" + family + "'");
}

RadialCurvature builtin_curvature(const std::string& family, const Params& params, double t_min) {
    using S = RadialCurvature::Source;
    if (family == "flat") {
        return RadialCurvature([](double) { return 0.0; }, S::Analytic, "flat", t_min, [](quad) { return (quad)0; });
    }
    if (family == "sinh") {
        double k = param(params, "k", 1.0);
        return RadialCurvature([k](double) { return -k; }, S::Analytic, "sinh", t_min,
                               [k](quad) { return -(quad)k; });
    }
    if (family == "paraboloid") {
        double a = param(params, "a", 1.0);
        return RadialCurvature(
            [a](double t) {
                double q = 1 + a * t * t;
                return 3 * a / (q * q);
            },
            S::Analytic, "paraboloid", t_min,
            [a](quad t) {
                quad q = 1 + (quad)a * t * t;
                return 3 * (quad)a / (q * q);
            });
    }
    if (family == "gauss_tanh") {
        return RadialCurvature([](double t) { return gauss_tanh_G(t); }, S::Analytic, "gauss_tanh", t_min,
                               [](quad t) { return gauss_tanh_G(t); });
    }
    throw Error(ErrorKind::ConfigInvalid, "surface.family: unknown analytic curvature family '" + family + "'");
}

double smooth_plateau(double t, double lo, double hi, double ramp) { return plateau(t, lo, hi, ramp); }
quad smooth_plateau(quad t, quad lo, quad hi, quad ramp) { return plateau(t, lo, hi, ramp); }

RadialCurvature bumped_curvature(const RadialCurvature& base, double amp, double lo, double hi, double ramp) {
    if (!(ramp > 0) || !(hi >= lo)) throw Error(ErrorKind::ConfigInvalid, "bump needs ramp > 0 and hi >= lo");
    auto g = [base, amp, lo, hi, ramp](double t) { return base.unguarded(t) + amp * plateau(t, lo, hi, ramp); };
    auto gq = [base, amp, lo, hi, ramp](quad t) {
        return base.eval_quad(t) + (quad)amp * plateau(t, (quad)lo, (quad)hi, (quad)ramp);
    };
    std::ostringstream os;
    os << base.label() << "+" << amp << "*plateau[" << lo << "," << hi << "]";
    return RadialCurvature(g, RadialCurvature::Source::Analytic, os.str(), base.t_min(), gq);
}

WarpFunction warp_from_curvature(const RadialCurvature& G, double t_max, double step) {
    if (!(step > 0) || !(t_max > 0)) throw Error(ErrorKind::ConfigInvalid, "warp_from_curvature needs step > 0, t_max > 0");
    const std::size_t nsteps = static_cast<std::size_t>(std::ceil(t_max / step - 1e-9));
    const double h = t_max / static_cast<double>(nsteps);
    const quad H = (quad)t_max / (quad)nsteps;
    constexpr int kMaxLevel = 10;

    auto grid = std::make_shared<WarpGrid>();
    grid->h = h;
    grid->f.reserve(nsteps + 1);
    grid->df.reserve(nsteps + 1);
    grid->d2f.reserve(nsteps + 1);
    grid->f.push_back(0.0);
    grid->df.push_back(1.0);
    grid->d2f.push_back(0.0);

    quad y0 = 0, y1 = 1;  // f, f'
    quad table[kMaxLevel][2][kMaxLevel];
    for (std::size_t i = 0; i < nsteps; ++i) {
        const quad t0 = H * (quad)i;
        for (int k = 0; k < kMaxLevel; ++k) {
            const int n = 2 * (k + 1);
            const quad hs = H / n;
            // modified midpoint
            quad za0 = y0, za1 = y1;
            quad zb0 = za0 + hs * za1;
            quad zb1 = za1 - hs * G.eval_quad(t0) * za0;
            for (int m = 1; m < n; ++m) {
                quad gm = G.eval_quad(t0 + hs * m);
                quad zc0 = za0 + 2 * hs * zb1;
                quad zc1 = za1 - 2 * hs * gm * zb0;
                za0 = zb0;
                za1 = zb1;
                zb0 = zc0;
                zb1 = zc1;
            }
            quad gend = G.eval_quad(t0 + H);
            table[k][0][0] = (zb0 + za0 + hs * zb1) / 2;
            table[k][1][0] = (zb1 + za1 - hs * gend * zb0) / 2;
            for (int j = 1; j <= k; ++j) {
                quad ratio = (quad)(k + 1) / (quad)(k + 1 - j);
                quad den = ratio * ratio - 1;
                for (int c = 0; c < 2; ++c)
                    table[k][c][j] = table[k][c][j - 1] + (table[k][c][j - 1] - table[k - 1][c][j - 1]) / den;
            }
            if (k >= 3) {
                quad d0 = fabsq(table[k][0][k] - table[k - 1][0][k - 1]);
                quad d1 = fabsq(table[k][1][k] - table[k - 1][1][k - 1]);
                quad s0 = fabsq(table[k][0][k]) + fabsq(table[k][1][k]) * H;
                if (d0 <= s0 * (quad)1e-32 && d1 * H <= s0 * (quad)1e-32) {
                    y0 = table[k][0][k];
                    y1 = table[k][1][k];
                    break;
                }
            }
            if (k == kMaxLevel - 1) {
                y0 = table[k][0][k];
                y1 = table[k][1][k];
            }
        }
        if (y0 <= 0) {
            // linear estimate of the crossing between the last two nodes
            double fa = grid->f.back(), fb = static_cast<double>(y0);
            double tz = static_cast<double>(t0) + h * fa / (fa - fb);
            std::ostringstream os;
            os << "f reaches 0 at t* ~ " << tz << " inside (0, " << t_max << "]";
            throw Error(ErrorKind::WarpVanishes, os.str(), tz);
        }
        quad g1 = G.eval_quad(t0 + H);
        grid->f.push_back(static_cast<double>(y0));
        grid->df.push_back(static_cast<double>(y1));
        grid->d2f.push_back(static_cast<double>(-g1 * y0));
    }
    std::ostringstream os;
    os << "ode[" << G.label() << "]";
    return WarpFunction([grid](double t) { return grid->eval(t); }, t_max, WarpFunction::Source::Grid, os.str());
}

RadialCurvature curvature_from_warp(const WarpFunction& f, double t_min) {
    auto g = [f](double t) {
        WarpSample s = f.eval(t);
        return -s.d2f / s.f;
    };
    RadialCurvature::EvalQ gq;
    if (f.has_quad()) {
        gq = [f](quad t) {
            WarpSampleQ s = f.eval_quad(t);
            return -s.d2f / s.f;
        };
    }
    return RadialCurvature(g, RadialCurvature::Source::FromWarp, "-f''/f[" + f.label() + "]", t_min, gq);
}

} // namespace cmpgeo::model
