#include "cmpgeo/finsler.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iterator>
#include <limits>
#include <type_traits>

#include <boost/numeric/odeint.hpp>

#include "cmpgeo/error.hpp"

namespace cmpgeo::finsler {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::array<double, 4> kOff{-2, -1, 1, 2};
constexpr std::array<double, 4> kD1{1, -8, 8, -1};  // over 12h

Vec unit(int n, int k) {
    Vec e = Vec::Zero(n);
    e[k] = 1.0;
    return e;
}

// the stencils return values, never Eigen expressions over temporaries
template <class Fn>
auto d1(Fn&& fn, double h) -> std::decay_t<decltype(fn(0.0))> {
    return (fn(-2 * h) - 8.0 * fn(-h) + 8.0 * fn(h) - fn(2 * h)) / (12.0 * h);
}

template <class Fn>
auto d2(Fn&& fn, double h) -> std::decay_t<decltype(fn(0.0))> {
    return (-fn(-2 * h) + 16.0 * fn(-h) - 30.0 * fn(0.0) + 16.0 * fn(h) - fn(2 * h)) / (12.0 * h * h);
}

// d2/da db of fn(a, b), 4th-order in both
template <class Fn>
auto mixed(Fn&& fn, double ha, double hb) -> std::decay_t<decltype(fn(0.0, 0.0))> {
    std::decay_t<decltype(fn(0.0, 0.0))> acc = fn(kOff[0] * ha, kOff[0] * hb) * 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) acc = acc + (kD1[i] * kD1[j]) * fn(kOff[i] * ha, kOff[j] * hb);
    return acc / (144.0 * ha * hb);
}

double xstep(const FinslerChart& c) { return 5e-4 * c.scale(); }

// step for derivatives of a spray that is itself computed numerically
double jet_xstep(const FinslerChart& c) {
    return (c.kind() == FinslerChart::Kind::Generic ? 2e-2 : 2e-3) * c.scale();
}
double jet_yrel(const FinslerChart& c) { return c.kind() == FinslerChart::Kind::Generic ? 2e-2 : 2e-3; }

Mat inverse(const Mat& m) {
    if (m.rows() == 2) {
        double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
        Mat out(2, 2);
        out << m(1, 1) / det, -m(0, 1) / det, -m(1, 0) / det, m(0, 0) / det;
        return out;
    }
    if (m.rows() == 3) return Mat(Eigen::Matrix3d(m).inverse());
    return m.inverse();
}

std::vector<Mat> christoffel_of(const FinslerChart::GEval& g, int n, const Vec& x, double h) {
    std::vector<Mat> dg(n);
    for (int k = 0; k < n; ++k) {
        Vec e = unit(n, k);
        dg[k] = d1([&](double t) -> Mat { return g(x + t * e); }, h);
    }
    Mat ginv = inverse(g(x));
    std::vector<Mat> low(n, Mat::Zero(n, n));  // Gamma_{l,jk}
    for (int l = 0; l < n; ++l)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) low[l](j, k) = 0.5 * (dg[k](l, j) + dg[j](l, k) - dg[l](j, k));
    std::vector<Mat> gam(n, Mat::Zero(n, n));
    for (int i = 0; i < n; ++i)
        for (int l = 0; l < n; ++l) gam[i] += ginv(i, l) * low[l];
    return gam;
}

Vec contract(const std::vector<Mat>& gam, const Vec& a, const Vec& b) {
    Vec out(static_cast<int>(gam.size()));
    for (size_t i = 0; i < gam.size(); ++i) out[static_cast<int>(i)] = a.dot(gam[i] * b);
    return out;
}

Vec randers_spray(const FinslerChart& c, const Vec& x, const Vec& y) {
    const int n = c.dim();
    Mat a = c.metric(x);
    Vec b(n);
    Mat db(n, n);
    c.beta(x, b, db);
    Vec Galpha = Vec::Zero(n);
    Mat bij = db;  // b_{i|j}
    if (!c.flat_alpha()) {
        auto gam = christoffel_of([&c](const Vec& z) { return c.metric(z); }, n, x, xstep(c));
        Galpha = 0.5 * contract(gam, y, y);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) bij(i, j) -= gam[k](i, j) * b[k];
    }
    Mat r = 0.5 * (bij + bij.transpose());
    Mat s = 0.5 * (bij - bij.transpose());
    Mat ainv = inverse(a);
    Vec bup = ainv * b;
    Vec s_low = s.transpose() * bup;  // s_j = b^i s_ij
    double alpha = std::sqrt(y.dot(a * y));
    double beta = b.dot(y);
    double F = alpha + beta;
    double r00 = y.dot(r * y);
    double s0 = s_low.dot(y);
    Vec si0 = ainv * (s * y);
    double e00 = r00 + 2.0 * beta * s0;
    return Galpha + (e00 / (2.0 * F) - s0) * y + alpha * si0;
}

// ---- integration ----

using State = std::array<double, 6>;
namespace ode = boost::numeric::odeint;

struct Rhs {
    const FinslerChart* chart;
    int n;
    void operator()(const State& z, State& dz, double) const {
        Vec x(n), v(n);
        for (int i = 0; i < n; ++i) {
            x[i] = z[i];
            v[i] = z[3 + i];
        }
        Vec G = spray(*chart, x, v);
        dz.fill(0.0);
        for (int i = 0; i < n; ++i) {
            dz[i] = v[i];
            dz[3 + i] = -2.0 * G[i];
        }
    }
};

State pack(const Vec& x, const Vec& v) {
    State z{};
    for (int i = 0; i < x.size(); ++i) {
        z[i] = x[i];
        z[3 + i] = v[i];
    }
    return z;
}

Vec pos(const State& z, int n) {
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = z[i];
    return x;
}

Vec vel(const State& z, int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = z[3 + i];
    return v;
}

bool finite(const State& z) {
    return std::all_of(z.begin(), z.end(), [](double a) { return std::isfinite(a); });
}

// Observer gets (s, state) after every accepted step; returns false to stop.
// Returns the final parameter reached; exited reports a domain exit.
template <class Obs>
double run(const FinslerChart& chart, State z, double length, double max_step, double tol, bool& exited,
           State& last, Obs&& obs, double* exit_step = nullptr) {
    const int n = chart.dim();
    Rhs rhs{&chart, n};
    auto stepper = ode::make_controlled<ode::runge_kutta_dopri5<State>>(tol, tol);
    double s = 0.0;
    double dt = std::min(max_step, std::max(length, 1e-12) / 4.0);
    exited = false;
    int fails = 0;
    while (length - s > 1e-13 * std::max(1.0, length)) {
        dt = std::min(dt, max_step);
        bool final_step = false;
        if (dt >= length - s) {
            dt = length - s;
            final_step = true;
        }
        State zn = z;
        double sn = s;
        ode::controlled_step_result res;
        try {
            res = stepper.try_step(rhs, zn, sn, dt);
        } catch (const Error&) {
            exited = true;
            break;
        }
        if (res == ode::fail) {
            if (++fails > 200 || dt < 1e-14) {
                exited = true;
                break;
            }
            continue;
        }
        fails = 0;
        if (final_step) sn = length;
        if (!finite(zn) || !chart.contains(pos(zn, n))) {
            exited = true;
            last = zn;
            if (exit_step) *exit_step = sn - s;
            return s;
        }
        z = zn;
        s = sn;
        if (!obs(s, z)) break;
    }
    last = z;
    return s;
}

ChartSample make_sample(const FinslerChart& chart, double s, const State& z) {
    const int n = chart.dim();
    ChartSample smp;
    smp.s = s;
    smp.x = pos(z, n);
    smp.xdot = vel(z, n);
    smp.xddot = -2.0 * spray(chart, smp.x, smp.xdot);
    return smp;
}

// cubic Hermite position between two states, for locating a domain exit
Vec cubic(const ChartSample& a, const State& zb, double h, double tau, int n) {
    Vec xb = pos(zb, n), vb = vel(zb, n);
    double t2 = tau * tau, t3 = t2 * tau;
    return (2 * t3 - 3 * t2 + 1) * a.x + (t3 - 2 * t2 + tau) * h * a.xdot + (-2 * t3 + 3 * t2) * xb +
           (t3 - t2) * h * vb;
}

struct Shot {
    bool ok = false;
    Vec end, vend;
};

constexpr double kShootTol = 1e-12;

Shot shoot(const FinslerChart& chart, const Vec& a, const Vec& e, double s, double max_step) {
    Shot out;
    double Fe = chart.F(a, e);
    if (!(Fe > 0) || !(s > 0)) return out;
    bool exited = false;
    State last;
    run(chart, pack(a, e / Fe), s, max_step, kShootTol, exited, last, [](double, const State&) { return true; });
    if (exited) return out;
    out.ok = true;
    out.end = pos(last, chart.dim());
    out.vend = vel(last, chart.dim());
    return out;
}

// orthonormal complement of the unit vector e
Mat tangent_frame(const Vec& e) {
    const int n = static_cast<int>(e.size());
    Mat T(n, n - 1);
    if (n == 2) {
        T(0, 0) = -e[1];
        T(1, 0) = e[0];
        return T;
    }
    Vec ref = std::abs(e[0]) < 0.9 ? unit(3, 0) : unit(3, 1);
    Vec t1 = (ref - ref.dot(e) * e).normalized();
    Eigen::Vector3d e3(e[0], e[1], e[2]), a3(t1[0], t1[1], t1[2]);
    Eigen::Vector3d t2 = e3.cross(a3);
    T.col(0) = t1;
    T.col(1) = vec3(t2[0], t2[1], t2[2]);
    return T;
}

struct Connector {
    Vec e;  // Euclidean unit initial direction
    double s = 0.0;
    double residual = 0.0;
};

std::optional<Connector> newton(const FinslerChart& chart, const Vec& a, const Vec& b, Vec e, double s,
                                const DistanceOptions& opts) {
    const int n = chart.dim();
    e.normalize();
    Shot base = shoot(chart, a, e, s, opts.step);
    if (!base.ok) return std::nullopt;
    double r = (base.end - b).norm();
    const double delta = 1e-6;
    for (int it = 0; it < 40; ++it) {
        if (r <= opts.residual) return Connector{e, s, r};
        Mat T = tangent_frame(e);
        Mat J(n, n);
        for (int k = 0; k < n - 1; ++k) {
            Shot p = shoot(chart, a, (e + delta * T.col(k)).normalized(), s, opts.step);
            if (!p.ok) return std::nullopt;
            J.col(k) = (p.end - base.end) / delta;
        }
        J.col(n - 1) = base.vend;
        Vec step = J.fullPivLu().solve(-(base.end - b));
        if (!step.allFinite()) return std::nullopt;
        double da = step.head(n - 1).norm();
        double lim = 1.0;
        if (da > 0.3) lim = 0.3 / da;
        if (s + lim * step[n - 1] < 0.5 * s) lim = std::min(lim, -0.5 * s / step[n - 1]);
        bool moved = false;
        for (double lam = lim; lam > lim / 300.0; lam *= 0.5) {
            Vec en = (e + lam * T * step.head(n - 1)).normalized();
            double sn = s + lam * step[n - 1];
            Shot trial = shoot(chart, a, en, sn, opts.step);
            if (!trial.ok) continue;
            double rn = (trial.end - b).norm();
            if (rn < r) {
                e = en;
                s = sn;
                base = trial;
                r = rn;
                moved = true;
                break;
            }
        }
        if (!moved) break;
    }
    if (r <= opts.residual) return Connector{e, s, r};
    return std::nullopt;
}

double segment_length(const FinslerChart& chart, const Vec& a, const Vec& b) {
    const int m = 32;
    Vec d = b - a;
    double acc = 0.0;
    for (int i = 0; i <= m; ++i) {
        double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * chart.F(a + (double(i) / m) * d, d);
    }
    return acc / (3.0 * m);
}

struct Candidate {
    Vec e;
    double s = 0.0;
    double miss = 0.0;
};

std::vector<Candidate> scan(const FinslerChart& chart, const Vec& a, const Vec& b, double cap,
                            const DistanceOptions& opts) {
    const int n = chart.dim();
    std::vector<Vec> dirs;
    if (n == 2) {
        for (int k = 0; k < opts.starts; ++k) {
            double phi = 2 * kPi * k / opts.starts;
            dirs.push_back(vec2(std::cos(phi), std::sin(phi)));
        }
    } else {
        dirs = unit_directions(3, 4 * opts.starts);
    }
    // even spacing in the metric at a rather than in coordinates: strongly
    // anisotropic charts otherwise leave whole fans of geodesics unsampled
    Mat M = Mat::Zero(n, n);
    for (int k = 0; k < n; ++k) {
        M += fundamental_tensor_raw(chart, a, unit(n, k));
        M += fundamental_tensor_raw(chart, a, -unit(n, k));
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(M / (2 * n));
    if (eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() > 0) {
        Mat isqrt = eig.operatorInverseSqrt();
        for (Vec& e : dirs) e = (isqrt * e).normalized();
    }
    std::vector<Candidate> all;
    for (const Vec& e : dirs) {
        Candidate c{e, 0.0, std::numeric_limits<double>::infinity()};
        double Fe = chart.F(a, e);
        if (!(Fe > 0)) {
            all.push_back(c);
            continue;
        }
        bool exited = false;
        State last;
        // closest approach over the accepted steps, refined on the chord
        Vec prev = a;
        run(chart, pack(a, e / Fe), cap, 0.05, 1e-7, exited, last, [&](double s, const State& z) {
            Vec x = pos(z, n);
            Vec seg = x - prev;
            double L2 = seg.squaredNorm();
            double tau = L2 > 0 ? std::clamp((b - prev).dot(seg) / L2, 0.0, 1.0) : 0.0;
            double m = (prev + tau * seg - b).norm();
            if (m < c.miss) {
                c.miss = m;
                double ds = std::sqrt(L2) / std::max(1e-300, vel(z, n).norm());
                c.s = s - (1.0 - tau) * ds;
            }
            prev = x;
            return true;
        });
        all.push_back(c);
    }
    // rays heading away from b have their closest approach at the start
    const double far = 0.5 * (b - a).norm();
    std::vector<Candidate> picks;
    auto useful = [&](const Candidate& c) { return std::isfinite(c.miss) && c.miss < far && c.s > 1e-3 * cap; };
    if (n == 2) {
        const int m = static_cast<int>(all.size());
        for (int k = 0; k < m; ++k) {
            double l = all[(k + m - 1) % m].miss, r = all[(k + 1) % m].miss;
            if (useful(all[k]) && all[k].miss <= l && all[k].miss <= r) picks.push_back(all[k]);
        }
    } else {
        std::copy_if(all.begin(), all.end(), std::back_inserter(picks), useful);
    }
    std::sort(picks.begin(), picks.end(), [](const Candidate& p, const Candidate& q) { return p.miss < q.miss; });
    if (picks.size() > 6) picks.resize(6);
    return picks;
}

// F-unit initial velocity of a connector
Vec initial_velocity(const FinslerChart& chart, const Vec& a, const Vec& e) { return e / chart.F(a, e); }

} // namespace

// ---- tensors ----

Mat fundamental_tensor_raw(const FinslerChart& chart, const Vec& x, const Vec& v) {
    const int n = chart.dim();
    if (chart.kind() == FinslerChart::Kind::Riemannian) return chart.metric(x);
    double h = 1e-3 * v.norm();
    if (!(h > 0)) throw Error(ErrorKind::DegenerateTensor, "fundamental tensor at v = 0");
    auto E = [&](const Vec& u) {
        double f = chart.F(x, u);
        return 0.5 * f * f;
    };
    Mat g(n, n);
    for (int i = 0; i < n; ++i) {
        Vec ei = unit(n, i);
        g(i, i) = d2([&](double t) { return E(v + t * ei); }, h);
        for (int j = 0; j < i; ++j) {
            Vec ej = unit(n, j);
            g(i, j) = g(j, i) = mixed([&](double s, double t) { return E(v + s * ei + t * ej); }, h, h);
        }
    }
    return g;
}

FundamentalTensorValue fundamental_tensor(const FinslerChart& chart, const Vec& x, const Vec& v) {
    Mat g = fundamental_tensor_raw(chart, x, v);
    Eigen::SelfAdjointEigenSolver<Mat> es(g);
    double lo = es.eigenvalues().minCoeff();
    if (!(lo > 1e-10)) throw Error(ErrorKind::DegenerateTensor, "fundamental tensor not positive definite", lo);
    return {x, v, g};
}

double uniform_convexity_margin(const FinslerChart& chart, const Vec& x, const Vec& v, const std::vector<Vec>& w,
                                ConvexityMode mode) {
    Mat g = fundamental_tensor_raw(chart, x, v);
    double worst = std::numeric_limits<double>::infinity();
    for (const Vec& u : w) {
        double f = chart.F(x, u);
        double q = u.dot(g * u);
        double m = mode == ConvexityMode::Forward ? q - f * f : f * f - q;
        worst = std::min(worst, m);
    }
    return worst;
}

std::vector<Mat> christoffel(const FinslerChart& chart, const Vec& x) {
    if (!chart.has_metric()) throw Error(ErrorKind::ConfigInvalid, "chart has no quadratic metric");
    std::vector<Mat> gamma;
    if (chart.christoffel_closed_form(x, gamma)) return gamma;
    return christoffel_of([&chart](const Vec& z) { return chart.metric(z); }, chart.dim(), x, xstep(chart));
}

// ---- sprays ----

Vec spray_fd(const FinslerChart& chart, const Vec& x, const Vec& y) {
    const int n = chart.dim();
    auto Q = [&](const Vec& z, const Vec& u) {
        double f = chart.F(z, u);
        return f * f;
    };
    double hy = 1e-3 * y.norm();
    double ynorm = y.norm();
    if (!(ynorm > 0)) return Vec::Zero(n);
    double hx = 1e-3 * chart.scale();
    Vec ydir = y / ynorm;
    Vec rhs(n);
    for (int l = 0; l < n; ++l) {
        Vec el = unit(n, l);
        // y^k d_{x^k} d_{y^l} Q, as a derivative along the ray x + t y
        double A = ynorm * mixed([&](double t, double u) { return Q(x + t * ydir, y + u * el); }, hx, hy);
        double B = d1([&](double t) { return Q(x + t * el, y); }, hx);
        rhs[l] = A - B;
    }
    Mat g = fundamental_tensor_raw(chart, x, y);
    return 0.25 * inverse(g) * rhs;
}

Vec spray(const FinslerChart& chart, const Vec& x, const Vec& y) {
    switch (chart.kind()) {
    case FinslerChart::Kind::Minkowski:
        return Vec::Zero(chart.dim());
    case FinslerChart::Kind::Riemannian:
        return 0.5 * contract(christoffel(chart, x), y, y);
    case FinslerChart::Kind::Randers:
        return randers_spray(chart, x, y);
    case FinslerChart::Kind::Generic:
        break;
    }
    return spray_fd(chart, x, y);
}

std::vector<Mat> spray_yy(const FinslerChart& chart, const Vec& x, const Vec& y) {
    const int n = chart.dim();
    if (chart.kind() == FinslerChart::Kind::Minkowski) return std::vector<Mat>(n, Mat::Zero(n, n));
    if (chart.kind() == FinslerChart::Kind::Riemannian) return christoffel(chart, x);
    double hy = jet_yrel(chart) * y.norm();
    std::vector<Mat> out(n, Mat::Zero(n, n));
    for (int j = 0; j < n; ++j) {
        Vec ej = unit(n, j);
        Vec dd = d2([&](double t) { return spray(chart, x, y + t * ej); }, hy);
        for (int i = 0; i < n; ++i) out[i](j, j) = dd[i];
        for (int k = 0; k < j; ++k) {
            Vec ek = unit(n, k);
            Vec m = mixed([&](double s, double t) { return spray(chart, x, y + s * ej + t * ek); }, hy, hy);
            for (int i = 0; i < n; ++i) out[i](j, k) = out[i](k, j) = m[i];
        }
    }
    return out;
}

SprayJet spray_jet(const FinslerChart& chart, const Vec& x, const Vec& y) {
    const int n = chart.dim();
    SprayJet J;
    J.G = Vec::Zero(n);
    J.dx = Mat::Zero(n, n);
    J.dy = Mat::Zero(n, n);
    J.dxdy.assign(n, Mat::Zero(n, n));
    J.dydy.assign(n, Mat::Zero(n, n));
    if (chart.kind() == FinslerChart::Kind::Minkowski) return J;
    if (chart.kind() == FinslerChart::Kind::Riemannian) {
        auto gam = christoffel(chart, x);
        double h = 4.0 * xstep(chart);
        std::vector<std::vector<Mat>> dgam(n);  // dgam[k][i] = d_k Gamma^i
        for (int k = 0; k < n; ++k) {
            Vec ek = unit(n, k);
            auto at = [&](double t) { return christoffel(chart, x + t * ek); };
            auto m2 = at(-2 * h), m1 = at(-h), p1 = at(h), p2 = at(2 * h);
            dgam[k].resize(n);
            for (int i = 0; i < n; ++i) dgam[k][i] = (m2[i] - 8.0 * m1[i] + 8.0 * p1[i] - p2[i]) / (12.0 * h);
        }
        J.G = 0.5 * contract(gam, y, y);
        for (int i = 0; i < n; ++i) {
            J.dy.row(i) = (gam[i] * y).transpose();
            J.dydy[i] = gam[i];
            for (int k = 0; k < n; ++k) {
                J.dx(i, k) = 0.5 * y.dot(dgam[k][i] * y);
                J.dxdy[i].row(k) = (dgam[k][i] * y).transpose();
            }
        }
        return J;
    }
    double hx = jet_xstep(chart);
    double hy = jet_yrel(chart) * y.norm();
    J.G = spray(chart, x, y);
    for (int k = 0; k < n; ++k) {
        Vec ek = unit(n, k);
        J.dx.col(k) = d1([&](double t) { return spray(chart, x + t * ek, y); }, hx);
        J.dy.col(k) = d1([&](double t) { return spray(chart, x, y + t * ek); }, hy);
        for (int j = 0; j < n; ++j) {
            Vec ej = unit(n, j);
            Vec m = mixed([&](double s, double t) { return spray(chart, x + s * ej, y + t * ek); }, hx, hy);
            for (int i = 0; i < n; ++i) J.dxdy[i](j, k) = m[i];
        }
    }
    J.dydy = spray_yy(chart, x, y);
    return J;
}

// ---- curvature ----

double flag_curvature(const FinslerChart& chart, const Vec& x, const Vec& v, const Vec& w) {
    const int n = chart.dim();
    Mat g = fundamental_tensor_raw(chart, x, v);
    double gvv = v.dot(g * v), gww = w.dot(g * w), gvw = v.dot(g * w);
    double denom = gvv * gww - gvw * gvw;
    if (!(denom >= 1e-12)) throw Error(ErrorKind::FlagDegenerate, "flag is degenerate", denom);
    SprayJet J = spray_jet(chart, x, v);
    Mat R(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            double acc = 2.0 * J.dx(i, k);
            for (int j = 0; j < n; ++j) {
                acc -= v[j] * J.dxdy[i](j, k);
                acc += 2.0 * J.G[j] * J.dydy[i](j, k);
                acc -= J.dy(i, j) * J.dy(j, k);
            }
            R(i, k) = acc;
        }
    return (R * w).dot(g * w) / denom;
}

double tangent_curvature(const FinslerChart& chart, const Vec& x, const Vec& v, const Vec& w) {
    if (!(v.norm() > 0) || !(w.norm() > 0)) throw Error(ErrorKind::DegenerateTensor, "zero vector");
    if (chart.kind() == FinslerChart::Kind::Minkowski) return 0.0;
    Mat g = fundamental_tensor(chart, x, v).g;
    auto B = spray_yy(chart, x, v);
    Vec diff = 2.0 * spray(chart, x, w) - contract(B, w, w);
    return diff.dot(g * v);
}

double tangent_curvature_extended(const FinslerChart& chart, const Vec& x, const VectorField& X,
                                  const VectorField& Y) {
    Vec v = X(x), w = Y(x);
    if (!(v.norm() > 0) || !(w.norm() > 0)) throw Error(ErrorKind::DegenerateTensor, "zero vector");
    Mat g = fundamental_tensor(chart, x, v).g;
    // directional derivative of Y along w
    double h = xstep(chart);
    double wn = w.norm();
    Vec dY = wn * d1([&](double t) { return Y(x + t * (w / wn)); }, h);
    Vec withY = dY + contract(spray_yy(chart, x, w), w, w);
    Vec withX = dY + contract(spray_yy(chart, x, v), w, w);
    return (withY - withX).dot(g * v);
}

// ---- geodesics ----

ChartSample ChartGeodesic::at(double s) const {
    if (samples.empty()) throw Error(ErrorKind::ConfigInvalid, "empty geodesic");
    if (s <= samples.front().s) return samples.front();
    if (s >= samples.back().s) return samples.back();
    auto it = std::upper_bound(samples.begin(), samples.end(), s,
                               [](double v, const ChartSample& p) { return v < p.s; });
    const ChartSample& b = *it;
    const ChartSample& a = *(it - 1);
    double h = b.s - a.s;
    double t = (s - a.s) / h;
    double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
    double H0 = 1 - 10 * t3 + 15 * t4 - 6 * t5;
    double H1 = t - 6 * t3 + 8 * t4 - 3 * t5;
    double H2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    double H3 = 0.5 * t3 - t4 + 0.5 * t5;
    double H4 = -4 * t3 + 7 * t4 - 3 * t5;
    double H5 = 10 * t3 - 15 * t4 + 6 * t5;
    double D0 = -30 * t2 + 60 * t3 - 30 * t4;
    double D1 = 1 - 18 * t2 + 32 * t3 - 15 * t4;
    double D2 = t - 4.5 * t2 + 6 * t3 - 2.5 * t4;
    double D3 = 1.5 * t2 - 4 * t3 + 2.5 * t4;
    double D4 = -12 * t2 + 28 * t3 - 15 * t4;
    double D5 = 30 * t2 - 60 * t3 + 30 * t4;
    double E0 = -60 * t + 180 * t2 - 120 * t3;
    double E1 = -36 * t + 96 * t2 - 60 * t3;
    double E2 = 1 - 9 * t + 18 * t2 - 10 * t3;
    double E3 = 3 * t - 12 * t2 + 10 * t3;
    double E4 = -24 * t + 84 * t2 - 60 * t3;
    double E5 = 60 * t - 180 * t2 + 120 * t3;
    ChartSample out;
    out.s = s;
    out.x = H0 * a.x + h * H1 * a.xdot + h * h * H2 * a.xddot + h * h * H3 * b.xddot + h * H4 * b.xdot + H5 * b.x;
    out.xdot = (D0 * a.x + h * D1 * a.xdot + h * h * D2 * a.xddot + h * h * D3 * b.xddot + h * D4 * b.xdot +
                D5 * b.x) / h;
    out.xddot = (E0 * a.x + h * E1 * a.xdot + h * h * E2 * a.xddot + h * h * E3 * b.xddot + h * E4 * b.xdot +
                 E5 * b.x) / (h * h);
    return out;
}

double ChartGeodesic::max_speed_drift(const FinslerChart& chart) const {
    if (samples.empty()) return 0.0;
    double f0 = chart.F(samples.front().x, samples.front().xdot);
    double worst = 0.0;
    for (const auto& p : samples) worst = std::max(worst, std::abs(chart.F(p.x, p.xdot) - f0));
    return worst;
}

void ChartGeodesic::require_inside() const {
    if (exited) throw Error(ErrorKind::LeftDomain, "geodesic left the chart", s_exit);
}

ChartGeodesic integrate_spray(const FinslerChart& chart, const Vec& x0, const Vec& v0, double length,
                              double max_step, double tolerance) {
    const int n = chart.dim();
    if (x0.size() != n || v0.size() != n) throw Error(ErrorKind::ConfigInvalid, "dimension mismatch");
    if (!chart.contains(x0)) throw Error(ErrorKind::LeftDomain, "start outside the chart");
    if (!(length >= 0) || !(max_step > 0)) throw Error(ErrorKind::ConfigInvalid, "bad length or step");
    ChartGeodesic path;
    path.samples.push_back(make_sample(chart, 0.0, pack(x0, v0)));
    bool exited = false;
    State last;
    double h = 0.0;
    double s_end = run(
        chart, pack(x0, v0), length, max_step, tolerance, exited, last,
        [&](double s, const State& z) {
            path.samples.push_back(make_sample(chart, s, z));
            return true;
        },
        &h);
    path.length = s_end;
    if (exited) {
        path.exited = true;
        const ChartSample& a = path.samples.back();
        // locate the boundary crossing on the last chord
        double lo = 0.0, hi = 1.0;
        if (h > 0 && finite(last)) {
            for (int it = 0; it < 50; ++it) {
                double mid = 0.5 * (lo + hi);
                if (chart.contains(cubic(a, last, h, mid, n)))
                    lo = mid;
                else
                    hi = mid;
            }
            path.s_exit = a.s + hi * h;
        } else {
            path.s_exit = a.s;
        }
    }
    return path;
}

ChartGeodesic integrate_geodesic(const FinslerChart& chart, const Vec& x0, const Vec& v0, double length,
                                 double max_step) {
    if (x0.size() != chart.dim() || v0.size() != chart.dim())
        throw Error(ErrorKind::ConfigInvalid, "dimension mismatch");
    double F0 = chart.F(x0, v0);
    if (!(std::abs(F0 - 1.0) <= 1e-8)) throw Error(ErrorKind::ConfigInvalid, "initial velocity must have F = 1", F0);
    return integrate_spray(chart, x0, v0, length, max_step, 1e-11);
}

// ---- distances ----

MinimalConnector distance(const FinslerChart& chart, const Vec& a, const Vec& b, const DistanceOptions& opts) {
    const int n = chart.dim();
    if (a.size() != n || b.size() != n) throw Error(ErrorKind::ConfigInvalid, "dimension mismatch");
    if (!chart.contains(a) || !chart.contains(b)) throw Error(ErrorKind::LeftDomain, "endpoint outside the chart");
    MinimalConnector out;
    out.from = a;
    out.to = b;
    if ((b - a).norm() == 0.0) {
        out.velocity = Vec::Zero(n);
        return out;
    }
    std::vector<Connector> found;
    if (opts.hint) {
        auto c = newton(chart, a, b, opts.hint->velocity, opts.hint->length, opts);
        if (c) found.push_back(*c);
    }
    if (found.empty()) {
        double cap = opts.max_length > 0 ? opts.max_length : 1.2 * segment_length(chart, a, b) + 0.05;
        for (const Candidate& cand : scan(chart, a, b, cap, opts)) {
            if (!(cand.s > 0)) continue;
            auto c = newton(chart, a, b, cand.e, cand.s, opts);
            if (c) found.push_back(*c);
        }
    }
    if (found.empty()) throw Error(ErrorKind::ShootingFailed, "no geodesic connector found");
    std::sort(found.begin(), found.end(), [](const Connector& p, const Connector& q) { return p.s < q.s; });
    const Connector& best = found.front();
    out.d = best.s;
    out.residual = best.residual;
    out.velocity = initial_velocity(chart, a, best.e);
    out.path = integrate_geodesic(chart, a, out.velocity, best.s, opts.step);

    Mat g = fundamental_tensor_raw(chart, a, out.velocity);
    std::vector<Vec> distinct;
    for (const Connector& c : found) {
        if (c.s - best.s > opts.tie_length) break;
        Vec u = initial_velocity(chart, a, c.e);
        bool dup = false;
        for (const Vec& q : distinct) {
            Vec d = u - q;
            if (std::sqrt(std::max(0.0, d.dot(g * d))) <= opts.cluster_velocity) dup = true;
        }
        if (dup) continue;
        distinct.push_back(u);
        out.all_connectors.push_back(distinct.size() == 1 ? out.path
                                                         : integrate_geodesic(chart, a, u, c.s, opts.step));
    }
    return out;
}

double reversed_length(const FinslerChart& chart, const ChartGeodesic& path) {
    if (chart.reversible()) return path.length;
    const double L = path.length;
    int m = std::max(64, static_cast<int>(std::ceil(L / 0.005)));
    if (m % 2) ++m;
    double acc = 0.0;
    for (int i = 0; i <= m; ++i) {
        ChartSample p = path.at(L * i / m);
        double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * std::max(chart.F(p.x, p.xdot), chart.F(p.x, -p.xdot));
    }
    return acc * L / (3.0 * m);
}

double dm(const FinslerChart& chart, const Vec& a, const Vec& b) {
    double ab = distance(chart, a, b).d;
    if (chart.reversible()) return ab;
    return std::max(ab, distance(chart, b, a).d);
}

// ---- angles ----

namespace {

// d(c(s), c(s + h)) = h on a unit-speed minimal geodesic; the reverse needs a solve
double reverse_small(const FinslerChart& chart, const ChartGeodesic& c, double s0, double s1) {
    double h = s1 - s0;
    if (chart.reversible()) return h;
    ChartSample p = c.at(s1), q = c.at(s0);
    Vec back = -p.xdot;
    DistanceOptions o;
    o.hint = ShootHint{back, h * chart.F(p.x, back)};
    return distance(chart, p.x, q.x, o).d;
}

double angle(const FinslerChart& chart, const Vec& p, const ChartGeodesic& c, double s, const AngleOptions& opts,
             bool forward) {
    const double h0 = opts.h0;
    if (forward ? (s + h0 > c.length + 1e-12) : (s - h0 < -1e-12))
        throw Error(ErrorKind::ConfigInvalid, "angle needs room along the curve", s);
    MinimalConnector base = opts.from_p ? *opts.from_p : distance(chart, p, c.at(s).x);
    DistanceOptions o;
    o.hint = ShootHint{base.velocity, base.d};
    auto q = [&](double h) {
        double sn = forward ? s + h : s - h;
        double dn = distance(chart, p, c.at(sn).x, o).d;
        double a = forward ? s : sn, b = forward ? sn : s;
        double m = std::max(h, reverse_small(chart, c, a, b));
        return forward ? (dn - base.d) / m : (base.d - dn) / m;
    };
    double q0 = q(h0), q1 = q(h0 / 2), q2 = q(h0 / 4);
    double r1a = 2 * q1 - q0, r1b = 2 * q2 - q1;
    if (std::abs(r1a - r1b) > opts.tolerance)
        throw Error(ErrorKind::AngleUnstable, "difference quotients do not settle", std::abs(r1a - r1b));
    double r = (4 * r1b - r1a) / 3.0;
    double cs = std::clamp(forward ? -r : r, -1.0, 1.0);
    return std::acos(cs);
}

} // namespace

double forward_angle(const FinslerChart& chart, const Vec& p, const ChartGeodesic& c, double s,
                     const AngleOptions& opts) {
    return angle(chart, p, c, s, opts, true);
}

double backward_angle(const FinslerChart& chart, const Vec& p, const ChartGeodesic& c, double s,
                      const AngleOptions& opts) {
    return angle(chart, p, c, s, opts, false);
}

// ---- checks ----

ReverseCheck reverse_geodesic_check(const FinslerChart& chart, const ChartGeodesic& path) {
    ReverseCheck out;
    const ChartSample& end = path.back();
    const double L = path.length;
    ChartGeodesic rev = integrate_spray(chart, end.x, -end.xdot, L, 0.02, 1e-11);
    double worst = 0.0;
    if (rev.exited) worst = std::numeric_limits<double>::infinity();
    for (const ChartSample& q : rev.samples) worst = std::max(worst, (q.x - path.at(L - q.s).x).norm());
    if (!rev.exited) {
        int m = 64;
        for (int i = 0; i <= m; ++i) {
            double s = L * i / m;
            worst = std::max(worst, (rev.at(s).x - path.at(L - s).x).norm());
        }
    }
    out.residual = worst;
    out.is_geodesic = worst <= 1e-6;
    return out;
}

std::vector<Vec> unit_directions(int n, int count) {
    std::vector<Vec> out;
    const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int k = 0; k < count; ++k) {
        if (n == 2) {
            double frac = std::fmod(0.5 + k * golden, 1.0);
            double phi = 2 * kPi * frac;
            out.push_back(vec2(std::cos(phi), std::sin(phi)));
        } else {
            double z = 1.0 - (2.0 * k + 1.0) / count;
            double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            double phi = 2 * kPi * k * golden;
            out.push_back(vec3(r * std::cos(phi), r * std::sin(phi), z));
        }
    }
    return out;
}

std::vector<Vec> indicatrix_directions(const FinslerChart& chart, const Vec& x, int count) {
    auto dirs = unit_directions(chart.dim(), count);
    for (Vec& u : dirs) u /= chart.F(x, u);
    return dirs;
}

RadialBoundReport radial_bound_check(const FinslerChart& chart, const model::ModelSurface& model, const Vec& p,
                                     const std::vector<double>& t_samples, int w_per_point, int directions) {
    RadialBoundReport rep;
    rep.directions = directions;
    rep.min_margin = std::numeric_limits<double>::infinity();
    if (t_samples.empty()) return rep;
    double tmax = *std::max_element(t_samples.begin(), t_samples.end());
    auto ws = unit_directions(chart.dim(), 4 * w_per_point);
    for (const Vec& u : indicatrix_directions(chart, p, directions)) {
        ChartGeodesic ray = integrate_geodesic(chart, p, u, tmax);
        ray.require_inside();
        for (double t : t_samples) {
            ChartSample smp = ray.at(t);
            double G = model.curvature.unguarded(t);
            int used = 0;
            for (const Vec& w : ws) {
                if (used == w_per_point) break;
                Vec vn = smp.xdot.normalized();
                double par = std::abs(vn.dot(w));
                if (par > 0.95) continue;
                ++used;
                RadialBoundRow row;
                row.t = t;
                row.x = smp.x;
                row.v = smp.xdot;
                row.w = w;
                row.K = flag_curvature(chart, smp.x, smp.xdot, w);
                row.G = G;
                row.margin = row.K - G;
                rep.min_margin = std::min(rep.min_margin, row.margin);
                rep.rows.push_back(std::move(row));
            }
        }
    }
    return rep;
}

} // namespace cmpgeo::finsler
