#include "cmpgeo/chart.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cmpgeo::finsler {

namespace {

double param(const model::Params& p, const std::string& key, double fallback) {
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

Box box_from(const ChartSpec& spec) {
    if (spec.dim != 2 && spec.dim != 3) throw Error(ErrorKind::ConfigInvalid, "chart.dim must be 2 or 3");
    if (static_cast<int>(spec.lo.size()) != spec.dim || static_cast<int>(spec.hi.size()) != spec.dim)
        throw Error(ErrorKind::ConfigInvalid, "chart.lo/chart.hi must have dim entries");
    Box b{Vec(spec.dim), Vec(spec.dim)};
    for (int i = 0; i < spec.dim; ++i) {
        if (!(spec.lo[i] < spec.hi[i])) throw Error(ErrorKind::ConfigInvalid, "chart.lo must be below chart.hi");
        b.lo[i] = spec.lo[i];
        b.hi[i] = spec.hi[i];
    }
    return b;
}

} // namespace

Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

Vec vec3(double a, double b, double c) {
    Vec v(3);
    v << a, b, c;
    return v;
}

bool Box::contains(const Vec& x) const {
    for (int i = 0; i < x.size(); ++i)
        if (!(x[i] > lo[i] && x[i] < hi[i])) return false;
    return true;
}

double Box::scale() const { return (hi - lo).maxCoeff(); }

FinslerChart FinslerChart::riemannian(int n, Box box, GEval g, std::string label, Inside inside) {
    FinslerChart c;
    c.n_ = n;
    c.box_ = std::move(box);
    c.kind_ = Kind::Riemannian;
    c.label_ = std::move(label);
    c.scale_ = c.box_.scale();
    c.reversible_ = true;
    c.g_ = g;
    c.inside_ = std::move(inside);
    c.F_ = [g](const Vec& x, const Vec& v) { return std::sqrt(v.dot(g(x) * v)); };
    return c;
}

FinslerChart FinslerChart::randers(int n, Box box, GEval a, BetaEval beta, std::string label, bool flat_alpha) {
    FinslerChart c;
    c.n_ = n;
    c.box_ = std::move(box);
    c.kind_ = Kind::Randers;
    c.label_ = std::move(label);
    c.scale_ = c.box_.scale();
    c.reversible_ = false;
    c.flat_alpha_ = flat_alpha;
    c.g_ = a;
    c.beta_ = beta;
    c.F_ = [a, beta](const Vec& x, const Vec& v) {
        Vec b(x.size());
        Mat db(x.size(), x.size());
        beta(x, b, db);
        return std::sqrt(v.dot(a(x) * v)) + b.dot(v);
    };
    return c;
}

FinslerChart FinslerChart::minkowski(int n, Box box, FEval norm, bool reversible, std::string label) {
    FinslerChart c;
    c.n_ = n;
    c.box_ = std::move(box);
    c.kind_ = Kind::Minkowski;
    c.label_ = std::move(label);
    c.scale_ = c.box_.scale();
    c.reversible_ = reversible;
    c.F_ = std::move(norm);
    return c;
}

FinslerChart FinslerChart::generic(int n, Box box, FEval F, std::string label, bool reversible) {
    FinslerChart c;
    c.n_ = n;
    c.box_ = std::move(box);
    c.kind_ = Kind::Generic;
    c.label_ = std::move(label);
    c.scale_ = c.box_.scale();
    c.reversible_ = reversible;
    c.F_ = std::move(F);
    return c;
}

bool FinslerChart::contains(const Vec& x) const {
    if (!box_.contains(x)) return false;
    return !inside_ || inside_(x);
}

double FinslerChart::F(const Vec& x, const Vec& v) const { return F_(x, v); }

FinslerChart warped_polar_chart(std::shared_ptr<const model::ModelSurface> surface, double radius) {
    if (!(radius > 0) || radius > surface->t_max())
        throw Error(ErrorKind::ConfigInvalid, "warped_polar radius must lie in (0, T_max]");
    Box box{vec2(-radius, -radius), vec2(radius, radius)};
    auto s = surface;
    auto g = [s](const Vec& x) {
        double r = std::hypot(x[0], x[1]);
        double h;
        if (r < 1e-6) {
            h = -s->curvature.unguarded(r) / 3.0;
        } else {
            double q = s->warp.f(r) / r;
            h = (q - 1) * (q + 1) / (r * r);
        }
        Mat m(2, 2);
        m(0, 0) = 1 + h * x[1] * x[1];
        m(0, 1) = m(1, 0) = -h * x[0] * x[1];
        m(1, 1) = 1 + h * x[0] * x[0];
        return m;
    };
    // g = I + h P P^T with P = (-y, x); near the pole the cancellations in h'
    // are left to the finite-difference route
    auto gamma = [s](const Vec& x, std::vector<Mat>& out) {
        double r = std::hypot(x[0], x[1]);
        if (r < 0.05) return false;
        model::WarpSample w = s->warp.eval(r);
        double q = w.f / r;
        double dq = (w.df * r - w.f) / (r * r);
        double h = (q - 1) * (q + 1) / (r * r);
        double dh = 2 * q * dq / (r * r) - 2 * h / r;
        double P[2] = {-x[1], x[0]};
        double dP[2][2] = {{0, 1}, {-1, 0}};  // dP[k][i] = d_k P_i
        double dg[2][2][2];
        for (int k = 0; k < 2; ++k)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    dg[k][i][j] = dh * x[k] / r * P[i] * P[j] + h * (dP[k][i] * P[j] + P[i] * dP[k][j]);
        double c = h / (1 + h * r * r);
        double ginv[2][2];
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) ginv[i][j] = (i == j ? 1.0 : 0.0) - c * P[i] * P[j];
        out.assign(2, Mat::Zero(2, 2));
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k) {
                    double acc = 0;
                    for (int l = 0; l < 2; ++l) acc += ginv[i][l] * 0.5 * (dg[k][l][j] + dg[j][l][k] - dg[l][j][k]);
                    out[i](j, k) = acc;
                }
        return true;
    };
    auto inside = [radius](const Vec& x) { return x.norm() < radius; };
    FinslerChart c = FinslerChart::riemannian(2, box, g, "warped_polar[" + surface->spec.family + "]", inside);
    c.set_christoffel(gamma);
    c.surface = surface;
    c.spec.family = "warped_polar";
    c.spec.dim = 2;
    c.spec.lo = {-radius, -radius};
    c.spec.hi = {radius, radius};
    c.spec.params["radius"] = radius;
    c.spec.surface = surface->spec;
    return c;
}

FinslerChart make_chart(const ChartSpec& spec) {
    const int n = spec.dim;
    const auto& p = spec.params;
    FinslerChart c;
    if (spec.family == "warped_polar") {
        if (n != 2) throw Error(ErrorKind::ConfigInvalid, "chart.dim must be 2 for warped_polar");
        auto surf = std::make_shared<const model::ModelSurface>(model::make_surface(spec.surface));
        double radius = param(p, "radius", std::min(spec.hi[0], spec.hi[1]));
        c = warped_polar_chart(surf, radius);
        c.spec = spec;
        c.spec.params["radius"] = radius;
        return c;
    }
    Box box = box_from(spec);
    if (spec.family == "euclidean") {
        c = FinslerChart::riemannian(n, box, [n](const Vec&) { return Mat(Mat::Identity(n, n)); }, "euclidean");
    } else if (spec.family == "sphere" || spec.family == "hyperbolic") {
        double k = param(p, "k", 1.0);
        if (!(k > 0)) throw Error(ErrorKind::ConfigInvalid, "chart.params.k must be > 0");
        double sgn = spec.family == "sphere" ? 1.0 : -1.0;
        if (sgn < 0) {
            for (int i = 0; i < n; ++i) {
                double m = std::max(std::abs(box.lo[i]), std::abs(box.hi[i]));
                if (k * m * m * n >= 1)
                    throw Error(ErrorKind::ConfigInvalid, "chart box must lie inside the Poincare ball");
            }
        }
        c = FinslerChart::riemannian(
            n, box,
            [n, k, sgn](const Vec& x) {
                double d = 1 + sgn * k * x.squaredNorm();
                return Mat(Mat::Identity(n, n) * (4 / (d * d)));
            },
            spec.family);
    } else if (spec.family == "skew") {
        if (n != 2) throw Error(ErrorKind::ConfigInvalid, "chart.dim must be 2 for skew");
        double a = param(p, "a", 0.5), b = param(p, "b", 0.3);
        c = FinslerChart::riemannian(
            2, box,
            [a, b](const Vec& x) {
                Mat m(2, 2);
                m(0, 0) = 1 + a * x[1] * x[1];
                m(0, 1) = m(1, 0) = b * std::sin(x[0] + x[1]);
                m(1, 1) = 1 + a * x[0] * x[0];
                return m;
            },
            "skew");
    } else if (spec.family == "randers") {
        Vec b0(n);
        Mat B(n, n);
        const char* idx = "123";
        for (int i = 0; i < n; ++i) {
            b0[i] = param(p, std::string("b") + idx[i], 0.0);
            for (int j = 0; j < n; ++j) B(i, j) = param(p, std::string("B") + idx[i] + idx[j], 0.0);
        }
        auto beta = [b0, B](const Vec& x, Vec& b, Mat& db) {
            b = b0 + B * x;
            db = B;
        };
        // |beta| < 1 on the box corners keeps F positive and strongly convex
        for (int corner = 0; corner < (1 << n); ++corner) {
            Vec x(n);
            for (int i = 0; i < n; ++i) x[i] = (corner >> i & 1) ? box.hi[i] : box.lo[i];
            if ((b0 + B * x).norm() >= 1)
                throw Error(ErrorKind::ConfigInvalid, "chart.params: randers one-form must have |beta| < 1 on the box");
        }
        c = FinslerChart::randers(n, box, [n](const Vec&) { return Mat(Mat::Identity(n, n)); }, beta, "randers", true);
    } else if (spec.family == "minkowski") {
        Mat A(n, n);
        Vec b(n);
        const char* idx = "123";
        for (int i = 0; i < n; ++i) {
            b[i] = param(p, std::string("b") + idx[i], 0.0);
            for (int j = 0; j < n; ++j) {
                std::string key = std::string("a") + idx[std::min(i, j)] + idx[std::max(i, j)];
                A(i, j) = param(p, key, i == j ? 1.0 : 0.0);
            }
        }
        double eps = param(p, "eps", 0.0);
        if (eps < 0) throw Error(ErrorKind::ConfigInvalid, "chart.params.eps must be >= 0");
        auto norm = [A, b, eps](const Vec&, const Vec& v) {
            double q = v.dot(A * v);
            double s4 = v.array().pow(4).sum();
            return std::pow(q * q + eps * s4, 0.25) + b.dot(v);
        };
        c = FinslerChart::minkowski(n, box, norm, b.isZero(0), "minkowski");
    } else {
        throw Error(ErrorKind::ConfigInvalid, "chart.family: unknown family '" + spec.family + "'");
    }
    c.spec = spec;
    return c;
}

const std::vector<model::FamilyInfo>& chart_families() {
    static const std::vector<model::FamilyInfo> families = {
        {"euclidean", "F = |v|", {}},
        {"sphere", "F^2 = 4|v|^2/(1 + k|x|^2)^2, curvature k", {{"k", "> 0, default 1"}}},
        {"hyperbolic", "F^2 = 4|v|^2/(1 - k|x|^2)^2, curvature -k", {{"k", "> 0, default 1"}}},
        {"skew",
         "F^2 = (1 + a y^2) v1^2 + 2 b sin(x + y) v1 v2 + (1 + a x^2) v2^2",
         {{"a", "default 0.5"}, {"b", "default 0.3"}}},
        {"warped_polar",
         "F^2 = |v|^2 + h(r) (x v2 - y v1)^2, h = (f(r)^2/r^2 - 1)/r^2, i.e. dt^2 + f(t)^2 dtheta^2",
         {{"radius", "chart is the disc |x| < radius"}, {"surface", "model surface record"}}},
        {"randers",
         "F = |v| + (b + B x).v",
         {{"b1,b2,b3", "constant part of the one-form"}, {"Bij", "linear part, beta_i = b_i + B_ij x_j"}}},
        {"minkowski",
         "F = ((v^T A v)^2 + eps sum v_i^4)^(1/4) + b.v",
         {{"aij", "symmetric A, default identity"}, {"eps", ">= 0, default 0"}, {"b1,b2,b3", "default 0"}}},
    };
    return families;
}

std::string to_record(const ChartSpec& spec) {
    nlohmann::json j;
    j["family"] = spec.family;
    j["dimension"] = spec.dim;
    j["domain"] = {{"lo", spec.lo}, {"hi", spec.hi}};
    j["params"] = spec.params;
    if (spec.family == "warped_polar") j["surface"] = nlohmann::json::parse(model::to_record(spec.surface));
    return j.dump();
}

ChartSpec chart_from_record(const std::string& text) {
    ChartSpec s;
    try {
        auto j = nlohmann::json::parse(text);
        s.family = j.at("family").get<std::string>();
        s.dim = j.at("dimension").get<int>();
        s.lo = j.at("domain").at("lo").get<std::vector<double>>();
        s.hi = j.at("domain").at("hi").get<std::vector<double>>();
        if (j.contains("params")) s.params = j["params"].get<model::Params>();
        if (j.contains("surface")) s.surface = model::surface_from_record(j["surface"].dump());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ConfigInvalid, std::string("chart record: ") + e.what());
    }
    return s;
}

} // namespace cmpgeo::finsler
