#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "cmpgeo/chart.hpp"

namespace cmpgeo::finsler {

struct FundamentalTensorValue {
    Vec x;
    Vec v;
    Mat g;
};

// Hessian of F^2/2 in v. Riemannian charts return g(x); everything else uses
// 5-point stencils with h = 1e-3 F(v). Throws DegenerateTensor when the
// smallest eigenvalue is <= 1e-10.
FundamentalTensorValue fundamental_tensor(const FinslerChart& chart, const Vec& x, const Vec& v);
// Same numbers, no eigenvalue check.
Mat fundamental_tensor_raw(const FinslerChart& chart, const Vec& x, const Vec& v);

enum class ConvexityMode { Forward, Reversed };

// Forward: min_w g_v(w,w) - F(w)^2. Reversed: min_w F(w)^2 - g_v(w,w).
double uniform_convexity_margin(const FinslerChart& chart, const Vec& x, const Vec& v, const std::vector<Vec>& w,
                                ConvexityMode mode = ConvexityMode::Forward);

// Christoffel symbols of the chart metric (Riemannian, or alpha of a Randers
// chart): gamma[i](j, k) = Gamma^i_jk.
std::vector<Mat> christoffel(const FinslerChart& chart, const Vec& x);

// Geodesic spray G^i(x, y); geodesics solve x'' + 2 G(x, x') = 0.
Vec spray(const FinslerChart& chart, const Vec& x, const Vec& y);
// The spray from finite differences of F^2 only, whatever the family.
Vec spray_fd(const FinslerChart& chart, const Vec& x, const Vec& y);

struct SprayJet {
    Vec G;
    Mat dx;                  // (i, k) = dG^i/dx^k
    Mat dy;                  // (i, k) = dG^i/dy^k
    std::vector<Mat> dxdy;   // [i](j, k) = d2G^i/dx^j dy^k
    std::vector<Mat> dydy;   // [i](j, k) = d2G^i/dy^j dy^k
};

SprayJet spray_jet(const FinslerChart& chart, const Vec& x, const Vec& y);
// Berwald coefficients d2G^i/dy^j dy^k at (x, y)
std::vector<Mat> spray_yy(const FinslerChart& chart, const Vec& x, const Vec& y);

struct ChartSample {
    double s = 0.0;
    Vec x;
    Vec xdot;
    Vec xddot;
};

struct ChartGeodesic {
    std::vector<ChartSample> samples;
    double length = 0.0;
    bool forward = true;
    bool exited = false;
    double s_exit = 0.0;

    // quintic Hermite through position, velocity, acceleration
    ChartSample at(double s) const;
    const ChartSample& back() const { return samples.back(); }
    double max_speed_drift(const FinslerChart& chart) const;
    void require_inside() const;
};

// Adaptive Dormand-Prince 5(4) at tolerance 1e-11 with steps capped at
// max_step. Needs F(x0, v0) = 1 within 1e-8. Stops at the domain boundary
// with exited = true.
ChartGeodesic integrate_geodesic(const FinslerChart& chart, const Vec& x0, const Vec& v0, double length,
                                 double max_step = 0.02);
// No unit-speed precondition; parameter length instead of arclength.
ChartGeodesic integrate_spray(const FinslerChart& chart, const Vec& x0, const Vec& v0, double length,
                              double max_step = 0.02, double tolerance = 1e-11);

struct ShootHint {
    Vec velocity;
    double length = 0.0;
};

struct DistanceOptions {
    int starts = 32;
    double step = 0.02;
    double residual = 1e-10;
    double cluster_velocity = 1e-3;
    double tie_length = 1e-6;
    double max_length = 0.0;  // 0: from the coordinate segment
    // local continuation from a nearby connector instead of the global scan
    std::optional<ShootHint> hint;
};

struct MinimalConnector {
    Vec from;
    Vec to;
    ChartGeodesic path;
    double d = 0.0;
    Vec velocity;
    double residual = 0.0;
    std::vector<ChartGeodesic> all_connectors;
};

MinimalConnector distance(const FinslerChart& chart, const Vec& a, const Vec& b, const DistanceOptions& opts = {});

double reversed_length(const FinslerChart& chart, const ChartGeodesic& path);
double dm(const FinslerChart& chart, const Vec& a, const Vec& b);

struct AngleOptions {
    double h0 = 1e-2;
    double tolerance = 1e-3;
    // connector p -> c(s) when already known, to seed the continuation
    const MinimalConnector* from_p = nullptr;
};

// c must be a unit-speed minimal geodesic.
double forward_angle(const FinslerChart& chart, const Vec& p, const ChartGeodesic& c, double s,
                     const AngleOptions& opts = {});
double backward_angle(const FinslerChart& chart, const Vec& p, const ChartGeodesic& c, double s,
                      const AngleOptions& opts = {});

double flag_curvature(const FinslerChart& chart, const Vec& x, const Vec& v, const Vec& w);
// Coordinate-constant extensions of v and w.
double tangent_curvature(const FinslerChart& chart, const Vec& x, const Vec& v, const Vec& w);

using VectorField = std::function<Vec(const Vec&)>;
// Arbitrary smooth extensions X (of v) and Y (of w).
double tangent_curvature_extended(const FinslerChart& chart, const Vec& x, const VectorField& X,
                                  const VectorField& Y);

struct ReverseCheck {
    bool is_geodesic = false;
    double residual = 0.0;
};

ReverseCheck reverse_geodesic_check(const FinslerChart& chart, const ChartGeodesic& path);

struct RadialBoundRow {
    double t = 0.0;
    Vec x, v, w;
    double K = 0.0;
    double G = 0.0;
    double margin = 0.0;
};

struct RadialBoundReport {
    double min_margin = 0.0;
    int directions = 0;
    std::vector<RadialBoundRow> rows;
};

RadialBoundReport radial_bound_check(const FinslerChart& chart, const model::ModelSurface& model, const Vec& p,
                                     const std::vector<double>& t_samples, int w_per_point, int directions = 8);

// Deterministic, evenly spread Euclidean unit vectors (circle or Fibonacci sphere).
std::vector<Vec> unit_directions(int n, int count);
// Same directions scaled to F(x, u) = 1.
std::vector<Vec> indicatrix_directions(const FinslerChart& chart, const Vec& x, int count);

} // namespace cmpgeo::finsler
