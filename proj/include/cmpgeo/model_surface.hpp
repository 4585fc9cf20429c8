#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cmpgeo/warp.hpp"

namespace cmpgeo::model {

struct SurfaceSpec {
    std::string family = "gauss_tanh";
    Params params;
    std::string base_family;  // curvature_bump only
    double t_max = 10.0;
    double t_min = 1e-3;
};

std::string to_record(const SurfaceSpec& spec);
SurfaceSpec surface_from_record(const std::string& text);

struct Classification {
    bool von_mangoldt = false;
    std::optional<double> rho;
    std::optional<double> G_at_rho;
    double worst_increase = 0.0;  // largest G(t_{i+1}) - G(t_i) seen on the grid
};

struct ModelSurface {
    SurfaceSpec spec;
    WarpFunction warp;
    RadialCurvature curvature;
    bool von_mangoldt = false;
    std::optional<double> rho;
    std::optional<double> G_at_rho;

    double t_min() const { return spec.t_min; }
    double t_max() const { return spec.t_max; }
    double f(double t) const { return warp.f(t); }
    double G(double t) const { return curvature(t); }
};

std::vector<double> uniform_grid(double a, double b, int n);

// Default classification grid: 10^4 points on [t_min, t_max].
Classification classify_model(const ModelSurface& surface, const std::vector<double>& grid);

ModelSurface make_surface(const SurfaceSpec& spec);
ModelSurface make_surface(const WarpFunction& warp, const RadialCurvature& curvature, double t_min = 1e-3,
                          const std::string& label = "custom");

// max |f'' + G f| / (1 + |f|) on the grid.
double compatibility_residual(const ModelSurface& surface, const std::vector<double>& grid);

struct ModelPoint {
    double t = 1.0;
    double theta = 0.0;
};

struct GeodesicSample {
    double s = 0.0;
    double t = 0.0;
    double theta = 0.0;
    double dt = 0.0;
    double dtheta = 0.0;
    double excess_plus = 0.0;   // integral of (1 - t'), i.e. s - (t(s) - t(0))
    double excess_minus = 0.0;  // integral of (1 + t'), i.e. s + (t(s) - t(0))
};

struct ModelGeodesic {
    ModelPoint start;
    double psi = 0.0;       // initial angle with d/dt, in [0, pi]
    int orientation = 1;    // +1: theta increasing, -1: mirrored
    double nu = 0.0;
    double step = 0.0;
    std::vector<GeodesicSample> samples;
    double length = 0.0;

    const GeodesicSample& back() const { return samples.back(); }
    // length - |t(end) - t(0)|, without cancellation
    double excess() const;
    ModelPoint end() const;
    double max_clairaut_drift(const ModelSurface& surface) const;
    double max_speed_residual(const ModelSurface& surface) const;
    // cubic Hermite interpolation in s
    GeodesicSample at(double s) const;
};

double clairaut_constant(const ModelSurface& surface, const ModelPoint& point, double psi);

// Fixed-step RK4 on (t, theta, t', theta'); the step is halved until the
// Clairaut drift is below 1e-6 and the speed residual below 1e-8. Near the
// pole the step is additionally capped at 0.02 t.
ModelGeodesic integrate_geodesic(const ModelSurface& surface, const ModelPoint& start, double psi, double length,
                                 double step = 1e-3);

struct DistanceOptions {
    int starts = 64;
    double coarse_step = 1e-2;
    double step = 1e-3;
    double tie_tolerance = 1e-6;
    double residual_tolerance = 1e-10;
    double pole_radius = 0.0;   // 0: surface t_min
    bool include_pole_path = true;
    double length_cap = 0.0;    // 0: t_a + t_b
};

struct ModelDistance {
    double d = 0.0;
    ModelGeodesic geodesic;
    double excess = 0.0;                // d - |t_b - t_a|
    std::vector<double> connector_psi;  // initial angles of all tied minimal connectors
    std::vector<double> connector_length;
    bool via_pole = false;
};

ModelDistance model_distance(const ModelSurface& surface, const ModelPoint& a, const ModelPoint& b,
                             const DistanceOptions& opts = {});

// Shortest theta-monotone geodesic from (t_a, 0) to (t_b, dtheta), dtheta > 0
// not restricted to [0, pi]. Connectors through the pole are not considered.
// Returns nullopt when none is found below the cap.
std::optional<ModelDistance> shoot_to(const ModelSurface& surface, double t_a, double t_b, double dtheta,
                                      const DistanceOptions& opts = {});

double length_lower_bound(const ModelSurface& surface, double nu, double t0, double t1);

// Jacobi field along the meridian through the pole; s* measured from the start.
std::optional<double> first_conjugate_point(const ModelSurface& surface, double t_start, double step = 1e-3);

struct CutLocus {
    bool empty = true;
    double theta_opposite = 0.0;
    double t_cut = 0.0;
};

struct CutLocusOptions {
    double pole_radius = 1e-5;
    double t_search_max = 0.0;  // 0: min(t_max, t_x + 4)
    int coarse_points = 48;
    double t_tolerance = 1e-6;
};

CutLocus cut_locus(const ModelSurface& surface, const ModelPoint& x, const CutLocusOptions& opts = {});

struct AngleLemma {
    double angle_at_x = 0.0;
    bool passes = false;
    double min_t = 0.0;
};

AngleLemma check_angle_lemma(const ModelSurface& surface, const ModelPoint& x, const ModelPoint& y);

// Max |t(s) - rho| along the geodesic started tangent to the parallel t = rho.
double parallel_geodesic_residual(const ModelSurface& surface, double length, double step = 1e-3);

} // namespace cmpgeo::model
