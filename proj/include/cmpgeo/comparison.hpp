#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cmpgeo/finsler.hpp"
#include "cmpgeo/model_surface.hpp"

namespace cmpgeo::comparison {

using finsler::ChartGeodesic;
using finsler::FinslerChart;
using finsler::MinimalConnector;
using finsler::Vec;

struct ForwardTriangle {
    Vec p, x, y;
    MinimalConnector gamma;  // p -> x
    MinimalConnector sigma;  // p -> y
    MinimalConnector c;      // x -> y
    double d_px = 0.0;
    double d_py = 0.0;
    double lm_xy = 0.0;
    double angle_x = 0.0;  // forward angle at x
    double angle_y = 0.0;  // backward angle at y
};

ForwardTriangle build_forward_triangle(const FinslerChart& chart, const Vec& p, const Vec& x, const Vec& y,
                                       const finsler::AngleOptions& angle_opts = {});

// Integral of max{F(c'), F(-c')} along a chart curve.
double lm_length(const FinslerChart& chart, const ChartGeodesic& path);

struct ComparisonTriangle {
    double t_x = 0.0;
    double t_y = 0.0;
    double side_xy = 0.0;
    double excess = 0.0;  // side_xy - |t_y - t_x|
    double dtheta = 0.0;
    double angle_x = 0.0;
    double angle_y = 0.0;
    double angle_p = 0.0;
    model::ModelGeodesic xy;  // realizing geodesic from (t_x, 0) to (t_y, dtheta)
    double realized_side = 0.0;
};

struct ComparisonOptions {
    model::DistanceOptions distance;
    int max_iterations = 80;
};

// Interior angles at x~ and y~ (angle 0 points along the realizing side).
// A degenerate colinear side (excess 0) gives dtheta = 0 with angles pi at the
// inner vertex and 0 at the outer one.
ComparisonTriangle build_comparison_triangle(const model::ModelSurface& model, double t_x, double t_y,
                                             double side_xy, const ComparisonOptions& opts = {});
// Same, with the side given through its excess over |t_y - t_x|; needed when
// the excess is below double resolution of the side.
ComparisonTriangle build_comparison_triangle_excess(const model::ModelSurface& model, double t_x, double t_y,
                                                    double excess, const ComparisonOptions& opts = {});

struct TCTOptions {
    int path_samples = 32;
    int w_samples = 64;
    int tube_points = 8;
    double tube_radius = 0.05;
    double convexity_tolerance = 1e-7;
    double tangent_tolerance = 1e-5;
    double reverse_tolerance = 1e-6;
    double equality_band = 1e-3;
    finsler::AngleOptions angle;
    ComparisonOptions comparison;
};

struct TCTHypotheses {
    bool outside_ball = false;
    double min_distance_to_p = 0.0;
    double convexity_margin = 0.0;
    double tangent_curvature_max = 0.0;
    double reverse_geodesic_residual = 0.0;
    bool passed = false;
};

enum class MarginClass { Strict, Equality, Violation };
const char* to_string(MarginClass m);
MarginClass classify_margin(double margin, double band);

struct TCTReport {
    TCTHypotheses hypotheses;
    ForwardTriangle triangle;
    bool admissible = false;
    std::optional<ComparisonTriangle> comparison;
    std::optional<double> margin_x;
    std::optional<double> margin_y;
    std::string note;
    int path_samples = 0;
    int w_samples = 0;
};

TCTReport verify_tct(const FinslerChart& chart, const model::ModelSurface& model, const Vec& p, const Vec& x,
                     const Vec& y, const TCTOptions& opts = {});

struct CriticalVerdict {
    Vec point;
    int connectors = 0;
    bool critical = false;
    std::optional<Vec> witness;  // a w with g_v(v, w) > 0 for every v, when not critical
    double worst = 0.0;          // max over w of min over v of g_v(v, w)
};

// Terminal velocities of the minimal connectors from p to x.
std::vector<Vec> connector_set(const FinslerChart& chart, const Vec& p, const Vec& x);

CriticalVerdict is_forward_critical(const FinslerChart& chart, const Vec& p, const Vec& x,
                                    const std::vector<Vec>& w_samples,
                                    const std::optional<std::vector<Vec>>& connectors = std::nullopt,
                                    double threshold = 1e-9);

struct CriticalScanReport {
    Vec p;
    std::vector<double> radii;
    std::vector<CriticalVerdict> verdicts;
    std::vector<double> verdict_radius;
    std::vector<std::string> failures;
    std::optional<double> outermost_critical_radius;
    int points_per_shell = 0;
    int w_samples = 0;
};

// Shell points are exp_p(r u) along radial geodesics.
CriticalScanReport critical_scan(const FinslerChart& chart, const Vec& p, const std::vector<double>& radii,
                                 int points_per_shell = 16, int w_samples = 64);

struct GrowthReport {
    std::vector<double> t;
    std::vector<double> diameter;
    std::optional<double> alpha;
    std::optional<double> alpha_stderr;
    int samples_per_shell = 0;
};

GrowthReport diameter_growth(const FinslerChart& chart, const Vec& p, const std::vector<double>& t_list,
                             int samples_per_shell = 12);

struct PanelSide {
    double t0 = 0.0;
    double t1 = 0.0;
    double side = 0.0;
    // side - |t1 - t0| when known without cancellation; NaN otherwise
    double excess = std::numeric_limits<double>::quiet_NaN();
};

struct ChainPoint {
    double theta = 0.0;
    double t = 0.0;
};

struct ChainReport {
    std::vector<double> subdivision;
    std::vector<ComparisonTriangle> panels;
    std::vector<double> theta_offsets;  // theta of x~_l, l = 0..k
    std::vector<double> hinge_sums;
    int hinge_violations = 0;
    std::vector<ChainPoint> xi;
    std::optional<model::ModelGeodesic> eta;
    std::vector<ChainPoint> eta_samples;
    double nu = 0.0;
    double length_xi = 0.0;
    double length_eta = 0.0;
    double excess_xi = 0.0;
    double excess_eta = 0.0;
    bool length_ok = false;
    double t_x = 0.0;
    double t_end = 0.0;
    double integral = 0.0;  // of f^-2 over [t_x, t_end]
    double lhs = 0.0;       // 4 t_x
    double rhs = 0.0;       // nu^2 * integral
    bool estimate_ok = false;
    bool passes_under = false;
    double under_gap = 0.0;  // max of t(eta) - t(xi) over the theta grid
    std::string note;

    bool ok() const { return hinge_violations == 0 && length_ok && estimate_ok && passes_under; }
};

struct ChainOptions {
    ComparisonOptions comparison;
    double hinge_tolerance = 1e-6;
    double length_tolerance = 1e-6;
    double under_tolerance = 1e-6;
    int theta_grid = 200;
};

ChainReport broken_geodesic_chain(const model::ModelSurface& model, const std::vector<PanelSide>& panels,
                                  const ChainOptions& opts = {});

// Panels of equal parameter length cut from a model geodesic; the chord data
// is measured on the geodesic itself.
std::vector<PanelSide> panels_from_geodesic(const model::ModelGeodesic& g, int panels);

// Minimal geodesic from (t_x, 0) to (t_end, theta_end) cut into panels and fed
// to the chain. Panel count doubles on NotAdmissible, up to 64.
ChainReport chain_demo(const model::ModelSurface& model, double t_x, double t_end, double theta_end = 1.5707963267948966,
                       int panels = 8, const ChainOptions& opts = {});

} // namespace cmpgeo::comparison
