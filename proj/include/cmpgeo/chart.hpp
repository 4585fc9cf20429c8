#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmpgeo/model_surface.hpp"

namespace cmpgeo::finsler {

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

Vec vec2(double a, double b);
Vec vec3(double a, double b, double c);

struct Box {
    Vec lo, hi;
    bool contains(const Vec& x) const;
    double scale() const;  // largest side length
};

// Builtin chart families:
//   euclidean   g = I
//   sphere      g = 4/(1 + k|x|^2)^2 I, curvature k (stereographic)
//   hyperbolic  g = 4/(1 - k|x|^2)^2 I, curvature -k (Poincare ball)
//   skew        g = [[1 + a y^2, b sin(x + y)], [b sin(x + y), 1 + a x^2]]  (n = 2)
//   warped_polar  dt^2 + f(t)^2 dtheta^2 written in Cartesian coordinates (n = 2)
//   randers     F = |v| + beta(x).v, beta(x) = b + B x
//   minkowski   F = ((v^T A v)^2 + eps sum v_i^4)^{1/4} + b.v
struct ChartSpec {
    std::string family = "euclidean";
    int dim = 2;
    std::vector<double> lo{-1, -1};
    std::vector<double> hi{1, 1};
    model::Params params;
    model::SurfaceSpec surface;  // warped_polar only
};

std::string to_record(const ChartSpec& spec);
ChartSpec chart_from_record(const std::string& text);

class FinslerChart {
public:
    enum class Kind { Riemannian, Randers, Minkowski, Generic };
    using FEval = std::function<double(const Vec&, const Vec&)>;
    using GEval = std::function<Mat(const Vec&)>;
    // one-form coefficients b_i(x) and their Jacobian db_i/dx^j
    using BetaEval = std::function<void(const Vec&, Vec&, Mat&)>;
    using Inside = std::function<bool(const Vec&)>;
    // closed-form Christoffel symbols gamma[i](j, k); may decline (return false)
    using ChristoffelEval = std::function<bool(const Vec&, std::vector<Mat>&)>;

    static FinslerChart riemannian(int n, Box box, GEval g, std::string label, Inside inside = {});
    static FinslerChart randers(int n, Box box, GEval a, BetaEval beta, std::string label, bool flat_alpha = false);
    static FinslerChart minkowski(int n, Box box, FEval norm, bool reversible, std::string label);
    // F given as a black box; every derivative by finite differences
    static FinslerChart generic(int n, Box box, FEval F, std::string label, bool reversible = false);

    int dim() const { return n_; }
    const Box& box() const { return box_; }
    Kind kind() const { return kind_; }
    const std::string& label() const { return label_; }
    double scale() const { return scale_; }
    bool reversible() const { return reversible_; }
    bool x_independent() const { return kind_ == Kind::Minkowski; }
    bool flat_alpha() const { return flat_alpha_; }

    bool contains(const Vec& x) const;
    double F(const Vec& x, const Vec& v) const;
    // Riemannian metric (Riemannian kind) or the alpha part (Randers kind)
    Mat metric(const Vec& x) const { return g_(x); }
    bool has_metric() const { return static_cast<bool>(g_); }
    void beta(const Vec& x, Vec& b, Mat& db) const { beta_(x, b, db); }
    void set_christoffel(ChristoffelEval fn) { gamma_ = std::move(fn); }
    bool christoffel_closed_form(const Vec& x, std::vector<Mat>& gamma) const { return gamma_ && gamma_(x, gamma); }

    ChartSpec spec;
    // model surface behind a warped_polar chart, if any
    std::shared_ptr<const model::ModelSurface> surface;

private:
    int n_ = 2;
    Box box_;
    Kind kind_ = Kind::Generic;
    std::string label_;
    double scale_ = 1.0;
    bool reversible_ = false;
    bool flat_alpha_ = false;
    FEval F_;
    GEval g_;
    BetaEval beta_;
    ChristoffelEval gamma_;
    Inside inside_;
};

FinslerChart make_chart(const ChartSpec& spec);

// warped_polar over an existing model surface; the chart is the disc |x| < radius.
FinslerChart warped_polar_chart(std::shared_ptr<const model::ModelSurface> surface, double radius);

const std::vector<model::FamilyInfo>& chart_families();

} // namespace cmpgeo::finsler
