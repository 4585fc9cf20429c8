#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cmpgeo/error.hpp"

namespace cmpgeo::model {

using quad = __float128;
using Params = std::map<std::string, double>;

struct WarpSample {
    double f = 0.0;
    double df = 0.0;
    double d2f = 0.0;
};

// f and f'' in quad precision, used where the warp ODE is ill-conditioned.
struct WarpSampleQ {
    quad f = 0;
    quad d2f = 0;
};

// Warp profile f of a surface of revolution dt^2 + f(t)^2 dtheta^2.
class WarpFunction {
public:
    enum class Source { Analytic, Grid };
    using Eval = std::function<WarpSample(double)>;
    using EvalQ = std::function<WarpSampleQ(quad)>;

    WarpFunction() = default;
    // If has_d2f is false the d2f field of eval is ignored and f'' comes from
    // 5-point central differences of f.
    WarpFunction(Eval eval, double t_max, Source source, std::string label,
                 bool has_d2f = true, EvalQ eval_q = {});

    WarpSample eval(double t) const;
    double f(double t) const { return eval(t).f; }
    double df(double t) const { return eval_(t).df; }
    double d2f(double t) const { return eval(t).d2f; }

    bool has_quad() const { return static_cast<bool>(eval_q_); }
    WarpSampleQ eval_quad(quad t) const { return eval_q_(t); }

    double t_max() const { return t_max_; }
    Source source() const { return source_; }
    bool analytic_second_derivative() const { return has_d2f_; }
    const std::string& label() const { return label_; }

private:
    Eval eval_;
    EvalQ eval_q_;
    double t_max_ = 0.0;
    Source source_ = Source::Analytic;
    std::string label_;
    bool has_d2f_ = true;
};

// Radial curvature G(t). Evaluations below t_min throw PoleTooClose; the
// unguarded path is for integrators that need G right up to the pole.
class RadialCurvature {
public:
    enum class Source { Analytic, FromWarp };
    using Eval = std::function<double(double)>;
    using EvalQ = std::function<quad(quad)>;

    RadialCurvature() = default;
    RadialCurvature(Eval g, Source source, std::string label, double t_min = 0.0, EvalQ g_q = {});

    double operator()(double t) const;
    double unguarded(double t) const;
    // Falls back to the double evaluator when no quad evaluator was given.
    quad eval_quad(quad t) const;
    bool has_quad() const { return static_cast<bool>(g_q_); }

    double t_min() const { return t_min_; }
    RadialCurvature with_t_min(double t_min) const;
    Source source() const { return source_; }
    const std::string& label() const { return label_; }

private:
    Eval g_;
    EvalQ g_q_;
    Source source_ = Source::Analytic;
    std::string label_;
    double t_min_ = 0.0;
};

struct FamilyInfo {
    std::string name;
    std::string formula;
    std::vector<std::pair<std::string, std::string>> params;  // name, meaning/default
};

const std::vector<FamilyInfo>& warp_families();

bool is_analytic_family(const std::string& family);
WarpFunction builtin_warp(const std::string& family, const Params& params, double t_max);
RadialCurvature builtin_curvature(const std::string& family, const Params& params, double t_min = 0.0);

// Smooth plateau: 1 on [lo, hi], 0 outside [lo - ramp, hi + ramp].
double smooth_plateau(double t, double lo, double hi, double ramp);
quad smooth_plateau(quad t, quad lo, quad hi, quad ramp);

// G + amp * plateau(lo, hi, ramp), quad evaluator carried through.
RadialCurvature bumped_curvature(const RadialCurvature& base, double amp, double lo, double hi, double ramp);

// Solves f'' + G f = 0, f(0) = 0, f'(0) = 1 on [0, t_max] with nodes `step`
// apart. The integration runs in quad precision (extrapolated modified
// midpoint) because decaying warps like e^{-t^2} sit next to a growing
// solution and lose every digit in double. Nodes carry f, f', f'' and are
// joined by quintic Hermite pieces.
WarpFunction warp_from_curvature(const RadialCurvature& G, double t_max, double step);

// G = -f''/f. Evaluation below t_min throws PoleTooClose.
RadialCurvature curvature_from_warp(const WarpFunction& f, double t_min = 1e-3);

} // namespace cmpgeo::model
