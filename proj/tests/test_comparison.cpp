#include <doctest.h>

#include <cmath>
#include <memory>

#include "cmpgeo/comparison.hpp"
#include "oracles.hpp"

using namespace cmpgeo;
using namespace cmpgeo::comparison;
using finsler::vec2;

namespace {

model::ModelSurface surface(const char* fam, double t_max = 10) {
    model::SurfaceSpec s;
    s.family = fam;
    s.t_max = t_max;
    return model::make_surface(s);
}

FinslerChart euclid(double half = 6) {
    finsler::ChartSpec s;
    s.lo = {-half, -half};
    s.hi = {half, half};
    return finsler::make_chart(s);
}

} // namespace

TEST_CASE("forward triangle: Euclidean right triangle") {
    auto c = euclid();
    auto t = build_forward_triangle(c, vec2(0, 0), vec2(3, 0), vec2(0, 4));
    CHECK(t.angle_x == doctest::Approx(std::acos(3.0 / 5)).epsilon(1e-4));
    CHECK(t.angle_y == doctest::Approx(std::acos(4.0 / 5)).epsilon(1e-4));
    CHECK(t.d_px == doctest::Approx(3));
    CHECK(t.lm_xy == doctest::Approx(5).epsilon(1e-9));
}

TEST_CASE("L_m on a constant Randers one-form") {
    finsler::ChartSpec s;
    s.family = "randers";
    s.lo = {-2, -2};
    s.hi = {2, 2};
    s.params = {{"b1", 0.3}, {"b2", -0.1}};
    auto c = finsler::make_chart(s);
    auto t = build_forward_triangle(c, vec2(0, 0), vec2(1, 0.2), vec2(-0.3, 1.2));
    Eigen::Vector2d d(-1.3, 1.0);
    double beta = 0.3 * d[0] - 0.1 * d[1];
    CHECK(t.lm_xy == doctest::Approx(d.norm() + std::abs(beta)).epsilon(1e-8));
    CHECK(t.lm_xy > t.c.d + 1e-3);
}

TEST_CASE("flat comparison triangle follows the law of cosines") {
    auto m = surface("flat");
    auto tri = build_comparison_triangle(m, 3, 5, 4);
    CHECK(tri.angle_x == doctest::Approx(oracle::pi / 2).epsilon(1e-8));
    CHECK(tri.angle_y == doctest::Approx(oracle::law_of_cosines(5, 4, 3)).epsilon(1e-8));
    CHECK(tri.angle_p == doctest::Approx(oracle::law_of_cosines(3, 5, 4)).epsilon(1e-8));
    CHECK(tri.angle_x + tri.angle_y + tri.angle_p == doctest::Approx(oracle::pi).epsilon(1e-8));
}

TEST_CASE("degenerate colinear side") {
    auto m = surface("flat");
    auto tri = build_comparison_triangle(m, 1.5, 2.5, 1.0);
    CHECK(tri.dtheta == 0.0);
    CHECK(tri.angle_x == doctest::Approx(oracle::pi));
    CHECK(tri.angle_y == doctest::Approx(0.0));
}

TEST_CASE("inadmissible side on the example surface") {
    auto m = surface("gauss_tanh");
    try {
        build_comparison_triangle(m, 1.5, 2.0, 0.8);
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NotAdmissible);
    }
    CHECK_THROWS_AS(build_comparison_triangle(m, 1.5, 2.0, 0.4), Error);
}

TEST_CASE("comparison triangle self-consistency") {
    auto m = surface("gauss_tanh");
    for (auto [a, b, side] : {std::tuple{1.5, 2.0, 0.505}, {1.0, 1.2, 0.6}, {0.8, 1.4, 0.8}}) {
        auto tri = build_comparison_triangle(m, a, b, side);
        auto md = model::model_distance(m, {a, 0.0}, {b, tri.dtheta});
        CHECK(md.d == doctest::Approx(side).epsilon(1e-6));
        CHECK(tri.realized_side == doctest::Approx(side).epsilon(1e-6));
        CHECK(tri.angle_p == doctest::Approx(tri.dtheta));
    }
}

TEST_CASE("excess form agrees with the side form") {
    auto m = surface("gauss_tanh");
    auto a = build_comparison_triangle(m, 1.0, 1.2, 0.6);
    auto b = build_comparison_triangle_excess(m, 1.0, 1.2, 0.4);
    CHECK(a.dtheta == doctest::Approx(b.dtheta).epsilon(1e-9));
    CHECK(a.angle_x == doctest::Approx(b.angle_x).epsilon(1e-8));
}

TEST_CASE("margin classes") {
    CHECK(classify_margin(0.01, 1e-3) == MarginClass::Strict);
    CHECK(classify_margin(5e-4, 1e-3) == MarginClass::Equality);
    CHECK(classify_margin(-5e-4, 1e-3) == MarginClass::Equality);
    CHECK(classify_margin(-0.01, 1e-3) == MarginClass::Violation);
    CHECK(std::string(to_string(MarginClass::Violation)) == "violation");
}

TEST_CASE("TCT on a warped chart against its own model") {
    auto m = std::make_shared<const model::ModelSurface>(surface("gauss_tanh", 3));
    auto c = finsler::warped_polar_chart(m, 1.7);
    Vec p = vec2(0, 0);
    auto polar = [](double t, double th) { return vec2(t * std::cos(th), t * std::sin(th)); };
    // chart coordinates are Cartesian in (t, theta)
    auto r = verify_tct(c, *m, p, polar(1.0, 0.0), polar(1.2, 1.1));
    REQUIRE(r.hypotheses.passed);
    REQUIRE(r.margin_x);
    CHECK(std::abs(*r.margin_x) <= 1e-3);
    CHECK(std::abs(*r.margin_y) <= 1e-3);
}

TEST_CASE("TCT hypothesis gate: side entering the ball") {
    auto m = std::make_shared<const model::ModelSurface>(surface("gauss_tanh", 3));
    auto c = finsler::warped_polar_chart(m, 1.7);
    // x sits inside t = rho
    auto r = verify_tct(c, *m, vec2(0, 0), vec2(0.5, 0), vec2(std::cos(0.5), std::sin(0.5)));
    CHECK_FALSE(r.hypotheses.outside_ball);
    CHECK_FALSE(r.margin_x);
    CHECK_FALSE(r.margin_y);
}

TEST_CASE("forward criticality with explicit connector sets") {
    auto c = euclid();
    auto w = finsler::unit_directions(2, 64);
    Vec v = vec2(0.6, 0.8);
    auto single = is_forward_critical(c, vec2(0, 0), vec2(3, 4), {v}, std::vector<Vec>{v});
    CHECK_FALSE(single.critical);
    REQUIRE(single.witness);
    CHECK(single.witness->dot(v) > 0);
    auto pair = is_forward_critical(c, vec2(0, 0), vec2(3, 4), w, std::vector<Vec>{v, Vec(-v)});
    CHECK(pair.critical);
}

TEST_CASE("criticality agrees with a dense direction sweep") {
    auto c = euclid();
    std::vector<Vec> conn{vec2(1, 0), vec2(std::cos(2.0), std::sin(2.0))};
    auto w = finsler::unit_directions(2, 64);
    auto got = is_forward_critical(c, vec2(0, 0), vec2(1, 1), w, conn);
    // two directions 2 rad apart leave an open half-plane free: not critical
    bool any_free = false;
    for (int k = 0; k < 20000; ++k) {
        double a = 2 * oracle::pi * k / 20000;
        double best = 1e9;
        for (const auto& v : conn) best = std::min(best, v[0] * std::cos(a) + v[1] * std::sin(a));
        any_free = any_free || best > 1e-9;
    }
    CHECK(got.critical == !any_free);
    CHECK_FALSE(got.critical);
}

TEST_CASE("Euclidean plane has no critical points") {
    auto rep = critical_scan(euclid(), vec2(0, 0), {1, 2, 4}, 8, 32);
    CHECK(rep.failures.empty());
    CHECK_FALSE(rep.outermost_critical_radius);
    for (const auto& v : rep.verdicts) CHECK_FALSE(v.critical);
}

TEST_CASE("diameter growth") {
    auto c = euclid();
    auto g = diameter_growth(c, vec2(0, 0), {1, 2, 4}, 12);
    REQUIRE(g.alpha);
    CHECK(*g.alpha == doctest::Approx(1).epsilon(0.01));
    // the estimate is the largest distance between the shell samples
    auto dirs = finsler::unit_directions(2, 12);
    double spread = 0;
    for (const auto& a : dirs)
        for (const auto& b : dirs) spread = std::max(spread, (a - b).norm());
    for (std::size_t i = 0; i < g.t.size(); ++i)
        CHECK(g.diameter[i] == doctest::Approx(spread * g.t[i]).epsilon(1e-6));
    auto one = diameter_growth(c, vec2(0, 0), {2}, 12);
    CHECK_FALSE(one.alpha);
}

TEST_CASE("chain: radial colinear panels on the flat model") {
    auto m = surface("flat");
    std::vector<PanelSide> panels{{1, 2, 1}, {2, 3.5, 1.5}, {3.5, 4, 0.5}};
    auto r = broken_geodesic_chain(m, panels);
    CHECK(r.hinge_violations == 0);
    CHECK(r.nu == doctest::Approx(0.0));
    CHECK(r.length_xi == doctest::Approx(3.0));
    CHECK(r.length_eta == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("chain: panels cut from a straight line") {
    auto m = surface("flat");
    const double psi = 0.9;
    auto g = model::integrate_geodesic(m, {1.0, 0.0}, psi, 4.0);
    auto r = broken_geodesic_chain(m, panels_from_geodesic(g, 6));
    CHECK(r.ok());
    CHECK(r.nu == doctest::Approx(std::sin(psi)).epsilon(1e-6));
    CHECK(r.length_eta == doctest::Approx(r.length_xi).epsilon(1e-6));
    for (double h : r.hinge_sums) CHECK(h == doctest::Approx(oracle::pi).epsilon(1e-6));
}

TEST_CASE("chain: subdivided geodesic on the example surface") {
    auto m = surface("gauss_tanh");
    auto g = model::integrate_geodesic(m, {1.0, 0.0}, 0.5, 0.8);
    auto r = broken_geodesic_chain(m, panels_from_geodesic(g, 8));
    REQUIRE(r.hinge_violations == 0);
    for (std::size_t l = 0; l < r.subdivision.size(); ++l) {
        auto q = g.at(r.subdivision[l]);
        CHECK(std::abs(r.theta_offsets[l] - q.theta) <= 1e-4);
    }
    CHECK(r.nu == doctest::Approx(g.nu).epsilon(1e-4));
    CHECK(std::abs(r.length_eta - g.length) <= 1e-4);
    CHECK(r.passes_under);
}

TEST_CASE("chain family: nu decreases and the Clairaut estimate holds") {
    auto m = surface("gauss_tanh");
    double prev = 1e9;
    for (double t_end : {3.0, 5.0, 8.0}) {
        auto r = chain_demo(m, 1.0, t_end);
        INFO("t_end = " << t_end);
        CHECK(r.ok());
        CHECK(r.nu < prev);
        CHECK(r.lhs >= r.rhs);
        CHECK(r.length_eta <= r.length_xi + 1e-6);
        prev = r.nu;
    }
}
