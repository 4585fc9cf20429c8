#include <doctest.h>

#include <cmath>
#include <random>

#include "cmpgeo/model_surface.hpp"
#include "oracles.hpp"

using namespace cmpgeo;
using namespace cmpgeo::model;

namespace {

ModelSurface surface(const char* fam) {
    SurfaceSpec s;
    s.family = fam;
    return make_surface(s);
}

// inner turning radius: the first t below the start with f(t) = nu. Outward
// geodesics beyond the maximum of f turn back and reach it as well.
double f_min_along(const ModelSurface& m, double t, double psi) {
    const double nu = m.f(t) * std::sin(psi);
    double hi = t, lo = t;
    while (lo > m.t_min() && m.f(lo) >= nu) {
        hi = lo;
        lo = std::max(m.t_min(), lo - 1e-3);
    }
    if (m.f(lo) >= nu) return lo;
    for (int i = 0; i < 60; ++i) {
        double mid = 0.5 * (lo + hi);
        (m.f(mid) < nu ? lo : hi) = mid;
    }
    return hi;
}

} // namespace

TEST_CASE("Clairaut constant is conserved along random geodesics") {
    auto m = surface("gauss_tanh");
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> T(0.2, 3), P(0.05, oracle::pi - 0.05), L(1, 20);
    int traced = 0;
    while (traced < 15) {
        double t = T(rng), psi = P(rng), len = L(rng);
        // geodesics that graze the pole are refused
        if (f_min_along(m, t, psi) < 2e-3) continue;
        auto g = integrate_geodesic(m, {t, 0.0}, psi, len);
        ++traced;
        CHECK(g.max_clairaut_drift(m) <= 1e-6);
        CHECK(g.max_speed_residual(m) <= 1e-8);
    }
}

TEST_CASE("flat model distance is the law of cosines") {
    auto m = surface("flat");
    for (auto [a, b, th] : {std::tuple{1.0, 2.0, 0.7}, {3.0, 0.5, 2.9}, {2.0, 2.0, 3.1415}, {1.0, 4.0, 0.01}}) {
        double ref = std::sqrt(a * a + b * b - 2 * a * b * std::cos(th));
        auto md = model_distance(m, {a, 0}, {b, th});
        CHECK(md.d == doctest::Approx(ref).epsilon(1e-9));
        CHECK(md.excess == doctest::Approx(ref - std::abs(b - a)).epsilon(1e-7));
    }
}

TEST_CASE("sinh model distance is the hyperbolic law of cosines") {
    auto m = surface("sinh");
    for (auto [a, b, th] : {std::tuple{1.0, 2.0, 0.7}, {0.5, 1.5, 2.5}, {2.0, 1.0, 1.2}}) {
        auto md = model_distance(m, {a, 0}, {b, th});
        CHECK(md.d == doctest::Approx(oracle::hyperbolic_side(a, b, th)).epsilon(1e-9));
    }
}

TEST_CASE("model distance agrees with a brute-force scan over initial angles") {
    auto m = surface("gauss_tanh");
    const ModelPoint a{1.0, 0.0}, b{1.3, 1.2};
    auto md = model_distance(m, a, b);
    // shortest traced geodesic that passes within 2e-3 of b
    double best = 1e9;
    for (int k = 1; k < 4000; ++k) {
        double psi = oracle::pi * k / 4000;
        if (f_min_along(m, a.t, psi) < 2e-3) continue;
        auto g = integrate_geodesic(m, a, psi, 3.0, 2e-3);
        for (const auto& q : g.samples) {
            double dth = std::remainder(q.theta - b.theta, 2 * oracle::pi);
            double gap = std::hypot(q.t - b.t, m.f(b.t) * dth);
            if (gap < 2e-3) {
                best = std::min(best, q.s);
                break;
            }
        }
    }
    CHECK(md.d <= best + 3e-3);
    CHECK(md.d >= best - 3e-3);
}

TEST_CASE("model distance is symmetric") {
    auto m = surface("gauss_tanh");
    auto ab = model_distance(m, {0.8, 0.0}, {1.4, 2.0});
    auto ba = model_distance(m, {1.4, 0.0}, {0.8, -2.0});
    CHECK(ab.d == doctest::Approx(ba.d).epsilon(1e-9));
}

TEST_CASE("length lower bound") {
    auto m = surface("gauss_tanh");
    auto g = integrate_geodesic(m, {0.5, 0.0}, 0.6, 0.8);
    REQUIRE(g.back().t > 0.5);
    for (const auto& q : g.samples) REQUIRE(q.dt > 0);
    double bound = length_lower_bound(m, g.nu, 0.5, g.back().t);
    CHECK(g.length >= bound - 1e-6);
    CHECK(length_lower_bound(m, 0.0, 1.0, 2.0) == 1.0);
    CHECK_THROWS_AS(length_lower_bound(m, 0.3, 0.5, 2.0), Error);
}

TEST_CASE("flat lower bound sits between the radial gain and the length") {
    auto m = surface("flat");
    auto g = integrate_geodesic(m, {1.0, 0.0}, oracle::pi / 4, 2.0);
    double bound = length_lower_bound(m, g.nu, 1.0, g.back().t);
    CHECK(bound <= g.length);
    CHECK(bound > g.back().t - 1.0);
}

TEST_CASE("cut locus") {
    CHECK(cut_locus(surface("flat"), {1.0, 0.0}).empty);
    CHECK(cut_locus(surface("sinh"), {1.0, 0.0}).empty);
    auto m = surface("gauss_tanh");
    auto c = cut_locus(m, {1.0, 0.3});
    REQUIRE_FALSE(c.empty);
    CHECK(std::abs(std::remainder(c.theta_opposite - 0.3 - oracle::pi, 2 * oracle::pi)) < 1e-12);
    auto s = first_conjugate_point(m, 1.0);
    REQUIRE(s);
    CHECK(c.t_cut == doctest::Approx(*s - 1.0).epsilon(1e-3));
    CHECK_FALSE(first_conjugate_point(surface("flat"), 1.0));
}

TEST_CASE("the parallel at rho is a geodesic") {
    auto m = surface("gauss_tanh");
    CHECK(parallel_geodesic_residual(m, 2.0) <= 1e-6);
}

TEST_CASE("angle lemma outside rho") {
    auto m = surface("gauss_tanh");
    auto r = check_angle_lemma(m, {0.9, 0.0}, {1.3, 1.0});
    CHECK(r.passes);
    CHECK_THROWS_AS(check_angle_lemma(m, {0.3, 0.0}, {1.3, 1.0}), Error);
}

TEST_CASE("geodesic through the pole") {
    auto m = surface("flat");
    auto g = integrate_geodesic(m, {1.0, 0.0}, oracle::pi, 2.0);
    CHECK(g.back().t == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(std::remainder(g.back().theta - oracle::pi, 2 * oracle::pi)) < 1e-6);
}
