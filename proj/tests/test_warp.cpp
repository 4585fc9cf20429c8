#include <doctest.h>

#include <cmath>

#include "cmpgeo/model_surface.hpp"
#include "cmpgeo/warp.hpp"
#include "oracles.hpp"

using namespace cmpgeo;
using namespace cmpgeo::model;

TEST_CASE("builtin warps match their closed forms") {
    auto flat = builtin_warp("flat", {}, 10);
    auto sinh = builtin_warp("sinh", {{"k", 4.0}}, 10);
    auto gt = builtin_warp("gauss_tanh", {}, 10);
    for (double t : {0.01, 0.3, 1.0, 2.5, 4.0}) {
        CHECK(flat.f(t) == doctest::Approx(t).epsilon(1e-15));
        CHECK(sinh.f(t) == doctest::Approx(std::sinh(2 * t) / 2).epsilon(1e-13));
        CHECK(gt.f(t) == doctest::Approx(oracle::gauss_tanh_f(t)).epsilon(1e-13));
        CHECK(gt.df(t) == doctest::Approx(oracle::gauss_tanh_df(t)).epsilon(1e-11));
    }
}

TEST_CASE("gauss_tanh curvature tends to 8 at the pole and turns negative") {
    auto G = builtin_curvature("gauss_tanh", {}, 1e-3);
    CHECK(G(1e-3) == doctest::Approx(8).epsilon(0.01));
    CHECK(G(3.0) < 0);
    CHECK_THROWS_AS(G(1e-4), Error);
}

TEST_CASE("curvature_from_warp agrees with -f''/f by hand") {
    auto gt = builtin_warp("gauss_tanh", {}, 10);
    auto G = curvature_from_warp(gt, 1e-3);
    auto Ga = builtin_curvature("gauss_tanh", {}, 1e-3);
    for (double t : {0.05, 0.5, 1.2, 2.0, 3.0}) {
        const double h = 1e-3;
        double d2 = (oracle::gauss_tanh_f(t + h) - 2 * oracle::gauss_tanh_f(t) + oracle::gauss_tanh_f(t - h)) / (h * h);
        double ref = -d2 / oracle::gauss_tanh_f(t);
        CHECK(G(t) == doctest::Approx(ref).epsilon(1e-4));
        CHECK(Ga(t) == doctest::Approx(ref).epsilon(1e-4));
    }
}

TEST_CASE("warp ODE roundtrip") {
    for (const char* fam : {"flat", "sinh", "gauss_tanh", "paraboloid"}) {
        auto f = builtin_warp(fam, {}, 6);
        auto G = builtin_curvature(fam, {}, 1e-3);
        auto back = warp_from_curvature(G, 5.1, 1e-3);
        double worst = 0;
        for (int i = 0; i <= 500; ++i) {
            double t = 0.01 + (5 - 0.01) * i / 500;
            worst = std::max(worst, std::abs(back.f(t) - f.f(t)) / std::abs(f.f(t)));
        }
        INFO(fam);
        CHECK(worst <= 1e-5);
    }
}

TEST_CASE("warp ODE detects a vanishing warp") {
    auto G = bumped_curvature(builtin_curvature("gauss_tanh", {}, 1e-3), 0.2, 0.9, 1.5, 0.15);
    CHECK_THROWS_AS(warp_from_curvature(G, 4.0, 1e-3), Error);
    CHECK_NOTHROW(warp_from_curvature(G, 1.8, 1e-3));
}

TEST_CASE("smooth plateau") {
    CHECK(smooth_plateau(1.0, 0.9, 1.5, 0.15) == 1.0);
    CHECK(smooth_plateau(0.7, 0.9, 1.5, 0.15) == 0.0);
    CHECK(smooth_plateau(1.7, 0.9, 1.5, 0.15) == 0.0);
    double a = smooth_plateau(0.8, 0.9, 1.5, 0.15);
    CHECK(a > 0);
    CHECK(a < 1);
    // the bump only adds curvature
    auto base = builtin_curvature("gauss_tanh", {}, 1e-3);
    auto bumped = bumped_curvature(base, 0.2, 0.9, 1.5, 0.15);
    for (double t = 0.1; t < 3; t += 0.05) CHECK(bumped(t) >= base(t));
    CHECK(bumped(1.2) == doctest::Approx(base(1.2) + 0.2));
}

TEST_CASE("classification of the example surface") {
    auto m = make_surface(SurfaceSpec{});
    CHECK(m.von_mangoldt);
    REQUIRE(m.rho);
    CHECK(*m.rho == doctest::Approx(oracle::gauss_tanh_rho()).epsilon(1e-9));
    CHECK(*m.rho == doctest::Approx(0.6246971683).epsilon(1e-9));
    REQUIRE(m.G_at_rho);
    CHECK(*m.G_at_rho == doctest::Approx(4.946290).epsilon(1e-6));

    SurfaceSpec s;
    s.family = "sinh";
    auto h = make_surface(s);
    CHECK(h.von_mangoldt);
    CHECK_FALSE(h.rho);
}

TEST_CASE("unknown family is a config error naming the field") {
    SurfaceSpec s;
    s.family = "torus";
    try {
        make_surface(s);
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ConfigInvalid);
        CHECK(std::string(e.what()).find("surface.family") != std::string::npos);
    }
}

TEST_CASE("surface records round-trip") {
    SurfaceSpec s;
    s.family = "curvature_bump";
    s.base_family = "gauss_tanh";
    s.params = {{"amp", 0.2}, {"lo", 0.9}, {"hi", 1.5}};
    s.t_max = 1.8;
    auto back = surface_from_record(to_record(s));
    CHECK(back.family == s.family);
    CHECK(back.base_family == s.base_family);
    CHECK(back.params == s.params);
    CHECK(back.t_max == s.t_max);
    CHECK(back.t_min == s.t_min);
}
