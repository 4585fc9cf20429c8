#include <doctest.h>

#include <cmath>
#include <memory>

#include "cmpgeo/finsler.hpp"
#include "oracles.hpp"

using namespace cmpgeo;
using namespace cmpgeo::finsler;

namespace {

FinslerChart chart(const std::string& family, model::Params params = {}, double half = 1.0, int dim = 2) {
    ChartSpec s;
    s.family = family;
    s.dim = dim;
    s.lo.assign(dim, -half);
    s.hi.assign(dim, half);
    s.params = std::move(params);
    return make_chart(s);
}

Eigen::VectorXd dyn(const Vec& v) { return Eigen::VectorXd(v); }

// stereographic point to the unit sphere
Eigen::Vector3d to_sphere(const Vec& x) {
    double r2 = x.squaredNorm();
    return Eigen::Vector3d(2 * x[0], 2 * x[1], 1 - r2) / (1 + r2);
}

} // namespace

TEST_CASE("Randers fundamental tensor matches the closed form") {
    auto c = chart("randers", {{"b1", 0.3}, {"b2", -0.2}});
    Eigen::VectorXd b(2);
    b << 0.3, -0.2;
    for (Vec y : {vec2(1, 0), vec2(0.3, -0.8), vec2(-2, 1.5)}) {
        Mat g = fundamental_tensor(c, vec2(0.1, 0.2), y).g;
        Eigen::MatrixXd ref = oracle::randers_tensor(b, dyn(y));
        CHECK((Eigen::MatrixXd(g) - ref).cwiseAbs().maxCoeff() <= 1e-7);
    }
}

TEST_CASE("degenerate tensor at v = 0") {
    auto c = chart("randers", {{"b1", 0.3}});
    CHECK_THROWS_AS(fundamental_tensor(c, vec2(0, 0), vec2(0, 0)), Error);
}

TEST_CASE("sphere Christoffel symbols") {
    auto c = chart("sphere", {{"k", 1.0}});
    for (Vec x : {vec2(0.1, 0.2), vec2(-0.5, 0.4), vec2(0.7, -0.6)}) {
        auto gam = christoffel(c, x);
        auto ref = oracle::sphere_christoffel(1.0, dyn(x));
        for (int i = 0; i < 2; ++i) CHECK((Eigen::MatrixXd(gam[i]) - ref[i]).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("spray agrees with finite differences of F^2") {
    for (auto c : {chart("randers", {{"b1", 0.2}, {"B12", 0.3}, {"B21", -0.1}}), chart("skew"),
                   chart("sphere"), chart("minkowski", {{"eps", 0.5}, {"b1", 0.1}})}) {
        for (Vec x : {vec2(0.1, 0.2), vec2(-0.4, 0.3)})
            for (Vec y : {vec2(1, 0), vec2(0.6, -0.7)}) {
                INFO(c.label());
                CHECK((spray(c, x, y) - spray_fd(c, x, y)).cwiseAbs().maxCoeff() <= 1e-5);
            }
    }
}

TEST_CASE("flag curvature of constant curvature charts") {
    auto s = chart("sphere", {{"k", 1.0}});
    auto h = chart("hyperbolic", {{"k", 1.0}}, 0.7);
    for (Vec x : {vec2(0.0, 0.0), vec2(0.3, -0.2), vec2(-0.5, 0.4)}) {
        CHECK(flag_curvature(s, x, vec2(1, 0.2), vec2(0.3, 1)) == doctest::Approx(1.0).epsilon(1e-4));
        CHECK(flag_curvature(h, x, vec2(1, 0.2), vec2(0.3, 1)) == doctest::Approx(-1.0).epsilon(1e-4));
    }
    auto s3 = chart("sphere", {{"k", 4.0}}, 0.5, 3);
    CHECK(flag_curvature(s3, vec3(0.1, 0.2, -0.1), vec3(1, 0, 0.3), vec3(0, 1, 1)) ==
          doctest::Approx(4.0).epsilon(1e-4));
}

TEST_CASE("skew chart curvature against the Brioschi formula") {
    auto c = chart("skew", {{"a", 0.5}, {"b", 0.3}});
    for (Vec x : {vec2(0.0, 0.0), vec2(0.4, -0.3), vec2(-0.7, 0.6), vec2(0.9, 0.8)}) {
        double ref = oracle::skew_gauss_curvature(0.5, 0.3, x[0], x[1]);
        CHECK(flag_curvature(c, x, vec2(1, 0), vec2(0, 1)) == doctest::Approx(ref).epsilon(1e-4).scale(1));
    }
}

TEST_CASE("Minkowski norms are flat") {
    auto c = chart("minkowski", {{"eps", 0.5}, {"a12", 0.2}, {"b1", 0.1}});
    for (Vec x : {vec2(0.1, 0.2), vec2(-0.4, 0.3)}) {
        CHECK(std::abs(flag_curvature(c, x, vec2(1, 0.3), vec2(-0.2, 1))) <= 1e-4);
        CHECK(std::abs(tangent_curvature(c, x, vec2(1, 0.3), vec2(-0.2, 1))) <= 1e-5);
    }
}

TEST_CASE("tangent curvature vanishes on Riemannian charts") {
    for (auto c : {chart("sphere"), chart("skew")})
        CHECK(std::abs(tangent_curvature(c, vec2(0.2, -0.3), vec2(1, 0.4), vec2(-0.5, 1))) <= 1e-5);
}

TEST_CASE("tangent curvature does not depend on the extension") {
    auto c = chart("randers", {{"b1", 0.2}, {"B11", 0.1}, {"B12", 0.3}, {"B21", -0.1}});
    Vec x = vec2(0.1, -0.2), v = vec2(1, 0.2), w = vec2(-0.3, 1);
    double T0 = tangent_curvature(c, x, v, w);
    VectorField X = [&](const Vec& z) -> Vec { return v + Vec((z - x) * 0.7).cwiseProduct(vec2(1, -2)); };
    VectorField Y = [&](const Vec& z) -> Vec {
        Vec d = z - x;
        return w + vec2(std::sin(d[0]) + d[1] * d[1], 3 * d[0] * d[1] - d[1]);
    };
    CHECK(tangent_curvature_extended(c, x, X, Y) == doctest::Approx(T0).epsilon(1e-4).scale(1e-3));
}

TEST_CASE("Riemannian uniform convexity margin is zero") {
    auto c = chart("skew");
    auto w = unit_directions(2, 32);
    CHECK(std::abs(uniform_convexity_margin(c, vec2(0.2, 0.1), vec2(1, 0), w)) <= 1e-10);
}

TEST_CASE("distances") {
    SUBCASE("euclidean") {
        auto c = chart("euclidean", {}, 3);
        auto m = distance(c, vec2(-1, 0.5), vec2(2, -1));
        CHECK(m.d == doctest::Approx(std::hypot(3, 1.5)).epsilon(1e-9));
    }
    SUBCASE("sphere great circle") {
        auto c = chart("sphere", {{"k", 1.0}}, 1.5);
        Vec a = vec2(0.2, -0.4), b = vec2(-0.6, 0.5);
        double ref = std::acos(to_sphere(a).dot(to_sphere(b)));
        CHECK(distance(c, a, b).d == doctest::Approx(ref).epsilon(1e-8));
    }
    SUBCASE("constant Randers one-form") {
        auto c = chart("randers", {{"b1", 0.3}, {"b2", -0.2}}, 2);
        Vec a = vec2(-0.5, 0.2), b = vec2(1.0, 0.9);
        Vec d = b - a;
        double ref = d.norm() + 0.3 * d[0] - 0.2 * d[1];
        CHECK(distance(c, a, b).d == doctest::Approx(ref).epsilon(1e-8));
        double back = d.norm() - 0.3 * d[0] + 0.2 * d[1];
        CHECK(distance(c, b, a).d == doctest::Approx(back).epsilon(1e-8));
    }
}

TEST_CASE("euclidean angles are inner-product angles") {
    auto c = chart("euclidean", {}, 3);
    Vec p = vec2(0, 0), x = vec2(1.5, 0.2), y = vec2(0.3, 1.7);
    auto cx = distance(c, x, y);
    double ax = forward_angle(c, p, cx.path, 0.0);
    double ay = backward_angle(c, p, cx.path, cx.d);
    CHECK(ax == doctest::Approx(oracle::euclid_angle(dyn(p), dyn(x), dyn(y))).epsilon(1e-4));
    CHECK(ay == doctest::Approx(oracle::euclid_angle(dyn(p), dyn(y), dyn(x))).epsilon(1e-4));
}

TEST_CASE("radial extension has forward angle pi") {
    auto c = chart("euclidean", {}, 3);
    Vec p = vec2(0, 0);
    Vec u = vec2(0.6, 0.8);
    auto g = integrate_geodesic(c, 0.5 * u, u, 1.0);
    CHECK(forward_angle(c, p, g, 0.0) == doctest::Approx(oracle::pi).epsilon(1e-3));
}

TEST_CASE("geodesic start needs unit speed") {
    auto c = chart("euclidean");
    try {
        integrate_geodesic(c, vec2(0, 0), vec2(2, 0), 0.5);
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ConfigInvalid);
    }
}

TEST_CASE("geodesic leaving the domain is flagged") {
    auto c = chart("euclidean");
    auto g = integrate_geodesic(c, vec2(0, 0), vec2(1, 0), 3.0);
    CHECK(g.exited);
    CHECK(g.s_exit == doctest::Approx(1.0).epsilon(1e-3));
    CHECK_THROWS_AS(g.require_inside(), Error);
}

TEST_CASE("sphere geodesics keep unit speed") {
    auto c = chart("sphere", {{"k", 1.0}}, 3);
    Vec x0 = vec2(0.1, 0.2);
    Vec v0 = vec2(1, 0.5);
    v0 /= c.F(x0, v0);
    auto g = integrate_geodesic(c, x0, v0, 1.5);
    REQUIRE_FALSE(g.exited);
    CHECK(g.max_speed_drift(c) <= 1e-8);
    // arclength between endpoints on the sphere
    double chord = std::acos(to_sphere(g.samples.front().x).dot(to_sphere(g.back().x)));
    CHECK(chord == doctest::Approx(1.5).epsilon(1e-7));
}

TEST_CASE("reverse geodesic check") {
    auto flat = chart("randers", {{"b1", 0.3}});
    Vec v = vec2(1, 0.5);
    v /= flat.F(vec2(0, 0), v);
    CHECK(reverse_geodesic_check(flat, integrate_geodesic(flat, vec2(0, 0), v, 0.8)).is_geodesic);
    auto curl = chart("randers", {{"B12", 0.4}, {"B21", -0.4}});
    v /= curl.F(vec2(0, 0), v);
    auto r = reverse_geodesic_check(curl, integrate_geodesic(curl, vec2(0, 0), v, 0.8));
    CHECK_FALSE(r.is_geodesic);
    CHECK(r.residual > 1e-4);
}

TEST_CASE("radial curvature bound on a warped chart over its own model") {
    model::SurfaceSpec s;
    s.t_max = 3;
    auto m = std::make_shared<const model::ModelSurface>(model::make_surface(s));
    auto c = warped_polar_chart(m, 1.7);
    auto r = radial_bound_check(c, *m, vec2(0, 0), {0.5, 0.9, 1.3}, 4);
    CHECK(std::abs(r.min_margin) <= 1e-4);
    CHECK(r.rows.size() > 0);
}
