#pragma once

// Closed forms used as independent references by the tests. Nothing here
// calls into the library's numerics.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

constexpr double pi = 3.14159265358979323846;

// Brioschi formula for the skew chart
// E = 1 + a v^2, F = b sin(u + v), G = 1 + a u^2, all derivatives by hand.
inline double skew_gauss_curvature(double a, double b, double u, double v) {
    double E = 1 + a * v * v, F = b * std::sin(u + v), G = 1 + a * u * u;
    double Eu = 0, Ev = 2 * a * v, Evv = 2 * a;
    double Fu = b * std::cos(u + v), Fv = Fu, Fuv = -b * std::sin(u + v);
    double Gu = 2 * a * u, Gv = 0, Guu = 2 * a;
    Eigen::Matrix3d m1, m2;
    m1 << -0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev,
          Fv - 0.5 * Gu, E, F,
          0.5 * Gv, F, G;
    m2 << 0, 0.5 * Ev, 0.5 * Gu,
          0.5 * Ev, E, F,
          0.5 * Gu, F, G;
    double W = E * G - F * F;
    return (m1.determinant() - m2.determinant()) / (W * W);
}

// Fundamental tensor of F = alpha + beta with alpha Euclidean:
// g_ij = (F/alpha)(delta_ij - l_i l_j) + (l_i + b_i)(l_j + b_j), l = y/|y|.
inline Eigen::MatrixXd randers_tensor(const Eigen::VectorXd& b, const Eigen::VectorXd& y) {
    const int n = static_cast<int>(y.size());
    double alpha = y.norm();
    double F = alpha + b.dot(y);
    Eigen::VectorXd l = y / alpha;
    Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    return (F / alpha) * (I - l * l.transpose()) + (l + b) * (l + b).transpose();
}

// Conformal metric g = lambda(x)^2 I with lambda = 2 / (1 + k|x|^2):
// Gamma^i_jk = d_ij s_k + d_ik s_j - d_jk s_i, s = grad log lambda.
inline std::vector<Eigen::MatrixXd> sphere_christoffel(double k, const Eigen::VectorXd& x) {
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd s = -2 * k * x / (1 + k * x.squaredNorm());
    std::vector<Eigen::MatrixXd> out(n, Eigen::MatrixXd::Zero(n, n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int l = 0; l < n; ++l)
                out[i](j, l) = (i == j ? s[l] : 0.0) + (i == l ? s[j] : 0.0) - (j == l ? s[i] : 0.0);
    return out;
}

// interior angle opposite to side c
inline double law_of_cosines(double a, double b, double c) {
    return std::acos(std::clamp((a * a + b * b - c * c) / (2 * a * b), -1.0, 1.0));
}

// hyperbolic plane of curvature -1
inline double hyperbolic_side(double a, double b, double gamma) {
    return std::acosh(std::cosh(a) * std::cosh(b) - std::sinh(a) * std::sinh(b) * std::cos(gamma));
}

// inner-product angle at x between x->p and x->y
inline double euclid_angle(const Eigen::VectorXd& p, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    Eigen::VectorXd u = p - x, w = y - x;
    return std::acos(std::clamp(u.dot(w) / (u.norm() * w.norm()), -1.0, 1.0));
}

// f(t) = exp(-t^2) tanh t and its derivative
inline double gauss_tanh_f(double t) { return std::exp(-t * t) * std::tanh(t); }
inline double gauss_tanh_df(double t) {
    double c = std::cosh(t);
    return std::exp(-t * t) * (1 / (c * c) - 2 * t * std::tanh(t));
}

// zero of f' by bisection
inline double gauss_tanh_rho() {
    double lo = 0.1, hi = 2.0;
    for (int i = 0; i < 200; ++i) {
        double m = 0.5 * (lo + hi);
        (gauss_tanh_df(m) > 0 ? lo : hi) = m;
    }
    return 0.5 * (lo + hi);
}

} // namespace oracle
