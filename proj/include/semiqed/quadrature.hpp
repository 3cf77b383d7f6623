#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "semiqed/linalg.hpp"

namespace semiqed::quad {

struct Rule1D {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::size_t size() const { return nodes.size(); }
};

namespace detail {

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix, weights mu0 * (first eigvec component)^2.
inline Rule1D golub_welsch(const std::vector<double>& diag, const std::vector<double>& offdiag, double mu0) {
    const auto n = static_cast<Eigen::Index>(diag.size());
    RMat jac = RMat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        jac(i, i) = diag[std::size_t(i)];
        if (i + 1 < n) {
            jac(i, i + 1) = offdiag[std::size_t(i)];
            jac(i + 1, i) = offdiag[std::size_t(i)];
        }
    }
    Eigen::SelfAdjointEigenSolver<RMat> es(jac);
    if (es.info() != Eigen::Success) throw SolverError("Golub-Welsch eigensolver failed");
    Rule1D r;
    r.nodes.resize(std::size_t(n));
    r.weights.resize(std::size_t(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        r.nodes[std::size_t(i)] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        r.weights[std::size_t(i)] = mu0 * v0 * v0;
    }
    return r;
}

} // namespace detail

/// n-point Gauss-Legendre rule on [a, b].
inline Rule1D gauss_legendre(std::size_t n, double a = -1.0, double b = 1.0) {
    if (n == 0) throw ContractError("Gauss-Legendre needs at least one node");
    std::vector<double> d(n, 0.0), e(n > 0 ? n - 1 : 0);
    for (std::size_t k = 1; k < n; ++k) {
        const double kk = double(k);
        e[k - 1] = kk / std::sqrt(4.0 * kk * kk - 1.0);
    }
    Rule1D r = detail::golub_welsch(d, e, 2.0);
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (std::size_t i = 0; i < n; ++i) {
        r.nodes[i] = mid + half * r.nodes[i];
        r.weights[i] *= half;
    }
    return r;
}

/// Composite Gauss-Legendre on [a, b] with panels graded geometrically toward a:
/// [a + L 2^{-k-1}, a + L 2^{-k}] for k < levels, plus [a, a + L 2^{-levels}].
/// Suited to integrands with an essential zero such as exp(-1/(r - a)) at the left end.
inline Rule1D graded_gauss_legendre(double a, double b, std::size_t total_nodes, std::size_t levels = 12) {
    if (!(b > a) || levels == 0) throw ContractError("graded rule needs b > a and levels >= 1");
    const std::size_t per = std::max<std::size_t>(4, total_nodes / (levels + 1));
    const Rule1D base = gauss_legendre(per);
    const double len = b - a;
    Rule1D r;
    double hi = b;
    for (std::size_t k = 0; k <= levels; ++k) {
        const double lo = k == levels ? a : a + len * std::ldexp(1.0, -int(k) - 1);
        const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
        for (std::size_t i = 0; i < per; ++i) {
            r.nodes.push_back(mid + half * base.nodes[i]);
            r.weights.push_back(half * base.weights[i]);
        }
        hi = lo;
    }
    return r;
}

/// n-point Gauss-Hermite rule for the weight exp(-x^2).
inline Rule1D gauss_hermite(std::size_t n) {
    if (n == 0) throw ContractError("Gauss-Hermite needs at least one node");
    std::vector<double> d(n, 0.0), e(n > 0 ? n - 1 : 0);
    for (std::size_t k = 1; k < n; ++k) e[k - 1] = std::sqrt(double(k) / 2.0);
    return detail::golub_welsch(d, e, std::sqrt(pi));
}

/// Rule for E[f(G)], G ~ N(0, variance).
inline Rule1D gaussian_expectation(std::size_t n, double variance) {
    Rule1D r = gauss_hermite(n);
    const double s = std::sqrt(2.0 * variance);
    for (std::size_t i = 0; i < n; ++i) {
        r.nodes[i] *= s;
        r.weights[i] /= std::sqrt(pi);
    }
    return r;
}

/// Product rule on the unit sphere: Gauss-Legendre in cos(theta) times the
/// trapezoid rule in phi. Integrates spherical polynomials of degree
/// <= min(2*n_theta - 1, n_phi - 1) exactly; total weight 4*pi.
struct SphereRule {
    std::vector<Vec3> points;
    std::vector<double> weights;
    std::size_t n_theta = 0;
    std::size_t n_phi = 0;

    std::size_t size() const { return points.size(); }
    /// Largest polynomial degree integrated exactly.
    std::size_t exact_degree() const { return std::min(2 * n_theta - 1, n_phi - 1); }
};

inline SphereRule sphere_product(std::size_t n_theta, std::size_t n_phi) {
    if (n_theta == 0 || n_phi == 0) throw ContractError("sphere rule needs nodes in both directions");
    const Rule1D gl = gauss_legendre(n_theta);
    SphereRule s;
    s.n_theta = n_theta;
    s.n_phi = n_phi;
    s.points.reserve(n_theta * n_phi);
    s.weights.reserve(n_theta * n_phi);
    const double dphi = 2.0 * pi / double(n_phi);
    for (std::size_t i = 0; i < n_theta; ++i) {
        const double ct = gl.nodes[i];
        const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
        for (std::size_t j = 0; j < n_phi; ++j) {
            const double phi = dphi * double(j);
            s.points.emplace_back(st * std::cos(phi), st * std::sin(phi), ct);
            s.weights.push_back(gl.weights[i] * dphi);
        }
    }
    return s;
}

} // namespace semiqed::quad
