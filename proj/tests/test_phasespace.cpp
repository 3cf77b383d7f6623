#include <catch_amalgamated.hpp>

#include <random>

#include "semiqed/phasespace.hpp"

using namespace semiqed;
using namespace semiqed::ps;

namespace {

RMat random_spd(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> g;
    RMat a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = g(rng);
    return a * a.transpose() + RMat::Identity(n, n);
}

PhasePoint random_point(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    RVec q(n), p(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        q(i) = g(rng);
        p(i) = g(rng);
    }
    return {q, p};
}

} // namespace

TEST_CASE("free flow on a single mode rotates (q, p)", "[phasespace]") {
    const double w = 1.7;
    RMat wm(1, 1);
    wm << w;
    const PhasePoint x(RVec::Constant(1, 0.8), RVec::Constant(1, -0.3));
    for (double t : {0.0, 0.4, -1.3, 2.9}) {
        const PhasePoint y = free_flow(wm, t, x);
        CHECK(std::abs(y.q(0) - (std::cos(t * w) * 0.8 + std::sin(t * w) * -0.3)) < 1e-14);
        CHECK(std::abs(y.p(0) - (-std::sin(t * w) * 0.8 + std::cos(t * w) * -0.3)) < 1e-14);
    }
    const PhasePoint qonly(RVec::Constant(1, 2.0), RVec::Zero(1));
    const PhasePoint quarter = free_flow(wm, pi / (2 * w), qonly);
    CHECK(std::abs(quarter.q(0)) < 1e-14);
    CHECK(std::abs(quarter.p(0) + 2.0) < 1e-14);
}

TEST_CASE("free flow group law, isometry and symplectic invariance", "[phasespace]") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const RMat w = random_spd(rng, 3);
        const FreeFlow flow(w);
        const PhasePoint x = random_point(rng, 3), y = random_point(rng, 3);
        const double t = 0.7 * trial - 2.0, s = 1.1 - 0.3 * trial;
        const PhasePoint a = flow(t + s, x), b = flow(t, flow(s, x));
        CHECK((a - b).norm2() < 1e-24);
        CHECK((flow(0.0, x) - x).norm2() == 0.0);
        CHECK(std::abs(flow(t, x).norm2() - x.norm2()) < 1e-12);
        CHECK(std::abs(symplectic(flow(t, x), flow(t, y)) - symplectic(x, y)) < 1e-12);
        // Real matrix form agrees with the complex view.
        CHECK((flow.real_matrix(t) * x.stacked() - flow(t, x).stacked()).norm() < 1e-12);
    }
}

TEST_CASE("coherent overlap", "[phasespace]") {
    std::mt19937_64 rng(11);
    const double h = 0.3;
    const PhasePoint x = random_point(rng, 2), y = random_point(rng, 2);
    CHECK(std::abs(coherent_overlap(x, x, h) - 1.0) < 1e-15);
    CHECK(std::abs(coherent_overlap(y, x, h) - std::conj(coherent_overlap(x, y, h))) < 1e-14);
    CHECK(std::abs(std::abs(coherent_overlap(x, y, h)) - std::exp(-(x - y).norm2() / (4 * h))) < 1e-15);
    CHECK(std::abs(coherent_overlap(x, y, h)) < 1.0);
    CHECK_THROWS_AS(coherent_overlap(x, y, 0.0), ContractError);
}

TEST_CASE("linear Poisson bracket", "[phasespace]") {
    const auto q1 = LinearSymbol::q_form(2, 0), p1 = LinearSymbol::p_form(2, 0);
    CHECK(poisson_bracket_linear(q1, p1) == -1.0);
    CHECK(poisson_bracket_linear(p1, q1) == 1.0);

    std::mt19937_64 rng(3);
    const PhasePoint ca = random_point(rng, 3), cb = random_point(rng, 3);
    const LinearSymbol f{ca.q, ca.p}, g{cb.q, cb.p};
    CHECK(poisson_bracket_linear(f, f) == 0.0);

    // Finite-difference symplectic bracket at a random base point.
    const PhasePoint x = random_point(rng, 3);
    const double d = 1e-3;
    double fd = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        const auto dfq = (f(x.shifted(k, d)) - f(x.shifted(k, -d))) / (2 * d);
        const auto dfp = (f(x.shifted(3 + k, d)) - f(x.shifted(3 + k, -d))) / (2 * d);
        const auto dgq = (g(x.shifted(k, d)) - g(x.shifted(k, -d))) / (2 * d);
        const auto dgp = (g(x.shifted(3 + k, d)) - g(x.shifted(3 + k, -d))) / (2 * d);
        fd += dfp * dgq - dfq * dgp;
    }
    CHECK(std::abs(fd - poisson_bracket_linear(f, g)) < 1e-10);
}

TEST_CASE("linear symbols are covariant under the free flow", "[phasespace]") {
    std::mt19937_64 rng(5);
    const RMat w = random_spd(rng, 3);
    const FreeFlow flow(w);
    const PhasePoint c = random_point(rng, 3);
    const LinearSymbol f{c.q, c.p, 0.25};
    for (double t : {0.3, -1.7, 4.0}) {
        const PhasePoint x = random_point(rng, 3);
        CHECK(std::abs(f(flow(t, x)) - f.pushed(flow, t)(x)) < 1e-12);
    }
}

TEST_CASE("matrix bracket against a jet", "[phasespace]") {
    const CMat s1 = pauli::sigma(1), s2 = pauli::sigma(2), s3 = pauli::sigma(3);
    // G(q, p) = q^2 s1 + sin(p) s2 + q p s3, one mode.
    const auto g = [&](double q, double p) -> CMat { return q * q * s1 + std::sin(p) * s2 + q * p * s3; };
    const double q0 = 0.4, p0 = -0.7;
    MatrixJet jet;
    jet.base = PhasePoint(RVec::Constant(1, q0), RVec::Constant(1, p0));
    jet.order = 1;
    jet.value = g(q0, p0);
    jet.first = {2 * q0 * s1 + p0 * s3, std::cos(p0) * s2 + q0 * s3};

    MatrixLinearSymbol h{CMat::Zero(2, 2), {s1 + 0.5 * s3}, {s2 - s3}};
    const CMat br = poisson_bracket_linear_vs_jet(h, jet);

    const double d = 1e-4;
    const CMat dq = (g(q0 + d, p0) - g(q0 - d, p0)) / (2 * d);
    const CMat dp = (g(q0, p0 + d) - g(q0, p0 - d)) / (2 * d);
    const CMat fd = h.b[0] * dq - h.a[0] * dp;
    CHECK(max_abs(br - fd) < 1e-8);

    MatrixLinearSymbol zero{CMat::Zero(2, 2), {CMat::Zero(2, 2)}, {CMat::Zero(2, 2)}};
    CHECK(max_abs(poisson_bracket_linear_vs_jet(zero, jet)) == 0.0);

    MatrixJet constant = jet;
    constant.first = {CMat::Zero(2, 2), CMat::Zero(2, 2)};
    CHECK(max_abs(poisson_bracket_linear_vs_jet(h, constant)) == 0.0);

    MatrixJet bare = jet;
    bare.order = 0;
    CHECK_THROWS_AS(poisson_bracket_linear_vs_jet(h, bare), ContractError);
}

TEST_CASE("heat operator: moments, linearity, monotonicity", "[phasespace]") {
    const PhasePoint x(RVec::Constant(1, 0.6), RVec::Constant(1, -0.2));
    const double h = 0.3;
    const auto one = [](const PhasePoint&) -> CMat { return CMat::Constant(1, 1, 2.5); };
    CHECK(std::abs(heat_apply(one, x, h)(0, 0) - 2.5) < 1e-13);

    const auto sq = [](const PhasePoint& y) -> CMat { return CMat::Constant(1, 1, y.q(0) * y.q(0)); };
    CHECK(std::abs(heat_apply(sq, x, h)(0, 0) - (0.36 + h / 2)) < 1e-13);

    const auto f1 = [](const PhasePoint& y) -> CMat { return CMat::Constant(1, 1, std::cos(y.q(0)) * y.p(0)); };
    const auto f2 = [](const PhasePoint& y) -> CMat { return CMat::Constant(1, 1, std::exp(-y.norm2())); };
    const auto combo = [&](const PhasePoint& y) -> CMat { return 2.0 * f1(y) - 3.0 * f2(y); };
    CHECK(std::abs(heat_apply(combo, x, h)(0, 0) - (2.0 * heat_apply(f1, x, h)(0, 0) - 3.0 * heat_apply(f2, x, h)(0, 0))) <
          1e-13);
    CHECK(heat_apply(f2, x, h)(0, 0).real() >= 0.0);
    const auto bigger = [&](const PhasePoint& y) -> CMat { return f2(y) + CMat::Constant(1, 1, y.q(0) * y.q(0)); };
    CHECK(heat_apply(bigger, x, h)(0, 0).real() >= heat_apply(f2, x, h)(0, 0).real());
}

TEST_CASE("heat operator: quadrature and Taylor agree to second order", "[phasespace]") {
    // F = exp(-(q^2 + 2 p^2)/2) with its exact Laplacian.
    const auto f = [](const PhasePoint& y) -> CMat {
        return CMat::Constant(1, 1, std::exp(-(y.q(0) * y.q(0) + 2 * y.p(0) * y.p(0)) / 2));
    };
    const PhasePoint x(RVec::Constant(1, 0.5), RVec::Constant(1, 0.3));
    MatrixJet jet;
    jet.base = x;
    jet.order = 2;
    const double q = 0.5, p = 0.3, v = std::exp(-(q * q + 2 * p * p) / 2);
    jet.value = CMat::Constant(1, 1, v);
    jet.first = {CMat::Constant(1, 1, -q * v), CMat::Constant(1, 1, -2 * p * v)};
    jet.second = {CMat::Constant(1, 1, (q * q - 1) * v), CMat::Constant(1, 1, 2 * q * p * v),
                  CMat::Constant(1, 1, 2 * q * p * v), CMat::Constant(1, 1, (4 * p * p - 2) * v)};
    std::vector<double> hs{0.4, 0.2, 0.1, 0.05}, err;
    for (double h : hs) err.push_back(std::abs((heat_apply(f, x, h) - heat_apply(jet, h))(0, 0)));
    const double slope = loglog_slope(hs, err);
    CHECK(slope >= 1.7);
    CHECK(slope <= 2.3);
}

TEST_CASE("heat quadrature refuses high dimension", "[phasespace]") {
    const auto f = [](const PhasePoint&) -> CMat { return CMat::Identity(1, 1); };
    CHECK_THROWS_AS(heat_apply(f, PhasePoint::zero(5), 0.1), UnsupportedError);
    CHECK_THROWS_WITH(heat_apply(f, PhasePoint::zero(5), 0.1), Catch::Matchers::ContainsSubstring("Taylor"));
    MatrixJet j1;
    j1.base = PhasePoint::zero(1);
    j1.order = 1;
    j1.value = CMat::Identity(1, 1);
    CHECK_THROWS_AS(heat_apply(j1, 0.1), ContractError);
}

TEST_CASE("symbol grid CSV", "[phasespace]") {
    const auto f = [](const PhasePoint& y) -> CMat { return CMat::Constant(1, 1, cplx(y.q(0), y.p(0))); };
    const std::string csv = symbol_grid_csv(f, {PhasePoint::zero(1), PhasePoint(RVec::Constant(1, 1.0), RVec::Constant(1, 2.0))});
    CHECK(csv == "q0,p0,re_00,im_00\n0,0,0,0\n1,2,1,2\n");
}
