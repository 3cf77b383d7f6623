#pragma once

#include <random>

#include "semiqed/modes.hpp"
#include "semiqed/phasespace.hpp"

namespace support {

using namespace semiqed;

inline modes::ModeModel one_mode(double omega, cplx c1, cplx c2, cplx c3, Vec3 beta) {
    modes::ModeModel m;
    m.W = RMat::Constant(1, 1, omega);
    m.coupling = {{CVec::Constant(1, c1), CVec::Constant(1, c2), CVec::Constant(1, c3)}};
    m.beta = beta;
    m.positions = {Vec3::Zero()};
    m.validate();
    return m;
}

inline modes::ModeModel weak_model() { return one_mode(1.0, {0.3, 0.1}, {0.0, 0.25}, {-0.1, 0.2}, Vec3(0.2, 0.0, 0.5)); }

inline modes::ModeModel two_mode_two_spin() {
    modes::ModeModel m;
    m.W = (RMat(2, 2) << 1.0, 0.2, 0.2, 1.5).finished();
    CVec a(2), b(2), c(2), d(2);
    a << cplx(0.2, 0.1), cplx(-0.1, 0.05);
    b << cplx(0.0, 0.15), cplx(0.1, 0.0);
    c << cplx(0.05, -0.1), cplx(0.0, 0.2);
    d << cplx(0.1, 0.1), cplx(0.2, -0.1);
    m.coupling = {{a, b, c}, {d, c, a}};
    m.beta = Vec3(0.1, -0.2, 0.4);
    m.positions = {Vec3::Zero(), Vec3(0.3, 0, 0)};
    m.validate();
    return m;
}

/// The ell = 1 curl multiplet at m = 0 with one spin at the origin; couplings scaled by `scale`.
inline modes::ModeModel curl_triplet(double beta3, double scale = 1.0) {
    io::json modes = io::json::array();
    for (int member : {-1, 0, 1}) modes.push_back({{"m", 0}, {"ell", 1}, {"family", "curl"}, {"member", member}});
    auto m = modes::build_mode_model(
        {{"kind", "computed"}, {"modes", modes}, {"positions", {{0.0, 0.0, 0.0}}}, {"beta", {0.0, 0.0, beta3}}});
    for (auto& per : m.coupling)
        for (auto& c : per) c *= scale;
    return m;
}

inline ps::PhasePoint random_point(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    RVec q(static_cast<Eigen::Index>(n)), p(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < Eigen::Index(n); ++i) {
        q(i) = g(rng);
        p(i) = g(rng);
    }
    return {q, p};
}

} // namespace support
