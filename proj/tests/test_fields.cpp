#include <catch_amalgamated.hpp>

#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "semiqed/fields.hpp"

using namespace semiqed;
using namespace semiqed::fields;

namespace {

ContinuumSample sample_a() { return tangent_gaussian(Vec3(0.3, -0.2, 0.5), Vec3(-0.1, 0.4, 0.2)); }

/// Explicit B_3^free integrand, integrated on an independent rule (uniform radial panels, finer sphere).
double b3_free_oracle(const Cutoff& chi, const Vec3& x, double t, const ContinuumSample& s) {
    const auto sphere = quad::sphere_product(40, 80);
    const double lo = chi.r0, hi = 14.0;
    const std::size_t panels = 300;
    const auto base = quad::gauss_legendre(8);
    double acc = 0.0;
    for (std::size_t p = 0; p < panels; ++p) {
        const double a = lo + (hi - lo) * double(p) / double(panels), b = lo + (hi - lo) * double(p + 1) / double(panels);
        for (std::size_t i = 0; i < base.size(); ++i) {
            const double r = 0.5 * (a + b) + 0.5 * (b - a) * base.nodes[i];
            const double wr = 0.5 * (b - a) * base.weights[i];
            const double radial = chi(r) * std::sqrt(r) * r * r / r;
            if (radial == 0.0) continue;
            for (std::size_t q = 0; q < sphere.size(); ++q) {
                const Vec3 k = r * sphere.points[q];
                const Vec3 qq = s.q(k), pp = s.p(k);
                const double ph = k.dot(x) - t * r;
                acc += wr * sphere.weights[q] * radial *
                       (-std::sin(ph) * (k(0) * qq(1) - k(1) * qq(0)) - std::cos(ph) * (k(0) * pp(1) - k(1) * pp(0)));
            }
        }
    }
    return acc * std::pow(2.0 * pi, -1.5);
}

} // namespace

TEST_CASE("field symbols vanish at the origin of phase space", "[fields]") {
    const Cutoff chi;
    const ContinuumField cf(chi);
    const ContinuumSample zero{[](const Vec3&) -> Vec3 { return Vec3::Zero(); }, [](const Vec3&) -> Vec3 { return Vec3::Zero(); }};
    for (auto kind : {FieldKind::magnetic, FieldKind::electric}) {
        CHECK(cf.eval(kind, Vec3(0.3, 0.1, 0.0), 0.4, cf.bind(zero)).norm() == 0.0);
    }
    const ModeField mf(mode_block(2, 1), chi);
    const auto origin = PhasePoint::zero(mf.n_modes());
    CHECK(mf.eval(FieldKind::electric, Vec3(0.1, 0, 0), 1.0, origin).norm() == 0.0);
    CHECK_THROWS_AS(mf.eval(FieldKind::magnetic, 0, Vec3::Zero(), 0.0, origin), ContractError);
    CHECK(parse_kind("E") == FieldKind::electric);
    CHECK_THROWS_AS(parse_kind("X"), ConfigError);
}

TEST_CASE("explicit B3 free formula", "[fields]") {
    const Cutoff chi;
    const ContinuumField cf(chi);
    const auto s = sample_a();
    for (const auto& [x, t] : std::vector<std::pair<Vec3, double>>{{Vec3(0.2, -0.1, 0.4), 0.0}, {Vec3(-0.5, 0.3, 0.1), 1.3}}) {
        const double got = cf.eval(FieldKind::magnetic, 3, x, t, s);
        const double want = b3_free_oracle(chi, x, t, s);
        CHECK(std::abs(got - want) <= 1e-6 * std::abs(want));
    }
}

TEST_CASE("electric field is minus magnetic after helicity", "[fields]") {
    const Cutoff chi;
    const ContinuumField cf(chi);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 5; ++trial) {
        const auto s = tangent_gaussian(Vec3(g(rng), g(rng), g(rng)), Vec3(g(rng), g(rng), g(rng)), 1.0 + 0.3 * trial);
        const Vec3 x(g(rng), g(rng), g(rng));
        const double t = g(rng);
        const Vec3 e = cf.eval(FieldKind::electric, x, t, cf.bind(s));
        const Vec3 b = cf.eval(FieldKind::magnetic, x, t, cf.bind(helicity(s)));
        CHECK((e + b).norm() <= 1e-10 * std::max(1.0, e.norm()));
    }
    // Mode representation: E coefficients are the helicity matrix applied to B coefficients.
    const ModeField mf(mode_block(3, 2), chi);
    const RMat j = mf.helicity_matrix();
    CHECK(max_abs(j + j.transpose()) < 1e-12);
    CHECK(max_abs(j * j + RMat::Identity(j.rows(), j.cols())) < 1e-10);
    const Vec3 x(0.2, -0.3, 0.1);
    const auto b = mf.coefficients(FieldKind::magnetic, x), e = mf.coefficients(FieldKind::electric, x);
    for (std::size_t c = 0; c < 3; ++c) CHECK(max_abs(j.cast<cplx>() * b[c] - e[c]) < 1e-10);
}

TEST_CASE("free evolution covariance", "[fields]") {
    const Cutoff chi;
    const ContinuumField cf(chi);
    const auto s = sample_a();
    const Vec3 x(0.1, 0.4, -0.2);
    for (double t : {0.6, -1.1})
        for (auto kind : {FieldKind::magnetic, FieldKind::electric}) {
            const Vec3 a = cf.eval(kind, x, t, cf.bind(s));
            const Vec3 b = cf.eval(kind, x, 0.0, cf.bind(flow_sample(s, t)));
            CHECK((a - b).norm() < 1e-10);
        }

    const ModeField mf(mode_block(2, 1), chi);
    const PhasePoint pt(RVec::LinSpaced(Eigen::Index(mf.n_modes()), -0.5, 0.5), RVec::LinSpaced(Eigen::Index(mf.n_modes()), 0.3, -0.2));
    const ps::FreeFlow flow(mf.W());
    CHECK((mf.eval(FieldKind::magnetic, x, 0.0, pt) - mf.eval(FieldKind::magnetic, x, 0.0, flow(0.0, pt))).norm() == 0.0);
    CHECK((mf.eval(FieldKind::magnetic, x, 0.9, pt) - mf.eval(FieldKind::magnetic, x, 0.0, flow(0.9, pt))).norm() < 1e-12);
    CHECK(std::abs(mf.symbol(FieldKind::electric, 2, x, 0.9)(pt) - mf.eval(FieldKind::electric, 2, x, 0.9, pt)) < 1e-12);
}

TEST_CASE("continuum and mode representations agree on the mode span", "[fields]") {
    const Cutoff chi;
    const ModeField mf(mode_block(3, 1), chi);
    const ContinuumField cf(chi, {14.0, 240, 24, 48});
    const auto n = Eigen::Index(mf.n_modes());
    const PhasePoint pt(RVec::LinSpaced(n, -0.6, 0.4), RVec::LinSpaced(n, 0.2, -0.5));
    const auto& space = mf.space();
    const ContinuumSample s{[&](const Vec3& k) -> Vec3 {
                                Vec3 v = Vec3::Zero();
                                for (Eigen::Index i = 0; i < n; ++i) v += pt.q(i) * space.eval_mode(std::size_t(i), k);
                                return v;
                            },
                            [&](const Vec3& k) -> Vec3 {
                                Vec3 v = Vec3::Zero();
                                for (Eigen::Index i = 0; i < n; ++i) v += pt.p(i) * space.eval_mode(std::size_t(i), k);
                                return v;
                            }};
    const auto bound = cf.bind(s);
    for (const Vec3& x : {Vec3(0, 0, 0), Vec3(0.3, -0.2, 0.5)})
        for (auto kind : {FieldKind::magnetic, FieldKind::electric})
            CHECK((cf.eval(kind, x, 0.0, bound) - mf.eval(kind, x, 0.0, pt)).norm() < 1e-9);
}

TEST_CASE("rho", "[fields]") {
    const Cutoff chi;
    const double oracle = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                              [&](double r) { return chi(r) * chi(r) * r * r; }, chi.r0, 60.0, 15, 1e-14) *
                          4 * pi / std::pow(2 * pi, 3.0);
    CHECK(std::abs(rho_eval(Vec3::Zero(), chi) - oracle) < 1e-12 * oracle);
    const Vec3 x(0.3, -0.7, 1.1);
    const double d = x.norm();
    const double at_x = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                            [&](double r) { return chi(r) * chi(r) * r * r * std::sin(r * d) / (r * d); }, chi.r0, 60.0, 15,
                            1e-14) *
                        4 * pi / std::pow(2 * pi, 3.0);
    CHECK(std::abs(rho_eval(x, chi) - at_x) < 1e-12 * oracle);
    CHECK(rho_eval(x, chi) == rho_eval(-x, chi));
    for (double r : {0.5, 1.0, 3.0, 7.0}) CHECK(std::abs(rho_eval(Vec3(r, 0, 0), chi)) <= rho_eval(Vec3::Zero(), chi));
    CHECK(rho_eval(x, Cutoff::zero()) == 0.0);
}

TEST_CASE("commutators of field symbols", "[fields]") {
    const Cutoff chi;
    modes::QuadratureSettings q;
    q.radial_nodes = 400;
    const auto rows = commutator_check(Vec3::Zero(), Vec3(0, 0, 1), chi, {4, 8, 16}, 1, q);
    REQUIRE(rows.size() == 3);
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].rel_error < rows[i - 1].rel_error);
    CHECK(rows.back().rel_error < 0.05);
    for (const auto& r : rows) {
        CHECK(r.same_kind_max < 1e-12);
        CHECK(r.same_index_max < 1e-12);
    }
    const std::string csv = commutator_csv(rows);
    CHECK(csv.substr(0, csv.find('\n')) == "radial_modes,n_modes,value,expected,rel_error,same_kind_max,same_index_max");

    const ModeField mf(mode_block(2, 1), chi);
    const auto f = mf.symbol(FieldKind::electric, 1, Vec3::Zero(), 0.0), g = mf.symbol(FieldKind::magnetic, 2, Vec3(0, 0, 1), 0.0);
    CHECK(segal_commutator(f, g, 0.2) * 2.0 == segal_commutator(f, g, 0.4));
}

TEST_CASE("Maxwell residuals converge at second order", "[fields]") {
    const Cutoff chi;
    const ContinuumField cf(chi);
    const std::vector<Vec3> xs{Vec3(0.1, 0.2, -0.3), Vec3(0.5, -0.4, 0.1)};
    const std::vector<double> ts{0.0, 0.7};
    const double d0 = default_spacing(chi);
    const std::vector<double> spacings{4 * d0, 2 * d0, d0};
    const auto rows = maxwell_study(continuum_evaluator(cf, sample_a()), xs, ts, spacings);
    for (auto member : {&MaxwellRow::div_b, &MaxwellRow::div_e, &MaxwellRow::faraday, &MaxwellRow::ampere}) {
        const double order = maxwell_order(rows, member);
        CHECK(order >= 1.7);
        CHECK(order <= 2.3);
    }
    const ContinuumSample zero{[](const Vec3&) -> Vec3 { return Vec3::Zero(); }, [](const Vec3&) -> Vec3 { return Vec3::Zero(); }};
    const auto z = maxwell_residuals(continuum_evaluator(cf, zero), xs, ts, d0);
    CHECK(z.div_b == 0.0);
    CHECK(z.div_e == 0.0);
    CHECK(z.faraday == 0.0);
    CHECK(z.ampere == 0.0);

    // Mode truncation: divergences converge the same way.
    const ModeField mf(mode_block(3, 1), chi);
    const PhasePoint pt(RVec::LinSpaced(Eigen::Index(mf.n_modes()), -0.5, 0.5), RVec::LinSpaced(Eigen::Index(mf.n_modes()), 0.3, -0.2));
    const auto mrows = maxwell_study(mode_evaluator(mf, pt), xs, ts, spacings);
    CHECK(std::abs(maxwell_order(mrows, &MaxwellRow::div_b) - 2.0) < 0.3);
    CHECK(std::abs(maxwell_order(mrows, &MaxwellRow::div_e) - 2.0) < 0.3);
    CHECK(maxwell_csv(rows).substr(0, 36) == "spacing,div_b,div_e,faraday,ampere\n0");
    CHECK_THROWS_AS(maxwell_residuals(continuum_evaluator(cf, zero), xs, ts, 0.0), ContractError);
}
