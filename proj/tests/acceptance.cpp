// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <cstdio>
#include <sstream>

#include "semiqed/commands.hpp"

using namespace semiqed;
namespace fs = std::filesystem;
using ps::PhasePoint;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

modes::ModeModel one_mode(cplx c1, cplx c2, cplx c3, Vec3 beta) {
    modes::ModeModel m;
    m.W = RMat::Constant(1, 1, 1.0);
    m.coupling = {{CVec::Constant(1, c1), CVec::Constant(1, c2), CVec::Constant(1, c3)}};
    m.beta = beta;
    m.positions = {Vec3::Zero()};
    m.validate();
    return m;
}

modes::ModeModel weak() { return one_mode({0.3, 0.1}, {0.0, 0.25}, {-0.1, 0.2}, Vec3(0.2, 0.0, 0.5)); }

std::vector<PhasePoint> five_points() {
    std::vector<PhasePoint> pts;
    for (auto [q, p] : std::vector<std::pair<double, double>>{{0, 0}, {0.5, 0}, {0, 0.5}, {-0.4, 0.3}, {0.3, -0.6}})
        pts.emplace_back(RVec::Constant(1, q), RVec::Constant(1, p));
    return pts;
}

void larmor(Outcome& o) {
    const double b3 = 0.8, h = 0.2;
    const auto m = one_mode(0, 0, 0, Vec3(0, 0, b3));
    const auto basis = std::make_shared<fock::FockBasis>(1, 8, 1);
    const std::vector<double> times{0.0, 0.5, 1.3, 3.0, -2.2};
    const PhasePoint x(RVec::Constant(1, 0.4), RVec::Constant(1, -0.7));
    auto g0 = hier::solve_g0(m, x, std::vector<double>(times.begin(), times.end() - 1));
    g0.push_back(hier::solve_g0(m, x, times.back()));
    double dev_g = 0.0, dev_u = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        CMat exact = CMat::Zero(2, 2);
        exact(0, 0) = std::exp(-I_unit * b3 * times[i]);
        exact(1, 1) = std::exp(I_unit * b3 * times[i]);
        dev_g = std::max(dev_g, max_abs(g0[i] - exact));
        const CMat u = fock::reduced_propagator(m, h, times[i], basis).mat;
        CMat expected = CMat::Zero(u.rows(), u.cols());
        for (std::size_t p = 0; p < basis->photon_dim(); ++p)
            for (std::size_t s = 0; s < 2; ++s)
                for (std::size_t r = 0; r < 2; ++r)
                    expected(Eigen::Index(basis->full_index(p, s)), Eigen::Index(basis->full_index(p, r))) =
                        exact(Eigen::Index(s), Eigen::Index(r));
        dev_u = std::max(dev_u, max_abs(u - expected));
    }
    o.detail << "g0 dev " << sci(dev_g) << ", U_red dev " << sci(dev_u);
    o.require(dev_g <= 1e-9 && dev_u <= 1e-9, "deviation <= 1e-9");
}

study::CompareResult compare_weak() {
    static std::optional<study::CompareResult> cache;
    if (!cache) {
        study::CompareOptions c;
        c.h_grid = {0.4, 0.2, 0.1, 0.05};
        c.t = 1.0;
        c.points = five_points();
        c.n_max = 60;
        c.n_max_check = 120;
        cache = study::compare_study(weak(), c);
    }
    return *cache;
}

void order0(Outcome& o) {
    const auto r = compare_weak();
    o.detail << "slope " << r.slope0 << ", truncation delta " << sci(r.truncation_delta);
    o.require(!r.exact, "errors are not trivially zero");
    o.require(r.slope0 >= 0.8 && r.slope0 <= 1.2, "slope in [0.8, 1.2]");
}

void order1(Outcome& o) {
    const auto r = compare_weak();
    o.detail << "slope " << r.slope1;
    o.require(r.slope1 >= 1.7 && r.slope1 <= 2.3, "slope in [1.7, 2.3]");
}

void transition(Outcome& o) {
    study::TransitionOptions t;
    t.h_grid = {0.2, 0.1};
    t.t = 1.0;
    t.x = PhasePoint(RVec::Constant(1, 0.3), RVec::Constant(1, 0.2));
    t.grid = 5;
    t.n_max = 40;
    const auto coupled = study::transition_study(weak(), t);
    const auto free = study::transition_study(one_mode(0, 0, 0, Vec3(0, 0, 0.8)), t);
    double violation = -INFINITY, gauss = 0.0;
    std::size_t samples = SIZE_MAX;
    for (const auto& f : coupled.fits) {
        violation = std::max(violation, f.violation);
        samples = std::min(samples, f.samples.size());
    }
    for (const auto& f : free.fits) {
        violation = std::max(violation, f.violation);
        gauss = std::max(gauss, f.gaussian_error);
    }
    o.detail << samples << " samples per h, violation " << sci(violation) << ", K spread " << sci(coupled.k_spread)
             << ", gaussian error " << sci(gauss);
    o.require(samples >= 25, ">= 25 samples");
    o.require(violation <= 1e-6, "violation <= 1e-6");
    o.require(gauss <= 1e-9, "gaussian <= 1e-9");
}

void beals(Outcome& o) {
    const auto b = study::beals_study(weak(), {});
    double ratio = 0.0;
    for (const auto& r : b.rows) ratio = std::max(ratio, std::max(r.ratio_q, r.ratio_p) / (1.0 + r.shell_error));
    o.detail << "max ratio/(1+shell) " << sci(ratio) << ", shell error " << sci(b.max_shell_error) << ", slope " << b.slope;
    o.require(ratio <= 1.0, "ratio <= 1 + shell error");
    o.require(b.max_shell_error <= 0.1, "shell error <= 0.1");
    o.require(b.slope >= 0.8 && b.slope <= 1.2, "slope in [0.8, 1.2]");
}

void identities(Outcome& o) {
    const auto m = weak();
    const double h = 0.2, t = 1.0;
    std::mt19937_64 rng(7);
    const double cocycle = study::cocycle_residual(m, rng, 20);
    const auto flow = study::flow_residuals(m.W, rng);
    const fock::FockBasis basis(1, 20, 1);
    const auto tr = study::coherent_transport(m.W, PhasePoint(RVec::Constant(1, 0.6), RVec::Constant(1, -0.4)), t, h, basis);
    const double transport_bound = 10.0 * std::max(tr.tail, std::numeric_limits<double>::epsilon());
    double gamma = 0.0;
    for (bool q : {true, false})
        gamma = std::max(gamma, fock::gamma_conjugation_check(q ? ps::LinearSymbol::q_form(1, 0) : ps::LinearSymbol::p_form(1, 0), t,
                                                              m, h, basis));
    o.detail << "cocycle " << sci(cocycle) << ", group law " << sci(flow.group_law) << ", symplectic " << sci(flow.symplectic)
             << ", transport deficit " << sci(tr.deficit) << " (bound " << sci(transport_bound) << "), conjugation "
             << sci(gamma);
    o.require(cocycle <= 1e-8, "cocycle <= 1e-8");
    o.require(flow.group_law <= 1e-12 && flow.symplectic <= 1e-12, "flow <= 1e-12");
    o.require(tr.deficit <= transport_bound, "modulus >= 1 - 10 max(tail, eps)");
    o.require(gamma <= 1e-8, "conjugation <= 1e-8");
}

void sensitivity(Outcome& o) {
    double fd = 0.0, duhamel = 0.0;
    for (const auto& x : five_points()) {
        const auto s = study::sensitivity_check(weak(), x, 1.0);
        fd = std::max(fd, s.vs_fd);
        duhamel = std::max(duhamel, s.vs_duhamel);
    }
    o.detail << "vs finite differences " << sci(fd) << ", vs Duhamel " << sci(duhamel);
    o.require(fd <= 1e-6 && duhamel <= 1e-6, "relative <= 1e-6");
}

void field_identities(Outcome& o) {
    const modes::Cutoff chi;
    const auto mx = study::maxwell_continuum_study(chi);
    modes::QuadratureSettings q;
    q.radial_nodes = 400;
    const auto c = study::commutator_study(Vec3::Zero(), Vec3(0, 0, 1), chi, {4, 8, 16}, 1, q);
    o.detail << "orders div B " << mx.div_b << ", div E " << mx.div_e << ", Faraday " << mx.faraday << ", Ampere " << mx.ampere
             << "; same kind " << sci(c.same_kind_max) << "; [E1,B2] rel errors";
    for (const auto& r : c.rows) o.detail << " " << sci(r.rel_error);
    for (double v : {mx.div_b, mx.div_e, mx.faraday, mx.ampere}) o.require(std::abs(v - 2.0) <= 0.3, "order 2 +- 0.3");
    o.require(c.same_kind_max <= 1e-12, "same kind <= 1e-12");
    o.require(c.monotone, "monotone decrease");
    o.require(c.final_rel_error <= 0.05, "final <= 5%");
}

void frame_equivalence(Outcome& o) {
    auto m = modes::build_mode_model(study::curl_triplet_config(0.4));
    for (auto& per : m.coupling)
        for (auto& c : per) c *= 8.0;
    const auto f = study::frame_study(m, {0.3, 0.7, 0.4, 0.0}, 0.5, 1.3, 4, {1e-8, 1e-10, 1e-12});
    o.detail << "identities " << sci(f.spin_identity) << ", zero coupling " << sci(f.zero_coupling) << ", full";
    for (const auto& r : f.convergence) o.detail << " " << sci(r.residual);
    o.require(f.spin_identity <= 1e-12, "identities <= 1e-12");
    o.require(f.zero_coupling <= 1e-8, "zero coupling <= 1e-8");
    o.require(f.convergence.back().residual <= 1e-6, "full <= 1e-6");
    o.require(f.decreasing, "decreasing under tolerance tightening");
}

void basis_quality(Outcome& o) {
    double order = INFINITY;
    for (unsigned m : {0u, 1u, 2u, 3u}) {
        std::vector<double> hs, res;
        for (std::size_t pts : {101, 201, 401, 801}) {
            hs.push_back(5.9 / double(pts - 1));
            res.push_back(modes::radial_eigen_residual(m, 0.1, 6.0, pts));
        }
        order = std::min(order, loglog_slope(hs, res));
    }

    const unsigned radial = 8;
    const auto rule = quad::gauss_legendre(1200, 0.0, 20.0);
    double radial_gram = 0.0;
    for (unsigned a = 0; a < radial; ++a)
        for (unsigned b = a; b < radial; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < rule.size(); ++i)
                s += rule.weights[i] * rule.nodes[i] * rule.nodes[i] * modes::eval_radial(a, rule.nodes[i]) *
                     modes::eval_radial(b, rule.nodes[i]);
            radial_gram = std::max(radial_gram, std::abs(s - (a == b ? 1.0 : 0.0)));
        }
    const auto basis = modes::build_angular_basis(9);
    const RMat g = basis.gram_on(quad::sphere_product(2 * basis.rule().n_theta, 2 * basis.rule().n_phi));
    const double angular_gram = (g - RMat::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();

    modes::QuadratureSettings q;
    q.radial_nodes = 1200;
    const auto rows = study::decay_scan(Vec3(0.3, -0.2, 0.4), modes::Cutoff{}, 48, 9, q);
    const auto s = study::decay_summary(rows);
    o.detail << "eigen-residual order " << order << ", radial Gram " << sci(radial_gram) << ", angular Gram " << sci(angular_gram)
             << "; m^2 n^2 |c| peak " << sci(s.max_weighted) << " at (m, n) = (" << s.argmax_m << ", " << s.argmax_n << ") of ("
             << s.m_count << ", " << s.n_count << "), edge ratios " << sci(s.edge_m) << ", " << sci(s.edge_n);
    o.require(order >= 1.5, "order >= 1.5");
    o.require(radial_gram <= 1e-8 && angular_gram <= 1e-8, "Gram within 1e-8");
    o.require(std::isfinite(s.max_weighted), "bounded");
    o.require(s.peak_at_small_indices(), "peak in the first half of both index ranges");
    o.require(s.edge_m < 1.0 && s.edge_n < 1.0, "edge values below the peak");
}

void determinism(Outcome& o) {
    const fs::path configs = fs::path(SEMIQED_SOURCE_DIR) / "configs";
    const fs::path work = fs::temp_directory_path() / "semiqed_acceptance";
    fs::remove_all(work);
    std::size_t files = 0;
    for (const auto& [command, name] : std::vector<std::pair<std::string, std::string>>{{"build-modes", "build_modes_computed"},
                                                                                      {"expand", "expand_weak"},
                                                                                      {"compare", "compare_zero"},
                                                                                      {"transition", "transition_weak"},
                                                                                      {"checks", "checks_default"}}) {
        std::ostringstream log;
        const fs::path a = work / (name + "_1"), b = work / (name + "_2");
        const int sa = cli::run({command, configs / (name + ".json"), a, std::nullopt}, log);
        const int sb = cli::run({command, configs / (name + ".json"), b, std::nullopt}, log);
        o.require(sa == 0 && sb == 0, name + " runs pass");
        for (const auto& entry : fs::directory_iterator(a)) {
            const auto file = entry.path().filename();
            ++files;
            o.require(fs::exists(b / file) && io::read_file(a / file) == io::read_file(b / file),
                      name + "/" + file.string() + " identical");
        }
    }
    o.detail << files << " files compared across 5 commands";
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, void (*)(Outcome&)>> criteria{
        {"Larmor exactness", larmor},
        {"order-0 symbol convergence", order0},
        {"order-1 symbol convergence", order1},
        {"transition amplitude bound", transition},
        {"Beals bounds", beals},
        {"cocycle and flow identities", identities},
        {"sensitivity", sensitivity},
        {"field identities", field_identities},
        {"rotating frame", frame_equivalence},
        {"basis quality", basis_quality},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        const auto start = std::chrono::steady_clock::now();
        try {
            criteria[i].second(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [error: " << e.what() << "]";
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!o.pass) ++failed;
        std::printf("criterion %2zu %s  %s: %s (%.2f s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                    o.detail.str().c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
