#pragma once

// Transport hierarchy for the reduced-propagator symbol: g_0, g_1, g_2 and their
// phase-space jets, integrated together as one ODE system.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "semiqed/io.hpp"
#include "semiqed/linalg.hpp"
#include "semiqed/modes.hpp"
#include "semiqed/phasespace.hpp"
#include "semiqed/quadrature.hpp"

namespace semiqed::hier {

using ps::MatrixJet;
using ps::PhasePoint;

/// H(t, X) = sum_lambda sum_j (beta_j + Re((e^{itW} c_{lambda j})^dagger z)) sigma_j^[lambda].
class InteractionSymbol {
public:
    explicit InteractionSymbol(const modes::ModeModel& model) : j_(model.n_modes()), n_(model.n_spins()) {
        model.validate();
        Eigen::SelfAdjointEigenSolver<RMat> es(model.W);
        v_ = es.eigenvectors().cast<cplx>();
        lam_ = es.eigenvalues();
        const auto d = Eigen::Index(spin_dim(n_));
        constant_ = CMat::Zero(d, d);
        for (std::size_t l = 0; l < n_; ++l)
            for (int j = 1; j <= 3; ++j) {
                CMat s = embed_spin(pauli::sigma(j), l, n_);
                constant_ += model.beta(j - 1) * s;
                const CVec& c = model.coupling[l][std::size_t(j - 1)];
                if (c.cwiseAbs().maxCoeff() == 0.0) continue;
                spins_.push_back(std::move(s));
                eig_coupling_.push_back(v_.adjoint() * c);
            }
    }

    std::size_t n_modes() const { return j_; }
    std::size_t n_spins() const { return n_; }
    Eigen::Index spin_dimension() const { return constant_.rows(); }
    const CMat& constant() const { return constant_; }

    /// Coefficient matrices of q_k and p_k at time t.
    ps::MatrixLinearSymbol at(double t) const {
        ps::MatrixLinearSymbol m;
        m.c = constant_;
        const auto d = constant_.rows();
        m.a.assign(j_, CMat::Zero(d, d));
        m.b.assign(j_, CMat::Zero(d, d));
        const CVec ph = (I_unit * t * lam_.cast<cplx>()).array().exp();
        for (std::size_t i = 0; i < spins_.size(); ++i) {
            const CVec w = v_ * ph.cwiseProduct(eig_coupling_[i]);
            for (std::size_t k = 0; k < j_; ++k) {
                m.a[k] += w(Eigen::Index(k)).real() * spins_[i];
                m.b[k] += w(Eigen::Index(k)).imag() * spins_[i];
            }
        }
        return m;
    }

    CMat operator()(double t, const PhasePoint& x) const {
        if (x.dim() != j_) throw ContractError("interaction symbol: dimension mismatch");
        return at(t)(x);
    }

private:
    std::size_t j_, n_;
    CMat v_;
    RVec lam_;
    CMat constant_;
    std::vector<CMat> spins_;
    std::vector<CVec> eig_coupling_;
};

inline CMat interaction_symbol(const modes::ModeModel& model, double t, const PhasePoint& x) {
    return InteractionSymbol(model)(t, x);
}

struct SolverOptions {
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    double initial_step = 1e-3;
    std::size_t max_steps = 1000000; ///< between consecutive output times

    io::json to_json() const {
        return {{"abs_tol", abs_tol}, {"rel_tol", rel_tol}, {"initial_step", initial_step}, {"max_steps", max_steps}};
    }
};

struct SolverStats {
    std::size_t rhs_evaluations = 0;
    double unitarity_drift = 0.0; ///< max ||g0^dagger g0 - I|| over stored times
    double abs_tol = 0.0;
    double rel_tol = 0.0;
};

inline constexpr int max_hierarchy_order = 2;

/// Jet depth carried for g_j when the hierarchy is solved to order m.
inline int jet_depth(int j, int order) { return std::max(0, std::min(2 - j, order - j + 1)); }

struct HierarchyResult {
    int order = 0;
    PhasePoint base;
    std::vector<double> times;
    std::vector<std::vector<MatrixJet>> jets; ///< jets[time index][j]
    SolverStats stats;

    const MatrixJet& g(std::size_t j, std::size_t time_index) const { return jets.at(time_index).at(j); }
    std::size_t size() const { return times.size(); }
};

namespace detail {

/// Flat state: blocks of D x D matrices laid out as
/// g0 | dg0[a] | ddg0[a,b] | g1 | dg1[a] | g2, each present per the jet depths.
struct Layout {
    int order;
    int d0, d1;
    std::size_t n;     // 2J
    Eigen::Index dim;  // spin dimension
    std::size_t g0 = 0, dg0 = 0, ddg0 = 0, g1 = 0, dg1 = 0, g2 = 0, blocks = 0;

    Layout(int m, std::size_t coords, Eigen::Index d, int depth0)
        : order(m), d0(depth0), d1(jet_depth(1, m)), n(coords), dim(d) {
        std::size_t b = 1;
        if (d0 >= 1) {
            dg0 = b;
            b += n;
        }
        if (d0 >= 2) {
            ddg0 = b;
            b += n * n;
        }
        if (m >= 1) {
            g1 = b++;
            if (d1 >= 1) {
                dg1 = b;
                b += n;
            }
        }
        if (m >= 2) g2 = b++;
        blocks = b;
    }
    std::size_t block_size() const { return std::size_t(dim * dim); }
    std::size_t size() const { return blocks * block_size(); }
};

using State = std::vector<cplx>;
using CMap = Eigen::Map<const CMat>;
using MMap = Eigen::Map<CMat>;

inline CMap block(const State& s, const Layout& l, std::size_t b) {
    return CMap(s.data() + b * l.block_size(), l.dim, l.dim);
}
inline MMap block(State& s, const Layout& l, std::size_t b) { return MMap(s.data() + b * l.block_size(), l.dim, l.dim); }

struct Rhs {
    const InteractionSymbol* sym;
    const Layout* lay;
    PhasePoint x;
    double sign; // integration runs in tau = |t|
    std::size_t* counter;

    void operator()(const State& y, State& dy, double tau) const {
        ++*counter;
        const Layout& l = *lay;
        const double t = sign * tau;
        const auto hs = sym->at(t);
        const CMat hx = hs(x);
        const std::size_t j = x.dim(), n = l.n;
        const auto coef = [&](std::size_t a) -> const CMat& { return hs.coeff(a); };
        const cplx mi = -I_unit * sign;
        dy.resize(y.size());

        block(dy, l, 0).noalias() = mi * hx * block(y, l, 0);
        if (l.d0 >= 1)
            for (std::size_t a = 0; a < n; ++a)
                block(dy, l, l.dg0 + a).noalias() =
                    mi * (coef(a) * block(y, l, 0) + hx * block(y, l, l.dg0 + a));
        if (l.d0 >= 2)
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = 0; b < n; ++b)
                    block(dy, l, l.ddg0 + a * n + b).noalias() =
                        mi * (coef(a) * block(y, l, l.dg0 + b) + coef(b) * block(y, l, l.dg0 + a) +
                              hx * block(y, l, l.ddg0 + a * n + b));
        if (l.order >= 1) {
            // -i H g1 - 1/2 sum_k (H_{p_k} d_{q_k} g0 - H_{q_k} d_{p_k} g0)
            CMat src = CMat::Zero(l.dim, l.dim);
            for (std::size_t k = 0; k < j; ++k)
                src += coef(j + k) * block(y, l, l.dg0 + k) - coef(k) * block(y, l, l.dg0 + j + k);
            block(dy, l, l.g1).noalias() = sign * (-I_unit * hx * block(y, l, l.g1) - 0.5 * src);
            if (l.d1 >= 1)
                for (std::size_t a = 0; a < n; ++a) {
                    CMat s2 = CMat::Zero(l.dim, l.dim);
                    for (std::size_t k = 0; k < j; ++k)
                        s2 += coef(j + k) * block(y, l, l.ddg0 + a * n + k) -
                              coef(k) * block(y, l, l.ddg0 + a * n + j + k);
                    block(dy, l, l.dg1 + a).noalias() =
                        sign * (-I_unit * (coef(a) * block(y, l, l.g1) + hx * block(y, l, l.dg1 + a)) - 0.5 * s2);
                }
        }
        if (l.order >= 2) {
            CMat src = CMat::Zero(l.dim, l.dim);
            for (std::size_t k = 0; k < j; ++k)
                src += coef(j + k) * block(y, l, l.dg1 + k) - coef(k) * block(y, l, l.dg1 + j + k);
            block(dy, l, l.g2).noalias() = sign * (-I_unit * hx * block(y, l, l.g2) - 0.5 * src);
        }
    }
};

inline MatrixJet unpack(const State& y, const Layout& l, std::size_t j, const PhasePoint& x) {
    MatrixJet jet;
    jet.base = x;
    const std::size_t n = l.n;
    if (j == 0) {
        jet.order = l.d0;
        jet.value = block(y, l, 0);
        if (l.d0 >= 1)
            for (std::size_t a = 0; a < n; ++a) jet.first.emplace_back(block(y, l, l.dg0 + a));
        if (l.d0 >= 2)
            for (std::size_t a = 0; a < n * n; ++a) jet.second.emplace_back(block(y, l, l.ddg0 + a));
    } else if (j == 1) {
        jet.order = l.d1;
        jet.value = block(y, l, l.g1);
        if (l.d1 >= 1)
            for (std::size_t a = 0; a < n; ++a) jet.first.emplace_back(block(y, l, l.dg1 + a));
    } else {
        jet.order = 0;
        jet.value = block(y, l, l.g2);
    }
    return jet;
}

inline HierarchyResult solve(const modes::ModeModel& model, const PhasePoint& x, const std::vector<double>& times,
                             int order, int depth0, const SolverOptions& opt) {
    if (order < 0 || order > max_hierarchy_order)
        throw UnsupportedError("hierarchy: order " + std::to_string(order) + " not supported (max 2)");
    if (!(opt.abs_tol > 0.0) || !(opt.rel_tol > 0.0)) throw ContractError("hierarchy: tolerances must be positive");
    if (times.empty()) throw ContractError("hierarchy: empty time grid");
    if (x.dim() != model.n_modes()) throw ContractError("hierarchy: phase point dimension mismatch");
    double sign = 0.0;
    for (double t : times) {
        if (!std::isfinite(t)) throw ContractError("hierarchy: non-finite time");
        if (t != 0.0) {
            const double s = t > 0 ? 1.0 : -1.0;
            if (sign != 0.0 && s != sign) throw ContractError("hierarchy: time grid must not change sign");
            sign = s;
        }
    }
    if (sign == 0.0) sign = 1.0;
    for (std::size_t i = 1; i < times.size(); ++i)
        if (std::abs(times[i]) < std::abs(times[i - 1]))
            throw ContractError("hierarchy: |t| must be nondecreasing along the grid");

    const InteractionSymbol sym(model);
    const Layout lay(order, 2 * x.dim(), sym.spin_dimension(), depth0);
    State y(lay.size(), cplx(0.0));
    block(y, lay, 0) = CMat::Identity(lay.dim, lay.dim);

    std::vector<double> taus;
    const bool prepend = times.front() != 0.0;
    if (prepend) taus.push_back(0.0);
    for (double t : times) taus.push_back(std::abs(t));

    HierarchyResult res;
    res.order = order;
    res.base = x;
    res.times = times;
    res.stats.abs_tol = opt.abs_tol;
    res.stats.rel_tol = opt.rel_tol;
    std::size_t counter = 0;
    std::size_t seen = 0;
    const Rhs rhs{&sym, &lay, x, sign, &counter};
    auto observer = [&](const State& s, double) {
        if (prepend && seen++ == 0) return;
        std::vector<MatrixJet> row;
        for (int j = 0; j <= order; ++j) row.push_back(unpack(s, lay, std::size_t(j), x));
        const CMat& g0 = row[0].value;
        res.stats.unitarity_drift = std::max(res.stats.unitarity_drift, unitarity_defect(g0));
        res.jets.push_back(std::move(row));
    };
    namespace ode = boost::numeric::odeint;
    try {
        auto stepper = ode::make_controlled(opt.abs_tol, opt.rel_tol, ode::runge_kutta_fehlberg78<State>());
        ode::integrate_times(stepper, rhs, y, taus.begin(), taus.end(), opt.initial_step, observer,
                             ode::max_step_checker(int(opt.max_steps)));
    } catch (const std::exception& e) {
        throw SolverError(std::string("hierarchy: integration failed (") + e.what() + ") after " +
                          std::to_string(counter) + " right-hand-side evaluations");
    }
    // Exact initial data at t = 0.
    for (std::size_t i = 0; i < times.size(); ++i)
        if (times[i] == 0.0) {
            for (std::size_t j = 0; j < res.jets[i].size(); ++j) {
                auto& jet = res.jets[i][j];
                jet.value = j == 0 ? CMat(CMat::Identity(lay.dim, lay.dim)) : CMat(CMat::Zero(lay.dim, lay.dim));
                for (auto& m : jet.first) m.setZero();
                for (auto& m : jet.second) m.setZero();
            }
        }
    res.stats.rhs_evaluations = counter;
    return res;
}

} // namespace detail

/// Uniform grid 0, t/n, ..., t.
inline std::vector<double> uniform_times(double t_final, std::size_t steps) {
    if (steps == 0) throw ContractError("uniform_times: need at least one step");
    std::vector<double> out(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) out[i] = t_final * double(i) / double(steps);
    out.back() = t_final;
    return out;
}

inline HierarchyResult solve_hierarchy(const modes::ModeModel& model, const PhasePoint& x,
                                       const std::vector<double>& times, int order, const SolverOptions& opt = {}) {
    return detail::solve(model, x, times, order, jet_depth(0, order), opt);
}

inline HierarchyResult solve_hierarchy(const modes::ModeModel& model, const PhasePoint& x, double t_final, int order,
                                       const SolverOptions& opt = {}, std::size_t steps = 20) {
    return solve_hierarchy(model, x, uniform_times(t_final, steps), order, opt);
}

/// g_0 alone (no jets) on the given times.
inline std::vector<CMat> solve_g0(const modes::ModeModel& model, const PhasePoint& x, const std::vector<double>& times,
                                  const SolverOptions& opt = {}) {
    const auto r = detail::solve(model, x, times, 0, 0, opt);
    std::vector<CMat> out;
    for (const auto& row : r.jets) out.push_back(row[0].value);
    return out;
}

inline CMat solve_g0(const modes::ModeModel& model, const PhasePoint& x, double t, const SolverOptions& opt = {}) {
    return solve_g0(model, x, std::vector<double>{t}, opt).front();
}

/// S_m = sum_{j <= m} g_j h^j at stored time index i.
inline CMat partial_sum(const HierarchyResult& r, std::size_t i, double h, int m = -1) {
    if (!(h >= 0.0)) throw ContractError("partial_sum: h must be nonnegative");
    if (m < 0) m = r.order;
    if (m > r.order) throw ContractError("partial_sum: order exceeds the solved hierarchy");
    CMat s = r.g(0, i).value;
    double hp = 1.0;
    for (int j = 1; j <= m; ++j) {
        hp *= h;
        s += hp * r.g(std::size_t(j), i).value;
    }
    return s;
}

inline std::vector<CMat> partial_sum(const HierarchyResult& r, double h, int m = -1) {
    std::vector<CMat> out;
    for (std::size_t i = 0; i < r.size(); ++i) out.push_back(partial_sum(r, i, h, m));
    return out;
}

/// Predicted coherent-state (Wick) symbol of U_red: g0 at order 0, g0 + h (g1 + Laplacian g0 / 4) at order 1.
inline CMat wick_prediction(const HierarchyResult& r, std::size_t i, double h, int order) {
    if (order == 0) return r.g(0, i).value;
    if (order == 1) {
        if (r.order < 1) throw ContractError("wick_prediction: order 1 needs g1");
        return r.g(0, i).value + h * (r.g(1, i).value + 0.25 * r.g(0, i).laplacian());
    }
    throw UnsupportedError("wick_prediction: only orders 0 and 1");
}

// ---------------------------------------------------------------- cross-checks

/// d_a g0(t) = -i g0(t) int_0^t g0(s)^dagger (d_a H(s)) g0(s) ds, composite Gauss-Legendre.
inline CMat duhamel_first_derivative(const modes::ModeModel& model, const PhasePoint& x, double t, std::size_t a,
                                     std::size_t panels = 16, std::size_t nodes = 10, const SolverOptions& opt = {}) {
    if (a >= 2 * x.dim()) throw ContractError("duhamel: coordinate index out of range");
    const InteractionSymbol sym(model);
    const auto d = sym.spin_dimension();
    if (t == 0.0) return CMat::Zero(d, d);
    std::vector<double> s_nodes, w;
    for (std::size_t p = 0; p < panels; ++p) {
        const auto rule = quad::gauss_legendre(nodes, t * double(p) / double(panels), t * double(p + 1) / double(panels));
        for (std::size_t i = 0; i < rule.size(); ++i) {
            s_nodes.push_back(rule.nodes[i]);
            w.push_back(rule.weights[i]);
        }
    }
    auto grid = s_nodes;
    grid.push_back(t);
    const auto g = solve_g0(model, x, grid, opt);
    CMat acc = CMat::Zero(d, d);
    for (std::size_t i = 0; i < s_nodes.size(); ++i)
        acc += w[i] * g[i].adjoint() * sym.at(s_nodes[i]).coeff(a) * g[i];
    return -I_unit * g.back() * acc;
}

/// g1(t) = -1/2 g0(t) int_0^t g0(s)^dagger {H(s), g0(s)} ds, composite Gauss-Legendre.
inline CMat duhamel_g1(const modes::ModeModel& model, const PhasePoint& x, double t, std::size_t panels = 16,
                       std::size_t nodes = 10, const SolverOptions& opt = {}) {
    const InteractionSymbol sym(model);
    const auto d = sym.spin_dimension();
    if (t == 0.0) return CMat::Zero(d, d);
    std::vector<double> s_nodes, w;
    for (std::size_t p = 0; p < panels; ++p) {
        const auto rule = quad::gauss_legendre(nodes, t * double(p) / double(panels), t * double(p + 1) / double(panels));
        for (std::size_t i = 0; i < rule.size(); ++i) {
            s_nodes.push_back(rule.nodes[i]);
            w.push_back(rule.weights[i]);
        }
    }
    auto grid = s_nodes;
    grid.push_back(t);
    const auto r = detail::solve(model, x, grid, 0, 1, opt);
    CMat acc = CMat::Zero(d, d);
    for (std::size_t i = 0; i < s_nodes.size(); ++i) {
        const auto& jet = r.g(0, i);
        acc += w[i] * jet.value.adjoint() * ps::poisson_bracket_linear_vs_jet(sym.at(s_nodes[i]), jet);
    }
    return -0.5 * r.g(0, s_nodes.size()).value * acc;
}

// ---------------------------------------------------------------- derivative bounds

struct DerivativeBoundRow {
    double t = 0.0;
    std::size_t order = 0; ///< j of g_j
    std::size_t a = 0, b = 0;
    int rank = 1;          ///< 1 for first derivatives, 2 for second
    double norm = 0.0;
    double scale = 0.0;    ///< |t| eps_a or t^2 eps_a eps_b
    double ratio = 0.0;    ///< norm / (K^rank scale) with the fitted K
};

struct DerivativeBoundReport {
    double K = 0.0;
    std::vector<DerivativeBoundRow> rows;

    io::json to_json() const {
        io::json rs = io::json::array();
        for (const auto& r : rows)
            rs.push_back({{"t", r.t}, {"g", r.order}, {"a", r.a}, {"b", r.b}, {"rank", r.rank}, {"norm", r.norm},
                          {"scale", r.scale}, {"ratio", r.ratio}});
        return {{"K", K}, {"rows", rs}};
    }
};

/// Stored derivative norms against prod (K |t| eps_k(t)); K is the smallest value making every bound hold.
inline DerivativeBoundReport derivative_bound_report(const HierarchyResult& r, const modes::ModeModel& model,
                                                     std::size_t s_samples = 41) {
    DerivativeBoundReport rep;
    const std::size_t j = r.base.dim(), n = 2 * j;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double t = r.times[i];
        if (t == 0.0) continue;
        const RVec eps = modes::epsilon_profile(model, t, s_samples);
        const auto e = [&](std::size_t a) { return eps(Eigen::Index(a % j)); };
        for (std::size_t g = 0; g < r.jets[i].size(); ++g) {
            const auto& jet = r.g(g, i);
            if (jet.order >= 1)
                for (std::size_t a = 0; a < n; ++a)
                    rep.rows.push_back({t, g, a, a, 1, op_norm(jet.d(a)), std::abs(t) * e(a), 0.0});
            if (jet.order >= 2)
                for (std::size_t a = 0; a < n; ++a)
                    for (std::size_t b = a; b < n; ++b)
                        rep.rows.push_back({t, g, a, b, 2, op_norm(jet.dd(a, b)), t * t * e(a) * e(b), 0.0});
        }
    }
    constexpr double negligible = 1e-13;
    for (const auto& row : rep.rows) {
        if (row.norm <= negligible) continue;
        const double need = row.scale > 0.0 ? std::pow(row.norm / row.scale, 1.0 / row.rank) : INFINITY;
        rep.K = std::max(rep.K, need);
    }
    for (auto& row : rep.rows) {
        const double denom = std::pow(rep.K, row.rank) * row.scale;
        row.ratio = row.norm <= negligible ? 0.0 : (denom > 0.0 ? row.norm / denom : INFINITY);
    }
    return rep;
}

// ---------------------------------------------------------------- export

/// One row per stored time: t, then re/im of every entry (row-major) of g_0..g_m.
inline std::string hierarchy_csv(const HierarchyResult& r) {
    std::vector<std::string> header{"t"};
    const auto d = r.g(0, 0).value.rows();
    for (int j = 0; j <= r.order; ++j)
        for (Eigen::Index a = 0; a < d; ++a)
            for (Eigen::Index b = 0; b < d; ++b) {
                const std::string tag = "g" + std::to_string(j) + "_" + std::to_string(a) + std::to_string(b);
                header.push_back("re_" + tag);
                header.push_back("im_" + tag);
            }
    io::Csv csv(header);
    for (std::size_t i = 0; i < r.size(); ++i) {
        csv.row();
        csv << r.times[i];
        for (int j = 0; j <= r.order; ++j) {
            const CMat& m = r.g(std::size_t(j), i).value;
            for (Eigen::Index a = 0; a < d; ++a)
                for (Eigen::Index b = 0; b < d; ++b) csv << m(a, b).real() << m(a, b).imag();
        }
    }
    return csv.str();
}

inline io::json hierarchy_summary(const HierarchyResult& r, const DerivativeBoundReport& rep) {
    double schwarz = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i)
        if (r.g(0, i).order >= 2) schwarz = std::max(schwarz, r.g(0, i).schwarz_defect());
    return {{"order", r.order},
            {"base", {{"q", std::vector<double>(r.base.q.data(), r.base.q.data() + r.base.q.size())},
                      {"p", std::vector<double>(r.base.p.data(), r.base.p.data() + r.base.p.size())}}},
            {"t_final", r.times.back()},
            {"time_points", r.size()},
            {"abs_tol", r.stats.abs_tol},
            {"rel_tol", r.stats.rel_tol},
            {"rhs_evaluations", r.stats.rhs_evaluations},
            {"unitarity_drift", r.stats.unitarity_drift},
            {"schwarz_defect", schwarz},
            {"fitted_K", rep.K}};
}

} // namespace semiqed::hier
