#pragma once

// Numerical studies shared by the command-line driver and the acceptance runner:
// decay tables, symbol convergence in h, transition bounds, commutator bounds and
// the identity checks.

#include <cstdlib>
#include <exception>
#include <limits>
#include <random>
#include <thread>

#include "semiqed/fields.hpp"
#include "semiqed/fock.hpp"
#include "semiqed/hierarchy.hpp"
#include "semiqed/io.hpp"
#include "semiqed/modes.hpp"
#include "semiqed/phasespace.hpp"
#include "semiqed/spinframe.hpp"

namespace semiqed::study {

using io::json;
using ps::PhasePoint;

/// Thread cap from SEMIQED_THREADS (default 1).
inline std::size_t thread_cap() {
    const char* env = std::getenv("SEMIQED_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError("SEMIQED_THREADS must be a positive integer");
    return std::size_t(v);
}

/// f(0..n-1) on up to `threads` workers; results keep index order, the first failure is rethrown.
template <class F>
auto parallel_map(std::size_t n, F&& f, std::size_t threads) -> std::vector<decltype(f(std::size_t(0)))> {
    using R = decltype(f(std::size_t(0)));
    std::vector<std::optional<R>> out(n);
    std::vector<std::exception_ptr> errs(n);
    const auto run = [&](std::size_t w, std::size_t stride) {
        for (std::size_t i = w; i < n; i += stride) {
            try {
                out[i].emplace(f(i));
            } catch (...) {
                errs[i] = std::current_exception();
            }
        }
    };
    const std::size_t nt = std::max<std::size_t>(1, std::min(threads, n));
    if (nt == 1) {
        run(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < nt; ++w) pool.emplace_back(run, w, nt);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
    std::vector<R> res;
    res.reserve(n);
    for (auto& o : out) res.push_back(std::move(*o));
    return res;
}

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

/// exp(-it sum_lambda beta . sigma^lambda): the hierarchy and U_red at zero coupling.
inline CMat larmor_matrix(const modes::ModeModel& m, double t) {
    const std::size_t n = m.n_spins();
    CMat s = CMat::Zero(Eigen::Index(m.spin_dimension()), Eigen::Index(m.spin_dimension()));
    for (std::size_t l = 0; l < n; ++l)
        for (int j = 1; j <= 3; ++j) s += m.beta(j - 1) * embed_spin(pauli::sigma(j), l, n);
    return CMat(-I_unit * t * s).exp();
}

// ---------------------------------------------------------------- decay table

struct DecayRow {
    std::size_t k = 0;
    unsigned m = 0;
    std::size_t n = 0;
    int ell = 0;
    std::string family;
    int member = 0;
    double coefficient = 0.0; ///< max over spins and components of |c_j(k)|
    double weight = 0.0;      ///< m^2 n^2
    double weighted = 0.0;
};

inline std::vector<DecayRow> decay_rows(const modes::ModeSpace& space, const std::vector<std::array<CVec, 3>>& coupling) {
    std::vector<DecayRow> rows;
    for (std::size_t k = 0; k < space.size(); ++k) {
        DecayRow r;
        r.k = k;
        r.m = space.labels()[k].m;
        r.n = space.labels()[k].n;
        const auto& a = space.angular(k);
        r.ell = a.ell;
        r.family = modes::family_name(a.family);
        r.member = a.member;
        for (const auto& per : coupling)
            for (const auto& c : per) r.coefficient = std::max(r.coefficient, std::abs(c(Eigen::Index(k))));
        r.weight = double(r.m) * double(r.m) * double(r.n) * double(r.n);
        r.weighted = r.weight * r.coefficient;
        rows.push_back(r);
    }
    return rows;
}

inline std::vector<DecayRow> decay_table(const modes::ModeModel& model) {
    if (model.kind != modes::ModelKind::computed) return {};
    return decay_rows(modes::ModeSpace(model.labels, model.quadrature), model.coupling);
}

/// Decay table of B_{j,a,0} over the full block m < radial, 1 <= ell <= ell_max (no frequency matrix).
inline std::vector<DecayRow> decay_scan(const Vec3& a, const modes::Cutoff& chi, unsigned radial, int ell_max,
                                        const modes::QuadratureSettings& q) {
    const modes::ModeSpace space(fields::mode_block(radial, ell_max), q);
    return decay_rows(space, {space.couplings(a, 0.0, chi).c});
}

inline std::string decay_csv(const std::vector<DecayRow>& rows) {
    io::Csv csv({"k", "m", "n", "ell", "family", "member", "coefficient", "weight", "weighted"});
    for (const auto& r : rows)
        csv.row() << r.k << int(r.m) << r.n << r.ell << r.family << r.member << r.coefficient << r.weight << r.weighted;
    return csv.str();
}

/// Where the weighted coefficients peak, and how far they fall towards the edge of the computed range.
struct DecaySummary {
    double max_weighted = 0.0;
    unsigned argmax_m = 0;
    std::size_t argmax_n = 0;
    unsigned m_count = 0;   ///< radial indices 0..m_count-1
    std::size_t n_count = 0; ///< angular indices 0..n_count-1
    double edge_m = 0.0; ///< max weighted over the last quarter of m, relative to the peak
    double edge_n = 0.0;

    bool peak_at_small_indices() const { return 2 * argmax_m < m_count && 2 * argmax_n < n_count; }
    json to_json() const {
        return {{"max_weighted", max_weighted}, {"argmax_m", argmax_m}, {"argmax_n", argmax_n}, {"m_count", m_count},
                {"n_count", n_count},           {"edge_ratio_m", edge_m}, {"edge_ratio_n", edge_n},
                {"peak_at_small_indices", peak_at_small_indices()}};
    }
};

inline DecaySummary decay_summary(const std::vector<DecayRow>& rows) {
    DecaySummary s;
    for (const auto& r : rows) {
        s.m_count = std::max(s.m_count, r.m + 1);
        s.n_count = std::max(s.n_count, r.n + 1);
        if (r.weighted > s.max_weighted) {
            s.max_weighted = r.weighted;
            s.argmax_m = r.m;
            s.argmax_n = r.n;
        }
    }
    if (s.max_weighted == 0.0) return s;
    for (const auto& r : rows) {
        if (4 * r.m >= 3 * s.m_count) s.edge_m = std::max(s.edge_m, r.weighted / s.max_weighted);
        if (4 * r.n >= 3 * s.n_count) s.edge_n = std::max(s.edge_n, r.weighted / s.max_weighted);
    }
    return s;
}

// ---------------------------------------------------------------- symbol convergence in h

struct CompareOptions {
    std::vector<double> h_grid;
    double t = 1.0;
    std::vector<PhasePoint> points;
    std::size_t n_max = 40;
    std::size_t n_max_check = 0; ///< 0 skips the cutoff comparison
    double truncation_tol = 1e-9;
    double exact_tol = 1e-10;
    hier::SolverOptions solver;
    std::size_t threads = 1;
};

struct CompareRow {
    double h = 0.0;
    double err0 = 0.0; ///< max over points of |Wick(U_red) - g0|
    double err1 = 0.0; ///< same against g0 + h (g1 + Laplacian(g0)/4)
    double tail = 0.0;
};

struct CompareResult {
    std::vector<CompareRow> rows;
    bool exact = false;
    double slope0 = std::numeric_limits<double>::quiet_NaN();
    double slope1 = std::numeric_limits<double>::quiet_NaN();
    double truncation_delta = 0.0;
    std::size_t n_max_check = 0;

    std::string csv() const {
        io::Csv c({"h", "err_order0", "err_order1", "tail"});
        for (const auto& r : rows) c.row() << r.h << r.err0 << r.err1 << r.tail;
        return c.str();
    }
    json to_json() const {
        json rs = json::array();
        for (const auto& r : rows) rs.push_back({{"h", r.h}, {"err_order0", r.err0}, {"err_order1", r.err1}, {"tail", r.tail}});
        return {{"rows", rs},
                {"exact", exact},
                {"slope_order0", number_or_null(slope0)},
                {"slope_order1", number_or_null(slope1)},
                {"truncation_delta", truncation_delta},
                {"n_max_check", n_max_check}};
    }
};

inline void require_geometric(const std::vector<double>& g, std::size_t min_points) {
    if (g.size() < min_points)
        throw ConfigError("h grid needs at least " + std::to_string(min_points) + " points");
    for (double h : g)
        if (!(h > 0.0)) throw ConfigError("h grid values must be positive");
    const double ratio = g[1] / g[0];
    for (std::size_t i = 2; i < g.size(); ++i)
        if (std::abs(g[i] / g[i - 1] - ratio) > 1e-9 * std::abs(ratio))
            throw ConfigError("h grid must be a geometric progression");
}

namespace detail {

inline std::vector<CMat> wick_at(const CMat& u, const std::vector<PhasePoint>& pts, double h, const fock::FockBasis& b,
                                 double* tail) {
    std::vector<CMat> out;
    for (const auto& x : pts) {
        out.push_back(fock::wick_symbol(u, x, h, b));
        if (tail) *tail = std::max(*tail, fock::coherent_vector(x, h, b).tail);
    }
    return out;
}

inline CMat reduced_at(const modes::ModeModel& m, double h, double t, std::size_t n_max) {
    const auto basis = std::make_shared<fock::FockBasis>(m.n_modes(), n_max, m.n_spins());
    return fock::ReducedPropagator(fock::build_hamiltonian(m, h, basis)).at(t);
}

} // namespace detail

inline CompareResult compare_study(const modes::ModeModel& model, const CompareOptions& o) {
    require_geometric(o.h_grid, 4);
    if (o.points.empty()) throw ConfigError("compare: need at least one phase point");
    for (const auto& x : o.points)
        if (x.dim() != model.n_modes()) throw ConfigError("compare: phase point dimension differs from the model");
    std::vector<hier::HierarchyResult> hr;
    for (const auto& x : o.points) hr.push_back(hier::solve_hierarchy(model, x, std::vector<double>{o.t}, 1, o.solver));

    CompareResult res;
    res.rows = parallel_map(
        o.h_grid.size(),
        [&](std::size_t i) {
            const double h = o.h_grid[i];
            const fock::FockBasis basis(model.n_modes(), o.n_max, model.n_spins());
            CompareRow row;
            row.h = h;
            const auto w = detail::wick_at(detail::reduced_at(model, h, o.t, o.n_max), o.points, h, basis, &row.tail);
            for (std::size_t p = 0; p < o.points.size(); ++p) {
                const std::size_t last = hr[p].size() - 1;
                row.err0 = std::max(row.err0, max_abs(w[p] - hr[p].g(0, last).value));
                row.err1 = std::max(row.err1, max_abs(w[p] - hier::wick_prediction(hr[p], last, h, 1)));
            }
            return row;
        },
        o.threads);

    if (o.n_max_check > 0) {
        res.n_max_check = o.n_max_check;
        const double h = *std::min_element(o.h_grid.begin(), o.h_grid.end());
        const fock::FockBasis small(model.n_modes(), o.n_max, model.n_spins());
        const fock::FockBasis big(model.n_modes(), o.n_max_check, model.n_spins());
        const auto a = detail::wick_at(detail::reduced_at(model, h, o.t, o.n_max), o.points, h, small, nullptr);
        const auto b = detail::wick_at(detail::reduced_at(model, h, o.t, o.n_max_check), o.points, h, big, nullptr);
        for (std::size_t p = 0; p < a.size(); ++p) res.truncation_delta = std::max(res.truncation_delta, max_abs(a[p] - b[p]));
        if (res.truncation_delta > o.truncation_tol)
            throw TruncationError("Wick symbols change when the Fock cutoff goes from " + std::to_string(o.n_max) + " to " +
                                      std::to_string(o.n_max_check) + " (difference " +
                                      io::format_double(res.truncation_delta) + ")",
                                  res.truncation_delta);
    }

    res.exact = true;
    for (const auto& r : res.rows)
        if (r.err0 > o.exact_tol || r.err1 > o.exact_tol) res.exact = false;
    if (!res.exact) {
        std::vector<double> hs, e0, e1;
        for (const auto& r : res.rows) {
            hs.push_back(r.h);
            e0.push_back(r.err0);
            e1.push_back(r.err1);
        }
        res.slope0 = loglog_slope(hs, e0);
        res.slope1 = loglog_slope(hs, e1);
    }
    return res;
}

// ---------------------------------------------------------------- transition amplitudes

struct TransitionOptions {
    std::vector<double> h_grid;
    double t = 1.0;
    PhasePoint x;
    std::size_t grid = 5;  ///< per axis; grid^2 points
    double radius = 1.0;   ///< offsets in the (q_0, p_0) plane span [-radius, radius]
    std::size_t n_max = 40;
    CVec a, b;             ///< spin vectors; empty means the first basis vector
    std::size_t threads = 1;
};

struct TransitionSample {
    double distance = 0.0; ///< |X - chi_{-t} Y|
    double amplitude = 0.0;
    double log_weighted = 0.0; ///< log|amplitude| + distance^2 / (4h)
};

struct TransitionFit {
    double h = 0.0;
    std::vector<TransitionSample> samples;
    double intercept = 0.0; ///< least-squares log M
    double slope = 0.0;     ///< least-squares coefficient of the distance
    double K = 0.0;         ///< slope / |t|
    double max_residual = 0.0;    ///< largest positive residual of the least-squares line
    double ceiling_log_m = 0.0;   ///< smallest log M putting every sample under the line
    double violation = 0.0;       ///< largest residual against the ceiling line
    double gaussian_error = std::numeric_limits<double>::quiet_NaN(); ///< zero coupling only

    json to_json() const {
        return {{"h", h},
                {"samples", samples.size()},
                {"log_M", intercept},
                {"slope", slope},
                {"K", K},
                {"max_positive_residual", max_residual},
                {"ceiling_log_M", ceiling_log_m},
                {"violation", violation},
                {"gaussian_error", number_or_null(gaussian_error)}};
    }
};

struct TransitionResult {
    std::vector<TransitionFit> fits;
    double k_spread = 0.0; ///< |K_max - K_min| / max |K| across h; 0 with one h

    std::string csv() const {
        io::Csv c({"h", "distance", "amplitude", "log_weighted"});
        for (const auto& f : fits)
            for (const auto& s : f.samples) c.row() << f.h << s.distance << s.amplitude << s.log_weighted;
        return c.str();
    }
    json to_json() const {
        json fs = json::array();
        for (const auto& f : fits) fs.push_back(f.to_json());
        return {{"fits", fs}, {"K_spread", k_spread}};
    }
};

inline TransitionResult transition_study(const modes::ModeModel& model, const TransitionOptions& o) {
    if (o.h_grid.empty()) throw ConfigError("transition: h grid is empty");
    if (o.grid < 2) throw ConfigError("transition: grid needs at least 2 points per axis");
    if (o.x.dim() != model.n_modes()) throw ConfigError("transition: phase point dimension differs from the model");
    const auto sd = Eigen::Index(model.spin_dimension());
    const CVec a = o.a.size() ? o.a : CVec(CVec::Unit(sd, 0));
    const CVec b = o.b.size() ? o.b : CVec(CVec::Unit(sd, 0));
    if (a.size() != sd || b.size() != sd) throw ConfigError("transition: spin vector dimension mismatch");
    const ps::FreeFlow flow(model.W);
    const std::size_t j = model.n_modes();

    // Y = chi_t(X + delta) with delta in the (q_0, p_0) plane, so |X - chi_{-t} Y| = |delta|.
    std::vector<PhasePoint> ys;
    std::vector<double> dist;
    for (std::size_t u = 0; u < o.grid; ++u)
        for (std::size_t v = 0; v < o.grid; ++v) {
            const double dq = o.radius * (2.0 * double(u) / double(o.grid - 1) - 1.0);
            const double dp = o.radius * (2.0 * double(v) / double(o.grid - 1) - 1.0);
            ys.push_back(flow(o.t, o.x.shifted(0, dq).shifted(j, dp)));
            dist.push_back(std::hypot(dq, dp));
        }

    TransitionResult res;
    for (double h : o.h_grid) {
        if (!(h > 0.0)) throw ConfigError("transition: h values must be positive");
        const auto basis = std::make_shared<fock::FockBasis>(j, o.n_max, model.n_spins());
        const fock::Propagator prop(fock::build_hamiltonian(model, h, basis).full.mat, h);
        const CMat u = prop.at(o.t);
        TransitionFit fit;
        fit.h = h;
        fit.samples = parallel_map(
            ys.size(),
            [&](std::size_t i) {
                TransitionSample s;
                s.distance = dist[i];
                const auto px = fock::coherent_vector(o.x, h, *basis), py = fock::coherent_vector(ys[i], h, *basis);
                px.require();
                py.require();
                const CVec in = Eigen::kroneckerProduct(px.photon, a);
                const CVec out = Eigen::kroneckerProduct(py.photon, b);
                s.amplitude = std::abs(out.dot(u * in));
                s.log_weighted = std::log(s.amplitude) + s.distance * s.distance / (4 * h);
                return s;
            },
            o.threads);

        const double n = double(fit.samples.size());
        double md = 0, ml = 0;
        for (const auto& s : fit.samples) {
            md += s.distance / n;
            ml += s.log_weighted / n;
        }
        double sxx = 0, sxy = 0;
        for (const auto& s : fit.samples) {
            sxx += (s.distance - md) * (s.distance - md);
            sxy += (s.distance - md) * (s.log_weighted - ml);
        }
        fit.slope = sxy / sxx;
        fit.intercept = ml - fit.slope * md;
        fit.K = o.t != 0.0 ? fit.slope / std::abs(o.t) : 0.0;
        fit.max_residual = -INFINITY;
        fit.ceiling_log_m = -INFINITY;
        for (const auto& s : fit.samples) {
            fit.max_residual = std::max(fit.max_residual, s.log_weighted - fit.intercept - fit.slope * s.distance);
            fit.ceiling_log_m = std::max(fit.ceiling_log_m, s.log_weighted - fit.slope * s.distance);
        }
        fit.violation = -INFINITY;
        for (const auto& s : fit.samples)
            fit.violation = std::max(fit.violation, s.log_weighted - fit.ceiling_log_m - fit.slope * s.distance);

        if (model.coupling_is_zero()) {
            const double spin = std::abs(b.dot(larmor_matrix(model, o.t) * a));
            fit.gaussian_error = 0.0;
            for (const auto& s : fit.samples)
                fit.gaussian_error = std::max(fit.gaussian_error,
                                              std::abs(s.amplitude - spin * std::exp(-s.distance * s.distance / (4 * h))));
        }
        res.fits.push_back(std::move(fit));
    }
    if (res.fits.size() > 1) {
        double lo = INFINITY, hi = -INFINITY, big = 0.0;
        for (const auto& f : res.fits) {
            lo = std::min(lo, f.K);
            hi = std::max(hi, f.K);
            big = std::max(big, std::abs(f.K));
        }
        res.k_spread = big > 0.0 ? (hi - lo) / big : 0.0;
    }
    return res;
}

// ---------------------------------------------------------------- commutator bounds

struct BealsOptions {
    double h = 0.2;
    std::vector<double> times{0.05, 0.1, 0.2, 0.4};
    std::size_t n_max = 14;
    std::size_t n_max_check = 28;
    std::size_t eps_samples = 41;
    std::size_t margin = 2;
};

struct BealsStudyRow {
    double t = 0.0;
    std::size_t mode = 0;
    double comm_q = 0.0, comm_p = 0.0, bound = 0.0, ratio_q = 0.0, ratio_p = 0.0, shell_error = 0.0;
};

struct BealsResult {
    std::vector<BealsStudyRow> rows;
    double slope = std::numeric_limits<double>::quiet_NaN(); ///< log-log slope of max commutator norm vs |t|
    double max_excess = -INFINITY;  ///< max over rows of ratio - (1 + shell error)
    double max_shell_error = 0.0;

    std::string csv() const {
        io::Csv c({"t", "mode", "comm_q", "comm_p", "bound", "ratio_q", "ratio_p", "shell_error"});
        for (const auto& r : rows)
            c.row() << r.t << r.mode << r.comm_q << r.comm_p << r.bound << r.ratio_q << r.ratio_p << r.shell_error;
        return c.str();
    }
    json to_json() const {
        return {{"rows", rows.size()},
                {"slope", number_or_null(slope)},
                {"max_excess", number_or_null(max_excess)},
                {"max_shell_error", max_shell_error}};
    }
};

inline BealsResult beals_study(const modes::ModeModel& model, const BealsOptions& o) {
    if (o.times.size() < 2) throw ConfigError("beals: need at least two times");
    const auto small = std::make_shared<fock::FockBasis>(model.n_modes(), o.n_max, model.n_spins());
    const auto big = std::make_shared<fock::FockBasis>(model.n_modes(), o.n_max_check, model.n_spins());
    BealsResult res;
    std::vector<double> ts, norms;
    for (double t : o.times) {
        const RVec eps = modes::epsilon_profile(model, t, o.eps_samples);
        const auto r = fock::beals_commutator_norms(model, o.h, t, small, eps, o.margin);
        const auto r2 = fock::beals_commutator_norms(model, o.h, t, big, eps, o.margin);
        double peak = 0.0;
        for (std::size_t k = 0; k < r.size(); ++k) {
            BealsStudyRow row{t, k, r[k].comm_q, r[k].comm_p, r[k].bound, r[k].ratio_q, r[k].ratio_p, 0.0};
            const double ref = std::max(r2[k].comm_q, r2[k].comm_p);
            const double diff = std::max(std::abs(r[k].comm_q - r2[k].comm_q), std::abs(r[k].comm_p - r2[k].comm_p));
            row.shell_error = ref > 0.0 ? diff / ref : diff;
            res.max_shell_error = std::max(res.max_shell_error, row.shell_error);
            res.max_excess = std::max(res.max_excess, std::max(row.ratio_q, row.ratio_p) - (1.0 + row.shell_error));
            peak = std::max(peak, std::max(row.comm_q, row.comm_p));
            res.rows.push_back(row);
        }
        ts.push_back(std::abs(t));
        norms.push_back(peak);
    }
    bool positive = true;
    for (double v : norms) positive = positive && v > 0.0;
    if (positive) res.slope = loglog_slope(ts, norms);
    return res;
}

// ---------------------------------------------------------------- identities

/// max |[a_k, a_l^*] - delta_kl| on photon states with total + margin <= n_max.
inline double ccr_residual(const fock::FockBasis& basis, std::size_t margin = 2) {
    const auto l = fock::build_ladders(basis);
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < basis.photon_dim(); ++i)
        if (basis.total(i) + margin <= basis.n_max()) idx.push_back(Eigen::Index(i));
    double worst = 0.0;
    const auto pd = Eigen::Index(basis.photon_dim());
    for (std::size_t k = 0; k < basis.n_modes(); ++k)
        for (std::size_t m = 0; m < basis.n_modes(); ++m) {
            CMat c = l.a[k] * l.create(m) - l.create(m) * l.a[k];
            if (k == m) c -= CMat::Identity(pd, pd);
            for (auto r : idx)
                for (auto s : idx) worst = std::max(worst, std::abs(c(r, s)));
        }
    return worst;
}

struct FlowResiduals {
    double group_law = 0.0;
    double symplectic = 0.0;
};

inline FlowResiduals flow_residuals(const RMat& w, std::mt19937_64& rng, std::size_t trials = 20) {
    const ps::FreeFlow flow(w);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::normal_distribution<double> g(0.0, 1.0);
    const auto point = [&] {
        RVec q(w.rows()), p(w.rows());
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            q(i) = g(rng);
            p(i) = g(rng);
        }
        return PhasePoint(q, p);
    };
    FlowResiduals r;
    for (std::size_t i = 0; i < trials; ++i) {
        const double t = u(rng), s = u(rng);
        const auto x = point(), y = point();
        r.group_law = std::max(r.group_law, std::sqrt((flow(t, flow(s, x)) - flow(t + s, x)).norm2()));
        r.symplectic = std::max(r.symplectic, std::abs(ps::symplectic(flow(t, x), flow(t, y)) - ps::symplectic(x, y)));
    }
    return r;
}

struct TransportResult {
    double deficit = 0.0; ///< 1 - |<Gamma(e^{-itW}) Psi_X, Psi_{chi_t X}>|
    double phase = 0.0;
    double tail = 0.0;
};

inline TransportResult coherent_transport(const RMat& w, const PhasePoint& x, double t, double h, const fock::FockBasis& basis) {
    const auto l = fock::build_ladders(basis);
    const fock::Propagator free(h * fock::second_quantize(w, l), h);
    const auto a = fock::coherent_vector(x, h, basis);
    const auto b = fock::coherent_vector(ps::FreeFlow(w)(t, x), h, basis);
    const cplx ov = b.photon.dot(free.at(t) * a.photon);
    return {1.0 - std::abs(ov), std::arg(ov), std::max(a.tail, b.tail)};
}

inline double cocycle_residual(const modes::ModeModel& m, std::mt19937_64& rng, std::size_t trials = 20,
                               const hier::SolverOptions& opt = {}) {
    const ps::FreeFlow flow(m.W);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < trials; ++i) {
        RVec q(m.W.rows()), p(m.W.rows());
        for (Eigen::Index k = 0; k < m.W.rows(); ++k) {
            q(k) = g(rng);
            p(k) = g(rng);
        }
        const PhasePoint x(q, p);
        const double t = u(rng), s = u(rng);
        const CMat lhs = hier::solve_g0(m, x, t, opt) * hier::solve_g0(m, x, s, opt).adjoint();
        worst = std::max(worst, max_abs(lhs - hier::solve_g0(m, flow(s, x), t - s, opt)));
    }
    return worst;
}

/// Variational first derivatives of g0 against central differences (Richardson) and the Duhamel integral.
struct SensitivityResult {
    double vs_fd = 0.0;
    double vs_duhamel = 0.0;
};

inline SensitivityResult sensitivity_check(const modes::ModeModel& m, const PhasePoint& x, double t) {
    hier::SolverOptions tight;
    tight.abs_tol = tight.rel_tol = 1e-13;
    const auto r = hier::solve_hierarchy(m, x, std::vector<double>{t}, 1, tight);
    SensitivityResult s;
    const auto rel = [](const CMat& a, const CMat& b) { return max_abs(a - b) / std::max(max_abs(b), 1e-300); };
    for (std::size_t a = 0; a < 2 * m.n_modes(); ++a) {
        const CMat jet = r.g(0, 0).d(a);
        const auto g = [&](double d) { return hier::solve_g0(m, x.shifted(a, d), t, tight); };
        const double d = 1e-2;
        const CMat d1 = (g(d) - g(-d)) / (2 * d);
        const CMat d2 = (g(d / 2) - g(-d / 2)) / d;
        s.vs_fd = std::max(s.vs_fd, rel(jet, CMat((4.0 * d2 - d1) / 3.0)));
        s.vs_duhamel = std::max(s.vs_duhamel, rel(jet, hier::duhamel_first_derivative(m, x, t, a)));
    }
    return s;
}

// ---------------------------------------------------------------- fields

struct CommutatorStudy {
    std::vector<fields::CommutatorRow> rows;
    bool monotone = true;
    double final_rel_error = 0.0;
    double same_kind_max = 0.0;
};

inline CommutatorStudy commutator_study(const Vec3& x, const Vec3& y, const modes::Cutoff& chi,
                                        const std::vector<unsigned>& radial_counts, int ell_max,
                                        const modes::QuadratureSettings& q) {
    CommutatorStudy s;
    s.rows = fields::commutator_check(x, y, chi, radial_counts, ell_max, q);
    for (std::size_t i = 1; i < s.rows.size(); ++i) s.monotone = s.monotone && s.rows[i].rel_error < s.rows[i - 1].rel_error;
    s.final_rel_error = s.rows.back().rel_error;
    for (const auto& r : s.rows) s.same_kind_max = std::max({s.same_kind_max, r.same_kind_max, r.same_index_max});
    return s;
}

struct MaxwellStudy {
    std::vector<fields::MaxwellRow> rows;
    double div_b = 0.0, div_e = 0.0, faraday = 0.0, ampere = 0.0; ///< observed orders
};

inline MaxwellStudy maxwell_continuum_study(const modes::Cutoff& chi) {
    const fields::ContinuumField cf(chi);
    const auto sample = fields::tangent_gaussian(Vec3(0.3, -0.2, 0.5), Vec3(-0.1, 0.4, 0.2));
    const std::vector<Vec3> xs{Vec3(0.1, 0.2, -0.3), Vec3(0.5, -0.4, 0.1)};
    const std::vector<double> ts{0.0, 0.7};
    const double d0 = fields::default_spacing(chi);
    MaxwellStudy s;
    s.rows = fields::maxwell_study(fields::continuum_evaluator(cf, sample), xs, ts, {4 * d0, 2 * d0, d0});
    s.div_b = fields::maxwell_order(s.rows, &fields::MaxwellRow::div_b);
    s.div_e = fields::maxwell_order(s.rows, &fields::MaxwellRow::div_e);
    s.faraday = fields::maxwell_order(s.rows, &fields::MaxwellRow::faraday);
    s.ampere = fields::maxwell_order(s.rows, &fields::MaxwellRow::ampere);
    return s;
}

// ---------------------------------------------------------------- rotating frame

/// The ell = 1 curl multiplet at radial index m = 0, one spin at the origin.
inline json curl_triplet_config(double beta3) {
    json modes = json::array();
    for (int member : {-1, 0, 1}) modes.push_back({{"m", 0}, {"ell", 1}, {"family", "curl"}, {"member", member}});
    return {{"kind", "computed"}, {"modes", modes}, {"positions", {{0.0, 0.0, 0.0}}}, {"beta", {0.0, 0.0, beta3}}};
}

struct FrameStudy {
    double spin_identity = 0.0;  ///< max over sampled t
    double zero_coupling = 0.0;
    std::vector<frame::FrameReport> convergence; ///< coupled model, tightening tolerances
    bool decreasing = true;
};

inline FrameStudy frame_study(const modes::ModeModel& model, const frame::RotatingDrive& drive, double h, double t,
                              std::size_t n_max, const std::vector<double>& tolerances) {
    FrameStudy s;
    for (double ts : {-2.0, -0.5, 0.0, 0.3, 1.7, 4.0})
        s.spin_identity = std::max(s.spin_identity, frame::conjugation_identity_residual(drive, ts, h));
    const auto basis = std::make_shared<fock::FockBasis>(model.n_modes(), n_max, model.n_spins());
    auto free = model;
    for (auto& per : free.coupling)
        for (auto& c : per) c.setZero();
    s.zero_coupling = frame::frame_equivalence_check(free, drive, h, t, basis).residual;
    for (double tol : tolerances) s.convergence.push_back(frame::frame_equivalence_check(model, drive, h, t, basis, {tol, tol, 1e-3}));
    for (std::size_t i = 1; i < s.convergence.size(); ++i)
        s.decreasing = s.decreasing && s.convergence[i].residual < s.convergence[i - 1].residual;
    return s;
}

} // namespace semiqed::study
