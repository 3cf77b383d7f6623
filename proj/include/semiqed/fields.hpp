#pragma once

// Magnetic and electric field symbols, in a continuum form (quadrature against
// test functions q(k), p(k) in R^3) and in the truncated mode basis.

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "semiqed/io.hpp"
#include "semiqed/linalg.hpp"
#include "semiqed/modes.hpp"
#include "semiqed/phasespace.hpp"
#include "semiqed/quadrature.hpp"

namespace semiqed::fields {

using modes::Cutoff;
using modes::FieldKind;
using ps::PhasePoint;

inline FieldKind parse_kind(const std::string& s) {
    if (s == "magnetic" || s == "B") return FieldKind::magnetic;
    if (s == "electric" || s == "E") return FieldKind::electric;
    throw ConfigError("unknown field kind '" + s + "'");
}

inline void check_component(int j) {
    if (j < 1 || j > 3) throw ContractError("field component must be 1..3");
}

// ---------------------------------------------------------------- continuum

/// A phase-space point of the continuum model: vector fields q(k), p(k).
struct ContinuumSample {
    std::function<Vec3(const Vec3&)> q;
    std::function<Vec3(const Vec3&)> p;
};

/// q(k) = (k x aq) g(|k|), p(k) = (k x ap) g(|k|) with g(r) = exp(-(r - center)^2 / (2 width^2)).
inline ContinuumSample tangent_gaussian(const Vec3& aq, const Vec3& ap, double center = 1.5, double width = 0.5) {
    const auto g = [=](double r) { return std::exp(-(r - center) * (r - center) / (2 * width * width)); };
    return {[=](const Vec3& k) -> Vec3 { return k.cross(aq) * g(k.norm()); },
            [=](const Vec3& k) -> Vec3 { return k.cross(ap) * g(k.norm()); }};
}

/// J(q, p)(k) = (k x q(k) / |k|, k x p(k) / |k|).
inline ContinuumSample helicity(const ContinuumSample& s) {
    const auto hat = [](const Vec3& k) -> Vec3 { return k.norm() == 0.0 ? Vec3::Zero() : Vec3(k / k.norm()); };
    return {[=](const Vec3& k) -> Vec3 { return hat(k).cross(s.q(k)); },
            [=](const Vec3& k) -> Vec3 { return hat(k).cross(s.p(k)); }};
}

/// chi_t applied pointwise: q + i p -> e^{-it|k|} (q + i p).
inline ContinuumSample flow_sample(const ContinuumSample& s, double t) {
    return {[=](const Vec3& k) -> Vec3 {
                const double th = t * k.norm();
                return std::cos(th) * s.q(k) + std::sin(th) * s.p(k);
            },
            [=](const Vec3& k) -> Vec3 {
                const double th = t * k.norm();
                return -std::sin(th) * s.q(k) + std::cos(th) * s.p(k);
            }};
}

struct ContinuumSettings {
    double r_max = 14.0;
    std::size_t radial_nodes = 120;
    std::size_t theta_nodes = 24;
    std::size_t phi_nodes = 48;
};

/// Product quadrature (graded Gauss-Legendre in |k| times a sphere rule) on supp chi.
class ContinuumField {
public:
    struct Bound {
        std::vector<Vec3> q_cross, p_cross; ///< q x k_hat, p x k_hat
        std::vector<Vec3> q_perp, p_perp;   ///< tangential parts
    };

    explicit ContinuumField(Cutoff chi, ContinuumSettings s = {}) : chi_(chi) {
        chi_.validate();
        if (chi_.is_zero()) return;
        const auto radial = quad::graded_gauss_legendre(chi_.r0, std::max(s.r_max, chi_.r0 + 1.0), s.radial_nodes);
        const auto sphere = quad::sphere_product(s.theta_nodes, s.phi_nodes);
        const double pref = std::pow(2.0 * pi, -1.5);
        for (std::size_t i = 0; i < radial.size(); ++i) {
            const double r = radial.nodes[i];
            const double amp = radial.weights[i] * r * r * chi_(r) * std::sqrt(r) * pref;
            if (amp == 0.0) continue;
            for (std::size_t q = 0; q < sphere.size(); ++q) {
                k_.push_back(r * sphere.points[q]);
                r_.push_back(r);
                wa_.push_back(amp * sphere.weights[q]);
            }
        }
    }

    std::size_t nodes() const { return k_.size(); }
    const Cutoff& cutoff() const { return chi_; }

    Bound bind(const ContinuumSample& s) const {
        Bound b;
        const auto n = k_.size();
        b.q_cross.resize(n);
        b.p_cross.resize(n);
        b.q_perp.resize(n);
        b.p_perp.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 hat = k_[i] / r_[i];
            const Vec3 q = s.q(k_[i]), p = s.p(k_[i]);
            b.q_cross[i] = q.cross(hat);
            b.p_cross[i] = p.cross(hat);
            b.q_perp[i] = q - hat * hat.dot(q);
            b.p_perp[i] = p - hat * hat.dot(p);
        }
        return b;
    }

    /// All three components at (x, t). With phi = k.x - t|k|:
    /// B = sum w a (sin phi (q x k_hat) + cos phi (p x k_hat)), E = -sum w a (sin phi q_perp + cos phi p_perp).
    Vec3 eval(FieldKind kind, const Vec3& x, double t, const Bound& b) const {
        if (b.q_cross.size() != k_.size()) throw ContractError("continuum field: sample bound to a different rule");
        Vec3 acc = Vec3::Zero();
        const bool mag = kind == FieldKind::magnetic;
        for (std::size_t i = 0; i < k_.size(); ++i) {
            const double ph = k_[i].dot(x) - t * r_[i];
            const double s = std::sin(ph), c = std::cos(ph);
            if (mag)
                acc += wa_[i] * (s * b.q_cross[i] + c * b.p_cross[i]);
            else
                acc -= wa_[i] * (s * b.q_perp[i] + c * b.p_perp[i]);
        }
        return acc;
    }

    double eval(FieldKind kind, int j, const Vec3& x, double t, const ContinuumSample& s) const {
        check_component(j);
        return eval(kind, x, t, bind(s))(j - 1);
    }

private:
    Cutoff chi_;
    std::vector<Vec3> k_;
    std::vector<double> r_, wa_;
};

// ---------------------------------------------------------------- mode truncation

/// Field symbols as linear forms over a finite mode set; time evolution through e^{itW}.
class ModeField {
public:
    ModeField(std::vector<modes::ModeLabel> labels, Cutoff chi, modes::QuadratureSettings q = {})
        : space_(std::move(labels), q), chi_(chi), w_(space_.frequency_matrix()), flow_(w_) {
        chi_.validate();
    }

    const modes::ModeSpace& space() const { return space_; }
    const RMat& W() const { return w_; }
    std::size_t n_modes() const { return space_.size(); }

    /// Complex coefficients of the three components at t = 0.
    std::array<CVec, 3> coefficients(FieldKind kind, const Vec3& x, bool check = true) const {
        return space_.field_coefficients(kind, x, 0.0, chi_, modes::CouplingPath::automatic, check).c;
    }

    /// The linear form X -> F_j(x, chi_t X).
    ps::LinearSymbol symbol(FieldKind kind, int j, const Vec3& x, double t, bool check = true) const {
        check_component(j);
        const auto f = ps::LinearSymbol::from_complex(coefficients(kind, x, check)[std::size_t(j - 1)]);
        return t == 0.0 ? f : f.pushed(flow_, t);
    }

    Vec3 eval(FieldKind kind, const Vec3& x, double t, const PhasePoint& pt, bool check = true) const {
        if (pt.dim() != n_modes()) throw ContractError("mode field: phase point dimension mismatch");
        const auto c = coefficients(kind, x, check);
        const PhasePoint moved = t == 0.0 ? pt : flow_(t, pt);
        Vec3 v;
        for (int j = 0; j < 3; ++j) v(j) = ps::LinearSymbol::from_complex(c[std::size_t(j)])(moved);
        return v;
    }

    double eval(FieldKind kind, int j, const Vec3& x, double t, const PhasePoint& pt) const {
        check_component(j);
        return eval(kind, x, t, pt)(j - 1);
    }

    /// J_kl = int f_k . (k_hat x f_l) dk; E coefficients equal J applied to B coefficients
    /// when the mode set is closed under the helicity map.
    RMat helicity_matrix() const {
        const auto& basis = space_.basis();
        const auto& rule = basis.rule();
        const auto n = Eigen::Index(n_modes());
        RMat j = RMat::Zero(n, n);
        for (Eigen::Index a = 0; a < n; ++a)
            for (Eigen::Index b = 0; b < n; ++b) {
                const auto& la = space_.labels()[std::size_t(a)];
                const auto& lb = space_.labels()[std::size_t(b)];
                if (la.m != lb.m) continue;
                double s = 0.0;
                for (std::size_t q = 0; q < rule.size(); ++q) {
                    const Vec3& w = rule.points[q];
                    s += rule.weights[q] * basis.eval(la.n, w).dot(w.cross(basis.eval(lb.n, w)));
                }
                j(a, b) = s;
            }
        return j;
    }

private:
    modes::ModeSpace space_;
    Cutoff chi_;
    RMat w_;
    ps::FreeFlow flow_;
};

/// All modes with radial index below `radial` and angular degree at most ell_max.
inline std::vector<modes::ModeLabel> mode_block(unsigned radial, int ell_max) {
    const auto count = modes::AngularBasis::index_of(ell_max + 1, modes::Family::gradient, -(ell_max + 1));
    std::vector<modes::ModeLabel> out;
    for (unsigned m = 0; m < radial; ++m)
        for (std::size_t n = 0; n < count; ++n) out.push_back({m, n});
    return out;
}

// ---------------------------------------------------------------- rho and commutators

/// rho(x) = (2 pi)^{-3} 4 pi int chi(r)^2 r^2 sin(r|x|)/(r|x|) dr.
inline double rho_eval(const Vec3& x, const Cutoff& chi, std::size_t nodes = 400, double r_max = 40.0) {
    chi.validate();
    if (chi.is_zero()) return 0.0;
    const auto rule = quad::graded_gauss_legendre(chi.r0, std::max(r_max, chi.r0 + 1.0), nodes);
    const double d = x.norm();
    double s = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) {
        const double r = rule.nodes[i], c = chi(r);
        const double sinc = d == 0.0 ? 1.0 : std::sin(r * d) / (r * d);
        s += rule.weights[i] * c * c * r * r * sinc;
    }
    return 4.0 * pi * s / std::pow(2.0 * pi, 3.0);
}

/// d rho / d x_axis by a central difference.
inline double rho_derivative(const Vec3& x, int axis, const Cutoff& chi, double step = 1e-4) {
    if (axis < 1 || axis > 3) throw ContractError("rho_derivative: axis must be 1..3");
    Vec3 e = Vec3::Zero();
    e(axis - 1) = step;
    return (rho_eval(x + e, chi) - rho_eval(x - e, chi)) / (2 * step);
}

/// [Op(F), Op(G)] = (h/i) {F, G} for linear symbols.
inline cplx segal_commutator(const ps::LinearSymbol& f, const ps::LinearSymbol& g, double h) {
    return (h / I_unit) * ps::poisson_bracket_linear(f, g);
}

struct CommutatorRow {
    unsigned radial_modes = 0;
    std::size_t n_modes = 0;
    double value = 0.0;     ///< [E_1(x), B_2(y)] / (i h) from the truncation
    double expected = 0.0;  ///< d_3 rho(y - x)
    double rel_error = 0.0;
    double same_kind_max = 0.0;  ///< max |[B_j(x), B_m(y)]|, |[E_j(x), E_m(y)]| per unit h
    double same_index_max = 0.0; ///< max |[E_j(x), B_j(y)]| per unit h
};

/// Truncated brackets of field symbols for growing radial truncations.
inline std::vector<CommutatorRow> commutator_check(const Vec3& x, const Vec3& y, const Cutoff& chi,
                                                   const std::vector<unsigned>& radial_counts, int ell_max = 1,
                                                   modes::QuadratureSettings q = {}) {
    const double expected = rho_derivative(y - x, 3, chi);
    std::vector<CommutatorRow> rows;
    for (unsigned m : radial_counts) {
        const ModeField field(mode_block(m, ell_max), chi, q);
        const auto bx = field.coefficients(FieldKind::magnetic, x), by = field.coefficients(FieldKind::magnetic, y);
        const auto ex = field.coefficients(FieldKind::electric, x), ey = field.coefficients(FieldKind::electric, y);
        const auto sym = [](const CVec& c) { return ps::LinearSymbol::from_complex(c); };
        CommutatorRow r;
        r.radial_modes = m;
        r.n_modes = field.n_modes();
        // [E_1(x), B_2(y)] / (i h) = -{E_1(x), B_2(y)}
        r.value = -ps::poisson_bracket_linear(sym(ex[0]), sym(by[1]));
        r.expected = expected;
        r.rel_error = std::abs(r.value - expected) / std::abs(expected);
        for (std::size_t a = 0; a < 3; ++a) {
            for (std::size_t b = 0; b < 3; ++b) {
                r.same_kind_max = std::max({r.same_kind_max, std::abs(ps::poisson_bracket_linear(sym(bx[a]), sym(by[b]))),
                                            std::abs(ps::poisson_bracket_linear(sym(ex[a]), sym(ey[b])))});
            }
            r.same_index_max = std::max(r.same_index_max, std::abs(ps::poisson_bracket_linear(sym(ex[a]), sym(by[a]))));
        }
        rows.push_back(r);
    }
    return rows;
}

inline std::string commutator_csv(const std::vector<CommutatorRow>& rows) {
    io::Csv csv({"radial_modes", "n_modes", "value", "expected", "rel_error", "same_kind_max", "same_index_max"});
    for (const auto& r : rows) {
        csv.row();
        csv << double(r.radial_modes) << double(r.n_modes) << r.value << r.expected << r.rel_error << r.same_kind_max
            << r.same_index_max;
    }
    return csv.str();
}

// ---------------------------------------------------------------- Maxwell residuals

/// (B, E) at (x, t).
using FieldEvaluator = std::function<std::array<Vec3, 2>(const Vec3&, double)>;

inline FieldEvaluator continuum_evaluator(const ContinuumField& f, const ContinuumSample& s) {
    auto bound = std::make_shared<ContinuumField::Bound>(f.bind(s));
    return [&f, bound](const Vec3& x, double t) -> std::array<Vec3, 2> {
        return {f.eval(FieldKind::magnetic, x, t, *bound), f.eval(FieldKind::electric, x, t, *bound)};
    };
}

inline FieldEvaluator mode_evaluator(const ModeField& f, const PhasePoint& pt) {
    return [&f, pt](const Vec3& x, double t) -> std::array<Vec3, 2> {
        return {f.eval(FieldKind::magnetic, x, t, pt, false), f.eval(FieldKind::electric, x, t, pt, false)};
    };
}

/// Spatial scale of the cutoff divided by 50.
inline double default_spacing(const Cutoff& chi) { return 1.0 / (50.0 * (chi.r0 + 1.0)); }

struct MaxwellRow {
    double spacing = 0.0;
    double div_b = 0.0;
    double div_e = 0.0;
    double faraday = 0.0; ///< |dB/dt + rot E|
    double ampere = 0.0;  ///< |dE/dt - rot B|
};

/// Sup-norm residuals over the (x, t) grid from second-order central differences.
inline MaxwellRow maxwell_residuals(const FieldEvaluator& f, const std::vector<Vec3>& xs, const std::vector<double>& ts,
                                    double spacing) {
    if (!(spacing > 0.0)) throw ContractError("maxwell_residuals: spacing must be positive");
    MaxwellRow row;
    row.spacing = spacing;
    const double d = spacing;
    for (const auto& x : xs)
        for (double t : ts) {
            // grad[a] = d/dx_a of (B, E)
            std::array<std::array<Vec3, 2>, 3> grad;
            for (int a = 0; a < 3; ++a) {
                Vec3 e = Vec3::Zero();
                e(a) = d;
                const auto fp = f(x + e, t), fm = f(x - e, t);
                for (int k = 0; k < 2; ++k) grad[std::size_t(a)][std::size_t(k)] = (fp[std::size_t(k)] - fm[std::size_t(k)]) / (2 * d);
            }
            const auto tp = f(x, t + d), tm = f(x, t - d);
            const Vec3 dtb = (tp[0] - tm[0]) / (2 * d), dte = (tp[1] - tm[1]) / (2 * d);
            const auto div = [&](int k) { return grad[0][std::size_t(k)](0) + grad[1][std::size_t(k)](1) + grad[2][std::size_t(k)](2); };
            const auto rot = [&](int k) {
                const auto& g = grad;
                const std::size_t s = std::size_t(k);
                return Vec3(g[1][s](2) - g[2][s](1), g[2][s](0) - g[0][s](2), g[0][s](1) - g[1][s](0));
            };
            row.div_b = std::max(row.div_b, std::abs(div(0)));
            row.div_e = std::max(row.div_e, std::abs(div(1)));
            row.faraday = std::max(row.faraday, (dtb + rot(1)).cwiseAbs().maxCoeff());
            row.ampere = std::max(row.ampere, (dte - rot(0)).cwiseAbs().maxCoeff());
        }
    return row;
}

inline std::vector<MaxwellRow> maxwell_study(const FieldEvaluator& f, const std::vector<Vec3>& xs,
                                             const std::vector<double>& ts, const std::vector<double>& spacings) {
    std::vector<MaxwellRow> rows;
    for (double s : spacings) rows.push_back(maxwell_residuals(f, xs, ts, s));
    return rows;
}

/// Observed convergence order of one residual column (log-log slope against the spacing).
inline double maxwell_order(const std::vector<MaxwellRow>& rows, double MaxwellRow::*member) {
    std::vector<double> h, r;
    for (const auto& row : rows) {
        h.push_back(row.spacing);
        r.push_back(row.*member);
    }
    return loglog_slope(h, r);
}

inline std::string maxwell_csv(const std::vector<MaxwellRow>& rows) {
    io::Csv csv({"spacing", "div_b", "div_e", "faraday", "ampere"});
    for (const auto& r : rows) {
        csv.row();
        csv << r.spacing << r.div_b << r.div_e << r.faraday << r.ampere;
    }
    return csv.str();
}

} // namespace semiqed::fields
