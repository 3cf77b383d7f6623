#pragma once

// Finite-dimensional phase space R^{2J}: points, free flow, coherent overlaps,
// linear symbols, Poisson brackets and the heat operator.

#include <cmath>
#include <functional>
#include <vector>

#include "semiqed/io.hpp"
#include "semiqed/linalg.hpp"
#include "semiqed/quadrature.hpp"

namespace semiqed::ps {

/// X = (q, p); coordinate index a < J is q_a, a >= J is p_{a-J}.
struct PhasePoint {
    RVec q;
    RVec p;

    PhasePoint() = default;
    PhasePoint(RVec q_, RVec p_) : q(std::move(q_)), p(std::move(p_)) {
        if (q.size() != p.size()) throw ContractError("phase point: q and p must have equal length");
    }
    static PhasePoint zero(std::size_t j) { return {RVec::Zero(Eigen::Index(j)), RVec::Zero(Eigen::Index(j))}; }
    static PhasePoint from_complex(const CVec& z) { return {z.real(), z.imag()}; }
    static PhasePoint from_stacked(const RVec& x) {
        if (x.size() % 2) throw ContractError("stacked phase vector must have even length");
        const auto j = x.size() / 2;
        return {x.head(j), x.tail(j)};
    }

    std::size_t dim() const { return std::size_t(q.size()); }
    CVec z() const { return q.cast<cplx>() + I_unit * p.cast<cplx>(); }
    RVec stacked() const {
        RVec x(2 * q.size());
        x << q, p;
        return x;
    }
    double norm2() const { return q.squaredNorm() + p.squaredNorm(); }
    double coord(std::size_t a) const {
        const auto j = std::size_t(q.size());
        return a < j ? q(Eigen::Index(a)) : p(Eigen::Index(a - j));
    }
    PhasePoint shifted(std::size_t a, double d) const {
        PhasePoint y = *this;
        const auto j = std::size_t(q.size());
        if (a < j)
            y.q(Eigen::Index(a)) += d;
        else
            y.p(Eigen::Index(a - j)) += d;
        return y;
    }
    PhasePoint operator-(const PhasePoint& o) const { return {q - o.q, p - o.p}; }
    PhasePoint operator+(const PhasePoint& o) const { return {q + o.q, p + o.p}; }
};

inline void require_same_dim(const PhasePoint& x, const PhasePoint& y) {
    if (x.dim() != y.dim()) throw ContractError("phase points have different dimensions");
}

/// sigma(X, Y) = (p_X, q_Y) - (q_X, p_Y).
inline double symplectic(const PhasePoint& x, const PhasePoint& y) {
    require_same_dim(x, y);
    return x.p.dot(y.q) - x.q.dot(y.p);
}

/// Free flow chi_t: z -> e^{-itW} z. Diagonalizes W once; evaluation per t is O(J^2).
class FreeFlow {
public:
    explicit FreeFlow(const RMat& w) : es_(w) {
        if (w.rows() != w.cols() || w.rows() == 0) throw ContractError("free flow: W must be square and nonempty");
        if (es_.info() != Eigen::Success) throw SolverError("free flow: eigensolver failed");
        if (es_.eigenvalues().minCoeff() <= 0.0) throw ContractError("free flow: W must be positive definite");
    }
    std::size_t dim() const { return std::size_t(es_.eigenvalues().size()); }

    /// e^{-itW}.
    CMat unitary(double t) const {
        if (t == 0.0) return CMat::Identity(Eigen::Index(dim()), Eigen::Index(dim()));
        const CVec ph = (-I_unit * t * es_.eigenvalues().cast<cplx>()).array().exp();
        const CMat v = es_.eigenvectors().cast<cplx>();
        return v * ph.asDiagonal() * v.transpose();
    }
    PhasePoint operator()(double t, const PhasePoint& x) const {
        if (x.dim() != dim()) throw ContractError("free flow: dimension mismatch");
        if (t == 0.0) return x;
        return PhasePoint::from_complex(unitary(t) * x.z());
    }
    /// Real 2J x 2J matrix of chi_t acting on stacked (q, p).
    RMat real_matrix(double t) const {
        const CMat u = unitary(t);
        const auto j = Eigen::Index(dim());
        RMat m(2 * j, 2 * j);
        m << u.real(), -u.imag(), u.imag(), u.real();
        return m;
    }

private:
    Eigen::SelfAdjointEigenSolver<RMat> es_;
};

inline PhasePoint free_flow(const RMat& w, double t, const PhasePoint& x) { return FreeFlow(w)(t, x); }

/// <Psi_X, Psi_Y> = exp(-|X-Y|^2/(4h) + (i/2h) sigma(X, Y)).
inline cplx coherent_overlap(const PhasePoint& x, const PhasePoint& y, double h) {
    if (!(h > 0.0)) throw ContractError("coherent_overlap: h must be positive");
    return std::exp(cplx(-(x - y).norm2() / (4.0 * h), symplectic(x, y) / (2.0 * h)));
}

// ---------------------------------------------------------------- linear symbols

/// F(q, p) = (a, q) + (b, p) + c.
struct LinearSymbol {
    RVec a;
    RVec b;
    double constant = 0.0;

    static LinearSymbol q_form(std::size_t j, std::size_t k) {
        LinearSymbol f{RVec::Zero(Eigen::Index(j)), RVec::Zero(Eigen::Index(j))};
        f.a(Eigen::Index(k)) = 1.0;
        return f;
    }
    static LinearSymbol p_form(std::size_t j, std::size_t k) {
        LinearSymbol f{RVec::Zero(Eigen::Index(j)), RVec::Zero(Eigen::Index(j))};
        f.b(Eigen::Index(k)) = 1.0;
        return f;
    }
    /// From the complex coefficient w = a + ib: F = Re(w^dagger z).
    static LinearSymbol from_complex(const CVec& w) { return {w.real(), w.imag()}; }

    std::size_t dim() const { return std::size_t(a.size()); }
    CVec w() const { return a.cast<cplx>() + I_unit * b.cast<cplx>(); }
    double operator()(const PhasePoint& x) const {
        if (x.dim() != dim()) throw ContractError("linear symbol: dimension mismatch");
        return a.dot(x.q) + b.dot(x.p) + constant;
    }
    /// G with G(X) = F(chi_t X): coefficients rotated by e^{+itW}.
    LinearSymbol pushed(const FreeFlow& flow, double t) const {
        LinearSymbol g = from_complex(flow.unitary(-t) * w());
        g.constant = constant;
        return g;
    }
};

/// Matrix-coefficient linear symbol H(X) = C + sum_k q_k A_k + p_k B_k.
struct MatrixLinearSymbol {
    CMat c;
    std::vector<CMat> a; ///< coefficients of q_k
    std::vector<CMat> b; ///< coefficients of p_k

    std::size_t dim() const { return a.size(); }
    /// Coefficient of stacked coordinate index.
    const CMat& coeff(std::size_t idx) const { return idx < a.size() ? a[idx] : b[idx - a.size()]; }

    CMat operator()(const PhasePoint& x) const {
        if (x.dim() != dim()) throw ContractError("matrix linear symbol: dimension mismatch");
        CMat m = c;
        for (std::size_t k = 0; k < a.size(); ++k) m += x.q(Eigen::Index(k)) * a[k] + x.p(Eigen::Index(k)) * b[k];
        return m;
    }
};

/// {F, G} = (b_F, a_G) - (a_F, b_G) = sum_k dF/dp_k dG/dq_k - dF/dq_k dG/dp_k.
inline double poisson_bracket_linear(const LinearSymbol& f, const LinearSymbol& g) {
    if (f.dim() != g.dim()) throw ContractError("poisson bracket: dimension mismatch");
    return f.b.dot(g.a) - f.a.dot(g.b);
}

/// Matrix version with products in left-to-right order.
inline CMat poisson_bracket_linear(const MatrixLinearSymbol& f, const MatrixLinearSymbol& g) {
    if (f.dim() != g.dim()) throw ContractError("poisson bracket: dimension mismatch");
    CMat out = CMat::Zero(f.c.rows(), g.c.cols());
    for (std::size_t k = 0; k < f.dim(); ++k) out += f.b[k] * g.a[k] - f.a[k] * g.b[k];
    return out;
}

// ---------------------------------------------------------------- jets

/// Value and phase-space derivatives of a matrix symbol at a point.
/// first[a] = d g / dx_a, second[a * 2J + b] = d^2 g / dx_a dx_b (stacked coordinates).
struct MatrixJet {
    PhasePoint base;
    int order = 0;
    CMat value;
    std::vector<CMat> first;
    std::vector<CMat> second;

    std::size_t n_coords() const { return 2 * base.dim(); }
    const CMat& d(std::size_t a) const {
        if (order < 1) throw ContractError("jet lacks first derivatives");
        return first.at(a);
    }
    const CMat& dd(std::size_t a, std::size_t b) const {
        if (order < 2) throw ContractError("jet lacks second derivatives");
        return second.at(a * n_coords() + b);
    }
    CMat laplacian() const {
        if (order < 2) throw ContractError("laplacian needs a jet of order >= 2");
        CMat l = CMat::Zero(value.rows(), value.cols());
        for (std::size_t a = 0; a < n_coords(); ++a) l += dd(a, a);
        return l;
    }
    /// max |d2 g/dx_a dx_b - d2 g/dx_b dx_a|.
    double schwarz_defect() const {
        double m = 0.0;
        for (std::size_t a = 0; a < n_coords(); ++a)
            for (std::size_t b = a + 1; b < n_coords(); ++b) m = std::max(m, max_abs(dd(a, b) - dd(b, a)));
        return m;
    }
};

/// sum_k (dH/dp_k)(dG/dq_k) - (dH/dq_k)(dG/dp_k), H factors on the left.
inline CMat poisson_bracket_linear_vs_jet(const MatrixLinearSymbol& h, const MatrixJet& g) {
    if (g.order < 1) throw ContractError("poisson_bracket_linear_vs_jet: jet lacks first derivatives");
    const std::size_t j = h.dim();
    if (g.base.dim() != j) throw ContractError("poisson_bracket_linear_vs_jet: dimension mismatch");
    CMat out = CMat::Zero(h.c.rows(), g.value.cols());
    for (std::size_t k = 0; k < j; ++k) out += h.b[k] * g.d(k) - h.a[k] * g.d(j + k);
    return out;
}

// ---------------------------------------------------------------- heat operator

struct HeatSpec {
    enum class Method { quadrature, taylor };
    Method method = Method::quadrature;
    std::size_t nodes = 20; ///< Gauss-Hermite nodes per axis
};

inline constexpr std::size_t max_heat_quadrature_dims = 8;

/// E[F(X + G)] with G ~ N(0, (h/2) I_{2J}) by tensor Gauss-Hermite quadrature.
inline CMat heat_apply(const std::function<CMat(const PhasePoint&)>& f, const PhasePoint& x, double h,
                       const HeatSpec& spec = {}) {
    if (!(h > 0.0)) throw ContractError("heat_apply: h must be positive");
    if (spec.method != HeatSpec::Method::quadrature)
        throw ContractError("heat_apply: an evaluator needs the quadrature method");
    const std::size_t dims = 2 * x.dim();
    if (dims > max_heat_quadrature_dims)
        throw UnsupportedError("heat_apply: tensor quadrature limited to 2J <= 8 (got " + std::to_string(dims) +
                               "); use the Taylor method with a second-order jet");
    const auto rule = quad::gaussian_expectation(spec.nodes, h / 2.0);
    const std::size_t n = rule.size();
    std::vector<std::size_t> idx(dims, 0);
    CMat acc;
    const RVec base = x.stacked();
    while (true) {
        RVec y = base;
        double w = 1.0;
        for (std::size_t d = 0; d < dims; ++d) {
            y(Eigen::Index(d)) += rule.nodes[idx[d]];
            w *= rule.weights[idx[d]];
        }
        const CMat v = f(PhasePoint::from_stacked(y));
        if (acc.size() == 0)
            acc = w * v;
        else
            acc += w * v;
        std::size_t d = 0;
        while (d < dims && ++idx[d] == n) idx[d++] = 0;
        if (d == dims) break;
    }
    return acc;
}

/// F(X) + (h/4) Laplacian F(X).
inline CMat heat_apply(const MatrixJet& f, double h) {
    if (!(h > 0.0)) throw ContractError("heat_apply: h must be positive");
    return f.value + (h / 4.0) * f.laplacian();
}

/// Samples of a matrix symbol on points as CSV: coordinates, then re/im per entry (row-major).
inline std::string symbol_grid_csv(const std::function<CMat(const PhasePoint&)>& f, const std::vector<PhasePoint>& pts) {
    if (pts.empty()) throw ContractError("symbol_grid_csv: no points");
    const std::size_t j = pts.front().dim();
    const CMat probe = f(pts.front());
    std::vector<std::string> header;
    for (std::size_t k = 0; k < j; ++k) header.push_back("q" + std::to_string(k));
    for (std::size_t k = 0; k < j; ++k) header.push_back("p" + std::to_string(k));
    for (Eigen::Index r = 0; r < probe.rows(); ++r)
        for (Eigen::Index c = 0; c < probe.cols(); ++c) {
            header.push_back("re_" + std::to_string(r) + std::to_string(c));
            header.push_back("im_" + std::to_string(r) + std::to_string(c));
        }
    io::Csv csv(header);
    for (const auto& x : pts) {
        csv.row();
        for (std::size_t a = 0; a < 2 * j; ++a) csv << x.coord(a);
        const CMat v = f(x);
        for (Eigen::Index r = 0; r < v.rows(); ++r)
            for (Eigen::Index c = 0; c < v.cols(); ++c) csv << v(r, c).real() << v(r, c).imag();
    }
    return csv.str();
}

} // namespace semiqed::ps
