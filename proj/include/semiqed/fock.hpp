#pragma once

// Dense truncated Fock space (total-number cutoff) tensored with N spins:
// ladders, Segal fields, Hamiltonian, propagators, coherent states, Wick symbols.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "semiqed/linalg.hpp"
#include "semiqed/modes.hpp"
#include "semiqed/phasespace.hpp"

namespace semiqed::fock {

using ps::PhasePoint;

/// Occupation tuples n with sum(n) <= n_max, ordered by total number then lexicographically.
/// Full index = photon_index * 2^N + spin_index.
class FockBasis {
public:
    FockBasis(std::size_t n_modes, std::size_t n_max, std::size_t n_spins)
        : j_(n_modes), n_max_(n_max), n_spins_(n_spins) {
        if (n_modes == 0) throw ContractError("Fock basis needs at least one mode");
        if (n_spins > 8) throw ContractError("Fock basis: at most 8 spins");
        std::vector<int> cur(j_, 0);
        for (std::size_t total = 0; total <= n_max_; ++total) enumerate(cur, 0, int(total));
        for (std::size_t i = 0; i < tuples_.size(); ++i) index_.emplace(tuples_[i], i);
    }

    std::size_t n_modes() const { return j_; }
    std::size_t n_max() const { return n_max_; }
    std::size_t n_spins() const { return n_spins_; }
    std::size_t spin_dim() const { return semiqed::spin_dim(n_spins_); }
    std::size_t photon_dim() const { return tuples_.size(); }
    std::size_t dim() const { return photon_dim() * spin_dim(); }

    const std::vector<int>& tuple(std::size_t photon_index) const { return tuples_.at(photon_index); }
    std::size_t total(std::size_t photon_index) const {
        std::size_t s = 0;
        for (int n : tuples_.at(photon_index)) s += std::size_t(n);
        return s;
    }
    /// Photon index of a tuple; throws if outside the truncation.
    std::size_t index_of(const std::vector<int>& n) const {
        auto it = index_.find(n);
        if (it == index_.end()) throw ContractError("occupation tuple outside the truncation");
        return it->second;
    }
    bool contains(const std::vector<int>& n) const { return index_.count(n) != 0; }
    std::size_t full_index(std::size_t photon_index, std::size_t spin_index) const {
        return photon_index * spin_dim() + spin_index;
    }

    /// Full-space indices of states with total photon number <= n_max - margin.
    std::vector<Eigen::Index> interior(std::size_t margin = 2) const {
        std::vector<Eigen::Index> out;
        for (std::size_t i = 0; i < photon_dim(); ++i)
            if (total(i) + margin <= n_max_)
                for (std::size_t s = 0; s < spin_dim(); ++s) out.push_back(Eigen::Index(full_index(i, s)));
        return out;
    }
    /// Photon indices of this basis' states that lie in `other` (same J), mapped to other's photon index.
    std::vector<std::pair<std::size_t, std::size_t>> embedding_into(const FockBasis& other) const {
        if (other.j_ != j_) throw ContractError("basis embedding: mode counts differ");
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (std::size_t i = 0; i < photon_dim(); ++i)
            if (other.contains(tuples_[i])) out.emplace_back(i, other.index_of(tuples_[i]));
        return out;
    }

    bool operator==(const FockBasis& o) const { return j_ == o.j_ && n_max_ == o.n_max_ && n_spins_ == o.n_spins_; }

private:
    void enumerate(std::vector<int>& cur, std::size_t pos, int remaining) {
        if (pos + 1 == j_) {
            cur[pos] = remaining;
            tuples_.push_back(cur);
            return;
        }
        for (int n = remaining; n >= 0; --n) {
            cur[pos] = n;
            enumerate(cur, pos + 1, remaining - n);
        }
    }

    std::size_t j_, n_max_, n_spins_;
    std::vector<std::vector<int>> tuples_;
    std::map<std::vector<int>, std::size_t> index_;
};

/// Dense operator on the full space tied to its basis.
struct FockOperator {
    std::shared_ptr<const FockBasis> basis;
    CMat mat;

    void require_same(const FockOperator& o) const {
        if (!basis || !o.basis || !(*basis == *o.basis)) throw ContractError("operators live on different bases");
    }
    FockOperator operator*(const FockOperator& o) const {
        require_same(o);
        return {basis, mat * o.mat};
    }
    FockOperator operator+(const FockOperator& o) const {
        require_same(o);
        return {basis, mat + o.mat};
    }
    FockOperator operator-(const FockOperator& o) const {
        require_same(o);
        return {basis, mat - o.mat};
    }
    FockOperator adjoint() const { return {basis, mat.adjoint()}; }
};

/// Annihilators a_k on the photon factor (photon_dim x photon_dim); a_k^dagger is the adjoint.
struct LadderSet {
    std::vector<CMat> a;
    CMat create(std::size_t k) const { return a.at(k).adjoint(); }
    std::size_t n_modes() const { return a.size(); }
};

inline LadderSet build_ladders(const FockBasis& basis) {
    LadderSet l;
    const auto pd = Eigen::Index(basis.photon_dim());
    for (std::size_t k = 0; k < basis.n_modes(); ++k) {
        CMat a = CMat::Zero(pd, pd);
        for (std::size_t i = 0; i < basis.photon_dim(); ++i) {
            auto n = basis.tuple(i);
            if (n[k] == 0) continue;
            const double amp = std::sqrt(double(n[k]));
            n[k] -= 1;
            a(Eigen::Index(basis.index_of(n)), Eigen::Index(i)) = amp;
        }
        l.a.push_back(std::move(a));
    }
    return l;
}

/// Photon operator A as A (x) I_spin.
inline CMat photon_to_full(const CMat& a, const FockBasis& basis) {
    return Eigen::kroneckerProduct(a, CMat::Identity(Eigen::Index(basis.spin_dim()), Eigen::Index(basis.spin_dim())));
}

/// Spin operator S as I_photon (x) S.
inline CMat spin_to_full(const CMat& s, const FockBasis& basis) {
    return Eigen::kroneckerProduct(CMat::Identity(Eigen::Index(basis.photon_dim()), Eigen::Index(basis.photon_dim())), s);
}

/// Number operator dGamma(I) on the photon factor.
inline CMat number_operator(const FockBasis& basis) {
    CMat n = CMat::Zero(Eigen::Index(basis.photon_dim()), Eigen::Index(basis.photon_dim()));
    for (std::size_t i = 0; i < basis.photon_dim(); ++i) n(Eigen::Index(i), Eigen::Index(i)) = double(basis.total(i));
    return n;
}

/// dGamma(W) = sum_kl W_kl a_k^dagger a_l on the photon factor.
inline CMat second_quantize(const RMat& w, const LadderSet& l) {
    const auto j = l.n_modes();
    if (std::size_t(w.rows()) != j || std::size_t(w.cols()) != j) throw ContractError("dGamma: W dimension mismatch");
    CMat out = CMat::Zero(l.a[0].rows(), l.a[0].cols());
    for (std::size_t k = 0; k < j; ++k)
        for (std::size_t m = 0; m < j; ++m)
            if (w(Eigen::Index(k), Eigen::Index(m)) != 0.0)
                out += w(Eigen::Index(k), Eigen::Index(m)) * (l.create(k) * l.a[m]);
    return out;
}

/// Op(F) = sqrt(h/2) sum_k (w_k a_k^dagger + conj(w_k) a_k), w = a + ib, plus the constant.
inline CMat segal_quantize(const ps::LinearSymbol& f, double h, const LadderSet& l) {
    if (!(h > 0.0)) throw ContractError("segal_quantize: h must be positive");
    if (f.dim() != l.n_modes()) throw ContractError("segal_quantize: coefficient length must equal the mode count");
    const CVec w = f.w();
    const double s = std::sqrt(h / 2.0);
    CMat out = f.constant * CMat::Identity(l.a[0].rows(), l.a[0].cols());
    for (std::size_t k = 0; k < l.n_modes(); ++k) {
        const cplx wk = w(Eigen::Index(k));
        if (wk == 0.0) continue;
        out += s * (wk * l.create(k) + std::conj(wk) * l.a[k]);
    }
    return out;
}

/// Q_h(e_k) and P_h(e_k).
inline CMat field_q(std::size_t k, double h, const LadderSet& l) {
    return segal_quantize(ps::LinearSymbol::q_form(l.n_modes(), k), h, l);
}
inline CMat field_p(std::size_t k, double h, const LadderSet& l) {
    return segal_quantize(ps::LinearSymbol::p_form(l.n_modes(), k), h, l);
}

struct Hamiltonian {
    FockOperator h0;   ///< h dGamma(W) (x) I
    FockOperator hint; ///< sum (beta_j + Op(B_j(a_lambda))) (x) sigma_j^[lambda]
    FockOperator full; ///< h0 + h * hint
    double h = 0.0;
};

inline void require_compatible(const modes::ModeModel& m, const FockBasis& basis) {
    if (m.n_modes() != basis.n_modes() || m.n_spins() != basis.n_spins())
        throw ContractError("model and Fock basis dimensions differ");
}

inline Hamiltonian build_hamiltonian(const modes::ModeModel& model, double h, std::shared_ptr<const FockBasis> basis) {
    require_compatible(model, *basis);
    if (!(h > 0.0)) throw ContractError("build_hamiltonian: h must be positive");
    const LadderSet l = build_ladders(*basis);
    const std::size_t n = basis->n_spins();
    const auto pd = Eigen::Index(basis->photon_dim());
    Hamiltonian out;
    out.h = h;
    out.h0 = {basis, photon_to_full(h * second_quantize(model.W, l), *basis)};
    CMat hint = CMat::Zero(Eigen::Index(basis->dim()), Eigen::Index(basis->dim()));
    for (std::size_t lam = 0; lam < n; ++lam)
        for (int j = 1; j <= 3; ++j) {
            const CMat sj = embed_spin(pauli::sigma(j), lam, n);
            const auto& c = model.coupling[lam][std::size_t(j - 1)];
            const CMat field = model.beta(j - 1) * CMat::Identity(pd, pd) +
                               segal_quantize(ps::LinearSymbol::from_complex(c), h, l);
            hint += Eigen::kroneckerProduct(field, sj).eval();
        }
    out.hint = {basis, hint};
    out.full = {basis, out.h0.mat + h * hint};
    return out;
}

/// e^{-itH/h} via one Hermitian eigendecomposition, reusable across t.
class Propagator {
public:
    Propagator(const CMat& hmat, double h) : h_(h), es_(hmat) {
        if (!(h > 0.0)) throw ContractError("propagate: h must be positive");
        if (es_.info() != Eigen::Success) throw SolverError("propagate: Hermitian eigensolver failed");
    }
    CMat at(double t) const {
        if (t == 0.0) return CMat::Identity(es_.eigenvectors().rows(), es_.eigenvectors().cols());
        const CVec ph = (-I_unit * (t / h_) * es_.eigenvalues().cast<cplx>()).array().exp();
        return es_.eigenvectors() * ph.asDiagonal() * es_.eigenvectors().adjoint();
    }
    const RVec& eigenvalues() const { return es_.eigenvalues(); }

private:
    double h_;
    Eigen::SelfAdjointEigenSolver<CMat> es_;
};

inline FockOperator propagate(const FockOperator& hmat, double t, double h) {
    return {hmat.basis, Propagator(hmat.mat, h).at(t)};
}

/// U_red(t) = e^{itH_0/h} e^{-itH/h}.
class ReducedPropagator {
public:
    ReducedPropagator(const Hamiltonian& ham) : basis_(ham.full.basis), free_(ham.h0.mat, ham.h), full_(ham.full.mat, ham.h) {}
    CMat at(double t) const { return free_.at(-t) * full_.at(t); }
    const Propagator& free_part() const { return free_; }
    const Propagator& full() const { return full_; }
    const std::shared_ptr<const FockBasis>& basis() const { return basis_; }

private:
    std::shared_ptr<const FockBasis> basis_;
    Propagator free_, full_;
};

inline FockOperator reduced_propagator(const modes::ModeModel& model, double h, double t,
                                       std::shared_ptr<const FockBasis> basis) {
    const auto ham = build_hamiltonian(model, h, basis);
    return {basis, ReducedPropagator(ham).at(t)};
}

// ---------------------------------------------------------------- coherent states

inline constexpr double default_tail_threshold = 1e-6;

struct CoherentVector {
    CVec photon; ///< photon-factor amplitudes
    double tail = 0.0; ///< mass lost to truncation, 1 - |photon|^2

    void require(double threshold = default_tail_threshold) const {
        if (tail > threshold) throw TruncationError("coherent state not resolved by the Fock cutoff", tail);
    }
};

/// prod_k e^{-|alpha_k|^2/2} alpha_k^{n_k} / sqrt(n_k!), alpha = (q + ip)/sqrt(2h).
inline CoherentVector coherent_vector(const PhasePoint& x, double h, const FockBasis& basis) {
    if (!(h > 0.0)) throw ContractError("coherent_vector: h must be positive");
    if (x.dim() != basis.n_modes()) throw ContractError("coherent_vector: dimension mismatch");
    const CVec alpha = x.z() / std::sqrt(2.0 * h);
    const std::size_t j = basis.n_modes(), nmax = basis.n_max();
    // Per-mode tables alpha^n / sqrt(n!) e^{-|alpha|^2/2}.
    std::vector<std::vector<cplx>> tab(j, std::vector<cplx>(nmax + 1));
    for (std::size_t k = 0; k < j; ++k) {
        const cplx a = alpha(Eigen::Index(k));
        tab[k][0] = std::exp(-0.5 * std::norm(a));
        for (std::size_t n = 1; n <= nmax; ++n) tab[k][n] = tab[k][n - 1] * a / std::sqrt(double(n));
    }
    CoherentVector out;
    out.photon = CVec(Eigen::Index(basis.photon_dim()));
    for (std::size_t i = 0; i < basis.photon_dim(); ++i) {
        const auto& n = basis.tuple(i);
        cplx v = 1.0;
        for (std::size_t k = 0; k < j; ++k) v *= tab[k][std::size_t(n[k])];
        out.photon(Eigen::Index(i)) = v;
    }
    // Total photon number of a coherent state is Poisson with mean |alpha|^2.
    out.tail = boost::math::gamma_p(double(nmax + 1), alpha.squaredNorm());
    return out;
}

/// Columns Psi_X (x) e_s for each spin basis vector s.
inline CMat coherent_frame(const CoherentVector& psi, const FockBasis& basis) {
    return Eigen::kroneckerProduct(CMat(psi.photon),
                                   CMat::Identity(Eigen::Index(basis.spin_dim()), Eigen::Index(basis.spin_dim())));
}

/// Spin block M = (Psi_X (x) I)^dagger A (Psi_X (x) I); M(s', s) = <A(Psi_X (x) e_s), Psi_X (x) e_s'>.
inline CMat wick_symbol(const CMat& a, const PhasePoint& x, double h, const FockBasis& basis,
                        double tail_threshold = default_tail_threshold) {
    const auto psi = coherent_vector(x, h, basis);
    psi.require(tail_threshold);
    const CMat v = coherent_frame(psi, basis);
    return v.adjoint() * a * v;
}

inline constexpr double default_bisymbol_log_threshold = 30.0;

/// Spin block of <A Psi_X, Psi_Y> divided by <Psi_X, Psi_Y>.
inline CMat bisymbol(const CMat& a, const PhasePoint& x, const PhasePoint& y, double h, const FockBasis& basis,
                     double log_threshold = default_bisymbol_log_threshold,
                     double tail_threshold = default_tail_threshold) {
    ps::require_same_dim(x, y);
    const double expo = (x - y).norm2() / (4.0 * h);
    if (expo > log_threshold)
        throw ContractError("bisymbol: coherent overlap underflows (|X-Y|^2/(4h) = " + io::format_double(expo) + ")");
    const auto px = coherent_vector(x, h, basis), py = coherent_vector(y, h, basis);
    px.require(tail_threshold);
    py.require(tail_threshold);
    const cplx ov = py.photon.dot(px.photon); // conj(Psi_Y) . Psi_X
    return coherent_frame(py, basis).adjoint() * a * coherent_frame(px, basis) / ov;
}

// ---------------------------------------------------------------- identities

/// Operator norm of the block of A on the given index set (rows and columns).
inline double restricted_norm(const CMat& a, const std::vector<Eigen::Index>& idx) {
    const auto n = Eigen::Index(idx.size());
    CMat b(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < n; ++c) b(r, c) = a(idx[std::size_t(r)], idx[std::size_t(c)]);
    return op_norm(b);
}

/// || Op(F o chi_t) - e^{itH_ph/h} Op(F) e^{-itH_ph/h} || on the interior shell (photon factor).
inline double gamma_conjugation_check(const ps::LinearSymbol& f, double t, const modes::ModeModel& model, double h,
                                      const FockBasis& basis, std::size_t margin = 2) {
    if (f.dim() != model.n_modes() || basis.n_modes() != model.n_modes())
        throw ContractError("gamma_conjugation_check: dimension mismatch");
    const LadderSet l = build_ladders(basis);
    const CMat hph = h * second_quantize(model.W, l);
    const Propagator u(hph, h);
    const CMat rhs = u.at(-t) * segal_quantize(f, h, l) * u.at(t);
    const CMat lhs = segal_quantize(f.pushed(ps::FreeFlow(model.W), t), h, l);
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < basis.photon_dim(); ++i)
        if (basis.total(i) + margin <= basis.n_max()) idx.push_back(Eigen::Index(i));
    return restricted_norm(lhs - rhs, idx);
}

struct BealsRow {
    std::size_t mode = 0;
    double comm_q = 0.0; ///< ||[Q_h(e_k) (x) I, U_red]|| on the interior shell
    double comm_p = 0.0;
    double bound = 0.0;  ///< h |t| eps_k(t)
    double ratio_q = 0.0;
    double ratio_p = 0.0;
};

inline std::vector<BealsRow> beals_commutator_norms(const modes::ModeModel& model, double h, double t,
                                                    std::shared_ptr<const FockBasis> basis, const RVec& epsilon,
                                                    std::size_t margin = 2) {
    require_compatible(model, *basis);
    if (std::size_t(epsilon.size()) != model.n_modes()) throw ContractError("beals: epsilon length mismatch");
    const auto ham = build_hamiltonian(model, h, basis);
    const CMat u = ReducedPropagator(ham).at(t);
    const LadderSet l = build_ladders(*basis);
    const auto idx = basis->interior(margin);
    std::vector<BealsRow> rows;
    for (std::size_t k = 0; k < model.n_modes(); ++k) {
        const CMat q = photon_to_full(field_q(k, h, l), *basis);
        const CMat p = photon_to_full(field_p(k, h, l), *basis);
        BealsRow r;
        r.mode = k;
        r.comm_q = restricted_norm(q * u - u * q, idx);
        r.comm_p = restricted_norm(p * u - u * p, idx);
        r.bound = h * std::abs(t) * epsilon(Eigen::Index(k));
        r.ratio_q = r.bound > 0.0 ? r.comm_q / r.bound : (r.comm_q == 0.0 ? 0.0 : INFINITY);
        r.ratio_p = r.bound > 0.0 ? r.comm_p / r.bound : (r.comm_p == 0.0 ? 0.0 : INFINITY);
        rows.push_back(r);
    }
    return rows;
}

/// <e^{-itH/h}(Psi_X (x) a), Psi_Y (x) b>.
inline cplx transition_amplitude(const Propagator& full, double t, const PhasePoint& x, const PhasePoint& y,
                                 const CVec& a, const CVec& b, double h, const FockBasis& basis,
                                 double tail_threshold = default_tail_threshold) {
    if (std::size_t(a.size()) != basis.spin_dim() || std::size_t(b.size()) != basis.spin_dim())
        throw ContractError("transition_amplitude: spin vector dimension mismatch");
    const auto px = coherent_vector(x, h, basis), py = coherent_vector(y, h, basis);
    px.require(tail_threshold);
    py.require(tail_threshold);
    const CVec in = Eigen::kroneckerProduct(px.photon, a);
    const CVec out = Eigen::kroneckerProduct(py.photon, b);
    return out.dot(full.at(t) * in);
}

inline cplx transition_amplitude(const modes::ModeModel& model, double h, double t, const PhasePoint& x,
                                 const PhasePoint& y, const CVec& a, const CVec& b,
                                 std::shared_ptr<const FockBasis> basis) {
    const auto ham = build_hamiltonian(model, h, basis);
    return transition_amplitude(Propagator(ham.full.mat, h), t, x, y, a, b, h, *basis);
}

} // namespace semiqed::fock
