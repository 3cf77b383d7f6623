#pragma once

// Rotating drive on a single spin at the origin and the rotating-frame reduction
// to a time-independent Hamiltonian.

#include <cmath>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include <Eigen/SparseCore>
#include <boost/numeric/odeint.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "semiqed/fock.hpp"
#include "semiqed/io.hpp"
#include "semiqed/linalg.hpp"
#include "semiqed/modes.hpp"

namespace semiqed::frame {

using fock::FockBasis;
using fock::FockOperator;

/// Field (B1 cos(omega t + phase), B1 sin(omega t + phase), 0) on top of the constant (0, 0, beta3).
struct RotatingDrive {
    double b1 = 0.0;
    double omega = 0.0;
    double beta3 = 0.0;
    double phase = 0.0;

    double angle(double t) const { return omega * t + phase; }
    Vec3 field(double t) const { return {b1 * std::cos(angle(t)), b1 * std::sin(angle(t)), 0.0}; }

    io::json to_json() const { return {{"B1", b1}, {"omega", omega}, {"beta3", beta3}, {"phase", phase}}; }
    static RotatingDrive from_json(const io::json& j) {
        RotatingDrive d;
        d.b1 = j.value("B1", 0.0);
        d.omega = j.value("omega", 0.0);
        d.beta3 = j.value("beta3", 0.0);
        d.phase = j.value("phase", 0.0);
        for (double v : {d.b1, d.omega, d.beta3, d.phase})
            if (!std::isfinite(v)) throw ConfigError("drive parameters must be finite");
        return d;
    }
};

/// diag(e^{-i theta/2}, e^{i theta/2}); p_spin(omega t) is the spin frame at time t.
inline CMat p_spin_angle(double theta) {
    CMat p = CMat::Zero(2, 2);
    p(0, 0) = std::exp(-I_unit * (theta / 2));
    p(1, 1) = std::exp(I_unit * (theta / 2));
    return p;
}

inline CMat p_spin(double t, double omega) { return p_spin_angle(omega * t); }

/// P_spin(t)^{-1} sigma_j P_spin(t).
inline CMat rotated_sigma(int j, double t, double omega) {
    const CMat p = p_spin(t, omega);
    return p.adjoint() * pauli::sigma(j) * p;
}

/// Matrix part of P^{-1}(i h d/dt - h M(t))P + h (B1 sigma_1 + (beta3 - omega/2) sigma_3),
/// with M(t) the drive plus constant field; zero when the conjugation identity holds.
inline double conjugation_identity_residual(const RotatingDrive& d, double t, double h) {
    const CMat p = p_spin_angle(d.angle(t));
    CMat pdot = CMat::Zero(2, 2);
    pdot(0, 0) = -I_unit * (d.omega / 2) * p(0, 0);
    pdot(1, 1) = I_unit * (d.omega / 2) * p(1, 1);
    const Vec3 f = d.field(t);
    const CMat m = f(0) * pauli::sigma(1) + f(1) * pauli::sigma(2) + d.beta3 * pauli::sigma(3);
    const CMat lhs = I_unit * h * p.adjoint() * pdot - h * p.adjoint() * m * p;
    const CMat rhs = -h * (d.b1 * pauli::sigma(1) + (d.beta3 - d.omega / 2) * pauli::sigma(3));
    return max_abs(lhs - rhs);
}

/// Copy of the model with constant field (0, 0, beta3).
inline modes::ModeModel with_constant_field(modes::ModeModel m, const Vec3& beta) {
    m.beta = beta;
    return m;
}

inline void require_single_spin(const modes::ModeModel& m) {
    if (m.n_spins() != 1) throw ContractError("rotating drive needs exactly one spin");
}

struct PropagationStats {
    std::size_t rhs_evaluations = 0;
    double unitarity_defect = 0.0;
};

struct OdeTolerances {
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    double initial_step = 1e-3;
};

/// Solve i h dU/dt = (H(h) + h B(t).sigma) U, U(0) = I, on the full truncated space.
inline FockOperator propagate_time_dependent(const modes::ModeModel& model, const RotatingDrive& drive, double h, double t,
                                             std::shared_ptr<const FockBasis> basis, const OdeTolerances& tol = {},
                                             PropagationStats* stats = nullptr) {
    require_single_spin(model);
    const auto ham = fock::build_hamiltonian(with_constant_field(model, Vec3(0, 0, drive.beta3)), h, basis);
    const auto n = Eigen::Index(basis->dim());
    using Sparse = Eigen::SparseMatrix<cplx>;
    const Sparse hs = CMat(ham.full.mat / h).sparseView(cplx(0.0), 1e-300);
    const Sparse s1 = fock::spin_to_full(pauli::sigma(1), *basis).sparseView();
    const Sparse s2 = fock::spin_to_full(pauli::sigma(2), *basis).sparseView();
    using State = std::vector<cplx>;
    State y(std::size_t(n * n), cplx(0.0));
    Eigen::Map<CMat>(y.data(), n, n).setIdentity();
    std::size_t count = 0;
    auto rhs = [&](const State& u, State& du, double s) {
        ++count;
        du.resize(u.size());
        const Eigen::Map<const CMat> um(u.data(), n, n);
        Eigen::Map<CMat> dm(du.data(), n, n);
        const Vec3 f = drive.field(s);
        dm = hs * um;
        if (f(0) != 0.0) dm += f(0) * (s1 * um);
        if (f(1) != 0.0) dm += f(1) * (s2 * um);
        dm *= -I_unit;
    };
    namespace ode = boost::numeric::odeint;
    if (t != 0.0) {
        try {
            ode::integrate_adaptive(ode::make_controlled(tol.abs_tol, tol.rel_tol, ode::runge_kutta_fehlberg78<State>()), rhs,
                                    y, 0.0, t, t > 0 ? tol.initial_step : -tol.initial_step);
        } catch (const std::exception& e) {
            throw SolverError(std::string("time-dependent propagation failed: ") + e.what());
        }
    }
    FockOperator out{basis, Eigen::Map<CMat>(y.data(), n, n)};
    if (stats) {
        stats->rhs_evaluations = count;
        stats->unitarity_defect = unitarity_defect(out.mat);
    }
    return out;
}

// ---------------------------------------------------------------- photon rotations

/// Action of rotations about e3 on a computed mode set: D(theta)_{k'k} = (f_k', pi(R(theta)) f_k).
class ModeRotation {
public:
    explicit ModeRotation(const modes::ModeModel& model) {
        if (model.kind != modes::ModelKind::computed)
            throw CapabilityError("photon rotation needs a computed mode model (synthetic models have no rotation action)");
        space_ = std::make_shared<modes::ModeSpace>(model.labels, model.quadrature);
        require_complete_multiplets();
        const RMat d0 = matrix(generator_angle);
        generator_ = RMat(d0.log()) / generator_angle;
        // Exact generators are antisymmetric; remove roundoff.
        generator_ = 0.5 * (generator_ - generator_.transpose()).eval();
        commutator_defect_ = max_abs(CMat((model.W * generator_ - generator_ * model.W).cast<cplx>()));
    }

    static constexpr double generator_angle = 0.1;

    /// D(theta) by quadrature on the sphere rule of the angular basis.
    RMat matrix(double theta) const {
        const auto& basis = space_->basis();
        const auto& rule = basis.rule();
        const auto& labels = space_->labels();
        const auto n = Eigen::Index(labels.size());
        const double c = std::cos(theta), s = std::sin(theta);
        Eigen::Matrix3d r;
        r << c, -s, 0, s, c, 0, 0, 0, 1;
        RMat d = RMat::Zero(n, n);
        for (Eigen::Index a = 0; a < n; ++a)
            for (Eigen::Index b = 0; b < n; ++b) {
                if (labels[std::size_t(a)].m != labels[std::size_t(b)].m) continue;
                double acc = 0.0;
                for (std::size_t q = 0; q < rule.size(); ++q) {
                    const Vec3& w = rule.points[q];
                    acc += rule.weights[q] * basis.eval(labels[std::size_t(a)].n, w)
                                                 .dot(r * basis.eval(labels[std::size_t(b)].n, r.transpose() * w));
                }
                d(a, b) = acc;
            }
        return d;
    }

    const RMat& generator() const { return generator_; }
    /// ||W G - G W||; zero when the frequency matrix is rotation invariant.
    double commutator_defect() const { return commutator_defect_; }

private:
    void require_complete_multiplets() const {
        std::map<std::tuple<unsigned, int, int>, std::vector<int>> groups;
        for (const auto& l : space_->labels()) {
            const auto& f = space_->basis()[l.n];
            groups[{l.m, f.ell, int(f.family)}].push_back(f.member);
        }
        for (const auto& [key, members] : groups) {
            const int ell = std::get<1>(key);
            if (members.size() != std::size_t(2 * ell + 1))
                throw ConfigError("rotating-frame check needs whole angular multiplets (m = " +
                                  std::to_string(std::get<0>(key)) + ", ell = " + std::to_string(ell) + " is incomplete)");
        }
    }

    std::shared_ptr<modes::ModeSpace> space_;
    RMat generator_;
    double commutator_defect_ = 0.0;
};

/// P(t) split into factors; `modes` is the orthogonal mode-space matrix of the photon rotation,
/// absent when the model has no rotation action.
struct FrameTransform {
    CMat spin;
    std::optional<RMat> modes;

    bool has_photon_part() const { return modes.has_value(); }
};

inline FrameTransform frame_transform(const modes::ModeModel& model, const RotatingDrive& drive, double t) {
    FrameTransform f{p_spin_angle(drive.angle(t)), std::nullopt};
    if (model.kind == modes::ModelKind::computed) f.modes = ModeRotation(model).matrix(drive.angle(t));
    return f;
}

/// Frame on the full space: Gamma(D(theta)) (x) P_spin(theta), theta = omega t + phase. Both factors
/// represent the same rotation R(theta) about e3.
inline CMat frame_operator(const CMat& dgamma_generator, double theta) {
    const CMat ph = (theta * dgamma_generator).exp();
    return Eigen::kroneckerProduct(ph, p_spin_angle(theta));
}

struct FrameReport {
    double residual = 0.0;         ///< || U(t) - P(t) U_TR(t) P(0)^{-1} ||
    double literal_residual = 0.0; ///< same, with H_TR lacking the photon frame term
    double spin_identity = 0.0;    ///< conjugation identity residual at t
    double generator_commutator = 0.0;
    double unitarity_defect = 0.0;
    std::size_t rhs_evaluations = 0;
    OdeTolerances tolerances;

    io::json to_json() const {
        return {{"residual", residual},
                {"literal_residual", literal_residual},
                {"spin_identity", spin_identity},
                {"generator_commutator", generator_commutator},
                {"unitarity_defect", unitarity_defect},
                {"rhs_evaluations", rhs_evaluations},
                {"abs_tol", tolerances.abs_tol},
                {"rel_tol", tolerances.rel_tol}};
    }
};

/// Compare the driven propagator with the rotating-frame propagator. H_TR is
/// H_0 + h (sum_j Op(B_j(0)) sigma_j + B1 sigma_1 + (beta3 - omega/2) sigma_3) - i h omega dGamma(G),
/// the last term coming from the time dependence of the photon frame.
inline FrameReport frame_equivalence_check(const modes::ModeModel& model, const RotatingDrive& drive, double h, double t,
                                           std::shared_ptr<const FockBasis> basis, const OdeTolerances& tol = {}) {
    require_single_spin(model);
    if (!model.positions.empty() && !model.positions[0].isZero(0.0))
        throw ContractError("rotating-frame check needs the spin at the origin");
    const ModeRotation rot(model);
    FrameReport rep;
    rep.tolerances = tol;
    rep.generator_commutator = rot.commutator_defect();
    rep.spin_identity = conjugation_identity_residual(drive, t, h);

    PropagationStats stats;
    const auto u = propagate_time_dependent(model, drive, h, t, basis, tol, &stats);
    rep.rhs_evaluations = stats.rhs_evaluations;
    rep.unitarity_defect = stats.unitarity_defect;

    const auto ladders = fock::build_ladders(*basis);
    const CMat dg = fock::second_quantize(rot.generator(), ladders);
    const auto tr_model = with_constant_field(model, Vec3(drive.b1, 0.0, drive.beta3 - drive.omega / 2));
    const auto literal = fock::build_hamiltonian(tr_model, h, basis);
    const CMat frame_term = -I_unit * h * drive.omega * fock::photon_to_full(dg, *basis);
    const CMat p_t = frame_operator(dg, drive.angle(t));
    const CMat p_0 = frame_operator(dg, drive.angle(0.0));
    const auto predicted = [&](const CMat& htr) {
        return CMat(p_t * fock::Propagator(htr, h).at(t) * p_0.adjoint());
    };
    rep.residual = op_norm(u.mat - predicted(literal.full.mat + frame_term));
    rep.literal_residual = op_norm(u.mat - predicted(literal.full.mat));
    return rep;
}

} // namespace semiqed::frame
