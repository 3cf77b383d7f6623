#pragma once

// Photon mode basis f_mn(k) = u_m(|k|) v_n(k/|k|), field coupling coefficients,
// compressed frequency matrix and the ModeModel container.

#include <boost/math/special_functions/legendre.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semiqed/io.hpp"
#include "semiqed/linalg.hpp"
#include "semiqed/quadrature.hpp"

namespace semiqed::modes {

using json = nlohmann::json;

// ---------------------------------------------------------------- radial part

/// Generalized Laguerre polynomial L_m^{(alpha)}(x) by forward recurrence.
inline double laguerre(unsigned m, double alpha, double x) {
    double prev = 1.0;
    if (m == 0) return prev;
    double cur = 1.0 + alpha - x;
    for (unsigned k = 1; k < m; ++k) {
        const double next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    return cur;
}

/// C_m such that int_0^inf u_m(r)^2 r^2 dr = 1.
inline double radial_norm(unsigned m) {
    // int e^{-x} L_m^{(1/2)}(x)^2 x^{1/2} dx = Gamma(m + 3/2) / m!, and r^2 dr = x^{1/2} dx / 2.
    return std::sqrt(2.0 * std::exp(std::lgamma(m + 1.0) - std::lgamma(m + 1.5)));
}

/// u_m(r) = C_m e^{-r^2/2} L_m^{(1/2)}(r^2). Returns 0 once e^{-r^2/2} underflows.
inline double eval_radial(unsigned m, double r) {
    if (!(r >= 0.0)) throw ContractError("eval_radial: r must be nonnegative");
    const double x = r * r;
    if (0.5 * x > 700.0) return 0.0;
    return radial_norm(m) * std::exp(-0.5 * x) * laguerre(m, 0.5, x);
}

/// Eigenvalue of L = -d^2/dr^2 - (2/r) d/dr + r^2 for u_m.
inline double radial_eigenvalue(unsigned m) { return 4.0 * m + 3.0; }

struct RadialFunction {
    unsigned m = 0;
    double norm = 1.0;
    double r_max = 20.0;
    std::size_t nodes = 200;

    static RadialFunction make(unsigned m, double r_max = 20.0, std::size_t nodes = 200) {
        return {m, radial_norm(m), r_max, nodes};
    }
    double operator()(double r) const { return eval_radial(m, r); }
    double eigenvalue() const { return radial_eigenvalue(m); }
    /// Quadrature residual |int u_m^2 r^2 dr - 1|.
    double norm_residual() const {
        const auto rule = quad::gauss_legendre(nodes, 0.0, r_max);
        double s = 0.0;
        for (std::size_t i = 0; i < rule.size(); ++i) {
            const double u = eval_radial(m, rule.nodes[i]);
            s += rule.weights[i] * u * u * rule.nodes[i] * rule.nodes[i];
        }
        return std::abs(s - 1.0);
    }
};

/// Relative residual ||L u_m - (4m+3) u_m|| / ||u_m|| with a second-order central
/// difference L on the uniform interior grid of [r_lo, r_hi] (n_points nodes).
inline double radial_eigen_residual(unsigned m, double r_lo, double r_hi, std::size_t n_points) {
    if (n_points < 3 || !(r_lo > 0.0) || !(r_hi > r_lo)) throw ContractError("radial_eigen_residual: bad grid");
    const double dr = (r_hi - r_lo) / double(n_points - 1);
    const double lambda = radial_eigenvalue(m);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 1; i + 1 < n_points; ++i) {
        const double r = r_lo + dr * double(i);
        const double um = eval_radial(m, r - dr), u0 = eval_radial(m, r), up = eval_radial(m, r + dr);
        const double d2 = (up - 2.0 * u0 + um) / (dr * dr);
        const double d1 = (up - um) / (2.0 * dr);
        const double lu = -d2 - 2.0 / r * d1 + r * r * u0;
        num += (lu - lambda * u0) * (lu - lambda * u0);
        den += u0 * u0;
    }
    return std::sqrt(num / den);
}

// ---------------------------------------------------------------- cutoff

/// chi(r): windowed_exp is amplitude * exp(-1/(r - r0)) * exp(-r) for r > r0, else 0.
struct Cutoff {
    enum class Kind { zero, windowed_exp };
    Kind kind = Kind::windowed_exp;
    double r0 = 0.2;
    double amplitude = 1.0;

    static Cutoff zero() { return {Kind::zero, 0.2, 0.0}; }

    double operator()(double r) const {
        if (kind == Kind::zero || r <= r0) return 0.0;
        return amplitude * std::exp(-1.0 / (r - r0) - r);
    }
    bool is_zero() const { return kind == Kind::zero || amplitude == 0.0; }

    void validate() const {
        if (kind == Kind::windowed_exp && !(r0 > 0.0))
            throw ConfigError("cutoff: chi must vanish on a neighborhood of 0 (need r0 > 0, got " +
                              io::format_double(r0) + ")");
        if (!std::isfinite(amplitude)) throw ConfigError("cutoff: amplitude must be finite");
    }

    json to_json() const {
        return json{{"kind", kind == Kind::zero ? "zero" : "windowed_exp"}, {"r0", r0}, {"amplitude", amplitude}};
    }
    static Cutoff from_json(const json& j) {
        Cutoff c;
        const std::string k = j.value("kind", std::string("windowed_exp"));
        if (k == "zero") {
            c = zero();
        } else if (k == "windowed_exp") {
            c.kind = Kind::windowed_exp;
        } else {
            throw ConfigError("cutoff: unknown kind '" + k + "'");
        }
        c.r0 = j.value("r0", c.r0);
        c.amplitude = j.value("amplitude", c.kind == Kind::zero ? 0.0 : 1.0);
        c.validate();
        return c;
    }
};

// ---------------------------------------------------------------- angular part

enum class Family { gradient, curl };

inline const char* family_name(Family f) { return f == Family::gradient ? "gradient" : "curl"; }

/// Tangent vector field on S^2 sampled on a sphere rule.
struct AngularField {
    std::size_t n = 0; ///< position in the basis ordering
    int ell = 1;
    int member = 0; ///< -ell..ell; negative = sin(|m| phi), positive = cos(m phi)
    Family family = Family::gradient;
    double laplacian_tag = 2.0; ///< ell(ell+1); metadata only
    std::vector<Vec3> samples;
};

namespace detail {

// Surface gradient of the real orthonormal spherical harmonic Y_{ell,member}.
inline Vec3 surface_gradient(int ell, int member, const Vec3& w) {
    constexpr double pole_guard = 1e-9;
    const double z = std::clamp(w.z(), -1.0, 1.0);
    double theta = std::acos(z);
    theta = std::clamp(theta, pole_guard, pi - pole_guard);
    const double phi = std::atan2(w.y(), w.x());
    const double ct = std::cos(theta), st = std::sin(theta);
    const int m = std::abs(member);

    const double norm = std::sqrt((2.0 * ell + 1.0) / (4.0 * pi) *
                                  std::exp(std::lgamma(ell - m + 1.0) - std::lgamma(ell + m + 1.0))) *
                        (m == 0 ? 1.0 : std::sqrt(2.0));
    const double p = boost::math::legendre_p(ell, m, ct);
    const double p_lo = (ell - 1 >= m) ? boost::math::legendre_p(ell - 1, m, ct) : 0.0;
    const double dp_dtheta = -((ell + m) * p_lo - ell * ct * p) / st;

    double az, daz;
    if (member > 0) {
        az = std::cos(m * phi);
        daz = -m * std::sin(m * phi);
    } else if (member < 0) {
        az = std::sin(m * phi);
        daz = m * std::cos(m * phi);
    } else {
        az = 1.0;
        daz = 0.0;
    }
    const Vec3 e_theta(ct * std::cos(phi), ct * std::sin(phi), -st);
    const Vec3 e_phi(-std::sin(phi), std::cos(phi), 0.0);
    return norm * (dp_dtheta * az * e_theta + p * daz / st * e_phi);
}

} // namespace detail

/// Two families of tangent fields per degree: gradient-type grad_S Y / sqrt(l(l+1)) and
/// curl-type omega x (gradient-type). Ordering: for each ell, gradient members -ell..ell,
/// then curl members -ell..ell. Fields are Loewdin-orthonormalized on the sphere rule.
class AngularBasis {
public:
    AngularBasis(int ell_max, quad::SphereRule rule) : ell_max_(ell_max), rule_(std::move(rule)) {
        if (ell_max < 1) throw ContractError("build_angular_basis: ell_max must be >= 1");
        if (rule_.exact_degree() < std::size_t(2 * ell_max + 2))
            throw ResolutionError("sphere rule (" + std::to_string(rule_.n_theta) + "x" + std::to_string(rule_.n_phi) +
                                  ", exact degree " + std::to_string(rule_.exact_degree()) +
                                  ") too coarse for ell_max=" + std::to_string(ell_max) + "; need exact degree >= " +
                                  std::to_string(2 * ell_max + 2));
        for (int l = 1; l <= ell_max; ++l)
            for (Family f : {Family::gradient, Family::curl})
                for (int mm = -l; mm <= l; ++mm) labels_.push_back({l, mm, f});

        const std::size_t nf = labels_.size(), nq = rule_.size();
        std::vector<std::vector<Vec3>> raw(nf, std::vector<Vec3>(nq));
        for (std::size_t i = 0; i < nf; ++i)
            for (std::size_t q = 0; q < nq; ++q) raw[i][q] = eval_raw(i, rule_.points[q]);

        RMat gram(nf, nf);
        for (std::size_t a = 0; a < nf; ++a)
            for (std::size_t b = a; b < nf; ++b) {
                double s = 0.0;
                for (std::size_t q = 0; q < nq; ++q) s += rule_.weights[q] * raw[a][q].dot(raw[b][q]);
                gram(a, b) = gram(b, a) = s;
            }
        Eigen::SelfAdjointEigenSolver<RMat> es(gram);
        if (es.eigenvalues().minCoeff() <= 1e-10) throw ResolutionError("angular Gram matrix is singular");
        transform_ = es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
                     es.eigenvectors().transpose();

        fields_.resize(nf);
        for (std::size_t n = 0; n < nf; ++n) {
            auto& f = fields_[n];
            f.n = n;
            f.ell = labels_[n].ell;
            f.member = labels_[n].member;
            f.family = labels_[n].family;
            f.laplacian_tag = double(f.ell * (f.ell + 1));
            f.samples.assign(nq, Vec3::Zero());
            for (std::size_t i = 0; i < nf; ++i) {
                const double c = transform_(Eigen::Index(i), Eigen::Index(n));
                if (c == 0.0) continue;
                for (std::size_t q = 0; q < nq; ++q) f.samples[q] += c * raw[i][q];
            }
        }
    }

    int ell_max() const { return ell_max_; }
    std::size_t size() const { return fields_.size(); }
    const std::vector<AngularField>& fields() const { return fields_; }
    const AngularField& operator[](std::size_t n) const { return fields_.at(n); }
    const quad::SphereRule& rule() const { return rule_; }

    /// v_n(omega) at an arbitrary unit vector.
    Vec3 eval(std::size_t n, const Vec3& omega) const {
        Vec3 v = Vec3::Zero();
        for (std::size_t i = 0; i < labels_.size(); ++i) {
            const double c = transform_(Eigen::Index(i), Eigen::Index(n));
            if (std::abs(c) < 1e-15) continue;
            v += c * eval_raw(i, omega);
        }
        return v;
    }

    /// Gram matrix of the returned fields under the basis' own rule.
    RMat gram() const { return gram_on(rule_); }

    RMat gram_on(const quad::SphereRule& rule) const {
        const std::size_t nf = size();
        std::vector<std::vector<Vec3>> vals(nf, std::vector<Vec3>(rule.size()));
        for (std::size_t n = 0; n < nf; ++n)
            for (std::size_t q = 0; q < rule.size(); ++q) vals[n][q] = eval(n, rule.points[q]);
        RMat g(nf, nf);
        for (std::size_t a = 0; a < nf; ++a)
            for (std::size_t b = a; b < nf; ++b) {
                double s = 0.0;
                for (std::size_t q = 0; q < rule.size(); ++q) s += rule.weights[q] * vals[a][q].dot(vals[b][q]);
                g(Eigen::Index(a), Eigen::Index(b)) = g(Eigen::Index(b), Eigen::Index(a)) = s;
            }
        return g;
    }

    /// Index of (ell, family, member) in the ordering.
    static std::size_t index_of(int ell, Family family, int member) {
        std::size_t base = 0;
        for (int l = 1; l < ell; ++l) base += std::size_t(2 * (2 * l + 1));
        if (family == Family::curl) base += std::size_t(2 * ell + 1);
        return base + std::size_t(member + ell);
    }

private:
    struct Label {
        int ell;
        int member;
        Family family;
    };

    Vec3 eval_raw(std::size_t i, const Vec3& omega) const {
        const Label& l = labels_[i];
        const Vec3 w = omega.normalized();
        const Vec3 g = detail::surface_gradient(l.ell, l.member, w) / std::sqrt(double(l.ell * (l.ell + 1)));
        return l.family == Family::gradient ? g : Vec3(w.cross(g));
    }

    int ell_max_;
    quad::SphereRule rule_;
    std::vector<Label> labels_;
    RMat transform_;
    std::vector<AngularField> fields_;
};

inline std::size_t default_theta_nodes(int ell_max) { return std::size_t(std::max(ell_max + 2, 24)); }
inline std::size_t default_phi_nodes(int ell_max) {
    std::size_t n = std::size_t(std::max(2 * ell_max + 4, 48));
    return n + (n % 2); // even, so the rule is closed under omega -> -omega
}

inline AngularBasis build_angular_basis(int ell_max, const quad::SphereRule& rule) {
    return AngularBasis(ell_max, rule);
}

inline AngularBasis build_angular_basis(int ell_max) {
    return AngularBasis(ell_max, quad::sphere_product(default_theta_nodes(ell_max), default_phi_nodes(ell_max)));
}

// ---------------------------------------------------------------- mode space

struct ModeLabel {
    unsigned m = 0;    ///< radial index
    std::size_t n = 0; ///< angular index in AngularBasis ordering
    bool operator==(const ModeLabel&) const = default;
};

struct QuadratureSettings {
    double r_max = 20.0;
    std::size_t radial_nodes = 200;
    std::size_t theta_nodes = 0; ///< 0 = default for the basis' ell_max
    std::size_t phi_nodes = 0;
    double tolerance = 1e-9; ///< absolute node-doubling tolerance for coupling integrals

    json to_json() const {
        return json{{"r_max", r_max},
                    {"radial_nodes", radial_nodes},
                    {"theta_nodes", theta_nodes},
                    {"phi_nodes", phi_nodes},
                    {"tolerance", tolerance}};
    }
    static QuadratureSettings from_json(const json& j) {
        QuadratureSettings q;
        q.r_max = j.value("r_max", q.r_max);
        q.radial_nodes = j.value("radial_nodes", q.radial_nodes);
        q.theta_nodes = j.value("theta_nodes", q.theta_nodes);
        q.phi_nodes = j.value("phi_nodes", q.phi_nodes);
        q.tolerance = j.value("tolerance", q.tolerance);
        if (!(q.r_max > 0.0) || q.radial_nodes < 2 || !(q.tolerance > 0.0))
            throw ConfigError("quadrature settings: need r_max > 0, radial_nodes >= 2, tolerance > 0");
        return q;
    }
};

inline int required_ell_max(std::span<const ModeLabel> labels) {
    int lmax = 1;
    for (const auto& l : labels) {
        std::size_t base = 0;
        int ell = 1;
        while (l.n >= base + std::size_t(2 * (2 * ell + 1))) {
            base += std::size_t(2 * (2 * ell + 1));
            ++ell;
        }
        lmax = std::max(lmax, ell);
    }
    return lmax;
}

enum class CouplingPath { automatic, factorized, direct };

/// Quadrature context for a fixed list of f_mn modes.
/// Magnetic B_{j,x}(k), or electric E_{j,x}(k) = (k/|k|) x B_{j,x}(k).
enum class FieldKind { magnetic, electric };

class ModeSpace {
public:
    ModeSpace(std::vector<ModeLabel> labels, QuadratureSettings q = {})
        : labels_(std::move(labels)), q_(q), ell_max_(required_ell_max(labels_)),
          basis_(ell_max_, quad::sphere_product(q.theta_nodes ? q.theta_nodes : default_theta_nodes(ell_max_),
                                                q.phi_nodes ? q.phi_nodes : default_phi_nodes(ell_max_))),
          fine_rule_(quad::sphere_product(2 * basis_.rule().n_theta, 2 * basis_.rule().n_phi)) {
        if (labels_.empty()) throw ContractError("mode list must be nonempty");
        unsigned mmax = 0;
        for (const auto& l : labels_) mmax = std::max(mmax, l.m);
        m_max_ = mmax;
        coarse_tab_ = angular_table(basis_.rule());
        fine_tab_ = angular_table(fine_rule_);
    }

    const std::vector<ModeLabel>& labels() const { return labels_; }
    std::size_t size() const { return labels_.size(); }
    const AngularBasis& basis() const { return basis_; }
    const QuadratureSettings& settings() const { return q_; }
    const AngularField& angular(std::size_t k) const { return basis_[labels_[k].n]; }

    /// f_k(k_vec) = u_m(|k|) v_n(k/|k|).
    Vec3 eval_mode(std::size_t k, const Vec3& kvec) const {
        const double r = kvec.norm();
        if (r == 0.0) return Vec3::Zero();
        return eval_radial(labels_[k].m, r) * basis_.eval(labels_[k].n, kvec / r);
    }

    struct CouplingResult {
        std::array<CVec, 3> c;  ///< c[j-1](k) = (Re B_{j,a,s}, f_k) + i (Im B_{j,a,s}, f_k)
        double error_estimate = 0.0;
    };

    /// All coupling coefficients at spin position a and time s, with a node-doubling estimate.
    CouplingResult couplings(const Vec3& a, double s, const Cutoff& chi, CouplingPath path = CouplingPath::automatic,
                             bool check = true) const {
        return field_coefficients(FieldKind::magnetic, a, s, chi, path, check);
    }

    /// Mode coefficients of B_{j,a,s} or E_{j,a,s}, j = 1..3.
    CouplingResult field_coefficients(FieldKind kind, const Vec3& a, double s, const Cutoff& chi,
                                      CouplingPath path = CouplingPath::automatic, bool check = true) const {
        CouplingResult out;
        for (auto& v : out.c) v = CVec::Zero(Eigen::Index(size()));
        if (chi.is_zero()) return out;
        const bool factor = path == CouplingPath::factorized || (path == CouplingPath::automatic && a.isZero(0.0));
        if (path == CouplingPath::factorized && !a.isZero(0.0))
            throw ContractError("factorized coupling path requires a = 0");
        const auto coarse = integrate(kind, a, s, chi, q_.radial_nodes, false, factor);
        out.c = coarse;
        if (check) {
            const auto fine = integrate(kind, a, s, chi, 2 * q_.radial_nodes, !factor, factor);
            double est = 0.0;
            for (int j = 0; j < 3; ++j) est = std::max(est, (fine[std::size_t(j)] - coarse[std::size_t(j)]).cwiseAbs().maxCoeff());
            out.error_estimate = est;
            if (est > q_.tolerance) throw QuadratureError("coupling quadrature did not converge", est);
        }
        return out;
    }

    /// Frequency matrix W_kl = int f_k . f_l |k| dk.
    RMat frequency_matrix() const {
        const auto rule = quad::gauss_legendre(q_.radial_nodes, 0.0, q_.r_max);
        RMat rad(m_max_ + 1, m_max_ + 1);
        for (unsigned a = 0; a <= m_max_; ++a)
            for (unsigned b = a; b <= m_max_; ++b) {
                double s = 0.0;
                for (std::size_t i = 0; i < rule.size(); ++i) {
                    const double r = rule.nodes[i];
                    s += rule.weights[i] * r * r * r * eval_radial(a, r) * eval_radial(b, r);
                }
                rad(a, b) = rad(b, a) = s;
            }
        const RMat gram = basis_.gram();
        const auto n = Eigen::Index(size());
        RMat w(n, n);
        for (Eigen::Index k = 0; k < n; ++k)
            for (Eigen::Index l = k; l < n; ++l) {
                const auto& lk = labels_[std::size_t(k)];
                const auto& ll = labels_[std::size_t(l)];
                w(k, l) = w(l, k) = rad(lk.m, ll.m) * gram(Eigen::Index(lk.n), Eigen::Index(ll.n));
            }
        return w;
    }

private:
    // Per rule and mode, the weighted angular factor of each field component.
    struct AngularTable {
        std::array<RMat, 3> wv; ///< wv[j](k, q) = w_q (v_{n_k}(omega_q) x omega_q)_j
        std::array<RMat, 3> we; ///< we[j](k, q) = -w_q v_{n_k}(omega_q)_j
        std::vector<Vec3> points;

        const std::array<RMat, 3>& of(FieldKind kind) const { return kind == FieldKind::magnetic ? wv : we; }
    };

    AngularTable angular_table(const quad::SphereRule& rule) const {
        AngularTable t;
        const auto nk = Eigen::Index(size()), nq = Eigen::Index(rule.size());
        for (auto& m : t.wv) m = RMat::Zero(nk, nq);
        for (auto& m : t.we) m = RMat::Zero(nk, nq);
        t.points = rule.points;
        std::map<std::size_t, std::vector<Vec3>> cache;
        for (Eigen::Index k = 0; k < nk; ++k) {
            const std::size_t n = labels_[std::size_t(k)].n;
            auto it = cache.find(n);
            if (it == cache.end()) {
                std::vector<Vec3> vals(rule.size());
                for (std::size_t q = 0; q < rule.size(); ++q) vals[q] = basis_.eval(n, rule.points[q]);
                it = cache.emplace(n, std::move(vals)).first;
            }
            for (Eigen::Index q = 0; q < nq; ++q) {
                // (omega x e_j) . v = e_j . (v x omega)
                // (omega x (omega x e_j)) . v = -v_j for tangent v
                const Vec3& v = it->second[std::size_t(q)];
                const Vec3 c = v.cross(rule.points[std::size_t(q)]);
                const double w = rule.weights[std::size_t(q)];
                for (int j = 0; j < 3; ++j) {
                    t.wv[std::size_t(j)](k, q) = w * c(j);
                    t.we[std::size_t(j)](k, q) = -w * v(j);
                }
            }
        }
        return t;
    }

    std::array<CVec, 3> integrate(FieldKind kind, const Vec3& a, double s, const Cutoff& chi, std::size_t radial_nodes,
                                  bool fine_sphere, bool factorized) const {
        const auto rule = quad::graded_gauss_legendre(chi.r0, std::max(q_.r_max, chi.r0 + 1.0), radial_nodes);
        const auto nr = Eigen::Index(rule.size());
        const double pref = std::pow(2.0 * pi, -1.5);
        // G(i, m) = w_i r^2 chi(r) r^{1/2} u_m(r) e^{i s r}
        CMat g(nr, Eigen::Index(m_max_ + 1));
        for (Eigen::Index i = 0; i < nr; ++i) {
            const double r = rule.nodes[std::size_t(i)];
            const cplx base = rule.weights[std::size_t(i)] * r * r * chi(r) * std::sqrt(r) * std::exp(I_unit * (s * r));
            for (unsigned m = 0; m <= m_max_; ++m) g(i, m) = base * eval_radial(m, r);
        }
        std::array<CVec, 3> out;
        const auto nk = Eigen::Index(size());
        const AngularTable& tab = fine_sphere ? fine_tab_ : coarse_tab_;
        const auto& ang_tab = tab.of(kind);
        if (factorized) {
            const CVec radial = g.colwise().sum().transpose(); // per m
            for (int j = 0; j < 3; ++j) {
                out[std::size_t(j)] = CVec(nk);
                const RVec ang = ang_tab[std::size_t(j)].rowwise().sum();
                for (Eigen::Index k = 0; k < nk; ++k)
                    out[std::size_t(j)](k) = I_unit * pref * radial(labels_[std::size_t(k)].m) * ang(k);
            }
            return out;
        }
        const auto nq = Eigen::Index(tab.points.size());
        // E(q, i) = exp(-i r_i omega_q . a); R = E * G gives per-direction radial sums.
        CMat e(nq, nr);
        for (Eigen::Index q = 0; q < nq; ++q) {
            const double wa = tab.points[std::size_t(q)].dot(a);
            for (Eigen::Index i = 0; i < nr; ++i) e(q, i) = std::exp(-I_unit * (rule.nodes[std::size_t(i)] * wa));
        }
        const CMat rsum = e * g; // (nq, m)
        for (int j = 0; j < 3; ++j) {
            const CMat full = ang_tab[std::size_t(j)].cast<cplx>() * rsum; // (nk, m)
            out[std::size_t(j)] = CVec(nk);
            for (Eigen::Index k = 0; k < nk; ++k) out[std::size_t(j)](k) = I_unit * pref * full(k, labels_[std::size_t(k)].m);
        }
        return out;
    }

    std::vector<ModeLabel> labels_;
    QuadratureSettings q_;
    int ell_max_;
    unsigned m_max_ = 0;
    AngularBasis basis_;
    quad::SphereRule fine_rule_;
    AngularTable coarse_tab_, fine_tab_;
};

/// (Re B_{j,a,s}, f_mn) + i (Im B_{j,a,s}, f_mn) for a single mode; j in {1,2,3}.
inline cplx coupling_coefficient(const ModeLabel& mode, int j, const Vec3& a, double s, const Cutoff& chi,
                                 const QuadratureSettings& q = {}, CouplingPath path = CouplingPath::automatic) {
    if (j < 1 || j > 3) throw ContractError("pauli index must be 1..3");
    const ModeSpace space({mode}, q);
    return space.couplings(a, s, chi, path).c[std::size_t(j - 1)](0);
}

/// Compressed frequency matrix on the span of the listed modes.
inline RMat compress_frequency(std::span<const ModeLabel> labels, const QuadratureSettings& q = {}) {
    const ModeSpace space(std::vector<ModeLabel>(labels.begin(), labels.end()), q);
    RMat w = space.frequency_matrix();
    Eigen::SelfAdjointEigenSolver<RMat> es(w);
    if (es.eigenvalues().minCoeff() <= 0.0) throw ResolutionError("compressed frequency matrix is not positive definite");
    return w;
}

/// Diagonal W for synthetic eigenmodes.
inline RMat compress_frequency(std::span<const double> eigenfrequencies) {
    if (eigenfrequencies.empty()) throw ContractError("mode list must be nonempty");
    RMat w = RMat::Zero(Eigen::Index(eigenfrequencies.size()), Eigen::Index(eigenfrequencies.size()));
    for (std::size_t k = 0; k < eigenfrequencies.size(); ++k) {
        if (!(eigenfrequencies[k] > 0.0)) throw ConfigError("frequencies must be positive");
        w(Eigen::Index(k), Eigen::Index(k)) = eigenfrequencies[k];
    }
    return w;
}

// ---------------------------------------------------------------- ModeModel

enum class ModelKind { synthetic, computed };

struct ModeModel {
    ModelKind kind = ModelKind::synthetic;
    RMat W;                                   ///< J x J, symmetric positive definite
    std::vector<ModeLabel> labels;            ///< computed models only
    std::vector<std::array<CVec, 3>> coupling; ///< coupling[lambda][j-1](k)
    Vec3 beta = Vec3::Zero();
    std::vector<Vec3> positions;
    Cutoff cutoff = Cutoff::zero();
    QuadratureSettings quadrature;

    std::size_t n_modes() const { return std::size_t(W.rows()); }
    std::size_t n_spins() const { return coupling.size(); }
    std::size_t spin_dimension() const { return spin_dim(n_spins()); }

    bool coupling_is_zero() const {
        for (const auto& per : coupling)
            for (const auto& v : per)
                if (v.size() && v.cwiseAbs().maxCoeff() != 0.0) return false;
        return true;
    }

    void validate() const {
        const auto j = W.rows();
        if (j == 0 || W.cols() != j) throw ConfigError("model: W must be a nonempty square matrix");
        if ((W - W.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, W.cwiseAbs().maxCoeff()))
            throw ConfigError("model: W must be symmetric");
        Eigen::SelfAdjointEigenSolver<RMat> es(W);
        if (es.eigenvalues().minCoeff() <= 0.0) throw ConfigError("model: W must be positive definite");
        if (coupling.empty()) throw ConfigError("model: need at least one spin");
        if (coupling.size() > 8) throw ConfigError("model: at most 8 spins");
        for (const auto& per : coupling)
            for (const auto& v : per)
                if (v.size() != j) throw ConfigError("model: coupling vector length must equal the number of modes");
        if (positions.size() != coupling.size()) throw ConfigError("model: one position per spin required");
        if (kind == ModelKind::computed && labels.size() != std::size_t(j))
            throw ConfigError("model: computed model needs one (m, n) label per mode");
    }
};

inline CMat unitary_flow(const RMat& w, double t) {
    // e^{i t W}
    Eigen::SelfAdjointEigenSolver<RMat> es(w);
    const CVec ph = (I_unit * t * es.eigenvalues().cast<cplx>()).array().exp();
    const CMat v = es.eigenvectors().cast<cplx>();
    return v * ph.asDiagonal() * v.adjoint();
}

/// Coefficients of B_j(a_lambda, chi_s(.)) in the truncation: e^{isW} c.
inline std::vector<std::array<CVec, 3>> rotated_coupling(const ModeModel& model, double s) {
    const CMat u = unitary_flow(model.W, s);
    auto out = model.coupling;
    for (auto& per : out)
        for (auto& v : per) v = u * v;
    return out;
}

// ---------------------------------------------------------------- (de)serialization

namespace detail {

inline json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + ": expected a 3-vector");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline std::vector<std::array<CVec, 3>> coupling_from(const json& j, std::size_t n_modes) {
    if (!j.is_array()) throw ConfigError("coupling: expected nested arrays [spin][pauli][mode][re,im]");
    std::vector<std::array<CVec, 3>> out;
    for (const auto& per_spin : j) {
        if (!per_spin.is_array() || per_spin.size() != 3) throw ConfigError("coupling: need 3 Pauli components per spin");
        std::array<CVec, 3> arr;
        for (std::size_t p = 0; p < 3; ++p) {
            const auto& modes = per_spin[p];
            if (!modes.is_array() || modes.size() != n_modes)
                throw ConfigError("coupling: entries per Pauli component must equal the number of modes");
            arr[p] = CVec(Eigen::Index(n_modes));
            for (std::size_t k = 0; k < n_modes; ++k) {
                const auto& e = modes[k];
                if (!e.is_array() || e.size() != 2) throw ConfigError("coupling: entries are [re, im] pairs");
                arr[p](Eigen::Index(k)) = cplx(e[0].get<double>(), e[1].get<double>());
            }
        }
        out.push_back(std::move(arr));
    }
    return out;
}

inline RMat w_from(const json& cfg) {
    if (cfg.contains("frequencies")) {
        const auto f = cfg.at("frequencies").get<std::vector<double>>();
        return compress_frequency(std::span<const double>(f));
    }
    if (!cfg.contains("W")) throw ConfigError("synthetic model needs 'frequencies' or 'W'");
    const auto& wj = cfg.at("W");
    std::vector<double> flat;
    std::size_t n = 0;
    if (wj.is_array() && !wj.empty() && wj[0].is_array()) {
        n = wj.size();
        for (const auto& row : wj) {
            if (row.size() != n) throw ConfigError("W must be square");
            for (const auto& x : row) flat.push_back(x.get<double>());
        }
    } else {
        flat = wj.get<std::vector<double>>();
        const std::size_t jn = cfg.value("J", std::size_t(std::llround(std::sqrt(double(flat.size())))));
        n = jn;
        if (n * n != flat.size()) throw ConfigError("W: row-major array length must be J*J");
    }
    RMat w(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) w(Eigen::Index(r), Eigen::Index(c)) = flat[r * n + c];
    return w;
}

inline std::vector<ModeLabel> labels_from(const json& j) {
    std::vector<ModeLabel> out;
    if (!j.is_array() || j.empty()) throw ConfigError("computed model: 'modes' must be a nonempty list of [m, n]");
    for (const auto& e : j) {
        if (e.is_array() && e.size() == 2) {
            const long long m = e[0].get<long long>(), n = e[1].get<long long>();
            if (m < 0 || n < 0) throw ConfigError("mode indices must be nonnegative");
            out.push_back({unsigned(m), std::size_t(n)});
        } else if (e.is_object()) {
            const int ell = e.at("ell").get<int>();
            const std::string fam = e.at("family").get<std::string>();
            const int member = e.at("member").get<int>();
            if (ell < 1 || std::abs(member) > ell) throw ConfigError("mode: need ell >= 1 and |member| <= ell");
            if (fam != "gradient" && fam != "curl") throw ConfigError("mode: family must be gradient or curl");
            out.push_back({e.at("m").get<unsigned>(),
                           AngularBasis::index_of(ell, fam == "curl" ? Family::curl : Family::gradient, member)});
        } else {
            throw ConfigError("mode entries are [m, n] pairs or {m, ell, family, member}");
        }
    }
    return out;
}

} // namespace detail

inline json to_json(const ModeModel& model) {
    json j;
    j["version"] = 1;
    j["kind"] = model.kind == ModelKind::synthetic ? "synthetic" : "computed";
    j["J"] = model.n_modes();
    json w = json::array();
    for (Eigen::Index r = 0; r < model.W.rows(); ++r)
        for (Eigen::Index c = 0; c < model.W.cols(); ++c) w.push_back(model.W(r, c));
    j["W"] = w;
    json coup = json::array();
    for (const auto& per : model.coupling) {
        json ps = json::array();
        for (const auto& v : per) {
            json modes = json::array();
            for (Eigen::Index k = 0; k < v.size(); ++k) modes.push_back(json::array({v(k).real(), v(k).imag()}));
            ps.push_back(modes);
        }
        coup.push_back(ps);
    }
    j["coupling"] = coup;
    j["beta"] = detail::vec3_json(model.beta);
    json pos = json::array();
    for (const auto& p : model.positions) pos.push_back(detail::vec3_json(p));
    j["positions"] = pos;
    j["cutoff"] = model.cutoff.to_json();
    json prov;
    prov["quadrature"] = model.quadrature.to_json();
    if (model.kind == ModelKind::computed) {
        json modes = json::array();
        for (const auto& l : model.labels) modes.push_back(json::array({l.m, l.n}));
        j["modes"] = modes;
    }
    j["provenance"] = prov;
    return j;
}

inline ModeModel from_json(const json& j) {
    ModeModel m;
    if (j.value("version", 1) != 1) throw ConfigError("model file: unsupported version");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind != "synthetic" && kind != "computed") throw ConfigError("model: kind must be synthetic or computed");
    m.kind = kind == "synthetic" ? ModelKind::synthetic : ModelKind::computed;
    m.W = detail::w_from(j);
    m.coupling = detail::coupling_from(j.at("coupling"), std::size_t(m.W.rows()));
    m.beta = detail::vec3_from(j.at("beta"), "beta");
    for (const auto& p : j.at("positions")) m.positions.push_back(detail::vec3_from(p, "positions"));
    m.cutoff = j.contains("cutoff") ? Cutoff::from_json(j.at("cutoff")) : Cutoff::zero();
    if (j.contains("provenance") && j.at("provenance").contains("quadrature"))
        m.quadrature = QuadratureSettings::from_json(j.at("provenance").at("quadrature"));
    if (m.kind == ModelKind::computed) m.labels = detail::labels_from(j.at("modes"));
    m.validate();
    return m;
}

inline std::string serialize(const ModeModel& m) { return io::dump(to_json(m)); }
inline ModeModel deserialize(const std::string& text) { return from_json(io::parse(text, "model file")); }

/// Build a model from a `synthetic` or `computed` description.
inline ModeModel build_mode_model(const json& cfg) {
    const std::string kind = cfg.value("kind", std::string());
    ModeModel m;
    m.beta = cfg.contains("beta") ? detail::vec3_from(cfg.at("beta"), "beta") : Vec3::Zero();
    if (kind == "synthetic") {
        m.kind = ModelKind::synthetic;
        m.W = detail::w_from(cfg);
        const std::size_t jn = std::size_t(m.W.rows());
        if (cfg.contains("coupling")) {
            m.coupling = detail::coupling_from(cfg.at("coupling"), jn);
        } else {
            const std::size_t n = cfg.value("spins", std::size_t(1));
            m.coupling.assign(n, {CVec::Zero(Eigen::Index(jn)), CVec::Zero(Eigen::Index(jn)), CVec::Zero(Eigen::Index(jn))});
        }
        if (cfg.contains("positions")) {
            for (const auto& p : cfg.at("positions")) m.positions.push_back(detail::vec3_from(p, "positions"));
        } else {
            m.positions.assign(m.coupling.size(), Vec3::Zero());
        }
        if (cfg.contains("cutoff")) m.cutoff = Cutoff::from_json(cfg.at("cutoff"));
    } else if (kind == "computed") {
        m.kind = ModelKind::computed;
        m.labels = detail::labels_from(cfg.at("modes"));
        m.cutoff = cfg.contains("cutoff") ? Cutoff::from_json(cfg.at("cutoff")) : Cutoff{};
        m.quadrature = cfg.contains("quadrature") ? QuadratureSettings::from_json(cfg.at("quadrature")) : QuadratureSettings{};
        if (!cfg.contains("positions") || !cfg.at("positions").is_array() || cfg.at("positions").empty())
            throw ConfigError("computed model: 'positions' must list one 3-vector per spin");
        for (const auto& p : cfg.at("positions")) m.positions.push_back(detail::vec3_from(p, "positions"));
        const ModeSpace space(m.labels, m.quadrature);
        m.W = space.frequency_matrix();
        for (const auto& a : m.positions) m.coupling.push_back(space.couplings(a, 0.0, m.cutoff).c);
    } else {
        throw ConfigError("model config: kind must be 'synthetic' or 'computed'");
    }
    m.validate();
    return m;
}

// ---------------------------------------------------------------- epsilon profile

namespace detail {

inline RVec envelope(const std::vector<std::array<CVec, 3>>& c, Eigen::Index n) {
    RVec e = RVec::Zero(n);
    for (const auto& per : c)
        for (const auto& v : per) e += v.cwiseAbs();
    return e;
}

inline std::vector<double> symmetric_samples(double t, std::size_t n) {
    if (n < 2) throw ContractError("epsilon_profile: need s_samples >= 2");
    const double a = std::abs(t);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = -a + 2.0 * a * double(i) / double(n - 1);
    return s;
}

} // namespace detail

/// eps_k(t) = sup_{|s| <= |t|} sum_lambda sum_j |(e^{isW} c_{lambda j})_k|, sampled on
/// s_samples uniform points of [-|t|, |t|] and refined by golden-section search around
/// the sampled maximum of each mode.
inline RVec epsilon_profile(const ModeModel& model, double t, std::size_t s_samples) {
    if (!std::isfinite(t)) throw ContractError("epsilon_profile: t must be finite");
    const auto n = Eigen::Index(model.n_modes());
    const auto samples = detail::symmetric_samples(t, s_samples);
    const auto f = [&](double s) { return detail::envelope(rotated_coupling(model, s), n); };
    RVec best = RVec::Zero(n);
    std::vector<RVec> vals;
    vals.reserve(samples.size());
    for (double s : samples) {
        vals.push_back(f(s));
        best = best.cwiseMax(vals.back());
    }
    if (std::abs(t) == 0.0) return best;
    const double step = samples[1] - samples[0];
    for (Eigen::Index k = 0; k < n; ++k) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < vals.size(); ++i)
            if (vals[i](k) > vals[arg](k)) arg = i;
        double lo = std::max(samples.front(), samples[arg] - step);
        double hi = std::min(samples.back(), samples[arg] + step);
        constexpr double g = 0.6180339887498949;
        double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
        double f1 = f(x1)(k), f2 = f(x2)(k);
        for (int it = 0; it < 60; ++it) {
            if (f1 < f2) {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2)(k);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1)(k);
            }
        }
        best(k) = std::max({best(k), f1, f2});
    }
    return best;
}

/// Same envelope with coefficients recomputed from the continuum field B_{j,a,s}
/// (computed models only): the sup of (B_{j,a_lambda,s}, f_k) itself, not of its compression.
inline RVec epsilon_profile_continuum(const ModeModel& model, double t, std::size_t s_samples) {
    if (model.kind != ModelKind::computed)
        throw CapabilityError("continuum epsilon profile needs a computed model");
    const ModeSpace space(model.labels, model.quadrature);
    const auto n = Eigen::Index(model.n_modes());
    RVec best = RVec::Zero(n);
    for (double s : detail::symmetric_samples(t, s_samples)) {
        std::vector<std::array<CVec, 3>> c;
        for (const auto& a : model.positions) c.push_back(space.couplings(a, s, model.cutoff).c);
        best = best.cwiseMax(detail::envelope(c, n));
    }
    return best;
}

} // namespace semiqed::modes
