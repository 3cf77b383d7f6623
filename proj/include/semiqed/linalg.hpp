#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include <complex>
#include <cstddef>
#include <vector>

#include "semiqed/error.hpp"

namespace semiqed {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;

inline constexpr cplx I_unit{0.0, 1.0};
inline constexpr double pi = 3.14159265358979323846;

namespace pauli {

inline CMat identity() { return CMat::Identity(2, 2); }

/// Pauli matrix sigma_j for j in {1,2,3}.
inline CMat sigma(int j) {
    CMat s = CMat::Zero(2, 2);
    switch (j) {
    case 1:
        s(0, 1) = 1.0;
        s(1, 0) = 1.0;
        break;
    case 2:
        s(0, 1) = cplx(0, -1);
        s(1, 0) = cplx(0, 1);
        break;
    case 3:
        s(0, 0) = 1.0;
        s(1, 1) = -1.0;
        break;
    default:
        throw ContractError("pauli index must be 1, 2 or 3");
    }
    return s;
}

} // namespace pauli

/// A on tensor slot `slot` (0-based) of N spin-1/2 factors, identity elsewhere.
/// Slot 0 is the most significant factor of the spin index.
inline CMat embed_spin(const CMat& a, std::size_t slot, std::size_t n_spins) {
    if (slot >= n_spins) throw ContractError("spin slot out of range");
    CMat out = CMat::Identity(1, 1);
    for (std::size_t s = 0; s < n_spins; ++s) {
        const CMat f = (s == slot) ? a : pauli::identity();
        CMat next = Eigen::kroneckerProduct(out, f);
        out = std::move(next);
    }
    return out;
}

inline std::size_t spin_dim(std::size_t n_spins) { return std::size_t{1} << n_spins; }

/// Spectral norm (largest singular value).
inline double op_norm(const CMat& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<CMat> svd(a);
    return svd.singularValues()(0);
}

inline double max_abs(const CMat& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

/// exp(-i * s * H) for Hermitian H via eigendecomposition.
inline CMat exp_hermitian(const CMat& h, double s) {
    Eigen::SelfAdjointEigenSolver<CMat> es(h);
    if (es.info() != Eigen::Success) throw SolverError("Hermitian eigensolver failed");
    const CVec phases = (-I_unit * s * es.eigenvalues().cast<cplx>()).array().exp();
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

/// Unitarity defect max|U^dagger U - I|.
inline double unitarity_defect(const CMat& u) {
    return max_abs(u.adjoint() * u - CMat::Identity(u.cols(), u.cols()));
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ContractError("slope fit needs >= 2 matched points");
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= double(n);
    my /= double(n);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = std::log(x[i]) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(y[i]) - my);
    }
    return sxy / sxx;
}

} // namespace semiqed
