#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "vibroline/error.hpp"
#include "vibroline/model.hpp"
#include "vibroline/units.hpp"

namespace vibroline {

using ComplexMatrix = Eigen::MatrixXcd;

/// Mode energies (meV, ascending) and orthonormal mass-weighted eigenvectors
/// (columns, length 3N) at one wavevector. Imaginary modes carry negative
/// energies.
struct PhononBasis {
    Vec3 qpoint = Vec3::Zero();  // reduced coordinates of the cell it was computed in
    std::vector<double> energies;
    ComplexMatrix eigenvectors;

    std::size_t size() const noexcept { return energies.size(); }

    std::size_t imaginary_count() const noexcept {
        std::size_t n = 0;
        for (double e : energies) n += e < 0.0;
        return n;
    }
};

/// Eigenvalue of the mass-weighted dynamical matrix (eV/Å²/amu) to a signed
/// mode energy in meV.
inline double eigenvalue_to_mev(double eigenvalue) {
    const double e = units::mev_per_ev * std::sqrt(units::hbar_squared * std::abs(eigenvalue));
    return eigenvalue < 0.0 ? -e : e;
}

inline double mev_to_eigenvalue(double energy_mev) {
    const double e = energy_mev / units::mev_per_ev;
    return (energy_mev < 0.0 ? -1.0 : 1.0) * e * e / units::hbar_squared;
}

/// Projects the force constants onto the acoustic sum rule. Off-diagonal
/// blocks receive the minimum-norm antisymmetric correction that makes every
/// per-atom row sum symmetric (zero when it already is); self blocks are then
/// set to minus the sum of their row.
inline ForceConstants enforce_asr(const ForceConstants& fc) {
    const std::size_t n = fc.natoms();
    ForceConstants::BlockMap off;
    for (const auto& [key, value] : fc.blocks())
        if (key.first != key.second) off.emplace(key, value);

    auto row_sums = [&](const ForceConstants::BlockMap& blocks) {
        std::vector<Mat3> sums(n, Mat3::Zero());
        for (const auto& [key, value] : blocks) {
            sums[key.first] += value;
            sums[key.second] += value.transpose();
        }
        return sums;
    };

    static constexpr int kPairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    auto sums = row_sums(off);
    Eigen::MatrixXd violation(n, 3);
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c)
            violation(i, c) = sums[i](kPairs[c][0], kPairs[c][1]) - sums[i](kPairs[c][1], kPairs[c][0]);

    if (violation.cwiseAbs().maxCoeff() > 0.0) {
        // Per antisymmetric component the constraint is E d = -v with E the
        // signed atom/pair incidence matrix, so the minimum-norm solution goes
        // through the pseudo-inverse of the graph Laplacian E E^T.
        Eigen::MatrixXd laplacian = Eigen::MatrixXd::Zero(n, n);
        for (const auto& entry : off) {
            auto [i, j] = entry.first;
            laplacian(i, i) += 1.0;
            laplacian(j, j) += 1.0;
            laplacian(i, j) -= 1.0;
            laplacian(j, i) -= 1.0;
        }
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(laplacian);
        const Eigen::MatrixXd multipliers = cod.solve(violation);
        for (auto& [key, value] : off) {
            auto [i, j] = key;
            for (int c = 0; c < 3; ++c) {
                const double d = -(multipliers(i, c) - multipliers(j, c));
                value(kPairs[c][0], kPairs[c][1]) += 0.5 * d;
                value(kPairs[c][1], kPairs[c][0]) -= 0.5 * d;
            }
        }
        sums = row_sums(off);
    }

    ForceConstants::BlockMap out = off;
    for (std::size_t i = 0; i < n; ++i) {
        const Mat3 self = -sums[i];
        out[{i, i}] = 0.5 * (self + self.transpose());
    }
    return ForceConstants(n, out);
}

/// Mass-weighted dynamical matrix at reduced wavevector `q`. Each pair block is
/// shared equally among the shortest periodic images of the pair, which is
/// how supercell force constants are folded back onto the cell.
inline ComplexMatrix dynamical_matrix(const ForceConstants& fc, const CrystalStructure& structure, const Vec3& q) {
    const std::size_t n = structure.size();
    if (fc.natoms() != n)
        throw PhononError("InconsistentIndices", "force constants cover " + std::to_string(fc.natoms()) +
                                                     " atoms but the structure has " + std::to_string(n));
    ComplexMatrix d = ComplexMatrix::Zero(3 * n, 3 * n);
    for (const auto& [key, block] : fc.blocks()) {
        auto [i, j] = key;
        const double inv_mass = 1.0 / std::sqrt(structure.mass(i) * structure.mass(j));
        if (i == j) {
            d.block(3 * i, 3 * i, 3, 3) = (block * inv_mass).cast<std::complex<double>>();
            continue;
        }
        std::complex<double> phase(0.0, 0.0);
        if (structure.periodic()) {
            const auto images = structure.shortest_images(structure.position(j) - structure.position(i), 1e-5);
            for (const auto& r : images) {
                const double arg = 2.0 * units::pi * q.dot(structure.to_fractional(r));
                phase += std::polar(1.0, arg);
            }
            phase /= static_cast<double>(images.size());
        } else {
            phase = 1.0;
        }
        const Eigen::Matrix3cd value = block.cast<std::complex<double>>() * (phase * inv_mass);
        d.block(3 * i, 3 * j, 3, 3) = value;
        d.block(3 * j, 3 * i, 3, 3) = value.adjoint();
    }
    return d;
}

/// Hermitian eigendecomposition; eigenvalues converted to signed meV.
inline PhononBasis diagonalize(const ComplexMatrix& d, const Vec3& qpoint = Vec3::Zero()) {
    if (d.rows() != d.cols()) throw PhononError("NotHermitian", "dynamical matrix is not square");
    const double asymmetry = d.rows() == 0 ? 0.0 : (d - d.adjoint()).cwiseAbs().maxCoeff();
    if (asymmetry > 1e-6)
        throw PhononError("NotHermitian", "dynamical matrix asymmetry " + std::to_string(asymmetry) + " exceeds 1e-6");

    PhononBasis basis;
    basis.qpoint = qpoint;
    const ComplexMatrix h = 0.5 * (d + d.adjoint());
    Eigen::VectorXd eigenvalues;
    if (h.imag().cwiseAbs().maxCoeff() == 0.0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h.real());
        eigenvalues = solver.eigenvalues();
        basis.eigenvectors = solver.eigenvectors().cast<std::complex<double>>();
    } else {
        Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h);
        eigenvalues = solver.eigenvalues();
        basis.eigenvectors = solver.eigenvectors();
    }
    basis.energies.resize(eigenvalues.size());
    for (Eigen::Index k = 0; k < eigenvalues.size(); ++k) basis.energies[k] = eigenvalue_to_mev(eigenvalues[k]);
    return basis;
}

inline PhononBasis phonons_at(const ForceConstants& fc, const CrystalStructure& structure, const Vec3& q) {
    return diagonalize(dynamical_matrix(fc, structure, q), q);
}

}  // namespace vibroline
