#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vibroline/error.hpp"
#include "vibroline/model.hpp"
#include "vibroline/phonons.hpp"
#include "vibroline/units.hpp"

namespace vibroline {

struct UnfoldedPoint {
    Vec3 qpoint = Vec3::Zero();  // primitive reduced coordinates
    std::vector<std::pair<double, double>> modes;  // (energy meV, weight)
};

struct UnfoldedWeights {
    std::vector<UnfoldedPoint> path;
    std::size_t n_cells = 0;        // primitive cells per supercell
    std::size_t n_sublattices = 0;  // primitive sites the supercell atoms map onto

    std::size_t primitive_bands() const noexcept { return 3 * n_sublattices; }
};

/// Integer matrix M with supercell_lattice = M * primitive_lattice (row
/// vectors), or NotCommensurate.
inline Eigen::Matrix3i supercell_matrix(const Mat3& supercell_lattice, const Mat3& primitive_lattice,
                                        double tolerance = 1e-6) {
    if (!(std::abs(primitive_lattice.determinant()) > 0.0))
        throw PhononError("NotCommensurate", "primitive lattice is singular");
    const Mat3 m = supercell_lattice * primitive_lattice.inverse();
    const Mat3 rounded = m.array().round().matrix();
    const double residual = (supercell_lattice - rounded * primitive_lattice).cwiseAbs().maxCoeff();
    if (residual > tolerance)
        throw PhononError("NotCommensurate", "supercell is not an integer multiple of the primitive lattice (residual " +
                                                 std::to_string(residual) + " A)");
    const Eigen::Matrix3i out = rounded.cast<int>();
    if (out.cast<double>().determinant() < 0.5)
        throw PhononError("NotCommensurate", "supercell matrix must have a positive determinant");
    return out;
}

/// Groups supercell atoms by position modulo the primitive lattice. Atoms
/// within `tolerance` (Å) of a sublattice's first member share its index.
inline std::vector<std::size_t> sublattice_indices(const CrystalStructure& supercell, const Mat3& primitive_lattice,
                                                   double tolerance) {
    const CrystalStructure primitive(primitive_lattice, {AtomSite{"X", 1.0, Vec3::Zero()}}, true);
    std::vector<Vec3> representatives;
    std::vector<std::size_t> out(supercell.size());
    for (std::size_t a = 0; a < supercell.size(); ++a) {
        const Vec3& r = supercell.position(a);
        std::size_t found = representatives.size();
        for (std::size_t s = 0; s < representatives.size(); ++s)
            if (primitive.minimum_image(r - representatives[s]).norm() <= tolerance) {
                found = s;
                break;
            }
        if (found == representatives.size()) representatives.push_back(r);
        out[a] = found;
    }
    return out;
}

/// Spectral weights of supercell modes on primitive wavevectors. For a
/// primitive Q the supercell basis at k = Q (mod supercell reciprocal lattice)
/// is used; the weight of mode λ is
///   sum_κ (1/n_κ) sum_a |sum_{α∈κ} e_{λ,αa} exp(-i (Q-k)·r_α)|²
/// so pristine cells give 1 on the primitive bands and 0 elsewhere, and the
/// weights at every Q add up to the primitive band count.
inline UnfoldedWeights unfold(const std::vector<PhononBasis>& bases, const CrystalStructure& supercell,
                              const Mat3& primitive_lattice, const std::vector<Vec3>& path,
                              double site_tolerance = 0.25) {
    if (!supercell.periodic()) throw PhononError("NotCommensurate", "unfolding needs a periodic supercell");
    const Eigen::Matrix3i m = supercell_matrix(supercell.lattice(), primitive_lattice);
    const auto sublattice = sublattice_indices(supercell, primitive_lattice, site_tolerance);

    UnfoldedWeights out;
    out.n_cells = static_cast<std::size_t>(std::lround(m.cast<double>().determinant()));
    std::size_t n_sub = 0;
    for (auto s : sublattice) n_sub = std::max(n_sub, s + 1);
    out.n_sublattices = n_sub;
    std::vector<double> members(n_sub, 0.0);
    for (auto s : sublattice) members[s] += 1.0;

    const std::size_t natoms = supercell.size();
    for (const Vec3& q : path) {
        const Vec3 q_super = m.cast<double>() * q;
        const PhononBasis* match = nullptr;
        Vec3 shift = Vec3::Zero();
        for (const auto& b : bases) {
            const Vec3 diff = q_super - b.qpoint;
            if ((diff - diff.array().round().matrix()).cwiseAbs().maxCoeff() < 1e-6) {
                match = &b;
                shift = diff.array().round().matrix();
                break;
            }
        }
        if (match == nullptr)
            throw PhononError("MissingQpoint", "no supercell basis folds onto the requested primitive wavevector");
        if (static_cast<std::size_t>(match->eigenvectors.rows()) != 3 * natoms)
            throw PhononError("InconsistentIndices", "phonon basis does not match the supercell size");

        std::vector<std::complex<double>> phase(natoms);
        for (std::size_t a = 0; a < natoms; ++a)
            phase[a] = std::polar(1.0, -2.0 * units::pi * shift.dot(supercell.to_fractional(supercell.position(a))));

        UnfoldedPoint point;
        point.qpoint = q;
        for (std::size_t lam = 0; lam < match->size(); ++lam) {
            const auto col = match->eigenvectors.col(static_cast<Eigen::Index>(lam));
            std::vector<std::complex<double>> channel(3 * n_sub, {0.0, 0.0});
            for (std::size_t a = 0; a < natoms; ++a)
                for (int c = 0; c < 3; ++c)
                    channel[3 * sublattice[a] + c] += col[static_cast<Eigen::Index>(3 * a + c)] * phase[a];
            double w = 0.0;
            for (std::size_t k = 0; k < channel.size(); ++k) w += std::norm(channel[k]) / members[k / 3];
            point.modes.emplace_back(match->energies[lam], w);
        }
        out.path.push_back(std::move(point));
    }
    return out;
}

/// Supercell reduced wavevector that a primitive reduced wavevector maps to.
inline Vec3 primitive_to_supercell_q(const Vec3& q_primitive, const Mat3& supercell_lattice,
                                     const Mat3& primitive_lattice) {
    return supercell_matrix(supercell_lattice, primitive_lattice).cast<double>() * q_primitive;
}

}  // namespace vibroline
