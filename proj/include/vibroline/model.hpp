#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vibroline/error.hpp"

namespace vibroline {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct AtomSite {
    std::string species;
    double mass = 0.0;  // amu
    Vec3 position = Vec3::Zero();  // Cartesian, Å
};

/// Lattice rows are the cell vectors (Å). Site order is the atom index used by
/// every other part of the library.
class CrystalStructure {
public:
    CrystalStructure(Mat3 lattice, std::vector<AtomSite> sites, bool periodic)
        : lattice_(std::move(lattice)), sites_(std::move(sites)), periodic_(periodic) {
        if (sites_.empty()) throw ModelError("EmptyStructure", "structure has no atomic sites");
        for (std::size_t i = 0; i < sites_.size(); ++i) {
            const auto& s = sites_[i];
            if (!(s.mass > 0.0) || !std::isfinite(s.mass))
                throw ModelError("InvalidSite", "site " + std::to_string(i) + " has non-positive mass");
            if (!s.position.allFinite())
                throw ModelError("InvalidSite", "site " + std::to_string(i) + " has a non-finite position");
        }
        if (periodic_) {
            if (!(lattice_.determinant() > 0.0))
                throw ModelError("InvalidLattice", "periodic lattice must have a positive determinant");
            inverse_transpose_ = lattice_.transpose().inverse();
        } else {
            inverse_transpose_.setZero();
        }
    }

    const Mat3& lattice() const noexcept { return lattice_; }
    const std::vector<AtomSite>& sites() const noexcept { return sites_; }
    const AtomSite& site(std::size_t i) const { return sites_.at(i); }
    bool periodic() const noexcept { return periodic_; }
    std::size_t size() const noexcept { return sites_.size(); }

    double mass(std::size_t i) const { return sites_.at(i).mass; }
    const Vec3& position(std::size_t i) const { return sites_.at(i).position; }

    Vec3 to_fractional(const Vec3& cartesian) const { return inverse_transpose_ * cartesian; }
    Vec3 to_cartesian(const Vec3& fractional) const { return lattice_.transpose() * fractional; }

    double shortest_lattice_vector() const {
        return std::min({lattice_.row(0).norm(), lattice_.row(1).norm(), lattice_.row(2).norm()});
    }

    /// Shortest periodic image of a separation vector. Non-periodic structures
    /// return the vector unchanged.
    Vec3 minimum_image(const Vec3& d) const {
        if (!periodic_) return d;
        auto images = shortest_images(d, 0.0);
        return images.front();
    }

    /// All periodic images of `d` whose length is within `tolerance` (Å) of the
    /// shortest one, in a fixed enumeration order.
    std::vector<Vec3> shortest_images(const Vec3& d, double tolerance) const {
        if (!periodic_) return {d};
        Vec3 f = to_fractional(d);
        for (int a = 0; a < 3; ++a) f[a] -= std::round(f[a]);
        std::vector<std::pair<double, Vec3>> candidates;
        candidates.reserve(27);
        for (int i = -1; i <= 1; ++i)
            for (int j = -1; j <= 1; ++j)
                for (int k = -1; k <= 1; ++k) {
                    const Vec3 r = to_cartesian(f + Vec3(i, j, k));
                    candidates.emplace_back(r.norm(), r);
                }
        double best = candidates.front().first;
        for (const auto& c : candidates) best = std::min(best, c.first);
        std::vector<Vec3> out;
        for (const auto& c : candidates)
            if (c.first <= best + tolerance) out.push_back(c.second);
        return out;
    }

    /// Rigidly translated copy.
    CrystalStructure translated(const Vec3& shift) const {
        auto moved = sites_;
        for (auto& s : moved) s.position += shift;
        return CrystalStructure(lattice_, std::move(moved), periodic_);
    }

private:
    Mat3 lattice_;
    std::vector<AtomSite> sites_;
    bool periodic_;
    Mat3 inverse_transpose_;
};

/// Ground- and excited-state geometries of the same defect cell.
class GeometryPair {
public:
    GeometryPair(CrystalStructure ground, CrystalStructure excited)
        : ground_(std::move(ground)), excited_(std::move(excited)) {
        if (ground_.size() != excited_.size())
            throw ModelError("MismatchedStructures", "ground and excited structures have different site counts");
        if (ground_.periodic() != excited_.periodic())
            throw ModelError("MismatchedStructures", "ground and excited structures differ in periodicity");
        if ((ground_.lattice() - excited_.lattice()).cwiseAbs().maxCoeff() > 1e-8)
            throw ModelError("MismatchedStructures", "ground and excited lattices differ");
        for (std::size_t i = 0; i < ground_.size(); ++i) {
            const auto& g = ground_.site(i);
            const auto& e = excited_.site(i);
            if (g.species != e.species)
                throw ModelError("MismatchedStructures", "species differ at site " + std::to_string(i) + ": " +
                                                             g.species + " vs " + e.species);
            if (std::abs(g.mass - e.mass) > 1e-9 * g.mass)
                throw ModelError("MismatchedStructures", "masses differ at site " + std::to_string(i));
        }
    }

    const CrystalStructure& ground() const noexcept { return ground_; }
    const CrystalStructure& excited() const noexcept { return excited_; }

private:
    CrystalStructure ground_;
    CrystalStructure excited_;
};

/// Per-site displacement R_excited - R_ground (Å) under the minimum-image
/// convention.
inline std::vector<Vec3> validate_pair(const GeometryPair& pair) {
    const auto& g = pair.ground();
    const auto& e = pair.excited();
    const double limit = g.periodic() ? 0.5 * g.shortest_lattice_vector() : 0.0;
    std::vector<Vec3> out;
    out.reserve(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        Vec3 d = g.minimum_image(e.position(i) - g.position(i));
        if (g.periodic() && d.norm() >= limit)
            throw ModelError("WrapAmbiguity", "displacement of site " + std::to_string(i) +
                                                  " reaches half the shortest lattice vector");
        out.push_back(d);
    }
    return out;
}

/// Second-order force constants as 3x3 pair blocks (eV/Å²). Only the i <= j
/// half is stored; block(j, i) is the transpose of block(i, j). Each block is
/// the total coupling between atom i and every periodic image of atom j.
class ForceConstants {
public:
    using Key = std::pair<std::size_t, std::size_t>;
    using BlockMap = std::map<Key, Mat3>;

    ForceConstants() = default;

    ForceConstants(std::size_t natoms, const BlockMap& blocks) : natoms_(natoms) {
        for (const auto& [key, value] : blocks) {
            auto [i, j] = key;
            if (i >= natoms_ || j >= natoms_)
                throw ModelError("InvalidIndex", "force-constant block (" + std::to_string(i) + "," +
                                                     std::to_string(j) + ") outside " + std::to_string(natoms_) +
                                                     " atoms");
            if (!value.allFinite()) throw ModelError("InvalidBlock", "non-finite force-constant entry");
            const Key canonical{std::min(i, j), std::max(i, j)};
            const Mat3 oriented = i <= j ? value : Mat3(value.transpose());
            const double scale = std::max(1.0, oriented.cwiseAbs().maxCoeff());
            if (i == j && (oriented - oriented.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
                throw ModelError("AsymmetricBlock", "self block of atom " + std::to_string(i) + " is not symmetric");
            auto it = blocks_.find(canonical);
            if (it != blocks_.end()) {
                if ((it->second - oriented).cwiseAbs().maxCoeff() > 1e-9 * scale)
                    throw ModelError("AsymmetricBlock", "blocks (" + std::to_string(i) + "," + std::to_string(j) +
                                                            ") and its transpose partner disagree");
                continue;
            }
            blocks_.emplace(canonical, oriented);
        }
    }

    std::size_t natoms() const noexcept { return natoms_; }

    /// Stored (canonical, i <= j) blocks.
    const BlockMap& blocks() const noexcept { return blocks_; }

    Mat3 block(std::size_t i, std::size_t j) const {
        if (i <= j) {
            auto it = blocks_.find({i, j});
            return it == blocks_.end() ? Mat3::Zero() : it->second;
        }
        auto it = blocks_.find({j, i});
        return it == blocks_.end() ? Mat3::Zero() : Mat3(it->second.transpose());
    }

    bool has_block(std::size_t i, std::size_t j) const {
        return blocks_.count({std::min(i, j), std::max(i, j)}) > 0;
    }

    Eigen::MatrixXd dense() const {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(3 * natoms_, 3 * natoms_);
        for (const auto& [key, value] : blocks_) {
            auto [i, j] = key;
            out.block<3, 3>(3 * i, 3 * j) = value;
            if (i != j) out.block<3, 3>(3 * j, 3 * i) = value.transpose();
        }
        return out;
    }

private:
    std::size_t natoms_ = 0;
    BlockMap blocks_;
};

/// Uniformly gridded series, energies in meV ascending.
class Spectrum {
public:
    Spectrum() = default;

    Spectrum(std::vector<double> energies, std::vector<double> intensities, double zpl_energy)
        : energies_(std::move(energies)), intensities_(std::move(intensities)), zpl_energy_(zpl_energy) {
        if (energies_.size() != intensities_.size())
            throw ModelError("InvalidSpectrum", "energy and intensity columns differ in length");
        if (energies_.size() >= 2) {
            const double step = energies_[1] - energies_[0];
            if (!(step > 0.0)) throw ModelError("InvalidSpectrum", "energy grid must be ascending");
            for (std::size_t i = 1; i < energies_.size(); ++i) {
                const double expected = energies_[0] + static_cast<double>(i) * step;
                if (std::abs(energies_[i] - expected) > 1e-9 * std::max(std::abs(expected), step))
                    throw ModelError("InvalidSpectrum", "energy grid is not uniform");
            }
        }
        for (double v : intensities_)
            if (!(v >= 0.0)) throw ModelError("InvalidSpectrum", "intensities must be non-negative");
        normalization_ = integrate();
    }

    const std::vector<double>& energies() const noexcept { return energies_; }
    const std::vector<double>& intensities() const noexcept { return intensities_; }
    double zpl_energy() const noexcept { return zpl_energy_; }
    /// Rectangle-rule area under the curve.
    double normalization() const noexcept { return normalization_; }
    std::size_t size() const noexcept { return energies_.size(); }
    double spacing() const { return energies_.size() >= 2 ? energies_[1] - energies_[0] : 0.0; }

    /// Trapezoid-rule area over the grid points inside [low, high].
    double integrate(double low, double high) const {
        const double slack = 1e-9 * spacing();
        double sum = 0.0;
        double first = 0.0, last = 0.0;
        bool any = false;
        for (std::size_t i = 0; i < energies_.size(); ++i)
            if (energies_[i] >= low - slack && energies_[i] <= high + slack) {
                if (!any) first = intensities_[i];
                any = true;
                last = intensities_[i];
                sum += intensities_[i];
            }
        return any ? (sum - 0.5 * (first + last)) * spacing() : 0.0;
    }

private:
    double integrate() const {
        double sum = 0.0;
        for (double v : intensities_) sum += v;
        return sum * spacing();
    }

    std::vector<double> energies_;
    std::vector<double> intensities_;
    double zpl_energy_ = 0.0;
    double normalization_ = 0.0;
};

}  // namespace vibroline
