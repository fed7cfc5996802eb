#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>

#include "support.hpp"

using namespace vibroline;
using namespace vibroline::testing;

namespace {

const double kA = 2.5, kB = 2.8, kC = 3.1, kMass = 28.0;
const double kLong[3] = {6.0, 4.0, 2.5};
const double kTrans = 0.7;

CrystalStructure primitive_cell() {
    return CrystalStructure(orthorhombic(kA, kB, kC), {AtomSite{"Si", kMass, Vec3::Zero()}}, true);
}

// Nearest-neighbour springs only: longitudinal stiffness depends on the axis.
ForceConstants axis_springs(const CrystalStructure& s) {
    return spring_model(s, 3.2, [](std::size_t, std::size_t, const Vec3& d) {
        int axis = 0;
        d.cwiseAbs().maxCoeff(&axis);
        return std::pair{kLong[axis], kTrans};
    });
}

// Closed-form primitive dispersion of the monoatomic orthorhombic lattice.
std::vector<double> primitive_bands(const Vec3& q) {
    std::vector<double> out;
    for (int pol = 0; pol < 3; ++pol) {
        double w2 = 0.0;
        for (int axis = 0; axis < 3; ++axis) {
            const double k = axis == pol ? kLong[axis] : kTrans;
            w2 += 2.0 * k / kMass * (1.0 - std::cos(2.0 * units::pi * q[axis]));
        }
        out.push_back(1000.0 * std::sqrt(units::hbar_squared * w2));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<PhononBasis> bases_for(const ForceConstants& fc, const CrystalStructure& sc, const Mat3& prim,
                                   const std::vector<Vec3>& path) {
    std::vector<PhononBasis> out;
    for (const auto& q : path) out.push_back(phonons_at(fc, sc, primitive_to_supercell_q(q, sc.lattice(), prim)));
    return out;
}

// Sums weights over degenerate groups: folded branches that coincide in
// energy mix freely, so only the group totals are meaningful.
std::vector<std::pair<double, double>> grouped(const UnfoldedPoint& point, double tol = 1e-4) {
    auto modes = point.modes;
    std::sort(modes.begin(), modes.end());
    std::vector<std::pair<double, double>> out;
    for (auto [e, w] : modes) {
        if (!out.empty() && std::abs(e - out.back().first) < tol)
            out.back().second += w;
        else
            out.emplace_back(e, w);
    }
    return out;
}

// Checks that every group carries the number of primitive bands at its energy.
void check_against_bands(const UnfoldedPoint& point, const std::vector<double>& bands) {
    for (auto [e, w] : grouped(point)) {
        double expected = 0.0;
        for (double b : bands) expected += std::abs(b - e) < 1e-4;
        INFO("energy " << std::setprecision(12) << e);
        CHECK(w == Catch::Approx(expected).margin(1e-9));
    }
}

const std::vector<Vec3> kPath = {{0, 0, 0}, {0.1, 0, 0}, {0.25, 0.1, 0}, {0.5, 0, 0}, {0.3, 0.4, 0.2}, {0.5, 0.5, 0.5}};

}  // namespace

TEST_CASE("pristine supercell unfolds onto the primitive dispersion", "[unfold]") {
    const auto prim = primitive_cell();
    const auto sc = supercell(prim, 2, 2, 2);
    const auto fc = axis_springs(sc);
    const auto result = unfold(bases_for(fc, sc, prim.lattice(), kPath), sc, prim.lattice(), kPath);
    CHECK(result.n_cells == 8);
    CHECK(result.n_sublattices == 1);
    for (const auto& point : result.path) {
        double total = 0.0;
        for (auto [e, w] : point.modes) total += w;
        CHECK(total == Catch::Approx(3.0).epsilon(1e-12));
        check_against_bands(point, primitive_bands(point.qpoint));
    }
}

TEST_CASE("a supercell equal to the primitive cell gives unit weights", "[unfold]") {
    const auto prim = primitive_cell();
    const auto fc = axis_springs(prim);
    const auto result = unfold(bases_for(fc, prim, prim.lattice(), kPath), prim, prim.lattice(), kPath);
    for (const auto& point : result.path)
        for (auto [e, w] : point.modes) CHECK(w == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("weights still sum to the primitive band count with a mass defect", "[unfold][property]") {
    const auto prim = primitive_cell();
    auto sites = supercell(prim, 2, 2, 2).sites();
    sites[3].mass = 72.6;
    const CrystalStructure sc(supercell(prim, 2, 2, 2).lattice(), sites, true);
    const auto fc = axis_springs(sc);
    const auto result = unfold(bases_for(fc, sc, prim.lattice(), kPath), sc, prim.lattice(), kPath);
    for (const auto& point : result.path) {
        double total = 0.0;
        for (auto [e, w] : point.modes) {
            CHECK(w >= -1e-12);
            CHECK(w <= 1.0 + 1e-12);
            total += w;
        }
        CHECK(total == Catch::Approx(3.0).epsilon(1e-10));
    }
}

TEST_CASE("weights still sum to the primitive band count with a vacancy", "[unfold][property]") {
    const auto prim = primitive_cell();
    auto full = supercell(prim, 2, 2, 2);
    auto sites = full.sites();
    sites.erase(sites.begin() + 5);
    const CrystalStructure sc(full.lattice(), sites, true);
    const auto fc = axis_springs(sc);
    const auto result = unfold(bases_for(fc, sc, prim.lattice(), kPath), sc, prim.lattice(), kPath);
    CHECK(result.n_sublattices == 1);
    for (const auto& point : result.path) {
        double total = 0.0;
        for (auto [e, w] : point.modes) total += w;
        CHECK(total == Catch::Approx(3.0).epsilon(1e-10));
    }
}

TEST_CASE("multi-site primitive cell unfolds with small displacements", "[unfold][property]") {
    const auto prim = sic_4h_like();
    auto sc = supercell(prim, 2, 2, 1);
    std::mt19937 rng(2);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    auto sites = sc.sites();
    for (auto& s : sites) s.position += Vec3(u(rng), u(rng), u(rng));
    sc = CrystalStructure(sc.lattice(), sites, true);
    const auto fc = spring_model(sc, 3.2, 12.0, 2.0);
    const std::vector<Vec3> path = {{0, 0, 0}, {0.5, 0, 0}, {1.0 / 3, 1.0 / 3, 0}, {0.2, 0.1, 0.4}};
    const auto result = unfold(bases_for(fc, sc, prim.lattice(), path), sc, prim.lattice(), path);
    CHECK(result.n_sublattices == 8);
    CHECK(result.primitive_bands() == 24);
    for (const auto& point : result.path) {
        double total = 0.0;
        for (auto [e, w] : point.modes) total += w;
        CHECK(total == Catch::Approx(24.0).epsilon(1e-10));
    }
}

TEST_CASE("pristine multi-site supercell reproduces primitive bands", "[unfold]") {
    // Zigzag chain along a: every bonded pair has a single shortest image.
    const CrystalStructure prim(orthorhombic(4.0, 3.6, 3.8),
                                {AtomSite{"A", 12.0, Vec3(0, 0, 0)}, AtomSite{"B", 28.0, Vec3(1.0, 0.3, 0)},
                                 AtomSite{"C", 16.0, Vec3(2.0, 0.3, 0.4)}, AtomSite{"D", 40.0, Vec3(3.0, 0, 0.4)}},
                                true);
    const auto sc = supercell(prim, 3, 1, 1);
    const auto fc_sc = spring_model(sc, 1.5, 12.0, 2.0);
    const auto fc_prim = spring_model(prim, 1.5, 12.0, 2.0);
    const std::vector<Vec3> path = {{0, 0, 0}, {1.0 / 3, 0, 0}, {0.5, 0, 0}, {0.2, 0.3, 0.1}};
    const auto result = unfold(bases_for(fc_sc, sc, prim.lattice(), path), sc, prim.lattice(), path);
    CHECK(result.n_sublattices == 4);
    for (const auto& point : result.path) check_against_bands(point, phonons_at(fc_prim, prim, point.qpoint).energies);
}

TEST_CASE("unfolding rejects incommensurate cells and unmatched wavevectors", "[unfold]") {
    const auto prim = primitive_cell();
    const auto sc = supercell(prim, 2, 1, 1);
    Mat3 bad = prim.lattice();
    bad(0, 0) = 2.6;
    try {
        supercell_matrix(sc.lattice(), bad);
        FAIL("expected NotCommensurate");
    } catch (const PhononError& e) {
        CHECK(e.name() == "NotCommensurate");
    }
    const auto fc = axis_springs(sc);
    const std::vector<PhononBasis> gamma_only = {phonons_at(fc, sc, Vec3::Zero())};
    try {
        unfold(gamma_only, sc, prim.lattice(), {Vec3(0.25, 0, 0)});
        FAIL("expected MissingQpoint");
    } catch (const PhononError& e) {
        CHECK(e.name() == "MissingQpoint");
    }
    // Q = 1/2 along a folds onto the doubled cell's Gamma.
    CHECK_NOTHROW(unfold(gamma_only, sc, prim.lattice(), {Vec3(0.5, 0, 0)}));
}
