#pragma once

// Synthetic lattices and spring models shared by the test suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "vibroline.hpp"

namespace vibroline::testing {

/// Bond stiffness k_long along the bond and k_trans across it (eV/Å²).
inline Mat3 bond_matrix(const Vec3& d, double k_long, double k_trans) {
    const Vec3 n = d.normalized();
    return k_long * n * n.transpose() + k_trans * (Mat3::Identity() - n * n.transpose());
}

/// Pair spring model: every periodic image within `cutoff` contributes
/// -bond_matrix to the pair block; self blocks follow the sum rule. The
/// stiffness may depend on the pair through `stiffness(i, j, d) -> {kl, kt}`.
template <class Stiffness>
ForceConstants spring_model(const CrystalStructure& s, double cutoff, Stiffness&& stiffness) {
    ForceConstants::BlockMap blocks;
    const int range = s.periodic() ? 2 : 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = i + 1; j < s.size(); ++j) {
            Mat3 b = Mat3::Zero();
            bool any = false;
            for (int x = -range; x <= range; ++x)
                for (int y = -range; y <= range; ++y)
                    for (int z = -range; z <= range; ++z) {
                        Vec3 d = s.position(j) - s.position(i);
                        if (s.periodic()) d += s.to_cartesian(Vec3(x, y, z));
                        if (d.norm() > cutoff) continue;
                        auto [kl, kt] = stiffness(i, j, d);
                        b -= bond_matrix(d, kl, kt);
                        any = true;
                    }
            if (any) blocks[{i, j}] = b;
        }
    std::vector<Mat3> sums(s.size(), Mat3::Zero());
    for (const auto& [key, b] : blocks) {
        sums[key.first] += b;
        sums[key.second] += b.transpose();
    }
    for (std::size_t i = 0; i < s.size(); ++i) blocks[{i, i}] = -sums[i];
    return ForceConstants(s.size(), blocks);
}

inline ForceConstants spring_model(const CrystalStructure& s, double cutoff, double k_long, double k_trans) {
    return spring_model(s, cutoff, [=](std::size_t, std::size_t, const Vec3&) { return std::pair{k_long, k_trans}; });
}

inline Mat3 orthorhombic(double a, double b, double c) {
    Mat3 l = Mat3::Zero();
    l(0, 0) = a;
    l(1, 1) = b;
    l(2, 2) = c;
    return l;
}

/// Diatomic chain along x: two atoms per cell of length `a`, boxed by
/// `vacuum` in y and z.
inline CrystalStructure diatomic_chain(double a, double m1, double m2, double vacuum = 20.0) {
    return CrystalStructure(orthorhombic(a, vacuum, vacuum),
                            {AtomSite{"A", m1, Vec3(0, 0, 0)}, AtomSite{"B", m2, Vec3(a / 2, 0, 0)}}, true);
}

/// Idealized 4H stacking (8 atoms) on a hexagonal lattice.
inline CrystalStructure sic_4h_like() {
    const double a = 3.073, c = 10.053;
    Mat3 l;
    l << a, 0, 0, -a / 2, a * std::sqrt(3.0) / 2, 0, 0, 0, c;
    const CrystalStructure frame(l, {AtomSite{"X", 1.0, Vec3::Zero()}}, true);
    const std::vector<Vec3> si = {{0, 0, 0}, {1.0 / 3, 2.0 / 3, 0.25}, {0, 0, 0.5}, {2.0 / 3, 1.0 / 3, 0.75}};
    std::vector<AtomSite> sites;
    for (const auto& f : si) sites.push_back({"Si", 28.0855, frame.to_cartesian(f)});
    for (const auto& f : si) sites.push_back({"C", 12.011, frame.to_cartesian(f + Vec3(0, 0, 0.1875))});
    return CrystalStructure(l, sites, true);
}

/// n1 x n2 x n3 supercell of a structure, atoms ordered cell-major.
inline CrystalStructure supercell(const CrystalStructure& prim, int n1, int n2, int n3) {
    Mat3 l = prim.lattice();
    l.row(0) *= n1;
    l.row(1) *= n2;
    l.row(2) *= n3;
    std::vector<AtomSite> sites;
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
            for (int k = 0; k < n3; ++k)
                for (const auto& s : prim.sites()) {
                    AtomSite t = s;
                    t.position += prim.to_cartesian(Vec3(i, j, k));
                    sites.push_back(t);
                }
    return CrystalStructure(l, sites, true);
}

/// Random atoms in a box, at least `min_distance` apart.
inline CrystalStructure random_structure(std::mt19937& rng, std::size_t n, double box, double min_distance = 1.2,
                                         bool periodic = true) {
    std::uniform_real_distribution<double> u(0.0, box);
    std::uniform_real_distribution<double> mass(1.0, 60.0);
    const Mat3 l = orthorhombic(box, box, box);
    std::vector<AtomSite> sites;
    const CrystalStructure frame(l, {AtomSite{"X", 1.0, Vec3::Zero()}}, true);
    while (sites.size() < n) {
        const Vec3 r(u(rng), u(rng), u(rng));
        bool ok = true;
        for (const auto& s : sites) {
            const Vec3 d = periodic ? frame.minimum_image(r - s.position) : Vec3(r - s.position);
            if (d.norm() < min_distance) ok = false;
        }
        if (ok) sites.push_back({"X" + std::to_string(sites.size() % 3), mass(rng), r});
    }
    return CrystalStructure(periodic ? l : Mat3::Zero(), sites, periodic);
}

/// Snapshots of random displacements with harmonic forces F = -Φ u and
/// optional Gaussian force noise (eV/Å).
inline std::vector<TrainingSnapshot> harmonic_snapshots(const ForceConstants& fc, std::size_t count, double amplitude,
                                                        double noise, std::mt19937& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    const Eigen::MatrixXd phi = fc.dense();
    const std::size_t n = fc.natoms();
    std::vector<TrainingSnapshot> out;
    for (std::size_t s = 0; s < count; ++s) {
        Eigen::VectorXd u(3 * n);
        for (Eigen::Index k = 0; k < u.size(); ++k) u[k] = amplitude * g(rng);
        const Eigen::VectorXd f = -phi * u;
        TrainingSnapshot snap;
        for (std::size_t i = 0; i < n; ++i) {
            snap.displacements.emplace_back(u.segment<3>(3 * i));
            Vec3 fi = f.segment<3>(3 * i);
            if (noise > 0.0) fi += noise * Vec3(g(rng), g(rng), g(rng));
            snap.forces.push_back(fi);
        }
        out.push_back(std::move(snap));
    }
    return out;
}

inline std::size_t count_near_zero(const std::vector<double>& energies, double tolerance) {
    std::size_t n = 0;
    for (double e : energies) n += std::abs(e) < tolerance;
    return n;
}

inline double lorentzian(double x, double gamma) { return gamma / (units::pi * (x * x + gamma * gamma)); }

/// Lorentzian-broadened mixture of Gaussians (weight, center, width) plus a
/// sharp line of weight `zpl` at x = 0, sampled at `xs`. The convolution is a
/// direct Riemann sum on a support grid of step `de`.
inline std::vector<double> lorentz_broadened(const std::vector<std::tuple<double, double, double>>& gaussians,
                                             double zpl, double gamma, double de, const std::vector<double>& xs) {
    double lo = 0.0, hi = 0.0;
    for (auto [w, c, s] : gaussians) {
        lo = std::min(lo, c - 12.0 * s);
        hi = std::max(hi, c + 12.0 * s);
    }
    const long first = static_cast<long>(std::floor(lo / de)), last = static_cast<long>(std::ceil(hi / de));
    std::vector<double> support(static_cast<std::size_t>(last - first + 1), 0.0);
    for (auto [w, c, s] : gaussians) {
        const double norm = w / (s * std::sqrt(2.0 * units::pi));
        const long a = static_cast<long>(std::floor((c - 12.0 * s) / de)), b = static_cast<long>(std::ceil((c + 12.0 * s) / de));
        for (long k = a; k <= b; ++k) {
            const double z = (static_cast<double>(k) * de - c) / s;
            support[static_cast<std::size_t>(k - first)] += norm * std::exp(-0.5 * z * z);
        }
    }
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double v = zpl * lorentzian(xs[i], gamma);
        for (std::size_t k = 0; k < support.size(); ++k)
            if (support[k] != 0.0) v += support[k] * lorentzian(xs[i] - static_cast<double>(first + static_cast<long>(k)) * de, gamma) * de;
        out[i] = v;
    }
    return out;
}

/// Closed-form multi-mode Poisson lineshape in the shift variable x (phonon
/// energy released), truncated at `max_phonons` quanta in total.
inline std::vector<double> poisson_lineshape(const std::vector<std::pair<double, double>>& modes, double sigma,
                                             double gamma, double de, const std::vector<double>& xs,
                                             int max_phonons = 20) {
    double total = 0.0;
    for (auto [e, s] : modes) total += s;
    std::vector<std::tuple<double, double, double>> gaussians;
    std::vector<int> n(modes.size(), 0);
    // Enumerate occupation vectors with sum(n) <= max_phonons.
    std::function<void(std::size_t, int, double, double)> rec = [&](std::size_t m, int used, double weight, double center) {
        if (m == modes.size()) {
            if (used > 0) gaussians.emplace_back(std::exp(-total) * weight, center, sigma * std::sqrt(double(used)));
            return;
        }
        double w = weight;
        for (int k = 0; used + k <= max_phonons; ++k) {
            rec(m + 1, used + k, w, center + k * modes[m].first);
            w *= modes[m].second / double(k + 1);
        }
    };
    rec(0, 0, 1.0, 0.0);
    return lorentz_broadened(gaussians, std::exp(-total), gamma, de, xs);
}

/// Applies the emission prefactor E³ to a shift-domain profile and
/// normalizes the area on the energy grid.
inline std::vector<double> emission_from_shift(const std::vector<double>& profile, const std::vector<double>& energies,
                                               double de, bool cubic = true) {
    std::vector<double> out(profile.size());
    double area = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = profile[i] * (cubic ? std::pow(energies[i], 3) : 1.0);
        area += out[i] * de;
    }
    for (double& v : out) v /= area;
    return out;
}

/// Areas of the n-phonon replicas of a single-mode lineshape, from a
/// least-squares fit of Lorentzian-broadened Gaussians (width sigma*sqrt(n))
/// after dividing out the emission prefactor. Areas are relative to the
/// fitted total. Replicas whose peak does not fit inside the window are
/// left out.
inline std::vector<double> replica_areas(const Spectrum& l, double mode_energy, double sigma, double gamma,
                                         bool cubic) {
    std::vector<double> xs, y;
    for (std::size_t i = 0; i < l.size(); ++i) {
        xs.push_back(l.zpl_energy() - l.energies()[i]);
        y.push_back(l.intensities()[i] / (cubic ? std::pow(l.energies()[i], 3) : 1.0));
    }
    int n_max = 0;
    while ((n_max + 1) * mode_energy + 4.0 * sigma * std::sqrt(n_max + 1.0) <= xs.front()) ++n_max;
    Eigen::MatrixXd basis(static_cast<Eigen::Index>(xs.size()), n_max + 1);
    for (int n = 0; n <= n_max; ++n) {
        const auto col = n == 0 ? lorentz_broadened({}, 1.0, gamma, l.spacing(), xs)
                                : lorentz_broadened({{1.0, n * mode_energy, sigma * std::sqrt(double(n))}}, 0.0,
                                                    gamma, l.spacing(), xs);
        for (std::size_t i = 0; i < xs.size(); ++i) basis(static_cast<Eigen::Index>(i), n) = col[i];
    }
    const Eigen::VectorXd target = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    const Eigen::VectorXd a = basis.colPivHouseholderQr().solve(target);
    std::vector<double> out(a.data(), a.data() + a.size());
    const double total = a.sum();
    for (double& v : out) v /= total;
    return out;
}

}  // namespace vibroline::testing
