#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vibroline/error.hpp"
#include "vibroline/model.hpp"
#include "vibroline/parallel.hpp"
#include "vibroline/phonons.hpp"

namespace vibroline {

/// One displacement/force training configuration (Å, eV/Å), atom order of the
/// reference structure.
struct TrainingSnapshot {
    std::vector<Vec3> displacements;
    std::vector<Vec3> forces;
};

/// Free parameters of the pair model: one full 3x3 block per atom pair whose
/// shortest separation lies within the cutoff. Self blocks follow from the
/// acoustic sum rule and are not free.
struct FeatureMap {
    std::size_t natoms = 0;
    double cutoff = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // i < j

    std::size_t n_parameters() const noexcept { return 9 * pairs.size(); }
};

struct FitReport {
    ForceConstants fc;
    double rmse_validation = 0.0;  // meV/Å
    double rmse_training = 0.0;    // meV/Å
    std::size_t n_parameters_initial = 0;
    std::size_t n_parameters_final = 0;
    double cutoff = 0.0;
    Eigen::Index rank = 0;
    std::size_t n_validation = 0;
    std::vector<std::pair<std::size_t, std::size_t>> active_pairs;
    std::vector<std::string> warnings;
};

struct RfeOptions {
    double ridge = 1e-8;
    /// Allowed rise of the held-out RMSE over the full model (meV/Å).
    double tolerance = 0.0;
    /// Lower bound on the fraction of pair blocks kept.
    double target_fraction = 0.0;
};

inline FeatureMap build_features(const CrystalStructure& structure, double cutoff) {
    if (!(cutoff > 0.0)) throw FitError("InvalidCutoff", "cutoff must be positive");
    FeatureMap features;
    features.natoms = structure.size();
    features.cutoff = cutoff;
    for (std::size_t i = 0; i < structure.size(); ++i)
        for (std::size_t j = i + 1; j < structure.size(); ++j) {
            const Vec3 d = structure.minimum_image(structure.position(j) - structure.position(i));
            if (d.norm() <= cutoff) features.pairs.emplace_back(i, j);
        }
    return features;
}

namespace detail {

inline void check_snapshots(const std::vector<TrainingSnapshot>& snapshots, std::size_t natoms) {
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
        const auto& snap = snapshots[s];
        if (snap.displacements.size() != natoms || snap.forces.size() != natoms)
            throw FitError("InvalidSnapshot", "snapshot " + std::to_string(s) + " does not cover " +
                                                  std::to_string(natoms) + " atoms");
    }
}

inline std::size_t validation_count(std::size_t n_snapshots) {
    if (n_snapshots < 2) return 0;
    return static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(n_snapshots)));
}

/// Rows (snapshot, atom, cartesian) of F = -sum_j B_ij (u_j - u_i).
inline Eigen::MatrixXd design_matrix(const std::vector<TrainingSnapshot>& snapshots, std::size_t first,
                                     std::size_t last, const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                     std::size_t natoms) {
    const std::size_t rows_per = 3 * natoms;
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>((last - first) * rows_per),
                                              static_cast<Eigen::Index>(9 * pairs.size()));
    parallel_for(last - first, [&](std::size_t s) {
        const auto& u = snapshots[first + s].displacements;
        const Eigen::Index base = static_cast<Eigen::Index>(s * rows_per);
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            auto [i, j] = pairs[p];
            const Vec3 rel = u[j] - u[i];
            const Eigen::Index col = static_cast<Eigen::Index>(9 * p);
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    x(base + 3 * i + a, col + 3 * a + b) -= rel[b];
                    x(base + 3 * j + a, col + 3 * b + a) += rel[b];
                }
        }
    });
    return x;
}

inline Eigen::VectorXd force_vector(const std::vector<TrainingSnapshot>& snapshots, std::size_t first,
                                    std::size_t last, std::size_t natoms) {
    Eigen::VectorXd y(static_cast<Eigen::Index>((last - first) * 3 * natoms));
    Eigen::Index row = 0;
    for (std::size_t s = first; s < last; ++s)
        for (std::size_t i = 0; i < natoms; ++i)
            for (int a = 0; a < 3; ++a) y[row++] = snapshots[s].forces[i][a];
    return y;
}

/// Force RMSE of `fc` over snapshots [first, last), in meV/Å.
inline double force_rmse(const ForceConstants& fc, const std::vector<TrainingSnapshot>& snapshots,
                         std::size_t first, std::size_t last) {
    if (last <= first) return 0.0;
    const std::size_t n = fc.natoms();
    const Eigen::MatrixXd phi = fc.dense();
    double sum = 0.0;
    for (std::size_t s = first; s < last; ++s) {
        Eigen::VectorXd u(3 * n), f(3 * n);
        for (std::size_t i = 0; i < n; ++i) {
            u.segment<3>(3 * i) = snapshots[s].displacements[i];
            f.segment<3>(3 * i) = snapshots[s].forces[i];
        }
        sum += (f + phi * u).squaredNorm();
    }
    return units::mev_per_ev * std::sqrt(sum / static_cast<double>((last - first) * 3 * n));
}

struct SolveResult {
    Eigen::VectorXd parameters;
    Eigen::Index rank = 0;
};

inline SolveResult solve_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double ridge) {
    SolveResult out;
    const Eigen::Index p = x.cols();
    if (p == 0) return out;
    const double scale = x.squaredNorm() / static_cast<double>(p);
    if (!(scale > 0.0)) throw FitError("SingularFit", "design matrix is identically zero");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_plain(x);
    out.rank = qr_plain.rank();
    if (ridge <= 0.0) {
        if (out.rank < p)
            throw FitError("SingularFit", "design matrix has rank " + std::to_string(out.rank) + " for " +
                                              std::to_string(p) + " parameters");
        out.parameters = qr_plain.solve(y);
        return out;
    }
    Eigen::MatrixXd augmented(x.rows() + p, p);
    augmented << x, std::sqrt(ridge * scale) * Eigen::MatrixXd::Identity(p, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(x.rows() + p);
    rhs.head(x.rows()) = y;
    out.parameters = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(augmented).solve(rhs);
    return out;
}

inline ForceConstants assemble(const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                               const Eigen::VectorXd& parameters, std::size_t natoms) {
    ForceConstants::BlockMap blocks;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        Mat3 b;
        for (int a = 0; a < 3; ++a)
            for (int c = 0; c < 3; ++c) b(a, c) = parameters[static_cast<Eigen::Index>(9 * p + 3 * a + c)];
        blocks.emplace(pairs[p], b);
    }
    return enforce_asr(ForceConstants(natoms, blocks));
}

struct PairFit {
    FitReport report;
    Eigen::VectorXd parameters;
};

inline PairFit fit_pairs(const std::vector<TrainingSnapshot>& snapshots,
                         const std::vector<std::pair<std::size_t, std::size_t>>& pairs, std::size_t natoms,
                         double ridge) {
    const std::size_t n_val = validation_count(snapshots.size());
    const std::size_t n_train = snapshots.size() - n_val;
    const auto x = design_matrix(snapshots, 0, n_train, pairs, natoms);
    const auto y = force_vector(snapshots, 0, n_train, natoms);
    auto solved = solve_ridge(x, y, ridge);

    PairFit out;
    out.parameters = solved.parameters;
    auto& r = out.report;
    r.fc = assemble(pairs, solved.parameters, natoms);
    r.rank = solved.rank;
    r.n_validation = n_val;
    r.active_pairs = pairs;
    r.n_parameters_initial = r.n_parameters_final = 9 * pairs.size();
    r.rmse_training = force_rmse(r.fc, snapshots, 0, n_train);
    r.rmse_validation = n_val > 0 ? force_rmse(r.fc, snapshots, n_train, snapshots.size()) : r.rmse_training;
    return out;
}

inline std::vector<std::string> displacement_warnings(const std::vector<TrainingSnapshot>& snapshots, double cutoff) {
    double largest = 0.0;
    for (const auto& s : snapshots)
        for (const auto& u : s.displacements) largest = std::max(largest, u.norm());
    if (largest >= 0.5 * cutoff)
        return {"largest training displacement " + std::to_string(largest) + " A is not below half the cutoff"};
    return {};
}

}  // namespace detail

/// Ridge least-squares fit of the pair model. The last ceil(10%) of the
/// snapshots (when there are at least two) are held out for validation.
inline FitReport fit(const std::vector<TrainingSnapshot>& snapshots, const FeatureMap& features, double ridge = 1e-8) {
    if (snapshots.empty()) throw FitError("SingularFit", "no training snapshots");
    detail::check_snapshots(snapshots, features.natoms);
    auto result = detail::fit_pairs(snapshots, features.pairs, features.natoms, ridge);
    result.report.cutoff = features.cutoff;
    result.report.warnings = detail::displacement_warnings(snapshots, features.cutoff);
    return result.report;
}

/// Recursive feature elimination over whole pair blocks. Drops the block with
/// the smallest coefficient norm, refits, and stops once the held-out RMSE
/// exceeds the full model's by more than `tolerance` or the target fraction
/// is reached. Returns the sparsest model that stayed within tolerance.
inline FitReport rfe(const std::vector<TrainingSnapshot>& snapshots, const FeatureMap& features,
                     const RfeOptions& options = {}) {
    if (detail::validation_count(snapshots.size()) == 0)
        throw FitError("InsufficientData", "at least two snapshots are needed to hold out a validation split");
    detail::check_snapshots(snapshots, features.natoms);

    auto current = detail::fit_pairs(snapshots, features.pairs, features.natoms, options.ridge);
    const double limit = current.report.rmse_validation + options.tolerance;
    const std::size_t initial_blocks = features.pairs.size();
    const std::size_t keep = std::max<std::size_t>(
        initial_blocks == 0 ? 0 : 1,
        static_cast<std::size_t>(std::ceil(options.target_fraction * static_cast<double>(initial_blocks) - 1e-12)));

    // Elimination rounds solve the ridge normal equations on the cached Gram
    // matrix; the surviving set is refitted with the full QR solve.
    const std::size_t n_train = snapshots.size() - detail::validation_count(snapshots.size());
    const Eigen::MatrixXd x = detail::design_matrix(snapshots, 0, n_train, features.pairs, features.natoms);
    const Eigen::MatrixXd gram = x.transpose() * x;
    const Eigen::VectorXd xty = x.transpose() * detail::force_vector(snapshots, 0, n_train, features.natoms);
    const double scale = x.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, x.cols()));

    std::vector<std::size_t> active(initial_blocks);
    for (std::size_t p = 0; p < initial_blocks; ++p) active[p] = p;
    auto pairs_of = [&](const std::vector<std::size_t>& idx) {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (auto p : idx) out.push_back(features.pairs[p]);
        return out;
    };
    auto solve_subset = [&](const std::vector<std::size_t>& idx) {
        const Eigen::Index n = static_cast<Eigen::Index>(9 * idx.size());
        Eigen::MatrixXd g(n, n);
        Eigen::VectorXd b(n);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            b.segment(9 * r, 9) = xty.segment(9 * idx[r], 9);
            for (std::size_t c = 0; c < idx.size(); ++c) g.block(9 * r, 9 * c, 9, 9) = gram.block(9 * idx[r], 9 * idx[c], 9, 9);
        }
        g.diagonal().array() += options.ridge * scale;
        return Eigen::VectorXd(g.ldlt().solve(b));
    };

    std::vector<std::size_t> best_set = active;
    Eigen::VectorXd params = current.parameters;
    while (active.size() > keep) {
        std::size_t weakest = 0;
        double weakest_norm = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < active.size(); ++p) {
            const double norm = params.segment(static_cast<Eigen::Index>(9 * p), 9).norm();
            if (norm < weakest_norm) {
                weakest_norm = norm;
                weakest = p;
            }
        }
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(weakest));
        params = solve_subset(active);
        const auto fc = detail::assemble(pairs_of(active), params, features.natoms);
        if (detail::force_rmse(fc, snapshots, n_train, snapshots.size()) > limit) break;
        best_set = active;
    }
    FitReport best = best_set.size() == initial_blocks
                         ? current.report
                         : detail::fit_pairs(snapshots, pairs_of(best_set), features.natoms, options.ridge).report;
    best.n_parameters_initial = features.n_parameters();
    best.cutoff = features.cutoff;
    best.warnings = detail::displacement_warnings(snapshots, features.cutoff);
    return best;
}

}  // namespace vibroline
