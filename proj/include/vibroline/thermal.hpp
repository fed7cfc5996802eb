#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vibroline/error.hpp"
#include "vibroline/units.hpp"

namespace vibroline {

struct ThermalPoint {
    double temperature = 0.0;  // K
    double value = 0.0;
    std::optional<double> sigma;
};

/// Temperature series sorted by temperature; needs at least four points.
class ThermalSeries {
public:
    ThermalSeries(std::vector<ThermalPoint> points, std::string label = "value")
        : points_(std::move(points)), label_(std::move(label)) {
        std::sort(points_.begin(), points_.end(),
                  [](const ThermalPoint& a, const ThermalPoint& b) { return a.temperature < b.temperature; });
        if (points_.size() < 4)
            throw ThermalError("InvalidSeries", "at least 4 points are required, got " + std::to_string(points_.size()));
        for (std::size_t i = 0; i < points_.size(); ++i) {
            const auto& p = points_[i];
            if (!(p.temperature > 0.0) || !std::isfinite(p.temperature))
                throw ThermalError("InvalidSeries", "temperatures must be positive");
            if (!std::isfinite(p.value)) throw ThermalError("InvalidSeries", "values must be finite");
            if (p.sigma && !(*p.sigma > 0.0)) throw ThermalError("InvalidSeries", "uncertainties must be positive");
            if (i > 0 && !(p.temperature > points_[i - 1].temperature))
                throw ThermalError("InvalidSeries", "temperatures must be distinct");
        }
        const bool any = points_.front().sigma.has_value();
        for (const auto& p : points_)
            if (p.sigma.has_value() != any)
                throw ThermalError("InvalidSeries", "uncertainties must be given for all points or none");
    }

    const std::vector<ThermalPoint>& points() const noexcept { return points_; }
    const std::string& label() const noexcept { return label_; }
    std::size_t size() const noexcept { return points_.size(); }

private:
    std::vector<ThermalPoint> points_;
    std::string label_;
};

struct ArrheniusFit {
    double amplitude = 0.0;
    double c = 0.0;
    double e_a = 0.0;  // meV
    Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  // (amplitude, c, e_a)
    double rms_residual = 0.0;
    std::size_t iterations = 0;

    double sigma_amplitude() const { return std::sqrt(std::max(0.0, covariance(0, 0))); }
    double sigma_c() const { return std::sqrt(std::max(0.0, covariance(1, 1))); }
    double sigma_e_a() const { return std::sqrt(std::max(0.0, covariance(2, 2))); }
};

/// Single-activation quenching: amplitude / (1 + c exp(-e_a / k_B T)).
inline double model_eval(double amplitude, double c, double e_a, double temperature) {
    return amplitude / (1.0 + c * std::exp(-e_a / (units::boltzmann_mev_per_k * temperature)));
}

struct ArrheniusGuess {
    double c = 9.0;
    double e_a = 39.0;
};

namespace detail {

struct ThermalProblem {
    Eigen::VectorXd t, y, w;

    explicit ThermalProblem(const ThermalSeries& series) {
        const auto n = static_cast<Eigen::Index>(series.size());
        t.resize(n);
        y.resize(n);
        w.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& p = series.points()[static_cast<std::size_t>(i)];
            t[i] = p.temperature;
            y[i] = p.value;
            w[i] = p.sigma ? 1.0 / (*p.sigma * *p.sigma) : 1.0;
        }
    }

    Eigen::VectorXd shape(double c, double e_a) const {
        Eigen::VectorXd f(t.size());
        for (Eigen::Index i = 0; i < t.size(); ++i) f[i] = model_eval(1.0, c, e_a, t[i]);
        return f;
    }

    /// Amplitude minimizing the weighted residual for fixed (c, e_a).
    double best_amplitude(const Eigen::VectorXd& f) const {
        const double den = (w.array() * f.array() * f.array()).sum();
        return den > 0.0 ? (w.array() * f.array() * y.array()).sum() / den : 0.0;
    }

    double cost(double amplitude, double c, double e_a) const {
        const Eigen::VectorXd r = y - amplitude * shape(c, e_a);
        return (w.array() * r.array() * r.array()).sum();
    }
};

}  // namespace detail

/// Weighted least-squares fit: log-grid scan over (c, e_a) with the amplitude
/// solved linearly at every node, then damped Gauss-Newton in
/// (amplitude, ln c, ln e_a).
inline ArrheniusFit fit_arrhenius(const ThermalSeries& series, std::optional<ArrheniusGuess> guess = std::nullopt) {
    const detail::ThermalProblem prob(series);
    const double ymax = prob.y.cwiseAbs().maxCoeff();
    if (prob.y.maxCoeff() - prob.y.minCoeff() <= 1e-12 * std::max(ymax, std::numeric_limits<double>::min()))
        throw ThermalError("DegenerateData", "all values are equal");

    // Coarse scan.
    double best_cost = std::numeric_limits<double>::infinity();
    double amp = 0.0, lc = 0.0, le = 0.0;
    auto consider = [&](double c, double e_a) {
        const auto f = prob.shape(c, e_a);
        const double a = prob.best_amplitude(f);
        const double cost = prob.cost(a, c, e_a);
        if (cost < best_cost) {
            best_cost = cost;
            amp = a;
            lc = std::log(c);
            le = std::log(e_a);
        }
    };
    constexpr int kGridC = 61, kGridE = 81;
    for (int i = 0; i < kGridC; ++i)
        for (int j = 0; j < kGridE; ++j) {
            const double c = std::pow(10.0, -2.0 + 5.0 * i / (kGridC - 1));
            const double e_a = std::pow(10.0, std::log10(500.0) * j / (kGridE - 1));
            consider(c, e_a);
        }
    if (guess) consider(guess->c, guess->e_a);

    // Refinement on a value-normalized problem so the gradient threshold is
    // independent of the data scale.
    const double scale = ymax;
    const double wscale = prob.w.maxCoeff();
    const Eigen::VectorXd sw = (prob.w.array() / wscale).sqrt();
    const Eigen::VectorXd ys = prob.y / scale;
    Eigen::Vector3d p(amp / scale, lc, le);

    auto residual = [&](const Eigen::Vector3d& q, Eigen::MatrixXd* jac) {
        const double c = std::exp(q[1]), e_a = std::exp(q[2]);
        Eigen::VectorXd r(prob.t.size());
        if (jac) jac->resize(prob.t.size(), 3);
        for (Eigen::Index i = 0; i < prob.t.size(); ++i) {
            const double x = std::exp(-e_a / (units::boltzmann_mev_per_k * prob.t[i]));
            const double den = 1.0 + c * x;
            const double m = q[0] / den;
            r[i] = sw[i] * (ys[i] - m);
            if (jac) {
                (*jac)(i, 0) = -sw[i] / den;
                (*jac)(i, 1) = sw[i] * q[0] * c * x / (den * den);
                (*jac)(i, 2) = -sw[i] * q[0] * c * x * e_a / (units::boltzmann_mev_per_k * prob.t[i]) / (den * den);
            }
        }
        return r;
    };

    Eigen::MatrixXd jac;
    Eigen::VectorXd r = residual(p, &jac);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    std::size_t iter = 0;
    bool converged = false;
    for (; iter < 500; ++iter) {
        const Eigen::Vector3d grad = jac.transpose() * r;
        if (grad.norm() < 1e-10) {
            converged = true;
            break;
        }
        const Eigen::Matrix3d jtj = jac.transpose() * jac;
        bool improved = false;
        while (lambda < 1e16) {
            Eigen::Matrix3d damped = jtj;
            damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-30);
            const Eigen::Vector3d step = damped.ldlt().solve(-grad);
            const Eigen::Vector3d trial = p + step;
            Eigen::MatrixXd trial_jac;
            const Eigen::VectorXd trial_r = residual(trial, &trial_jac);
            const double trial_cost = trial_r.squaredNorm();
            if (std::isfinite(trial_cost) && trial_cost <= cost) {
                const bool stalled = step.norm() <= 1e-15 * (1.0 + p.norm());
                p = trial;
                r = trial_r;
                jac = trial_jac;
                cost = trial_cost;
                lambda = std::max(lambda / 10.0, 1e-12);
                improved = !stalled;
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) {
            // No further decrease representable in double precision: the
            // iterate is a minimum to machine accuracy.
            converged = (jac.transpose() * r).norm() < 1e-6;
            break;
        }
    }
    if (!converged)
        throw ThermalError("NonConvergence", "Gauss-Newton refinement did not reach a gradient norm below 1e-10");

    ArrheniusFit out;
    out.amplitude = p[0] * scale;
    out.c = std::exp(p[1]);
    out.e_a = std::exp(p[2]);
    out.iterations = iter;

    // Covariance in (amplitude, c, e_a) from the weighted Jacobian, scaled by
    // the residual variance.
    Eigen::MatrixXd j(prob.t.size(), 3);
    double chi2 = 0.0, rss = 0.0;
    for (Eigen::Index i = 0; i < prob.t.size(); ++i) {
        const double x = std::exp(-out.e_a / (units::boltzmann_mev_per_k * prob.t[i]));
        const double den = 1.0 + out.c * x;
        const double sq = std::sqrt(prob.w[i]);
        j(i, 0) = sq / den;
        j(i, 1) = -sq * out.amplitude * x / (den * den);
        j(i, 2) = sq * out.amplitude * out.c * x / (units::boltzmann_mev_per_k * prob.t[i]) / (den * den);
        const double res = prob.y[i] - out.amplitude / den;
        chi2 += prob.w[i] * res * res;
        rss += res * res;
    }
    const double dof = std::max<double>(1.0, static_cast<double>(prob.t.size()) - 3.0);
    const Eigen::Matrix3d info = j.transpose() * j;
    Eigen::Matrix3d cov = info.completeOrthogonalDecomposition().pseudoInverse() * (chi2 / dof);
    out.covariance = 0.5 * (cov + cov.transpose());
    out.rms_residual = std::sqrt(rss / static_cast<double>(prob.t.size()));
    return out;
}

}  // namespace vibroline
