#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "vibroline/error.hpp"
#include "vibroline/model.hpp"
#include "vibroline/phonons.hpp"
#include "vibroline/units.hpp"

namespace vibroline {

struct ModeCoupling {
    double energy = 0.0;   // ħω_λ, meV
    double delta_q = 0.0;  // ΔQ_λ, √amu·Å
    double hr = 0.0;       // S_λ
    bool excluded = false; // non-positive energy, never contributes
};

struct VibronicCoupling {
    std::vector<ModeCoupling> modes;
    double total_hr = 0.0;

    /// Builds a coupling directly from (energy meV, S) pairs.
    static VibronicCoupling from_modes(const std::vector<std::pair<double, double>>& energy_and_hr) {
        VibronicCoupling c;
        for (auto [energy, hr] : energy_and_hr) {
            if (hr < 0.0) throw VibronicError("InvalidCoupling", "Huang-Rhys factors must be non-negative");
            ModeCoupling m;
            m.energy = energy;
            m.excluded = !(energy > 0.0);
            m.hr = m.excluded ? 0.0 : hr;
            m.delta_q = m.excluded ? 0.0 : std::sqrt(2.0 * units::hbar_squared * hr / (energy / units::mev_per_ev));
            c.total_hr += m.hr;
            c.modes.push_back(m);
        }
        return c;
    }

    double max_active_energy() const {
        double e = 0.0;
        for (const auto& m : modes)
            if (!m.excluded && m.hr > 0.0) e = std::max(e, m.energy);
        return e;
    }
};

/// Projection of the mass-weighted ground-to-excited displacement on every
/// mode of `basis` (ground-state modes). Complex projections keep their
/// modulus with the sign of the real part.
inline VibronicCoupling delta_q(const GeometryPair& pair, const PhononBasis& basis) {
    const std::size_t n = pair.ground().size();
    if (static_cast<std::size_t>(basis.eigenvectors.rows()) != 3 * n || basis.energies.size() != 3 * n)
        throw VibronicError("DimensionMismatch", "phonon basis has dimension " +
                                                     std::to_string(basis.eigenvectors.rows()) + " but the structure needs " +
                                                     std::to_string(3 * n));
    const auto displacement = validate_pair(pair);
    Eigen::VectorXcd weighted(3 * n);
    for (std::size_t i = 0; i < n; ++i)
        weighted.segment<3>(3 * i) = (std::sqrt(pair.ground().mass(i)) * displacement[i]).cast<std::complex<double>>();

    VibronicCoupling out;
    out.modes.resize(3 * n);
    for (std::size_t k = 0; k < 3 * n; ++k) {
        const std::complex<double> p = basis.eigenvectors.col(static_cast<Eigen::Index>(k)).dot(weighted);
        auto& m = out.modes[k];
        m.energy = basis.energies[k];
        m.delta_q = std::abs(p) * (p.real() < 0.0 ? -1.0 : 1.0);
        m.excluded = !(m.energy > 0.0);
    }
    return out;
}

/// S_λ = ħω_λ ΔQ_λ² / (2ħ²) for every positive-energy mode.
inline VibronicCoupling hr_factors(VibronicCoupling coupling) {
    coupling.total_hr = 0.0;
    for (auto& m : coupling.modes) {
        m.excluded = !(m.energy > 0.0);
        m.hr = m.excluded ? 0.0 : (m.energy / units::mev_per_ev) * m.delta_q * m.delta_q / (2.0 * units::hbar_squared);
        coupling.total_hr += m.hr;
    }
    return coupling;
}

/// Zero-temperature weight of the zero-phonon line.
inline double debye_waller(const VibronicCoupling& coupling) { return std::exp(-coupling.total_hr); }

struct LineshapeConfig {
    double sigma = 5.0;        // Gaussian broadening of the spectral density, meV
    double zpl_energy = 0.0;   // meV
    double spacing = 0.1;      // energy grid step, meV
    double gamma = 1.0;        // Lorentzian half width from time-domain damping, meV
    std::optional<double> window_below;  // extent below the ZPL, meV
    std::optional<double> window_above;  // extent above the ZPL, meV
    bool frequency_cubed = true;
    std::size_t min_fft_points = 8192;

    void validate() const {
        if (!(sigma > 0.0)) throw VibronicError("InvalidConfig", "sigma must be positive");
        if (!(spacing > 0.0)) throw VibronicError("InvalidConfig", "grid spacing must be positive");
        if (spacing > sigma / 3.0 * (1.0 + 1e-12))
            throw VibronicError("GridTooCoarse", "grid spacing exceeds sigma/3");
        if (!(gamma > 0.0)) throw VibronicError("InvalidConfig", "gamma must be positive");
        if (window_below && !(*window_below > 0.0))
            throw VibronicError("InvalidConfig", "window below the ZPL must be positive");
        if (window_above && !(*window_above >= 0.0))
            throw VibronicError("InvalidConfig", "window above the ZPL must be non-negative");
    }
};

/// Concrete FFT grid: shifts x = zpl - E from -above*spacing to +below*spacing.
struct LineshapeGrid {
    double spacing = 0.0;
    long below = 0;
    long above = 0;
    std::size_t fft_size = 0;
};

inline LineshapeGrid resolve_grid(const LineshapeConfig& config, const VibronicCoupling& reference) {
    config.validate();
    const double below = config.window_below.value_or(std::max(10.0 * reference.max_active_energy(), 10.0 * config.sigma));
    const double above = config.window_above.value_or(std::max(5.0 * config.sigma, 100.0 * config.gamma));
    LineshapeGrid grid;
    grid.spacing = config.spacing;
    grid.below = static_cast<long>(std::ceil(below / config.spacing - 1e-9));
    grid.above = static_cast<long>(std::ceil(above / config.spacing - 1e-9));
    const std::size_t points = static_cast<std::size_t>(grid.below + grid.above + 1);
    std::size_t n = 1;
    while (n < 2 * points) n <<= 1;
    grid.fft_size = std::max(n, config.min_fft_points);
    return grid;
}

namespace detail {

inline double gaussian_density(const VibronicCoupling& coupling, double x, double sigma) {
    const double norm = 1.0 / (sigma * std::sqrt(2.0 * units::pi));
    double sum = 0.0;
    for (const auto& m : coupling.modes) {
        if (m.excluded || m.hr == 0.0) continue;
        const double z = (x - m.energy) / sigma;
        if (std::abs(z) > 40.0) continue;
        sum += m.hr * norm * std::exp(-0.5 * z * z);
    }
    return sum;
}

struct ShiftShape {
    std::vector<double> damped;    // with the Lorentzian ZPL width
    std::vector<double> undamped;  // phonon weights alone, used for window coverage
};

/// Shift-domain lineshape before the ω³ prefactor, indexed by FFT bin; bin k
/// holds x = k*spacing for k < N/2 and (k - N)*spacing above.
inline ShiftShape shift_lineshape(const VibronicCoupling& coupling, const LineshapeConfig& config,
                                  const LineshapeGrid& grid) {
    const std::size_t n = grid.fft_size;
    const double de = grid.spacing;
    const auto signed_bin = [n](std::size_t k) {
        return k < n / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
    };

    std::vector<std::complex<double>> density(n);
    for (std::size_t k = 0; k < n; ++k) density[k] = gaussian_density(coupling, signed_bin(k) * de, config.sigma) * de;

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> s_of_t;
    fft.fwd(s_of_t, density);
    const std::complex<double> s0 = s_of_t[0];

    std::vector<std::complex<double>> generating(n), damped(n);
    const double damping_per_bin = config.gamma * 2.0 * units::pi / (static_cast<double>(n) * de);
    for (std::size_t k = 0; k < n; ++k) {
        generating[k] = std::exp(s_of_t[k] - s0);
        damped[k] = generating[k] * std::exp(-damping_per_bin * std::abs(signed_bin(k)));
    }

    ShiftShape out;
    std::vector<std::complex<double>> shape;
    fft.inv(shape, damped);
    out.damped.resize(n);
    for (std::size_t k = 0; k < n; ++k) out.damped[k] = std::max(0.0, shape[k].real() / de);
    fft.inv(shape, generating);
    out.undamped.resize(n);
    for (std::size_t k = 0; k < n; ++k) out.undamped[k] = shape[k].real();
    return out;
}

inline Spectrum lineshape_on_grid(const VibronicCoupling& coupling, const LineshapeConfig& config,
                                  const LineshapeGrid& grid) {
    const auto shifted = shift_lineshape(coupling, config, grid);
    const auto& shape = shifted.damped;
    const long n = static_cast<long>(grid.fft_size);
    const double de = grid.spacing;

    std::vector<double> energies;
    std::vector<double> intensities;
    energies.reserve(static_cast<std::size_t>(grid.below + grid.above + 1));
    intensities.reserve(energies.capacity());
    double inside = 0.0;
    for (long m = grid.below; m >= -grid.above; --m) {
        const auto bin = static_cast<std::size_t>(((m % n) + n) % n);
        inside += shifted.undamped[bin];
        const double energy = config.zpl_energy - static_cast<double>(m) * de;
        const double prefactor = config.frequency_cubed ? std::pow(std::max(energy, 0.0), 3) : 1.0;
        energies.push_back(energy);
        intensities.push_back(shape[bin] * prefactor);
    }
    // Coverage counts phonon weight only; the Lorentzian tails of the ZPL
    // width are cut by any finite window.
    if (1.0 - inside >= 1e-3)
        throw VibronicError("WindowTooNarrow", std::to_string(100.0 * (1.0 - inside)) +
                                                   "% of the spectral weight falls outside the energy window");
    double area = 0.0;
    for (double v : intensities) area += v * de;
    if (!(area > 0.0)) throw VibronicError("WindowTooNarrow", "no spectral weight inside the energy window");
    for (double& v : intensities) v /= area;
    return Spectrum(std::move(energies), std::move(intensities), config.zpl_energy);
}

}  // namespace detail

/// Gaussian-broadened spectral density on a phonon-energy grid; each mode
/// contributes a Gaussian of area S_λ.
inline Spectrum spectral_density(const VibronicCoupling& coupling, const LineshapeConfig& config) {
    config.validate();
    double lo = 0.0, hi = 0.0;
    for (const auto& m : coupling.modes) {
        if (m.excluded || m.hr == 0.0) continue;
        lo = std::min(lo, m.energy - 10.0 * config.sigma);
        hi = std::max(hi, m.energy + 10.0 * config.sigma);
    }
    const long first = static_cast<long>(std::floor(lo / config.spacing));
    const long last = static_cast<long>(std::ceil(hi / config.spacing));
    std::vector<double> energies, values;
    for (long k = first; k <= last; ++k) {
        const double x = static_cast<double>(k) * config.spacing;
        energies.push_back(x);
        values.push_back(detail::gaussian_density(coupling, x, config.sigma));
    }
    return Spectrum(std::move(energies), std::move(values), config.zpl_energy);
}

/// Emission lineshape from the generating function, area-normalized to 1.
inline Spectrum lineshape(const VibronicCoupling& coupling, const LineshapeConfig& config) {
    return detail::lineshape_on_grid(coupling, config, resolve_grid(config, coupling));
}

/// Restricts the coupling to modes with energy <= cutoff (meV).
inline VibronicCoupling truncate_coupling(const VibronicCoupling& coupling, double cutoff) {
    VibronicCoupling out = coupling;
    out.total_hr = 0.0;
    for (auto& m : out.modes) {
        if (m.energy > cutoff) m.hr = 0.0;
        out.total_hr += m.hr;
    }
    return out;
}

/// Lineshape keeping only modes up to `cutoff` meV, on the same grid as the
/// full lineshape.
inline Spectrum partial_lineshape(const VibronicCoupling& coupling, const LineshapeConfig& config, double cutoff) {
    const auto grid = resolve_grid(config, coupling);
    return detail::lineshape_on_grid(truncate_coupling(coupling, cutoff), config, grid);
}

struct Peak {
    double energy = 0.0;   // meV
    double spacing = 0.0;  // distance to the previous (higher-energy) peak, meV
};

/// Local maxima of a 5-point quadratic Savitzky-Golay smoothing, refined by a
/// parabola through the maximum and its neighbours. Peaks below
/// `relative_threshold` of the smoothed maximum are ignored. Ordered from
/// the highest energy down.
inline std::vector<Peak> peak_spacing(const Spectrum& spectrum, double relative_threshold = 1e-3) {
    const auto& y = spectrum.intensities();
    const auto& e = spectrum.energies();
    const std::size_t n = y.size();
    std::vector<double> s(y);
    for (std::size_t i = 2; i + 2 < n; ++i)
        s[i] = (-3.0 * y[i - 2] + 12.0 * y[i - 1] + 17.0 * y[i] + 12.0 * y[i + 1] - 3.0 * y[i + 2]) / 35.0;
    double top = 0.0;
    for (double v : s) top = std::max(top, v);

    std::vector<Peak> peaks;
    for (std::size_t i = n >= 2 ? n - 2 : 0; i >= 1 && i + 1 < n; --i) {
        if (!(s[i] > s[i + 1] && s[i] >= s[i - 1] && s[i] >= relative_threshold * top && s[i] > 0.0)) continue;
        const double curvature = s[i - 1] - 2.0 * s[i] + s[i + 1];
        const double offset = curvature != 0.0 ? 0.5 * (s[i - 1] - s[i + 1]) / curvature : 0.0;
        Peak p;
        p.energy = e[i] + offset * spectrum.spacing();
        p.spacing = peaks.empty() ? 0.0 : peaks.back().energy - p.energy;
        peaks.push_back(p);
    }
    if (peaks.empty()) throw VibronicError("NoPeaks", "spectrum has no local maxima");
    return peaks;
}

}  // namespace vibroline
