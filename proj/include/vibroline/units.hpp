#pragma once

/// Unit conventions: lengths in Å, masses in amu, force constants in eV/Å²,
/// phonon and spectral energies in meV.
namespace vibroline::units {

/// ħ² expressed in amu·Å²·eV. Converts an eigenvalue of the mass-weighted
/// dynamical matrix (eV/Å²/amu) into (ħω)² in eV², and ω·ΔQ²/ħ into a
/// dimensionless number.
inline constexpr double hbar_squared = 4.18103e-3;

/// Boltzmann constant in meV/K.
inline constexpr double boltzmann_mev_per_k = 0.0861733;

inline constexpr double mev_per_ev = 1000.0;

inline constexpr double pi = 3.14159265358979323846;

}  // namespace vibroline::units
