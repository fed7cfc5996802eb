// Minimal library walk-through: a stretched dimer, its phonons, Huang-Rhys
// factors and the emission lineshape.

#include <cstdio>

#include "vibroline.hpp"

using namespace vibroline;

int main() {
    const double mass = 28.0, k = 4.34;  // amu, eV/A^2
    const CrystalStructure ground(Mat3::Zero(),
                                  {AtomSite{"Si", mass, Vec3(0, 0, 0)}, AtomSite{"Si", mass, Vec3(2.0, 0, 0)}}, false);
    const CrystalStructure excited(Mat3::Zero(),
                                   {AtomSite{"Si", mass, Vec3(-0.1, 0, 0)}, AtomSite{"Si", mass, Vec3(2.1, 0, 0)}},
                                   false);
    Mat3 b = Mat3::Zero();
    b(0, 0) = k;
    const ForceConstants fc(2, {{{0, 0}, b}, {{1, 1}, b}, {{0, 1}, Mat3(-b)}});

    const auto basis = phonons_at(enforce_asr(fc), ground, Vec3::Zero());
    const auto coupling = hr_factors(delta_q(GeometryPair(ground, excited), basis));
    std::printf("S = %.4f, Debye-Waller = %.4f\n", coupling.total_hr, debye_waller(coupling));

    LineshapeConfig config;
    config.zpl_energy = 1350.0;
    config.sigma = 2.0;
    for (const auto& p : peak_spacing(lineshape(coupling, config)))
        std::printf("peak at %.2f meV, %.2f meV below the previous one\n", p.energy, p.spacing);
}
