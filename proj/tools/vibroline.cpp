// vibroline: phonons, vibronic lineshapes, force-constant fitting and
// activation fits from the command line.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "vibroline.hpp"
#include "vibroline/io.hpp"

namespace fs = std::filesystem;
using namespace vibroline;
using json = nlohmann::ordered_json;

namespace {

int exit_code_for(const Error& e) {
    static const std::map<std::string, int> codes = {
        {"ParseError", 2},          {"UsageError", 2},       {"MismatchedStructures", 4}, {"WrapAmbiguity", 4},
        {"WindowTooNarrow", 5},     {"SingularFit", 6},      {"InsufficientData", 6},     {"DegenerateData", 7},
        {"NonConvergence", 7},      {"NotCommensurate", 8},      {"IoError", 2},
    };
    auto it = codes.find(e.name());
    return it == codes.end() ? 3 : it->second;
}

int report(const Error& e) {
    const int code = exit_code_for(e);
    std::string message = e.what();
    std::replace(message.begin(), message.end(), '\n', ' ');
    std::cerr << "ERROR:" << code << ":" << e.module() << ":" << e.name() << ": " << message << "\n";
    return code;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CliError("IoError", "cannot write " + path.string());
    out << content;
}

json number(double v) { return io::round12(v); }

std::string spectrum_csv(const Spectrum& s) {
    std::string out = "energy_meV,intensity\n";
    for (std::size_t i = 0; i < s.size(); ++i)
        out += io::format12(s.energies()[i]) + "," + io::format12(s.intensities()[i]) + "\n";
    return out;
}

/// Expands `--config <file>` (flat key=value lines, `#` comments) into
/// `--key=value` arguments placed before the command-line ones, so explicit
/// flags override the file. Keys must name options of the subcommand.
std::vector<std::string> expand_config(const std::vector<std::string>& args, const CLI::App& app) {
    std::vector<std::string> out, rest;
    std::optional<std::string> config;
    std::string sub;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config = args[i].substr(9);
        } else {
            if (sub.empty() && !args[i].empty() && args[i][0] != '-') sub = args[i];
            rest.push_back(args[i]);
        }
    }
    if (!config) return args;
    const CLI::App* target = nullptr;
    try {
        target = app.get_subcommand(sub);
    } catch (const CLI::OptionNotFound&) {
        throw CliError("UsageError", "--config needs a subcommand");
    }
    const auto src = io::TextSource::from_file(*config);
    std::vector<std::string> from_file;
    for (std::size_t ln = 1; ln <= src.line_count(); ++ln) {
        const std::string& line = src.line(ln);
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) src.fail(ln, first + 1, "expected key=value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        std::replace(key.begin(), key.end(), '_', '-');
        if (key == "config" || target->get_option_no_throw("--" + key) == nullptr)
            src.fail(ln, first + 1, "unknown key '" + key + "' for command " + sub);
        from_file.push_back("--" + key + "=" + value);
    }
    for (const auto& a : rest) {
        out.push_back(a);
        if (a == sub) out.insert(out.end(), from_file.begin(), from_file.end());
    }
    return out;
}

struct LineshapeOptions {
    std::string ground, excited, fc;
    double zpl = 0.0;
    double sigma = 5.0;
    double spacing = 0.1;
    double gamma = 1.0;
    std::optional<double> window_below, window_above;
    bool no_cubic = false;
    bool no_asr = false;
    double peak_threshold = 1e-3;
    std::vector<double> cutoffs;

    LineshapeConfig config() const {
        LineshapeConfig c;
        c.zpl_energy = zpl;
        c.sigma = sigma;
        c.spacing = spacing;
        c.gamma = gamma;
        c.window_below = window_below;
        c.window_above = window_above;
        c.frequency_cubed = !no_cubic;
        return c;
    }
};

void add_lineshape_options(CLI::App* cmd, LineshapeOptions& o) {
    cmd->add_option("--ground", o.ground, "Ground-state structure file")->required();
    cmd->add_option("--excited", o.excited, "Excited-state structure file")->required();
    cmd->add_option("--fc", o.fc, "Ground-state force constants file")->required();
    cmd->add_option("--zpl-energy", o.zpl, "Zero-phonon line energy (meV)")->required();
    cmd->add_option("--sigma", o.sigma, "Gaussian broadening of the spectral density (meV)");
    cmd->add_option("--spacing", o.spacing, "Energy grid spacing (meV)");
    cmd->add_option("--gamma", o.gamma, "Lorentzian zero-phonon half width (meV)");
    cmd->add_option("--window-below", o.window_below, "Window extent below the ZPL (meV)");
    cmd->add_option("--window-above", o.window_above, "Window extent above the ZPL (meV)");
    cmd->add_flag("--no-cubic", o.no_cubic, "Skip the cubic photon-energy prefactor");
    cmd->add_flag("--no-asr", o.no_asr, "Use the force constants without the acoustic sum rule");
    cmd->add_option("--peak-threshold", o.peak_threshold, "Relative height below which maxima are ignored");
}

VibronicCoupling coupling_from_files(const LineshapeOptions& o) {
    const auto ground = io::read_structure(o.ground);
    const auto excited = io::read_structure(o.excited);
    const GeometryPair pair(ground, excited);
    auto fc = io::read_force_constants(o.fc);
    if (!o.no_asr) fc = enforce_asr(fc);
    const auto basis = phonons_at(fc, ground, Vec3::Zero());
    return hr_factors(delta_q(pair, basis));
}

std::string modes_csv(const VibronicCoupling& c) {
    std::string out = "mode_index,energy_meV,delta_q,hr,excluded\n";
    for (std::size_t k = 0; k < c.modes.size(); ++k) {
        const auto& m = c.modes[k];
        out += std::to_string(k) + "," + io::format12(m.energy) + "," + io::format12(m.delta_q) + "," +
               io::format12(m.hr) + "," + (m.excluded ? "1" : "0") + "\n";
    }
    return out;
}

json lineshape_summary(const VibronicCoupling& coupling, const Spectrum& spectrum, const LineshapeConfig& config,
                       double peak_threshold) {
    json j;
    j["total_hr"] = number(coupling.total_hr);
    j["dw_factor"] = number(debye_waller(coupling));
    j["zpl_energy_meV"] = number(config.zpl_energy);
    std::vector<Peak> peaks;
    try {
        peaks = peak_spacing(spectrum, peak_threshold);
    } catch (const VibronicError&) {
    }
    // First sideband peak: the highest one clearly below the ZPL.
    const double guard = std::max(3.0 * config.gamma, 2.0 * config.spacing);
    json first = nullptr;
    for (const auto& p : peaks)
        if (p.energy < config.zpl_energy - guard) {
            first = number(config.zpl_energy - p.energy);
            break;
        }
    j["first_peak_offset_meV"] = first;
    json spacings = json::array();
    for (std::size_t k = 1; k < peaks.size(); ++k) spacings.push_back(number(peaks[k].spacing));
    j["peak_spacings_meV"] = spacings;
    j["peak_energies_meV"] = json::array();
    for (const auto& p : peaks) j["peak_energies_meV"].push_back(number(p.energy));
    return j;
}

std::string cutoff_label(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phonon sidebands, Debye-Waller factors and local vibrational modes of point defects"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");
    // Config values are inserted ahead of the command line, so the last one wins.
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string output_dir = ".";

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--output-dir", output_dir, "Directory for output files");
        cmd->add_option("--config", "Flat key=value file with option defaults");
    };

    // phonons
    auto* ph = app.add_subcommand("phonons", "Phonon energies at reduced wavevectors");
    std::string ph_structure, ph_fc, ph_qfile;
    std::vector<std::string> ph_q;
    bool ph_eig = false, ph_no_asr = false;
    ph->add_option("--structure", ph_structure, "Structure file")->required();
    ph->add_option("--fc", ph_fc, "Force constants file")->required();
    ph->add_option("--qpoints", ph_qfile, "File of reduced wavevectors");
    ph->add_option("--q", ph_q, "Reduced wavevector 'qx qy qz' (repeatable)")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    ph->add_flag("--eigenvectors", ph_eig, "Also write eigenvectors.csv");
    ph->add_flag("--no-asr", ph_no_asr, "Use the force constants without the acoustic sum rule");
    add_common(ph);

    // lineshape
    auto* ls = app.add_subcommand("lineshape", "Photoluminescence lineshape of a defect");
    LineshapeOptions ls_opt;
    add_lineshape_options(ls, ls_opt);
    add_common(ls);

    // partial
    auto* pa = app.add_subcommand("partial", "Lineshapes restricted to modes below energy cutoffs");
    LineshapeOptions pa_opt;
    add_lineshape_options(pa, pa_opt);
    pa->add_option("--cutoffs", pa_opt.cutoffs, "Phonon energy cutoffs (meV)")->required()->delimiter(',')
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    add_common(pa);

    // fit-ifc
    auto* fi = app.add_subcommand("fit-ifc", "Fit second-order force constants to displacement/force data");
    std::string fi_structure, fi_snapshots;
    double fi_cutoff = 4.2, fi_ridge = 1e-8, fi_tol = 0.0, fi_target = 0.0;
    bool fi_rfe = false;
    fi->add_option("--structure", fi_structure, "Reference structure file")->required();
    fi->add_option("--snapshots", fi_snapshots, "Snapshot file")->required();
    fi->add_option("--cutoff", fi_cutoff, "Pair cutoff (A)");
    fi->add_option("--ridge", fi_ridge, "Scale-relative ridge weight");
    fi->add_flag("--rfe", fi_rfe, "Recursive feature elimination over pair blocks");
    fi->add_option("--rfe-tolerance", fi_tol, "Allowed validation RMSE rise (meV/A)");
    fi->add_option("--rfe-target", fi_target, "Minimum fraction of pair blocks kept");
    add_common(fi);

    // arrhenius
    auto* ar = app.add_subcommand("arrhenius", "Fit a single activation energy to a temperature series");
    std::string ar_data;
    std::optional<double> ar_c0, ar_e0;
    ar->add_option("--data", ar_data, "CSV with header T_K,value[,sigma]")->required();
    ar->add_option("--c0", ar_c0, "Initial prefactor guess");
    ar->add_option("--ea0", ar_e0, "Initial activation energy guess (meV)");
    add_common(ar);

    // unfold
    auto* un = app.add_subcommand("unfold", "Unfold supercell phonons onto primitive wavevectors");
    std::string un_fc, un_super, un_prim, un_path;
    double un_tol = 0.25;
    bool un_no_asr = false;
    un->add_option("--fc", un_fc, "Supercell force constants file")->required();
    un->add_option("--supercell", un_super, "Supercell structure file")->required();
    un->add_option("--primitive", un_prim, "Primitive lattice file (three rows)")->required();
    un->add_option("--path", un_path, "Primitive reduced wavevectors, one per line")->required();
    un->add_option("--site-tolerance", un_tol, "Distance for mapping atoms onto primitive sites (A)");
    un->add_flag("--no-asr", un_no_asr, "Use the force constants without the acoustic sum rule");
    add_common(un);

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        args = expand_config(args, app);
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        try {
            app.parse(reversed);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            throw CliError("UsageError", e.what());
        }

        const fs::path out_dir(output_dir);
        fs::create_directories(out_dir);

        if (*ph) {
            const auto structure = io::read_structure(ph_structure);
            auto fc = io::read_force_constants(ph_fc);
            if (!ph_no_asr) fc = enforce_asr(fc);
            std::vector<Vec3> qs;
            if (!ph_qfile.empty()) qs = io::parse_qpoints(io::TextSource::from_file(ph_qfile));
            for (const auto& text : ph_q) {
                const auto v = io::TextSource("--q", text).numbers(1, 3);
                qs.emplace_back(v[0], v[1], v[2]);
            }
            if (qs.empty()) {
                std::cerr << "note: no wavevectors given, using Gamma\n";
                qs.emplace_back(Vec3::Zero());
            }
            std::vector<PhononBasis> bases(qs.size());
            parallel_for(qs.size(), [&](std::size_t k) { bases[k] = phonons_at(fc, structure, qs[k]); });
            std::string csv = "qx,qy,qz,mode_index,energy_meV\n";
            std::string eig = "qx,qy,qz,mode_index,atom,component,re,im\n";
            for (const auto& b : bases) {
                const std::string q = io::format12(b.qpoint[0]) + "," + io::format12(b.qpoint[1]) + "," +
                                      io::format12(b.qpoint[2]) + ",";
                for (std::size_t m = 0; m < b.size(); ++m) {
                    csv += q + std::to_string(m) + "," + io::format12(b.energies[m]) + "\n";
                    if (!ph_eig) continue;
                    for (Eigen::Index r = 0; r < b.eigenvectors.rows(); ++r) {
                        const auto v = b.eigenvectors(r, static_cast<Eigen::Index>(m));
                        eig += q + std::to_string(m) + "," + std::to_string(r / 3) + "," + "xyz"[r % 3] + "," +
                               io::format12(v.real()) + "," + io::format12(v.imag()) + "\n";
                    }
                }
            }
            write_file(out_dir / "phonons.csv", csv);
            if (ph_eig) write_file(out_dir / "eigenvectors.csv", eig);
        } else if (*ls) {
            const auto coupling = coupling_from_files(ls_opt);
            const auto config = ls_opt.config();
            const auto spectrum = lineshape(coupling, config);
            write_file(out_dir / "lineshape.csv", spectrum_csv(spectrum));
            write_file(out_dir / "modes.csv", modes_csv(coupling));
            const auto density = spectral_density(coupling, config);
            std::string dcsv = "energy_meV,density\n";
            for (std::size_t i = 0; i < density.size(); ++i)
                dcsv += io::format12(density.energies()[i]) + "," + io::format12(density.intensities()[i]) + "\n";
            write_file(out_dir / "spectral_density.csv", dcsv);
            write_file(out_dir / "summary.json",
                       lineshape_summary(coupling, spectrum, config, ls_opt.peak_threshold).dump(2) + "\n");
        } else if (*pa) {
            const auto coupling = coupling_from_files(pa_opt);
            const auto config = pa_opt.config();
            std::vector<Spectrum> spectra(pa_opt.cutoffs.size());
            parallel_for(spectra.size(),
                         [&](std::size_t k) { spectra[k] = partial_lineshape(coupling, config, pa_opt.cutoffs[k]); });
            for (std::size_t k = 0; k < spectra.size(); ++k)
                write_file(out_dir / ("lineshape_cutoff" + cutoff_label(pa_opt.cutoffs[k]) + ".csv"),
                           spectrum_csv(spectra[k]));
        } else if (*fi) {
            const auto structure = io::read_structure(fi_structure);
            const auto snapshots = io::read_snapshots(fi_snapshots, structure.size());
            const auto features = build_features(structure, fi_cutoff);
            FitReport rep;
            if (fi_rfe) {
                RfeOptions opt;
                opt.ridge = fi_ridge;
                opt.tolerance = fi_tol;
                opt.target_fraction = fi_target;
                rep = rfe(snapshots, features, opt);
            } else {
                rep = fit(snapshots, features, fi_ridge);
            }
            for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
            write_file(out_dir / "fc.txt", io::write_force_constants(rep.fc));
            json j;
            j["rmse_validation_meV_per_A"] = number(rep.rmse_validation);
            j["rmse_training_meV_per_A"] = number(rep.rmse_training);
            j["n_parameters_initial"] = rep.n_parameters_initial;
            j["n_parameters_final"] = rep.n_parameters_final;
            j["cutoff_A"] = number(rep.cutoff);
            j["rank"] = rep.rank;
            j["n_snapshots"] = snapshots.size();
            j["n_validation"] = rep.n_validation;
            j["rfe"] = fi_rfe;
            write_file(out_dir / "fit_report.json", j.dump(2) + "\n");
        } else if (*ar) {
            const auto series = io::parse_thermal_csv(io::TextSource::from_file(ar_data));
            std::optional<ArrheniusGuess> guess;
            if (ar_c0 || ar_e0) guess = ArrheniusGuess{ar_c0.value_or(9.0), ar_e0.value_or(39.0)};
            const auto f = fit_arrhenius(series, guess);
            json j;
            j["amplitude"] = number(f.amplitude);
            j["c"] = number(f.c);
            j["e_a_meV"] = number(f.e_a);
            j["sigma_amplitude"] = number(f.sigma_amplitude());
            j["sigma_c"] = number(f.sigma_c());
            j["sigma_e_a_meV"] = number(f.sigma_e_a());
            j["rms_residual"] = number(f.rms_residual);
            write_file(out_dir / "arrhenius.json", j.dump(2) + "\n");
        } else if (*un) {
            auto fc = io::read_force_constants(un_fc);
            if (!un_no_asr) fc = enforce_asr(fc);
            const auto supercell = io::read_structure(un_super);
            const Mat3 primitive = io::parse_lattice(io::TextSource::from_file(un_prim));
            const auto path = io::parse_qpoints(io::TextSource::from_file(un_path));
            std::vector<PhononBasis> bases(path.size());
            // Validate commensurability before diagonalizing anything.
            supercell_matrix(supercell.lattice(), primitive);
            parallel_for(path.size(), [&](std::size_t k) {
                bases[k] = phonons_at(fc, supercell, primitive_to_supercell_q(path[k], supercell.lattice(), primitive));
            });
            const auto weights = unfold(bases, supercell, primitive, path, un_tol);
            std::string csv = "path_index,qx,qy,qz,energy_meV,weight\n";
            for (std::size_t k = 0; k < weights.path.size(); ++k) {
                const auto& p = weights.path[k];
                for (const auto& [energy, w] : p.modes)
                    csv += std::to_string(k) + "," + io::format12(p.qpoint[0]) + "," + io::format12(p.qpoint[1]) +
                           "," + io::format12(p.qpoint[2]) + "," + io::format12(energy) + "," + io::format12(w) +
                           "\n";
            }
            write_file(out_dir / "unfold.csv", csv);
        }
    } catch (const Error& e) {
        return report(e);
    } catch (const std::exception& e) {
        return report(CliError("IoError", e.what()));
    }
    return 0;
}
