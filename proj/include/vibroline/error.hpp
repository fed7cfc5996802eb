#pragma once

#include <stdexcept>
#include <string>

namespace vibroline {

/// Base error for every physics/validation failure in the library. Carries the
/// owning module and a stable error name so the command-line front end can
/// map it onto an exit code.
class Error : public std::runtime_error {
public:
    Error(std::string module, std::string name, const std::string& message)
        : std::runtime_error(message), module_(std::move(module)), name_(std::move(name)) {}

    const std::string& module() const noexcept { return module_; }
    const std::string& name() const noexcept { return name_; }

private:
    std::string module_;
    std::string name_;
};

namespace detail {
template <const char* Module>
struct ModuleError : Error {
    ModuleError(std::string name, const std::string& message) : Error(Module, std::move(name), message) {}
};
inline constexpr char model_module[] = "model";
inline constexpr char phonons_module[] = "phonons";
inline constexpr char ifcfit_module[] = "ifcfit";
inline constexpr char vibronic_module[] = "vibronic";
inline constexpr char thermal_module[] = "thermal";
inline constexpr char cli_module[] = "cli";
}  // namespace detail

using ModelError = detail::ModuleError<detail::model_module>;
using PhononError = detail::ModuleError<detail::phonons_module>;
using FitError = detail::ModuleError<detail::ifcfit_module>;
using VibronicError = detail::ModuleError<detail::vibronic_module>;
using ThermalError = detail::ModuleError<detail::thermal_module>;
using CliError = detail::ModuleError<detail::cli_module>;

}  // namespace vibroline
