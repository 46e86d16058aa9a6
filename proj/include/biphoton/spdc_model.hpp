#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "biphoton/dispersion.hpp"
#include "biphoton/error.hpp"
#include "biphoton/multilayer.hpp"
#include "biphoton/spectrum.hpp"

namespace biphoton {

/// Which photons receive the intra-film intensity buildup factor.
enum class EnhancementSide { none, detection, pump, both };

inline std::string_view to_string(EnhancementSide side)
{
    switch (side) {
    case EnhancementSide::none: return "none";
    case EnhancementSide::detection: return "detection";
    case EnhancementSide::pump: return "pump";
    case EnhancementSide::both: return "both";
    }
    return "unknown";
}

inline EnhancementSide parse_enhancement_side(std::string_view tag)
{
    if (tag == "none") return EnhancementSide::none;
    if (tag == "detection") return EnhancementSide::detection;
    if (tag == "pump") return EnhancementSide::pump;
    if (tag == "both") return EnhancementSide::both;
    throw ConfigError("enhancement_side must be one of none, detection, pump, both (got '"
                      + std::string(tag) + "')");
}

struct SpdcConfig {
    LayerStack stack;
    double pump_wavelength_nm = 515.0;
    double pump_power_mw = 1.0;
    double d_eff_pm_per_v = 1.0;
    WavelengthRange spectral_window{900.0, 1500.0};
    std::size_t grid_points = 2048;
    /// Signal and idler see F incident from the superstrate (collection side).
    EnhancementSide enhancement = EnhancementSide::detection;
    /// Side the pump enters from when the pump factor is enabled.
    Incidence pump_incidence = Incidence::substrate;

    void validate() const
    {
        if (!(pump_wavelength_nm > 0.0)) throw ConfigError("pump wavelength must be positive");
        if (!(pump_power_mw > 0.0)) throw ConfigError("pump power must be positive");
        if (!(spectral_window.min_nm < spectral_window.max_nm)) {
            throw ConfigError("spectral window must satisfy min < max");
        }
        if (!(spectral_window.min_nm > pump_wavelength_nm)) {
            throw ConfigError("spectral window must lie above the pump wavelength");
        }
        if (grid_points < 2) throw ConfigError("grid_points must be >= 2");
    }
};

struct SpdcSpectrum {
    SampledSpectrum spectrum;
    /// Window actually sampled, after clipping so that every idler stays in range.
    WavelengthRange window;
    std::vector<std::string> warnings;
};

/// Per-frequency vacuum-mode weight of a signal/idler pair, (l_s l_i)^-3 with l in um.
/// Isolated so the mode-density model can be swapped in one place.
inline double vacuum_mode_weight(double signal_nm, double idler_nm)
{
    const double ls = signal_nm * 1e-3;
    const double li = idler_nm * 1e-3;
    return 1.0 / (ls * ls * ls * li * li * li);
}

/// d(omega)/d(lambda) up to a constant: converts a per-frequency density to per-nm.
inline double frequency_to_wavelength_jacobian(double lambda_nm)
{
    const double l = lambda_nm * 1e-3;
    return 1.0 / (l * l);
}

inline double sinc(double x)
{
    if (std::abs(x) < 1e-4) {
        return 1.0 - x * x / 6.0;
    }
    return std::sin(x) / x;
}

/// Inverse of the conjugation map restricted to a window: the largest interval [lo', hi']
/// containing [lo, hi] with conj([lo', hi']) = [lo', hi'].
inline WavelengthRange conjugate_closure(WavelengthRange window, double pump_nm)
{
    return {std::min(window.min_nm, conjugate_wavelength(pump_nm, window.max_nm)),
            std::max(window.max_nm, conjugate_wavelength(pump_nm, window.min_nm))};
}

/// Evaluates the relative pair density at one signal wavelength. `f_pump` is the pump
/// factor, constant across the spectrum.
inline double spdc_density_at(const SpdcConfig& cfg, double signal_nm, double f_pump)
{
    const double pump = cfg.pump_wavelength_nm;
    const double idler = conjugate_wavelength(pump, signal_nm);
    const Layer& film = cfg.stack.nonlinear_layer();
    const double L = film.thickness_nm;
    const double dk = phase_mismatch(film.material, pump, signal_nm);
    const double s = sinc(0.5 * dk * L);

    double buildup = f_pump;
    if (cfg.enhancement == EnhancementSide::detection || cfg.enhancement == EnhancementSide::both) {
        const auto index = cfg.stack.nonlinear_layer_index();
        buildup *= internal_intensity_factor(cfg.stack, index, signal_nm, Incidence::superstrate)
                   * internal_intensity_factor(cfg.stack, index, idler, Incidence::superstrate);
    }
    return cfg.pump_power_mw * cfg.d_eff_pm_per_v * cfg.d_eff_pm_per_v * L * L * s * s
           * vacuum_mode_weight(signal_nm, idler) * frequency_to_wavelength_jacobian(signal_nm)
           * buildup;
}

inline double pump_buildup(const SpdcConfig& cfg)
{
    if (cfg.enhancement == EnhancementSide::pump || cfg.enhancement == EnhancementSide::both) {
        return internal_intensity_factor(cfg.stack, cfg.stack.nonlinear_layer_index(),
                                         cfg.pump_wavelength_nm, cfg.pump_incidence);
    }
    return 1.0;
}

/// Relative biphoton density per unit signal wavelength:
///
///   S(l_s) ~ P d^2 L^2 sinc^2(dk L / 2) (l_s l_i)^-3 F(l_s) F(l_i) F_p(l_p) / l_s^2
///
/// The trailing 1/l_s^2 converts the symmetric per-frequency weight to per-nm, so that
/// S(l_s) dl_s = S(l_i) dl_i. Units are relative; no absolute brightness is implied.
inline SpdcSpectrum spdc_spectral_density(const SpdcConfig& cfg)
{
    cfg.validate();
    const double pump = cfg.pump_wavelength_nm;
    const WavelengthRange allowed = cfg.stack.common_range();
    const WavelengthRange& requested = cfg.spectral_window;
    if (!allowed.contains(requested.min_nm) || !allowed.contains(requested.max_nm)) {
        std::ostringstream msg;
        msg << "spectral window [" << requested.min_nm << ", " << requested.max_nm
            << "] nm exceeds the stack's material range [" << allowed.min_nm << ", "
            << allowed.max_nm << "] nm";
        throw ConfigError(msg.str());
    }
    if (!cfg.stack.nonlinear_layer().material.valid_range().contains(pump)) {
        throw ConfigError("pump wavelength is outside the nonlinear material's valid range");
    }
    if ((cfg.enhancement == EnhancementSide::pump || cfg.enhancement == EnhancementSide::both)
        && !allowed.contains(pump)) {
        throw ConfigError("pump enhancement requested but the pump wavelength is outside the "
                          "stack's material range");
    }

    // The idler of l_s is conj(l_s), decreasing in l_s; keep it inside the allowed range.
    SpdcSpectrum out;
    WavelengthRange window = requested;
    if (conjugate_wavelength(pump, window.min_nm) > allowed.max_nm) {
        window.min_nm = conjugate_wavelength(pump, allowed.max_nm);
    }
    if (allowed.min_nm > pump && window.max_nm > pump
        && conjugate_wavelength(pump, window.max_nm) < allowed.min_nm) {
        window.max_nm = conjugate_wavelength(pump, allowed.min_nm);
    }
    if (!(window.min_nm < window.max_nm)) {
        throw ConfigError("no signal wavelength in the window has an idler inside the material range");
    }
    if (window != requested) {
        std::ostringstream msg;
        msg << "spectral window clipped to [" << window.min_nm << ", " << window.max_nm
            << "] nm so that conjugate wavelengths stay inside [" << allowed.min_nm << ", "
            << allowed.max_nm << "] nm";
        out.warnings.push_back(msg.str());
    }
    out.window = window;

    const double f_pump = pump_buildup(cfg);
    auto grid = linear_grid(window.min_nm, window.max_nm, cfg.grid_points);
    std::vector<double> density(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        density[i] = spdc_density_at(cfg, grid[i], f_pump);
    }
    out.spectrum = SampledSpectrum(std::move(grid), std::move(density));
    return out;
}

/// Spectrum seen by one detector when it receives either photon of each pair: the
/// signal density plus the idler density mapped through the conjugation.
inline SampledSpectrum single_photon_marginal(const SampledSpectrum& signal, double pump_nm)
{
    std::vector<double> grid = signal.wavelengths();
    for (double ls : signal.wavelengths()) {
        grid.push_back(conjugate_wavelength(pump_nm, ls));
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-9 * b; }),
               grid.end());
    std::vector<double> density(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double l = grid[i];
        const double partner = conjugate_wavelength(pump_nm, l);
        density[i] = signal.at(l) + signal.at(partner) * (partner / l) * (partner / l);
    }
    return {std::move(grid), std::move(density)};
}

enum class FluorescenceShape { gaussian, flat };

struct FluorescenceConfig {
    FluorescenceShape shape = FluorescenceShape::gaussian;
    double center_nm = 800.0;
    /// Standard deviation (gaussian) or full band width (flat; the density itself is 1 per nm).
    double width_nm = 50.0;
    /// Emission density per nm of spectrum, per mW of pump, per nm of film thickness.
    double rate_scale = 0.0;

    void validate() const
    {
        if (shape == FluorescenceShape::gaussian && !(width_nm > 0.0)) {
            throw ConfigError("gaussian fluorescence width must be positive");
        }
        if (!(rate_scale >= 0.0)) throw ConfigError("fluorescence rate_scale must be >= 0");
    }
};

inline FluorescenceShape parse_fluorescence_shape(std::string_view tag)
{
    if (tag == "gaussian") return FluorescenceShape::gaussian;
    if (tag == "flat") return FluorescenceShape::flat;
    throw ConfigError("fluorescence shape must be gaussian or flat (got '" + std::string(tag) + "')");
}

/// Incoherent background density: rate_scale * L * P * shape(l), shape normalized to unit
/// area over the real line (gaussian) or equal to 1 per nm (flat).
inline SampledSpectrum fluorescence_density(const FluorescenceConfig& fcfg, double thickness_nm,
                                            double pump_power_mw, const std::vector<double>& grid)
{
    fcfg.validate();
    if (!(thickness_nm > 0.0) || !(pump_power_mw > 0.0)) {
        throw ConfigError("fluorescence needs positive thickness and pump power");
    }
    const double scale = fcfg.rate_scale * thickness_nm * pump_power_mw;
    std::vector<double> density(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double shape = 1.0;
        if (fcfg.shape == FluorescenceShape::gaussian) {
            const double z = (grid[i] - fcfg.center_nm) / fcfg.width_nm;
            shape = std::exp(-0.5 * z * z) / (fcfg.width_nm * std::sqrt(2.0 * std::numbers::pi));
        }
        density[i] = scale * shape;
    }
    return {grid, std::move(density)};
}

} // namespace biphoton
