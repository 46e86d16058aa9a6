#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "biphoton/coincidence.hpp"
#include "biphoton/detector.hpp"
#include "biphoton/error.hpp"
#include "biphoton/fiber.hpp"
#include "biphoton/hash.hpp"
#include "biphoton/multilayer.hpp"
#include "biphoton/reconstruct.hpp"
#include "biphoton/spdc_model.hpp"
#include "biphoton/tagsim.hpp"

namespace biphoton {

using json = nlohmann::ordered_json;

/// JSON has no infinities or NaN; those become null.
inline json finite_or_null(double v)
{
    return std::isfinite(v) ? json(v) : json(nullptr);
}

inline json to_json(const WavelengthRange& r)
{
    return json::array({r.min_nm, r.max_nm});
}

inline json to_json(const MaterialModel& m)
{
    return {{"name", m.name()},
            {"form", std::string(to_string(m.form()))},
            {"coefficients", m.coefficients()},
            {"valid_range_nm", to_json(m.valid_range())}};
}

inline json to_json(const LayerStack& s)
{
    auto layers = [](const std::vector<Layer>& v) {
        json out = json::array();
        for (const auto& l : v) out.push_back({{"material", to_json(l.material)}, {"thickness_nm", l.thickness_nm}});
        return out;
    };
    return {{"superstrate", to_json(s.superstrate())},
            {"layers", layers(s.layers())},
            {"nonlinear_layer", s.nonlinear_layer_index()},
            {"substrate_chain", layers(s.substrate_chain())},
            {"substrate", to_json(s.substrate())}};
}

inline json to_json(const SpdcConfig& c)
{
    return {{"stack", to_json(c.stack)},
            {"pump_wavelength_nm", c.pump_wavelength_nm},
            {"pump_power_mw", c.pump_power_mw},
            {"d_eff_pm_per_v", c.d_eff_pm_per_v},
            {"spectral_window_nm", to_json(c.spectral_window)},
            {"grid_points", c.grid_points},
            {"enhancement_side", std::string(to_string(c.enhancement))},
            {"pump_incidence", c.pump_incidence == Incidence::substrate ? "substrate" : "superstrate"}};
}

inline json to_json(const FluorescenceConfig& f)
{
    return {{"shape", f.shape == FluorescenceShape::gaussian ? "gaussian" : "flat"},
            {"center_nm", f.center_nm},
            {"width_nm", f.width_nm},
            {"rate_scale", f.rate_scale}};
}

inline json to_json(const DetectorModel& d)
{
    json curve = json::array();
    for (const auto& p : d.efficiency_curve) curve.push_back({p.wavelength_nm, p.efficiency});
    return {{"name", d.name}, {"efficiency", curve}, {"jitter_sigma_ps", d.jitter_sigma_ps},
            {"dark_rate_hz", d.dark_rate_hz}};
}

inline json to_json(const FiberModel& m)
{
    json att = json::array();
    for (const auto& p : m.attenuation) att.push_back({p.wavelength_nm, p.db_per_km});
    return {{"length_m", m.length_m}, {"zdw_nm", m.zdw_nm}, {"slope_s0_ps_per_nm2_km", m.slope_s0},
            {"attenuation_db_per_km", att}};
}

/// Calibration document:
///
///     {"model": {...FiberModel...}, "time_offset_ps": x, "valid_window_nm": [lo, hi],
///      "length_scale": s, "residual_rms_ps": r, "residuals_ps": [...]}
inline json to_json(const CalibrationCurve& c)
{
    return {{"model", to_json(c.model())},
            {"time_offset_ps", c.time_offset_ps()},
            {"valid_window_nm", to_json(c.valid_window())}};
}

inline json to_json(const CalibrationFit& f)
{
    json out = to_json(f.curve);
    out["length_scale"] = f.length_scale;
    out["residual_rms_ps"] = f.residual_rms_ps;
    out["residuals_ps"] = f.residuals_ps;
    return out;
}

inline CalibrationCurve calibration_from_json(const json& doc, const std::string& source = "calibration")
{
    try {
        FiberModel m;
        const auto& jm = doc.at("model");
        m.length_m = jm.at("length_m").get<double>();
        m.zdw_nm = jm.at("zdw_nm").get<double>();
        m.slope_s0 = jm.at("slope_s0_ps_per_nm2_km").get<double>();
        if (jm.contains("attenuation_db_per_km")) {
            for (const auto& row : jm.at("attenuation_db_per_km")) {
                m.attenuation.push_back({row.at(0).get<double>(), row.at(1).get<double>()});
            }
        }
        const auto& w = doc.at("valid_window_nm");
        return {m, doc.at("time_offset_ps").get<double>(), {w.at(0).get<double>(), w.at(1).get<double>()}};
    } catch (const json::exception& e) {
        throw ConfigError(source + ": malformed calibration document: " + e.what());
    }
}

inline json to_json(const CarResult& r)
{
    return {{"car", finite_or_null(r.car)},
            {"car_infinite", r.car_infinite},
            {"car_undefined", r.car_undefined},
            {"pair_rate_hz", r.pair_rate_hz},
            {"pair_rate_sigma_hz", r.pair_rate_sigma_hz},
            {"accidentals_per_bin", r.accidentals_per_bin},
            {"peak_counts", r.peak_counts},
            {"peak_max", r.peak_max},
            {"peak_bins", r.peak_bins},
            {"background_bins", r.background_bins}};
}

inline json histogram_metadata(const CoincidenceHistogram& h)
{
    return {{"bin_width_ps", h.bin_width_ps},
            {"window_ps", h.window_ps},
            {"bins", h.size()},
            {"total_counts", h.total()},
            {"acquisition_time_s", h.acquisition_time_s},
            {"channel_rates_hz", {h.channel_rates_hz[0], h.channel_rates_hz[1]}},
            {"ch1_shift_ps", h.ch1_shift_ps}};
}

/// SHA-1 of the compact serialization; stable because key order is insertion order.
inline std::string config_hash(const json& config)
{
    return sha1_hex(config.dump());
}

} // namespace biphoton
