#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "biphoton/detector.hpp"
#include "biphoton/error.hpp"
#include "biphoton/fiber.hpp"
#include "biphoton/materials_io.hpp"
#include "biphoton/spdc_model.hpp"
#include "biphoton/stack_io.hpp"
#include "biphoton/yaml_support.hpp"

#ifndef BIPHOTON_DEFAULT_PRESET_DIR
#define BIPHOTON_DEFAULT_PRESET_DIR "presets"
#endif

namespace biphoton {

/// $BIPHOTON_PRESET_PATH if set and non-empty, else the build-time preset directory.
inline std::filesystem::path preset_directory()
{
    if (const char* env = std::getenv("BIPHOTON_PRESET_PATH"); env != nullptr && *env != '\0') {
        return env;
    }
    return BIPHOTON_DEFAULT_PRESET_DIR;
}

/// A bare name resolves to <dir>/<name>.yaml; anything that names an existing file is used as is.
inline std::filesystem::path resolve_preset(const std::string& name_or_path,
                                            const std::filesystem::path& dir = preset_directory())
{
    const std::filesystem::path direct(name_or_path);
    if (name_or_path.find('/') != std::string::npos || direct.extension() == ".yaml") {
        if (!std::filesystem::exists(direct)) throw ConfigError("preset file '" + name_or_path + "' not found");
        return direct;
    }
    auto candidate = dir / (name_or_path + ".yaml");
    if (!std::filesystem::exists(candidate)) {
        throw ConfigError("preset '" + name_or_path + "' not found in " + dir.string());
    }
    return candidate;
}

namespace detail {

inline YamlMap load_kind(const std::filesystem::path& path, const std::string& kind)
{
    const std::string source = path.string();
    const YAML::Node root = parse_yaml(read_text_file(path), source);
    if (!root.IsMap()) throw ConfigError(source + ": top level must be a mapping");
    YamlMap top(root, source, "");
    if (top.get<std::string>("kind") != kind) top.fail("kind", "expected '" + kind + "'");
    return top;
}

template <typename Point>
std::vector<Point> table(const YamlMap& m, const std::string& key)
{
    std::vector<Point> out;
    const YAML::Node seq = m.raw(key);
    if (!seq.IsSequence()) m.fail(key, "expected a list of [wavelength_nm, value] pairs");
    for (const auto& row : seq) {
        if (!row.IsSequence() || row.size() != 2) m.fail(key, "expected [wavelength_nm, value] pairs");
        try {
            out.push_back({row[0].as<double>(), row[1].as<double>()});
        } catch (const YAML::Exception&) {
            m.fail(key, "malformed number");
        }
    }
    return out;
}

} // namespace detail

struct SourcePreset {
    std::string name;
    SpdcConfig spdc;
    /// Emitted pairs per second over the spectral window.
    double pair_rate_hz = 0.0;
    FluorescenceConfig fluorescence;
};

struct FiberPreset {
    std::string name;
    CalibrationCurve calibration;
    std::uint8_t channel = 1;
};

/// Materials and stacks read from materials.yaml / stacks.yaml next to the presets.
struct PresetLibrary {
    MaterialLibrary materials;
    std::map<std::string, LayerStack> stacks;

    static PresetLibrary load(const std::filesystem::path& dir = preset_directory())
    {
        PresetLibrary lib;
        lib.materials = load_materials(dir / "materials.yaml");
        lib.stacks = load_stacks(dir / "stacks.yaml", lib.materials);
        return lib;
    }

    [[nodiscard]] const LayerStack& stack(const std::string& name) const
    {
        auto it = stacks.find(name);
        if (it == stacks.end()) {
            std::string known;
            for (const auto& [k, v] : stacks) known += (known.empty() ? "" : ", ") + k;
            throw ConfigError("unknown stack '" + name + "' (known: " + known + ")");
        }
        return it->second;
    }
};

inline SourcePreset load_source_preset(const std::string& name_or_path,
                                       const std::filesystem::path& dir = preset_directory())
{
    const auto path = resolve_preset(name_or_path, dir);
    const auto top = detail::load_kind(path, "source");
    const auto lib = PresetLibrary::load(path.parent_path());

    const auto stack_name = top.get<std::string>("stack");
    auto stack = [&]() -> const LayerStack& {
        try {
            return lib.stack(stack_name);
        } catch (const ConfigError& e) {
            top.fail("stack", e.what());
        }
    };
    SourcePreset p{path.stem().string(), SpdcConfig{stack()}, 0.0, {}};
    p.spdc.pump_wavelength_nm = top.get<double>("pump_wavelength_nm");
    p.spdc.pump_power_mw = top.get_or<double>("pump_power_mw", 1.0);
    p.spdc.d_eff_pm_per_v = top.get_or<double>("d_eff_pm_per_v", 1.0);
    auto [lo, hi] = top.pair("spectral_window_nm");
    p.spdc.spectral_window = {lo, hi};
    p.spdc.grid_points = top.get_or<std::size_t>("grid_points", 2048);
    try {
        p.spdc.enhancement = parse_enhancement_side(top.get_or<std::string>("enhancement_side", "detection"));
    } catch (const ConfigError& e) {
        top.fail("enhancement_side", e.what());
    }
    const auto incidence = top.get_or<std::string>("pump_incidence", "substrate");
    if (incidence != "substrate" && incidence != "superstrate") {
        top.fail("pump_incidence", "must be substrate or superstrate");
    }
    p.spdc.pump_incidence = incidence == "substrate" ? Incidence::substrate : Incidence::superstrate;
    p.pair_rate_hz = top.get_or<double>("pair_rate_hz", 0.0);
    if (!(p.pair_rate_hz >= 0.0)) top.fail("pair_rate_hz", "must be >= 0");
    if (top.has("fluorescence")) {
        const auto f = top.map("fluorescence");
        try {
            p.fluorescence.shape = parse_fluorescence_shape(f.get_or<std::string>("shape", "gaussian"));
        } catch (const ConfigError& e) {
            f.fail("shape", e.what());
        }
        p.fluorescence.center_nm = f.get_or<double>("center_nm", 800.0);
        p.fluorescence.width_nm = f.get_or<double>("width_nm", 50.0);
        p.fluorescence.rate_scale = f.get_or<double>("rate_scale", 0.0);
        try {
            p.fluorescence.validate();
        } catch (const ConfigError& e) {
            f.fail("rate_scale", e.what());
        }
    }
    try {
        p.spdc.validate();
    } catch (const ConfigError& e) {
        top.fail("spectral_window_nm", e.what());
    }
    return p;
}

inline FiberPreset load_fiber_preset(const std::string& name_or_path,
                                     const std::filesystem::path& dir = preset_directory())
{
    const auto path = resolve_preset(name_or_path, dir);
    const auto top = detail::load_kind(path, "fiber");
    FiberModel model;
    model.length_m = top.get<double>("length_m");
    model.zdw_nm = top.get<double>("zdw_nm");
    model.slope_s0 = top.get<double>("slope_s0_ps_per_nm2_km");
    if (top.has("attenuation_db_per_km")) {
        model.attenuation = detail::table<AttenuationPoint>(top, "attenuation_db_per_km");
    }
    const auto [lo, hi] = top.pair("valid_window_nm");
    const auto channel = top.get_or<int>("channel", 1);
    if (channel != 0 && channel != 1) top.fail("channel", "must be 0 or 1");
    try {
        return {path.stem().string(),
                CalibrationCurve(model, top.get_or<double>("time_offset_ps", 0.0), {lo, hi}),
                static_cast<std::uint8_t>(channel)};
    } catch (const ConfigError& e) {
        top.fail("valid_window_nm", e.what());
    }
}

inline DetectorModel load_detector_preset(const std::string& name_or_path,
                                          const std::filesystem::path& dir = preset_directory())
{
    const auto path = resolve_preset(name_or_path, dir);
    const auto top = detail::load_kind(path, "detector");
    DetectorModel d;
    d.name = top.get_or<std::string>("name", path.stem().string());
    d.jitter_sigma_ps = top.get<double>("jitter_sigma_ps");
    d.dark_rate_hz = top.get_or<double>("dark_rate_hz", 0.0);
    d.efficiency_curve = detail::table<EfficiencyPoint>(top, "efficiency");
    try {
        d.validate();
    } catch (const ConfigError& e) {
        top.fail("efficiency", e.what());
    }
    return d;
}

} // namespace biphoton
