#pragma once

#include <filesystem>
#include <string>

#include "biphoton/dispersion.hpp"
#include "biphoton/yaml_support.hpp"

namespace biphoton {

/// Parses a materials document:
///
///     version: 1
///     materials:
///       fused_silica:
///         form: sellmeier_lambda_squared
///         coefficients: [B1, C1, B2, C2, B3, C3]   # C in um^2
///         valid_range_nm: [210, 6700]
///         source: free text (optional)
///
/// Errors carry "source:line: key 'materials.<name>.<key>'".
inline MaterialLibrary parse_materials(const std::string& text, const std::string& source)
{
    const YAML::Node root = detail::parse_yaml(text, source);
    if (!root.IsMap()) {
        throw ConfigError(source + ": top level must be a mapping");
    }
    const detail::YamlMap top(root, source, "");
    const detail::YamlMap entries = top.map("materials");

    MaterialLibrary library;
    for (const auto& item : entries.node()) {
        const auto name = item.first.as<std::string>();
        const detail::YamlMap entry(item.second, source, entries.key_path(name));
        const auto form_tag = entry.get<std::string>("form");
        DispersionForm form{};
        try {
            form = parse_dispersion_form(form_tag);
        } catch (const ConfigError& e) {
            entry.fail("form", e.what());
        }
        auto coefficients = entry.numbers("coefficients");
        auto [lo, hi] = entry.pair("valid_range_nm");
        try {
            library.add(MaterialModel(name, form, std::move(coefficients), {lo, hi}));
        } catch (const ConfigError& e) {
            entry.fail("coefficients", e.what());
        }
    }
    return library;
}

inline MaterialLibrary load_materials(const std::filesystem::path& path)
{
    return parse_materials(detail::read_text_file(path), path.string());
}

} // namespace biphoton
