#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "biphoton/dispersion.hpp"
#include "biphoton/multilayer.hpp"
#include "biphoton/yaml_support.hpp"

namespace biphoton {

/// Parses a stack document referencing materials by name:
///
///     version: 1
///     stacks:
///       gap400_silica4um_sapphire:
///         superstrate: vacuum
///         layers:
///           - {material: gap, thickness_nm: 400}
///         nonlinear_layer: 0
///         substrate_chain:
///           - {material: fused_silica, thickness_nm: 4000}
///           - {material: sapphire_o}                # last entry: semi-infinite
inline std::map<std::string, LayerStack> parse_stacks(const std::string& text,
                                                      const std::string& source,
                                                      const MaterialLibrary& materials)
{
    const YAML::Node root = detail::parse_yaml(text, source);
    if (!root.IsMap()) {
        throw ConfigError(source + ": top level must be a mapping");
    }
    const detail::YamlMap entries = detail::YamlMap(root, source, "").map("stacks");

    auto material = [&materials](const detail::YamlMap& m, const std::string& key) {
        try {
            return materials.at(m.get<std::string>(key));
        } catch (const ConfigError& e) {
            m.fail(key, e.what());
        }
    };
    auto layer_list = [&](const detail::YamlMap& m, const std::string& key) {
        std::vector<detail::YamlMap> out;
        const YAML::Node seq = m.raw(key);
        if (!seq.IsSequence()) {
            m.fail(key, "expected a list of layers");
        }
        for (std::size_t i = 0; i < seq.size(); ++i) {
            out.emplace_back(seq[i], m.source(), m.key_path(key) + "[" + std::to_string(i) + "]");
        }
        return out;
    };

    std::map<std::string, LayerStack> stacks;
    for (const auto& item : entries.node()) {
        const auto name = item.first.as<std::string>();
        const detail::YamlMap entry(item.second, source, entries.key_path(name));

        std::vector<Layer> layers;
        for (const auto& l : layer_list(entry, "layers")) {
            layers.push_back({material(l, "material"), l.get<double>("thickness_nm")});
        }
        auto chain_entries = layer_list(entry, "substrate_chain");
        if (chain_entries.empty()) {
            entry.fail("substrate_chain", "must end with a semi-infinite substrate");
        }
        std::vector<Layer> chain;
        for (std::size_t i = 0; i + 1 < chain_entries.size(); ++i) {
            chain.push_back({material(chain_entries[i], "material"),
                             chain_entries[i].get<double>("thickness_nm")});
        }
        const auto& last = chain_entries.back();
        if (last.has("thickness_nm")) {
            last.fail("thickness_nm", "the final substrate_chain entry is semi-infinite");
        }
        try {
            stacks.emplace(name, LayerStack(material(entry, "superstrate"), std::move(layers),
                                            std::move(chain), material(last, "material"),
                                            entry.get_or<std::size_t>("nonlinear_layer", 0)));
        } catch (const ConfigError& e) {
            entry.fail("layers", e.what());
        }
    }
    return stacks;
}

inline std::map<std::string, LayerStack> load_stacks(const std::filesystem::path& path,
                                                     const MaterialLibrary& materials)
{
    return parse_stacks(detail::read_text_file(path), path.string(), materials);
}

} // namespace biphoton
