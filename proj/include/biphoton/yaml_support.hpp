#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "biphoton/error.hpp"

namespace biphoton::detail {

/// Location prefix "file:line: key 'a.b'" for configuration diagnostics.
inline std::string where(const std::string& source, const YAML::Node& node, const std::string& key)
{
    std::ostringstream out;
    out << source;
    if (node.IsDefined() && node.Mark().line >= 0) {
        out << ":" << node.Mark().line + 1;
    }
    out << ": key '" << key << "'";
    return out.str();
}

inline YAML::Node parse_yaml(const std::string& text, const std::string& source)
{
    try {
        return YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
}

inline std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Typed view on a YAML mapping that reports missing or malformed keys with line numbers.
class YamlMap {
public:
    YamlMap(YAML::Node node, std::string source, std::string path)
        : node_(std::move(node)), source_(std::move(source)), path_(std::move(path))
    {
        if (!node_.IsMap()) {
            throw ConfigError(where(source_, node_, path_) + ": expected a mapping");
        }
    }

    [[nodiscard]] bool has(const std::string& key) const
    {
        return static_cast<bool>(std::as_const(node_)[key]);
    }

    [[nodiscard]] std::string key_path(const std::string& key) const
    {
        return path_.empty() ? key : path_ + "." + key;
    }

    [[nodiscard]] YAML::Node raw(const std::string& key) const
    {
        YAML::Node child = std::as_const(node_)[key];
        if (!child) {
            throw ConfigError(where(source_, node_, key_path(key)) + ": missing required key");
        }
        return child;
    }

    template <typename T>
    [[nodiscard]] T get(const std::string& key) const
    {
        YAML::Node child = raw(key);
        try {
            return child.as<T>();
        } catch (const YAML::Exception&) {
            throw ConfigError(where(source_, child, key_path(key)) + ": malformed value");
        }
    }

    template <typename T>
    [[nodiscard]] T get_or(const std::string& key, T fallback) const
    {
        return has(key) ? get<T>(key) : fallback;
    }

    [[nodiscard]] YamlMap map(const std::string& key) const
    {
        return YamlMap(raw(key), source_, key_path(key));
    }

    [[nodiscard]] std::vector<double> numbers(const std::string& key) const
    {
        YAML::Node child = raw(key);
        if (!child.IsSequence()) {
            throw ConfigError(where(source_, child, key_path(key)) + ": expected a list of numbers");
        }
        return get<std::vector<double>>(key);
    }

    [[nodiscard]] std::pair<double, double> pair(const std::string& key) const
    {
        auto v = numbers(key);
        if (v.size() != 2) {
            throw ConfigError(where(source_, raw(key), key_path(key)) + ": expected [min, max]");
        }
        return {v[0], v[1]};
    }

    /// Re-throws a validation failure with this key's location attached.
    [[noreturn]] void fail(const std::string& key, const std::string& what) const
    {
        YAML::Node child = std::as_const(node_)[key];
        throw ConfigError(where(source_, child ? child : node_, key_path(key)) + ": " + what);
    }

    [[nodiscard]] const YAML::Node& node() const noexcept { return node_; }
    [[nodiscard]] const std::string& source() const noexcept { return source_; }
    [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
    YAML::Node node_;
    std::string source_;
    std::string path_;
};

} // namespace biphoton::detail
