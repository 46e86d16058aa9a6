#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "biphoton/presets.hpp"

namespace testing_support {

inline const biphoton::PresetLibrary& library()
{
    static const biphoton::PresetLibrary lib = biphoton::PresetLibrary::load();
    return lib;
}

inline const biphoton::MaterialModel& material(const std::string& name)
{
    return library().materials.at(name);
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("biphoton_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

} // namespace testing_support
