#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "biphoton/error.hpp"

namespace biphoton {

/// Relative spectral density on a strictly increasing wavelength grid (nm).
class SampledSpectrum {
public:
    SampledSpectrum() = default;
    SampledSpectrum(std::vector<double> wavelengths_nm, std::vector<double> density)
        : wavelengths_(std::move(wavelengths_nm)), density_(std::move(density))
    {
        if (wavelengths_.size() != density_.size()) {
            throw DomainError("spectrum grid and density differ in length");
        }
        for (std::size_t i = 0; i < wavelengths_.size(); ++i) {
            if (!std::isfinite(wavelengths_[i]) || !std::isfinite(density_[i])) {
                throw DomainError("spectrum contains non-finite values");
            }
            if (density_[i] < 0.0) {
                throw DomainError("spectral density must be nonnegative");
            }
            if (i > 0 && !(wavelengths_[i] > wavelengths_[i - 1])) {
                throw DomainError("spectrum wavelengths must be strictly increasing");
            }
        }
    }

    [[nodiscard]] const std::vector<double>& wavelengths() const noexcept { return wavelengths_; }
    [[nodiscard]] const std::vector<double>& density() const noexcept { return density_; }
    [[nodiscard]] std::size_t size() const noexcept { return wavelengths_.size(); }
    [[nodiscard]] bool empty() const noexcept { return wavelengths_.empty(); }
    [[nodiscard]] double front_nm() const { return wavelengths_.front(); }
    [[nodiscard]] double back_nm() const { return wavelengths_.back(); }

    /// Linear interpolation; zero outside the grid.
    [[nodiscard]] double at(double lambda_nm) const
    {
        if (empty() || lambda_nm < wavelengths_.front() || lambda_nm > wavelengths_.back()) {
            return 0.0;
        }
        auto hi = std::upper_bound(wavelengths_.begin(), wavelengths_.end(), lambda_nm);
        if (hi == wavelengths_.end()) {
            return density_.back();
        }
        const auto j = static_cast<std::size_t>(hi - wavelengths_.begin());
        const double x0 = wavelengths_[j - 1];
        const double x1 = wavelengths_[j];
        const double w = (lambda_nm - x0) / (x1 - x0);
        return density_[j - 1] + w * (density_[j] - density_[j - 1]);
    }

    /// Trapezoidal integral over the grid.
    [[nodiscard]] double integral() const
    {
        double sum = 0.0;
        for (std::size_t i = 1; i < size(); ++i) {
            sum += 0.5 * (density_[i] + density_[i - 1]) * (wavelengths_[i] - wavelengths_[i - 1]);
        }
        return sum;
    }

    [[nodiscard]] double max_density() const
    {
        return empty() ? 0.0 : *std::max_element(density_.begin(), density_.end());
    }

    [[nodiscard]] SampledSpectrum scaled(double factor) const
    {
        auto d = density_;
        for (auto& v : d) v *= factor;
        return {wavelengths_, std::move(d)};
    }

    friend bool operator==(const SampledSpectrum&, const SampledSpectrum&) = default;

private:
    std::vector<double> wavelengths_;
    std::vector<double> density_;
};

/// Uniform grid of `points` wavelengths spanning [lo, hi] inclusive.
inline std::vector<double> linear_grid(double lo_nm, double hi_nm, std::size_t points)
{
    if (points < 2 || !(hi_nm > lo_nm)) {
        throw ConfigError("grid needs >= 2 points and lo < hi");
    }
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i) {
        grid[i] = lo_nm + (hi_nm - lo_nm) * static_cast<double>(i) / static_cast<double>(points - 1);
    }
    grid.back() = hi_nm;
    return grid;
}

/// Two-column CSV:
///
///     # biphoton spectrum
///     # config_hash=<sha1>        (any number of "# key=value" lines)
///     wavelength_nm,relative_density
///     900,1.25e-3
///
/// Values are written with 17 significant digits, so a write/read cycle is lossless.
inline std::string spectrum_to_csv(const SampledSpectrum& s,
                                   const std::vector<std::pair<std::string, std::string>>& meta = {})
{
    std::string out = "# biphoton spectrum\n";
    for (const auto& [key, value] : meta) {
        out += "# " + key + "=" + value + "\n";
    }
    out += "wavelength_nm,relative_density\n";
    char line[96];
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::snprintf(line, sizeof line, "%.17g,%.17g\n", s.wavelengths()[i], s.density()[i]);
        out += line;
    }
    return out;
}

struct SpectrumFile {
    SampledSpectrum spectrum;
    std::vector<std::pair<std::string, std::string>> meta;
};

inline SpectrumFile spectrum_from_csv(const std::string& text, const std::string& source = "spectrum")
{
    std::istringstream in(text);
    std::string line;
    std::vector<double> x;
    std::vector<double> y;
    SpectrumFile file;
    bool header_seen = false;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos) {
                const auto start = line.find_first_not_of("# ");
                file.meta.emplace_back(line.substr(start, eq - start), line.substr(eq + 1));
            }
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            if (line.rfind("wavelength_nm", 0) == 0) continue;
        }
        const auto comma = line.find(',');
        try {
            if (comma == std::string::npos) throw std::invalid_argument("no comma");
            x.push_back(std::stod(line.substr(0, comma)));
            y.push_back(std::stod(line.substr(comma + 1)));
        } catch (const std::exception&) {
            throw FormatError(source + ":" + std::to_string(line_no) + ": expected 'wavelength,density'");
        }
    }
    try {
        file.spectrum = SampledSpectrum(std::move(x), std::move(y));
    } catch (const DomainError& e) {
        throw FormatError(source + ": " + e.what());
    }
    return file;
}

} // namespace biphoton
