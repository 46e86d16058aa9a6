#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "biphoton/dispersion.hpp"
#include "biphoton/error.hpp"

namespace biphoton {

struct EfficiencyPoint {
    double wavelength_nm;
    double efficiency;
};

/// Single-photon detector: tabulated efficiency, Gaussian timing jitter, dark counts.
struct DetectorModel {
    std::string name;
    /// Interpolated linearly; zero outside the tabulated range.
    std::vector<EfficiencyPoint> efficiency_curve;
    double jitter_sigma_ps = 0.0;
    double dark_rate_hz = 0.0;

    void validate() const
    {
        if (efficiency_curve.empty()) {
            throw ConfigError("detector '" + name + "' has an empty efficiency curve");
        }
        for (std::size_t i = 0; i < efficiency_curve.size(); ++i) {
            const auto& p = efficiency_curve[i];
            if (!(p.efficiency >= 0.0 && p.efficiency <= 1.0)) {
                throw ConfigError("detector '" + name + "': efficiency must lie in [0, 1]");
            }
            if (i > 0 && !(p.wavelength_nm > efficiency_curve[i - 1].wavelength_nm)) {
                throw ConfigError("detector '" + name + "': efficiency wavelengths must increase");
            }
        }
        if (!(jitter_sigma_ps >= 0.0)) throw ConfigError("detector '" + name + "': jitter must be >= 0");
        if (!(dark_rate_hz >= 0.0)) throw ConfigError("detector '" + name + "': dark rate must be >= 0");
    }

    [[nodiscard]] double efficiency(double lambda_nm) const
    {
        const auto& c = efficiency_curve;
        if (c.empty() || lambda_nm < c.front().wavelength_nm || lambda_nm > c.back().wavelength_nm) {
            return 0.0;
        }
        if (c.size() == 1) return c.front().efficiency;
        auto hi = std::upper_bound(c.begin(), c.end(), lambda_nm,
                                   [](double l, const EfficiencyPoint& p) { return l < p.wavelength_nm; });
        if (hi == c.end()) return c.back().efficiency;
        auto lo = hi - 1;
        const double w = (lambda_nm - lo->wavelength_nm) / (hi->wavelength_nm - lo->wavelength_nm);
        return lo->efficiency + w * (hi->efficiency - lo->efficiency);
    }

    /// Hull of wavelengths with nonzero efficiency; empty range if none.
    [[nodiscard]] WavelengthRange support() const
    {
        double lo = 0.0;
        double hi = 0.0;
        bool any = false;
        for (std::size_t i = 0; i < efficiency_curve.size(); ++i) {
            if (efficiency_curve[i].efficiency > 0.0) {
                const double left = i > 0 ? efficiency_curve[i - 1].wavelength_nm
                                          : efficiency_curve[i].wavelength_nm;
                const double right = i + 1 < efficiency_curve.size()
                                         ? efficiency_curve[i + 1].wavelength_nm
                                         : efficiency_curve[i].wavelength_nm;
                if (!any) lo = left;
                hi = right;
                any = true;
            }
        }
        return any ? WavelengthRange{lo, hi} : WavelengthRange{0.0, 0.0};
    }
};

/// Ideal detector with unit efficiency over [lo, hi] nm.
inline DetectorModel ideal_detector(std::string name, double lo_nm = 100.0, double hi_nm = 10000.0,
                                    double jitter_ps = 0.0, double dark_hz = 0.0)
{
    return {std::move(name), {{lo_nm, 1.0}, {hi_nm, 1.0}}, jitter_ps, dark_hz};
}

enum class FilterKind { longpass, shortpass, bandpass };

/// Ideal (rectangular) spectral filter.
struct SpectralFilter {
    FilterKind kind = FilterKind::longpass;
    /// Cut-on (longpass), cut-off (shortpass) or centre (bandpass), nm.
    double edge_nm = 0.0;
    /// Full width for bandpass filters.
    double fwhm_nm = 0.0;
    /// -1: common path before the splitter; 0 or 1: in front of that detector only.
    int channel = -1;

    [[nodiscard]] bool applies_to(int detector_channel) const noexcept
    {
        return channel < 0 || channel == detector_channel;
    }

    [[nodiscard]] double transmission(double lambda_nm) const
    {
        switch (kind) {
        case FilterKind::longpass: return lambda_nm >= edge_nm ? 1.0 : 0.0;
        case FilterKind::shortpass: return lambda_nm <= edge_nm ? 1.0 : 0.0;
        case FilterKind::bandpass: return std::abs(lambda_nm - edge_nm) <= 0.5 * fwhm_nm ? 1.0 : 0.0;
        }
        return 0.0;
    }

    static SpectralFilter longpass(double cuton_nm, int channel = -1)
    {
        return {FilterKind::longpass, cuton_nm, 0.0, channel};
    }
    static SpectralFilter shortpass(double cutoff_nm, int channel = -1)
    {
        return {FilterKind::shortpass, cutoff_nm, 0.0, channel};
    }
    static SpectralFilter bandpass(double center_nm, double fwhm_nm, int channel = -1)
    {
        return {FilterKind::bandpass, center_nm, fwhm_nm, channel};
    }
};

} // namespace biphoton
