#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "biphoton/dispersion.hpp"
#include "biphoton/error.hpp"

namespace biphoton {

struct AttenuationPoint {
    double wavelength_nm;
    double db_per_km;
};

/// Single-mode fibre with a quartic group-delay model around its zero-dispersion wavelength.
struct FiberModel {
    double length_m = 150.0;
    double zdw_nm = 1500.0;
    /// Dispersion slope at the ZDW, ps/(nm^2 km).
    double slope_s0 = 0.07;
    std::vector<AttenuationPoint> attenuation;

    void validate() const
    {
        if (!(length_m > 0.0)) throw ConfigError("fibre length must be positive");
        if (!(zdw_nm > 0.0)) throw ConfigError("fibre zero-dispersion wavelength must be positive");
        if (!(slope_s0 > 0.0)) throw ConfigError("fibre dispersion slope must be positive");
        for (std::size_t i = 1; i < attenuation.size(); ++i) {
            if (!(attenuation[i].wavelength_nm > attenuation[i - 1].wavelength_nm)) {
                throw ConfigError("attenuation table wavelengths must be strictly increasing");
            }
        }
    }

    [[nodiscard]] double length_km() const noexcept { return length_m * 1e-3; }
};

/// D(l) = (S0/4) (l - zdw^4 / l^3), ps/(nm km).
inline double dispersion_parameter(const FiberModel& model, double lambda_nm)
{
    if (!(lambda_nm > 0.0)) throw DomainError("wavelength must be positive");
    const double z2 = model.zdw_nm * model.zdw_nm;
    return 0.25 * model.slope_s0 * (lambda_nm - z2 * z2 / (lambda_nm * lambda_nm * lambda_nm));
}

/// Group delay relative to the ZDW: length * integral_zdw^l D = length (S0/8)(l - zdw^2/l)^2.
inline double relative_group_delay(const FiberModel& model, double lambda_nm)
{
    if (!(lambda_nm > 0.0)) throw DomainError("wavelength must be positive");
    const double u = lambda_nm - model.zdw_nm * model.zdw_nm / lambda_nm;
    return model.length_km() * 0.125 * model.slope_s0 * u * u;
}

/// Power transmission of the fibre arm; 1 when no attenuation table is given. The table is
/// interpolated linearly and held constant beyond its ends.
inline double fiber_transmission(const FiberModel& model, double lambda_nm)
{
    const auto& table = model.attenuation;
    if (table.empty()) return 1.0;
    double alpha = table.front().db_per_km;
    if (lambda_nm >= table.back().wavelength_nm) {
        alpha = table.back().db_per_km;
    } else if (lambda_nm > table.front().wavelength_nm) {
        auto hi = std::upper_bound(table.begin(), table.end(), lambda_nm,
                                   [](double l, const AttenuationPoint& p) { return l < p.wavelength_nm; });
        auto lo = hi - 1;
        const double w = (lambda_nm - lo->wavelength_nm) / (hi->wavelength_nm - lo->wavelength_nm);
        alpha = lo->db_per_km + w * (hi->db_per_km - lo->db_per_km);
    }
    return std::pow(10.0, -alpha * model.length_km() / 10.0);
}

/// Fibre delay model plus a constant offset, restricted to a window below the ZDW where
/// the wavelength -> delay map is one-to-one.
class CalibrationCurve {
public:
    CalibrationCurve(FiberModel model, double time_offset_ps, WavelengthRange valid_window)
        : model_(std::move(model)), offset_(time_offset_ps), window_(valid_window)
    {
        model_.validate();
        if (!(window_.min_nm > 0.0) || !(window_.min_nm < window_.max_nm)) {
            throw ConfigError("calibration window must satisfy 0 < min < max");
        }
        if (!(window_.max_nm < model_.zdw_nm)) {
            std::ostringstream msg;
            msg << "calibration window must lie below the zero-dispersion wavelength ("
                << model_.zdw_nm << " nm); above it the arrival-time difference and "
                << "wavelength are no longer one-to-one";
            throw ConfigError(msg.str());
        }
    }

    [[nodiscard]] const FiberModel& model() const noexcept { return model_; }
    [[nodiscard]] double time_offset_ps() const noexcept { return offset_; }
    [[nodiscard]] const WavelengthRange& valid_window() const noexcept { return window_; }

    [[nodiscard]] CalibrationCurve with_offset(double offset_ps) const
    {
        return {model_, offset_ps, window_};
    }

    /// Arrival-time difference for wavelength `lambda_nm` in the fibre arm.
    [[nodiscard]] double delay(double lambda_nm) const
    {
        check(lambda_nm);
        return relative_group_delay(model_, lambda_nm) + offset_;
    }

    /// Analytic d(dt)/d(lambda) = length * D(lambda), ps/nm; negative on the window.
    [[nodiscard]] double jacobian(double lambda_nm) const
    {
        check(lambda_nm);
        return model_.length_km() * dispersion_parameter(model_, lambda_nm);
    }

    /// Delay interval covered by the window: [delay(max), delay(min)].
    [[nodiscard]] std::pair<double, double> time_image() const
    {
        return {delay(window_.max_nm), delay(window_.min_nm)};
    }

    /// Inverts delay() by bisection. Throws RangeError outside time_image().
    [[nodiscard]] double wavelength_at(double delay_ps) const
    {
        const auto [t_lo, t_hi] = time_image();
        if (!(delay_ps >= t_lo && delay_ps <= t_hi)) {
            std::ostringstream msg;
            msg << "arrival-time difference " << delay_ps << " ps is outside the calibrated "
                << "image [" << t_lo << ", " << t_hi << "] ps";
            throw RangeError(msg.str());
        }
        double lo = window_.min_nm;  // largest delay
        double hi = window_.max_nm;  // smallest delay
        for (int i = 0; i < 200 && hi - lo > 1e-11 * hi; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (relative_group_delay(model_, mid) + offset_ > delay_ps) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    }

private:
    void check(double lambda_nm) const
    {
        if (!window_.contains(lambda_nm)) {
            std::ostringstream msg;
            msg << "wavelength " << lambda_nm << " nm is outside the calibration window ["
                << window_.min_nm << ", " << window_.max_nm
                << "] nm where arrival time and wavelength are one-to-one";
            throw RangeError(msg.str());
        }
    }

    FiberModel model_;
    double offset_;
    WavelengthRange window_;
};

inline double arrival_time_difference(const CalibrationCurve& calib, double lambda_nm)
{
    return calib.delay(lambda_nm);
}

struct CalibrationPoint {
    double cuton_nm;
    double edge_dt_ps;
};

struct CalibrationFit {
    CalibrationCurve curve;
    /// Multiplier applied to the nominal fibre length (1 for offset-only fits).
    double length_scale = 1.0;
    double residual_rms_ps = 0.0;
    std::vector<double> residuals_ps;
};

struct FitOptions {
    bool fit_length = false;
    /// Defaults to the hull of the calibration points.
    std::optional<WavelengthRange> valid_window;
};

/// Least-squares fit of the time offset (and optionally a length factor) so the model
/// delay passes through measured (cut-on, edge delay) points.
inline CalibrationFit fit_calibration(const std::vector<CalibrationPoint>& points,
                                      const FiberModel& model, const FitOptions& options = {})
{
    model.validate();
    const std::size_t needed = options.fit_length ? 2 : 1;
    if (points.size() < needed) {
        throw FitError("calibration fit needs at least " + std::to_string(needed) + " point(s)");
    }
    for (const auto& p : points) {
        if (!(p.cuton_nm > 0.0) || !(p.cuton_nm < model.zdw_nm)) {
            std::ostringstream msg;
            msg << "calibration point at " << p.cuton_nm << " nm rejected: cut-on must lie below "
                << "the zero-dispersion wavelength " << model.zdw_nm
                << " nm, where the delay map is one-to-one";
            throw FitError(msg.str());
        }
    }

    const auto n = static_cast<double>(points.size());
    std::vector<double> g(points.size());
    double g_mean = 0.0;
    double t_mean = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        g[i] = relative_group_delay(model, points[i].cuton_nm);
        g_mean += g[i] / n;
        t_mean += points[i].edge_dt_ps / n;
    }

    double scale = 1.0;
    if (options.fit_length) {
        double sxx = 0.0;
        double sxy = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            sxx += (g[i] - g_mean) * (g[i] - g_mean);
            sxy += (g[i] - g_mean) * (points[i].edge_dt_ps - t_mean);
        }
        if (!(sxx > 1e-12 * (1.0 + g_mean * g_mean))) {
            throw FitError("length fit is degenerate: calibration points share one wavelength");
        }
        scale = sxy / sxx;
        if (!(scale > 0.0)) {
            throw FitError("length fit produced a non-positive length factor");
        }
    }
    const double offset = t_mean - scale * g_mean;

    FiberModel fitted = model;
    fitted.length_m *= scale;
    WavelengthRange window;
    if (options.valid_window) {
        window = *options.valid_window;
    } else {
        auto [lo, hi] = std::minmax_element(points.begin(), points.end(),
                                            [](const auto& a, const auto& b) { return a.cuton_nm < b.cuton_nm; });
        window = {lo->cuton_nm, hi->cuton_nm};
        if (!(window.min_nm < window.max_nm)) {
            window = {window.min_nm * (1 - 1e-6), window.max_nm};
        }
    }

    CalibrationFit fit{CalibrationCurve(fitted, offset, window), scale, 0.0, {}};
    double ss = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double r = points[i].edge_dt_ps - (scale * g[i] + offset);
        fit.residuals_ps.push_back(r);
        ss += r * r;
    }
    fit.residual_rms_ps = std::sqrt(ss / n);
    return fit;
}

} // namespace biphoton
