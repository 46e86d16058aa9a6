#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "biphoton/coincidence.hpp"
#include "biphoton/detector.hpp"
#include "biphoton/dispersion.hpp"
#include "biphoton/error.hpp"
#include "biphoton/fiber.hpp"
#include "biphoton/spectrum.hpp"

namespace biphoton {

struct ReconstructOptions {
    /// Channel whose photon traversed the fibre; dt = t1 - t0 is negated when it is 0.
    std::uint8_t fiber_channel = 1;
    /// Detectors indexed by channel; enables efficiency correction when set.
    std::optional<std::array<DetectorModel, 2>> detectors{};
    /// Needed for efficiency correction (the partner photon sits at the conjugate wavelength).
    std::optional<double> pump_wavelength_nm{};
    /// Divide by the fibre transmission when the fibre model has an attenuation table.
    bool correct_fiber_loss = true;
    /// Flat level subtracted from every bin before mapping (e.g. the sideband mean).
    double background_per_bin = 0.0;
    /// Skip the |d dt / d lambda| factor: density per ps of delay instead of per nm.
    bool raw_time_axis = false;
};

struct Reconstruction {
    SampledSpectrum spectrum;
    /// Width in nm of the wavelength interval each output sample stands for (b / |J|).
    std::vector<double> bin_width_nm;
    std::size_t dropped_bins = 0;
    std::uint64_t dropped_counts = 0;
    bool efficiency_corrected = false;

    /// Sum of density * bin width; equals (kept counts) / T without corrections.
    [[nodiscard]] double bin_integral() const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < spectrum.size(); ++i) s += spectrum.density()[i] * bin_width_nm[i];
        return s;
    }
};

/// Maps each histogram bin centre through the inverse calibration:
///
///     lambda    = calib^-1(dt)
///     density   = (counts - background) * |d dt / d lambda| / (b T)
///               / (eta_fibre(lambda) * eta_other(conj(lambda)) * T_fibre(lambda))
///
/// The fibre channel's detector sees lambda and the other channel's detector sees its
/// conjugate. Bins whose centre lies outside the calibrated image are dropped and counted.
inline Reconstruction reconstruct_spectrum(const CoincidenceHistogram& h, const CalibrationCurve& calib,
                                           const ReconstructOptions& options = {})
{
    if (!(h.acquisition_time_s > 0.0)) throw ConfigError("histogram acquisition time must be positive");
    if (options.fiber_channel > 1) throw ConfigError("fibre channel must be 0 or 1");
    if (options.detectors && !options.pump_wavelength_nm) {
        throw ConfigError("efficiency correction needs the pump wavelength");
    }
    const auto [t_lo, t_hi] = calib.time_image();
    const double b = static_cast<double>(h.bin_width_ps);
    const double sign = options.fiber_channel == 1 ? 1.0 : -1.0;

    struct Sample {
        double lambda;
        double density;
        double width;
    };
    std::vector<Sample> samples;
    Reconstruction out;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double dt = sign * h.center_ps(i);
        if (!(dt >= t_lo && dt <= t_hi)) {
            ++out.dropped_bins;
            out.dropped_counts += h.counts[i];
            continue;
        }
        const double lambda = calib.wavelength_at(dt);
        const double jac = std::abs(calib.jacobian(lambda));
        if (!(jac > 0.0) || !std::isfinite(jac)) {
            std::ostringstream msg;
            msg << "calibration is not one-to-one at " << lambda << " nm (d dt / d lambda = 0); "
                << "arrival time difference and wavelength must map one-to-one over the bins used";
            throw DomainError(msg.str());
        }
        double value = std::max(0.0, static_cast<double>(h.counts[i]) - options.background_per_bin)
                       / (b * h.acquisition_time_s);
        if (!options.raw_time_axis) value *= jac;
        if (options.detectors) {
            const auto& dets = *options.detectors;
            const double partner = conjugate_wavelength(*options.pump_wavelength_nm, lambda);
            double eta = dets[options.fiber_channel].efficiency(lambda)
                         * dets[1 - options.fiber_channel].efficiency(partner);
            if (options.correct_fiber_loss) eta *= fiber_transmission(calib.model(), lambda);
            value = eta > 0.0 ? value / eta : 0.0;
        }
        samples.push_back({lambda, value, b / jac});
    }
    out.efficiency_corrected = options.detectors.has_value();
    std::sort(samples.begin(), samples.end(), [](const Sample& x, const Sample& y) { return x.lambda < y.lambda; });
    std::vector<double> grid;
    std::vector<double> density;
    for (const auto& s : samples) {
        grid.push_back(s.lambda);
        density.push_back(s.density);
        out.bin_width_nm.push_back(s.width);
    }
    out.spectrum = SampledSpectrum(std::move(grid), std::move(density));
    return out;
}

/// Wavelength span of one histogram bin at lambda, b / |J(lambda)|.
inline double bin_wavelength_step(const CalibrationCurve& calib, double bin_width_ps, double lambda_nm)
{
    return bin_width_ps / std::abs(calib.jacobian(lambda_nm));
}

/// Extent from the first to the last grid sample with density >= threshold * max.
inline double spectral_width(const SampledSpectrum& s, double threshold = 0.1)
{
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw DomainError("threshold must lie in [0, 1]");
    const double peak = s.empty() ? 0.0 : s.max_density();
    if (!(peak > 0.0)) throw DomainError("spectral width of an all-zero spectrum is undefined");
    const double level = threshold * peak;
    std::size_t first = s.size();
    std::size_t last = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.density()[i] >= level) {
            first = std::min(first, i);
            last = i;
        }
    }
    return s.wavelengths()[last] - s.wavelengths()[first];
}

/// L1 distance of the two spectra after each is normalized to unit area on `window`,
/// both evaluated by linear interpolation on a uniform grid of `points` samples.
inline double normalized_l1_distance(const SampledSpectrum& a, const SampledSpectrum& b,
                                     WavelengthRange window, std::size_t points = 4001)
{
    const auto grid = linear_grid(window.min_nm, window.max_nm, points);
    std::vector<double> va(points);
    std::vector<double> vb(points);
    for (std::size_t i = 0; i < points; ++i) {
        va[i] = a.at(grid[i]);
        vb[i] = b.at(grid[i]);
    }
    auto trapezoid = [&](const std::vector<double>& v) {
        double s = 0.0;
        for (std::size_t i = 1; i < points; ++i) s += 0.5 * (v[i] + v[i - 1]) * (grid[i] - grid[i - 1]);
        return s;
    };
    const double na = trapezoid(va);
    const double nb = trapezoid(vb);
    if (!(na > 0.0) || !(nb > 0.0)) throw DomainError("cannot normalize a spectrum with zero area on the window");
    std::vector<double> diff(points);
    for (std::size_t i = 0; i < points; ++i) diff[i] = std::abs(va[i] / na - vb[i] / nb);
    return trapezoid(diff);
}

enum class EdgeDirection {
    /// Counts drop toward larger dt (longpass cut-on with the fibre on channel 1).
    falling,
    rising,
};

struct EdgeOptions {
    EdgeDirection direction = EdgeDirection::falling;
    /// Plateau search span on the populated side of the coarse crossing.
    double plateau_span_ps = 2000.0;
    /// Fraction of bins at the empty end used for the background level.
    double background_fraction = 0.1;
};

/// Half-maximum position of a spectral cut-on edge in a histogram, linearly interpolated
/// between the two bins that straddle background + (plateau - background) / 2.
inline double extract_edge(const CoincidenceHistogram& h, const EdgeOptions& options = {})
{
    const std::size_t n = h.size();
    if (n < 5) throw FitError("histogram too short for edge extraction");
    // Work in the falling orientation: index increases toward the empty side.
    std::vector<double> c(n);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = options.direction == EdgeDirection::falling ? i : n - 1 - i;
        c[i] = static_cast<double>(h.counts[j]);
        x[i] = h.center_ps(j);
    }
    const auto tail = std::max<std::size_t>(1, static_cast<std::size_t>(options.background_fraction * n));
    double bg = 0.0;
    for (std::size_t i = n - tail; i < n; ++i) bg += c[i] / static_cast<double>(tail);
    const double peak = *std::max_element(c.begin(), c.end());
    if (!(peak > bg)) throw FitError("histogram has no edge above background");

    std::size_t coarse = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (c[i] - bg >= 0.5 * (peak - bg)) coarse = i;
    }
    const auto span = static_cast<std::size_t>(options.plateau_span_ps / static_cast<double>(h.bin_width_ps));
    double plateau = 0.0;
    for (std::size_t i = coarse >= span ? coarse - span : 0; i <= coarse; ++i) plateau = std::max(plateau, c[i]);
    const double half = bg + 0.5 * (plateau - bg);

    std::size_t j = coarse;
    while (j + 1 < n && c[j + 1] >= half) ++j;
    if (j + 1 >= n) throw FitError("edge runs off the end of the histogram");
    const double frac = (c[j] - half) / (c[j] - c[j + 1]);
    return x[j] + frac * (x[j + 1] - x[j]);
}

} // namespace biphoton
