#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "biphoton/coincidence.hpp"
#include "biphoton/detector.hpp"
#include "biphoton/error.hpp"
#include "biphoton/fiber.hpp"
#include "biphoton/presets.hpp"
#include "biphoton/reconstruct.hpp"
#include "biphoton/spdc_model.hpp"
#include "biphoton/tagsim.hpp"

namespace biphoton {

/// Simulate -> histogram -> reconstruct round trip of a fibre-spectroscopy run.
struct PipelineConfig {
    SourcePreset source;
    std::array<DetectorModel, 2> detectors;
    FiberPreset fiber;
    /// Expected true coincidences (pairs tagged on both channels) over the run.
    double expected_coincidences = 1e6;
    /// Fixes the duration and rescales the pair rate; otherwise the source pair rate is kept.
    std::optional<double> duration_s{};
    std::uint64_t seed = 0;
    std::int64_t bin_width_ps = 50;
    std::int64_t window_ps = 50'000;
    unsigned threads = 1;
    /// Extend the signal window to its conjugate closure so the marginal is complete.
    bool conjugate_closure = true;
    bool fluorescence = true;
    /// Distance from the calibrated delay image beyond which bins count as background.
    double background_margin_ps = 2000.0;
};

struct PipelineResult {
    SpdcSpectrum input;
    /// What the fibre-arm detector records per unit wavelength: signal plus mapped idler.
    SampledSpectrum marginal;
    RunConfig run;
    ExpectedRates expected;
    SimulationResult simulation;
    CoincidenceHistogram histogram;
    double background_per_bin = 0.0;
    Reconstruction reconstruction;
    double l1_distance = 0.0;
    double spectral_width_nm = 0.0;
};

/// Mean count of bins whose centre is farther than `margin_ps` outside [t_lo, t_hi].
inline double background_outside(const CoincidenceHistogram& h, double t_lo, double t_hi, double margin_ps)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double c = h.center_ps(i);
        if (c < t_lo - margin_ps || c > t_hi + margin_ps) {
            sum += static_cast<double>(h.counts[i]);
            ++n;
        }
    }
    if (n == 0) throw ConfigError("histogram window leaves no background bins outside the calibrated image");
    return sum / static_cast<double>(n);
}

/// Fluorescence of the source preset on a +-6 sigma grid; the rate is the spectrum's integral.
inline void add_fluorescence(RunConfig& run, const SourcePreset& source)
{
    const auto& f = source.fluorescence;
    if (!(f.rate_scale > 0.0)) return;
    const double half = f.shape == FluorescenceShape::gaussian ? 6.0 * f.width_nm : 0.5 * f.width_nm;
    const auto grid = linear_grid(std::max(1.0, f.center_nm - half), f.center_nm + half, 1024);
    run.fluorescence_spectrum = fluorescence_density(f, source.spdc.stack.nonlinear_layer().thickness_nm,
                                                     source.spdc.pump_power_mw, grid);
    run.fluorescence_rate_hz = run.fluorescence_spectrum.integral();
}

/// Calibrated window clipped to the span of reconstructed samples (the outermost bin centres).
inline WavelengthRange comparison_window(const PipelineResult& r)
{
    const auto& s = r.reconstruction.spectrum;
    if (s.size() < 2) throw FitError("reconstruction has fewer than two samples");
    const auto& w = r.run.fiber_arm->calibration.valid_window();
    return {std::max(w.min_nm, s.front_nm()), std::min(w.max_nm, s.back_nm())};
}

inline RunConfig pipeline_run_config(const PipelineConfig& cfg, const SpdcSpectrum& input)
{
    RunConfig run;
    run.spdc_spectrum = input.spectrum;
    run.pump_wavelength_nm = cfg.source.spdc.pump_wavelength_nm;
    run.fiber_arm = FiberArm{cfg.fiber.calibration, cfg.fiber.channel};
    run.seed = cfg.seed;
    run.threads = cfg.threads;
    if (cfg.fluorescence) add_fluorescence(run, cfg.source);

    // Coincidences per emitted pair fix the pair rate / duration trade-off.
    run.pair_rate_hz = 1.0;
    const double per_pair = expected_rates(run, cfg.detectors).true_coincidence_hz;
    if (!(per_pair > 0.0)) throw ConfigError("configuration yields no coincidences");
    if (!(cfg.expected_coincidences > 0.0)) throw ConfigError("expected coincidences must be positive");
    if (cfg.duration_s) {
        run.duration_s = *cfg.duration_s;
        run.pair_rate_hz = cfg.expected_coincidences / (per_pair * run.duration_s);
    } else {
        if (!(cfg.source.pair_rate_hz > 0.0)) throw ConfigError("source preset has no pair rate");
        run.pair_rate_hz = cfg.source.pair_rate_hz;
        run.duration_s = cfg.expected_coincidences / (per_pair * run.pair_rate_hz);
    }
    return run;
}

inline PipelineResult run_pipeline(const PipelineConfig& cfg)
{
    PipelineResult r;
    SpdcConfig spdc = cfg.source.spdc;
    if (cfg.conjugate_closure) spdc.spectral_window = conjugate_closure(spdc.spectral_window, spdc.pump_wavelength_nm);
    r.input = spdc_spectral_density(spdc);
    r.marginal = single_photon_marginal(r.input.spectrum, spdc.pump_wavelength_nm);

    PipelineConfig adjusted = cfg;
    adjusted.source.spdc = spdc;
    r.run = pipeline_run_config(adjusted, r.input);
    r.expected = expected_rates(r.run, cfg.detectors);
    r.simulation = simulate(r.run, cfg.detectors);
    r.histogram = histogram(r.simulation.stream, cfg.bin_width_ps, cfg.window_ps, 0, cfg.threads);

    const auto& calib = cfg.fiber.calibration;
    auto [t_lo, t_hi] = calib.time_image();
    if (cfg.fiber.channel == 0) {
        std::tie(t_lo, t_hi) = std::pair{-t_hi, -t_lo};
    }
    r.background_per_bin = background_outside(r.histogram, t_lo, t_hi, cfg.background_margin_ps);

    ReconstructOptions opts;
    opts.fiber_channel = cfg.fiber.channel;
    opts.detectors = cfg.detectors;
    opts.pump_wavelength_nm = spdc.pump_wavelength_nm;
    opts.background_per_bin = r.background_per_bin;
    r.reconstruction = reconstruct_spectrum(r.histogram, calib, opts);
    r.l1_distance = normalized_l1_distance(r.reconstruction.spectrum, r.marginal, comparison_window(r));
    r.spectral_width_nm = spectral_width(r.reconstruction.spectrum, 0.1);
    return r;
}

} // namespace biphoton
