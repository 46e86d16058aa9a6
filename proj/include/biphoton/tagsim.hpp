#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "biphoton/detector.hpp"
#include "biphoton/dispersion.hpp"
#include "biphoton/error.hpp"
#include "biphoton/fiber.hpp"
#include "biphoton/spectrum.hpp"
#include "biphoton/timetag.hpp"

namespace biphoton {

enum class Routing {
    /// Each photon independently goes to channel 0 with probability splitter_ratio.
    fifty_fifty,
    /// Photons bluer than dichroic_split_nm go to dichroic_blue_channel, the rest to the other.
    dichroic,
};

struct FiberArm {
    CalibrationCurve calibration;
    std::uint8_t channel = 1;
};

struct RunConfig {
    double duration_s = 1.0;
    /// Emitted pairs per second (before routing, filtering and detection).
    double pair_rate_hz = 0.0;
    SampledSpectrum spdc_spectrum;
    double pump_wavelength_nm = 515.0;
    /// Emitted fluorescence photons per second, distributed as fluorescence_spectrum.
    double fluorescence_rate_hz = 0.0;
    SampledSpectrum fluorescence_spectrum;
    double splitter_ratio = 0.5;
    Routing routing = Routing::fifty_fifty;
    double dichroic_split_nm = 1030.0;
    std::uint8_t dichroic_blue_channel = 1;
    std::optional<FiberArm> fiber_arm;
    std::vector<SpectralFilter> filters;
    std::uint64_t seed = 0;
    /// Generation window; the stream for a seed is reproducible for a fixed window length.
    double window_s = 1.0;
    unsigned threads = 1;
    bool record_truth = false;

    void validate() const
    {
        if (!(duration_s >= 0.0) || !std::isfinite(duration_s)) throw ConfigError("duration must be >= 0");
        if (!(pair_rate_hz >= 0.0) || !(fluorescence_rate_hz >= 0.0)) {
            throw ConfigError("rates must be >= 0");
        }
        if (!(splitter_ratio > 0.0 && splitter_ratio < 1.0)) {
            throw ConfigError("splitter_ratio must lie in (0, 1)");
        }
        if (!(window_s > 0.0)) throw ConfigError("generation window must be positive");
        if (pair_rate_hz > 0.0 && (spdc_spectrum.size() < 2 || spdc_spectrum.integral() <= 0.0)) {
            throw ConfigError("pair rate > 0 requires a nonzero SPDC spectrum");
        }
        if (pair_rate_hz > 0.0 && !(spdc_spectrum.front_nm() > pump_wavelength_nm)) {
            throw ConfigError("SPDC spectrum must lie above the pump wavelength");
        }
        if (fluorescence_rate_hz > 0.0
            && (fluorescence_spectrum.size() < 2 || fluorescence_spectrum.integral() <= 0.0)) {
            throw ConfigError("fluorescence rate > 0 requires a nonzero fluorescence spectrum");
        }
        if (fiber_arm && fiber_arm->channel > 1) throw ConfigError("fibre arm channel must be 0 or 1");
        if (dichroic_blue_channel > 1) throw ConfigError("dichroic channel must be 0 or 1");
    }
};

using DetectorPair = std::array<DetectorModel, 2>;

/// Ground truth of one emitted pair, recorded when RunConfig::record_truth is set.
struct PairTruth {
    std::uint32_t pair_id;
    double emission_ps;
    std::array<double, 2> wavelength_nm;   // [signal, idler]
    std::array<int, 2> channel;            // routed channel, -1 if blocked by a filter
    std::array<bool, 2> detected;
    std::array<double, 2> delay_ps;        // fibre delay (0 outside the fibre arm)
    std::array<double, 2> jitter_ps;
    std::array<std::uint64_t, 2> timestamp_ps;
};

struct SimulationResult {
    TimeTagStream stream;
    std::vector<PairTruth> truth;
};

namespace sim {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent engine per (seed, window, stream) triple.
inline std::mt19937_64 window_engine(std::uint64_t seed, std::uint64_t window, std::uint64_t stream)
{
    return std::mt19937_64(splitmix64(splitmix64(seed ^ 0x5bd1e995ULL) + window * 0x2545f491ULL + stream));
}

/// Inverse-CDF sampler on a SampledSpectrum: trapezoidal cell masses, linear CDF within a
/// cell (uniform position inside the chosen cell).
class SpectrumSampler {
public:
    explicit SpectrumSampler(const SampledSpectrum& s) : grid_(s.wavelengths())
    {
        cdf_.assign(grid_.size(), 0.0);
        for (std::size_t i = 1; i < grid_.size(); ++i) {
            cdf_[i] = cdf_[i - 1]
                      + 0.5 * (s.density()[i] + s.density()[i - 1]) * (grid_[i] - grid_[i - 1]);
        }
    }

    [[nodiscard]] double total() const { return cdf_.empty() ? 0.0 : cdf_.back(); }

    template <typename Engine>
    double operator()(Engine& eng) const
    {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double target = u(eng) * total();
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
        std::size_t cell = it == cdf_.begin() ? 1 : static_cast<std::size_t>(it - cdf_.begin());
        cell = std::clamp<std::size_t>(cell, 1, grid_.size() - 1);
        // skip zero-mass cells that upper_bound can land on at exact boundaries
        while (cdf_[cell] == cdf_[cell - 1] && cell + 1 < grid_.size()) ++cell;
        const double mass = cdf_[cell] - cdf_[cell - 1];
        const double frac = mass > 0.0 ? std::clamp((target - cdf_[cell - 1]) / mass, 0.0, 1.0) : u(eng);
        return grid_[cell - 1] + frac * (grid_[cell] - grid_[cell - 1]);
    }

    /// Expectation of f(lambda) under the sampling law, by 8-point midpoint rule per cell.
    template <typename F>
    double expectation(F&& f) const
    {
        if (total() <= 0.0) return 0.0;
        double acc = 0.0;
        constexpr int sub = 8;
        for (std::size_t i = 1; i < grid_.size(); ++i) {
            const double mass = cdf_[i] - cdf_[i - 1];
            if (mass <= 0.0) continue;
            double mean = 0.0;
            for (int k = 0; k < sub; ++k) {
                mean += f(grid_[i - 1] + (k + 0.5) / sub * (grid_[i] - grid_[i - 1]));
            }
            acc += mass * mean / sub;
        }
        return acc / total();
    }

private:
    std::vector<double> grid_;
    std::vector<double> cdf_;
};

/// Photon path model shared by the simulator and the analytic rate expectations.
struct OpticalPath {
    const RunConfig& cfg;
    const DetectorPair& detectors;

    /// Product of the common-path filters and those in front of `channel`.
    [[nodiscard]] double filter_transmission(double lambda_nm, int channel) const
    {
        double t = 1.0;
        for (const auto& f : cfg.filters) {
            if (f.applies_to(channel)) t *= f.transmission(lambda_nm);
        }
        return t;
    }

    /// Probability that a photon is routed to `channel`.
    [[nodiscard]] double route_probability(double lambda_nm, int channel) const
    {
        if (cfg.routing == Routing::dichroic) {
            const int blue = cfg.dichroic_blue_channel;
            const int target = lambda_nm < cfg.dichroic_split_nm ? blue : 1 - blue;
            return target == channel ? 1.0 : 0.0;
        }
        return channel == 0 ? cfg.splitter_ratio : 1.0 - cfg.splitter_ratio;
    }

    [[nodiscard]] bool in_fiber(int channel) const
    {
        return cfg.fiber_arm && cfg.fiber_arm->channel == channel;
    }

    /// Survival after routing: fibre loss (if any) times detector efficiency.
    [[nodiscard]] double detection_probability(double lambda_nm, int channel) const
    {
        double p = detectors[channel].efficiency(lambda_nm);
        if (in_fiber(channel)) p *= fiber_transmission(cfg.fiber_arm->calibration.model(), lambda_nm);
        return p;
    }

    /// Probability that a photon of this wavelength produces a tag on `channel`.
    [[nodiscard]] double tag_probability(double lambda_nm, int channel) const
    {
        return filter_transmission(lambda_nm, channel) * route_probability(lambda_nm, channel)
               * detection_probability(lambda_nm, channel);
    }

    /// Physical fibre delay (offset included) for any wavelength, used when generating.
    [[nodiscard]] double fiber_delay(double lambda_nm, int channel) const
    {
        if (!in_fiber(channel)) return 0.0;
        const auto& calib = cfg.fiber_arm->calibration;
        return relative_group_delay(calib.model(), lambda_nm) + calib.time_offset_ps();
    }
};

inline WavelengthRange support_of(const SampledSpectrum& s)
{
    double lo = 0.0;
    double hi = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.density()[i] > 0.0) {
            if (!any) lo = s.wavelengths()[i > 0 ? i - 1 : 0];
            hi = s.wavelengths()[std::min(i + 1, s.size() - 1)];
            any = true;
        }
    }
    return any ? WavelengthRange{lo, hi} : WavelengthRange{0.0, 0.0};
}

inline void check_support(const RunConfig& cfg, const DetectorPair& detectors)
{
    auto overlaps = [](WavelengthRange a, WavelengthRange b) {
        return a.max_nm > a.min_nm && b.max_nm > b.min_nm && a.min_nm <= b.max_nm && b.min_nm <= a.max_nm;
    };
    auto complain = [](const char* what, WavelengthRange s, const DetectorModel& d) {
        std::ostringstream msg;
        msg << what << " support [" << s.min_nm << ", " << s.max_nm << "] nm has an empty overlap "
            << "with the efficiency support [" << d.support().min_nm << ", " << d.support().max_nm
            << "] nm of detector '" << d.name << "'";
        throw ConfigError(msg.str());
    };
    if (cfg.pair_rate_hz > 0.0) {
        const WavelengthRange s = support_of(cfg.spdc_spectrum);
        const WavelengthRange both{
            std::min(s.min_nm, conjugate_wavelength(cfg.pump_wavelength_nm, s.max_nm)),
            std::max(s.max_nm, conjugate_wavelength(cfg.pump_wavelength_nm, s.min_nm))};
        for (const auto& d : detectors) {
            if (!overlaps(both, d.support())) complain("SPDC spectrum", both, d);
        }
    }
    if (cfg.fluorescence_rate_hz > 0.0) {
        const WavelengthRange s = support_of(cfg.fluorescence_spectrum);
        if (!overlaps(s, detectors[0].support()) && !overlaps(s, detectors[1].support())) {
            complain("fluorescence spectrum", s, detectors[0]);
        }
    }
}

inline std::uint64_t to_ps(double seconds)
{
    return static_cast<std::uint64_t>(std::llround(seconds * 1e12));
}

struct WindowOutput {
    std::vector<TimeTag> events;
    std::vector<PairTruth> truth;
    std::uint32_t pairs = 0;
};

/// Places an event at window_start + offset, dropping events before t = 0.
inline void emit(WindowOutput& out, std::uint64_t window_start_ps, double offset_ps, std::uint8_t channel,
                 Truth truth, std::uint32_t pair_id, std::uint64_t* stamp = nullptr)
{
    const double t = static_cast<double>(window_start_ps) + offset_ps;
    if (t < 0.0) return;
    const auto ts = window_start_ps + static_cast<std::int64_t>(std::llround(offset_ps));
    out.events.push_back({static_cast<std::uint64_t>(ts), pair_id, channel, truth});
    if (stamp) *stamp = static_cast<std::uint64_t>(ts);
}

inline WindowOutput simulate_window(const RunConfig& cfg, const DetectorPair& detectors,
                                    const SpectrumSampler& spdc, const SpectrumSampler& fluor,
                                    std::uint64_t index, std::uint64_t start_ps, double length_ps)
{
    WindowOutput out;
    const OpticalPath path{cfg, detectors};
    const double length_s = length_ps * 1e-12;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    {
        auto eng = window_engine(cfg.seed, index, 0);
        std::poisson_distribution<std::uint64_t> count(cfg.pair_rate_hz * length_s);
        const std::uint64_t n = cfg.pair_rate_hz > 0.0 ? count(eng) : 0;
        for (std::uint64_t p = 0; p < n; ++p) {
            const auto id = out.pairs++;
            const double emission = unit(eng) * length_ps;
            const double ls = spdc(eng);
            const double li = conjugate_wavelength(cfg.pump_wavelength_nm, ls);
            PairTruth truth{id, static_cast<double>(start_ps) + emission, {ls, li}, {-1, -1},
                            {false, false}, {0.0, 0.0}, {0.0, 0.0}, {0, 0}};
            const std::array<double, 2> lams{ls, li};
            for (int k = 0; k < 2; ++k) {
                const double lam = lams[k];
                const int channel = unit(eng) < path.route_probability(lam, 0) ? 0 : 1;
                const bool passes = unit(eng) < path.filter_transmission(lam, channel);
                const bool survives = unit(eng) < path.detection_probability(lam, channel);
                const double jitter = gauss(eng) * detectors[channel].jitter_sigma_ps;
                if (!passes) continue;
                truth.channel[k] = channel;
                if (!survives) continue;
                truth.delay_ps[k] = path.fiber_delay(lam, channel);
                truth.jitter_ps[k] = jitter;
                const std::size_t before = out.events.size();
                emit(out, start_ps, emission + truth.delay_ps[k] + jitter, static_cast<std::uint8_t>(channel),
                     Truth::pair, id, &truth.timestamp_ps[k]);
                truth.detected[k] = out.events.size() > before;
            }
            if (cfg.record_truth) out.truth.push_back(truth);
        }
    }
    if (cfg.fluorescence_rate_hz > 0.0) {
        auto eng = window_engine(cfg.seed, index, 1);
        std::poisson_distribution<std::uint64_t> count(cfg.fluorescence_rate_hz * length_s);
        const std::uint64_t n = count(eng);
        for (std::uint64_t p = 0; p < n; ++p) {
            const double emission = unit(eng) * length_ps;
            const double lam = fluor(eng);
            const int channel = unit(eng) < path.route_probability(lam, 0) ? 0 : 1;
            const bool passes = unit(eng) < path.filter_transmission(lam, channel);
            const bool survives = unit(eng) < path.detection_probability(lam, channel);
            const double jitter = gauss(eng) * detectors[channel].jitter_sigma_ps;
            if (passes && survives) {
                emit(out, start_ps, emission + path.fiber_delay(lam, channel) + jitter,
                     static_cast<std::uint8_t>(channel), Truth::fluor, no_pair);
            }
        }
    }
    for (std::uint8_t channel = 0; channel < 2; ++channel) {
        const double rate = detectors[channel].dark_rate_hz;
        if (!(rate > 0.0)) continue;
        auto eng = window_engine(cfg.seed, index, 2 + channel);
        std::poisson_distribution<std::uint64_t> count(rate * length_s);
        const std::uint64_t n = count(eng);
        for (std::uint64_t p = 0; p < n; ++p) {
            emit(out, start_ps, unit(eng) * length_ps, channel, Truth::dark, no_pair);
        }
    }
    return out;
}

/// Runs `make(window_index, start_ps, length_ps)` over consecutive windows covering
/// the duration, in batches of `threads`, and merges the results in window order.
template <typename MakeWindow>
SimulationResult run_windows(double duration_s, double window_s, unsigned threads, MakeWindow make)
{
    SimulationResult result;
    const std::uint64_t total_ps = to_ps(duration_s);
    const std::uint64_t window_ps = std::max<std::uint64_t>(1, to_ps(window_s));
    const std::uint64_t windows = (total_ps + window_ps - 1) / window_ps;
    result.stream.duration_ps = total_ps;
    threads = std::max(1u, threads);

    std::uint64_t pair_base = 0;
    auto absorb = [&](WindowOutput& w) {
        for (auto& e : w.events) {
            if (e.pair_id != no_pair) e.pair_id = static_cast<std::uint32_t>(e.pair_id + pair_base);
        }
        for (auto& t : w.truth) t.pair_id = static_cast<std::uint32_t>(t.pair_id + pair_base);
        result.stream.events.insert(result.stream.events.end(), w.events.begin(), w.events.end());
        result.truth.insert(result.truth.end(), w.truth.begin(), w.truth.end());
        pair_base += w.pairs;
        if (pair_base >= no_pair) throw ConfigError("run exceeds 2^32 - 1 pairs");
    };
    for (std::uint64_t first = 0; first < windows; first += threads) {
        const std::uint64_t batch = std::min<std::uint64_t>(threads, windows - first);
        std::vector<WindowOutput> outputs(batch);
        auto job = [&](std::uint64_t k) {
            const std::uint64_t w = first + k;
            const std::uint64_t start = w * window_ps;
            const std::uint64_t length = std::min(window_ps, total_ps - start);
            outputs[k] = make(w, start, static_cast<double>(length));
        };
        if (batch == 1) {
            job(0);
        } else {
            std::vector<std::jthread> pool;
            for (std::uint64_t k = 0; k < batch; ++k) pool.emplace_back(job, k);
        }
        for (auto& w : outputs) absorb(w);
    }
    result.stream.sort();
    return result;
}

} // namespace sim

/// Monte Carlo time-tag stream of SPDC pairs, fluorescence and dark counts.
///
/// Pairs are a homogeneous Poisson process at pair_rate_hz. Each pair draws its signal
/// wavelength from spdc_spectrum (idler conjugate); each photon independently passes the
/// filters, is routed, survives fibre loss and detector efficiency, and is stamped at
/// emission + fibre delay (if routed into the fibre arm) + Gaussian jitter.
inline SimulationResult simulate(const RunConfig& cfg, const DetectorPair& detectors)
{
    cfg.validate();
    for (const auto& d : detectors) d.validate();
    sim::check_support(cfg, detectors);
    const sim::SpectrumSampler spdc(cfg.spdc_spectrum);
    const sim::SpectrumSampler fluor(cfg.fluorescence_spectrum);
    return sim::run_windows(cfg.duration_s, cfg.window_s, cfg.threads,
                            [&](std::uint64_t w, std::uint64_t start, double length) {
                                return sim::simulate_window(cfg, detectors, spdc, fluor, w, start, length);
                            });
}

/// Analytic expectations for a RunConfig: singles rates and true-coincidence rate.
struct ExpectedRates {
    std::array<double, 2> singles_hz{};
    /// Pairs with one photon tagged on each channel.
    double true_coincidence_hz = 0.0;
};

inline ExpectedRates expected_rates(const RunConfig& cfg, const DetectorPair& detectors)
{
    const sim::OpticalPath path{cfg, detectors};
    ExpectedRates rates;
    if (cfg.pair_rate_hz > 0.0) {
        const sim::SpectrumSampler spdc(cfg.spdc_spectrum);
        const double lp = cfg.pump_wavelength_nm;
        for (int c = 0; c < 2; ++c) {
            rates.singles_hz[c] += cfg.pair_rate_hz * spdc.expectation([&](double ls) {
                return path.tag_probability(ls, c) + path.tag_probability(conjugate_wavelength(lp, ls), c);
            });
        }
        rates.true_coincidence_hz = cfg.pair_rate_hz * spdc.expectation([&](double ls) {
            const double li = conjugate_wavelength(lp, ls);
            return path.tag_probability(ls, 0) * path.tag_probability(li, 1)
                   + path.tag_probability(ls, 1) * path.tag_probability(li, 0);
        });
    }
    if (cfg.fluorescence_rate_hz > 0.0) {
        const sim::SpectrumSampler fluor(cfg.fluorescence_spectrum);
        for (int c = 0; c < 2; ++c) {
            rates.singles_hz[c] += cfg.fluorescence_rate_hz
                                   * fluor.expectation([&](double l) { return path.tag_probability(l, c); });
        }
    }
    for (int c = 0; c < 2; ++c) rates.singles_hz[c] += detectors[c].dark_rate_hz;
    return rates;
}

/// Chaotic (thermal) light split 50/50 onto both detectors.
struct ThermalConfig {
    double duration_s = 1.0;
    /// Total photon rate summed over both channels.
    double mean_rate_hz = 1e4;
    /// Field correlation time tau_c: g1(t) = exp(-|t|/tau_c), g2(t) = 1 + exp(-2|t|/tau_c).
    /// +infinity gives constant intensity (Poisson light).
    double coherence_time_ps = 1e4;
    std::uint64_t seed = 0;
    double window_s = 1.0;
    unsigned threads = 1;
    /// Thinning bound in units of the mean intensity; intensities above it are clipped.
    double intensity_bound = 20.0;

    void validate() const
    {
        if (!(duration_s >= 0.0) || !std::isfinite(duration_s)) throw ConfigError("duration must be >= 0");
        if (!(mean_rate_hz >= 0.0)) throw ConfigError("mean rate must be >= 0");
        if (!(coherence_time_ps > 0.0)) throw ConfigError("coherence time must be positive");
        if (!(window_s > 0.0)) throw ConfigError("generation window must be positive");
        if (!(intensity_bound > 1.0)) throw ConfigError("intensity bound must exceed 1");
    }
};

/// Doubly stochastic Poisson process driven by a complex Ornstein-Uhlenbeck field sampled
/// on steps of coherence_time/20. The field is advanced lazily (exact multi-step AR(1)
/// transition) only at candidate points of a dominating Poisson process, which is then
/// thinned by intensity/bound. Each generation window starts from a fresh stationary field.
inline SimulationResult simulate_thermal(const ThermalConfig& cfg, const DetectorPair& detectors)
{
    cfg.validate();
    for (const auto& d : detectors) d.validate();
    const bool constant = std::isinf(cfg.coherence_time_ps);
    const double step_ps = constant ? 0.0 : cfg.coherence_time_ps / 20.0;
    const double mean_per_ps = cfg.mean_rate_hz * 1e-12;

    auto make = [&](std::uint64_t index, std::uint64_t start, double length_ps) {
        sim::WindowOutput out;
        auto eng = sim::window_engine(cfg.seed, index, 16);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> half_gauss(0.0, std::sqrt(0.5));
        std::normal_distribution<double> gauss(0.0, 1.0);
        auto place = [&](double t) {
            const int channel = unit(eng) < 0.5 ? 0 : 1;
            const double jitter = gauss(eng) * detectors[channel].jitter_sigma_ps;
            sim::emit(out, start, t + jitter, static_cast<std::uint8_t>(channel), Truth::thermal, no_pair);
        };
        if (mean_per_ps > 0.0 && constant) {
            std::exponential_distribution<double> gap(mean_per_ps);
            for (double t = gap(eng); t < length_ps; t += gap(eng)) place(t);
        } else if (mean_per_ps > 0.0) {
            const double bound = cfg.intensity_bound;
            std::exponential_distribution<double> gap(bound * mean_per_ps);
            const double a = std::exp(-step_ps / cfg.coherence_time_ps);
            std::complex<double> field{half_gauss(eng), half_gauss(eng)};
            std::int64_t step = 0;
            for (double t = gap(eng); t < length_ps; t += gap(eng)) {
                const auto k = static_cast<std::int64_t>(t / step_ps);
                if (k != step) {
                    const double decay = std::pow(a, static_cast<double>(k - step));
                    const double spread = std::sqrt(std::max(0.0, 1.0 - decay * decay));
                    field = decay * field + spread * std::complex<double>{half_gauss(eng), half_gauss(eng)};
                    step = k;
                }
                const double intensity = std::min(std::norm(field), bound);
                if (unit(eng) * bound < intensity) place(t);
            }
        }
        for (std::uint8_t channel = 0; channel < 2; ++channel) {
            const double rate = detectors[channel].dark_rate_hz;
            if (!(rate > 0.0)) continue;
            auto dark = sim::window_engine(cfg.seed, index, 2 + channel);
            std::poisson_distribution<std::uint64_t> count(rate * length_ps * 1e-12);
            const std::uint64_t n = count(dark);
            for (std::uint64_t p = 0; p < n; ++p) {
                sim::emit(out, start, unit(dark) * length_ps, channel, Truth::dark, no_pair);
            }
        }
        return out;
    };
    return sim::run_windows(cfg.duration_s, cfg.window_s, cfg.threads, make);
}

} // namespace biphoton
