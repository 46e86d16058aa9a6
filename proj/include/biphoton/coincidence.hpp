#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "biphoton/error.hpp"
#include "biphoton/timetag.hpp"

namespace biphoton {

/// Cross-correlation of channel 1 against channel 0, binned in dt = t1 + shift - t0.
///
/// Bin k (k = -m..m, m = floor(window / bin_width)) is centred at k * bin_width and covers
/// [k b - b/2, k b + b/2); an event exactly on an edge falls in the upper bin, i.e. the
/// index is floor((dt + b/2) / b). Odd bin widths put no integer dt on an edge.
struct CoincidenceHistogram {
    std::int64_t bin_width_ps = 50;
    std::int64_t window_ps = 50'000;
    std::vector<std::uint64_t> counts;
    double acquisition_time_s = 0.0;
    std::array<double, 2> channel_rates_hz{};
    /// Constant added to every channel-1 timestamp before binning.
    std::int64_t ch1_shift_ps = 0;

    [[nodiscard]] std::int64_t half_bins() const noexcept { return window_ps / bin_width_ps; }
    [[nodiscard]] std::size_t size() const noexcept { return counts.size(); }
    [[nodiscard]] double center_ps(std::size_t i) const noexcept
    {
        return static_cast<double>((static_cast<std::int64_t>(i) - half_bins()) * bin_width_ps);
    }
    [[nodiscard]] std::uint64_t total() const noexcept
    {
        std::uint64_t s = 0;
        for (auto c : counts) s += c;
        return s;
    }

    friend bool operator==(const CoincidenceHistogram&, const CoincidenceHistogram&) = default;
};

namespace detail {

/// floor(a / b) for b > 0.
inline std::int64_t floor_div(std::int64_t a, std::int64_t b)
{
    const std::int64_t q = a / b;
    return (a % b != 0 && a < 0) ? q - 1 : q;
}

/// Bin of dt, or -1 when it is outside the histogram: floor((2 dt + b) / 2b) + m.
inline std::int64_t bin_of(std::int64_t dt, std::int64_t b, std::int64_t m)
{
    const std::int64_t k = floor_div(2 * dt + b, 2 * b);
    return (k < -m || k > m) ? -1 : k + m;
}

} // namespace detail

/// Two-pointer sweep histogram. For each channel-0 event every channel-1 event in the
/// half-open dt range [-m b - b/2, m b + b/2) is binned. `threads` shards the channel-0
/// list; partial counts are summed, so the result does not depend on the shard count.
inline CoincidenceHistogram histogram(const TimeTagStream& stream, std::int64_t bin_width_ps,
                                      std::int64_t window_ps, std::int64_t ch1_shift_ps = 0,
                                      unsigned threads = 1)
{
    if (bin_width_ps <= 0) throw ConfigError("bin width must be positive");
    if (window_ps < bin_width_ps) throw ConfigError("window must be at least one bin width");
    if (!stream.is_sorted()) throw DomainError("time-tag stream is not sorted by timestamp");

    CoincidenceHistogram h;
    h.bin_width_ps = bin_width_ps;
    h.window_ps = window_ps;
    h.ch1_shift_ps = ch1_shift_ps;
    const std::int64_t m = h.half_bins();
    h.counts.assign(static_cast<std::size_t>(2 * m + 1), 0);
    h.acquisition_time_s = stream.duration_s();

    std::vector<std::int64_t> t0;
    std::vector<std::int64_t> t1;
    for (const auto& e : stream.events) {
        const auto t = static_cast<std::int64_t>(e.timestamp_ps);
        if (e.channel == 0) {
            t0.push_back(t);
        } else if (e.channel == 1) {
            t1.push_back(t + ch1_shift_ps);
        } else {
            throw DomainError("channel " + std::to_string(e.channel) + " is not 0 or 1");
        }
    }
    if (h.acquisition_time_s > 0.0) {
        h.channel_rates_hz = {static_cast<double>(t0.size()) / h.acquisition_time_s,
                              static_cast<double>(t1.size()) / h.acquisition_time_s};
    }

    // dt in [lo, hi): smallest dt with bin 0 is ceil(-m b - b/2), largest with bin 2m is below m b + b/2.
    const std::int64_t lo = -detail::floor_div(m * 2 * bin_width_ps + bin_width_ps, 2);
    const std::int64_t hi = lo + (2 * m + 1) * bin_width_ps;

    auto sweep = [&](std::size_t begin, std::size_t end, std::vector<std::uint64_t>& counts) {
        if (begin >= end) return;
        auto first = std::lower_bound(t1.begin(), t1.end(), t0[begin] + lo);
        for (std::size_t i = begin; i < end; ++i) {
            const std::int64_t start = t0[i] + lo;
            while (first != t1.end() && *first < start) ++first;
            for (auto it = first; it != t1.end() && *it < t0[i] + hi; ++it) {
                const std::int64_t k = detail::bin_of(*it - t0[i], bin_width_ps, m);
                if (k >= 0) ++counts[static_cast<std::size_t>(k)];
            }
        }
    };

    const std::size_t shards = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, t0.size()));
    if (shards == 1) {
        sweep(0, t0.size(), h.counts);
        return h;
    }
    std::vector<std::vector<std::uint64_t>> partial(shards, std::vector<std::uint64_t>(h.counts.size(), 0));
    {
        std::vector<std::jthread> pool;
        for (std::size_t s = 0; s < shards; ++s) {
            pool.emplace_back([&, s] {
                sweep(t0.size() * s / shards, t0.size() * (s + 1) / shards, partial[s]);
            });
        }
    }
    for (const auto& p : partial) {
        for (std::size_t k = 0; k < p.size(); ++k) h.counts[k] += p[k];
    }
    return h;
}

/// How the flat accidental level is estimated.
enum class AccidentalsMode {
    /// Mean of bins farther than 3 * peak_halfwidth from the peak centre.
    sidebands,
    /// Mean of the peak-region bins of a second histogram with channel 1 shifted away.
    shifted_window,
};

struct CarOptions {
    double peak_halfwidth_ps = 0.0;
    double peak_center_ps = 0.0;
    AccidentalsMode mode = AccidentalsMode::sidebands;
};

struct CarResult {
    /// +inf when the accidental level is zero and the peak is not; NaN when both are zero.
    double car = 0.0;
    bool car_infinite = false;
    bool car_undefined = false;
    double pair_rate_hz = 0.0;
    double pair_rate_sigma_hz = 0.0;
    double accidentals_per_bin = 0.0;
    std::uint64_t peak_counts = 0;
    std::uint64_t peak_max = 0;
    std::size_t peak_bins = 0;
    std::size_t background_bins = 0;
};

/// CAR and true-coincidence rate of a histogram:
///
///     acc   = mean background-bin count
///     rate  = (sum(peak) - acc * N_peak) / T
///     sigma = sqrt(sum(peak) + N_peak^2 acc / N_background) / T
///     CAR   = max(peak) / acc
///
/// `shifted` supplies the background bins in AccidentalsMode::shifted_window.
inline CarResult car_and_rate(const CoincidenceHistogram& h, const CarOptions& options,
                              const CoincidenceHistogram* shifted = nullptr)
{
    const double hw = options.peak_halfwidth_ps;
    if (!(hw >= 0.0)) throw ConfigError("peak half-width must be >= 0");
    if (!(h.acquisition_time_s > 0.0)) throw ConfigError("histogram acquisition time must be positive");
    if (h.counts.empty()) throw ConfigError("histogram has no bins");

    CarResult out;
    auto in_peak = [&](double c) { return std::abs(c - options.peak_center_ps) <= hw; };
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (in_peak(h.center_ps(i))) {
            out.peak_counts += h.counts[i];
            out.peak_max = std::max(out.peak_max, h.counts[i]);
            ++out.peak_bins;
        }
    }
    if (out.peak_bins == 0) throw ConfigError("peak half-width selects no bins");

    std::uint64_t background = 0;
    if (options.mode == AccidentalsMode::sidebands) {
        if (static_cast<double>(h.window_ps) < 6.0 * hw) {
            std::ostringstream msg;
            msg << "window +-" << h.window_ps << " ps is narrower than 6 x peak half-width (" << hw
                << " ps); no sidebands for the accidental estimate";
            throw ConfigError(msg.str());
        }
        for (std::size_t i = 0; i < h.size(); ++i) {
            if (std::abs(h.center_ps(i) - options.peak_center_ps) > 3.0 * hw) {
                background += h.counts[i];
                ++out.background_bins;
            }
        }
    } else {
        if (shifted == nullptr) throw ConfigError("shifted-window accidentals need a second histogram");
        if (shifted->bin_width_ps != h.bin_width_ps) {
            throw ConfigError("shifted-window histogram must use the same bin width");
        }
        for (std::size_t i = 0; i < shifted->size(); ++i) {
            if (in_peak(shifted->center_ps(i))) {
                background += shifted->counts[i];
                ++out.background_bins;
            }
        }
    }
    if (out.background_bins == 0) throw ConfigError("no background bins for the accidental estimate");

    const double T = h.acquisition_time_s;
    const auto n_peak = static_cast<double>(out.peak_bins);
    const auto n_bg = static_cast<double>(out.background_bins);
    out.accidentals_per_bin = static_cast<double>(background) / n_bg;
    out.pair_rate_hz = (static_cast<double>(out.peak_counts) - out.accidentals_per_bin * n_peak) / T;
    out.pair_rate_sigma_hz =
        std::sqrt(static_cast<double>(out.peak_counts) + n_peak * n_peak * out.accidentals_per_bin / n_bg) / T;
    if (out.accidentals_per_bin > 0.0) {
        out.car = static_cast<double>(out.peak_max) / out.accidentals_per_bin;
    } else if (out.peak_max > 0) {
        out.car = std::numeric_limits<double>::infinity();
        out.car_infinite = true;
    } else {
        out.car = std::numeric_limits<double>::quiet_NaN();
        out.car_undefined = true;
    }
    return out;
}

/// CSV export:
///
///     # biphoton histogram
///     # bin_width_ps=<i64>
///     # window_ps=<i64>
///     # acquisition_time_s=<%.17g>
///     # channel_rates_hz=<%.17g>,<%.17g>
///     # ch1_shift_ps=<i64>
///     bin_center_ps,counts
///     -50000,12
inline std::string histogram_to_csv(const CoincidenceHistogram& h)
{
    char buf[128];
    std::string out = "# biphoton histogram\n";
    out += "# bin_width_ps=" + std::to_string(h.bin_width_ps) + "\n";
    out += "# window_ps=" + std::to_string(h.window_ps) + "\n";
    std::snprintf(buf, sizeof buf, "# acquisition_time_s=%.17g\n", h.acquisition_time_s);
    out += buf;
    std::snprintf(buf, sizeof buf, "# channel_rates_hz=%.17g,%.17g\n", h.channel_rates_hz[0],
                  h.channel_rates_hz[1]);
    out += buf;
    out += "# ch1_shift_ps=" + std::to_string(h.ch1_shift_ps) + "\n";
    out += "bin_center_ps,counts\n";
    for (std::size_t i = 0; i < h.size(); ++i) {
        out += std::to_string((static_cast<std::int64_t>(i) - h.half_bins()) * h.bin_width_ps);
        out += ',';
        out += std::to_string(h.counts[i]);
        out += '\n';
    }
    return out;
}

inline CoincidenceHistogram histogram_from_csv(const std::string& text, const std::string& source = "histogram")
{
    CoincidenceHistogram h;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool saw_bin = false;
    bool saw_window = false;
    std::vector<std::int64_t> centers;
    auto fail = [&](const std::string& what) {
        throw FormatError(source + ":" + std::to_string(line_no) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            if (line[0] == '#') {
                const auto eq = line.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = line.substr(2, eq - 2);
                const std::string value = line.substr(eq + 1);
                if (key == "bin_width_ps") {
                    h.bin_width_ps = std::stoll(value);
                    saw_bin = true;
                } else if (key == "window_ps") {
                    h.window_ps = std::stoll(value);
                    saw_window = true;
                } else if (key == "acquisition_time_s") {
                    h.acquisition_time_s = std::stod(value);
                } else if (key == "channel_rates_hz") {
                    const auto comma = value.find(',');
                    if (comma == std::string::npos) fail("malformed channel_rates_hz");
                    h.channel_rates_hz = {std::stod(value.substr(0, comma)), std::stod(value.substr(comma + 1))};
                } else if (key == "ch1_shift_ps") {
                    h.ch1_shift_ps = std::stoll(value);
                }
                continue;
            }
            if (line.rfind("bin_center_ps", 0) == 0) continue;
            const auto comma = line.find(',');
            if (comma == std::string::npos) fail("expected 'bin_center_ps,counts'");
            centers.push_back(std::stoll(line.substr(0, comma)));
            const std::string count = line.substr(comma + 1);
            if (!count.empty() && count[0] == '-') fail("negative count");
            h.counts.push_back(std::stoull(count));
        } catch (const std::logic_error&) {
            fail("malformed number");
        }
    }
    if (!saw_bin || !saw_window) throw FormatError(source + ": missing bin_width_ps or window_ps header");
    if (h.bin_width_ps <= 0 || h.window_ps < h.bin_width_ps) throw FormatError(source + ": invalid binning header");
    if (h.counts.size() != static_cast<std::size_t>(2 * h.half_bins() + 1)) {
        throw FormatError(source + ": bin count does not match bin_width_ps and window_ps");
    }
    for (std::size_t i = 0; i < centers.size(); ++i) {
        if (centers[i] != (static_cast<std::int64_t>(i) - h.half_bins()) * h.bin_width_ps) {
            throw FormatError(source + ": bin centre " + std::to_string(centers[i]) + " is off the grid");
        }
    }
    return h;
}

} // namespace biphoton
