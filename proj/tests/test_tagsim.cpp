#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "biphoton/coincidence.hpp"
#include "biphoton/presets.hpp"
#include "biphoton/tagsim.hpp"
#include "support.hpp"

using namespace biphoton;

namespace {

SampledSpectrum flat(double lo, double hi, std::size_t n = 64)
{
    auto grid = linear_grid(lo, hi, n);
    return {grid, std::vector<double>(grid.size(), 1.0)};
}

DetectorPair ideal_pair(double jitter = 0.0, double dark = 0.0)
{
    return {ideal_detector("d0", 100.0, 10000.0, jitter, dark), ideal_detector("d1", 100.0, 10000.0, jitter, dark)};
}

/// Pairs only, signal band 1000..1060 around the degenerate point of a 515 nm pump.
RunConfig pair_run(double rate, double duration)
{
    RunConfig cfg;
    cfg.pump_wavelength_nm = 515.0;
    cfg.spdc_spectrum = flat(1000.0, 1062.0);
    cfg.pair_rate_hz = rate;
    cfg.duration_s = duration;
    return cfg;
}

/// Upper 95% point of chi-square with k degrees of freedom (Wilson-Hilferty).
double chi2_upper95(double k)
{
    const double a = 2.0 / (9.0 * k);
    return k * std::pow(1.0 - a + 1.6448536 * std::sqrt(a), 3.0);
}

} // namespace

TEST(Tagsim, ZeroRatesGiveEmptyStream)
{
    RunConfig cfg;
    cfg.duration_s = 10.0;
    const auto r = simulate(cfg, ideal_pair());
    EXPECT_TRUE(r.stream.events.empty());
    EXPECT_EQ(r.stream.duration_ps, 10'000'000'000'000ULL);
}

TEST(Tagsim, ZeroDurationGivesEmptyStream)
{
    auto cfg = pair_run(1e6, 0.0);
    const auto r = simulate(cfg, ideal_pair(0.0, 1e5));
    EXPECT_TRUE(r.stream.events.empty());
}

TEST(Tagsim, DarkCountsArePoisson)
{
    RunConfig cfg;
    cfg.duration_s = 100.0;
    const auto r = simulate(cfg, ideal_pair(0.0, 1000.0));
    const double expected = 1e5;
    for (std::uint8_t c = 0; c < 2; ++c) {
        const auto n = static_cast<double>(r.stream.count(c));
        EXPECT_LT(std::abs(n - expected), 5.0 * std::sqrt(expected)) << "channel " << int(c);
    }
    for (const auto& e : r.stream.events) EXPECT_EQ(e.truth, Truth::dark);

    // Inter-arrival gaps on one channel are exponential: mean and sd both 1 ms.
    std::vector<double> gaps;
    std::uint64_t prev = 0;
    bool first = true;
    for (const auto& e : r.stream.events) {
        if (e.channel != 0) continue;
        if (!first) gaps.push_back(static_cast<double>(e.timestamp_ps - prev) * 1e-12);
        prev = e.timestamp_ps;
        first = false;
    }
    double mean = 0.0;
    for (double g : gaps) mean += g;
    mean /= static_cast<double>(gaps.size());
    double var = 0.0;
    for (double g : gaps) var += (g - mean) * (g - mean);
    const double sd = std::sqrt(var / static_cast<double>(gaps.size() - 1));
    EXPECT_NEAR(mean, 1e-3, 2e-5);
    EXPECT_NEAR(sd / mean, 1.0, 0.02);
}

TEST(Tagsim, IdealPairsLandTogether)
{
    auto cfg = pair_run(1000.0, 20.0);
    cfg.record_truth = true;
    const auto r = simulate(cfg, ideal_pair());
    ASSERT_FALSE(r.truth.empty());

    std::size_t split = 0;
    for (const auto& t : r.truth) {
        ASSERT_TRUE(t.detected[0] && t.detected[1]);
        EXPECT_EQ(t.timestamp_ps[0], t.timestamp_ps[1]);
        if (t.channel[0] != t.channel[1]) ++split;
    }
    const auto n = static_cast<double>(r.truth.size());
    EXPECT_NEAR(static_cast<double>(split) / n, 0.5, 5.0 * std::sqrt(0.25 / n));
    EXPECT_EQ(r.stream.events.size(), 2 * r.truth.size());

    // Pair ids in the stream are unique per pair and each appears exactly twice.
    std::map<std::uint32_t, int> seen;
    for (const auto& e : r.stream.events) ++seen[e.pair_id];
    for (const auto& [id, k] : seen) EXPECT_EQ(k, 2) << id;
}

TEST(Tagsim, CountsMatchAnalyticExpectation)
{
    const auto& fiber = load_fiber_preset("dcf150");
    const DetectorPair det{load_detector_preset("snspd_ir"), load_detector_preset("snspd_ir")};
    auto cfg = pair_run(2e5, 5.0);
    cfg.spdc_spectrum = flat(850.0, 1305.0, 256);
    cfg.fiber_arm = FiberArm{fiber.calibration, 1};
    cfg.fluorescence_rate_hz = 5e4;
    cfg.fluorescence_spectrum = flat(800.0, 1000.0);
    cfg.filters.push_back(SpectralFilter::longpass(900.0, 0));
    cfg.record_truth = true;

    const auto r = simulate(cfg, det);
    const auto e = expected_rates(cfg, det);
    for (std::uint8_t c = 0; c < 2; ++c) {
        const double mu = e.singles_hz[c] * cfg.duration_s;
        EXPECT_LT(std::abs(static_cast<double>(r.stream.count(c)) - mu), 5.0 * std::sqrt(mu))
            << "channel " << int(c);
    }
    std::size_t both = 0;
    for (const auto& t : r.truth) {
        if (t.detected[0] && t.detected[1] && t.channel[0] != t.channel[1]) ++both;
    }
    const double mu = e.true_coincidence_hz * cfg.duration_s;
    EXPECT_LT(std::abs(static_cast<double>(both) - mu), 5.0 * std::sqrt(mu));
}

TEST(Tagsim, SeedDeterminismAndThreadIndependence)
{
    auto cfg = pair_run(5e4, 3.0);
    cfg.window_s = 0.5;
    cfg.seed = 7;
    const auto det = ideal_pair(50.0, 200.0);
    const auto a = simulate(cfg, det);
    const auto b = simulate(cfg, det);
    EXPECT_EQ(encode_tags(a.stream), encode_tags(b.stream));

    cfg.threads = 3;
    const auto c = simulate(cfg, det);
    EXPECT_EQ(encode_tags(a.stream), encode_tags(c.stream));
    ASSERT_EQ(a.stream.events.size(), c.stream.events.size());
    for (std::size_t i = 0; i < a.stream.events.size(); ++i) {
        EXPECT_EQ(a.stream.events[i].pair_id, c.stream.events[i].pair_id);
    }

    cfg.threads = 1;
    cfg.seed = 8;
    const auto d = simulate(cfg, det);
    EXPECT_NE(encode_tags(a.stream), encode_tags(d.stream));
}

TEST(Tagsim, StreamIsSortedAndInsideDuration)
{
    auto cfg = pair_run(1e5, 2.0);
    cfg.window_s = 0.3;
    const auto r = simulate(cfg, ideal_pair(100.0, 1e3));
    EXPECT_TRUE(r.stream.is_sorted());
    for (const auto& e : r.stream.events) {
        EXPECT_LE(e.timestamp_ps, r.stream.duration_ps + 1'000'000);
    }
}

TEST(Tagsim, FiberArmDelayMatchesTruth)
{
    const auto& fiber = load_fiber_preset("dcf150");
    auto cfg = pair_run(2000.0, 10.0);
    cfg.spdc_spectrum = flat(850.0, 1305.0, 128);
    cfg.fiber_arm = FiberArm{fiber.calibration, 1};
    cfg.record_truth = true;
    const auto det = ideal_pair(30.0);
    const auto r = simulate(cfg, det);

    std::size_t checked = 0;
    for (const auto& t : r.truth) {
        for (int k = 0; k < 2; ++k) {
            if (!t.detected[k]) continue;
            const double want = t.channel[k] == 1 ? relative_group_delay(fiber.calibration.model(), t.wavelength_nm[k])
                                                        + fiber.calibration.time_offset_ps()
                                                  : 0.0;
            EXPECT_NEAR(t.delay_ps[k], want, 1e-9);
        }
        if (!(t.detected[0] && t.detected[1]) || t.channel[0] == t.channel[1]) continue;
        const int in_fiber = t.channel[0] == 1 ? 0 : 1;
        const int direct = 1 - in_fiber;
        const double dt = static_cast<double>(t.timestamp_ps[in_fiber]) - static_cast<double>(t.timestamp_ps[direct]);
        const double model = t.delay_ps[in_fiber] + t.jitter_ps[in_fiber] - t.jitter_ps[direct];
        EXPECT_LE(std::abs(dt - model), 1.0);
        ++checked;
    }
    EXPECT_GT(checked, 1000u);
}

TEST(Tagsim, DichroicRoutesByWavelength)
{
    auto cfg = pair_run(5000.0, 2.0);
    cfg.spdc_spectrum = flat(900.0, 1020.0);
    cfg.routing = Routing::dichroic;
    cfg.dichroic_split_nm = 1030.0;
    cfg.dichroic_blue_channel = 1;
    cfg.record_truth = true;
    const auto r = simulate(cfg, ideal_pair());
    ASSERT_FALSE(r.truth.empty());
    for (const auto& t : r.truth) {
        for (int k = 0; k < 2; ++k) EXPECT_EQ(t.channel[k], t.wavelength_nm[k] < 1030.0 ? 1 : 0);
    }
    const auto e = expected_rates(cfg, ideal_pair());
    EXPECT_NEAR(e.true_coincidence_hz, cfg.pair_rate_hz, 1e-9 * cfg.pair_rate_hz);
}

TEST(Tagsim, ChannelFilterBlocksOnlyItsChannel)
{
    auto cfg = pair_run(5000.0, 2.0);
    cfg.spdc_spectrum = flat(900.0, 1020.0);
    cfg.filters.push_back(SpectralFilter::shortpass(1030.0, 1));
    cfg.record_truth = true;
    const auto r = simulate(cfg, ideal_pair());
    std::size_t long_on_0 = 0;
    for (const auto& t : r.truth) {
        for (int k = 0; k < 2; ++k) {
            if (t.wavelength_nm[k] > 1030.0 && t.channel[k] == 1) ADD_FAILURE() << "long photon passed on ch1";
            if (t.wavelength_nm[k] > 1030.0 && t.channel[k] == 0) ++long_on_0;
        }
    }
    EXPECT_GT(long_on_0, 0u);
}

TEST(Tagsim, SupportMismatchIsConfigError)
{
    auto cfg = pair_run(1000.0, 1.0);
    const DetectorPair det{ideal_detector("vis", 400.0, 700.0), ideal_detector("vis2", 400.0, 700.0)};
    try {
        (void)simulate(cfg, det);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("empty overlap"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("vis"), std::string::npos);
    }
}

TEST(Tagsim, InvalidConfigurationsAreRejected)
{
    const auto det = ideal_pair();
    auto bad = pair_run(1000.0, 1.0);
    bad.splitter_ratio = 0.0;
    EXPECT_THROW((void)simulate(bad, det), ConfigError);
    bad = pair_run(1000.0, -1.0);
    EXPECT_THROW((void)simulate(bad, det), ConfigError);
    bad = pair_run(-1.0, 1.0);
    EXPECT_THROW((void)simulate(bad, det), ConfigError);
    bad = pair_run(1000.0, 1.0);
    bad.spdc_spectrum = flat(400.0, 500.0);
    EXPECT_THROW((void)simulate(bad, det), ConfigError);
    bad = pair_run(1000.0, 1.0);
    bad.fluorescence_rate_hz = 10.0;
    EXPECT_THROW((void)simulate(bad, det), ConfigError);
}

TEST(Tagsim, BackgroundOnlyHistogramIsFlat)
{
    // Fluorescence and dark counts carry no time correlation: chi-square against a constant.
    RunConfig cfg;
    cfg.duration_s = 20.0;
    cfg.fluorescence_rate_hz = 4e5;
    cfg.fluorescence_spectrum = flat(800.0, 1000.0);
    cfg.seed = 3;
    const auto r = simulate(cfg, ideal_pair(80.0, 2e4));
    const auto h = histogram(r.stream, 1000, 100'000);
    double mean = 0.0;
    for (auto c : h.counts) mean += static_cast<double>(c);
    mean /= static_cast<double>(h.size());
    ASSERT_GT(mean, 100.0);
    double chi2 = 0.0;
    for (auto c : h.counts) chi2 += (static_cast<double>(c) - mean) * (static_cast<double>(c) - mean) / mean;
    EXPECT_LT(chi2, chi2_upper95(static_cast<double>(h.size() - 1))) << "mean " << mean;
}

TEST(Tagsim, PairOnlyHistogramIsAPeak)
{
    auto cfg = pair_run(2e4, 5.0);
    const double sigma = 50.0;
    const auto r = simulate(cfg, ideal_pair(sigma));
    const auto h = histogram(r.stream, 10, 10'000);
    std::uint64_t inside = 0;
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        total += h.counts[i];
        if (std::abs(h.center_ps(i)) <= 6.0 * sigma * std::sqrt(2.0)) inside += h.counts[i];
    }
    // Accidentals across independent pairs are rare at this rate; the peak holds almost all.
    EXPECT_GT(static_cast<double>(inside), 0.99 * static_cast<double>(total));
}

TEST(Tagsim, SamplerFollowsTheSpectrum)
{
    // Ramp density on [0, 1] nm in 10 cells; positions are uniform inside the chosen cell, so
    // the law's mean is sum(mass_i * midpoint_i) / sum(mass_i), within 1/600 of the ramp's 2/3.
    std::vector<double> d;
    for (int i = 0; i <= 10; ++i) d.push_back(0.1 * i);
    SampledSpectrum ramp(linear_grid(1000.0, 1001.0, 11), d);
    double mass = 0.0;
    double moment = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double m = 0.5 * (d[i] + d[i + 1]) * 0.1;
        mass += m;
        moment += m * (0.1 * i + 0.05);
    }
    const double law_mean = moment / mass;
    EXPECT_NEAR(law_mean, 2.0 / 3.0, 1.0 / 600.0 + 1e-12);

    const sim::SpectrumSampler s(ramp);
    auto eng = sim::window_engine(1, 0, 0);
    const int n = 200000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += s(eng) - 1000.0;
    EXPECT_NEAR(sum / n, law_mean, 5.0 * std::sqrt(1.0 / 18.0 / n));
    EXPECT_NEAR(s.total(), mass, 1e-12);
    EXPECT_NEAR(s.expectation([](double l) { return l - 1000.0; }), law_mean, 1e-9);
}

TEST(Thermal, ZeroDurationIsEmpty)
{
    ThermalConfig cfg;
    cfg.duration_s = 0.0;
    EXPECT_TRUE(simulate_thermal(cfg, ideal_pair()).stream.events.empty());
}

TEST(Thermal, LongRunRateMatchesMean)
{
    ThermalConfig cfg;
    cfg.duration_s = 50.0;
    cfg.mean_rate_hz = 2e4;
    cfg.coherence_time_ps = 1e4;
    cfg.seed = 11;
    const auto r = simulate_thermal(cfg, ideal_pair());
    const double mu = cfg.mean_rate_hz * cfg.duration_s;
    // Bunching inflates the count variance by about 1 + rate * tau_c, negligible here.
    EXPECT_LT(std::abs(static_cast<double>(r.stream.events.size()) - mu), 5.0 * std::sqrt(mu));
    const double c0 = static_cast<double>(r.stream.count(0));
    EXPECT_NEAR(c0 / static_cast<double>(r.stream.events.size()), 0.5, 0.01);
}

TEST(Thermal, BunchingPeakAndPoissonLimit)
{
    ThermalConfig cfg;
    cfg.duration_s = 20.0;
    cfg.mean_rate_hz = 2e5;
    cfg.coherence_time_ps = 1e4;
    cfg.seed = 5;
    auto ratio = [](const CoincidenceHistogram& h) {
        double centre = 0.0;
        double side = 0.0;
        int nc = 0;
        int ns = 0;
        for (std::size_t i = 0; i < h.size(); ++i) {
            const double c = std::abs(h.center_ps(i));
            if (c <= 1000.0) {
                centre += static_cast<double>(h.counts[i]);
                ++nc;
            } else if (c >= 60'000.0) {
                side += static_cast<double>(h.counts[i]);
                ++ns;
            }
        }
        return (centre / nc) / (side / ns);
    };
    const auto bunched = histogram(simulate_thermal(cfg, ideal_pair()).stream, 1000, 100'000);
    // g2 averaged over |t| <= 1.5 ns with tau_c = 10 ns: 1 + (tau_c / 3 ns)(1 - exp(-0.3)) = 1.864.
    const double want = 1.0 + (1e4 / 3000.0) * (1.0 - std::exp(-0.3));
    EXPECT_NEAR(ratio(bunched), want, 0.15);

    cfg.coherence_time_ps = std::numeric_limits<double>::infinity();
    const auto poisson = histogram(simulate_thermal(cfg, ideal_pair()).stream, 1000, 100'000);
    EXPECT_NEAR(ratio(poisson), 1.0, 0.08);
}

TEST(Thermal, Deterministic)
{
    ThermalConfig cfg;
    cfg.duration_s = 2.0;
    cfg.window_s = 0.5;
    cfg.mean_rate_hz = 1e4;
    cfg.seed = 99;
    const auto a = simulate_thermal(cfg, ideal_pair(20.0, 10.0));
    cfg.threads = 4;
    const auto b = simulate_thermal(cfg, ideal_pair(20.0, 10.0));
    EXPECT_EQ(encode_tags(a.stream), encode_tags(b.stream));
}
