#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biphoton/atomic_file.hpp"
#include "biphoton/coincidence.hpp"
#include "biphoton/error.hpp"
#include "biphoton/hash.hpp"
#include "biphoton/pipeline.hpp"
#include "biphoton/presets.hpp"
#include "biphoton/reconstruct.hpp"
#include "biphoton/serialize.hpp"
#include "biphoton/spdc_model.hpp"
#include "biphoton/svg_plot.hpp"
#include "biphoton/tagsim.hpp"
#include "biphoton/timetag.hpp"

namespace biphoton::cli {

inline constexpr const char* version = "0.1.0";

/// Bad flag values detected after CLI parsing; reported like parse errors (exit 2).
class UsageError : public Error {
public:
    using Error::Error;
};

/// "<number><unit>" with unit in {fs, ps, ns, us, ms, s, min}; a bare number uses `default_unit`.
/// Returns picoseconds.
inline double parse_time_ps(const std::string& text, const std::string& default_unit = "ps")
{
    static const std::map<std::string, double> scale{{"fs", 1e-3}, {"ps", 1.0},  {"ns", 1e3},
                                                     {"us", 1e6},  {"ms", 1e9},  {"s", 1e12},
                                                     {"min", 60e12}};
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &used);
    } catch (const std::logic_error&) {
        throw UsageError("cannot parse time '" + text + "'");
    }
    std::string unit = text.substr(used);
    unit.erase(std::remove_if(unit.begin(), unit.end(), [](unsigned char c) { return std::isspace(c); }),
               unit.end());
    if (unit.empty()) unit = default_unit;
    auto it = scale.find(unit);
    if (it == scale.end()) throw UsageError("unknown time unit '" + unit + "' in '" + text + "'");
    if (!std::isfinite(value)) throw UsageError("time '" + text + "' is not finite");
    return value * it->second;
}

inline std::int64_t parse_time_ps_integer(const std::string& text)
{
    const double ps = parse_time_ps(text);
    const double rounded = std::round(ps);
    if (std::abs(ps - rounded) > 1e-6 * std::max(1.0, std::abs(ps))) {
        throw UsageError("'" + text + "' is not a whole number of picoseconds");
    }
    return static_cast<std::int64_t>(rounded);
}

/// "lo:hi" in nm.
inline WavelengthRange parse_range(const std::string& text)
{
    const auto colon = text.find(':');
    try {
        if (colon == std::string::npos) throw std::invalid_argument(text);
        const WavelengthRange r{std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
        if (!(r.min_nm < r.max_nm)) throw UsageError("range '" + text + "' must satisfy lo < hi");
        return r;
    } catch (const std::logic_error&) {
        throw UsageError("expected a range lo:hi, got '" + text + "'");
    }
}

/// "longpass:1000", "shortpass:1400", "bandpass:1375:50", each optionally suffixed "@<channel>".
inline SpectralFilter parse_filter(const std::string& text)
{
    std::string body = text;
    int channel = -1;
    if (const auto at = body.find('@'); at != std::string::npos) {
        const std::string ch = body.substr(at + 1);
        if (ch != "0" && ch != "1") throw UsageError("filter channel must be 0 or 1 in '" + text + "'");
        channel = ch == "0" ? 0 : 1;
        body = body.substr(0, at);
    }
    std::vector<std::string> parts;
    std::stringstream ss(body);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    try {
        if (parts.size() == 2 && parts[0] == "longpass") return SpectralFilter::longpass(std::stod(parts[1]), channel);
        if (parts.size() == 2 && parts[0] == "shortpass") return SpectralFilter::shortpass(std::stod(parts[1]), channel);
        if (parts.size() == 3 && parts[0] == "bandpass") {
            return SpectralFilter::bandpass(std::stod(parts[1]), std::stod(parts[2]), channel);
        }
    } catch (const std::logic_error&) {
    }
    throw UsageError("cannot parse filter '" + text + "'");
}

/// Run record written next to every output: resolved configuration, input and output hashes.
/// Holds no timestamps or absolute paths, so identical runs give identical manifests.
class Manifest {
public:
    explicit Manifest(std::string subcommand) : subcommand_(std::move(subcommand)) {}

    json config = json::object();

    void add_input(const std::string& label, const std::string& content)
    {
        inputs_.push_back({{"name", label}, {"git_blob", git_blob_hash(content)}, {"bytes", content.size()}});
    }

    void add_output(const std::string& label, const std::string& content)
    {
        outputs_.push_back({{"name", label}, {"git_blob", git_blob_hash(content)}, {"bytes", content.size()}});
    }

    [[nodiscard]] std::string dump() const
    {
        json doc{{"tool", "biphoton"},
                 {"version", version},
                 {"subcommand", subcommand_},
                 {"config", config},
                 {"config_hash", config_hash(config)},
                 {"inputs", inputs_},
                 {"outputs", outputs_}};
        return doc.dump(2) + "\n";
    }

private:
    std::string subcommand_;
    json inputs_ = json::array();
    json outputs_ = json::array();
};

struct Context {
    std::ostream& out;
    std::ostream& err;
    std::filesystem::path preset_dir;
    unsigned threads = 1;
};

namespace detail {

inline std::filesystem::path sidecar_path(const std::filesystem::path& out, const std::string& suffix)
{
    std::filesystem::path p = out;
    p += suffix;
    return p;
}

inline std::filesystem::path json_sidecar(const std::filesystem::path& out)
{
    std::filesystem::path p = out;
    p.replace_extension(".json");
    if (p == out) p += ".json";
    return p;
}

inline void emit(Manifest& m, const std::filesystem::path& path, const std::string& content)
{
    write_file_atomic(path, content);
    m.add_output(path.filename().string(), content);
}

inline void finish(const Manifest& m, const std::filesystem::path& manifest_path)
{
    write_file_atomic(manifest_path, m.dump());
}

inline std::string read_input(Manifest& m, const std::filesystem::path& path)
{
    std::string content;
    try {
        content = read_file(path);
    } catch (const Error&) {
        throw Error("cannot open input '" + path.string() + "'");
    }
    m.add_input(path.filename().string(), content);
    return content;
}

inline void record_preset(Manifest& m, const std::string& name_or_path, const std::filesystem::path& dir)
{
    const auto path = resolve_preset(name_or_path, dir);
    m.add_input("preset:" + path.filename().string(), read_file(path));
}

inline void record_library(Manifest& m, const std::filesystem::path& dir)
{
    m.add_input("preset:materials.yaml", read_file(dir / "materials.yaml"));
    m.add_input("preset:stacks.yaml", read_file(dir / "stacks.yaml"));
}

inline bool is_csv(const std::filesystem::path& p)
{
    return p.extension() == ".csv";
}

inline TimeTagStream load_tags(Manifest& m, const std::filesystem::path& path)
{
    const std::string data = read_input(m, path);
    return is_csv(path) ? tags_from_csv(data, path.string()) : decode_tags(data, path.string());
}

inline std::string encode_stream(const TimeTagStream& s, const std::filesystem::path& path)
{
    return is_csv(path) ? tags_to_csv(s) : encode_tags(s);
}

inline std::array<DetectorModel, 2> load_detectors(Manifest& m, const Context& ctx, const std::string& d0,
                                                   const std::string& d1)
{
    record_preset(m, d0, ctx.preset_dir);
    record_preset(m, d1, ctx.preset_dir);
    std::array<DetectorModel, 2> dets{load_detector_preset(d0, ctx.preset_dir),
                                      load_detector_preset(d1, ctx.preset_dir)};
    m.config["detectors"] = {to_json(dets[0]), to_json(dets[1])};
    return dets;
}

inline CoincidenceHistogram load_histogram(Manifest& m, const std::filesystem::path& path)
{
    return histogram_from_csv(read_input(m, path), path.string());
}

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

// ---------------------------------------------------------------- materials

struct MaterialsArgs {
    std::string file;
    std::string name;
    std::optional<double> wavelength;
    std::string range;
    std::size_t points = 601;
    std::string out;
};

inline int cmd_materials(const Context& ctx, const MaterialsArgs& a)
{
    const std::filesystem::path file = a.file.empty() ? ctx.preset_dir / "materials.yaml" : std::filesystem::path(a.file);
    Manifest m("materials");
    const std::string text = detail::read_input(m, file);
    const auto lib = parse_materials(text, file.string());
    if (a.name.empty()) {
        for (const auto& [name, model] : lib.all()) {
            ctx.out << name << " " << to_string(model.form()) << " " << model.valid_range().min_nm << " "
                    << model.valid_range().max_nm << "\n";
        }
        return 0;
    }
    const auto& model = lib.at(a.name);
    if (a.wavelength) {
        ctx.out << detail::format_double(model.index(*a.wavelength)) << "\n";
        return 0;
    }
    const WavelengthRange r = a.range.empty() ? model.valid_range() : parse_range(a.range);
    std::string csv = "wavelength_nm,n\n";
    for (double l : linear_grid(r.min_nm, r.max_nm, a.points)) {
        csv += detail::format_double(l) + "," + detail::format_double(model.index(l)) + "\n";
    }
    if (a.out.empty()) {
        ctx.out << csv;
        return 0;
    }
    m.config = {{"material", to_json(model)}, {"range_nm", to_json(r)}, {"points", a.points}};
    detail::emit(m, a.out, csv);
    detail::finish(m, detail::sidecar_path(a.out, ".manifest.json"));
    return 0;
}

// ---------------------------------------------------------------- stack

struct StackArgs {
    std::string stack;
    std::string range = "900:1500";
    std::size_t points = 1001;
    std::string from = "superstrate";
    std::string out;
};

inline int cmd_stack(const Context& ctx, const StackArgs& a)
{
    Manifest m("stack");
    detail::record_library(m, ctx.preset_dir);
    const auto lib = PresetLibrary::load(ctx.preset_dir);
    const auto& stack = lib.stack(a.stack);
    if (a.from != "superstrate" && a.from != "substrate") throw UsageError("--from must be superstrate or substrate");
    const Incidence from = a.from == "superstrate" ? Incidence::superstrate : Incidence::substrate;
    const WavelengthRange r = parse_range(a.range);
    std::string csv = "wavelength_nm,R,T,F\n";
    for (double l : linear_grid(r.min_nm, r.max_nm, a.points)) {
        const auto resp = stack_response(stack, l, from);
        const double f = internal_intensity_factor(stack, stack.nonlinear_layer_index(), l, from);
        csv += detail::format_double(l) + "," + detail::format_double(resp.R) + "," + detail::format_double(resp.T)
               + "," + detail::format_double(f) + "\n";
    }
    if (a.out.empty()) {
        ctx.out << csv;
        return 0;
    }
    m.config = {{"stack_name", a.stack}, {"stack", to_json(stack)}, {"range_nm", to_json(r)},
                {"points", a.points}, {"incidence", a.from}};
    detail::emit(m, a.out, csv);
    detail::finish(m, detail::sidecar_path(a.out, ".manifest.json"));
    return 0;
}

// ---------------------------------------------------------------- spectrum

struct SourceArgs {
    std::string preset;
    std::optional<double> pump;
    std::string window;
    std::optional<std::size_t> points;
    std::string enhancement;
    bool closure = false;
};

inline SourcePreset load_source(Manifest& m, const Context& ctx, const SourceArgs& a)
{
    detail::record_preset(m, a.preset, ctx.preset_dir);
    detail::record_library(m, resolve_preset(a.preset, ctx.preset_dir).parent_path());
    SourcePreset src = load_source_preset(a.preset, ctx.preset_dir);
    if (a.pump) src.spdc.pump_wavelength_nm = *a.pump;
    if (!a.window.empty()) src.spdc.spectral_window = parse_range(a.window);
    if (a.points) src.spdc.grid_points = *a.points;
    if (!a.enhancement.empty()) src.spdc.enhancement = parse_enhancement_side(a.enhancement);
    if (a.closure) {
        src.spdc.spectral_window = conjugate_closure(src.spdc.spectral_window, src.spdc.pump_wavelength_nm);
    }
    src.spdc.validate();
    m.config["source"] = {{"preset", src.name}, {"spdc", to_json(src.spdc)}, {"pair_rate_hz", src.pair_rate_hz},
                          {"fluorescence", to_json(src.fluorescence)}};
    return src;
}

inline std::string spectrum_csv(const SampledSpectrum& s, const json& config,
                                const std::vector<std::string>& warnings = {})
{
    std::vector<std::pair<std::string, std::string>> meta{{"config_hash", config_hash(config)}};
    for (const auto& w : warnings) meta.emplace_back("warning", w);
    return spectrum_to_csv(s, meta);
}

struct SpectrumArgs {
    SourceArgs source;
    bool marginal = false;
    std::string out;
};

inline int cmd_spectrum(const Context& ctx, const SpectrumArgs& a)
{
    Manifest m("spectrum");
    const auto src = load_source(m, ctx, a.source);
    const auto result = spdc_spectral_density(src.spdc);
    for (const auto& w : result.warnings) ctx.err << "warning: " << w << "\n";
    m.config["marginal"] = a.marginal;
    const SampledSpectrum s =
        a.marginal ? single_photon_marginal(result.spectrum, src.spdc.pump_wavelength_nm) : result.spectrum;
    detail::emit(m, a.out, spectrum_csv(s, m.config, result.warnings));
    detail::finish(m, detail::sidecar_path(a.out, ".manifest.json"));
    return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    SourceArgs source;
    std::string spectrum_file;
    std::string det0 = "snspd_vis";
    std::string det1 = "snspd_ir";
    std::string fiber = "none";
    std::string duration = "1s";
    std::optional<double> pair_rate;
    std::optional<double> pairs;
    std::uint64_t seed = 0;
    std::string routing = "fifty_fifty";
    double split_nm = 1030.0;
    std::uint8_t blue_channel = 1;
    double splitter_ratio = 0.5;
    std::vector<std::string> filters;
    bool no_fluorescence = false;
    std::string out;
};

inline int cmd_simulate(const Context& ctx, const SimulateArgs& a)
{
    Manifest m("simulate");
    const auto src = load_source(m, ctx, a.source);
    const auto dets = detail::load_detectors(m, ctx, a.det0, a.det1);

    RunConfig run;
    run.pump_wavelength_nm = src.spdc.pump_wavelength_nm;
    if (a.spectrum_file.empty()) {
        const auto result = spdc_spectral_density(src.spdc);
        for (const auto& w : result.warnings) ctx.err << "warning: " << w << "\n";
        run.spdc_spectrum = result.spectrum;
    } else {
        run.spdc_spectrum = spectrum_from_csv(detail::read_input(m, a.spectrum_file), a.spectrum_file).spectrum;
    }
    if (!a.no_fluorescence) add_fluorescence(run, src);
    if (a.fiber != "none") {
        detail::record_preset(m, a.fiber, ctx.preset_dir);
        const auto fp = load_fiber_preset(a.fiber, ctx.preset_dir);
        run.fiber_arm = FiberArm{fp.calibration, fp.channel};
        m.config["fiber"] = {{"preset", fp.name}, {"calibration", to_json(fp.calibration)}, {"channel", fp.channel}};
    }
    if (a.routing == "fifty_fifty") {
        run.routing = Routing::fifty_fifty;
    } else if (a.routing == "dichroic") {
        run.routing = Routing::dichroic;
    } else {
        throw UsageError("--routing must be fifty_fifty or dichroic");
    }
    run.dichroic_split_nm = a.split_nm;
    run.dichroic_blue_channel = a.blue_channel;
    run.splitter_ratio = a.splitter_ratio;
    for (const auto& f : a.filters) run.filters.push_back(parse_filter(f));
    run.duration_s = parse_time_ps(a.duration, "s") * 1e-12;
    run.seed = a.seed;
    run.threads = ctx.threads;
    if (a.pairs && a.pair_rate) throw UsageError("--pairs and --pair-rate are mutually exclusive");
    if (a.pairs) {
        run.pair_rate_hz = 1.0;
        const double per_pair = expected_rates(run, dets).true_coincidence_hz;
        if (!(per_pair > 0.0) || !(run.duration_s > 0.0)) throw ConfigError("configuration yields no coincidences");
        run.pair_rate_hz = *a.pairs / (per_pair * run.duration_s);
    } else {
        run.pair_rate_hz = a.pair_rate ? *a.pair_rate : src.pair_rate_hz;
    }
    const auto expected = expected_rates(run, dets);
    m.config["run"] = {{"duration_s", run.duration_s},
                       {"pair_rate_hz", run.pair_rate_hz},
                       {"fluorescence_rate_hz", run.fluorescence_rate_hz},
                       {"routing", a.routing},
                       {"dichroic_split_nm", a.split_nm},
                       {"dichroic_blue_channel", a.blue_channel},
                       {"splitter_ratio", a.splitter_ratio},
                       {"filters", a.filters},
                       {"window_s", run.window_s}};
    m.config["seed"] = a.seed;
    m.config["expected"] = {{"singles_hz", {expected.singles_hz[0], expected.singles_hz[1]}},
                            {"true_coincidence_hz", expected.true_coincidence_hz}};
    const auto sim = simulate(run, dets);
    detail::emit(m, a.out, detail::encode_stream(sim.stream, a.out));
    detail::finish(m, detail::sidecar_path(a.out, ".manifest.json"));
    ctx.out << "events " << sim.stream.events.size() << " channel0 " << sim.stream.count(0) << " channel1 "
            << sim.stream.count(1) << "\n";
    return 0;
}

// ---------------------------------------------------------------- thermal

struct ThermalArgs {
    double rate = 1e4;
    std::string coherence = "10ns";
    std::string duration = "1s";
    std::string det0 = "snspd_vis";
    std::string det1 = "snspd_ir";
    std::uint64_t seed = 0;
    std::string out;
};

inline int cmd_thermal(const Context& ctx, const ThermalArgs& a)
{
    Manifest m("thermal");
    const auto dets = detail::load_detectors(m, ctx, a.det0, a.det1);
    ThermalConfig cfg;
    cfg.mean_rate_hz = a.rate;
    cfg.coherence_time_ps = a.coherence == "inf" ? std::numeric_limits<double>::infinity()
                                                 : parse_time_ps(a.coherence);
    cfg.duration_s = parse_time_ps(a.duration, "s") * 1e-12;
    cfg.seed = a.seed;
    cfg.threads = ctx.threads;
    m.config["thermal"] = {{"mean_rate_hz", cfg.mean_rate_hz},
                           {"coherence_time_ps", finite_or_null(cfg.coherence_time_ps)},
                           {"duration_s", cfg.duration_s},
                           {"window_s", cfg.window_s},
                           {"intensity_bound", cfg.intensity_bound}};
    m.config["seed"] = a.seed;
    const auto sim = simulate_thermal(cfg, dets);
    detail::emit(m, a.out, detail::encode_stream(sim.stream, a.out));
    detail::finish(m, detail::sidecar_path(a.out, ".manifest.json"));
    ctx.out << "events " << sim.stream.events.size() << "\n";
    return 0;
}

// ---------------------------------------------------------------- histogram

struct HistogramArgs {
    std::string in;
    std::string bin = "50ps";
    std::string window = "50ns";
    std::string shift = "0";
    std::string out;
};

inline int cmd_histogram(const Context& ctx, const HistogramArgs& a)
{
    Manifest m("histogram");
    const auto bin = parse_time_ps_integer(a.bin);
    const auto window = parse_time_ps_integer(a.window);
    const auto shift = parse_time_ps_integer(a.shift);
    const auto stream = detail::load_tags(m, a.in);
    const auto h = histogram(stream, bin, window, shift, ctx.threads);
    m.config = {{"bin_width_ps", bin}, {"window_ps", window}, {"ch1_shift_ps", shift}};
    detail::emit(m, a.out, histogram_to_csv(h));
    detail::emit(m, detail::json_sidecar(a.out), histogram_metadata(h).dump(2) + "\n");
    detail::finish(m, detail::sidecar_path(a.out, ".manifest.json"));
    ctx.out << "coincidences " << h.total() << "\n";
    return 0;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
    std::string in;
    std::string peak_halfwidth;
    std::string peak_center = "0";
    std::string shifted;
    std::string out;
};

inline int cmd_analyze(const Context& ctx, const AnalyzeArgs& a)
{
    Manifest m("analyze");
    const auto h = detail::load_histogram(m, a.in);
    CarOptions opts;
    opts.peak_halfwidth_ps = parse_time_ps(a.peak_halfwidth);
    opts.peak_center_ps = parse_time_ps(a.peak_center);
    std::optional<CoincidenceHistogram> shifted;
    if (!a.shifted.empty()) {
        shifted = detail::load_histogram(m, a.shifted);
        opts.mode = AccidentalsMode::shifted_window;
    }
    const auto r = car_and_rate(h, opts, shifted ? &*shifted : nullptr);
    m.config = {{"peak_halfwidth_ps", opts.peak_halfwidth_ps},
                {"peak_center_ps", opts.peak_center_ps},
                {"accidentals", shifted ? "shifted_window" : "sidebands"}};
    json report{{"histogram", histogram_metadata(h)}, {"estimator", to_json(r)}};
    ctx.out << "car " << (r.car_infinite ? std::string("inf") : r.car_undefined ? std::string("nan")
                                                                                  : detail::format_double(r.car))
            << " pair_rate_hz " << detail::format_double(r.pair_rate_hz) << " sigma_hz "
            << detail::format_double(r.pair_rate_sigma_hz) << "\n";
    if (!a.out.empty()) {
        detail::emit(m, a.out, report.dump(2) + "\n");
        detail::finish(m, detail::sidecar_path(a.out, ".manifest.json"));
    }
    return 0;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateArgs {
    std::string fiber = "dcf150";
    std::string points;
    std::vector<std::string> edges;
    bool fit_length = false;
    std::string window;
    std::string out;
};

inline std::vector<CalibrationPoint> parse_calibration_points(const std::string& text, const std::string& source)
{
    std::vector<CalibrationPoint> pts;
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#' || line.rfind("cuton_nm", 0) == 0) continue;
        const auto comma = line.find(',');
        try {
            if (comma == std::string::npos) throw std::invalid_argument(line);
            pts.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
        } catch (const std::logic_error&) {
            throw FormatError(source + ":" + std::to_string(n) + ": expected 'cuton_nm,edge_dt_ps'");
        }
    }
    return pts;
}

inline int cmd_calibrate(const Context& ctx, const CalibrateArgs& a)
{
    Manifest m("calibrate");
    detail::record_preset(m, a.fiber, ctx.preset_dir);
    const auto fp = load_fiber_preset(a.fiber, ctx.preset_dir);
    std::vector<CalibrationPoint> pts;
    if (!a.points.empty()) pts = parse_calibration_points(detail::read_input(m, a.points), a.points);
    EdgeOptions edge;
    edge.direction = fp.channel == 1 ? EdgeDirection::falling : EdgeDirection::rising;
    for (const auto& spec : a.edges) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw UsageError("--edge expects CUTON_NM=histogram.csv, got '" + spec + "'");
        double cuton = 0.0;
        try {
            cuton = std::stod(spec.substr(0, eq));
        } catch (const std::logic_error&) {
            throw UsageError("--edge expects CUTON_NM=histogram.csv, got '" + spec + "'");
        }
        const auto h = detail::load_histogram(m, spec.substr(eq + 1));
        const double t = extract_edge(h, edge);
        pts.push_back({cuton, fp.channel == 1 ? t : -t});
    }
    FitOptions opts;
    opts.fit_length = a.fit_length;
    opts.valid_window = a.window.empty() ? fp.calibration.valid_window() : parse_range(a.window);
    const auto fit = fit_calibration(pts, fp.calibration.model(), opts);
    json points = json::array();
    for (const auto& p : pts) points.push_back({p.cuton_nm, p.edge_dt_ps});
    m.config = {{"fiber", to_json(fp.calibration.model())}, {"fit_length", a.fit_length}, {"points", points}};
    json doc = to_json(fit);
    doc["channel"] = fp.channel;
    doc["points"] = points;
    detail::emit(m, a.out, doc.dump(2) + "\n");
    detail::finish(m, detail::sidecar_path(a.out, ".manifest.json"));
    ctx.out << "time_offset_ps " << detail::format_double(fit.curve.time_offset_ps()) << " length_scale "
            << detail::format_double(fit.length_scale) << " residual_rms_ps "
            << detail::format_double(fit.residual_rms_ps) << "\n";
    return 0;
}

// ---------------------------------------------------------------- reconstruct

struct ReconstructArgs {
    std::string in;
    std::string calibration;
    std::string fiber = "dcf150";
    std::string det0;
    std::string det1;
    std::optional<double> pump;
    bool raw_time_axis = false;
    std::optional<double> background;
    bool subtract_sidebands = false;
    std::string out;
};

inline json resolution_report(const CalibrationCurve& calib, double bin_ps, double jitter_ps)
{
    const auto& w = calib.valid_window();
    json out = json::array();
    for (double l : {w.min_nm, 0.5 * (w.min_nm + w.max_nm), w.max_nm}) {
        const double j = std::abs(calib.jacobian(l));
        out.push_back({{"wavelength_nm", l}, {"bin_step_nm", bin_ps / j}, {"jitter_blur_nm", jitter_ps / j}});
    }
    return out;
}

inline int cmd_reconstruct(const Context& ctx, const ReconstructArgs& a)
{
    Manifest m("reconstruct");
    const auto h = detail::load_histogram(m, a.in);
    std::optional<CalibrationCurve> calib;
    std::uint8_t channel = 1;
    if (!a.calibration.empty()) {
        const auto doc = json::parse(detail::read_input(m, a.calibration), nullptr, false);
        if (doc.is_discarded()) throw FormatError(a.calibration + ": not valid JSON");
        calib = calibration_from_json(doc, a.calibration);
        if (doc.contains("channel")) channel = doc["channel"].get<std::uint8_t>();
    } else {
        detail::record_preset(m, a.fiber, ctx.preset_dir);
        const auto fp = load_fiber_preset(a.fiber, ctx.preset_dir);
        calib = fp.calibration;
        channel = fp.channel;
    }
    ReconstructOptions opts;
    opts.fiber_channel = channel;
    opts.raw_time_axis = a.raw_time_axis;
    double jitter = 0.0;
    if (a.det0.empty() != a.det1.empty()) throw UsageError("--det0 and --det1 must be given together");
    if (!a.det0.empty()) {
        opts.detectors = detail::load_detectors(m, ctx, a.det0, a.det1);
        if (!a.pump) throw UsageError("efficiency correction needs --pump");
        opts.pump_wavelength_nm = *a.pump;
        jitter = std::hypot((*opts.detectors)[0].jitter_sigma_ps, (*opts.detectors)[1].jitter_sigma_ps);
    }
    if (a.background && a.subtract_sidebands) {
        throw UsageError("--background and --subtract-sidebands are mutually exclusive");
    }
    if (a.background) opts.background_per_bin = *a.background;
    if (a.subtract_sidebands) {
        auto [lo, hi] = calib->time_image();
        if (channel == 0) std::tie(lo, hi) = std::pair{-hi, -lo};
        opts.background_per_bin = background_outside(h, lo, hi, 2000.0);
    }
    const auto rec = reconstruct_spectrum(h, *calib, opts);
    m.config = {{"calibration", to_json(*calib)},
                {"fiber_channel", channel},
                {"raw_time_axis", a.raw_time_axis},
                {"background_per_bin", opts.background_per_bin},
                {"pump_wavelength_nm", a.pump ? json(*a.pump) : json(nullptr)}};
    json sidecar{{"dropped_bins", rec.dropped_bins},
                 {"dropped_counts", rec.dropped_counts},
                 {"efficiency_correction", rec.efficiency_corrected ? "fibre_detector(l) * other_detector(conj(l))"
                                                                    : "none"},
                 {"fiber_loss_corrected", rec.efficiency_corrected && !calib->model().attenuation.empty()},
                 {"axis", a.raw_time_axis ? "per_ps_delay" : "per_nm"},
                 {"background_per_bin", opts.background_per_bin},
                 {"resolution", resolution_report(*calib, static_cast<double>(h.bin_width_ps), jitter)},
                 {"bin_width_nm", rec.bin_width_nm}};
    detail::emit(m, a.out, spectrum_csv(rec.spectrum, m.config));
    detail::emit(m, detail::json_sidecar(a.out), sidecar.dump(2) + "\n");
    detail::finish(m, detail::sidecar_path(a.out, ".manifest.json"));
    ctx.out << "samples " << rec.spectrum.size() << " dropped_bins " << rec.dropped_bins << "\n";
    return 0;
}

// ---------------------------------------------------------------- pipeline

struct PipelineArgs {
    SourceArgs source;
    std::string det0 = "snspd_vis";
    std::string det1 = "snspd_ir";
    std::string fiber = "dcf150";
    double pairs = 1e6;
    std::string duration;
    std::uint64_t seed = 0;
    std::string bin = "50ps";
    std::string window = "50ns";
    bool no_closure = false;
    bool no_fluorescence = false;
    bool skip_tags = false;
    std::string outdir = "pipeline_out";
};

inline int cmd_pipeline(const Context& ctx, const PipelineArgs& a)
{
    Manifest m("pipeline");
    auto source = load_source(m, ctx, a.source);
    auto detectors = detail::load_detectors(m, ctx, a.det0, a.det1);
    detail::record_preset(m, a.fiber, ctx.preset_dir);
    PipelineConfig cfg{.source = std::move(source),
                       .detectors = std::move(detectors),
                       .fiber = load_fiber_preset(a.fiber, ctx.preset_dir)};
    cfg.expected_coincidences = a.pairs;
    if (!a.duration.empty()) cfg.duration_s = parse_time_ps(a.duration, "s") * 1e-12;
    cfg.seed = a.seed;
    cfg.bin_width_ps = parse_time_ps_integer(a.bin);
    cfg.window_ps = parse_time_ps_integer(a.window);
    cfg.threads = ctx.threads;
    cfg.conjugate_closure = !a.no_closure;
    cfg.fluorescence = !a.no_fluorescence;

    const auto r = run_pipeline(cfg);
    m.config["fiber"] = {{"preset", cfg.fiber.name}, {"calibration", to_json(cfg.fiber.calibration)},
                         {"channel", cfg.fiber.channel}};
    m.config["pipeline"] = {{"expected_coincidences", a.pairs},
                            {"seed", a.seed},
                            {"bin_width_ps", cfg.bin_width_ps},
                            {"window_ps", cfg.window_ps},
                            {"conjugate_closure", cfg.conjugate_closure},
                            {"fluorescence", cfg.fluorescence},
                            {"duration_s", r.run.duration_s},
                            {"pair_rate_hz", r.run.pair_rate_hz}};
    const std::filesystem::path dir = a.outdir;
    for (const auto& w : r.input.warnings) ctx.err << "warning: " << w << "\n";
    detail::emit(m, dir / "spectrum_in.csv", spectrum_csv(r.input.spectrum, m.config, r.input.warnings));
    detail::emit(m, dir / "marginal_in.csv", spectrum_csv(r.marginal, m.config));
    if (!a.skip_tags) detail::emit(m, dir / "tags.bin", encode_tags(r.simulation.stream));
    detail::emit(m, dir / "histogram.csv", histogram_to_csv(r.histogram));
    detail::emit(m, dir / "histogram.json", histogram_metadata(r.histogram).dump(2) + "\n");
    detail::emit(m, dir / "spectrum_out.csv", spectrum_csv(r.reconstruction.spectrum, m.config));

    const auto window = comparison_window(r);
    json report{{"l1_distance", r.l1_distance},
                {"comparison_window_nm", to_json(window)},
                {"spectral_width_nm_at_0.1", r.spectral_width_nm},
                {"events", r.simulation.stream.events.size()},
                {"coincidences_in_histogram", r.histogram.total()},
                {"expected_true_coincidences", r.expected.true_coincidence_hz * r.run.duration_s},
                {"background_per_bin", r.background_per_bin},
                {"dropped_bins", r.reconstruction.dropped_bins},
                {"duration_s", r.run.duration_s},
                {"pair_rate_hz", r.run.pair_rate_hz}};
    detail::emit(m, dir / "report.json", report.dump(2) + "\n");
    detail::finish(m, dir / "manifest.json");
    ctx.out << "l1_distance " << detail::format_double(r.l1_distance) << " spectral_width_nm "
            << detail::format_double(r.spectral_width_nm) << "\n";
    return 0;
}

// ---------------------------------------------------------------- plot

struct PlotArgs {
    std::vector<std::string> inputs;
    std::vector<std::string> labels;
    bool log_y = false;
    bool normalize = false;
    std::string title;
    std::string out;
};

inline int cmd_plot(const Context& ctx, const PlotArgs& a)
{
    (void)ctx;
    Manifest m("plot");
    std::vector<plot::Series> series;
    plot::Options opts;
    opts.log_y = a.log_y;
    opts.title = a.title;
    bool any_hist = false;
    bool any_spectrum = false;
    for (std::size_t i = 0; i < a.inputs.size(); ++i) {
        const std::string text = detail::read_input(m, a.inputs[i]);
        plot::Series s;
        s.label = i < a.labels.size() ? a.labels[i] : std::filesystem::path(a.inputs[i]).stem().string();
        if (text.rfind("# biphoton histogram", 0) == 0) {
            const auto h = histogram_from_csv(text, a.inputs[i]);
            for (std::size_t k = 0; k < h.size(); ++k) {
                s.x.push_back(h.center_ps(k) * 1e-3);
                s.y.push_back(static_cast<double>(h.counts[k]));
            }
            s.step = true;
            any_hist = true;
        } else {
            const auto sp = spectrum_from_csv(text, a.inputs[i]).spectrum;
            s.x = sp.wavelengths();
            s.y = sp.density();
            any_spectrum = true;
        }
        if (a.normalize) {
            const double peak = s.y.empty() ? 0.0 : *std::max_element(s.y.begin(), s.y.end());
            if (peak > 0.0) {
                for (double& y : s.y) y /= peak;
            }
        }
        series.push_back(std::move(s));
    }
    if (any_hist && any_spectrum) throw UsageError("cannot mix histograms and spectra in one plot");
    opts.x_label = any_hist ? "delay (ns)" : "wavelength (nm)";
    opts.y_label = any_hist ? "coincidences per bin" : (a.normalize ? "normalized density" : "relative density");
    m.config = {{"log_y", a.log_y}, {"normalize", a.normalize}, {"title", a.title}, {"labels", a.labels}};
    detail::emit(m, a.out, plot::render_svg(series, opts));
    detail::finish(m, detail::sidecar_path(a.out, ".manifest.json"));
    return 0;
}

// ---------------------------------------------------------------- entry point

inline void add_source_options(CLI::App* cmd, SourceArgs& s, const std::string& window_flag = "--window")
{
    cmd->add_option("--preset", s.preset, "Source preset name or path (e.g. gap400)")->required();
    cmd->add_option("--pump", s.pump, "Pump wavelength in nm (overrides the preset)");
    cmd->add_option(window_flag, s.window, "Signal window lo:hi in nm (overrides the preset)");
    cmd->add_option("--points", s.points, "Spectral grid points");
    cmd->add_option("--enhancement", s.enhancement, "Enhancement side: none, detection, pump or both");
}

inline std::string one_line(std::string s)
{
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

/// Runs the tool with argv-style arguments (args[0] is the program name).
/// Exit codes: 0 success, 1 runtime error, 2 usage error, 3 configuration error.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"biphoton: thin-film photon-pair simulation and fibre-spectroscopy analysis", "biphoton"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version);
    unsigned threads = 1;
    std::string preset_dir;
    app.add_option("--threads", threads, "Worker thread cap")->check(CLI::PositiveNumber);
    app.add_option("--preset-dir", preset_dir, "Preset directory (default $BIPHOTON_PRESET_PATH or built-in)");
    app.fallthrough();

    MaterialsArgs materials;
    auto* c_materials = app.add_subcommand("materials", "List materials or evaluate refractive indices");
    c_materials->add_option("--file", materials.file, "Materials file (default: preset materials.yaml)");
    c_materials->add_option("--name", materials.name, "Material name");
    c_materials->add_option("--wavelength", materials.wavelength, "Print n at this wavelength (nm)");
    c_materials->add_option("--range", materials.range, "Scan range lo:hi (nm)");
    c_materials->add_option("--points", materials.points, "Scan points");
    c_materials->add_option("--out", materials.out, "CSV output (default: stdout)");

    StackArgs stack;
    auto* c_stack = app.add_subcommand("stack", "Reflectance, transmittance and film buildup of a stack");
    c_stack->add_option("--stack", stack.stack, "Stack name")->required();
    c_stack->add_option("--range", stack.range, "Wavelength range lo:hi (nm)");
    c_stack->add_option("--points", stack.points, "Scan points");
    c_stack->add_option("--from", stack.from, "Incidence side: superstrate or substrate");
    c_stack->add_option("--out", stack.out, "CSV output (default: stdout)");

    SpectrumArgs spectrum;
    auto* c_spectrum = app.add_subcommand("spectrum", "Relative SPDC spectral density of a source preset");
    add_source_options(c_spectrum, spectrum.source);
    c_spectrum->add_flag("--closure", spectrum.source.closure, "Extend the window to its conjugate closure");
    c_spectrum->add_flag("--marginal", spectrum.marginal, "Output the single-photon marginal spectrum");
    c_spectrum->add_option("--out", spectrum.out, "Spectrum CSV")->required();

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Monte Carlo time tags of an SPDC source");
    add_source_options(c_sim, sim.source);
    c_sim->add_flag("--closure", sim.source.closure, "Extend the window to its conjugate closure");
    c_sim->add_option("--spectrum", sim.spectrum_file, "Use this spectrum CSV instead of the preset model");
    c_sim->add_option("--det0", sim.det0, "Channel-0 detector preset");
    c_sim->add_option("--det1", sim.det1, "Channel-1 detector preset");
    c_sim->add_option("--fiber", sim.fiber, "Fibre preset in its channel's arm, or none");
    c_sim->add_option("--duration", sim.duration, "Acquisition time (e.g. 10s, 600)");
    c_sim->add_option("--pair-rate", sim.pair_rate, "Emitted pairs per second");
    c_sim->add_option("--pairs", sim.pairs, "Expected true coincidences over the run (sets the pair rate)");
    c_sim->add_option("--seed", sim.seed, "Random seed");
    c_sim->add_option("--routing", sim.routing, "fifty_fifty or dichroic");
    c_sim->add_option("--split-nm", sim.split_nm, "Dichroic split wavelength (nm)");
    c_sim->add_option("--blue-channel", sim.blue_channel, "Channel receiving light below the split")
        ->check(CLI::Range(0, 1));
    c_sim->add_option("--splitter-ratio", sim.splitter_ratio, "Probability of routing to channel 0");
    c_sim->add_option("--filter", sim.filters, "longpass:NM, shortpass:NM or bandpass:NM:FWHM, optional @CH");
    c_sim->add_flag("--no-fluorescence", sim.no_fluorescence, "Disable fluorescence background");
    c_sim->add_option("--out", sim.out, "Time-tag file (.bin or .csv)")->required();

    ThermalArgs thermal;
    auto* c_thermal = app.add_subcommand("thermal", "Monte Carlo time tags of split thermal light");
    c_thermal->add_option("--rate", thermal.rate, "Mean photon rate over both channels (1/s)");
    c_thermal->add_option("--coherence", thermal.coherence, "Field coherence time (e.g. 10ns, inf)");
    c_thermal->add_option("--duration", thermal.duration, "Acquisition time");
    c_thermal->add_option("--det0", thermal.det0, "Channel-0 detector preset");
    c_thermal->add_option("--det1", thermal.det1, "Channel-1 detector preset");
    c_thermal->add_option("--seed", thermal.seed, "Random seed");
    c_thermal->add_option("--out", thermal.out, "Time-tag file (.bin or .csv)")->required();

    HistogramArgs hist;
    auto* c_hist = app.add_subcommand("histogram", "Coincidence histogram of a time-tag file");
    c_hist->add_option("--in", hist.in, "Time-tag file")->required();
    c_hist->add_option("--bin", hist.bin, "Bin width (e.g. 50ps)");
    c_hist->add_option("--window", hist.window, "Half window (e.g. 50ns)");
    c_hist->add_option("--shift", hist.shift, "Delay added to channel 1 (for shifted-window accidentals)");
    c_hist->add_option("--out", hist.out, "Histogram CSV")->required();

    AnalyzeArgs analyze;
    auto* c_analyze = app.add_subcommand("analyze", "CAR and pair rate of a histogram");
    c_analyze->add_option("--in", analyze.in, "Histogram CSV")->required();
    c_analyze->add_option("--peak-halfwidth", analyze.peak_halfwidth, "Peak half-width (e.g. 500ps)")->required();
    c_analyze->add_option("--peak-center", analyze.peak_center, "Peak centre (default 0)");
    c_analyze->add_option("--shifted", analyze.shifted, "Shifted-window histogram for the accidental level");
    c_analyze->add_option("--out", analyze.out, "Report JSON");

    CalibrateArgs calibrate;
    auto* c_cal = app.add_subcommand("calibrate", "Fit the fibre delay offset from cut-on edges");
    c_cal->add_option("--fiber", calibrate.fiber, "Fibre preset supplying the delay model");
    c_cal->add_option("--points", calibrate.points, "CSV of cuton_nm,edge_dt_ps");
    c_cal->add_option("--edge", calibrate.edges, "CUTON_NM=histogram.csv; the edge is extracted");
    c_cal->add_flag("--fit-length", calibrate.fit_length, "Also fit a length scale factor");
    c_cal->add_option("--window", calibrate.window, "Valid window lo:hi of the fitted curve (nm)");
    c_cal->add_option("--out", calibrate.out, "Calibration JSON")->required();

    ReconstructArgs rec;
    auto* c_rec = app.add_subcommand("reconstruct", "Spectrum from a fibre-spectroscopy histogram");
    c_rec->add_option("--in", rec.in, "Histogram CSV")->required();
    c_rec->add_option("--calibration", rec.calibration, "Calibration JSON (default: the fibre preset)");
    c_rec->add_option("--fiber", rec.fiber, "Fibre preset when no calibration file is given");
    c_rec->add_option("--det0", rec.det0, "Channel-0 detector preset (enables efficiency correction)");
    c_rec->add_option("--det1", rec.det1, "Channel-1 detector preset");
    c_rec->add_option("--pump", rec.pump, "Pump wavelength (nm), needed for efficiency correction");
    c_rec->add_flag("--raw-timeaxis", rec.raw_time_axis, "Skip the Jacobian (density per ps of delay)");
    c_rec->add_option("--background", rec.background, "Counts per bin to subtract");
    c_rec->add_flag("--subtract-sidebands", rec.subtract_sidebands, "Subtract the mean of bins off the image");
    c_rec->add_option("--out", rec.out, "Spectrum CSV")->required();

    PipelineArgs pipe;
    auto* c_pipe = app.add_subcommand("pipeline", "Spectrum -> tags -> histogram -> reconstruction round trip");
    add_source_options(c_pipe, pipe.source, "--spectral-window");
    c_pipe->add_option("--det0", pipe.det0, "Channel-0 detector preset");
    c_pipe->add_option("--det1", pipe.det1, "Channel-1 detector preset");
    c_pipe->add_option("--fiber", pipe.fiber, "Fibre preset");
    c_pipe->add_option("--pairs", pipe.pairs, "Expected true coincidences");
    c_pipe->add_option("--duration", pipe.duration, "Fix the acquisition time (rescales the pair rate)");
    c_pipe->add_option("--seed", pipe.seed, "Random seed");
    c_pipe->add_option("--bin", pipe.bin, "Bin width");
    c_pipe->add_option("--window-ps,--hist-window", pipe.window, "Histogram half window (e.g. 50ns)");
    c_pipe->add_flag("--no-closure", pipe.no_closure, "Keep the preset window instead of its conjugate closure");
    c_pipe->add_flag("--no-fluorescence", pipe.no_fluorescence, "Disable fluorescence background");
    c_pipe->add_flag("--skip-tags", pipe.skip_tags, "Do not write the time-tag file");
    c_pipe->add_option("--outdir", pipe.outdir, "Output directory");

    PlotArgs plot_args;
    auto* c_plot = app.add_subcommand("plot", "SVG plot of spectrum or histogram CSV files");
    c_plot->add_option("--in", plot_args.inputs, "Input CSV (repeatable)")->required();
    c_plot->add_option("--label", plot_args.labels, "Series label (repeatable, in --in order)");
    c_plot->add_flag("--log-y", plot_args.log_y, "Logarithmic y axis");
    c_plot->add_flag("--normalize", plot_args.normalize, "Scale each series to unit maximum");
    c_plot->add_option("--title", plot_args.title, "Plot title");
    c_plot->add_option("--out", plot_args.out, "SVG output")->required();

    std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
    std::reverse(reversed.begin(), reversed.end());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << version << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "biphoton: error: usage: " << one_line(e.what()) << "\n";
        return 2;
    }

    Context ctx{out, err, preset_dir.empty() ? preset_directory() : std::filesystem::path(preset_dir), threads};
    try {
        if (c_materials->parsed()) return cmd_materials(ctx, materials);
        if (c_stack->parsed()) return cmd_stack(ctx, stack);
        if (c_spectrum->parsed()) return cmd_spectrum(ctx, spectrum);
        if (c_sim->parsed()) return cmd_simulate(ctx, sim);
        if (c_thermal->parsed()) return cmd_thermal(ctx, thermal);
        if (c_hist->parsed()) return cmd_histogram(ctx, hist);
        if (c_analyze->parsed()) return cmd_analyze(ctx, analyze);
        if (c_cal->parsed()) return cmd_calibrate(ctx, calibrate);
        if (c_rec->parsed()) return cmd_reconstruct(ctx, rec);
        if (c_pipe->parsed()) return cmd_pipeline(ctx, pipe);
        if (c_plot->parsed()) return cmd_plot(ctx, plot_args);
    } catch (const UsageError& e) {
        err << "biphoton: error: usage: " << one_line(e.what()) << "\n";
        return 2;
    } catch (const ConfigError& e) {
        err << "biphoton: error: config: " << one_line(e.what()) << "\n";
        return 3;
    } catch (const FormatError& e) {
        err << "biphoton: error: format: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const RangeError& e) {
        err << "biphoton: error: range: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const DomainError& e) {
        err << "biphoton: error: domain: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const FitError& e) {
        err << "biphoton: error: fit: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "biphoton: error: runtime: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 2;
}

inline int main(int argc, char** argv)
{
    return run(std::vector<std::string>(argv, argv + argc));
}

} // namespace biphoton::cli
