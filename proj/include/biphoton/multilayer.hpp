#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "biphoton/dispersion.hpp"
#include "biphoton/error.hpp"
#include "biphoton/units.hpp"

namespace biphoton {

using complex = std::complex<double>;

struct Layer {
    MaterialModel material;
    double thickness_nm;
};

/// Which semi-infinite medium the probing plane wave comes from.
enum class Incidence { superstrate, substrate };

/// Planar stack: superstrate | layers... | substrate_chain... | substrate.
///
/// `layers` holds the film(s) under study; `substrate_chain` holds finite support layers
/// (e.g. a buffer oxide) in order away from the film, terminated by the semi-infinite
/// `substrate`. All finite layers are treated coherently.
class LayerStack {
public:
    LayerStack(MaterialModel superstrate, std::vector<Layer> layers,
               std::vector<Layer> substrate_chain, MaterialModel substrate,
               std::size_t nonlinear_layer_index = 0)
        : superstrate_(std::move(superstrate)), layers_(std::move(layers)),
          chain_(std::move(substrate_chain)), substrate_(std::move(substrate)),
          nonlinear_(nonlinear_layer_index)
    {
        if (layers_.empty()) {
            throw ConfigError("layer stack needs at least one layer");
        }
        if (nonlinear_ >= layers_.size()) {
            throw ConfigError("nonlinear_layer_index " + std::to_string(nonlinear_)
                              + " is out of range for " + std::to_string(layers_.size())
                              + " layer(s)");
        }
        for (const auto* group : {&layers_, &chain_}) {
            for (const auto& layer : *group) {
                if (!(layer.thickness_nm > 0.0)) {
                    throw ConfigError("layer '" + layer.material.name()
                                      + "' must have positive thickness");
                }
            }
        }
    }

    [[nodiscard]] const MaterialModel& superstrate() const noexcept { return superstrate_; }
    [[nodiscard]] const std::vector<Layer>& layers() const noexcept { return layers_; }
    [[nodiscard]] const std::vector<Layer>& substrate_chain() const noexcept { return chain_; }
    [[nodiscard]] const MaterialModel& substrate() const noexcept { return substrate_; }
    [[nodiscard]] std::size_t nonlinear_layer_index() const noexcept { return nonlinear_; }
    [[nodiscard]] const Layer& nonlinear_layer() const noexcept { return layers_[nonlinear_]; }

    /// Copy with the thickness of film layer `index` replaced.
    [[nodiscard]] LayerStack with_thickness(std::size_t index, double thickness_nm) const
    {
        auto layers = layers_;
        layers.at(index).thickness_nm = thickness_nm;
        return {superstrate_, std::move(layers), chain_, substrate_, nonlinear_};
    }

    /// Intersection of the valid ranges of every material in the stack.
    [[nodiscard]] WavelengthRange common_range() const
    {
        WavelengthRange range = superstrate_.valid_range();
        auto narrow = [&range](const MaterialModel& m) {
            range.min_nm = std::max(range.min_nm, m.valid_range().min_nm);
            range.max_nm = std::min(range.max_nm, m.valid_range().max_nm);
        };
        narrow(substrate_);
        for (const auto& l : layers_) narrow(l.material);
        for (const auto& l : chain_) narrow(l.material);
        return range;
    }

private:
    MaterialModel superstrate_;
    std::vector<Layer> layers_;
    std::vector<Layer> chain_;
    MaterialModel substrate_;
    std::size_t nonlinear_;
};

struct StackResponse {
    complex r;
    complex t;
    double R;
    double T;
};

namespace tmm {

struct OpticalLayer {
    complex n;
    double thickness_nm;
};

/// Stack evaluated at one wavelength, ordered from the incidence side.
struct ResolvedStack {
    double n_in;
    std::vector<OpticalLayer> layers;
    complex n_out;
};

struct Fields {
    complex E;
    complex H;
};

/// Characteristic matrix of one homogeneous layer applied to the fields at its exit face;
/// returns the fields at its entrance face (normal incidence, exp(i(wt - kz)) convention,
/// H in units of the vacuum admittance).
inline Fields through_layer(const OpticalLayer& layer, double lambda_nm, Fields exit)
{
    const complex delta = two_pi * layer.n * layer.thickness_nm / lambda_nm;
    const complex c = std::cos(delta);
    const complex s = std::sin(delta);
    const complex i{0.0, 1.0};
    return {c * exit.E + i * s / layer.n * exit.H, i * layer.n * s * exit.E + c * exit.H};
}

/// (e^{a d} - 1) / (a d), continuous at a d -> 0.
inline complex mean_exponential(complex ad)
{
    if (std::abs(ad) < 1e-8) {
        return 1.0 + ad / 2.0;
    }
    return (std::exp(ad) - 1.0) / ad;
}

inline double mean_exponential(double ad)
{
    if (std::abs(ad) < 1e-8) {
        return 1.0 + ad / 2.0;
    }
    return std::expm1(ad) / ad;
}

/// Reflection/transmission of a resolved stack for a unit plane wave from n_in.
inline StackResponse response(const ResolvedStack& s, double lambda_nm)
{
    Fields f{1.0, s.n_out};
    for (auto it = s.layers.rbegin(); it != s.layers.rend(); ++it) {
        f = through_layer(*it, lambda_nm, f);
    }
    const complex denom = s.n_in * f.E + f.H;
    const complex r = (s.n_in * f.E - f.H) / denom;
    const complex t = 2.0 * s.n_in / denom;
    const double T = 4.0 * s.n_in * s.n_out.real() / std::norm(denom);
    return {r, t, std::norm(r), T};
}

/// Thickness-averaged |E|^2 inside layer `index` for a unit-amplitude wave from n_in.
inline double mean_intensity(const ResolvedStack& s, std::size_t index, double lambda_nm)
{
    Fields f{1.0, s.n_out};
    double mean_unscaled = 0.0;
    for (std::size_t j = s.layers.size(); j-- > 0;) {
        const OpticalLayer& layer = s.layers[j];
        if (j == index) {
            // Forward/backward amplitudes at the exit face; z measured back toward entrance:
            // E(z) = a_f e^{ikz} + a_b e^{-ikz}.
            const complex a_f = (f.E + f.H / layer.n) / 2.0;
            const complex a_b = (f.E - f.H / layer.n) / 2.0;
            const complex k = two_pi * layer.n / lambda_nm;
            const double d = layer.thickness_nm;
            const double decay = -2.0 * k.imag() * d;
            const double forward = std::norm(a_f) * mean_exponential(decay);
            const double backward = std::norm(a_b) * mean_exponential(-decay);
            const complex cross = a_f * std::conj(a_b)
                                  * mean_exponential(complex{0.0, 2.0 * k.real() * d});
            mean_unscaled = forward + backward + 2.0 * cross.real();
        }
        f = through_layer(layer, lambda_nm, f);
    }
    const complex t = 2.0 * s.n_in / (s.n_in * f.E + f.H);
    return mean_unscaled * std::norm(t);
}

} // namespace tmm

/// Resolves indices at `lambda_nm`, ordered from the chosen incidence side. Returns the
/// stack and the resolved position of film layer `film_index`.
inline std::pair<tmm::ResolvedStack, std::size_t>
resolve(const LayerStack& stack, double lambda_nm, Incidence from, std::size_t film_index = 0)
{
    std::vector<tmm::OpticalLayer> ordered;
    ordered.reserve(stack.layers().size() + stack.substrate_chain().size());
    for (const auto& l : stack.layers()) {
        ordered.push_back({l.material.index(lambda_nm), l.thickness_nm});
    }
    for (const auto& l : stack.substrate_chain()) {
        ordered.push_back({l.material.index(lambda_nm), l.thickness_nm});
    }
    const double n_top = stack.superstrate().index(lambda_nm);
    const double n_bottom = stack.substrate().index(lambda_nm);
    if (from == Incidence::superstrate) {
        return {tmm::ResolvedStack{n_top, std::move(ordered), n_bottom}, film_index};
    }
    std::reverse(ordered.begin(), ordered.end());
    const std::size_t position = ordered.size() - 1 - film_index;
    return {tmm::ResolvedStack{n_bottom, std::move(ordered), n_top}, position};
}

/// Normal-incidence amplitude and power coefficients of the stack.
inline StackResponse stack_response(const LayerStack& stack, double lambda_nm,
                                    Incidence from = Incidence::superstrate)
{
    return tmm::response(resolve(stack, lambda_nm, from).first, lambda_nm);
}

/// Intensity buildup F(lambda) inside film layer `layer_index`: the thickness average of
/// |E(z)|^2 for a unit-amplitude plane wave incident from `from`. F == 1 for a
/// zero-contrast stack.
inline double internal_intensity_factor(const LayerStack& stack, std::size_t layer_index,
                                        double lambda_nm, Incidence from = Incidence::superstrate)
{
    if (layer_index >= stack.layers().size()) {
        throw ConfigError("layer index " + std::to_string(layer_index) + " out of range");
    }
    auto [resolved, position] = resolve(stack, lambda_nm, from, layer_index);
    return tmm::mean_intensity(resolved, position, lambda_nm);
}

} // namespace biphoton
