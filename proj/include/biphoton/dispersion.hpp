#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "biphoton/error.hpp"
#include "biphoton/units.hpp"

namespace biphoton {

enum class DispersionForm {
    /// n^2 = 1 + sum_i B_i lambda^2 / (lambda^2 - C_i), lambda in um, C_i in um^2.
    /// Coefficients are stored interleaved: B1, C1, B2, C2, ...
    sellmeier_lambda_squared,
    /// n = coefficients[0].
    constant,
};

inline std::string_view to_string(DispersionForm form)
{
    switch (form) {
    case DispersionForm::sellmeier_lambda_squared: return "sellmeier_lambda_squared";
    case DispersionForm::constant: return "constant";
    }
    return "unknown";
}

inline DispersionForm parse_dispersion_form(std::string_view tag)
{
    if (tag == "sellmeier_lambda_squared") return DispersionForm::sellmeier_lambda_squared;
    if (tag == "constant") return DispersionForm::constant;
    throw ConfigError("unknown dispersion form '" + std::string(tag)
                      + "' (expected sellmeier_lambda_squared or constant)");
}

struct WavelengthRange {
    double min_nm = 0.0;
    double max_nm = 0.0;

    [[nodiscard]] bool contains(double nm) const noexcept { return nm >= min_nm && nm <= max_nm; }
    [[nodiscard]] double span() const noexcept { return max_nm - min_nm; }
    friend bool operator==(const WavelengthRange&, const WavelengthRange&) = default;
};

/// Named scalar refractive-index model n(lambda). Immutable after construction.
class MaterialModel {
public:
    MaterialModel(std::string name, DispersionForm form, std::vector<double> coefficients,
                  WavelengthRange valid_range)
        : name_(std::move(name)), form_(form), coefficients_(std::move(coefficients)),
          range_(valid_range)
    {
        validate();
    }

    static MaterialModel constant(std::string name, double n,
                                  WavelengthRange range = {100.0, 100000.0})
    {
        return MaterialModel(std::move(name), DispersionForm::constant, {n}, range);
    }

    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] DispersionForm form() const noexcept { return form_; }
    [[nodiscard]] const std::vector<double>& coefficients() const noexcept { return coefficients_; }
    [[nodiscard]] const WavelengthRange& valid_range() const noexcept { return range_; }

    /// Refractive index at a vacuum wavelength in nm. Throws RangeError outside valid_range.
    [[nodiscard]] double index(double lambda_nm) const
    {
        if (!range_.contains(lambda_nm)) {
            std::ostringstream msg;
            msg << "wavelength " << lambda_nm << " nm is outside the valid range ["
                << range_.min_nm << ", " << range_.max_nm << "] nm of material '" << name_ << "'";
            throw RangeError(msg.str());
        }
        return evaluate(lambda_nm);
    }

    friend bool operator==(const MaterialModel&, const MaterialModel&) = default;

private:
    [[nodiscard]] double evaluate(double lambda_nm) const noexcept
    {
        if (form_ == DispersionForm::constant) {
            return coefficients_[0];
        }
        const double l2 = (lambda_nm * 1e-3) * (lambda_nm * 1e-3);
        double n2 = 1.0;
        for (std::size_t i = 0; i + 1 < coefficients_.size(); i += 2) {
            n2 += coefficients_[i] * l2 / (l2 - coefficients_[i + 1]);
        }
        return std::sqrt(n2);
    }

    void validate() const
    {
        auto fail = [this](const std::string& what) {
            throw ConfigError("material '" + name_ + "': " + what);
        };
        if (!(range_.min_nm > 0.0) || !(range_.min_nm < range_.max_nm)
            || !std::isfinite(range_.max_nm)) {
            fail("valid_range must satisfy 0 < min < max");
        }
        switch (form_) {
        case DispersionForm::constant:
            if (coefficients_.size() != 1) fail("constant form takes exactly one coefficient");
            break;
        case DispersionForm::sellmeier_lambda_squared:
            if (coefficients_.empty() || coefficients_.size() % 2 != 0) {
                fail("sellmeier_lambda_squared takes interleaved B,C pairs");
            }
            break;
        }
        // A pole or sub-unity index inside the declared range is a configuration error.
        constexpr int scan = 2048;
        for (int i = 0; i <= scan; ++i) {
            const double lam = range_.min_nm + range_.span() * i / scan;
            const double n = evaluate(lam);
            if (!std::isfinite(n) || n < 1.0) {
                std::ostringstream msg;
                msg << "index is " << n << " at " << lam << " nm inside the declared valid_range";
                fail(msg.str());
            }
        }
    }

    std::string name_;
    DispersionForm form_;
    std::vector<double> coefficients_;
    WavelengthRange range_;
};

inline double refractive_index(const MaterialModel& model, double lambda_nm)
{
    return model.index(lambda_nm);
}

/// Idler wavelength from energy conservation 1/lp = 1/ls + 1/li.
inline double conjugate_wavelength(double pump_nm, double signal_nm)
{
    if (!(pump_nm > 0.0) || !(signal_nm > pump_nm)) {
        std::ostringstream msg;
        msg << "signal " << signal_nm << " nm must be longer than pump " << pump_nm << " nm";
        throw DomainError(msg.str());
    }
    // pump*signal/(signal-pump) is the same value without the cancellation of 1/lp - 1/ls
    return pump_nm * signal_nm / (signal_nm - pump_nm);
}

/// Collinear wave-vector mismatch dk = 2 pi (n_p/l_p - n_s/l_s - n_i/l_i) in rad/nm.
inline double phase_mismatch(double pump_nm, double signal_nm, double n_pump, double n_signal,
                             double n_idler)
{
    const double idler_nm = conjugate_wavelength(pump_nm, signal_nm);
    if (n_pump < 1.0 || n_signal < 1.0 || n_idler < 1.0) {
        throw DomainError("refractive indices must be >= 1");
    }
    return two_pi * (n_pump / pump_nm - n_signal / signal_nm - n_idler / idler_nm);
}

/// Phase mismatch inside a single material.
inline double phase_mismatch(const MaterialModel& medium, double pump_nm, double signal_nm)
{
    const double idler_nm = conjugate_wavelength(pump_nm, signal_nm);
    return phase_mismatch(pump_nm, signal_nm, medium.index(pump_nm), medium.index(signal_nm),
                          medium.index(idler_nm));
}

/// Name-indexed set of material models.
class MaterialLibrary {
public:
    void add(MaterialModel model)
    {
        const std::string key = model.name();
        models_.insert_or_assign(key, std::move(model));
    }

    [[nodiscard]] bool contains(const std::string& name) const { return models_.count(name) > 0; }

    [[nodiscard]] const MaterialModel& at(const std::string& name) const
    {
        auto it = models_.find(name);
        if (it == models_.end()) {
            std::string known;
            for (const auto& [key, _] : models_) {
                known += (known.empty() ? "" : ", ") + key;
            }
            throw ConfigError("unknown material '" + name + "' (known: " + known + ")");
        }
        return it->second;
    }

    [[nodiscard]] const std::map<std::string, MaterialModel>& all() const noexcept { return models_; }

private:
    std::map<std::string, MaterialModel> models_;
};

} // namespace biphoton
