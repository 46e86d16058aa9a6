#pragma once

#include <cmath>
#include <numbers>

#include "biphoton/error.hpp"

namespace biphoton {

/// Speed of light in nm/ps.
inline constexpr double speed_of_light_nm_per_ps = 299792.458;

inline constexpr double two_pi = 2.0 * std::numbers::pi;

class AngularFrequency;

/// Vacuum wavelength in nanometres. All public interfaces speak nm.
class Wavelength {
public:
    constexpr Wavelength() = default;
    explicit Wavelength(double nm) : nm_(nm)
    {
        if (!(nm > 0.0) || !std::isfinite(nm)) {
            throw DomainError("wavelength must be positive and finite");
        }
    }

    [[nodiscard]] constexpr double nm() const noexcept { return nm_; }
    [[nodiscard]] constexpr double um() const noexcept { return nm_ * 1e-3; }
    [[nodiscard]] AngularFrequency angular_frequency() const;

    friend constexpr auto operator<=>(Wavelength, Wavelength) = default;

private:
    double nm_ = 1.0;
};

/// Angular frequency in rad/ps. Internal to the frequency-domain arithmetic.
class AngularFrequency {
public:
    constexpr AngularFrequency() = default;
    explicit AngularFrequency(double rad_per_ps) : value_(rad_per_ps)
    {
        if (!(rad_per_ps > 0.0) || !std::isfinite(rad_per_ps)) {
            throw DomainError("angular frequency must be positive and finite");
        }
    }

    [[nodiscard]] constexpr double rad_per_ps() const noexcept { return value_; }
    [[nodiscard]] Wavelength wavelength() const
    {
        return Wavelength(two_pi * speed_of_light_nm_per_ps / value_);
    }

    friend constexpr auto operator<=>(AngularFrequency, AngularFrequency) = default;

private:
    double value_ = 1.0;
};

inline AngularFrequency Wavelength::angular_frequency() const
{
    return AngularFrequency(two_pi * speed_of_light_nm_per_ps / nm_);
}

} // namespace biphoton
