#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "biphoton/dispersion.hpp"
#include "biphoton/materials_io.hpp"
#include "biphoton/units.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace biphoton;
using testing_support::material;

TEST(RefractiveIndex, VacuumIsOne)
{
    EXPECT_EQ(refractive_index(material("vacuum"), 1030.0), 1.0);
}

TEST(RefractiveIndex, ShippedSetsMatchStandaloneSellmeier)
{
    struct Case {
        const char* name;
        const oracle::Sellmeier* ref;
        std::vector<double> wavelengths;
    };
    const Case cases[] = {
        {"fused_silica", &oracle::fused_silica, {400, 633, 1030, 1550, 3000}},
        {"sapphire_o", &oracle::sapphire_o, {400, 633, 1030, 1550, 3000}},
        {"gap", &oracle::gap, {500, 633, 1000, 1375, 2000}},
        {"ln_e", &oracle::ln_e, {515, 685, 1030, 1375, 2000}},
    };
    for (const auto& c : cases) {
        for (double l : c.wavelengths) {
            EXPECT_NEAR(refractive_index(material(c.name), l), c.ref->n(l), 1e-12) << c.name << " at " << l;
        }
    }
}

TEST(RefractiveIndex, FusedSilicaNear1030)
{
    // Three-term sum evaluated by hand: n^2 = 2.10263, n = 1.45004.
    EXPECT_NEAR(refractive_index(material("fused_silica"), 1030.0), 1.45004, 5e-5);
}

TEST(RefractiveIndex, LithiumNiobateExtraordinaryAt1375)
{
    EXPECT_NEAR(refractive_index(material("ln_e"), 1375.0), oracle::ln_e.n(1375.0), 1e-12);
    EXPECT_NEAR(refractive_index(material("ln_e"), 1375.0), 2.1429, 1e-4);
}

TEST(RefractiveIndex, OutOfRangeNamesModelAndRange)
{
    try {
        (void)refractive_index(material("gap"), 300.0);
        FAIL() << "expected RangeError";
    } catch (const RangeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("'gap'"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[450, 4000]"), std::string::npos) << msg;
    }
    EXPECT_THROW((void)material("fused_silica").index(7000.0), RangeError);
    EXPECT_NO_THROW((void)material("fused_silica").index(210.0));
}

TEST(RefractiveIndex, DenseScanIsFiniteAndAtLeastOne)
{
    for (const auto& [name, model] : testing_support::library().materials.all()) {
        const auto r = model.valid_range();
        double previous = model.index(r.min_nm);
        for (int i = 0; i <= 10000; ++i) {
            const double l = r.min_nm + r.span() * i / 10000.0;
            const double n = model.index(l);
            ASSERT_TRUE(std::isfinite(n)) << name << " at " << l;
            ASSERT_GE(n, 1.0) << name << " at " << l;
            // Continuity: no jump larger than the local dispersion could explain.
            ASSERT_LT(std::abs(n - previous), 0.05) << name << " at " << l;
            previous = n;
        }
    }
}

TEST(MaterialModel, RejectsBadDefinitions)
{
    EXPECT_THROW(MaterialModel("x", DispersionForm::constant, {1.5}, {500, 400}), ConfigError);
    EXPECT_THROW(MaterialModel("x", DispersionForm::constant, {1.5, 2.0}, {400, 500}), ConfigError);
    EXPECT_THROW(MaterialModel("x", DispersionForm::sellmeier_lambda_squared, {1.0}, {400, 500}), ConfigError);
    // Resonance at 1 um inside the declared range.
    EXPECT_THROW(MaterialModel("x", DispersionForm::sellmeier_lambda_squared, {1.0, 1.0}, {500, 2000}),
                 ConfigError);
    EXPECT_THROW(MaterialModel::constant("x", 0.5), ConfigError);
}

TEST(ConjugateWavelength, DegeneratePoints)
{
    EXPECT_DOUBLE_EQ(conjugate_wavelength(515.0, 1030.0), 1030.0);
    EXPECT_DOUBLE_EQ(conjugate_wavelength(685.0, 1370.0), 1370.0);
}

TEST(ConjugateWavelength, HandArithmetic)
{
    EXPECT_NEAR(conjugate_wavelength(515.0, 800.0), 1.0 / (1.0 / 515.0 - 1.0 / 800.0), 1e-9);
    EXPECT_NEAR(conjugate_wavelength(515.0, 800.0), 1445.614, 1e-3);
}

TEST(ConjugateWavelength, RejectsSignalNotAbovePump)
{
    EXPECT_THROW((void)conjugate_wavelength(515.0, 515.0), DomainError);
    EXPECT_THROW((void)conjugate_wavelength(515.0, 400.0), DomainError);
}

TEST(ConjugateWavelength, EnergyConservationAndInvolution)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> pump(300.0, 1000.0);
    std::uniform_real_distribution<double> excess(1.001, 6.0);
    for (int i = 0; i < 10000; ++i) {
        const double lp = pump(rng);
        const double ls = lp * excess(rng);
        const double li = conjugate_wavelength(lp, ls);
        EXPECT_NEAR((1.0 / ls + 1.0 / li) * lp, 1.0, 1e-12);
        EXPECT_NEAR(conjugate_wavelength(lp, li) / ls, 1.0, 1e-9);
    }
}

TEST(PhaseMismatch, VanishesForEqualIndices)
{
    EXPECT_NEAR(phase_mismatch(515.0, 1030.0, 1.0, 1.0, 1.0), 0.0, 1e-15);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> signal(520.0, 3000.0);
    for (int i = 0; i < 1000; ++i) {
        EXPECT_NEAR(phase_mismatch(515.0, signal(rng), 2.0, 2.0, 2.0), 0.0, 1e-14);
    }
}

TEST(PhaseMismatch, HandArithmetic)
{
    const double expected = 2.0 * std::numbers::pi * (2.40 / 515.0 - 2.0 * 2.28 / 1030.0);
    EXPECT_NEAR(phase_mismatch(515.0, 1030.0, 2.40, 2.28, 2.28), expected, 1e-15);
}

TEST(PhaseMismatch, SignalIdlerExchange)
{
    const auto& ln = material("ln_e");
    for (double ls : {800.0, 900.0, 1100.0, 1300.0}) {
        const double li = conjugate_wavelength(515.0, ls);
        const double a = phase_mismatch(515.0, ls, ln.index(515.0), ln.index(ls), ln.index(li));
        const double b = phase_mismatch(515.0, li, ln.index(515.0), ln.index(li), ln.index(ls));
        EXPECT_NEAR(a, b, 1e-14 * std::abs(a) + 1e-18);
        EXPECT_NEAR(phase_mismatch(ln, 515.0, ls), a, 1e-18);
    }
}

TEST(PhaseMismatch, RejectsSubUnityIndexAndBadPair)
{
    EXPECT_THROW((void)phase_mismatch(515.0, 1030.0, 0.9, 1.0, 1.0), DomainError);
    EXPECT_THROW((void)phase_mismatch(515.0, 500.0, 1.0, 1.0, 1.0), DomainError);
}

TEST(Units, WavelengthFrequencyRoundTrip)
{
    for (double nm : {200.0, 515.0, 1030.0, 1550.0, 5000.0}) {
        const Wavelength w(nm);
        EXPECT_NEAR(w.angular_frequency().wavelength().nm() / nm, 1.0, 1e-12);
        EXPECT_NEAR(w.angular_frequency().rad_per_ps(), 2.0 * std::numbers::pi * 299792.458 / nm, 1e-12);
    }
    EXPECT_THROW(Wavelength(0.0), DomainError);
    EXPECT_THROW(Wavelength(-1.0), DomainError);
    EXPECT_THROW(AngularFrequency(std::nan("")), DomainError);
}

TEST(MaterialsFile, ParsesAndReportsLineAndKey)
{
    const std::string good = "materials:\n  glass:\n    form: constant\n    coefficients: [1.5]\n"
                             "    valid_range_nm: [200, 2000]\n";
    const auto lib = parse_materials(good, "m.yaml");
    EXPECT_DOUBLE_EQ(lib.at("glass").index(600.0), 1.5);

    const std::string bad_form = "materials:\n  glass:\n    form: cauchy\n    coefficients: [1.5]\n"
                                 "    valid_range_nm: [200, 2000]\n";
    try {
        (void)parse_materials(bad_form, "m.yaml");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("m.yaml:3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("materials.glass.form"), std::string::npos) << msg;
    }
    const std::string missing = "materials:\n  glass:\n    form: constant\n    valid_range_nm: [200, 2000]\n";
    try {
        (void)parse_materials(missing, "m.yaml");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("coefficients"), std::string::npos) << e.what();
    }
    EXPECT_THROW((void)parse_materials("materials: [1, 2\n", "m.yaml"), ConfigError);
    EXPECT_THROW((void)parse_materials("- 1\n", "m.yaml"), ConfigError);
}
