#include <cmath>

#include <doctest.h>

#include "nmrprof/model.hpp"
#include "nmrprof/rng.hpp"
#include "nmrprof/synth.hpp"

using namespace nmrprof;

namespace {

Compound onePeakCompound(double amplitude, Ppm center, double widthParam,
                         Ppm halfWindow = 0.025) {
    Compound c;
    c.id = "x";
    c.name = "X";
    Cluster k;
    k.id = "x.1";
    k.nominalCenter = center;
    k.shiftWindow = {center - halfWindow, center + halfWindow};
    k.peaks.push_back({amplitude, 0.0, widthParam});
    c.clusters.push_back(std::move(k));
    return c;
}

// independent finite-interval quadrature of one Lorentzian term:
// closed-form antiderivative of a*w / (w + 4 u^2)
double peakIntegral(const PeakShape& p, Ppm center, Ppm lo, Ppm hi) {
    const double s = std::sqrt(p.widthParam);
    auto F = [&](double u) { return 0.5 * p.amplitude * s * std::atan(2.0 * u / s); };
    return F(hi - center) - F(lo - center);
}

} // namespace

TEST_CASE("peak evaluation matches hand-computed values") {
    PeakShape peak{100.0, 2.0, 0.0004};
    CHECK(evalPeak(2.0, peak, 0.0) == doctest::Approx(100.0).epsilon(1e-12));
    // half height at half of the full width sqrt(theta3) = 0.02
    CHECK(evalPeak(2.01, peak, 0.0) == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(evalPeak(2.05, peak, 0.0) == doctest::Approx(0.04 / 0.0104).epsilon(1e-12));
    CHECK_THROWS_AS(evalPeak(std::nan(""), peak, 0.0), std::invalid_argument);

    // the cluster shift translates the peak rigidly
    CHECK(evalPeak(2.1, peak, 0.1) == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("peak is symmetric about its center, positive, FWHM = sqrt(widthParam)") {
    PeakShape peak{7.5, 0.3, 9e-7};
    RngStream rng(41);
    for (int i = 0; i < 200; ++i) {
        const double d = rng.uniform(0.0, 0.2);
        const double lhs = evalPeak(0.3 + d, peak, 0.0);
        const double rhs = evalPeak(0.3 - d, peak, 0.0);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
        CHECK(lhs > 0.0);
    }
    const double half = std::sqrt(peak.widthParam) / 2.0;
    CHECK(evalPeak(0.3 + half, peak, 0.0) ==
          doctest::Approx(peak.amplitude / 2.0).epsilon(1e-12));
    CHECK(evalPeak(0.3 - half, peak, 0.0) ==
          doctest::Approx(peak.amplitude / 2.0).epsilon(1e-12));
}

TEST_CASE("render_compound: zero concentration, linearity, apex value") {
    const GridSpec grid{2.5, 0.0002, 5001};
    Compound c = onePeakCompound(1.0, 3.0, 0.0001);
    std::map<std::string, Ppm> shifts{{"x.1", 3.0}};

    Spectrum zero = renderCompound(c, 0.0, {}, grid);
    for (double v : zero.intensities) CHECK(v == 0.0);

    Spectrum at50 = renderCompound(c, 50.0, shifts, grid);
    Spectrum at1 = renderCompound(c, 1.0, shifts, grid);
    for (Index i = 0; i < at1.size(); i += 97)
        CHECK(at50.intensities[i] == doctest::Approx(50.0 * at1.intensities[i]).epsilon(1e-12));
    CHECK(at50.intensities[at50.nearestIndex(3.0)] == doctest::Approx(50.0).epsilon(1e-9));

    CHECK_THROWS_AS(renderCompound(c, 5.0, {}, grid), std::invalid_argument);
    std::map<std::string, Ppm> outside{{"x.1", 3.2}};
    CHECK_THROWS_AS(renderCompound(c, 5.0, outside, grid), std::domain_error);
}

TEST_CASE("render_mixture: superposition and per-compound quadrature") {
    SpectralLibrary lib = demoLibrary15();
    MixtureSpec spec = demoMixtureSpec(lib, 7, 1.0, 50.0, 200.0, 0.0);
    GroundTruth truth = sampleProfile(lib, spec);
    const GridSpec grid = defaultGrid();

    Spectrum mixture = renderMixture(lib, truth.profile, grid);

    // empty profile renders nothing
    Spectrum empty = renderMixture(lib, Profile{}, grid);
    for (Index i = 0; i < empty.size(); i += 1009) CHECK(empty.intensities[i] == 0.0);

    // pointwise superposition of the individual renders
    std::vector<double> sum(grid.points, 0.0);
    for (const auto& compound : lib.compounds) {
        Spectrum one = renderCompound(compound, truth.profile.concentrationOf(compound.id),
                                      truth.profile.shifts, grid);
        for (Index i = 0; i < grid.points; ++i) sum[i] += one.intensities[i];
    }
    for (Index i = 0; i < grid.points; i += 503)
        CHECK(mixture.intensities[i] == doctest::Approx(sum[i]).epsilon(1e-9));

    // trapezoid area of the mixture vs the sum of closed-form peak areas
    double trap = 0.0;
    for (Index i = 0; i < grid.points; ++i) {
        const double w = (i == 0 || i + 1 == grid.points) ? 0.5 : 1.0;
        trap += w * mixture.intensities[i];
    }
    trap *= grid.stepPpm;
    double analytic = 0.0;
    for (const auto& compound : lib.compounds) {
        const double conc = truth.profile.concentrationOf(compound.id);
        if (conc == 0.0) continue;
        for (const auto& cluster : compound.clusters) {
            const Ppm delta = truth.profile.shifts.at(cluster.id);
            for (const auto& p : cluster.peaks)
                analytic += conc * peakIntegral(p, 0.0, grid.startPpm - delta,
                                                grid.endPpm() - delta);
        }
    }
    CHECK(trap == doctest::Approx(analytic).epsilon(5e-3));

    // linearity in the whole profile: mixture quadrature equals the sum of
    // conc-scaled unit renders, to near machine precision
    double sumOfParts = 0.0;
    for (const auto& compound : lib.compounds) {
        const double conc = truth.profile.concentrationOf(compound.id);
        if (conc == 0.0) continue;
        Spectrum unit = renderCompound(compound, 1.0, truth.profile.shifts, grid);
        double t = 0.0;
        for (Index i = 0; i < grid.points; ++i) {
            const double w = (i == 0 || i + 1 == grid.points) ? 0.5 : 1.0;
            t += w * unit.intensities[i];
        }
        sumOfParts += conc * t * grid.stepPpm;
    }
    CHECK(trap == doctest::Approx(sumOfParts).epsilon(1e-9));
}

TEST_CASE("render is shift-equivariant on the continuous model") {
    // moving the cluster by d translates its contribution exactly
    Compound c = onePeakCompound(2.0, 1.0, 1.44e-6);
    const GridSpec grid{0.9, 0.0002, 1001};
    const Ppm d = 0.0102;  // a multiple of the grid step: exact translation
    Spectrum a = renderCompound(c, 10.0, {{"x.1", 1.0}}, grid);
    Spectrum b = renderCompound(c, 10.0, {{"x.1", 1.0 + d}}, grid);
    const auto offset = static_cast<Index>(std::llround(d / grid.stepPpm));
    for (Index i = 0; i + offset < grid.points; i += 7)
        CHECK(b.intensities[i + offset] == doctest::Approx(a.intensities[i]).epsilon(1e-9));
}

TEST_CASE("library validation flags every violation at once") {
    SpectralLibrary lib = demoLibrary15();
    CHECK(validateLibrary(lib).empty());

    lib.compounds[0].clusters[0].shiftWindow = {3.0, 2.0};        // inverted
    lib.compounds[1].clusters[0].peaks[0].amplitude = -1.0;       // non-positive
    lib.compounds[2].id = lib.compounds[3].id;                    // duplicate
    auto issues = validateLibrary(lib);
    CHECK(issues.size() >= 3);
    CHECK_THROWS_AS(requireValidLibrary(lib), ValidationError);
}

TEST_CASE("demo libraries have the documented shape") {
    SpectralLibrary demo = demoLibrary15();
    CHECK(demo.compounds.size() == 15);
    CHECK(demo.findCompound(demo.referenceCompound) != nullptr);

    SpectralLibrary csf = demoLibraryCsf48();
    CHECK(csf.compounds.size() == 48);
    CHECK(csf.clusterCount() == 180);
    CHECK(csf.peakCount() == 946);
    CHECK(validateLibrary(csf).empty());
}
