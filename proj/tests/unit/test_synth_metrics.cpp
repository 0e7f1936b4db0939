#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "nmrprof/metrics.hpp"
#include "nmrprof/rng.hpp"
#include "nmrprof/synth.hpp"

using namespace nmrprof;

namespace {

/// Small uniform library: `n` single-peak compounds named c00..cNN.
SpectralLibrary uniformLibrary(std::size_t n, double apex = 2.0) {
    SpectralLibrary lib;
    lib.biofluidTag = "test";
    lib.referenceCompound = "c00";
    lib.referenceConcentration = 500.0;
    for (std::size_t i = 0; i < n; ++i) {
        Compound c;
        char id[8];
        std::snprintf(id, sizeof(id), "c%02zu", i);
        c.id = id;
        c.name = id;
        Cluster k;
        k.id = c.id + ".1";
        k.nominalCenter = 1.0 + 0.15 * static_cast<double>(i);
        k.shiftWindow = {k.nominalCenter - 0.025, k.nominalCenter + 0.025};
        k.peaks.push_back({apex, 0.0, 1.44e-6});
        c.clusters.push_back(std::move(k));
        lib.compounds.push_back(std::move(c));
    }
    return lib;
}

DetectionThresholds flatThresholds(const SpectralLibrary& lib, double value) {
    DetectionThresholds t;
    t.noiseSigma = 0.0;
    for (const auto& c : lib.compounds) t.perCompound[c.id] = value;
    return t;
}

} // namespace

TEST_CASE("sample_profile: degenerate ranges, determinism, presence rate") {
    const SpectralLibrary lib = demoLibrary15();

    MixtureSpec fixed = demoMixtureSpec(lib, 11, 1.0, 120.0, 120.0, 0.0);
    const GroundTruth t1 = sampleProfile(lib, fixed);
    for (const auto& compound : lib.compounds) {
        if (compound.id == lib.referenceCompound)
            CHECK(t1.profile.concentrationOf(compound.id) == 500.0);
        else
            CHECK(t1.profile.concentrationOf(compound.id) == 120.0);
    }
    for (const auto& compound : lib.compounds)
        for (const auto& k : compound.clusters)
            CHECK(k.shiftWindow.contains(t1.profile.shifts.at(k.id)));

    const GroundTruth t2 = sampleProfile(lib, fixed);
    CHECK(t1.profile.concentrations == t2.profile.concentrations);
    CHECK(t1.profile.shifts == t2.profile.shifts);

    // empirical presence rate over many seeds: 0.6 within 3 binomial sigmas
    std::size_t present = 0;
    const std::size_t trials = 10000;
    const std::string probe = lib.compounds[1].id;
    for (std::size_t s = 0; s < trials; ++s) {
        MixtureSpec spec = demoMixtureSpec(lib, 1000 + s, 0.6, 50.0, 100.0, 0.0);
        if (sampleProfile(lib, spec).profile.concentrationOf(probe) > 0.0) ++present;
    }
    const double rate = static_cast<double>(present) / static_cast<double>(trials);
    CHECK(std::abs(rate - 0.6) <= 0.015);

    MixtureSpec incomplete = fixed;
    incomplete.perCompound.erase(probe);
    CHECK_THROWS_AS(sampleProfile(lib, incomplete), std::invalid_argument);
}

TEST_CASE("generate_spectrum: noiseless equals the render, noise is calibrated") {
    const SpectralLibrary lib = demoLibrary15();
    const GridSpec grid{0.0, 0.0005, 20001};

    GroundTruth truth = sampleProfile(lib, demoMixtureSpec(lib, 5, 0.8, 50, 200, 0.0));
    const Spectrum clean = generateSpectrum(lib, truth, grid);
    const Spectrum render = renderMixture(lib, truth.profile, grid);
    for (Index i = 0; i < clean.size(); i += 101)
        CHECK(clean.intensities[i] == render.intensities[i]);

    truth.noiseSigma = 2.5;
    const Spectrum noisy = generateSpectrum(lib, truth, grid);
    double sum = 0.0, ss = 0.0;
    for (Index i = 0; i < noisy.size(); ++i) {
        const double r = noisy.intensities[i] - render.intensities[i];
        sum += r;
        ss += r * r;
    }
    const auto n = static_cast<double>(noisy.size());
    const double mean = sum / n;
    const double std = std::sqrt(ss / n - mean * mean);
    CHECK(std == doctest::Approx(2.5).epsilon(0.05));
    CHECK(std::abs(mean) <= 3.0 * 2.5 / std::sqrt(n));
}

TEST_CASE("detection thresholds: floor, linearity, monotonicity") {
    const SpectralLibrary lib = demoLibraryCsf48();
    const GridSpec grid = defaultGrid();

    NoiseEstimate none;
    const auto atFloor = detectionThresholds(none, lib, grid);
    for (const auto& [id, t] : atFloor.perCompound) CHECK(t == kThresholdFloor);

    NoiseEstimate some;
    some.sigma = 1.0;
    const auto base = detectionThresholds(some, lib, grid);
    NoiseEstimate twice;
    twice.sigma = 2.0;
    const auto doubled = detectionThresholds(twice, lib, grid);
    for (const auto& [id, t] : base.perCompound)
        if (t > kThresholdFloor)
            CHECK(doubled.perCompound.at(id) == doctest::Approx(2.0 * t).epsilon(1e-12));

    // raising detectability never lowers the threshold
    SpectralLibrary harder = lib;
    harder.compounds[3].detectability = 4.0;
    const auto adjusted = detectionThresholds(some, harder, grid);
    CHECK(adjusted.perCompound.at(harder.compounds[3].id) >=
          base.perCompound.at(harder.compounds[3].id));
}

TEST_CASE("detection threshold SNR regimes: ~10 uM at low SNR, <2 uM at high SNR") {
    const SpectralLibrary lib = demoLibraryCsf48();
    const GridSpec grid = defaultGrid();

    std::vector<double> apexes;
    for (const auto& c : lib.compounds) apexes.push_back(unitApex(c, grid));
    std::sort(apexes.begin(), apexes.end());
    const double medianApex = apexes[apexes.size() / 2];

    // 128-scan-like noise: thresholds cluster around 10 uM
    NoiseEstimate serumLike;
    serumLike.sigma = 2.0 * medianApex;
    auto serum = detectionThresholds(serumLike, lib, grid);
    std::vector<double> t1;
    for (const auto& [id, t] : serum.perCompound) t1.push_back(t);
    std::sort(t1.begin(), t1.end());
    const double medianSerum = t1[t1.size() / 2];
    CHECK(medianSerum >= 5.0);
    CHECK(medianSerum <= 20.0);

    // 1024-scan-like: most thresholds below 2 uM
    NoiseEstimate csfLike;
    csfLike.sigma = 0.28 * medianApex;
    auto csf = detectionThresholds(csfLike, lib, grid);
    std::vector<double> t2;
    for (const auto& [id, t] : csf.perCompound) t2.push_back(t);
    std::sort(t2.begin(), t2.end());
    CHECK(t2[t2.size() / 2] < 2.0);
}

TEST_CASE("identification accuracy on fixed confusion fixtures") {
    const SpectralLibrary lib = uniformLibrary(50);
    const auto thresholds = flatThresholds(lib, 10.0);

    SUBCASE("estimate equals truth: accuracy 1") {
        Profile truth;
        for (std::size_t i = 0; i < 50; ++i)
            truth.concentrations[lib.compounds[i].id] = i < 30 ? 50.0 : 0.0;
        const auto report = identificationAccuracy(truth, truth, thresholds, lib);
        CHECK(report.identificationAccuracy == 1.0);
        CHECK(report.tp == 30);
        CHECK(report.tn == 20);
    }

    SUBCASE("everything absent on both sides: accuracy 1, all TN") {
        Profile empty;
        const auto report = identificationAccuracy(empty, empty, thresholds, lib);
        CHECK(report.identificationAccuracy == 1.0);
        CHECK(report.tn == 50);
    }

    SUBCASE("40 TP + 5 TN + 3 FP + 2 FN = 0.90") {
        Profile truth, estimate;
        for (std::size_t i = 0; i < 50; ++i) {
            const auto& id = lib.compounds[i].id;
            if (i < 40) {  // TP
                truth.concentrations[id] = 100.0;
                estimate.concentrations[id] = 95.0;
            } else if (i < 45) {  // TN
                truth.concentrations[id] = 0.0;
                estimate.concentrations[id] = 1.0;
            } else if (i < 48) {  // FP
                truth.concentrations[id] = 2.0;
                estimate.concentrations[id] = 60.0;
            } else {  // FN
                truth.concentrations[id] = 80.0;
                estimate.concentrations[id] = 3.0;
            }
        }
        const auto report = identificationAccuracy(truth, estimate, thresholds, lib);
        CHECK(report.tp == 40);
        CHECK(report.tn == 5);
        CHECK(report.fp == 3);
        CHECK(report.fn == 2);
        CHECK(report.identificationAccuracy == doctest::Approx(0.90).epsilon(1e-12));
        CHECK(report.tp + report.tn + report.fp + report.fn == 50);
    }

    SUBCASE("profiles naming unknown compounds are rejected") {
        Profile bogus;
        bogus.concentrations["nope"] = 1.0;
        CHECK_THROWS_AS(identificationAccuracy(bogus, bogus, thresholds, lib),
                        std::invalid_argument);
    }
}

TEST_CASE("quantification error: median of max-denominator relative errors") {
    const SpectralLibrary lib = uniformLibrary(1);
    const auto thresholds = flatThresholds(lib, 1.0);

    Profile truth, estimate;
    truth.concentrations["c00"] = 10.0;
    estimate.concentrations["c00"] = 8.0;
    CHECK(quantificationError(truth, estimate, thresholds, lib) ==
          doctest::Approx(0.2).epsilon(1e-12));
    // symmetric by construction
    CHECK(quantificationError(estimate, truth, thresholds, lib) ==
          doctest::Approx(0.2).epsilon(1e-12));
    CHECK(quantificationError(truth, truth, thresholds, lib) == 0.0);

    // no true positives: flag off, not an error
    Profile empty;
    const auto report = scoreProfiles(empty, empty, thresholds, lib);
    CHECK(!report.quantificationDefined);

    // invariant under uniform rescaling of both sides
    const SpectralLibrary lib5 = uniformLibrary(5);
    const auto thr5 = flatThresholds(lib5, 1.0);
    Profile a, b;
    RngStream rng(55);
    for (const auto& c : lib5.compounds) {
        a.concentrations[c.id] = rng.uniform(10.0, 100.0);
        b.concentrations[c.id] = rng.uniform(10.0, 100.0);
    }
    const double e1 = quantificationError(a, b, thr5, lib5);
    Profile a2 = a, b2 = b;
    for (auto& [id, v] : a2.concentrations) v *= 7.5;
    for (auto& [id, v] : b2.concentrations) v *= 7.5;
    const auto thrScaled = flatThresholds(lib5, 7.5);
    const double e2 = quantificationError(a2, b2, thrScaled, lib5);
    CHECK(e1 == doctest::Approx(e2).epsilon(1e-12));
}

TEST_CASE("identification accuracy is invariant under compound relabeling") {
    SpectralLibrary lib = uniformLibrary(8);
    const auto thresholds = flatThresholds(lib, 10.0);
    Profile truth, estimate;
    RngStream rng(56);
    for (const auto& c : lib.compounds) {
        truth.concentrations[c.id] = rng.bernoulli(0.5) ? rng.uniform(20.0, 80.0) : 0.0;
        estimate.concentrations[c.id] = rng.bernoulli(0.5) ? rng.uniform(20.0, 80.0) : 0.0;
    }
    const auto before = scoreProfiles(truth, estimate, thresholds, lib);
    std::reverse(lib.compounds.begin(), lib.compounds.end());
    const auto after = scoreProfiles(truth, estimate, thresholds, lib);
    CHECK(before.identificationAccuracy == after.identificationAccuracy);
    CHECK(before.tp == after.tp);
    CHECK(before.quantificationError == after.quantificationError);
}

TEST_CASE("accuracy report serializes to JSON and CSV") {
    const SpectralLibrary lib = uniformLibrary(3);
    const auto thresholds = flatThresholds(lib, 10.0);
    Profile truth, estimate;
    truth.concentrations["c00"] = 50.0;
    estimate.concentrations["c00"] = 45.0;
    const auto report = scoreProfiles(truth, estimate, thresholds, lib);
    const std::string jsonText = accuracyReportToJson(report);
    CHECK(jsonText.find("identificationAccuracy") != std::string::npos);
    const std::string csvText = accuracyReportToCsv(report);
    CHECK(csvText.rfind("compound,truth_uM,est_uM,threshold_uM,verdict", 0) == 0);
    CHECK(csvText.find("c00,50,45,10,TP") != std::string::npos);
}
