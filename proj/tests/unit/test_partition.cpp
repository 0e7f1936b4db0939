#include <algorithm>
#include <cmath>
#include <set>

#include <doctest.h>

#include "nmrprof/partition.hpp"
#include "nmrprof/rng.hpp"
#include "nmrprof/synth.hpp"

using namespace nmrprof;

namespace {

Cluster singlePeakCluster(const std::string& id, double amplitude, Ppm center,
                          double widthParam, Ppm halfWindow = 0.0125) {
    Cluster k;
    k.id = id;
    k.nominalCenter = center;
    k.shiftWindow = {center - halfWindow, center + halfWindow};
    k.peaks.push_back({amplitude, 0.0, widthParam});
    return k;
}

Spectrum flatSpectrum(double value, Ppm start = 0.0, Ppm step = 0.0002,
                      std::size_t n = 20001) {
    return Spectrum(start, step, std::vector<double>(n, value));
}

} // namespace

TEST_CASE("bound on a flat spectrum is value / apex") {
    const Spectrum spec = flatSpectrum(10.0);
    Cluster k = singlePeakCluster("k", 2.0, 2.0, 1e-6);
    // window endpoints on the grid lattice: the constant-ratio minimum is
    // then attained exactly at the apex for every trial shift
    k.shiftWindow = {spec.ppmAt(9938), spec.ppmAt(10062)};
    k.nominalCenter = spec.ppmAt(10000);
    NoiseEstimate noise;  // sigma 0
    const double bound = boundConcentration(spec, k, noise);
    CHECK(bound == doctest::Approx(5.0).epsilon(1e-9));

    // off-lattice windows may only push the bound up (conservative), and
    // converge back to value/apex as the grid refines relative to the line
    // width
    Cluster off = singlePeakCluster("k", 2.0, 2.0, 1e-6, 0.0125);
    const double coarseBound = boundConcentration(spec, off, noise);
    CHECK(coarseBound >= 5.0 - 1e-12);
    CHECK(coarseBound <= 5.0 * 1.05);
    const Spectrum fine = flatSpectrum(10.0, 1.5, 0.00002, 50001);
    const double fineBound = boundConcentration(fine, off, noise);
    CHECK(fineBound >= 5.0 - 1e-12);
    CHECK(fineBound <= 5.0 * 1.001);
}

TEST_CASE("bound is self-consistent on a pure render of the cluster") {
    SUBCASE("single peak") {
        const Cluster k = singlePeakCluster("k", 1.7, 1.4, 2.25e-6);
        Compound c;
        c.id = "c";
        c.name = "C";
        c.clusters.push_back(k);
        const GridSpec grid{1.0, 0.0002, 4001};
        const double conc = 83.0;
        Spectrum spec = renderCompound(c, conc, {{"k", 1.4}}, grid);
        NoiseEstimate noise;
        CHECK(boundConcentration(spec, k, noise) == doctest::Approx(conc).epsilon(1e-6));
    }
    SUBCASE("doublet") {
        Cluster k = singlePeakCluster("k", 1.0, 1.4, 2.25e-6);
        k.peaks.push_back({0.9, 0.011, 2.25e-6});
        Compound c;
        c.id = "c";
        c.name = "C";
        c.clusters.push_back(k);
        const GridSpec grid{1.0, 0.0002, 4001};
        Spectrum spec = renderCompound(c, 42.0, {{"k", 1.4}}, grid);
        NoiseEstimate noise;
        CHECK(boundConcentration(spec, k, noise) == doctest::Approx(42.0).epsilon(1e-6));
    }
}

TEST_CASE("bound requires the window to sit inside the spectrum domain") {
    const Cluster k = singlePeakCluster("k", 2.0, -0.9, 1e-6, 0.3);
    NoiseEstimate noise;
    CHECK_THROWS_AS(boundConcentration(flatSpectrum(1.0), k, noise), std::domain_error);
}

TEST_CASE("bounds are sound on rendered mixtures") {
    const SpectralLibrary lib = demoLibrary15();
    const GridSpec grid = defaultGrid();
    int checked = 0;
    for (int trial = 0; trial < 3; ++trial) {
        const GroundTruth truth =
            sampleProfile(lib, demoMixtureSpec(lib, 40 + trial, 0.8, 30, 300, 0.0));
        const Spectrum spec = generateSpectrum(lib, truth, grid);
        NoiseEstimate noise;  // noiseless: strict soundness
        const auto bounds = boundAll(spec, lib, noise);
        for (const auto& compound : lib.compounds) {
            const double x = truth.profile.concentrationOf(compound.id);
            CHECK(x <= bounds.compoundBound(compound.id) * (1.0 + 1e-9));
            ++checked;
        }
    }
    CHECK(checked == 45);
}

TEST_CASE("per-compound bound is the min over its clusters") {
    const SpectralLibrary lib = demoLibrary15();
    const Spectrum spec = flatSpectrum(5.0, -1.0, 0.0002, 70001);
    NoiseEstimate noise;
    const auto bounds = boundAll(spec, lib, noise);
    for (const auto& compound : lib.compounds) {
        double minCluster = std::numeric_limits<double>::max();
        for (const auto& k : compound.clusters)
            minCluster = std::min(minCluster, bounds.perCluster.at(k.id));
        CHECK(bounds.perCompound.at(compound.id) == doctest::Approx(minCluster));
    }
}

TEST_CASE("influence interval: empty cases and the closed-form single peak") {
    NoiseEstimate noise;
    noise.sigma = 0.5;
    const Cluster k = singlePeakCluster("k", 2.0, 1.0, 1e-6);
    CHECK(!influenceInterval(k, 0.0, noise).has_value());

    const double bound = 95.0;
    const auto iv = influenceInterval(k, bound, noise);
    REQUIRE(iv.has_value());
    // solve bound*a*w/(w + 4 d^2) = sigma/5 for d
    const double t = noise.sigma / 5.0;
    const double d = 0.5 * std::sqrt(1e-6 * (bound * 2.0 / t - 1.0));
    CHECK(iv->lo == doctest::Approx(k.shiftWindow.lo - d).epsilon(1e-6));
    CHECK(iv->hi == doctest::Approx(k.shiftWindow.hi + d).epsilon(1e-6));

    // a cluster too weak to ever cross the threshold has no interval
    const Cluster tiny = singlePeakCluster("t", 1e-6, 1.0, 1e-6);
    CHECK(!influenceInterval(tiny, 1e-3, noise).has_value());
}

TEST_CASE("influence soundness: out-of-interval contribution below sigma/5") {
    const SpectralLibrary lib = demoLibrary15();
    NoiseEstimate noise;
    noise.sigma = 1.5;
    const GridSpec grid = defaultGrid();
    for (const auto& compound : lib.compounds) {
        for (const auto& k : compound.clusters) {
            const double bound = 400.0;
            const auto iv = influenceInterval(k, bound, noise);
            REQUIRE(iv.has_value());
            for (double frac : {0.0, 0.5, 1.0}) {
                const Ppm delta =
                    k.shiftWindow.lo + frac * (k.shiftWindow.hi - k.shiftWindow.lo);
                Compound solo;
                solo.id = "solo";
                solo.name = "solo";
                Cluster kk = k;
                kk.shiftWindow = {delta - 1e-9, delta + 1e-9};
                solo.clusters.push_back(kk);
                const Spectrum r = renderCompound(solo, bound, {{k.id, delta}}, grid);
                for (Index i = 0; i < r.size(); i += 3) {
                    const Ppm p = r.ppmAt(i);
                    if (p >= iv->lo && p <= iv->hi) continue;
                    CHECK(r.intensities[i] < noise.sigma / 5.0);
                }
            }
        }
    }
}

TEST_CASE("sweep-line partition: disjoint and overlapping intervals") {
    SpectralLibrary lib;
    lib.biofluidTag = "t";
    lib.referenceCompound = "a";
    lib.referenceConcentration = 500.0;
    Compound a, b;
    a.id = "a";
    a.name = "A";
    a.clusters.push_back(singlePeakCluster("a.1", 1.0, 2.0, 1e-6));
    b.id = "b";
    b.name = "B";
    b.clusters.push_back(singlePeakCluster("b.1", 1.0, 6.0, 1e-6));
    lib.compounds = {a, b};

    SUBCASE("disjoint: bg, {A}, bg, {B}, bg") {
        std::map<std::string, PpmInterval> iv{{"a.1", {1.0, 3.0}}, {"b.1", {5.0, 7.0}}};
        auto regions = partitionRegions(lib, iv, {0.0, 10.0});
        REQUIRE(regions.size() == 5);
        CHECK(regions[0].background());
        CHECK(regions[1].clusterIds == std::vector<std::string>{"a.1"});
        CHECK(regions[2].background());
        CHECK(regions[3].clusterIds == std::vector<std::string>{"b.1"});
        CHECK(regions[4].background());
        CHECK(regions[1].compoundIds == std::vector<std::string>{"a"});
        // the union tiles the domain
        CHECK(regions.front().interval.lo == 0.0);
        CHECK(regions.back().interval.hi == 10.0);
        for (std::size_t i = 0; i + 1 < regions.size(); ++i)
            CHECK(regions[i].interval.hi == regions[i + 1].interval.lo);
    }

    SUBCASE("overlapping: {A} on [1,2), {A,B} on [2,3), {B} on [3,4)") {
        std::map<std::string, PpmInterval> iv{{"a.1", {1.0, 3.0}}, {"b.1", {2.0, 4.0}}};
        auto regions = partitionRegions(lib, iv, {0.0, 10.0});
        REQUIRE(regions.size() == 5);
        CHECK(regions[1].clusterIds == std::vector<std::string>{"a.1"});
        CHECK(regions[2].clusterIds == std::vector<std::string>{"a.1", "b.1"});
        CHECK(regions[3].clusterIds == std::vector<std::string>{"b.1"});
        CHECK(regions[2].interval.lo == doctest::Approx(2.0));
        CHECK(regions[2].interval.hi == doctest::Approx(3.0));
    }

    SUBCASE("solvent exclusions are removed from the partition") {
        std::map<std::string, PpmInterval> iv{{"a.1", {1.0, 3.0}}};
        auto regions = partitionRegions(lib, iv, {0.0, 10.0}, {{4.5, 4.9}});
        for (const auto& r : regions) {
            CHECK(!(r.interval.lo >= 4.5 && r.interval.hi <= 4.9));
        }
        double covered = 0.0;
        for (const auto& r : regions) covered += r.interval.width();
        CHECK(covered == doctest::Approx(10.0 - 0.4).epsilon(1e-12));
    }
}

TEST_CASE("partition exactness against brute-force membership") {
    const SpectralLibrary lib = demoLibraryCsf48();
    NoiseEstimate noise;
    noise.sigma = 2.0;
    Spectrum spec = flatSpectrum(400.0, -1.0, 0.0002, 70001);
    const auto bounds = boundAll(spec, lib, noise);
    const auto intervals = influenceAll(lib, bounds, noise, spec.domain());
    const auto regions = partitionRegions(lib, intervals, spec.domain());

    RngStream rng(77);
    for (int i = 0; i < 10000; ++i) {
        const Ppm p = rng.uniform(-1.0, 13.0);
        // brute force: which influence intervals contain p
        std::set<std::string> expected;
        for (const auto& [id, iv] : intervals)
            if (p >= iv.lo && p < iv.hi) expected.insert(id);
        const Region* owner = nullptr;
        for (const auto& r : regions)
            if (p >= r.interval.lo && p < r.interval.hi) {
                owner = &r;
                break;
            }
        REQUIRE(owner != nullptr);
        std::set<std::string> got(owner->clusterIds.begin(), owner->clusterIds.end());
        CHECK(got == expected);
    }
}

TEST_CASE("biofluid-scale partition has a few hundred regions, bounded multiplicity") {
    const SpectralLibrary lib = demoLibraryCsf48();
    const GridSpec grid = defaultGrid();
    const GroundTruth truth = sampleProfile(lib, demoMixtureSpec(lib, 7));
    const Spectrum spec = generateSpectrum(lib, truth, grid);
    NoiseEstimate noise;
    noise.sigma = truth.noiseSigma;
    const auto bounds = boundAll(spec, lib, noise);
    const auto intervals = influenceAll(lib, bounds, noise, spec.domain());
    const auto regions = partitionRegions(lib, intervals, spec.domain());

    std::size_t nonBackground = 0, maxClusters = 0;
    for (const auto& r : regions) {
        if (!r.background()) ++nonBackground;
        maxClusters = std::max(maxClusters, r.clusterIds.size());
    }
    CHECK(regions.size() >= 150);
    CHECK(regions.size() <= 700);
    CHECK(nonBackground >= 100);
    CHECK(maxClusters >= 2);
    CHECK(maxClusters <= 30);
}

TEST_CASE("factor graph adjacency mirrors region membership") {
    const SpectralLibrary lib = demoLibrary15();
    const GridSpec grid = defaultGrid();
    const GroundTruth truth = sampleProfile(lib, demoMixtureSpec(lib, 9));
    const Spectrum spec = generateSpectrum(lib, truth, grid);
    NoiseEstimate noise;
    noise.sigma = truth.noiseSigma;
    const auto bounds = boundAll(spec, lib, noise);
    const auto intervals = influenceAll(lib, bounds, noise, spec.domain());
    const auto regions = partitionRegions(lib, intervals, spec.domain());
    const FactorGraph graph = buildFactorGraph(regions, lib, bounds);

    CHECK(graph.variables.size() == lib.compounds.size() + lib.clusterCount());

    for (const auto& factor : graph.factors) {
        const Region& region = graph.regions[factor.regionIndex];
        std::set<std::size_t> expected;
        for (const auto& id : region.clusterIds) expected.insert(graph.variableIndex.at(id));
        for (const auto& id : region.compoundIds)
            expected.insert(graph.variableIndex.at(id));
        std::set<std::size_t> got(factor.variableIndices.begin(),
                                  factor.variableIndices.end());
        CHECK(got == expected);
    }

    // degree of a shift variable = number of regions containing its cluster
    for (const auto& compound : lib.compounds)
        for (const auto& k : compound.clusters) {
            std::size_t count = 0;
            for (const auto& r : regions)
                if (std::find(r.clusterIds.begin(), r.clusterIds.end(), k.id) !=
                    r.clusterIds.end())
                    ++count;
            CHECK(graph.degree(graph.variableIndex.at(k.id)) == count);
        }

    // single region with one single-cluster compound: 1 factor, 2 vars, 2 edges
    SpectralLibrary solo;
    solo.biofluidTag = "t";
    solo.referenceCompound = "a";
    solo.referenceConcentration = 500.0;
    Compound a;
    a.id = "a";
    a.name = "A";
    a.clusters.push_back(singlePeakCluster("a.1", 1.0, 2.0, 1e-6));
    solo.compounds.push_back(a);
    ConcentrationBound soloBounds;
    soloBounds.perCluster["a.1"] = 10.0;
    soloBounds.perCompound["a"] = 10.0;
    std::map<std::string, PpmInterval> iv{{"a.1", {1.9, 2.1}}};
    const auto soloRegions = partitionRegions(solo, iv, {0.0, 4.0});
    const FactorGraph soloGraph = buildFactorGraph(soloRegions, solo, soloBounds);
    CHECK(soloGraph.factors.size() == 1);
    CHECK(soloGraph.variables.size() == 2);
    CHECK(soloGraph.factors[0].variableIndices.size() == 2);
}
