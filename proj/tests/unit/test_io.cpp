#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include <doctest.h>

#include "nmrprof/io.hpp"
#include "nmrprof/synth.hpp"

using namespace nmrprof;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("nmrprof_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const char* name) const { return (path / name).string(); }
    static inline int counter = 0;
};

} // namespace

TEST_CASE("library JSON round-trips structurally") {
    TempDir tmp;
    const SpectralLibrary lib = demoLibraryCsf48();
    saveLibrary(lib, tmp.file("lib.json"));
    const SpectralLibrary back = loadLibrary(tmp.file("lib.json"));

    CHECK(back.compounds.size() == lib.compounds.size());
    CHECK(back.clusterCount() == lib.clusterCount());
    CHECK(back.peakCount() == lib.peakCount());
    CHECK(back.referenceCompound == lib.referenceCompound);
    REQUIRE(back.compounds.size() == lib.compounds.size());
    for (std::size_t i = 0; i < lib.compounds.size(); ++i) {
        CHECK(back.compounds[i].id == lib.compounds[i].id);
        REQUIRE(back.compounds[i].clusters.size() == lib.compounds[i].clusters.size());
        for (std::size_t k = 0; k < lib.compounds[i].clusters.size(); ++k) {
            const auto& a = lib.compounds[i].clusters[k];
            const auto& b = back.compounds[i].clusters[k];
            CHECK(b.nominalCenter == doctest::Approx(a.nominalCenter).epsilon(1e-15));
            REQUIRE(b.peaks.size() == a.peaks.size());
            for (std::size_t p = 0; p < a.peaks.size(); ++p) {
                CHECK(b.peaks[p].amplitude ==
                      doctest::Approx(a.peaks[p].amplitude).epsilon(1e-15));
                CHECK(b.peaks[p].widthParam ==
                      doctest::Approx(a.peaks[p].widthParam).epsilon(1e-15));
            }
        }
    }
}

TEST_CASE("library validation errors carry every offending entry") {
    TempDir tmp;
    {
        std::ofstream out(tmp.file("bad.json"));
        out << R"({"biofluid":"t","referenceCompound":"a","referenceConcentration_uM":500,
                   "compounds":[
                     {"id":"a","name":"A","clusters":[
                        {"id":"a.1","nominalCenter_ppm":1.0,"window_ppm":[1.2,0.8],
                         "peaks":[{"amplitude":1,"centerOffset_ppm":0,"widthParam_ppm2":1e-6}]}]},
                     {"id":"a","name":"Dup","clusters":[
                        {"id":"a2.1","nominalCenter_ppm":2.0,
                         "peaks":[{"amplitude":-3,"centerOffset_ppm":0,"widthParam_ppm2":1e-6}]}]}
                   ]})";
    }
    try {
        loadLibrary(tmp.file("bad.json"));
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.issues().size() >= 3);  // inverted window, duplicate id, bad amplitude
    }
}

TEST_CASE("spectrum CSV round-trip and grid checks") {
    TempDir tmp;
    Spectrum s(-0.5, 0.0002, {1.0, 2.5, -0.25, 1e-12, 42.0});
    writeSpectrumCsv(s, tmp.file("s.csv"));
    Spectrum back = readSpectrumCsv(tmp.file("s.csv"));
    CHECK(back.startPpm == doctest::Approx(s.startPpm).epsilon(1e-15));
    CHECK(back.stepPpm == doctest::Approx(s.stepPpm).epsilon(1e-12));
    REQUIRE(back.size() == s.size());
    for (Index i = 0; i < s.size(); ++i)
        CHECK(back.intensities[i] == doctest::Approx(s.intensities[i]).epsilon(1e-15));

    {
        std::ofstream out(tmp.file("bad.csv"));
        out << "ppm,intensity\n0.0,1\n0.1,2\n0.3,3\n";  // non-uniform step
    }
    CHECK_THROWS_AS(readSpectrumCsv(tmp.file("bad.csv")), ValidationError);

    {
        std::ofstream out(tmp.file("short.csv"));
        out << "ppm,intensity\n0.0,1\n";
    }
    CHECK_THROWS_AS(readSpectrumCsv(tmp.file("short.csv")), ValidationError);
}

TEST_CASE("FID JSON round-trip enforces dwell/sweep consistency") {
    TempDir tmp;
    Fid fid;
    fid.dwellTime = 1e-4;
    fid.sweepWidth = 1e4;
    fid.spectrometerFreq = 600.0;
    for (int i = 0; i < 16; ++i) {
        fid.re.push_back(std::cos(0.1 * i));
        fid.im.push_back(std::sin(0.1 * i));
    }
    writeFidJson(fid, tmp.file("fid.json"));
    Fid back = readFidJson(tmp.file("fid.json"));
    REQUIRE(back.size() == fid.size());
    CHECK(back.dwellTime == doctest::Approx(fid.dwellTime).epsilon(1e-15));

    {
        std::ofstream out(tmp.file("bad.json"));
        out << R"({"dwellTime_s":1e-4,"spectrometerFreq_MHz":600,"sweepWidth_Hz":9000,
                   "samples":[[1,0]]})";
    }
    CHECK_THROWS_AS(readFidJson(tmp.file("bad.json")), ValidationError);
}

TEST_CASE("ground truth serialization is lossless") {
    const SpectralLibrary lib = demoLibrary15();
    const GroundTruth truth = sampleProfile(lib, demoMixtureSpec(lib, 99));
    const GroundTruth back = groundTruthFromJson(groundTruthToJson(truth), "mem");
    CHECK(back.seed == truth.seed);
    CHECK(back.noiseSigma == truth.noiseSigma);
    REQUIRE(back.profile.concentrations.size() == truth.profile.concentrations.size());
    for (const auto& [id, c] : truth.profile.concentrations)
        CHECK(back.profile.concentrations.at(id) == c);  // bit-exact
    for (const auto& [id, d] : truth.profile.shifts)
        CHECK(back.profile.shifts.at(id) == d);
}
