#include "nmrprof/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nmrprof/rng.hpp"

namespace nmrprof {

using nlohmann::json;

GroundTruth sampleProfile(const SpectralLibrary& library, const MixtureSpec& spec) {
    for (const auto& compound : library.compounds)
        if (!spec.perCompound.count(compound.id))
            throw std::invalid_argument("mixture spec does not cover compound '" +
                                        compound.id + "'");

    GroundTruth truth;
    truth.noiseSigma = spec.noiseSigma;
    truth.seed = spec.seed;

    std::size_t compoundIdx = 0, clusterIdx = 0;
    for (const auto& compound : library.compounds) {
        const auto& mix = spec.perCompound.at(compound.id);
        RngStream rng(spec.seed, 1, compoundIdx++);
        Micromolar conc = 0.0;
        if (rng.bernoulli(mix.presenceProbability))
            conc = rng.uniform(mix.concentrationLo, mix.concentrationHi);
        truth.profile.concentrations[compound.id] = conc;
        for (const auto& cluster : compound.clusters) {
            RngStream crng(spec.seed, 2, clusterIdx++);
            truth.profile.shifts[cluster.id] =
                crng.uniform(cluster.shiftWindow.lo, cluster.shiftWindow.hi);
        }
    }
    return truth;
}

Spectrum generateSpectrum(const SpectralLibrary& library, const GroundTruth& truth,
                          const GridSpec& grid) {
    Spectrum out = renderMixture(library, truth.profile, grid);
    if (truth.noiseSigma > 0.0) {
        RngStream rng(truth.seed, 3);
        for (auto& v : out.intensities) v += truth.noiseSigma * rng.normal();
    }
    return out;
}

double defaultNoiseSigma(const SpectralLibrary& library, const MixtureSpec& spec,
                         const GridSpec& grid) {
    double tallest = 0.0;
    for (const auto& compound : library.compounds) {
        auto it = spec.perCompound.find(compound.id);
        if (it == spec.perCompound.end()) continue;
        const double median =
            0.5 * (it->second.concentrationLo + it->second.concentrationHi);
        tallest = std::max(tallest, median * unitApex(compound, grid));
    }
    return 0.005 * tallest;
}

MixtureSpec demoMixtureSpec(const SpectralLibrary& library, std::uint64_t seed,
                            double presenceProbability, Micromolar lo, Micromolar hi,
                            double noiseSigma) {
    MixtureSpec spec;
    spec.seed = seed;
    for (const auto& compound : library.compounds) {
        CompoundMixture mix;
        if (compound.id == library.referenceCompound) {
            mix.presenceProbability = 1.0;
            mix.concentrationLo = mix.concentrationHi = library.referenceConcentration;
        } else {
            mix.presenceProbability = presenceProbability;
            mix.concentrationLo = lo;
            mix.concentrationHi = hi;
        }
        spec.perCompound[compound.id] = mix;
    }
    spec.noiseSigma =
        noiseSigma >= 0.0 ? noiseSigma : defaultNoiseSigma(library, spec, defaultGrid());
    return spec;
}

namespace {

/// Multiplet: n lines, binomial amplitude ratios, J spacing, centered at 0.
std::vector<PeakShape> makeMultiplet(int n, double j, double fwhm, double apexAmp) {
    std::vector<double> binom(static_cast<std::size_t>(n), 1.0);
    for (int r = 1; r < n; ++r)
        for (int k = r; k > 0; --k)
            binom[static_cast<std::size_t>(k)] += binom[static_cast<std::size_t>(k - 1)];
    const double peak = *std::max_element(binom.begin(), binom.end());

    // keep wide multiplets inside a realistic span
    const double spacing = n > 1 ? std::min(j, 0.06 / (n - 1)) : 0.0;
    std::vector<PeakShape> peaks;
    for (int k = 0; k < n; ++k) {
        PeakShape p;
        p.amplitude = apexAmp * binom[static_cast<std::size_t>(k)] / peak;
        p.centerOffset = (k - 0.5 * (n - 1)) * spacing;
        p.widthParam = fwhm * fwhm;
        peaks.push_back(p);
    }
    return peaks;
}

struct LibraryPlan {
    std::vector<std::pair<std::string, std::string>> names;  // id, display name
    std::vector<int> clustersPerCompound;
    std::size_t totalPeaks = 0;
    double crowdedFraction = 0.0;
    std::uint64_t seed = 0;
};

SpectralLibrary buildLibrary(const LibraryPlan& plan, const std::string& biofluid) {
    SpectralLibrary lib;
    lib.biofluidTag = biofluid;
    lib.referenceCompound = "dss";
    lib.referenceConcentration = 500.0;

    std::size_t totalClusters = 0;
    for (int c : plan.clustersPerCompound) totalClusters += static_cast<std::size_t>(c);

    // peak counts per cluster: cycle through a multiplet menu, then nudge
    // the larger clusters until the total is exact
    static const int menu[20] = {1, 4, 6, 2, 8, 5, 3, 12, 2, 7,
                                 9, 1, 5, 4, 10, 3, 6, 2, 9, 7};
    std::vector<int> peakCounts(totalClusters);
    std::size_t sum = 0;
    for (std::size_t i = 0; i < totalClusters; ++i) {
        peakCounts[i] = menu[i % 20];
        sum += static_cast<std::size_t>(peakCounts[i]);
    }
    std::size_t guard = 0;
    while (sum > plan.totalPeaks) {
        const std::size_t i = guard++ % totalClusters;
        if (peakCounts[totalClusters - 1 - i] > 1) {
            --peakCounts[totalClusters - 1 - i];
            --sum;
        }
    }
    guard = 0;
    while (sum < plan.totalPeaks) {
        const std::size_t i = guard++ % totalClusters;
        if (peakCounts[i] >= 4) {
            ++peakCounts[i];
            ++sum;
        }
    }

    // cluster positions: a crowded band around 3.1-4.25 ppm plus sparse
    // coverage elsewhere, keeping the water region clean
    std::size_t g = 0;
    for (std::size_t ci = 0; ci < plan.names.size(); ++ci) {
        Compound compound;
        compound.id = plan.names[ci].first;
        compound.name = plan.names[ci].second;
        compound.detectability = 1.0;
        const int nClusters = plan.clustersPerCompound[ci];
        for (int k = 0; k < nClusters; ++k, ++g) {
            RngStream rng(plan.seed, 10, g);
            Cluster cluster;
            cluster.id = compound.id + "." + std::to_string(k + 1);

            const bool crowded = rng.uniform() < plan.crowdedFraction;
            Ppm center;
            if (crowded) {
                center = rng.uniform(3.1, 4.25);
            } else {
                const double u = rng.uniform();
                center = u < 0.37 ? rng.uniform(0.8, 3.05) : rng.uniform(5.1, 9.6);
            }
            cluster.nominalCenter = center;
            const Ppm halfWindow = (g % 13 == 5) ? 0.035 : kDefaultShiftWindowHalfWidth;
            cluster.shiftWindow = {center - halfWindow, center + halfWindow};

            const double jSpacing = rng.uniform(0.008, 0.016);
            const double fwhm = rng.uniform(0.0009, 0.0016);
            const double amp = rng.uniform(0.8, 2.6);
            cluster.peaks = makeMultiplet(peakCounts[g], jSpacing, fwhm, amp);
            compound.clusters.push_back(std::move(cluster));
        }
        lib.compounds.push_back(std::move(compound));
    }

    // reference singlet anchoring 0.0 ppm
    Compound dss;
    dss.id = "dss";
    dss.name = "DSS";
    dss.detectability = 1.0;
    Cluster ref;
    ref.id = "dss.1";
    ref.nominalCenter = 0.0;
    ref.shiftWindow = {-0.01, 0.01};
    PeakShape refPeak;
    refPeak.amplitude = 3.0;
    refPeak.centerOffset = 0.0;
    refPeak.widthParam = 0.0012 * 0.0012;
    ref.peaks.push_back(refPeak);
    dss.clusters.push_back(std::move(ref));
    lib.compounds.push_back(std::move(dss));

    requireValidLibrary(lib);
    return lib;
}

} // namespace

SpectralLibrary demoLibrary15() {
    LibraryPlan plan;
    plan.names = {{"ala", "Alanine"},     {"lac", "Lactate"},    {"glc", "Glucose"},
                  {"cit", "Citrate"},     {"crn", "Creatinine"}, {"gln", "Glutamine"},
                  {"val", "Valine"},      {"thr", "Threonine"},  {"gly", "Glycine"},
                  {"ace", "Acetate"},     {"pyr", "Pyruvate"},   {"suc", "Succinate"},
                  {"bhb", "3-Hydroxybutyrate"},                  {"ino", "myo-Inositol"}};
    plan.clustersPerCompound.assign(plan.names.size(), 3);
    plan.totalPeaks = 148;
    plan.crowdedFraction = 0.25;
    plan.seed = 0x15d43a0b77e2c9f1ULL;
    return buildLibrary(plan, "demo15");
}

SpectralLibrary demoLibraryCsf48() {
    LibraryPlan plan;
    plan.names = {
        {"ala", "Alanine"},        {"gly", "Glycine"},       {"lac", "Lactate"},
        {"glc", "Glucose"},        {"cit", "Citrate"},       {"crn", "Creatinine"},
        {"gln", "Glutamine"},      {"glu", "Glutamate"},     {"val", "Valine"},
        {"leu", "Leucine"},        {"ile", "Isoleucine"},    {"thr", "Threonine"},
        {"ser", "Serine"},         {"lys", "Lysine"},        {"his", "Histidine"},
        {"phe", "Phenylalanine"},  {"tyr", "Tyrosine"},      {"trp", "Tryptophan"},
        {"met", "Methionine"},     {"pro", "Proline"},       {"asn", "Asparagine"},
        {"asp", "Aspartate"},      {"arg", "Arginine"},      {"orn", "Ornithine"},
        {"bet", "Betaine"},        {"cho", "Choline"},       {"car", "Carnitine"},
        {"tau", "Taurine"},        {"cre", "Creatine"},      {"ace", "Acetate"},
        {"for", "Formate"},        {"pyr", "Pyruvate"},      {"suc", "Succinate"},
        {"fum", "Fumarate"},       {"mal", "Malate"},        {"act", "Acetone"},
        {"aca", "Acetoacetate"},   {"bhb", "3-Hydroxybutyrate"},
        {"eth", "Ethanol"},        {"mth", "Methanol"},      {"glr", "Glycerol"},
        {"ino", "myo-Inositol"},   {"man", "Mannose"},       {"fru", "Fructose"},
        {"gal", "Galactose"},      {"ure", "Urea"},          {"dma", "Dimethylamine"}};
    // 38 compounds with 4 clusters + 9 with 3 = 179, plus the reference = 180
    plan.clustersPerCompound.assign(plan.names.size(), 4);
    for (std::size_t i = 38; i < plan.names.size(); ++i) plan.clustersPerCompound[i] = 3;
    plan.totalPeaks = 945;  // 946 with the reference singlet
    plan.crowdedFraction = 0.33;
    plan.seed = 0x48cfab1e92d07531ULL;
    return buildLibrary(plan, "csf48");
}

std::string groundTruthToJson(const GroundTruth& truth) {
    json doc;
    doc["seed"] = truth.seed;
    doc["noiseSigma"] = truth.noiseSigma;
    doc["concentrations_uM"] = truth.profile.concentrations;
    doc["shifts_ppm"] = truth.profile.shifts;
    return doc.dump(2) + "\n";
}

GroundTruth groundTruthFromJson(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError({origin + ": " + e.what()});
    }
    GroundTruth truth;
    try {
        truth.seed = doc.at("seed").get<std::uint64_t>();
        truth.noiseSigma = doc.at("noiseSigma").get<double>();
        truth.profile.concentrations =
            doc.at("concentrations_uM").get<std::map<std::string, double>>();
        truth.profile.shifts = doc.at("shifts_ppm").get<std::map<std::string, double>>();
    } catch (const json::exception& e) {
        throw ValidationError({origin + ": " + e.what()});
    }
    return truth;
}

void writeGroundTruth(const GroundTruth& truth, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file '" + path + "'");
    out << groundTruthToJson(truth);
}

GroundTruth readGroundTruth(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError({"cannot open file '" + path + "'"});
    std::ostringstream ss;
    ss << in.rdbuf();
    return groundTruthFromJson(ss.str(), path);
}

} // namespace nmrprof
