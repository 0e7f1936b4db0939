#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "nmrprof/model.hpp"
#include "nmrprof/types.hpp"

namespace nmrprof {

/// Per-compound sampling rule for synthetic mixtures.
struct CompoundMixture {
    double presenceProbability = 1.0;
    Micromolar concentrationLo = 0.0;
    Micromolar concentrationHi = 0.0;
};

struct MixtureSpec {
    std::map<std::string, CompoundMixture> perCompound;  // must cover the library
    double noiseSigma = 0.0;
    std::uint64_t seed = 0;
};

/// A sampled mixture with its generating parameters; the answer key for
/// round-trip validation.
struct GroundTruth {
    Profile profile;
    double noiseSigma = 0.0;
    std::uint64_t seed = 0;
};

/// Draw presence, concentration and cluster shifts for every compound.
/// Streams are derived per compound and cluster from the seed, so the same
/// seed always yields the same mixture.
GroundTruth sampleProfile(const SpectralLibrary& library, const MixtureSpec& spec);

/// Render the truth and add i.i.d. Gaussian noise per grid point.
Spectrum generateSpectrum(const SpectralLibrary& library, const GroundTruth& truth,
                          const GridSpec& grid);

/// Mixture spec with the reference compound pinned to its known
/// concentration and every other compound present with the given
/// probability, concentrations uniform in [lo, hi].
MixtureSpec demoMixtureSpec(const SpectralLibrary& library, std::uint64_t seed,
                            double presenceProbability = 0.7, Micromolar lo = 30.0,
                            Micromolar hi = 300.0, double noiseSigma = -1.0);

/// Default synthetic noise level: 0.5% of the tallest compound apex
/// rendered at the midpoint of its concentration range.
double defaultNoiseSigma(const SpectralLibrary& library, const MixtureSpec& spec,
                         const GridSpec& grid);

/// Small demonstration library: 15 compounds, modest overlap.
SpectralLibrary demoLibrary15();

/// Demonstration library with the footprint of a full biofluid library:
/// 48 compounds, 180 clusters, 946 peaks.
SpectralLibrary demoLibraryCsf48();

std::string groundTruthToJson(const GroundTruth& truth);
GroundTruth groundTruthFromJson(const std::string& text, const std::string& origin);
void writeGroundTruth(const GroundTruth& truth, const std::string& path);
GroundTruth readGroundTruth(const std::string& path);

} // namespace nmrprof
