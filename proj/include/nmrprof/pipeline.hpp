#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nmrprof/infer.hpp"
#include "nmrprof/io.hpp"
#include "nmrprof/metrics.hpp"
#include "nmrprof/model.hpp"
#include "nmrprof/partition.hpp"
#include "nmrprof/preprocess.hpp"
#include "nmrprof/synth.hpp"
#include "nmrprof/types.hpp"

namespace nmrprof {

struct PreprocessOptions {
    bool phase = true;  // FID input only
    int zeroFillFactor = 2;
    bool baseline = true;
    BaselineMethod baselineMethod = BaselineMethod::whittaker;
    double smoothingLambda = 1e7;
    bool reference = false;
    PpmInterval referenceWindow{-0.2, 0.2};
    bool solventExclusion = false;
    PpmInterval solventRegion = kDefaultSolventRegion;
    std::optional<SmoothingFilter> smoothing;  // off by default
};

struct PreprocessResult {
    Spectrum spectrum;
    NoiseEstimate noise;
    PhaseParams phase;
    BaselineModel baseline;
    Ppm referenceOffset = 0.0;
    bool phased = false;
    bool baselineCorrected = false;
    bool referenced = false;
};

struct RunOptions {
    PreprocessOptions preprocess;
    LossConfig loss;
    InferConfig infer;
    AnnealSchedule anneal;
};

/// Everything a profiling run produced, diagnostics included.
struct ProfileRun {
    Solution solution;
    PreprocessResult preprocessed;
    ConcentrationBound bounds;
    std::map<std::string, PpmInterval> influence;
    std::vector<Region> regions;
};

PreprocessResult preprocessSpectrum(const Spectrum& raw, const PreprocessOptions& options);
PreprocessResult preprocessFid(const Fid& fid, const PreprocessOptions& options);

/// The whole pipeline: preprocess, bound, partition, infer, quantify,
/// detect.
ProfileRun profileSpectrum(const SpectralLibrary& library, const Spectrum& raw,
                           const RunOptions& options);
ProfileRun profileFid(const SpectralLibrary& library, const Fid& fid,
                      const RunOptions& options);

std::string solutionToJson(const Solution& solution, const SpectralLibrary& library);

/// Reads back the fields cmd_eval needs: profile, thresholds, flags.
Solution solutionFromJson(const std::string& text, const std::string& origin);

/// Region/bounds diagnostics, plus background stretches carrying signal
/// that no library cluster can explain.
std::string regionsToJson(const std::vector<Region>& regions,
                          const ConcentrationBound& bounds, const Spectrum& spectrum,
                          const NoiseEstimate& noise);

std::string runOptionsToJson(const RunOptions& options);
RunOptions runOptionsFromJson(const std::string& text, const std::string& origin);

} // namespace nmrprof
