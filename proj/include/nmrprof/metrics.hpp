#pragma once

#include <map>
#include <string>
#include <vector>

#include "nmrprof/model.hpp"
#include "nmrprof/preprocess.hpp"
#include "nmrprof/types.hpp"

namespace nmrprof {

/// SNR-derived per-compound detection thresholds.
struct DetectionThresholds {
    std::map<std::string, Micromolar> perCompound;
    double noiseSigma = 0.0;
    double scalingConstant = 5.0;  // sigmas the rendered apex must clear

    Micromolar thresholdOf(const std::string& id) const {
        auto it = perCompound.find(id);
        return it == perCompound.end() ? 0.0 : it->second;
    }
};

enum class Verdict { TP, TN, FP, FN };

const char* verdictName(Verdict v);

struct CompoundOutcome {
    std::string id;
    Micromolar truth = 0.0;
    Micromolar estimate = 0.0;
    Micromolar threshold = 0.0;
    Verdict verdict = Verdict::TN;
};

struct AccuracyReport {
    double identificationAccuracy = 0.0;
    double quantificationError = 0.0;     // median relative error over TP
    double quantificationAccuracy = 0.0;  // 1 - error
    bool quantificationDefined = false;   // false when there are no TP
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::vector<CompoundOutcome> perCompound;
};

/// Minimum reportable threshold when the noise estimate vanishes.
inline constexpr Micromolar kThresholdFloor = 0.1;

/// threshold_m = max(floor, k * sigma * detectability / (unitApex * scale)).
/// `intensityScale` converts library response units into observed spectrum
/// units (the fitted reference scale); 1 when the spectrum is already in
/// library units.
DetectionThresholds detectionThresholds(const NoiseEstimate& noise,
                                        const SpectralLibrary& library,
                                        const GridSpec& grid,
                                        double intensityScale = 1.0, double k = 5.0);

/// Confusion counts and identification accuracy: a compound counts as
/// present on either side when its concentration clears the threshold.
AccuracyReport identificationAccuracy(const Profile& truth, const Profile& estimate,
                                      const DetectionThresholds& thresholds,
                                      const SpectralLibrary& library);

/// Median over true positives of |x - xhat| / max(x, xhat). The returned
/// report's quantificationDefined flag is false when no compound is TP.
double quantificationError(const Profile& truth, const Profile& estimate,
                           const DetectionThresholds& thresholds,
                           const SpectralLibrary& library);

/// Full report: identification + quantification in one pass.
AccuracyReport scoreProfiles(const Profile& truth, const Profile& estimate,
                             const DetectionThresholds& thresholds,
                             const SpectralLibrary& library);

std::string accuracyReportToJson(const AccuracyReport& report);

/// Per-compound CSV: compound, truth_uM, est_uM, threshold_uM, verdict.
std::string accuracyReportToCsv(const AccuracyReport& report);

} // namespace nmrprof
