#include "nmrprof/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace nmrprof {

using nlohmann::json;

const char* verdictName(Verdict v) {
    switch (v) {
        case Verdict::TP: return "TP";
        case Verdict::TN: return "TN";
        case Verdict::FP: return "FP";
        case Verdict::FN: return "FN";
    }
    return "?";
}

DetectionThresholds detectionThresholds(const NoiseEstimate& noise,
                                        const SpectralLibrary& library,
                                        const GridSpec& grid, double intensityScale,
                                        double k) {
    if (noise.sigma < 0.0) throw std::invalid_argument("negative noise sigma");
    if (!(intensityScale > 0.0)) throw std::invalid_argument("scale must be positive");
    DetectionThresholds out;
    out.noiseSigma = noise.sigma;
    out.scalingConstant = k;
    for (const auto& compound : library.compounds) {
        const double apex = unitApex(compound, grid) * intensityScale;
        double t = kThresholdFloor;
        if (apex > 0.0 && noise.sigma > 0.0)
            t = std::max(kThresholdFloor,
                         k * noise.sigma * compound.detectability / apex);
        out.perCompound[compound.id] = t;
    }
    return out;
}

namespace {

void checkCoverage(const Profile& profile, const SpectralLibrary& library,
                   const char* which) {
    for (const auto& [id, conc] : profile.concentrations)
        if (!library.findCompound(id))
            throw std::invalid_argument(std::string(which) + " profile names compound '" +
                                        id + "' absent from the library");
}

} // namespace

AccuracyReport scoreProfiles(const Profile& truth, const Profile& estimate,
                             const DetectionThresholds& thresholds,
                             const SpectralLibrary& library) {
    checkCoverage(truth, library, "truth");
    checkCoverage(estimate, library, "estimate");

    AccuracyReport report;
    std::vector<double> errors;
    for (const auto& compound : library.compounds) {
        CompoundOutcome row;
        row.id = compound.id;
        row.truth = truth.concentrationOf(compound.id);
        row.estimate = estimate.concentrationOf(compound.id);
        row.threshold = thresholds.thresholdOf(compound.id);
        const bool truthPresent = row.truth >= row.threshold;
        const bool estimatePresent = row.estimate >= row.threshold;
        if (truthPresent && estimatePresent) {
            row.verdict = Verdict::TP;
            ++report.tp;
            const double denom = std::max(row.truth, row.estimate);
            errors.push_back(denom > 0.0 ? std::abs(row.truth - row.estimate) / denom
                                         : 0.0);
        } else if (!truthPresent && !estimatePresent) {
            row.verdict = Verdict::TN;
            ++report.tn;
        } else if (estimatePresent) {
            row.verdict = Verdict::FP;
            ++report.fp;
        } else {
            row.verdict = Verdict::FN;
            ++report.fn;
        }
        report.perCompound.push_back(std::move(row));
    }

    const std::size_t size = library.compounds.size();
    report.identificationAccuracy =
        size == 0 ? 0.0 : static_cast<double>(report.tp + report.tn) /
                              static_cast<double>(size);
    if (!errors.empty()) {
        std::sort(errors.begin(), errors.end());
        const std::size_t n = errors.size();
        report.quantificationError = n % 2 == 1
                                         ? errors[n / 2]
                                         : 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
        report.quantificationDefined = true;
    }
    report.quantificationAccuracy = 1.0 - report.quantificationError;
    return report;
}

AccuracyReport identificationAccuracy(const Profile& truth, const Profile& estimate,
                                      const DetectionThresholds& thresholds,
                                      const SpectralLibrary& library) {
    return scoreProfiles(truth, estimate, thresholds, library);
}

double quantificationError(const Profile& truth, const Profile& estimate,
                           const DetectionThresholds& thresholds,
                           const SpectralLibrary& library) {
    return scoreProfiles(truth, estimate, thresholds, library).quantificationError;
}

std::string accuracyReportToJson(const AccuracyReport& report) {
    json doc;
    doc["identificationAccuracy"] = report.identificationAccuracy;
    doc["quantificationDefined"] = report.quantificationDefined;
    if (report.quantificationDefined) {
        doc["quantificationError"] = report.quantificationError;
        doc["quantificationAccuracy"] = report.quantificationAccuracy;
    }
    doc["confusion"] = {{"TP", report.tp}, {"TN", report.tn},
                        {"FP", report.fp}, {"FN", report.fn}};
    doc["compounds"] = json::array();
    for (const auto& row : report.perCompound)
        doc["compounds"].push_back({{"compound", row.id},
                                    {"truth_uM", row.truth},
                                    {"est_uM", row.estimate},
                                    {"threshold_uM", row.threshold},
                                    {"verdict", verdictName(row.verdict)}});
    return doc.dump(2) + "\n";
}

std::string accuracyReportToCsv(const AccuracyReport& report) {
    std::string out = "compound,truth_uM,est_uM,threshold_uM,verdict\n";
    char buf[160];
    for (const auto& row : report.perCompound) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%s\n", row.id.c_str(),
                      row.truth, row.estimate, row.threshold, verdictName(row.verdict));
        out += buf;
    }
    return out;
}

} // namespace nmrprof
