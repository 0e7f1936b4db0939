#pragma once

#include <map>
#include <string>
#include <vector>

#include "nmrprof/types.hpp"

namespace nmrprof {

/// One Lorentzian line. The center is stored relative to the owning
/// cluster's position so a cluster shift translates all of its peaks
/// rigidly. widthParam is the squared full width at half maximum (ppm^2):
/// the line evaluates to amplitude at its center and to amplitude/2 at
/// center +- sqrt(widthParam)/2.
struct PeakShape {
    Intensity amplitude = 0.0;  // height per unit concentration
    Ppm centerOffset = 0.0;     // relative to the cluster position
    double widthParam = 0.0;    // FWHM^2, ppm^2
};

/// A rigid group of peaks that shifts together inside a small window.
struct Cluster {
    std::string id;
    std::vector<PeakShape> peaks;
    Ppm nominalCenter = 0.0;
    PpmInterval shiftWindow;  // lo <= nominalCenter <= hi
};

struct Compound {
    std::string name;
    std::string id;
    std::vector<Cluster> clusters;
    double detectability = 1.0;  // >= 1, relative detection difficulty
};

struct SpectralLibrary {
    std::string biofluidTag;
    std::vector<Compound> compounds;
    std::string referenceCompound;        // compound id, e.g. DSS
    Micromolar referenceConcentration = 0.0;

    const Compound* findCompound(const std::string& id) const;
    const Cluster* findCluster(const std::string& id) const;
    std::size_t clusterCount() const;
    std::size_t peakCount() const;
};

/// Default total shift-window width when a library does not override it.
inline constexpr Ppm kDefaultShiftWindowHalfWidth = 0.025;

/// The answer: per-compound concentration, per-cluster position, and
/// detection verdicts.
struct Profile {
    std::map<std::string, Micromolar> concentrations;  // compound id -> uM
    std::map<std::string, Ppm> shifts;                 // cluster id -> ppm
    std::map<std::string, bool> detected;              // compound id -> verdict

    Micromolar concentrationOf(const std::string& compoundId) const {
        auto it = concentrations.find(compoundId);
        return it == concentrations.end() ? 0.0 : it->second;
    }
};

/// Lorentzian line value at y for a peak whose cluster sits at clusterShift.
inline Intensity evalPeak(Ppm y, const PeakShape& peak, Ppm clusterShift) {
    requireFinite(y, "y");
    requireFinite(clusterShift, "clusterShift");
    const double d = peak.centerOffset + clusterShift - y;
    return peak.amplitude * peak.widthParam / (peak.widthParam + 4.0 * d * d);
}

/// Accumulate scale * (cluster signature at position delta) into out[0..i1-i0)
/// for grid indices [i0, i1). This is the rendering hot path; out is not
/// cleared first.
void accumulateCluster(const Cluster& cluster, Ppm delta, double scale,
                       Ppm startPpm, Ppm stepPpm, Index i0, Index i1, double* out);

/// Grid prototype: rendering targets copy start/step/size from it.
struct GridSpec {
    Ppm startPpm = 0.0;
    Ppm stepPpm = 0.0;
    std::size_t points = 0;

    static GridSpec of(const Spectrum& s) { return {s.startPpm, s.stepPpm, s.size()}; }
    Ppm ppmAt(Index i) const noexcept { return startPpm + static_cast<double>(i) * stepPpm; }
    Ppm endPpm() const noexcept { return points == 0 ? startPpm : ppmAt(points - 1); }
};

/// Default evaluation grid: -1 to 13 ppm at 0.0002 ppm per point.
GridSpec defaultGrid();

/// Render one compound at the given concentration. shifts must supply a
/// position inside the window for every cluster of the compound.
Spectrum renderCompound(const Compound& compound, Micromolar conc,
                        const std::map<std::string, Ppm>& shifts, const GridSpec& grid);

/// Render the superposition of every profiled compound. Compounds absent
/// from the profile contribute nothing; any compound with a nonzero
/// concentration must have all of its cluster shifts present.
Spectrum renderMixture(const SpectralLibrary& library, const Profile& profile,
                       const GridSpec& grid);

/// Tallest rendered point of the compound at unit concentration with every
/// cluster at its nominal center.
Intensity unitApex(const Compound& compound, const GridSpec& grid);

/// Tallest point of the cluster's unit signature (peak overlap included).
Intensity clusterUnitApex(const Cluster& cluster, Ppm stepPpm);

/// Profile with every cluster at its nominal center and all concentrations
/// zero except those given.
Profile nominalProfile(const SpectralLibrary& library,
                       const std::map<std::string, Micromolar>& concentrations = {});

/// Structural validation; returns one message per violation.
std::vector<std::string> validateLibrary(const SpectralLibrary& library);

/// validateLibrary, throwing ValidationError when anything is wrong.
void requireValidLibrary(const SpectralLibrary& library);

} // namespace nmrprof
