#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nmrprof/types.hpp"

namespace nmrprof {

/// Zero- and first-order phase correction. phi1 is the phase span across
/// the full sweep width; the pivot sits at the center of the spectrum, so
/// the applied angle at fractional position f in [-1/2, 1/2] is
/// phi0 + phi1 * f (degrees).
struct PhaseParams {
    double phi0 = 0.0;  // degrees, in (-180, 180]
    double phi1 = 0.0;  // degrees across the sweep
};

enum class BaselineMethod { hermite, whittaker };

struct BaselineModel {
    std::vector<std::pair<Ppm, Intensity>> anchorPoints;  // sorted by ppm
    BaselineMethod method = BaselineMethod::whittaker;
    double smoothingLambda = 1e7;  // whittaker only, index-grid units
};

struct NoiseEstimate {
    double sigma = 0.0;                      // std of baseline residuals
    std::vector<std::uint8_t> baselineMask;  // 1 = baseline point
};

/// Savitzky-Golay or Gaussian smoothing selection.
struct SmoothingFilter {
    enum class Kind { savitzky_golay, gaussian };
    Kind kind = Kind::gaussian;
    int window = 11;       // SG: odd window length in points
    int order = 3;         // SG: polynomial order, < window
    double sigmaPpm = 0.0; // Gaussian
};

/// DFT of the zero-extended FID mapped onto a ppm axis centered at the
/// carrier (0 ppm before referencing). fillFactor multiplies the sample
/// count and must be a power of two.
ComplexSpectrum zeroFillTransform(const Fid& fid, int fillFactor = 2);

/// Rotate by -(phi0 + phi1*f) degrees, f the centered sweep fraction.
/// Undoes a distortion that was applied with the same parameters.
ComplexSpectrum applyPhase(const ComplexSpectrum& spec, const PhaseParams& params);

/// Opposite rotation; used to synthesize known phase errors.
ComplexSpectrum distortPhase(const ComplexSpectrum& spec, const PhaseParams& params);

/// Joint (phi0, phi1) search by cross-entropy optimization of a peak
/// symmetry objective over isolated peaks; falls back to minimizing the
/// L1 norm of the real channel when fewer than 3 isolated peaks exist.
std::pair<PhaseParams, Spectrum> autophase(const ComplexSpectrum& spec,
                                           const NoiseEstimate& noise);

/// Iterative thresholding against a moving-median local baseline: points
/// within k*sigma stay baseline, sigma re-estimated from the mask, until
/// the mask is stable.
NoiseEstimate detectBaseline(const Spectrum& spec);

/// Fit a baseline through the masked points (monotone cubic Hermite
/// through run centroids, or a mask-weighted Whittaker smoother) and
/// subtract it.
std::pair<Spectrum, BaselineModel> correctBaseline(const Spectrum& spec,
                                                   const NoiseEstimate& noise,
                                                   BaselineMethod method,
                                                   double smoothingLambda = 1e7);

/// Translate the axis so the tallest qualifying peak in refWindow sits at
/// 0.0 ppm (parabolic sub-grid apex). Returns the spectrum and the offset
/// added to the axis.
std::pair<Spectrum, Ppm> referenceShift(const Spectrum& spec, const PpmInterval& refWindow,
                                        const NoiseEstimate& noise);

/// Flag every grid point inside region as excluded from loss integrals.
Spectrum excludeSolvent(const Spectrum& spec, const PpmInterval& region);

/// Default water region.
inline constexpr PpmInterval kDefaultSolventRegion{4.5, 4.9};

Spectrum smooth(const Spectrum& spec, const SmoothingFilter& filter);

} // namespace nmrprof
