#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "nmrprof/model.hpp"
#include "nmrprof/partition.hpp"
#include "nmrprof/types.hpp"

namespace nmrprof {

enum class DerivativeScheme { central_difference };

/// Weights of the squared-difference terms for derivative orders 0..3.
/// The derivative stencils are raw central differences: the grid-step
/// powers are folded into the weights, which keeps the four terms
/// commensurate on any grid resolution.
struct LossConfig {
    std::array<double, 4> gammas{1.0, 0.1, 0.01, 0.001};
    DerivativeScheme scheme = DerivativeScheme::central_difference;

    int maxActiveOrder() const noexcept {
        int m = 0;
        for (int c = 1; c < 4; ++c)
            if (gammas[static_cast<std::size_t>(c)] != 0.0) m = c;
        return m;
    }
};

/// Reconstruction values over a window of the global grid: value at global
/// index i is data[i - offset] when inside the window, 0 outside. A full
/// render uses offset 0 and size = grid size.
struct ReconWindow {
    const double* data = nullptr;
    std::ptrdiff_t offset = 0;
    std::size_t size = 0;

    static ReconWindow full(const Spectrum& recon) {
        return {recon.intensities.data(), 0, recon.size()};
    }
};

/// Weighted squared-difference loss accumulated over grid indices
/// [i0, i1). The difference observed - recon is taken as 0 outside the
/// domain and at excluded points; derivative stencils read across region
/// edges so that region sums reproduce the whole-domain loss exactly.
/// domainSize is the full grid length (its first and last points carry
/// half trapezoid weight).
double lossIndexRange(const double* observed, const std::uint8_t* excluded,
                      std::size_t domainSize, const ReconWindow& recon, std::size_t i0,
                      std::size_t i1, double gridStep, const LossConfig& config);

/// Loss restricted to one region. Both spectra must share one grid.
double lossRegion(const Spectrum& observed, const Spectrum& recon, const Region& region,
                  const LossConfig& config);

/// Loss of a profile against the observed spectrum: renders the mixture
/// once and sums lossRegion over every region, background included.
double lossTotal(const Spectrum& observed, const Profile& profile,
                 const SpectralLibrary& library, const std::vector<Region>& regions,
                 const LossConfig& config);

/// Whole-domain loss between two spectra (single implicit region).
double lossWholeDomain(const Spectrum& observed, const Spectrum& recon,
                       const LossConfig& config);

/// Boltzmann factor exp(-loss/T).
double factorValue(double lossValue, double temperature);

/// log factorValue; the form every inference step uses internally.
double logFactorValue(double lossValue, double temperature);

} // namespace nmrprof
