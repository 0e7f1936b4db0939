#include "nmrprof/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace nmrprof {

namespace {

inline double diffAt(const double* observed, const std::uint8_t* excluded,
                     std::size_t domainSize, const ReconWindow& recon, std::ptrdiff_t i) {
    if (i < 0 || i >= static_cast<std::ptrdiff_t>(domainSize)) return 0.0;
    if (excluded && excluded[i]) return 0.0;
    double r = 0.0;
    const std::ptrdiff_t j = i - recon.offset;
    if (j >= 0 && j < static_cast<std::ptrdiff_t>(recon.size)) r = recon.data[j];
    return observed[i] - r;
}

} // namespace

double lossIndexRange(const double* observed, const std::uint8_t* excluded,
                      std::size_t domainSize, const ReconWindow& recon, std::size_t i0,
                      std::size_t i1, double gridStep, const LossConfig& config) {
    if (!(gridStep > 0.0)) throw std::invalid_argument("grid step must be positive");
    const double h = gridStep;
    const double g0 = config.gammas[0];
    const double g1 = config.gammas[1];
    const double g2 = config.gammas[2];
    const double g3 = config.gammas[3];
    const int maxOrder = config.maxActiveOrder();

    // The grid-step powers of the derivative stencils are folded into the
    // gamma weights (central differences taken raw), so the four terms stay
    // on one magnitude scale and per-point noise is not amplified by
    // 1/h^(2c) on fine grids.
    double sum = 0.0;
    for (std::size_t i = i0; i < i1; ++i) {
        if (excluded && excluded[i]) continue;  // contributes nothing at all
        const auto si = static_cast<std::ptrdiff_t>(i);
        const double f0 = diffAt(observed, excluded, domainSize, recon, si);
        double acc = g0 * f0 * f0;
        if (maxOrder >= 1) {
            const double fm1 = diffAt(observed, excluded, domainSize, recon, si - 1);
            const double fp1 = diffAt(observed, excluded, domainSize, recon, si + 1);
            const double d1 = (fp1 - fm1) * 0.5;
            acc += g1 * d1 * d1;
            if (maxOrder >= 2) {
                const double d2 = fp1 - 2.0 * f0 + fm1;
                acc += g2 * d2 * d2;
                if (maxOrder >= 3) {
                    const double fm2 = diffAt(observed, excluded, domainSize, recon, si - 2);
                    const double fp2 = diffAt(observed, excluded, domainSize, recon, si + 2);
                    const double d3 = (fp2 - 2.0 * fp1 + 2.0 * fm1 - fm2) * 0.5;
                    acc += g3 * d3 * d3;
                }
            }
        }
        const double w = (i == 0 || i + 1 == domainSize) ? 0.5 : 1.0;
        sum += w * acc;
    }
    return sum * h;
}

namespace {

std::pair<Index, Index> rangeOf(const Region& region, const Spectrum& grid) {
    Index i0 = grid.lowerIndex(region.interval.lo);
    Index i1;
    if (region.interval.hi >= grid.endPpm() - grid.stepPpm * 0.5)
        i1 = grid.size();
    else
        i1 = grid.lowerIndex(region.interval.hi);
    return {i0, i1};
}

} // namespace

double lossRegion(const Spectrum& observed, const Spectrum& recon, const Region& region,
                  const LossConfig& config) {
    if (observed.size() != recon.size() ||
        std::abs(observed.startPpm - recon.startPpm) > 1e-12 ||
        std::abs(observed.stepPpm - recon.stepPpm) > 1e-15)
        throw std::invalid_argument("loss requires identical grids");
    auto [i0, i1] = rangeOf(region, observed);
    return lossIndexRange(observed.intensities.data(),
                          observed.excluded.empty() ? nullptr : observed.excluded.data(),
                          observed.size(), ReconWindow::full(recon), i0, i1,
                          observed.stepPpm, config);
}

double lossTotal(const Spectrum& observed, const Profile& profile,
                 const SpectralLibrary& library, const std::vector<Region>& regions,
                 const LossConfig& config) {
    const Spectrum recon = renderMixture(library, profile, GridSpec::of(observed));
    double total = 0.0;
    for (const auto& region : regions) total += lossRegion(observed, recon, region, config);
    return total;
}

double lossWholeDomain(const Spectrum& observed, const Spectrum& recon,
                       const LossConfig& config) {
    Region whole;
    whole.interval = observed.domain();
    return lossRegion(observed, recon, whole, config);
}

double factorValue(double lossValue, double temperature) {
    return std::exp(logFactorValue(lossValue, temperature));
}

double logFactorValue(double lossValue, double temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    if (lossValue < 0.0) throw std::invalid_argument("loss must be non-negative");
    return -lossValue / temperature;
}

} // namespace nmrprof
