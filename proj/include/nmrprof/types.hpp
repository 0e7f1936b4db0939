#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nmrprof {

/// Chemical shift in parts per million
using Ppm = double;

/// Spectral intensity (arbitrary units)
using Intensity = double;

/// Concentration in micromolar
using Micromolar = double;

/// Index into a spectral grid
using Index = std::size_t;

/// Closed ppm interval [lo, hi]
struct PpmInterval {
    Ppm lo = 0.0;
    Ppm hi = 0.0;

    double width() const noexcept { return hi - lo; }
    bool contains(Ppm p) const noexcept { return p >= lo && p <= hi; }
    bool empty() const noexcept { return hi <= lo; }
    bool overlaps(const PpmInterval& other) const noexcept {
        return lo < other.hi && other.lo < hi;
    }
};

/// Real spectrum on a uniform ascending ppm grid.
/// intensities[i] is the value at startPpm + i*stepPpm. Points flagged in
/// `excluded` (when non-empty) are skipped by every loss integral.
struct Spectrum {
    Ppm startPpm = 0.0;
    Ppm stepPpm = 0.0;
    std::vector<Intensity> intensities;
    std::vector<std::uint8_t> excluded;  // empty = nothing excluded

    Spectrum() = default;
    Spectrum(Ppm start, Ppm step, std::vector<Intensity> values)
        : startPpm(start), stepPpm(step), intensities(std::move(values)) {}

    std::size_t size() const noexcept { return intensities.size(); }
    Ppm ppmAt(Index i) const noexcept { return startPpm + static_cast<double>(i) * stepPpm; }
    Ppm endPpm() const noexcept {
        return intensities.empty() ? startPpm : ppmAt(intensities.size() - 1);
    }
    PpmInterval domain() const noexcept { return {startPpm, endPpm()}; }

    bool isExcluded(Index i) const noexcept {
        return !excluded.empty() && excluded[i] != 0;
    }

    /// Index of the grid point nearest to p, clamped to the grid.
    Index nearestIndex(Ppm p) const {
        if (intensities.empty()) throw std::invalid_argument("empty spectrum");
        double x = (p - startPpm) / stepPpm;
        if (x <= 0.0) return 0;
        auto i = static_cast<Index>(std::llround(x));
        return i >= size() ? size() - 1 : i;
    }

    /// First grid index with ppm >= p (size() if none).
    Index lowerIndex(Ppm p) const noexcept {
        double x = std::ceil((p - startPpm) / stepPpm - 1e-9);
        if (x < 0.0) return 0;
        auto i = static_cast<Index>(x);
        return i > size() ? size() : i;
    }
};

/// Complex spectrum (real + imaginary channel) on a uniform ppm grid.
struct ComplexSpectrum {
    Ppm startPpm = 0.0;
    Ppm stepPpm = 0.0;
    std::vector<double> re;
    std::vector<double> im;

    std::size_t size() const noexcept { return re.size(); }
    Ppm ppmAt(Index i) const noexcept { return startPpm + static_cast<double>(i) * stepPpm; }

    Spectrum realChannel() const { return Spectrum(startPpm, stepPpm, re); }
    std::vector<double> magnitude() const {
        std::vector<double> m(re.size());
        for (Index i = 0; i < re.size(); ++i) m[i] = std::hypot(re[i], im[i]);
        return m;
    }
};

/// Raw complex time-domain signal.
struct Fid {
    std::vector<double> re;
    std::vector<double> im;
    double dwellTime = 0.0;         // seconds per complex sample
    double spectrometerFreq = 0.0;  // MHz
    double sweepWidth = 0.0;        // Hz, must equal 1/dwellTime

    std::size_t size() const noexcept { return re.size(); }
};

/// Validation failure carrying one message per offending entry.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<std::string> issues)
        : std::runtime_error(join(issues)), issues_(std::move(issues)) {}

    const std::vector<std::string>& issues() const noexcept { return issues_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string s = "validation failed:";
        for (const auto& e : v) s += "\n  - " + e;
        return s;
    }
    std::vector<std::string> issues_;
};

/// Phasing gave up: no peak rises far enough above the noise floor.
class CannotPhaseError : public std::runtime_error {
public:
    explicit CannotPhaseError(double sigma)
        : std::runtime_error("cannot phase: no peak above 5x noise sigma (sigma=" +
                             std::to_string(sigma) + ")"),
          sigma_(sigma) {}
    double sigma() const noexcept { return sigma_; }

private:
    double sigma_;
};

/// Baseline mask collapsed below the minimum fraction of grid points.
class DegenerateBaselineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// No qualifying reference peak inside the search window.
class ReferenceNotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// All particle weights underflowed; the anneal started too cold.
class TemperatureTooLowError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void requireFinite(double v, const char* what) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be finite");
}

} // namespace nmrprof
