#include "nmrprof/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <fftw3.h>

#include "nmrprof/rng.hpp"

namespace nmrprof {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kDegToRad = kPi / 180.0;

double maskedStd(const std::vector<double>& values, const std::vector<std::uint8_t>& mask) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (mask[i]) {
            sum += values[i];
            ++n;
        }
    if (n == 0) return 0.0;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (mask[i]) {
            const double d = values[i] - mean;
            ss += d * d;
        }
    return std::sqrt(ss / static_cast<double>(n));
}

/// Median of a centered window, sampled on a stride and linearly
/// interpolated between sample points. The baseline varies slowly relative
/// to the window, so sampling loses nothing that matters.
std::vector<double> movingMedian(const std::vector<double>& v, std::size_t window) {
    const std::size_t n = v.size();
    if (window < 3) window = 3;
    if (window % 2 == 0) ++window;
    const std::size_t half = window / 2;
    const std::size_t stride = std::max<std::size_t>(1, window / 8);

    std::vector<std::size_t> samples;
    for (std::size_t i = 0; i < n; i += stride) samples.push_back(i);
    if (samples.back() != n - 1) samples.push_back(n - 1);

    std::vector<double> med(samples.size());
    std::vector<double> scratch;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const std::size_t i = samples[s];
        const std::size_t lo = i > half ? i - half : 0;
        const std::size_t hi = std::min(n, i + half + 1);
        scratch.assign(v.begin() + static_cast<std::ptrdiff_t>(lo),
                       v.begin() + static_cast<std::ptrdiff_t>(hi));
        auto mid = scratch.begin() + static_cast<std::ptrdiff_t>(scratch.size() / 2);
        std::nth_element(scratch.begin(), mid, scratch.end());
        med[s] = *mid;
    }

    std::vector<double> out(n);
    std::size_t s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (s + 1 < samples.size() && samples[s + 1] <= i) ++s;
        if (s + 1 == samples.size() || samples[s] == i) {
            out[i] = med[s];
        } else {
            const double t = static_cast<double>(i - samples[s]) /
                             static_cast<double>(samples[s + 1] - samples[s]);
            out[i] = (1.0 - t) * med[s] + t * med[s + 1];
        }
    }
    return out;
}

struct PickedPeak {
    Index apex = 0;
    double height = 0.0;
    double fwhmPoints = 0.0;
};

/// Local maxima with height >= minHeight that also rise at least
/// minProminence above the higher of their flanking minima. The magnitude
/// of a complex Lorentzian has 1/x tails, so an absolute height test alone
/// would promote every noise bump riding on a tail plateau.
std::vector<PickedPeak> pickPeaks(const std::vector<double>& v, double minHeight,
                                  double minProminence) {
    std::vector<PickedPeak> peaks;
    const std::size_t n = v.size();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(v[i] >= v[i - 1] && v[i] > v[i + 1] && v[i] >= minHeight)) continue;

        double minLeft = v[i];
        for (std::size_t l = i; l-- > 0;) {
            minLeft = std::min(minLeft, v[l]);
            if (v[l] > v[i]) break;
        }
        double minRight = v[i];
        for (std::size_t r = i + 1; r < n; ++r) {
            minRight = std::min(minRight, v[r]);
            if (v[r] > v[i]) break;
        }
        if (v[i] - std::max(minLeft, minRight) < minProminence) continue;

        const double half = v[i] / 2.0;
        std::size_t l = i;
        while (l > 0 && v[l] > half) --l;
        std::size_t r = i;
        while (r + 1 < n && v[r] > half) ++r;
        PickedPeak p;
        p.apex = i;
        p.height = v[i];
        p.fwhmPoints = std::max(1.0, static_cast<double>(r - l));
        peaks.push_back(p);
    }
    return peaks;
}

/// Monotone cubic interpolant through (x, y) anchors (Fritsch-Carlson
/// slopes), constant beyond the ends.
class MonotoneCubic {
public:
    MonotoneCubic(std::vector<double> x, std::vector<double> y)
        : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        m_.assign(n, 0.0);
        if (n < 2) return;
        std::vector<double> d(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i)
            d[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
        m_[0] = d[0];
        m_[n - 1] = d[n - 2];
        for (std::size_t i = 1; i + 1 < n; ++i)
            m_[i] = (d[i - 1] * d[i] > 0.0) ? 2.0 * d[i - 1] * d[i] / (d[i - 1] + d[i]) : 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (d[i] == 0.0) {
                m_[i] = m_[i + 1] = 0.0;
                continue;
            }
            const double a = m_[i] / d[i], b = m_[i + 1] / d[i];
            const double s = a * a + b * b;
            if (s > 9.0) {
                const double t = 3.0 / std::sqrt(s);
                m_[i] = t * a * d[i];
                m_[i + 1] = t * b * d[i];
            }
        }
    }

    double operator()(double x) const {
        if (x_.empty()) return 0.0;
        if (x_.size() == 1 || x <= x_.front()) return y_.front();
        if (x >= x_.back()) return y_.back();
        auto it = std::upper_bound(x_.begin(), x_.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
        const double hseg = x_[i + 1] - x_[i];
        const double t = (x - x_[i]) / hseg;
        const double t2 = t * t, t3 = t2 * t;
        return y_[i] * (2 * t3 - 3 * t2 + 1) + m_[i] * hseg * (t3 - 2 * t2 + t) +
               y_[i + 1] * (-2 * t3 + 3 * t2) + m_[i + 1] * hseg * (t3 - t2);
    }

private:
    std::vector<double> x_, y_, m_;
};

/// Weighted Whittaker smoother: (W + lambda D2'D2) z = W y with binary
/// weights; second differences on the index grid.
std::vector<double> whittakerFit(const std::vector<double>& y,
                                 const std::vector<std::uint8_t>& w, double lambda) {
    const auto n = static_cast<Eigen::Index>(y.size());
    if (n < 5) {
        // explicit dense solve for very short spectra
        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(std::max<Eigen::Index>(0, n - 2), n);
        for (Eigen::Index i = 0; i + 2 < n; ++i) {
            D(i, i) = 1.0;
            D(i, i + 1) = -2.0;
            D(i, i + 2) = 1.0;
        }
        Eigen::MatrixXd A = lambda * D.transpose() * D;
        for (Eigen::Index i = 0; i < n; ++i)
            A(i, i) += w[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
        Eigen::VectorXd rhs(n);
        for (Eigen::Index i = 0; i < n; ++i)
            rhs(i) = w[static_cast<std::size_t>(i)] ? y[static_cast<std::size_t>(i)] : 0.0;
        Eigen::VectorXd z = A.ldlt().solve(rhs);
        return {z.data(), z.data() + n};
    }

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(n) * 3);
    // upper triangle of lambda*D2'D2 + W: diagonal [1 5 6 .. 6 5 1]
    for (Eigen::Index i = 0; i < n; ++i) {
        double diag;
        if (i >= 2 && i <= n - 3)
            diag = 6.0;
        else if (i == 1 || i == n - 2)
            diag = 5.0;
        else
            diag = 1.0;
        trip.emplace_back(i, i, lambda * diag + (w[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
        if (i + 1 < n) {
            const double off1 = (i == 0 || i == n - 2) ? -2.0 : -4.0;
            trip.emplace_back(i, i + 1, lambda * off1);
        }
        if (i + 2 < n) trip.emplace_back(i, i + 2, lambda);
    }

    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::VectorXd rhs(n);
    for (Eigen::Index i = 0; i < n; ++i)
        rhs(i) = w[static_cast<std::size_t>(i)] ? y[static_cast<std::size_t>(i)] : 0.0;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Upper> solver;
    solver.compute(A.selfadjointView<Eigen::Upper>());
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("baseline smoother factorization failed");
    Eigen::VectorXd z = solver.solve(rhs);
    return {z.data(), z.data() + n};
}

} // namespace

ComplexSpectrum zeroFillTransform(const Fid& fid, int fillFactor) {
    if (fid.size() == 0) throw std::invalid_argument("empty FID");
    if (fid.re.size() != fid.im.size())
        throw std::invalid_argument("FID channel lengths differ");
    if (fillFactor < 1 || (fillFactor & (fillFactor - 1)) != 0)
        throw std::invalid_argument("fill factor must be a power of two >= 1");
    if (!(fid.dwellTime > 0.0)) throw std::invalid_argument("dwell time must be positive");
    if (std::abs(fid.sweepWidth * fid.dwellTime - 1.0) > 1e-6)
        throw std::invalid_argument("sweep width must equal 1/dwellTime");

    const std::size_t n = fid.size();
    const std::size_t total = n * static_cast<std::size_t>(fillFactor);

    std::vector<fftw_complex> in(total), out(total);
    for (std::size_t i = 0; i < total; ++i) {
        // half-weight first point: rectangle-rule DC correction
        const double w = (i == 0) ? 0.5 : 1.0;
        in[i][0] = i < n ? w * fid.re[i] : 0.0;
        in[i][1] = i < n ? w * fid.im[i] : 0.0;
    }
    fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(total), in.data(), out.data(),
                                      FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);

    // shift so the axis ascends from -sweep/2; continuous-transform scaling
    ComplexSpectrum spec;
    const double hzPerPoint = fid.sweepWidth / static_cast<double>(total);
    spec.stepPpm = hzPerPoint / fid.spectrometerFreq;
    spec.startPpm = -fid.sweepWidth / (2.0 * fid.spectrometerFreq);
    spec.re.resize(total);
    spec.im.resize(total);
    const std::size_t half = total / 2;
    for (std::size_t j = 0; j < total; ++j) {
        const std::size_t k = (j + half) % total;  // j=0 -> most negative frequency
        spec.re[j] = out[k][0] * fid.dwellTime;
        spec.im[j] = out[k][1] * fid.dwellTime;
    }
    return spec;
}

namespace {

ComplexSpectrum rotatePhase(const ComplexSpectrum& spec, const PhaseParams& params,
                            double sign) {
    ComplexSpectrum out = spec;
    const std::size_t n = spec.size();
    if (n == 0) return out;
    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double frac = static_cast<double>(k) / denom - 0.5;
        const double theta = sign * (params.phi0 + params.phi1 * frac) * kDegToRad;
        const double c = std::cos(theta), s = std::sin(theta);
        const double re = spec.re[k], im = spec.im[k];
        out.re[k] = re * c + im * s;
        out.im[k] = im * c - re * s;
    }
    return out;
}

} // namespace

ComplexSpectrum applyPhase(const ComplexSpectrum& spec, const PhaseParams& params) {
    return rotatePhase(spec, params, +1.0);
}

ComplexSpectrum distortPhase(const ComplexSpectrum& spec, const PhaseParams& params) {
    return rotatePhase(spec, params, -1.0);
}

namespace {

double wrapDegrees(double phi) {
    phi = std::fmod(phi + 180.0, 360.0);
    if (phi < 0.0) phi += 360.0;
    return phi - 180.0;
}

struct PhaseObjective {
    const ComplexSpectrum* spec;
    std::vector<PickedPeak> isolated;  // symmetry targets
    std::vector<std::pair<Index, Index>> windows;
    std::vector<Index> fallbackSamples;  // L1-norm fallback support
    bool useSymmetry = true;

    double realAt(Index k, double cosTheta, double sinTheta) const {
        return spec->re[k] * cosTheta + spec->im[k] * sinTheta;
    }

    double operator()(const PhaseParams& p) const {
        const std::size_t n = spec->size();
        const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
        auto theta = [&](Index k) {
            const double frac = static_cast<double>(k) / denom - 0.5;
            return (p.phi0 + p.phi1 * frac) * kDegToRad;
        };
        if (!useSymmetry) {
            double l1 = 0.0;
            for (Index k : fallbackSamples) {
                const double t = theta(k);
                l1 += std::abs(realAt(k, std::cos(t), std::sin(t)));
            }
            return -l1;
        }

        double meanScore = 0.0;
        for (const auto& peak : isolated) {
            const auto reachD = static_cast<Index>(std::max(2.0, 2.0 * peak.fwhmPoints));
            double num = 0.0, den = 0.0;
            for (Index d = 1; d <= reachD; ++d) {
                if (peak.apex < d || peak.apex + d >= n) break;
                const Index a = peak.apex + d, b = peak.apex - d;
                const double ta = theta(a), tb = theta(b);
                const double la = realAt(a, std::cos(ta), std::sin(ta));
                const double lb = realAt(b, std::cos(tb), std::sin(tb));
                num += std::abs(la - lb);
                den += la + lb;
            }
            double score;
            if (den > 1e-12 * peak.height)
                score = std::max(-1.0, 1.0 - num / den);
            else
                score = -1.0;
            meanScore += score;
        }
        meanScore /= static_cast<double>(isolated.size());

        double neg = 0.0, pos = 0.0;
        for (const auto& [lo, hi] : windows)
            for (Index k = lo; k < hi; ++k) {
                const double t = theta(k);
                const double v = realAt(k, std::cos(t), std::sin(t));
                (v < 0.0 ? neg : pos) += std::abs(v);
            }
        const double penalty = neg / (neg + pos + 1e-300);
        return meanScore - penalty;
    }
};

} // namespace

std::pair<PhaseParams, Spectrum> autophase(const ComplexSpectrum& spec,
                                           const NoiseEstimate& noise) {
    const std::size_t n = spec.size();
    if (n < 16) throw std::invalid_argument("spectrum too short to phase");
    auto mag = spec.magnitude();
    const double magMax = *std::max_element(mag.begin(), mag.end());
    const double sigma = std::max(noise.sigma, 1e-12 * magMax);

    auto all = pickPeaks(mag, 5.0 * sigma, 5.0 * sigma);
    if (all.empty()) throw CannotPhaseError(noise.sigma);

    // isolated: >= 10 sigma with no neighbouring peak within 3 FWHM
    std::vector<PickedPeak> isolated;
    for (const auto& p : all) {
        if (p.height < 10.0 * sigma) continue;
        bool clear = true;
        for (const auto& q : all) {
            if (q.apex == p.apex) continue;
            const double dist = std::abs(static_cast<double>(q.apex) -
                                         static_cast<double>(p.apex));
            if (dist < 3.0 * p.fwhmPoints) {
                clear = false;
                break;
            }
        }
        if (clear) isolated.push_back(p);
    }
    std::sort(isolated.begin(), isolated.end(),
              [](const PickedPeak& a, const PickedPeak& b) { return a.height > b.height; });
    if (isolated.size() > 24) isolated.resize(24);

    PhaseObjective objective;
    objective.spec = &spec;
    objective.useSymmetry = isolated.size() >= 3;
    if (objective.useSymmetry) {
        objective.isolated = isolated;
        for (const auto& p : objective.isolated) {
            const auto r = static_cast<Index>(std::max(4.0, 4.0 * p.fwhmPoints));
            objective.windows.emplace_back(p.apex > r ? p.apex - r : 0,
                                           std::min<Index>(n, p.apex + r + 1));
        }
    } else {
        const std::size_t stride = std::max<std::size_t>(1, n / 8192);
        for (Index k = 0; k < n; k += stride) objective.fallbackSamples.push_back(k);
    }

    // cross-entropy search over (phi0, phi1)
    RngStream rng(0x9aa52e01d3c4b5f6ULL);
    double mean0 = 0.0, mean1 = 0.0, std0 = 90.0, std1 = 120.0;
    const int population = 200, elite = 20, maxIter = 50;
    std::vector<std::pair<double, std::pair<double, double>>> scored(population);
    for (int iter = 0; iter < maxIter; ++iter) {
        for (int i = 0; i < population; ++i) {
            const double c0 = wrapDegrees(mean0 + std0 * rng.normal());
            const double c1 = mean1 + std1 * rng.normal();
            scored[static_cast<std::size_t>(i)] = {
                objective({c0, c1}), {c0, c1}};
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        double m0 = 0.0, m1 = 0.0;
        for (int i = 0; i < elite; ++i) {
            m0 += scored[static_cast<std::size_t>(i)].second.first;
            m1 += scored[static_cast<std::size_t>(i)].second.second;
        }
        m0 /= elite;
        m1 /= elite;
        double v0 = 0.0, v1 = 0.0;
        for (int i = 0; i < elite; ++i) {
            const double d0 = scored[static_cast<std::size_t>(i)].second.first - m0;
            const double d1 = scored[static_cast<std::size_t>(i)].second.second - m1;
            v0 += d0 * d0;
            v1 += d1 * d1;
        }
        mean0 = m0;
        mean1 = m1;
        std0 = std::sqrt(v0 / elite) + 1e-4;
        std1 = std::sqrt(v1 / elite) + 1e-4;
        if (std0 < 0.1 && std1 < 0.1) break;
    }

    // deterministic coordinate polish onto the local optimum
    const double inv = 0.6180339887498949;
    for (int round = 0; round < 2; ++round) {
        for (int axis = 0; axis < 2; ++axis) {
            double& coord = axis == 0 ? mean0 : mean1;
            double a = coord - 2.0, b = coord + 2.0;
            double x1 = b - inv * (b - a), x2 = a + inv * (b - a);
            auto eval = [&](double x) {
                return axis == 0 ? objective({x, mean1}) : objective({mean0, x});
            };
            double f1 = eval(x1), f2 = eval(x2);
            for (int it = 0; it < 40 && (b - a) > 1e-4; ++it) {
                if (f1 > f2) {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - inv * (b - a);
                    f1 = eval(x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + inv * (b - a);
                    f2 = eval(x2);
                }
            }
            coord = 0.5 * (a + b);
        }
    }

    PhaseParams params{wrapDegrees(mean0), mean1};
    ComplexSpectrum phased = applyPhase(spec, params);
    Spectrum real(phased.startPpm, phased.stepPpm, std::move(phased.re));
    return {params, std::move(real)};
}

NoiseEstimate detectBaseline(const Spectrum& spec) {
    const std::size_t n = spec.size();
    if (n < 64) throw std::invalid_argument("spectrum too short for baseline detection");

    const auto window = static_cast<std::size_t>(0.05 * static_cast<double>(n));
    const auto base = movingMedian(spec.intensities, std::max<std::size_t>(window, 5));
    std::vector<double> residual(n);
    for (std::size_t i = 0; i < n; ++i) residual[i] = spec.intensities[i] - base[i];

    const std::size_t minPoints = std::max<std::size_t>(1, n / 100);
    std::vector<std::uint8_t> mask(n, 1);
    constexpr double k = 3.0;
    for (int pass = 0; pass < 50; ++pass) {
        const double sigma = maskedStd(residual, mask);
        std::vector<std::uint8_t> next(n);
        for (std::size_t i = 0; i < n; ++i)
            next[i] = std::abs(residual[i]) <= k * sigma ? 1 : 0;
        const auto count = static_cast<std::size_t>(
            std::count(next.begin(), next.end(), std::uint8_t{1}));
        if (count < minPoints)
            throw DegenerateBaselineError("baseline mask collapsed below 1% of points");
        if (next == mask) break;
        mask = std::move(next);
    }

    NoiseEstimate est;
    est.sigma = maskedStd(residual, mask);
    est.baselineMask = std::move(mask);
    return est;
}

std::pair<Spectrum, BaselineModel> correctBaseline(const Spectrum& spec,
                                                   const NoiseEstimate& noise,
                                                   BaselineMethod method,
                                                   double smoothingLambda) {
    const std::size_t n = spec.size();
    if (noise.baselineMask.size() != n)
        throw std::invalid_argument("baseline mask does not match the spectrum");
    if (!(smoothingLambda > 0.0))
        throw std::invalid_argument("smoothing lambda must be positive");

    BaselineModel model;
    model.method = method;
    model.smoothingLambda = smoothingLambda;
    std::vector<double> baseline;

    if (method == BaselineMethod::whittaker) {
        baseline = whittakerFit(spec.intensities, noise.baselineMask, smoothingLambda);
        const std::size_t stride = std::max<std::size_t>(1, n / 256);
        for (std::size_t i = 0; i < n; i += stride)
            model.anchorPoints.emplace_back(spec.ppmAt(i), baseline[i]);
    } else if (method == BaselineMethod::hermite) {
        // anchors: centroids of masked runs, long runs subdivided so the
        // interpolant can track curvature across wide empty stretches
        const auto maxRun = std::max<std::size_t>(
            8, static_cast<std::size_t>(0.1 / spec.stepPpm));
        std::vector<double> ax, ay;
        std::size_t i = 0;
        while (i < n) {
            if (!noise.baselineMask[i]) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j + 1 < n && noise.baselineMask[j + 1]) ++j;
            for (std::size_t s = i; s <= j; s += maxRun) {
                const std::size_t e = std::min(j, s + maxRun - 1);
                double sumP = 0.0, sumV = 0.0;
                for (std::size_t t = s; t <= e; ++t) {
                    sumP += spec.ppmAt(t);
                    sumV += spec.intensities[t];
                }
                const auto len = static_cast<double>(e - s + 1);
                ax.push_back(sumP / len);
                ay.push_back(sumV / len);
            }
            i = j + 1;
        }
        if (ax.empty()) throw DegenerateBaselineError("no baseline anchors");
        MonotoneCubic interp(ax, ay);
        baseline.resize(n);
        for (std::size_t t = 0; t < n; ++t) baseline[t] = interp(spec.ppmAt(t));
        for (std::size_t a = 0; a < ax.size(); ++a)
            model.anchorPoints.emplace_back(ax[a], ay[a]);
    } else {
        throw std::invalid_argument("unknown baseline method");
    }

    Spectrum out = spec;
    for (std::size_t t = 0; t < n; ++t) out.intensities[t] -= baseline[t];
    return {std::move(out), std::move(model)};
}

std::pair<Spectrum, Ppm> referenceShift(const Spectrum& spec, const PpmInterval& refWindow,
                                        const NoiseEstimate& noise) {
    if (refWindow.lo > refWindow.hi)
        throw std::invalid_argument("inverted reference window");
    const Index lo = spec.lowerIndex(refWindow.lo);
    const Index hi = std::min<Index>(spec.size(), spec.lowerIndex(refWindow.hi) + 1);

    const double minHeight = std::max(10.0 * noise.sigma,
                                      std::numeric_limits<double>::min());
    Index best = spec.size();
    double bestHeight = 0.0;
    for (Index i = std::max<Index>(lo, 1); i + 1 < spec.size() && i < hi; ++i) {
        const double v = spec.intensities[i];
        if (v >= spec.intensities[i - 1] && v > spec.intensities[i + 1] &&
            v >= minHeight) {
            const bool taller = v > bestHeight;
            const bool tie = v == bestHeight && best < spec.size() &&
                             std::abs(spec.ppmAt(i)) < std::abs(spec.ppmAt(best));
            if (taller || tie) {
                best = i;
                bestHeight = v;
            }
        }
    }
    if (best >= spec.size())
        throw ReferenceNotFoundError("no peak above 10x noise sigma in the reference window");

    // parabolic sub-grid apex
    double apex = spec.ppmAt(best);
    const double fm = spec.intensities[best - 1];
    const double f0 = spec.intensities[best];
    const double fp = spec.intensities[best + 1];
    const double curvature = fm - 2.0 * f0 + fp;
    if (curvature < 0.0) apex += 0.5 * spec.stepPpm * (fm - fp) / curvature;

    Spectrum out = spec;
    const Ppm offset = -apex;
    out.startPpm += offset;
    return {std::move(out), offset};
}

Spectrum excludeSolvent(const Spectrum& spec, const PpmInterval& region) {
    if (region.lo > region.hi) throw std::invalid_argument("inverted solvent region");
    Spectrum out = spec;
    if (region.lo == region.hi) return out;
    const PpmInterval domain = spec.domain();
    if (region.lo < domain.lo - spec.stepPpm || region.hi > domain.hi + spec.stepPpm)
        throw std::invalid_argument("solvent region outside the spectrum domain");

    if (out.excluded.empty()) out.excluded.assign(out.size(), 0);
    std::size_t flagged = 0;
    for (Index i = 0; i < out.size(); ++i) {
        if (region.contains(out.ppmAt(i))) out.excluded[i] = 1;
        if (out.excluded[i]) ++flagged;
    }
    if (flagged == out.size())
        throw std::invalid_argument("solvent region excludes the entire spectrum");
    return out;
}

Spectrum smooth(const Spectrum& spec, const SmoothingFilter& filter) {
    const std::size_t n = spec.size();
    Spectrum out = spec;
    if (filter.kind == SmoothingFilter::Kind::savitzky_golay) {
        const int window = filter.window;
        const int order = filter.order;
        if (window < 3 || window % 2 == 0)
            throw std::invalid_argument("SG window must be odd and >= 3");
        if (order < 0 || order >= window)
            throw std::invalid_argument("SG order must be < window");
        if (static_cast<std::size_t>(window) > n)
            throw std::invalid_argument("SG window longer than the spectrum");
        const int half = window / 2;

        // least-squares polynomial fit over the window, evaluated at
        // offset e from the window center; full-width shifted windows at
        // the edges keep polynomial exactness everywhere
        auto kernel = [&](int evalOffset) {
            Eigen::MatrixXd a(window, order + 1);
            for (int r = 0; r < window; ++r) {
                double v = 1.0;
                for (int c = 0; c <= order; ++c) {
                    a(r, c) = v;
                    v *= static_cast<double>(r - half);
                }
            }
            Eigen::VectorXd e = Eigen::VectorXd::Zero(order + 1);
            double v = 1.0;
            for (int c = 0; c <= order; ++c) {
                e(c) = v;
                v *= static_cast<double>(evalOffset);
            }
            Eigen::VectorXd k =
                a * (a.transpose() * a).ldlt().solve(e);
            return std::vector<double>(k.data(), k.data() + window);
        };

        std::vector<std::vector<double>> kernels(static_cast<std::size_t>(window));
        for (int e = -half; e <= half; ++e)
            kernels[static_cast<std::size_t>(e + half)] = kernel(e);

        for (std::size_t i = 0; i < n; ++i) {
            std::ptrdiff_t center = static_cast<std::ptrdiff_t>(i);
            std::ptrdiff_t evalOffset = 0;
            if (center < half) {
                evalOffset = center - half;
                center = half;
            } else if (center > static_cast<std::ptrdiff_t>(n) - 1 - half) {
                evalOffset = center - (static_cast<std::ptrdiff_t>(n) - 1 - half);
                center = static_cast<std::ptrdiff_t>(n) - 1 - half;
            }
            const auto& k = kernels[static_cast<std::size_t>(evalOffset + half)];
            double acc = 0.0;
            for (int j = -half; j <= half; ++j)
                acc += k[static_cast<std::size_t>(j + half)] *
                       spec.intensities[static_cast<std::size_t>(center + j)];
            out.intensities[i] = acc;
        }
    } else {
        if (!(filter.sigmaPpm > 0.0))
            throw std::invalid_argument("Gaussian sigma must be positive");
        const double sigmaPts = filter.sigmaPpm / spec.stepPpm;
        const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigmaPts)));
        std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
        for (int j = -radius; j <= radius; ++j)
            kernel[static_cast<std::size_t>(j + radius)] =
                std::exp(-0.5 * (j / sigmaPts) * (j / sigmaPts));
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0, wsum = 0.0;
            const auto si = static_cast<std::ptrdiff_t>(i);
            for (int j = -radius; j <= radius; ++j) {
                const std::ptrdiff_t t = si + j;
                if (t < 0 || t >= static_cast<std::ptrdiff_t>(n)) continue;
                const double w = kernel[static_cast<std::size_t>(j + radius)];
                acc += w * spec.intensities[static_cast<std::size_t>(t)];
                wsum += w;
            }
            out.intensities[i] = acc / wsum;
        }
    }
    return out;
}

} // namespace nmrprof
