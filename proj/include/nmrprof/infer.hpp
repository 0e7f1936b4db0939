#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nmrprof/loss.hpp"
#include "nmrprof/metrics.hpp"
#include "nmrprof/model.hpp"
#include "nmrprof/partition.hpp"
#include "nmrprof/types.hpp"

namespace nmrprof {

/// Per-variable weighted particle populations.
struct VariableParticles {
    std::vector<double> values;
    std::vector<double> weights;  // normalized after each reweighting
    double kdeStd = 0.0;          // std of the KDE mixture that produced `values`
    double bandwidth = 0.0;
    bool uninformative = false;  // last reweighting was flat (nothing to learn)
    std::vector<double> binnedLogDensity;  // proposal density, importance variant only
};

struct ParticleSet {
    std::vector<VariableParticles> perVariable;  // parallel to FactorGraph::variables
    int iteration = 0;
};

/// Geometric temperature ladder: T(t) = max(T0 * decay^t, Tmin).
/// T0 <= 0 requests the problem-adaptive default (all-zero-profile loss
/// divided by the factor count); Tmin <= 0 defaults to 1e-6 * T0.
struct AnnealSchedule {
    double T0 = 0.0;
    double decay = 0.7;
    double Tmin = 0.0;

    double temperatureAt(int t) const {
        double T = T0;
        for (int i = 0; i < t; ++i) T *= decay;
        return std::max(T, Tmin);
    }
};

struct InferConfig {
    std::size_t particles = 10000;
    int maxIterations = 60;
    double convergenceTol = 0.005;  // KDE std below tol * domain width, per variable
    bool useImportanceWeights = false;
    bool elitism = true;
    std::uint64_t seed = 0;
    unsigned threads = 0;  // 0 = hardware concurrency; never changes results
};

struct VariableDiagnostics {
    std::string id;
    double mode = 0.0;
    double kdeStd = 0.0;
    double bandwidth = 0.0;
};

struct Solution {
    Profile profile;
    double finalLoss = 0.0;
    std::vector<double> bestLossTrace;  // incumbent best per iteration, non-increasing
    bool converged = false;
    int iterations = 0;
    std::vector<VariableDiagnostics> diagnostics;
    DetectionThresholds thresholds;
    double intensityScale = 1.0;    // observed units per library unit, from the reference
    bool referenceScaled = false;   // false = absolute quantification not applied
};

/// N independent uniform draws per variable from its domain; zero-width
/// domains freeze the variable at its single value.
ParticleSet initParticles(const FactorGraph& graph, const InferConfig& config);

/// One annealed update: pair particles into joint assignments, evaluate
/// every factor region-locally in log space, credit each variable with the
/// loss of its adjacent factors, then resample each variable from a
/// weighted Gaussian KDE.
ParticleSet iterate(const ParticleSet& particles, const FactorGraph& graph,
                    const Spectrum& observed, const SpectralLibrary& library,
                    double temperature, const InferConfig& config,
                    const LossConfig& lossConfig = {});

/// Full MAP search: anneal until every variable's KDE has sharpened below
/// the tolerance (or maxIterations), then return the per-variable modes
/// refined by local coordinate descent on the exact loss.
Solution runMap(const FactorGraph& graph, const Spectrum& observed,
                const SpectralLibrary& library, const InferConfig& config,
                const AnnealSchedule& schedule = {}, const LossConfig& lossConfig = {});

/// Rescale every concentration so the reference compound reads exactly its
/// known value. When the reference was not recovered the profile is
/// returned unscaled with referenceScaled left false.
Solution absoluteQuantify(Solution solution, const SpectralLibrary& library);

} // namespace nmrprof
