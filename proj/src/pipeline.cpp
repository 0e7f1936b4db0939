#include "nmrprof/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace nmrprof {

using nlohmann::json;

namespace {

PreprocessResult finishPreprocess(Spectrum spec, const PreprocessOptions& options,
                                  PreprocessResult result) {
    result.noise = detectBaseline(spec);
    if (options.baseline) {
        auto [corrected, model] = correctBaseline(spec, result.noise,
                                                  options.baselineMethod,
                                                  options.smoothingLambda);
        spec = std::move(corrected);
        result.baseline = std::move(model);
        result.baselineCorrected = true;
        result.noise = detectBaseline(spec);
    }
    if (options.reference) {
        auto [shifted, offset] = referenceShift(spec, options.referenceWindow,
                                                result.noise);
        spec = std::move(shifted);
        result.referenceOffset = offset;
        result.referenced = true;
    }
    if (options.solventExclusion) spec = excludeSolvent(spec, options.solventRegion);
    if (options.smoothing) spec = smooth(spec, *options.smoothing);
    result.spectrum = std::move(spec);
    return result;
}

} // namespace

PreprocessResult preprocessSpectrum(const Spectrum& raw, const PreprocessOptions& options) {
    return finishPreprocess(raw, options, PreprocessResult{});
}

PreprocessResult preprocessFid(const Fid& fid, const PreprocessOptions& options) {
    PreprocessResult result;
    ComplexSpectrum cs = zeroFillTransform(fid, options.zeroFillFactor);
    Spectrum real;
    if (options.phase) {
        Spectrum magnitude(cs.startPpm, cs.stepPpm, cs.magnitude());
        const NoiseEstimate magNoise = detectBaseline(magnitude);
        auto [params, phased] = autophase(cs, magNoise);
        result.phase = params;
        result.phased = true;
        real = std::move(phased);
    } else {
        real = cs.realChannel();
    }
    return finishPreprocess(std::move(real), options, std::move(result));
}

namespace {

ProfileRun profilePreprocessed(const SpectralLibrary& library, PreprocessResult pre,
                               const RunOptions& options) {
    requireValidLibrary(library);
    const Spectrum& spec = pre.spectrum;
    const PpmInterval domain = spec.domain();
    {
        std::vector<std::string> issues;
        for (const auto& compound : library.compounds)
            for (const auto& cluster : compound.clusters)
                if (cluster.shiftWindow.lo < domain.lo ||
                    cluster.shiftWindow.hi > domain.hi)
                    issues.push_back("cluster '" + cluster.id +
                                     "' window outside the spectrum grid");
        if (!issues.empty()) throw ValidationError(std::move(issues));
    }

    ProfileRun run;
    run.bounds = boundAll(spec, library, pre.noise, options.infer.threads);
    run.influence =
        influenceAll(library, run.bounds, pre.noise, domain, options.infer.threads);
    run.regions =
        partitionRegions(library, run.influence, domain, exclusionIntervals(spec));
    const FactorGraph graph = buildFactorGraph(run.regions, library, run.bounds);

    Solution solution =
        runMap(graph, spec, library, options.infer, options.anneal, options.loss);
    solution = absoluteQuantify(std::move(solution), library);
    solution.thresholds = detectionThresholds(
        pre.noise, library, GridSpec::of(spec),
        solution.referenceScaled ? solution.intensityScale : 1.0);
    for (const auto& compound : library.compounds) {
        const double conc = solution.profile.concentrationOf(compound.id);
        solution.profile.detected[compound.id] =
            conc >= solution.thresholds.thresholdOf(compound.id);
    }

    run.solution = std::move(solution);
    run.preprocessed = std::move(pre);
    return run;
}

} // namespace

ProfileRun profileSpectrum(const SpectralLibrary& library, const Spectrum& raw,
                           const RunOptions& options) {
    return profilePreprocessed(library, preprocessSpectrum(raw, options.preprocess),
                               options);
}

ProfileRun profileFid(const SpectralLibrary& library, const Fid& fid,
                      const RunOptions& options) {
    return profilePreprocessed(library, preprocessFid(fid, options.preprocess), options);
}

std::string solutionToJson(const Solution& solution, const SpectralLibrary& library) {
    json doc;
    doc["converged"] = solution.converged;
    doc["iterations"] = solution.iterations;
    doc["finalLoss"] = solution.finalLoss;
    doc["referenceScaled"] = solution.referenceScaled;
    doc["intensityScale"] = solution.intensityScale;
    doc["compounds"] = json::array();
    for (const auto& compound : library.compounds) {
        const double conc = solution.profile.concentrationOf(compound.id);
        auto det = solution.profile.detected.find(compound.id);
        doc["compounds"].push_back(
            {{"id", compound.id},
             {"name", compound.name},
             {"concentration_uM", conc},
             {"detected", det != solution.profile.detected.end() && det->second},
             {"threshold_uM", solution.thresholds.thresholdOf(compound.id)}});
    }
    doc["clusters"] = json::array();
    for (const auto& compound : library.compounds)
        for (const auto& cluster : compound.clusters) {
            auto it = solution.profile.shifts.find(cluster.id);
            doc["clusters"].push_back(
                {{"id", cluster.id},
                 {"shift_ppm", it == solution.profile.shifts.end() ? cluster.nominalCenter
                                                                   : it->second}});
        }
    doc["bestLossTrace"] = solution.bestLossTrace;
    return doc.dump(2) + "\n";
}

Solution solutionFromJson(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError({origin + ": " + e.what()});
    }
    Solution solution;
    try {
        solution.converged = doc.value("converged", false);
        solution.iterations = doc.value("iterations", 0);
        solution.finalLoss = doc.value("finalLoss", 0.0);
        solution.referenceScaled = doc.value("referenceScaled", false);
        solution.intensityScale = doc.value("intensityScale", 1.0);
        for (const auto& jc : doc.at("compounds")) {
            const auto id = jc.at("id").get<std::string>();
            solution.profile.concentrations[id] = jc.at("concentration_uM").get<double>();
            solution.profile.detected[id] = jc.value("detected", false);
            solution.thresholds.perCompound[id] = jc.value("threshold_uM", 0.0);
        }
        if (doc.contains("clusters"))
            for (const auto& jk : doc["clusters"])
                solution.profile.shifts[jk.at("id").get<std::string>()] =
                    jk.at("shift_ppm").get<double>();
        if (doc.contains("bestLossTrace"))
            solution.bestLossTrace = doc["bestLossTrace"].get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ValidationError({origin + ": " + e.what()});
    }
    return solution;
}

std::string regionsToJson(const std::vector<Region>& regions,
                          const ConcentrationBound& bounds, const Spectrum& spectrum,
                          const NoiseEstimate& noise) {
    json doc;
    doc["regions"] = json::array();
    auto ranges = regionIndexRanges(regions, spectrum);
    json unexplained = json::array();
    for (std::size_t r = 0; r < regions.size(); ++r) {
        const auto& region = regions[r];
        doc["regions"].push_back({{"interval_ppm", {region.interval.lo, region.interval.hi}},
                                  {"clusters", region.clusterIds},
                                  {"compounds", region.compoundIds}});
        if (!region.background()) continue;
        double peak = 0.0;
        for (Index i = ranges[r].first; i < ranges[r].second; ++i)
            if (!spectrum.isExcluded(i))
                peak = std::max(peak, std::abs(spectrum.intensities[i]));
        if (peak > 5.0 * noise.sigma && noise.sigma > 0.0)
            unexplained.push_back(
                {{"interval_ppm", {region.interval.lo, region.interval.hi}},
                 {"maxAbsIntensity", peak}});
    }
    doc["unexplainedSignal"] = std::move(unexplained);
    doc["bounds"] = json::array();
    for (const auto& [compound, bound] : bounds.perCompound)
        doc["bounds"].push_back({{"compound", compound}, {"bound_uM", bound}});
    return doc.dump(2) + "\n";
}

namespace {

PpmInterval intervalFrom(const json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>()};
}

} // namespace

std::string runOptionsToJson(const RunOptions& options) {
    json doc;
    const auto& p = options.preprocess;
    doc["preprocess"] = {
        {"phase", p.phase},
        {"zeroFillFactor", p.zeroFillFactor},
        {"baseline", p.baseline},
        {"baselineMethod",
         p.baselineMethod == BaselineMethod::whittaker ? "whittaker" : "hermite"},
        {"smoothingLambda", p.smoothingLambda},
        {"reference", p.reference},
        {"referenceWindow", {p.referenceWindow.lo, p.referenceWindow.hi}},
        {"solventExclusion", p.solventExclusion},
        {"solventRegion", {p.solventRegion.lo, p.solventRegion.hi}}};
    if (p.smoothing) {
        if (p.smoothing->kind == SmoothingFilter::Kind::savitzky_golay)
            doc["preprocess"]["smoothing"] = {{"kind", "savitzky_golay"},
                                              {"window", p.smoothing->window},
                                              {"order", p.smoothing->order}};
        else
            doc["preprocess"]["smoothing"] = {{"kind", "gaussian"},
                                              {"sigmaPpm", p.smoothing->sigmaPpm}};
    } else {
        doc["preprocess"]["smoothing"] = nullptr;
    }
    doc["loss"] = {{"gammas", options.loss.gammas}};
    doc["infer"] = {{"particles", options.infer.particles},
                    {"maxIterations", options.infer.maxIterations},
                    {"convergenceTol", options.infer.convergenceTol},
                    {"useImportanceWeights", options.infer.useImportanceWeights},
                    {"elitism", options.infer.elitism},
                    {"seed", options.infer.seed},
                    {"threads", options.infer.threads}};
    doc["anneal"] = {{"T0", options.anneal.T0},
                     {"decay", options.anneal.decay},
                     {"Tmin", options.anneal.Tmin}};
    return doc.dump(2) + "\n";
}

RunOptions runOptionsFromJson(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError({origin + ": " + e.what()});
    }
    RunOptions options;
    try {
        if (doc.contains("preprocess")) {
            const auto& jp = doc["preprocess"];
            auto& p = options.preprocess;
            p.phase = jp.value("phase", p.phase);
            p.zeroFillFactor = jp.value("zeroFillFactor", p.zeroFillFactor);
            p.baseline = jp.value("baseline", p.baseline);
            if (jp.contains("baselineMethod")) {
                const auto m = jp["baselineMethod"].get<std::string>();
                if (m == "whittaker")
                    p.baselineMethod = BaselineMethod::whittaker;
                else if (m == "hermite")
                    p.baselineMethod = BaselineMethod::hermite;
                else
                    throw ValidationError({origin + ": unknown baseline method '" + m + "'"});
            }
            p.smoothingLambda = jp.value("smoothingLambda", p.smoothingLambda);
            p.reference = jp.value("reference", p.reference);
            if (jp.contains("referenceWindow"))
                p.referenceWindow = intervalFrom(jp["referenceWindow"]);
            p.solventExclusion = jp.value("solventExclusion", p.solventExclusion);
            if (jp.contains("solventRegion"))
                p.solventRegion = intervalFrom(jp["solventRegion"]);
            if (jp.contains("smoothing") && !jp["smoothing"].is_null()) {
                SmoothingFilter f;
                const auto kind = jp["smoothing"].at("kind").get<std::string>();
                if (kind == "savitzky_golay") {
                    f.kind = SmoothingFilter::Kind::savitzky_golay;
                    f.window = jp["smoothing"].value("window", 11);
                    f.order = jp["smoothing"].value("order", 3);
                } else if (kind == "gaussian") {
                    f.kind = SmoothingFilter::Kind::gaussian;
                    f.sigmaPpm = jp["smoothing"].at("sigmaPpm").get<double>();
                } else {
                    throw ValidationError({origin + ": unknown smoothing kind '" + kind + "'"});
                }
                p.smoothing = f;
            }
        }
        if (doc.contains("loss") && doc["loss"].contains("gammas")) {
            const auto g = doc["loss"]["gammas"].get<std::vector<double>>();
            if (g.size() != 4)
                throw ValidationError({origin + ": loss.gammas must have 4 entries"});
            std::copy(g.begin(), g.end(), options.loss.gammas.begin());
            if (!(options.loss.gammas[0] > 0.0))
                throw ValidationError({origin + ": loss.gammas[0] must be positive"});
        }
        if (doc.contains("infer")) {
            const auto& ji = doc["infer"];
            auto& i = options.infer;
            i.particles = ji.value("particles", i.particles);
            i.maxIterations = ji.value("maxIterations", i.maxIterations);
            i.convergenceTol = ji.value("convergenceTol", i.convergenceTol);
            i.useImportanceWeights = ji.value("useImportanceWeights", i.useImportanceWeights);
            i.elitism = ji.value("elitism", i.elitism);
            i.seed = ji.value("seed", i.seed);
            i.threads = ji.value("threads", i.threads);
        }
        if (doc.contains("anneal")) {
            const auto& ja = doc["anneal"];
            options.anneal.T0 = ja.value("T0", options.anneal.T0);
            options.anneal.decay = ja.value("decay", options.anneal.decay);
            options.anneal.Tmin = ja.value("Tmin", options.anneal.Tmin);
        }
    } catch (const json::exception& e) {
        throw ValidationError({origin + ": " + e.what()});
    }
    return options;
}

} // namespace nmrprof
