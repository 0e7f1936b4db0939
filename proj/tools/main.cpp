#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nmrprof/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nmrprof;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitPipeline = 3;

bool gQuiet = false;
bool gJsonLogs = false;

void info(const std::string& msg) {
    if (gQuiet) return;
    if (gJsonLogs)
        std::cout << json{{"level", "info"}, {"msg", msg}}.dump() << "\n";
    else
        std::cout << msg << "\n";
}

void writeText(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

struct CommonFlags {
    std::string configPath;
    std::string outDir = ".";
    std::uint64_t seed = 0;
    bool seedSet = false;
    unsigned threads = 0;
    bool threadsSet = false;
    std::size_t particles = 0;
    bool fast = false;
};

void addCommonFlags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.configPath, "Run configuration JSON");
    cmd->add_option("-o,--out", flags.outDir, "Output directory");
    cmd->add_option("--seed", flags.seed, "Random seed")->each([&](const std::string&) {
        flags.seedSet = true;
    });
    cmd->add_option("--threads", flags.threads, "Worker threads (0 = all cores; never changes results)")
        ->each([&](const std::string&) { flags.threadsSet = true; });
    cmd->add_option("--particles", flags.particles, "Particles per variable");
    cmd->add_flag("--fast", flags.fast, "Speed profile: 1000 particles");
}

RunOptions resolveOptions(const CommonFlags& flags) {
    RunOptions options;
    if (!flags.configPath.empty()) {
        std::ifstream in(flags.configPath, std::ios::binary);
        if (!in) throw ValidationError({"cannot open config '" + flags.configPath + "'"});
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        options = runOptionsFromJson(text, flags.configPath);
    }
    if (flags.seedSet) options.infer.seed = flags.seed;
    if (flags.threadsSet) options.infer.threads = flags.threads;
    if (flags.fast) options.infer.particles = 1000;
    if (flags.particles != 0) options.infer.particles = flags.particles;
    return options;
}

void requireFile(const std::string& path, const char* what) {
    if (path.empty() || !fs::exists(path))
        throw ValidationError({std::string(what) + " file not found: '" + path + "'"});
}

void writeManifest(const fs::path& dir, const std::string& command,
                   const RunOptions& options, const json& extra, double wallSeconds,
                   const std::vector<std::string>& outputs) {
    json doc;
    doc["version"] = kVersion;
    doc["command"] = command;
    doc["config"] = json::parse(runOptionsToJson(options));
    doc["wallTimeSeconds"] = wallSeconds;
    doc["outputs"] = outputs;
    for (const auto& [k, v] : extra.items()) doc[k] = v;
    writeText(dir / "manifest.json", doc.dump(2) + "\n");
}

json preprocessDiagnostics(const PreprocessResult& pre) {
    json doc;
    doc["noiseSigma"] = pre.noise.sigma;
    doc["phased"] = pre.phased;
    if (pre.phased) doc["phase"] = {{"phi0_deg", pre.phase.phi0}, {"phi1_deg", pre.phase.phi1}};
    doc["baselineCorrected"] = pre.baselineCorrected;
    if (pre.baselineCorrected) {
        doc["baseline"] = {{"method", pre.baseline.method == BaselineMethod::whittaker
                                          ? "whittaker"
                                          : "hermite"},
                           {"smoothingLambda", pre.baseline.smoothingLambda},
                           {"anchorCount", pre.baseline.anchorPoints.size()}};
    }
    doc["referenced"] = pre.referenced;
    if (pre.referenced) doc["referenceOffset_ppm"] = pre.referenceOffset;
    json excl = json::array();
    for (const auto& iv : exclusionIntervals(pre.spectrum))
        excl.push_back({iv.lo, iv.hi});
    doc["excluded_ppm"] = std::move(excl);
    return doc;
}

int cmdProfile(const std::string& libraryPath, const std::string& inputPath,
               const std::string& kind, const CommonFlags& flags) {
    const auto start = std::chrono::steady_clock::now();
    requireFile(libraryPath, "library");
    requireFile(inputPath, "input");
    RunOptions options = resolveOptions(flags);

    const SpectralLibrary library = loadLibrary(libraryPath);
    fs::create_directories(flags.outDir);

    ProfileRun run;
    if (kind == "fid") {
        run = profileFid(library, readFidJson(inputPath), options);
    } else if (kind == "spectrum") {
        run = profileSpectrum(library, readSpectrumCsv(inputPath), options);
    } else {
        throw ValidationError({"unknown input kind '" + kind + "'"});
    }

    const fs::path dir(flags.outDir);
    writeSpectrumCsv(run.preprocessed.spectrum, (dir / "processed.csv").string());
    writeText(dir / "regions.json",
              regionsToJson(run.regions, run.bounds, run.preprocessed.spectrum,
                            run.preprocessed.noise));
    writeText(dir / "solution.json", solutionToJson(run.solution, library));
    writeText(dir / "preprocess.json", preprocessDiagnostics(run.preprocessed).dump(2) + "\n");

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    writeManifest(dir, "profile", options,
                  {{"library", libraryPath}, {"input", inputPath}, {"inputKind", kind}},
                  wall, {"processed.csv", "regions.json", "solution.json", "preprocess.json"});
    info("profile: " + std::to_string(run.solution.iterations) + " iterations, loss " +
         std::to_string(run.solution.finalLoss) + ", " + std::to_string(wall) + " s");
    return kExitOk;
}

int cmdPreprocess(const std::string& inputPath, const std::string& kind,
                  const CommonFlags& flags) {
    const auto start = std::chrono::steady_clock::now();
    requireFile(inputPath, "input");
    RunOptions options = resolveOptions(flags);
    fs::create_directories(flags.outDir);

    PreprocessResult pre;
    if (kind == "fid") {
        pre = preprocessFid(readFidJson(inputPath), options.preprocess);
    } else if (kind == "spectrum") {
        pre = preprocessSpectrum(readSpectrumCsv(inputPath), options.preprocess);
    } else {
        throw ValidationError({"unknown input kind '" + kind + "'"});
    }

    const fs::path dir(flags.outDir);
    writeSpectrumCsv(pre.spectrum, (dir / "processed.csv").string());
    writeText(dir / "preprocess.json", preprocessDiagnostics(pre).dump(2) + "\n");
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    writeManifest(dir, "preprocess", options,
                  {{"input", inputPath}, {"inputKind", kind}}, wall,
                  {"processed.csv", "preprocess.json"});
    info("preprocess: sigma " + std::to_string(pre.noise.sigma));
    return kExitOk;
}

int cmdSynth(const std::string& libraryPath, int count, double presence, double concLo,
             double concHi, double noiseSigma, const CommonFlags& flags) {
    requireFile(libraryPath, "library");
    if (count < 0) throw ValidationError({"count must be >= 0"});
    if (!(presence >= 0.0 && presence <= 1.0))
        throw ValidationError({"presence probability must be in [0, 1]"});
    if (concLo > concHi) throw ValidationError({"concentration range inverted"});
    const SpectralLibrary library = loadLibrary(libraryPath);
    fs::create_directories(flags.outDir);
    const fs::path dir(flags.outDir);

    const GridSpec grid = defaultGrid();
    std::vector<std::string> outputs;
    for (int i = 0; i < count; ++i) {
        MixtureSpec spec = demoMixtureSpec(library, flags.seed + static_cast<std::uint64_t>(i),
                                           presence, concLo, concHi, noiseSigma);
        const GroundTruth truth = sampleProfile(library, spec);
        const Spectrum spectrum = generateSpectrum(library, truth, grid);
        char stem[32];
        std::snprintf(stem, sizeof(stem), "sample_%03d", i);
        writeSpectrumCsv(spectrum, (dir / (std::string(stem) + ".csv")).string());
        writeGroundTruth(truth, (dir / (std::string(stem) + ".truth.json")).string());
        outputs.push_back(std::string(stem) + ".csv");
        outputs.push_back(std::string(stem) + ".truth.json");
    }
    json manifest{{"version", kVersion},
                  {"command", "synth"},
                  {"library", libraryPath},
                  {"count", count},
                  {"seed", flags.seed},
                  {"presence", presence},
                  {"concentration_uM", {concLo, concHi}},
                  {"noiseSigma", noiseSigma},
                  {"outputs", outputs}};
    writeText(dir / "synth.manifest.json", manifest.dump(2) + "\n");
    info("synth: wrote " + std::to_string(count) + " samples");
    return kExitOk;
}

int cmdEval(const std::string& truthDir, const std::string& solutionDir,
            const CommonFlags& flags, const std::string& libraryPath) {
    requireFile(libraryPath, "library");
    const SpectralLibrary library = loadLibrary(libraryPath);
    if (!fs::is_directory(truthDir))
        throw ValidationError({"truth directory not found: '" + truthDir + "'"});
    if (!fs::is_directory(solutionDir))
        throw ValidationError({"solution directory not found: '" + solutionDir + "'"});

    std::map<std::string, fs::path> truths, solutions;
    for (const auto& e : fs::directory_iterator(truthDir)) {
        const auto name = e.path().filename().string();
        const std::string tag = ".truth.json";
        if (name.size() > tag.size() &&
            name.compare(name.size() - tag.size(), tag.size(), tag) == 0)
            truths[name.substr(0, name.size() - tag.size())] = e.path();
    }
    for (const auto& e : fs::directory_iterator(solutionDir)) {
        const auto name = e.path().filename().string();
        const std::string tag = ".solution.json";
        if (name.size() > tag.size() &&
            name.compare(name.size() - tag.size(), tag.size(), tag) == 0)
            solutions[name.substr(0, name.size() - tag.size())] = e.path();
    }
    std::vector<std::string> orphans;
    for (const auto& [stem, p] : truths)
        if (!solutions.count(stem)) orphans.push_back(stem + " (no solution)");
    for (const auto& [stem, p] : solutions)
        if (!truths.count(stem)) orphans.push_back(stem + " (no truth)");
    if (truths.empty() || solutions.empty())
        throw ValidationError({"no paired truth/solution files found"});
    if (!orphans.empty()) throw ValidationError(orphans);

    fs::create_directories(flags.outDir);
    const fs::path dir(flags.outDir);

    std::vector<double> idAcc, quantAcc;
    json samples = json::array();
    for (const auto& [stem, truthPath] : truths) {
        const GroundTruth truth = readGroundTruth(truthPath.string());
        std::ifstream in(solutions[stem], std::ios::binary);
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        const Solution solution = solutionFromJson(text, solutions[stem].string());

        const AccuracyReport report = scoreProfiles(truth.profile, solution.profile,
                                                    solution.thresholds, library);
        writeText(dir / (stem + ".report.json"), accuracyReportToJson(report));
        writeText(dir / (stem + ".report.csv"), accuracyReportToCsv(report));
        idAcc.push_back(report.identificationAccuracy);
        if (report.quantificationDefined) quantAcc.push_back(report.quantificationAccuracy);
        samples.push_back({{"sample", stem},
                           {"identificationAccuracy", report.identificationAccuracy},
                           {"quantificationAccuracy", report.quantificationAccuracy}});
    }

    auto meanStd = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= v.empty() ? 1.0 : static_cast<double>(v.size());
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        s = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size())) : 0.0;
        return std::pair<double, double>(m, s);
    };
    const auto [idMean, idStd] = meanStd(idAcc);
    const auto [qMean, qStd] = meanStd(quantAcc);
    char idText[48], qText[48];
    std::snprintf(idText, sizeof(idText), "%.2f±%.2f", idMean, idStd);
    std::snprintf(qText, sizeof(qText), "%.2f±%.2f", qMean, qStd);

    json aggregate{{"samples", samples},
                   {"identificationAccuracy", {{"mean", idMean}, {"std", idStd}, {"text", idText}}},
                   {"quantificationAccuracy", {{"mean", qMean}, {"std", qStd}, {"text", qText}}}};
    writeText(dir / "aggregate.json", aggregate.dump(2) + "\n");
    info(std::string("eval: id ") + idText + ", quant " + qText);
    return kExitOk;
}

int cmdLibraryValidate(const std::string& libraryPath) {
    requireFile(libraryPath, "library");
    loadLibrary(libraryPath);  // throws ValidationError with the full list
    info("library ok");
    return kExitOk;
}

int cmdDemoLibrary(const std::string& kind, const std::string& outPath) {
    SpectralLibrary library;
    if (kind == "demo15")
        library = demoLibrary15();
    else if (kind == "csf48")
        library = demoLibraryCsf48();
    else
        throw ValidationError({"unknown demo library '" + kind + "' (demo15|csf48)"});
    saveLibrary(library, outPath);
    info("wrote " + outPath);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Automated profiling of 1D NMR spectra against a compound library"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    app.add_flag("--quiet", gQuiet, "Suppress progress output");
    app.add_flag("--json-logs", gJsonLogs, "Machine-readable log lines");

    CommonFlags flags;

    auto* profile = app.add_subcommand("profile", "Run the full profiling pipeline");
    std::string libraryPath, inputPath, kind = "spectrum";
    profile->add_option("--library", libraryPath, "Spectral library JSON")->required();
    profile->add_option("--input", inputPath, "Input spectrum CSV or FID JSON")->required();
    profile->add_option("--kind", kind, "Input kind: spectrum|fid");
    addCommonFlags(profile, flags);

    auto* preprocess = app.add_subcommand("preprocess", "Preprocessing-only run");
    preprocess->add_option("--input", inputPath, "Input spectrum CSV or FID JSON")->required();
    preprocess->add_option("--kind", kind, "Input kind: spectrum|fid");
    addCommonFlags(preprocess, flags);

    auto* synth = app.add_subcommand("synth", "Generate ground-truthed synthetic mixtures");
    int count = 5;
    double presence = 0.7, concLo = 30.0, concHi = 300.0, noiseSigma = -1.0;
    synth->add_option("--library", libraryPath, "Spectral library JSON")->required();
    synth->add_option("--count", count, "Number of samples");
    synth->add_option("--presence", presence, "Per-compound presence probability");
    synth->add_option("--conc-lo", concLo, "Concentration range low (uM)");
    synth->add_option("--conc-hi", concHi, "Concentration range high (uM)");
    synth->add_option("--noise-sigma", noiseSigma,
                      "Noise std (intensity units); negative = default 0.5% apex rule");
    addCommonFlags(synth, flags);

    auto* eval = app.add_subcommand("eval", "Score solutions against ground truths");
    std::string truthDir, solutionDir;
    eval->add_option("--truth", truthDir, "Directory of *.truth.json")->required();
    eval->add_option("--solutions", solutionDir, "Directory of *.solution.json")->required();
    eval->add_option("--library", libraryPath, "Spectral library JSON")->required();
    addCommonFlags(eval, flags);

    auto* validate = app.add_subcommand("library-validate", "Validate a library file");
    validate->add_option("--library", libraryPath, "Spectral library JSON")->required();

    auto* demo = app.add_subcommand("demo-library", "Write a built-in demonstration library");
    std::string demoKind = "demo15", demoOut = "library.json";
    demo->add_option("--kind", demoKind, "demo15|csf48");
    demo->add_option("-o,--out", demoOut, "Output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (profile->parsed()) return cmdProfile(libraryPath, inputPath, kind, flags);
        if (preprocess->parsed()) return cmdPreprocess(inputPath, kind, flags);
        if (synth->parsed())
            return cmdSynth(libraryPath, count, presence, concLo, concHi, noiseSigma, flags);
        if (eval->parsed()) return cmdEval(truthDir, solutionDir, flags, libraryPath);
        if (validate->parsed()) return cmdLibraryValidate(libraryPath);
        if (demo->parsed()) return cmdDemoLibrary(demoKind, demoOut);
    } catch (const ValidationError& e) {
        std::cerr << "error: validation: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: pipeline: " << e.what() << "\n";
        return kExitPipeline;
    }
    return kExitOk;
}
