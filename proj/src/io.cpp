#include "nmrprof/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace nmrprof {

using nlohmann::json;

namespace {

std::string readFile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError({"cannot open file '" + path + "'"});
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void writeFile(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file '" + path + "'");
    out << text;
}

double requireNumber(const json& j, const char* key, std::vector<std::string>& issues,
                     const std::string& where) {
    if (!j.contains(key) || !j[key].is_number()) {
        issues.push_back(where + ": missing numeric field '" + key + "'");
        return 0.0;
    }
    return j[key].get<double>();
}

std::string requireString(const json& j, const char* key, std::vector<std::string>& issues,
                          const std::string& where) {
    if (!j.contains(key) || !j[key].is_string()) {
        issues.push_back(where + ": missing string field '" + key + "'");
        return {};
    }
    return j[key].get<std::string>();
}

} // namespace

SpectralLibrary libraryFromJsonText(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError({origin + ": " + e.what()});
    }

    std::vector<std::string> issues;
    SpectralLibrary lib;
    lib.biofluidTag = requireString(doc, "biofluid", issues, origin);
    lib.referenceCompound = requireString(doc, "referenceCompound", issues, origin);
    lib.referenceConcentration =
        requireNumber(doc, "referenceConcentration_uM", issues, origin);

    if (!doc.contains("compounds") || !doc["compounds"].is_array()) {
        issues.push_back(origin + ": missing 'compounds' array");
    } else {
        for (const auto& jc : doc["compounds"]) {
            Compound compound;
            const std::string whereC = origin + " compound '" +
                                       jc.value("id", std::string("?")) + "'";
            compound.id = requireString(jc, "id", issues, whereC);
            compound.name = requireString(jc, "name", issues, whereC);
            compound.detectability = jc.value("detectability", 1.0);
            if (!jc.contains("clusters") || !jc["clusters"].is_array()) {
                issues.push_back(whereC + ": missing 'clusters' array");
            } else {
                for (const auto& jk : jc["clusters"]) {
                    Cluster cluster;
                    const std::string whereK =
                        whereC + " cluster '" + jk.value("id", std::string("?")) + "'";
                    cluster.id = requireString(jk, "id", issues, whereK);
                    cluster.nominalCenter =
                        requireNumber(jk, "nominalCenter_ppm", issues, whereK);
                    if (jk.contains("window_ppm") && jk["window_ppm"].is_array() &&
                        jk["window_ppm"].size() == 2) {
                        cluster.shiftWindow.lo = jk["window_ppm"][0].get<double>();
                        cluster.shiftWindow.hi = jk["window_ppm"][1].get<double>();
                    } else {
                        cluster.shiftWindow = {
                            cluster.nominalCenter - kDefaultShiftWindowHalfWidth,
                            cluster.nominalCenter + kDefaultShiftWindowHalfWidth};
                    }
                    if (jk.contains("peaks") && jk["peaks"].is_array()) {
                        for (const auto& jp : jk["peaks"]) {
                            PeakShape p;
                            p.amplitude = requireNumber(jp, "amplitude", issues, whereK);
                            p.centerOffset =
                                requireNumber(jp, "centerOffset_ppm", issues, whereK);
                            p.widthParam =
                                requireNumber(jp, "widthParam_ppm2", issues, whereK);
                            cluster.peaks.push_back(p);
                        }
                    } else {
                        issues.push_back(whereK + ": missing 'peaks' array");
                    }
                    compound.clusters.push_back(std::move(cluster));
                }
            }
            lib.compounds.push_back(std::move(compound));
        }
    }

    auto structural = validateLibrary(lib);
    issues.insert(issues.end(), structural.begin(), structural.end());
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return lib;
}

SpectralLibrary loadLibrary(const std::string& path) {
    return libraryFromJsonText(readFile(path), path);
}

std::string libraryToJsonText(const SpectralLibrary& library) {
    json doc;
    doc["biofluid"] = library.biofluidTag;
    doc["referenceCompound"] = library.referenceCompound;
    doc["referenceConcentration_uM"] = library.referenceConcentration;
    doc["compounds"] = json::array();
    for (const auto& compound : library.compounds) {
        json jc;
        jc["id"] = compound.id;
        jc["name"] = compound.name;
        jc["detectability"] = compound.detectability;
        jc["clusters"] = json::array();
        for (const auto& cluster : compound.clusters) {
            json jk;
            jk["id"] = cluster.id;
            jk["nominalCenter_ppm"] = cluster.nominalCenter;
            jk["window_ppm"] = {cluster.shiftWindow.lo, cluster.shiftWindow.hi};
            jk["peaks"] = json::array();
            for (const auto& p : cluster.peaks) {
                jk["peaks"].push_back({{"amplitude", p.amplitude},
                                       {"centerOffset_ppm", p.centerOffset},
                                       {"widthParam_ppm2", p.widthParam}});
            }
            jc["clusters"].push_back(std::move(jk));
        }
        doc["compounds"].push_back(std::move(jc));
    }
    return doc.dump(2) + "\n";
}

void saveLibrary(const SpectralLibrary& library, const std::string& path) {
    writeFile(path, libraryToJsonText(library));
}

Spectrum readSpectrumCsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError({"cannot open file '" + path + "'"});
    std::string line;
    if (!std::getline(in, line))
        throw ValidationError({path + ": empty spectrum file"});
    std::vector<double> ppm, intensity;
    std::size_t lineNo = 1;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        double p = 0.0, v = 0.0;
        if (std::sscanf(line.c_str(), "%lf,%lf", &p, &v) != 2)
            throw ValidationError(
                {path + ":" + std::to_string(lineNo) + ": expected 'ppm,intensity'"});
        ppm.push_back(p);
        intensity.push_back(v);
    }
    if (ppm.size() < 2) throw ValidationError({path + ": fewer than 2 grid points"});

    const double step = ppm[1] - ppm[0];
    if (!(step > 0.0)) throw ValidationError({path + ": ppm axis must ascend"});
    const double tol = 1e-9 * std::abs(step);
    for (std::size_t i = 1; i < ppm.size(); ++i) {
        const double expected = ppm[0] + static_cast<double>(i) * step;
        if (std::abs(ppm[i] - expected) > tol * static_cast<double>(i) + tol)
            throw ValidationError({path + ": non-uniform grid at row " +
                                   std::to_string(i + 2)});
    }
    return Spectrum(ppm[0], step, std::move(intensity));
}

void writeSpectrumCsv(const Spectrum& spectrum, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file '" + path + "'");
    out << "ppm,intensity\n";
    char buf[80];
    for (Index i = 0; i < spectrum.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", spectrum.ppmAt(i),
                      spectrum.intensities[i]);
        out << buf;
    }
}

Fid readFidJson(const std::string& path) {
    json doc;
    try {
        doc = json::parse(readFile(path));
    } catch (const json::parse_error& e) {
        throw ValidationError({path + ": " + e.what()});
    }
    std::vector<std::string> issues;
    Fid fid;
    fid.dwellTime = requireNumber(doc, "dwellTime_s", issues, path);
    fid.spectrometerFreq = requireNumber(doc, "spectrometerFreq_MHz", issues, path);
    fid.sweepWidth = requireNumber(doc, "sweepWidth_Hz", issues, path);
    if (!doc.contains("samples") || !doc["samples"].is_array() || doc["samples"].empty()) {
        issues.push_back(path + ": missing non-empty 'samples' array");
    } else {
        for (const auto& s : doc["samples"]) {
            if (!s.is_array() || s.size() != 2) {
                issues.push_back(path + ": each sample must be [re, im]");
                break;
            }
            fid.re.push_back(s[0].get<double>());
            fid.im.push_back(s[1].get<double>());
        }
    }
    if (fid.dwellTime <= 0.0) issues.push_back(path + ": dwellTime_s must be positive");
    if (fid.dwellTime > 0.0 &&
        std::abs(fid.sweepWidth * fid.dwellTime - 1.0) > 1e-6)
        issues.push_back(path + ": sweepWidth_Hz must equal 1/dwellTime_s");
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return fid;
}

void writeFidJson(const Fid& fid, const std::string& path) {
    json doc;
    doc["dwellTime_s"] = fid.dwellTime;
    doc["spectrometerFreq_MHz"] = fid.spectrometerFreq;
    doc["sweepWidth_Hz"] = fid.sweepWidth;
    auto samples = json::array();
    for (std::size_t i = 0; i < fid.size(); ++i)
        samples.push_back({fid.re[i], fid.im[i]});
    doc["samples"] = std::move(samples);
    writeFile(path, doc.dump() + "\n");
}

} // namespace nmrprof
