#include "nmrprof/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace nmrprof {

const Compound* SpectralLibrary::findCompound(const std::string& id) const {
    for (const auto& c : compounds)
        if (c.id == id) return &c;
    return nullptr;
}

const Cluster* SpectralLibrary::findCluster(const std::string& id) const {
    for (const auto& c : compounds)
        for (const auto& k : c.clusters)
            if (k.id == id) return &k;
    return nullptr;
}

std::size_t SpectralLibrary::clusterCount() const {
    std::size_t n = 0;
    for (const auto& c : compounds) n += c.clusters.size();
    return n;
}

std::size_t SpectralLibrary::peakCount() const {
    std::size_t n = 0;
    for (const auto& c : compounds)
        for (const auto& k : c.clusters) n += k.peaks.size();
    return n;
}

GridSpec defaultGrid() { return {-1.0, 0.0002, 70001}; }

void accumulateCluster(const Cluster& cluster, Ppm delta, double scale,
                       Ppm startPpm, Ppm stepPpm, Index i0, Index i1, double* out) {
    for (const auto& peak : cluster.peaks) {
        const double mu = peak.centerOffset + delta;
        const double aw = scale * peak.amplitude * peak.widthParam;
        const double w = peak.widthParam;
        const double d0 = startPpm + static_cast<double>(i0) * stepPpm - mu;
        const std::size_t n = i1 - i0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = d0 + static_cast<double>(j) * stepPpm;
            out[j] += aw / (w + 4.0 * d * d);
        }
    }
}

Spectrum renderCompound(const Compound& compound, Micromolar conc,
                        const std::map<std::string, Ppm>& shifts, const GridSpec& grid) {
    Spectrum out(grid.startPpm, grid.stepPpm, std::vector<Intensity>(grid.points, 0.0));
    if (conc == 0.0) return out;
    requireFinite(conc, "concentration");
    for (const auto& cluster : compound.clusters) {
        auto it = shifts.find(cluster.id);
        if (it == shifts.end())
            throw std::invalid_argument("incomplete profile: no shift for cluster '" +
                                        cluster.id + "' of compound '" + compound.id + "'");
        if (!cluster.shiftWindow.contains(it->second))
            throw std::domain_error("shift " + std::to_string(it->second) +
                                    " outside window of cluster '" + cluster.id + "'");
        accumulateCluster(cluster, it->second, conc, grid.startPpm, grid.stepPpm, 0,
                          grid.points, out.intensities.data());
    }
    return out;
}

Spectrum renderMixture(const SpectralLibrary& library, const Profile& profile,
                       const GridSpec& grid) {
    Spectrum out(grid.startPpm, grid.stepPpm, std::vector<Intensity>(grid.points, 0.0));
    for (const auto& compound : library.compounds) {
        const Micromolar conc = profile.concentrationOf(compound.id);
        if (conc == 0.0) continue;
        requireFinite(conc, "concentration");
        for (const auto& cluster : compound.clusters) {
            auto it = profile.shifts.find(cluster.id);
            if (it == profile.shifts.end())
                throw std::invalid_argument("incomplete profile: no shift for cluster '" +
                                            cluster.id + "'");
            if (!cluster.shiftWindow.contains(it->second))
                throw std::domain_error("shift " + std::to_string(it->second) +
                                        " outside window of cluster '" + cluster.id + "'");
            accumulateCluster(cluster, it->second, conc, grid.startPpm, grid.stepPpm, 0,
                              grid.points, out.intensities.data());
        }
    }
    return out;
}

Intensity unitApex(const Compound& compound, const GridSpec& grid) {
    std::map<std::string, Ppm> shifts;
    for (const auto& k : compound.clusters) shifts[k.id] = k.nominalCenter;
    Spectrum s = renderCompound(compound, 1.0, shifts, grid);
    Intensity apex = 0.0;
    for (Intensity v : s.intensities) apex = std::max(apex, v);
    return apex;
}

Intensity clusterUnitApex(const Cluster& cluster, Ppm stepPpm) {
    // Evaluate the summed signature on a grid spanning the peaks, then
    // refine around the best point; overlapping peaks can put the true
    // apex between peak centers.
    if (cluster.peaks.empty()) return 0.0;
    Ppm lo = cluster.peaks.front().centerOffset, hi = lo;
    for (const auto& p : cluster.peaks) {
        lo = std::min(lo, p.centerOffset - std::sqrt(p.widthParam));
        hi = std::max(hi, p.centerOffset + std::sqrt(p.widthParam));
    }
    auto value = [&](Ppm y) {
        double v = 0.0;
        for (const auto& p : cluster.peaks) {
            const double d = p.centerOffset - y;
            v += p.amplitude * p.widthParam / (p.widthParam + 4.0 * d * d);
        }
        return v;
    };
    const Ppm step = std::max(stepPpm / 4.0, (hi - lo) / 4096.0);
    double best = 0.0;
    Ppm bestY = lo;
    for (Ppm y = lo; y <= hi; y += step) {
        const double v = value(y);
        if (v > best) {
            best = v;
            bestY = y;
        }
    }
    // golden-section polish around the grid argmax
    Ppm a = bestY - step, b = bestY + step;
    const double inv = 0.6180339887498949;
    Ppm x1 = b - inv * (b - a), x2 = a + inv * (b - a);
    double f1 = value(x1), f2 = value(x2);
    for (int it = 0; it < 60; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv * (b - a);
            f2 = value(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv * (b - a);
            f1 = value(x1);
        }
    }
    return std::max(best, std::max(f1, f2));
}

Profile nominalProfile(const SpectralLibrary& library,
                       const std::map<std::string, Micromolar>& concentrations) {
    Profile p;
    for (const auto& compound : library.compounds) {
        auto it = concentrations.find(compound.id);
        p.concentrations[compound.id] = it == concentrations.end() ? 0.0 : it->second;
        for (const auto& k : compound.clusters) p.shifts[k.id] = k.nominalCenter;
    }
    return p;
}

std::vector<std::string> validateLibrary(const SpectralLibrary& library) {
    std::vector<std::string> issues;
    std::set<std::string> compoundIds;
    std::set<std::string> clusterIds;
    const PpmInterval domain{-1.0, 13.0};

    for (const auto& compound : library.compounds) {
        if (compound.id.empty()) issues.push_back("compound with empty id");
        if (!compoundIds.insert(compound.id).second)
            issues.push_back("duplicate compound id '" + compound.id + "'");
        if (compound.clusters.empty())
            issues.push_back("compound '" + compound.id + "' has no clusters");
        if (compound.detectability < 1.0)
            issues.push_back("compound '" + compound.id + "' detectability " +
                             std::to_string(compound.detectability) + " < 1");
        std::set<std::string> local;
        for (const auto& k : compound.clusters) {
            const std::string tag = "cluster '" + k.id + "' of '" + compound.id + "'";
            if (!local.insert(k.id).second)
                issues.push_back("duplicate cluster id '" + k.id + "' within compound '" +
                                 compound.id + "'");
            else if (!clusterIds.insert(k.id).second)
                issues.push_back("cluster id '" + k.id + "' reused across compounds");
            if (k.peaks.empty()) issues.push_back(tag + " has no peaks");
            if (k.shiftWindow.lo > k.shiftWindow.hi)
                issues.push_back(tag + " has inverted shift window");
            if (k.nominalCenter < k.shiftWindow.lo || k.nominalCenter > k.shiftWindow.hi)
                issues.push_back(tag + " nominal center outside its window");
            if (k.shiftWindow.lo < domain.lo || k.shiftWindow.hi > domain.hi)
                issues.push_back(tag + " window outside the [-1, 13] ppm domain");
            for (std::size_t i = 0; i < k.peaks.size(); ++i) {
                const auto& p = k.peaks[i];
                if (!(p.amplitude > 0.0))
                    issues.push_back(tag + " peak " + std::to_string(i) +
                                     " has non-positive amplitude");
                if (!(p.widthParam > 0.0))
                    issues.push_back(tag + " peak " + std::to_string(i) +
                                     " has non-positive width parameter");
            }
        }
    }
    if (library.compounds.empty())
        issues.push_back("library has no compounds");
    else if (!library.findCompound(library.referenceCompound))
        issues.push_back("reference compound '" + library.referenceCompound +
                         "' not in library");
    if (!(library.referenceConcentration > 0.0))
        issues.push_back("reference concentration must be positive");
    return issues;
}

void requireValidLibrary(const SpectralLibrary& library) {
    auto issues = validateLibrary(library);
    if (!issues.empty()) throw ValidationError(std::move(issues));
}

} // namespace nmrprof
