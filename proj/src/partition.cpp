#include "nmrprof/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "nmrprof/parallel.hpp"

namespace nmrprof {

namespace {

// Noise allowance added to the spectrum before the ratio test. A point only
// argues against a concentration when the rendered signature exceeds the
// observation by more than this many sigmas, which keeps chance noise dips
// in the signature tails from cutting the bound below the true value.
constexpr double kBoundNoiseSigmas = 5.0;

// Signature support: points where the unit signature exceeds this fraction
// of its apex take part in the min-ratio.
constexpr double kSupportFraction = 0.01;

// Influence threshold floor, relative to the cluster's rendered apex at its
// bound. Keeps near-noiseless spectra from producing spectrum-wide regions.
constexpr double kInfluenceFloorRel = 1e-4;

double signatureAt(const Cluster& cluster, Ppm rel) {
    double v = 0.0;
    for (const auto& p : cluster.peaks) {
        const double d = p.centerOffset - rel;
        v += p.amplitude * p.widthParam / (p.widthParam + 4.0 * d * d);
    }
    return v;
}

/// Conservative half-extent of the region where the unit signature can
/// exceed `level`, measured from each peak center.
Ppm signatureReach(const Cluster& cluster, double level) {
    Ppm lo = std::numeric_limits<double>::max();
    Ppm hi = std::numeric_limits<double>::lowest();
    const double n = static_cast<double>(cluster.peaks.size());
    for (const auto& p : cluster.peaks) {
        const double frac = n * p.amplitude / level;
        const double d =
            frac > 1.0 ? 0.5 * std::sqrt(p.widthParam * (frac - 1.0)) : 0.0;
        lo = std::min(lo, p.centerOffset - d);
        hi = std::max(hi, p.centerOffset + d);
    }
    return std::max(std::abs(lo), std::abs(hi));
}

} // namespace

Micromolar boundConcentration(const Spectrum& spec, const Cluster& cluster,
                              const NoiseEstimate& noise) {
    const PpmInterval domain = spec.domain();
    if (cluster.shiftWindow.lo < domain.lo || cluster.shiftWindow.hi > domain.hi)
        throw std::domain_error("cluster '" + cluster.id +
                                "' shift window outside the spectrum domain");

    const double apex = clusterUnitApex(cluster, spec.stepPpm);
    if (!(apex > 0.0)) return 0.0;
    const double support = kSupportFraction * apex;
    const double allowance = kBoundNoiseSigmas * std::max(noise.sigma, 0.0);
    const Ppm reach = signatureReach(cluster, support);

    const double none = std::numeric_limits<double>::max();
    auto minRatioAt = [&](Ppm delta) {
        const Index i0 = spec.lowerIndex(delta - reach);
        const Index i1 = std::min<Index>(spec.size(), spec.lowerIndex(delta + reach) + 1);
        double worst = none;
        for (Index i = i0; i < i1; ++i) {
            if (spec.isExcluded(i)) continue;
            const double u = signatureAt(cluster, spec.ppmAt(i) - delta);
            if (u < support) continue;
            const double s = std::max(spec.intensities[i], 0.0) + allowance;
            worst = std::min(worst, s / u);
        }
        return worst;
    };

    // coarse pass: trial shifts on the spectrum grid lattice, window
    // endpoints included
    std::vector<Ppm> trials;
    trials.push_back(cluster.shiftWindow.lo);
    for (Index i = spec.lowerIndex(cluster.shiftWindow.lo);
         i < spec.size() && spec.ppmAt(i) <= cluster.shiftWindow.hi; ++i)
        trials.push_back(spec.ppmAt(i));
    trials.push_back(cluster.shiftWindow.hi);

    std::vector<double> coarse(trials.size());
    double best = 0.0;
    for (std::size_t k = 0; k < trials.size(); ++k) {
        coarse[k] = minRatioAt(trials[k]);
        if (coarse[k] != none) best = std::max(best, coarse[k]);
    }
    if (best == 0.0) return 0.0;

    // The true shift almost never falls on the trial lattice, and half a
    // grid step of misalignment cuts the min-ratio on steep flanks well
    // below the true concentration. Refine every competitive local maximum
    // of the coarse profile with a golden-section search; exact plateaus
    // (constant ratio) cannot improve and are left alone.
    constexpr double kInv = 0.6180339887498949;
    for (std::size_t k = 0; k < trials.size(); ++k) {
        if (coarse[k] == none || coarse[k] < 0.8 * best) continue;
        const double left = k > 0 && coarse[k - 1] != none ? coarse[k - 1] : -1.0;
        const double right =
            k + 1 < trials.size() && coarse[k + 1] != none ? coarse[k + 1] : -1.0;
        if (coarse[k] < left || coarse[k] < right) continue;  // not a local max
        if (coarse[k] == left && coarse[k] == right) continue;  // exact plateau
        Ppm a = k > 0 ? trials[k - 1] : trials[k];
        Ppm b = k + 1 < trials.size() ? trials[k + 1] : trials[k];
        if (!(b > a)) continue;
        Ppm x1 = b - kInv * (b - a), x2 = a + kInv * (b - a);
        double f1 = minRatioAt(x1), f2 = minRatioAt(x2);
        for (int it = 0; it < 60 && (b - a) > 1e-13; ++it) {
            if (f1 == none || f2 == none) break;
            if (f1 > f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - kInv * (b - a);
                f1 = minRatioAt(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + kInv * (b - a);
                f2 = minRatioAt(x2);
            }
        }
        if (f1 != none) best = std::max(best, f1);
        if (f2 != none) best = std::max(best, f2);
    }
    return best;
}

ConcentrationBound boundAll(const Spectrum& spec, const SpectralLibrary& library,
                            const NoiseEstimate& noise, unsigned threads) {
    std::vector<const Cluster*> clusters;
    std::vector<const Compound*> owners;
    for (const auto& compound : library.compounds)
        for (const auto& k : compound.clusters) {
            clusters.push_back(&k);
            owners.push_back(&compound);
        }

    std::vector<double> values(clusters.size(), 0.0);
    parallelFor(clusters.size(), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i)
            values[i] = boundConcentration(spec, *clusters[i], noise);
    });

    ConcentrationBound bounds;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        bounds.perCluster[clusters[i]->id] = values[i];
        auto [it, fresh] = bounds.perCompound.try_emplace(owners[i]->id, values[i]);
        if (!fresh) it->second = std::min(it->second, values[i]);
    }
    return bounds;
}

std::optional<PpmInterval> influenceInterval(const Cluster& cluster, Micromolar bound,
                                             const NoiseEstimate& noise) {
    if (!(bound > 0.0)) return std::nullopt;
    const double apex = clusterUnitApex(cluster, 1e-4);
    const double threshold =
        std::max(noise.sigma / 5.0, kInfluenceFloorRel * bound * apex);
    if (!(threshold > 0.0) || bound * apex < threshold) return std::nullopt;

    const double unitLevel = threshold / bound;  // crossing level on the unit signature
    const Ppm outer = signatureReach(cluster, unitLevel) + 1e-6;

    double fwhmMin = std::numeric_limits<double>::max();
    for (const auto& p : cluster.peaks) fwhmMin = std::min(fwhmMin, std::sqrt(p.widthParam));
    const Ppm coarse = std::max(fwhmMin / 4.0, 1e-7);

    // outermost crossing on each side: coarse scan inward, then bisection
    auto crossing = [&](double direction) -> Ppm {
        Ppm rOut = direction * outer;
        if (signatureAt(cluster, rOut) >= unitLevel) return rOut;
        Ppm r = rOut;
        while (std::abs(r) < outer + coarse) {
            const Ppm next = r - direction * coarse;
            if (signatureAt(cluster, next) >= unitLevel) {
                // bracket [next, r]; bisect to 1e-9 ppm
                Ppm inside = next, outside = r;
                for (int it = 0; it < 60 && std::abs(outside - inside) > 1e-9; ++it) {
                    const Ppm mid = 0.5 * (inside + outside);
                    (signatureAt(cluster, mid) >= unitLevel ? inside : outside) = mid;
                }
                return outside;
            }
            r = next;
            if (direction > 0 ? r < -outer : r > outer) break;
        }
        return 0.0;  // degenerate: collapses to the cluster position
    };

    const Ppm left = crossing(-1.0);
    const Ppm right = crossing(+1.0);
    return PpmInterval{cluster.shiftWindow.lo + left, cluster.shiftWindow.hi + right};
}

std::map<std::string, PpmInterval> influenceAll(const SpectralLibrary& library,
                                                const ConcentrationBound& bounds,
                                                const NoiseEstimate& noise,
                                                const PpmInterval& domain,
                                                unsigned threads) {
    std::vector<const Cluster*> clusters;
    for (const auto& compound : library.compounds)
        for (const auto& k : compound.clusters) clusters.push_back(&k);

    std::vector<std::optional<PpmInterval>> raw(clusters.size());
    parallelFor(clusters.size(), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            auto it = bounds.perCluster.find(clusters[i]->id);
            const double bound = it == bounds.perCluster.end() ? 0.0 : it->second;
            raw[i] = influenceInterval(*clusters[i], bound, noise);
        }
    });

    std::map<std::string, PpmInterval> out;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        if (!raw[i]) continue;
        PpmInterval iv{std::max(raw[i]->lo, domain.lo), std::min(raw[i]->hi, domain.hi)};
        if (!iv.empty()) out[clusters[i]->id] = iv;
    }
    return out;
}

std::vector<Region> partitionRegions(const SpectralLibrary& library,
                                     const std::map<std::string, PpmInterval>& intervals,
                                     const PpmInterval& domain,
                                     const std::vector<PpmInterval>& exclusions) {
    std::set<double> cuts{domain.lo, domain.hi};
    for (const auto& [id, iv] : intervals) {
        if (iv.lo < domain.lo || iv.hi > domain.hi)
            throw std::domain_error("influence interval of '" + id +
                                    "' outside the domain");
        cuts.insert(iv.lo);
        cuts.insert(iv.hi);
    }
    for (const auto& ex : exclusions) {
        if (ex.lo > ex.hi) throw std::invalid_argument("inverted exclusion interval");
        if (ex.lo < domain.hi && ex.hi > domain.lo) {
            cuts.insert(std::max(ex.lo, domain.lo));
            cuts.insert(std::min(ex.hi, domain.hi));
        }
    }

    const std::vector<double> edges(cuts.begin(), cuts.end());
    std::vector<Region> regions;
    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
        const double lo = edges[e], hi = edges[e + 1];
        const double mid = 0.5 * (lo + hi);
        bool excluded = false;
        for (const auto& ex : exclusions)
            if (mid >= ex.lo && mid < ex.hi) {
                excluded = true;
                break;
            }
        if (excluded) continue;

        std::vector<std::string> clusterIds;
        for (const auto& [id, iv] : intervals)
            if (mid >= iv.lo && mid < iv.hi) clusterIds.push_back(id);
        std::sort(clusterIds.begin(), clusterIds.end());

        if (!regions.empty() && regions.back().interval.hi == lo &&
            regions.back().clusterIds == clusterIds) {
            regions.back().interval.hi = hi;  // same membership: extend
            continue;
        }
        Region r;
        r.interval = {lo, hi};
        r.clusterIds = std::move(clusterIds);
        regions.push_back(std::move(r));
    }

    // resolve owning compounds
    std::map<std::string, std::string> ownerOf;
    for (const auto& compound : library.compounds)
        for (const auto& k : compound.clusters) ownerOf[k.id] = compound.id;
    for (auto& r : regions) {
        std::set<std::string> owners;
        for (const auto& id : r.clusterIds) {
            auto it = ownerOf.find(id);
            if (it != ownerOf.end()) owners.insert(it->second);
        }
        r.compoundIds.assign(owners.begin(), owners.end());
    }
    return regions;
}

FactorGraph buildFactorGraph(const std::vector<Region>& regions,
                             const SpectralLibrary& library,
                             const ConcentrationBound& bounds) {
    FactorGraph graph;
    graph.regions = regions;

    for (const auto& compound : library.compounds) {
        Variable v;
        v.kind = Variable::Kind::concentration;
        v.id = compound.id;
        v.lo = 0.0;
        v.hi = bounds.compoundBound(compound.id);
        graph.variableIndex[v.id] = graph.variables.size();
        graph.variables.push_back(std::move(v));
    }
    for (const auto& compound : library.compounds)
        for (const auto& k : compound.clusters) {
            Variable v;
            v.kind = Variable::Kind::shift;
            v.id = k.id;
            v.lo = k.shiftWindow.lo;
            v.hi = k.shiftWindow.hi;
            graph.variableIndex[v.id] = graph.variables.size();
            graph.variables.push_back(std::move(v));
        }

    for (std::size_t r = 0; r < regions.size(); ++r) {
        if (regions[r].background()) continue;
        Factor f;
        f.regionIndex = r;
        std::set<std::size_t> vars;
        for (const auto& id : regions[r].clusterIds) vars.insert(graph.variableIndex.at(id));
        for (const auto& id : regions[r].compoundIds) vars.insert(graph.variableIndex.at(id));
        f.variableIndices.assign(vars.begin(), vars.end());
        graph.factors.push_back(std::move(f));
    }

    graph.factorsOfVariable.assign(graph.variables.size(), {});
    for (std::size_t fi = 0; fi < graph.factors.size(); ++fi)
        for (std::size_t vi : graph.factors[fi].variableIndices)
            graph.factorsOfVariable[vi].push_back(fi);
    return graph;
}

std::vector<std::pair<Index, Index>> regionIndexRanges(const std::vector<Region>& regions,
                                                       const Spectrum& grid) {
    std::vector<std::pair<Index, Index>> ranges;
    ranges.reserve(regions.size());
    for (const auto& r : regions) {
        Index i0 = grid.lowerIndex(r.interval.lo);
        Index i1 = r.interval.hi >= grid.endPpm() - grid.stepPpm * 0.5
                       ? grid.size()
                       : grid.lowerIndex(r.interval.hi);
        ranges.emplace_back(i0, std::max(i0, i1));
    }
    return ranges;
}

std::vector<PpmInterval> exclusionIntervals(const Spectrum& spec) {
    std::vector<PpmInterval> out;
    if (spec.excluded.empty()) return out;
    Index i = 0;
    while (i < spec.size()) {
        if (!spec.excluded[i]) {
            ++i;
            continue;
        }
        Index j = i;
        while (j + 1 < spec.size() && spec.excluded[j + 1]) ++j;
        out.push_back({spec.ppmAt(i), spec.ppmAt(j)});
        i = j + 1;
    }
    return out;
}

} // namespace nmrprof
