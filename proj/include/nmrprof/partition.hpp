#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nmrprof/model.hpp"
#include "nmrprof/preprocess.hpp"
#include "nmrprof/types.hpp"

namespace nmrprof {

/// Spectrum-derived concentration upper bounds.
struct ConcentrationBound {
    std::map<std::string, Micromolar> perCluster;   // cluster id -> bound
    std::map<std::string, Micromolar> perCompound;  // min over the compound's clusters

    Micromolar compoundBound(const std::string& id) const {
        auto it = perCompound.find(id);
        return it == perCompound.end() ? 0.0 : it->second;
    }
};

/// Maximal stretch of the spectrum influenced by exactly one cluster set.
struct Region {
    PpmInterval interval;                  // [lo, hi); the final region closes at hi
    std::vector<std::string> clusterIds;   // sorted
    std::vector<std::string> compoundIds;  // sorted, owners of those clusters

    bool background() const noexcept { return clusterIds.empty(); }
};

struct Variable {
    enum class Kind { concentration, shift };
    Kind kind = Kind::concentration;
    std::string id;  // compound id or cluster id
    double lo = 0.0;
    double hi = 0.0;

    double width() const noexcept { return hi - lo; }
    bool degenerate() const noexcept { return !(hi > lo); }
};

struct Factor {
    std::size_t regionIndex = 0;             // into FactorGraph::regions
    std::vector<std::size_t> variableIndices;  // sorted, unique
};

/// Bipartite factor graph: one factor per non-background region, one
/// concentration variable per compound and one shift variable per cluster
/// that appears in at least one region.
struct FactorGraph {
    std::vector<Region> regions;  // full partition, background included
    std::vector<Variable> variables;
    std::vector<Factor> factors;
    std::vector<std::vector<std::size_t>> factorsOfVariable;  // adjacency
    std::map<std::string, std::size_t> variableIndex;         // id -> index

    std::size_t degree(std::size_t variable) const {
        return factorsOfVariable[variable].size();
    }
};

/// Largest concentration of this cluster not contradicted by the spectrum:
/// max over window shifts of the min over the signature support of
/// (clipped spectrum + noise allowance) / unit signature. The support is
/// the set of points where the unit signature exceeds 1% of its apex.
Micromolar boundConcentration(const Spectrum& spec, const Cluster& cluster,
                              const NoiseEstimate& noise);

/// Bounds for every cluster and compound in the library.
ConcentrationBound boundAll(const Spectrum& spec, const SpectralLibrary& library,
                            const NoiseEstimate& noise, unsigned threads = 0);

/// Smallest interval outside which the cluster, at the given concentration
/// bound and any in-window shift, contributes less than sigma/5 pointwise.
/// Empty optional when the cluster can never rise above that threshold.
std::optional<PpmInterval> influenceInterval(const Cluster& cluster, Micromolar bound,
                                             const NoiseEstimate& noise);

/// Influence intervals for the whole library, clipped to the domain.
std::map<std::string, PpmInterval> influenceAll(const SpectralLibrary& library,
                                                const ConcentrationBound& bounds,
                                                const NoiseEstimate& noise,
                                                const PpmInterval& domain,
                                                unsigned threads = 0);

/// Sweep-line partition of the domain into maximal stretches with constant
/// cluster membership. Excluded stretches are removed; stretches with no
/// clusters become background regions.
std::vector<Region> partitionRegions(const SpectralLibrary& library,
                                     const std::map<std::string, PpmInterval>& intervals,
                                     const PpmInterval& domain,
                                     const std::vector<PpmInterval>& exclusions = {});

FactorGraph buildFactorGraph(const std::vector<Region>& regions,
                             const SpectralLibrary& library,
                             const ConcentrationBound& bounds);

/// Half-open grid index range [first, second) of each region, covering
/// every in-domain grid point exactly once (the final region in a
/// contiguous run also owns the point at its closing boundary).
std::vector<std::pair<Index, Index>> regionIndexRanges(const std::vector<Region>& regions,
                                                       const Spectrum& grid);

/// Exclusion mask rendered as a sorted ppm interval list.
std::vector<PpmInterval> exclusionIntervals(const Spectrum& spec);

} // namespace nmrprof
