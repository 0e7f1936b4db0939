#include "nmrprof/infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nmrprof/parallel.hpp"
#include "nmrprof/rng.hpp"

namespace nmrprof {

namespace {

constexpr std::uint64_t kTagInit = 0xA001;
constexpr std::uint64_t kTagShuffle = 0xA002;
constexpr std::uint64_t kTagResample = 0xA003;
constexpr std::size_t kDensityBins = 512;
constexpr int kStencilHalo = 2;

struct FactorData {
    Index rangeLo = 0, rangeHi = 0;    // region grid range [i0, i1)
    Index windowLo = 0, windowHi = 0;  // range + stencil halo, clamped
    bool fastLoss = false;             // interior, no exclusions, full halo
    std::vector<const Cluster*> clusters;
    std::vector<std::size_t> shiftVar;  // parallel to clusters
    std::vector<std::size_t> concVar;
    std::vector<std::size_t> tableIndex;
};

/// Unit signature sampled on grid lags around the snapped cluster
/// position; factor evaluation renders by sliding this table instead of
/// evaluating Lorentzians per particle.
struct ClusterTable {
    std::vector<double> values;  // u(lag * h) for lag in [lagMin, lagMax]
    std::ptrdiff_t lagMin = 0;
    std::ptrdiff_t snapLo = 0, snapHi = 0;  // admissible snapped grid indices
};

struct InferContext {
    const FactorGraph* graph = nullptr;
    const Spectrum* observed = nullptr;
    const SpectralLibrary* library = nullptr;
    LossConfig lossConfig;
    std::vector<FactorData> factors;
    std::vector<ClusterTable> tables;
    std::vector<std::size_t> tableShiftVar;  // shift variable of each table
    std::vector<std::pair<Index, Index>> regionRanges;  // all regions
    std::vector<char> frozen;
    std::vector<double> frozenValue;
    std::size_t maxWindow = 0;

    const Variable& variable(std::size_t v) const { return graph->variables[v]; }
};

InferContext buildContext(const FactorGraph& graph, const Spectrum& observed,
                          const SpectralLibrary& library, const LossConfig& lossConfig) {
    InferContext ctx;
    ctx.graph = &graph;
    ctx.observed = &observed;
    ctx.library = &library;
    ctx.lossConfig = lossConfig;
    ctx.regionRanges = regionIndexRanges(graph.regions, observed);

    std::map<std::string, std::pair<const Cluster*, const Compound*>> clusterById;
    for (const auto& compound : library.compounds)
        for (const auto& cluster : compound.clusters)
            clusterById[cluster.id] = {&cluster, &compound};

    const Index n = observed.size();
    std::map<std::string, std::size_t> tableOf;
    std::vector<const Cluster*> tableCluster;
    for (const auto& factor : graph.factors) {
        FactorData fd;
        const auto& range = ctx.regionRanges[factor.regionIndex];
        fd.rangeLo = range.first;
        fd.rangeHi = range.second;
        fd.windowLo = range.first >= kStencilHalo ? range.first - kStencilHalo : 0;
        fd.windowHi = std::min<Index>(n, range.second + kStencilHalo);
        fd.fastLoss = range.first >= kStencilHalo && range.second + kStencilHalo <= n &&
                      range.first > 0 && range.second < n && range.second > range.first;
        if (fd.fastLoss && !observed.excluded.empty())
            for (Index i = fd.windowLo; i < fd.windowHi && fd.fastLoss; ++i)
                if (observed.excluded[i]) fd.fastLoss = false;
        for (const auto& clusterId : graph.regions[factor.regionIndex].clusterIds) {
            const auto& [cluster, compound] = clusterById.at(clusterId);
            fd.clusters.push_back(cluster);
            fd.shiftVar.push_back(graph.variableIndex.at(clusterId));
            fd.concVar.push_back(graph.variableIndex.at(compound->id));
            auto [it, fresh] = tableOf.try_emplace(clusterId, tableCluster.size());
            if (fresh) tableCluster.push_back(cluster);
            fd.tableIndex.push_back(it->second);
        }
        ctx.maxWindow = std::max<std::size_t>(ctx.maxWindow, fd.windowHi - fd.windowLo);
        ctx.factors.push_back(std::move(fd));
    }

    // per-cluster lag coverage across every factor it appears in
    ctx.tables.resize(tableCluster.size());
    ctx.tableShiftVar.resize(tableCluster.size());
    std::vector<std::ptrdiff_t> lagLo(tableCluster.size(),
                                      std::numeric_limits<std::ptrdiff_t>::max());
    std::vector<std::ptrdiff_t> lagHi(tableCluster.size(),
                                      std::numeric_limits<std::ptrdiff_t>::min());
    for (std::size_t ti = 0; ti < tableCluster.size(); ++ti) {
        const Cluster* cluster = tableCluster[ti];
        ctx.tableShiftVar[ti] = graph.variableIndex.at(cluster->id);
        auto& table = ctx.tables[ti];
        table.snapLo = static_cast<std::ptrdiff_t>(std::llround(
            (cluster->shiftWindow.lo - observed.startPpm) / observed.stepPpm));
        table.snapHi = static_cast<std::ptrdiff_t>(std::llround(
            (cluster->shiftWindow.hi - observed.startPpm) / observed.stepPpm));
    }
    for (const auto& fd : ctx.factors)
        for (std::size_t c = 0; c < fd.tableIndex.size(); ++c) {
            const std::size_t ti = fd.tableIndex[c];
            lagLo[ti] = std::min(lagLo[ti], static_cast<std::ptrdiff_t>(fd.windowLo) -
                                                ctx.tables[ti].snapHi);
            lagHi[ti] = std::max(lagHi[ti], static_cast<std::ptrdiff_t>(fd.windowHi) -
                                                ctx.tables[ti].snapLo);
        }
    for (std::size_t ti = 0; ti < tableCluster.size(); ++ti) {
        auto& table = ctx.tables[ti];
        table.lagMin = lagLo[ti];
        const auto count = static_cast<std::size_t>(std::max<std::ptrdiff_t>(
            0, lagHi[ti] - lagLo[ti] + 1));
        table.values.resize(count);
        for (std::size_t j = 0; j < count; ++j) {
            const double rel =
                static_cast<double>(table.lagMin + static_cast<std::ptrdiff_t>(j)) *
                observed.stepPpm;
            double u = 0.0;
            for (const auto& p : tableCluster[ti]->peaks) {
                const double d = p.centerOffset - rel;
                u += p.amplitude * p.widthParam / (p.widthParam + 4.0 * d * d);
            }
            table.values[j] = u;
        }
    }

    ctx.frozen.resize(graph.variables.size());
    ctx.frozenValue.resize(graph.variables.size());
    for (std::size_t v = 0; v < graph.variables.size(); ++v) {
        ctx.frozen[v] = graph.variables[v].degenerate() ? 1 : 0;
        ctx.frozenValue[v] = graph.variables[v].lo;
    }
    return ctx;
}

/// Interior-factor loss: full stencil halo available, nothing excluded, no
/// domain-edge half weights. Four independent accumulators so the loop can
/// vectorize.
double lossFastPath(const double* obs, const double* recon, std::size_t count,
                    double gridStep, const LossConfig& cfg) {
    const double g0 = cfg.gammas[0], g1 = cfg.gammas[1];
    const double g2 = cfg.gammas[2], g3 = cfg.gammas[3];
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double fm2 = obs[i - 2] - recon[i - 2];
        const double fm1 = obs[i - 1] - recon[i - 1];
        const double f0 = obs[i] - recon[i];
        const double fp1 = obs[i + 1] - recon[i + 1];
        const double fp2 = obs[i + 2] - recon[i + 2];
        const double d1 = 0.5 * (fp1 - fm1);
        const double d2 = fp1 - 2.0 * f0 + fm1;
        const double d3 = 0.5 * (fp2 - 2.0 * fp1 + 2.0 * fm1 - fm2);
        acc0 += f0 * f0;
        acc1 += d1 * d1;
        acc2 += d2 * d2;
        acc3 += d3 * d3;
    }
    return (g0 * acc0 + g1 * acc1 + g2 * acc2 + g3 * acc3) * gridStep;
}

double weightedMean(const std::vector<double>& x, const std::vector<double>& w) {
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) m += w[i] * x[i];
    return m;
}

double weightedStd(const std::vector<double>& x, const std::vector<double>& w,
                   double mean) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - mean;
        s += w[i] * d * d;
    }
    return std::sqrt(std::max(s, 0.0));
}

double bandwidthFor(const Variable& var, double sampleStd, double neff, double gridStep) {
    double bw = 1.06 * sampleStd * std::pow(std::max(neff, 1.0), -0.2);
    const double floor = var.kind == Variable::Kind::shift
                             ? gridStep
                             : 1e-3 * var.width();
    return std::max(bw, floor);
}

void rebuildBinnedDensity(VariableParticles& out, const Variable& var,
                          const std::vector<double>& values,
                          const std::vector<double>& weights, double bw) {
    const double width = var.width();
    out.binnedLogDensity.assign(kDensityBins, 0.0);
    if (!(width > 0.0)) return;
    const double binW = width / kDensityBins;
    std::vector<double> hist(kDensityBins, 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto b = static_cast<std::size_t>((values[i] - var.lo) / binW);
        if (b >= kDensityBins) b = kDensityBins - 1;
        hist[b] += weights[i];
    }
    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * bw / binW)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double ksum = 0.0;
    for (int j = -radius; j <= radius; ++j) {
        const double u = j * binW / bw;
        kernel[static_cast<std::size_t>(j + radius)] = std::exp(-0.5 * u * u);
        ksum += kernel[static_cast<std::size_t>(j + radius)];
    }
    for (auto& k : kernel) k /= ksum * binW;
    for (std::size_t b = 0; b < kDensityBins; ++b) {
        double d = 0.0;
        for (int j = -radius; j <= radius; ++j) {
            const auto s = static_cast<std::ptrdiff_t>(b) + j;
            if (s < 0 || s >= static_cast<std::ptrdiff_t>(kDensityBins)) continue;
            d += hist[static_cast<std::size_t>(s)] *
                 kernel[static_cast<std::size_t>(j + radius)];
        }
        out.binnedLogDensity[b] = std::log(d + 1e-300);
    }
}

double binnedLogDensityAt(const VariableParticles& p, const Variable& var, double x) {
    if (p.binnedLogDensity.empty() || !(var.width() > 0.0)) return 0.0;
    const double binW = var.width() / kDensityBins;
    auto b = static_cast<std::ptrdiff_t>((x - var.lo) / binW);
    b = std::clamp<std::ptrdiff_t>(b, 0, kDensityBins - 1);
    return p.binnedLogDensity[static_cast<std::size_t>(b)];
}

Profile assignmentToProfile(const InferContext& ctx, const std::vector<double>& assign) {
    Profile profile;
    const auto& vars = ctx.graph->variables;
    for (std::size_t v = 0; v < vars.size(); ++v) {
        if (vars[v].kind == Variable::Kind::concentration)
            profile.concentrations[vars[v].id] = assign[v];
        else
            profile.shifts[vars[v].id] = assign[v];
    }
    return profile;
}

double exactLoss(const InferContext& ctx, const std::vector<double>& assign) {
    return lossTotal(*ctx.observed, assignmentToProfile(ctx, assign), *ctx.library,
                     ctx.graph->regions, ctx.lossConfig);
}

/// One annealed update over a prebuilt context. Optionally reports the
/// joint assignment with the smallest factor-loss sum (elite candidate).
ParticleSet iterateImpl(const ParticleSet& particles, const InferContext& ctx,
                        double temperature, const InferConfig& config,
                        std::vector<double>* eliteCandidate) {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    const auto& graph = *ctx.graph;
    const std::size_t nVars = graph.variables.size();
    if (particles.perVariable.size() != nVars)
        throw std::invalid_argument("particle set does not match the factor graph");
    const std::size_t N = config.particles;
    for (const auto& p : particles.perVariable)
        if (p.values.size() != N)
            throw std::invalid_argument("particle count mismatch");

    const int t = particles.iteration;
    ParticleSet out = particles;

    // sort then shuffle deterministically: the index pairing decorrelates
    // across iterations and is invariant to the incoming particle order
    for (std::size_t v = 0; v < nVars; ++v) {
        if (ctx.frozen[v]) continue;
        std::sort(out.perVariable[v].values.begin(), out.perVariable[v].values.end());
        RngStream rng(config.seed, kTagShuffle, v, static_cast<std::uint64_t>(t));
        rng.shuffle(out.perVariable[v].values);
    }

    // factor evaluation: slide each cluster's signature table to the
    // particle's snapped position and accumulate; log-space loss per factor
    const std::size_t nFactors = ctx.factors.size();
    std::vector<std::vector<double>> factorLoss(nFactors);
    for (auto& fl : factorLoss) fl.assign(N, 0.0);

    const Spectrum& obs = *ctx.observed;
    const double* obsData = obs.intensities.data();
    const std::uint8_t* exclData = obs.excluded.empty() ? nullptr : obs.excluded.data();
    const std::size_t domainN = obs.size();

    // snapped grid index of every table's shift variable, per particle
    const std::size_t nTables = ctx.tables.size();
    std::vector<std::vector<std::ptrdiff_t>> snapped(nTables);
    for (std::size_t ti = 0; ti < nTables; ++ti) {
        snapped[ti].resize(N);
        const auto& values = out.perVariable[ctx.tableShiftVar[ti]].values;
        const auto& table = ctx.tables[ti];
        for (std::size_t n = 0; n < N; ++n) {
            auto m = static_cast<std::ptrdiff_t>(
                std::llround((values[n] - obs.startPpm) / obs.stepPpm));
            snapped[ti][n] = std::clamp(m, table.snapLo, table.snapHi);
        }
    }

    parallelFor(N, config.threads, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> buf(ctx.maxWindow);
        for (std::size_t n = lo; n < hi; ++n) {
            for (std::size_t fi = 0; fi < nFactors; ++fi) {
                const FactorData& fd = ctx.factors[fi];
                const std::size_t window = fd.windowHi - fd.windowLo;
                std::fill(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(window),
                          0.0);
                for (std::size_t c = 0; c < fd.clusters.size(); ++c) {
                    const double conc = out.perVariable[fd.concVar[c]].values[n];
                    if (conc == 0.0) continue;
                    const auto& table = ctx.tables[fd.tableIndex[c]];
                    const double* src =
                        table.values.data() +
                        (static_cast<std::ptrdiff_t>(fd.windowLo) - snapped[fd.tableIndex[c]][n] -
                         table.lagMin);
                    for (std::size_t j = 0; j < window; ++j) buf[j] += conc * src[j];
                }
                if (fd.fastLoss) {
                    factorLoss[fi][n] = lossFastPath(
                        obsData + fd.rangeLo, buf.data() + (fd.rangeLo - fd.windowLo),
                        fd.rangeHi - fd.rangeLo, obs.stepPpm, ctx.lossConfig);
                } else {
                    factorLoss[fi][n] = lossIndexRange(
                        obsData, exclData, domainN,
                        {buf.data(), static_cast<std::ptrdiff_t>(fd.windowLo), window},
                        fd.rangeLo, fd.rangeHi, obs.stepPpm, ctx.lossConfig);
                }
            }
        }
    });

    if (eliteCandidate) {
        std::vector<double> jointLoss(N, 0.0);
        for (std::size_t fi = 0; fi < nFactors; ++fi)
            for (std::size_t n = 0; n < N; ++n) jointLoss[n] += factorLoss[fi][n];
        const std::size_t nStar = static_cast<std::size_t>(
            std::min_element(jointLoss.begin(), jointLoss.end()) - jointLoss.begin());
        eliteCandidate->resize(nVars);
        for (std::size_t v = 0; v < nVars; ++v)
            (*eliteCandidate)[v] =
                ctx.frozen[v] ? ctx.frozenValue[v] : out.perVariable[v].values[nStar];
    }

    // per-variable reweighting and KDE resampling
    std::vector<double> logW(N), weights(N);
    for (std::size_t v = 0; v < nVars; ++v) {
        auto& pv = out.perVariable[v];
        if (ctx.frozen[v]) {
            pv.kdeStd = 0.0;
            pv.bandwidth = 0.0;
            continue;
        }
        const double invT = 1.0 / temperature;
        std::fill(logW.begin(), logW.end(), 0.0);
        for (std::size_t fi : graph.factorsOfVariable[v])
            for (std::size_t n = 0; n < N; ++n) logW[n] -= invT * factorLoss[fi][n];
        if (config.useImportanceWeights)
            for (std::size_t n = 0; n < N; ++n)
                logW[n] -= binnedLogDensityAt(particles.perVariable[v],
                                              graph.variables[v], pv.values[n]);

        const double maxLog = *std::max_element(logW.begin(), logW.end());
        if (!std::isfinite(maxLog))
            throw TemperatureTooLowError(
                "all particle weights underflowed; raise the initial temperature");
        const double minLog = *std::min_element(logW.begin(), logW.end());
        // a flat weight profile means the data say nothing about this
        // variable right now (e.g. the shift of a compound fitted at zero);
        // such variables must not hold up convergence
        pv.uninformative = (maxLog - minLog) < 0.01;
        double sum = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            weights[n] = std::exp(logW[n] - maxLog);
            sum += weights[n];
        }
        double sumSq = 0.0;
        for (auto& w : weights) {
            w /= sum;
            sumSq += w * w;
        }
        const double neff = 1.0 / sumSq;
        const double mean = weightedMean(pv.values, weights);
        const double sstd = weightedStd(pv.values, weights, mean);
        const double bw = bandwidthFor(graph.variables[v], sstd, neff, obs.stepPpm);

        if (config.useImportanceWeights)
            rebuildBinnedDensity(pv, graph.variables[v], pv.values, weights, bw);

        // sample the weighted Gaussian KDE: categorical pick + kernel jitter
        std::vector<double> cdf(N);
        double acc = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            acc += weights[n];
            cdf[n] = acc;
        }
        RngStream rng(config.seed, kTagResample, v, static_cast<std::uint64_t>(t));
        std::vector<double> fresh(N);
        for (std::size_t n = 0; n < N; ++n) {
            const double u = rng.uniform() * acc;
            const auto j = static_cast<std::size_t>(
                std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
            const double x = pv.values[std::min(j, N - 1)] + bw * rng.normal();
            fresh[n] = std::clamp(x, graph.variables[v].lo, graph.variables[v].hi);
        }
        pv.values = std::move(fresh);
        std::fill(pv.weights.begin(), pv.weights.end(), 1.0 / static_cast<double>(N));
        pv.bandwidth = bw;
        pv.kdeStd = sstd;  // posterior sharpness; the bandwidth floor is not evidence
    }

    out.iteration = t + 1;
    return out;
}

/// KDE mode of an equally-weighted sample on a 512-point domain grid with
/// parabolic refinement.
double kdeMode(const std::vector<double>& values, const Variable& var, double gridStep) {
    if (var.degenerate()) return var.lo;
    const std::size_t N = values.size();
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(N);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sstd = std::sqrt(ss / static_cast<double>(N));
    const double bw = bandwidthFor(var, sstd, static_cast<double>(N), gridStep);

    const std::size_t bins = kDensityBins;
    const double binW = var.width() / bins;
    std::vector<double> hist(bins, 0.0);
    for (double v : values) {
        auto b = static_cast<std::size_t>((v - var.lo) / binW);
        if (b >= bins) b = bins - 1;
        hist[b] += 1.0;
    }
    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * bw / binW)));
    std::vector<double> density(bins, 0.0);
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    for (int j = -radius; j <= radius; ++j) {
        const double u = j * binW / bw;
        kernel[static_cast<std::size_t>(j + radius)] = std::exp(-0.5 * u * u);
    }
    for (std::size_t b = 0; b < bins; ++b) {
        if (hist[b] == 0.0) continue;
        for (int j = -radius; j <= radius; ++j) {
            const auto s = static_cast<std::ptrdiff_t>(b) + j;
            if (s < 0 || s >= static_cast<std::ptrdiff_t>(bins)) continue;
            density[static_cast<std::size_t>(s)] +=
                hist[b] * kernel[static_cast<std::size_t>(j + radius)];
        }
    }
    const std::size_t bStar = static_cast<std::size_t>(
        std::max_element(density.begin(), density.end()) - density.begin());
    double x = var.lo + (static_cast<double>(bStar) + 0.5) * binW;
    if (bStar > 0 && bStar + 1 < bins) {
        const double fm = density[bStar - 1], f0 = density[bStar], fp = density[bStar + 1];
        const double curv = fm - 2.0 * f0 + fp;
        if (curv < 0.0) x += 0.5 * binW * (fm - fp) / curv;
    }
    return std::clamp(x, var.lo, var.hi);
}

/// Exact-loss coordinate descent support: keeps the full reconstruction and
/// per-region losses, evaluating single-variable candidates by patching
/// only the affected stretch.
class Polisher {
public:
    Polisher(const InferContext& ctx, std::vector<double> assign)
        : ctx_(ctx), assign_(std::move(assign)) {
        clustersOfVariable();
        rebuild();
    }

    double total() const { return total_; }
    const std::vector<double>& assignment() const { return assign_; }

    void setAssignment(std::vector<double> assign) {
        assign_ = std::move(assign);
        rebuild();
    }

    double evalCandidate(std::size_t v, double x) {
        Patch p;
        if (!makePatch(v, x, p)) return total_;
        return total_ + p.delta;
    }

    void commit(std::size_t v, double x) {
        Patch p;
        if (!makePatch(v, x, p)) {
            assign_[v] = x;
            return;
        }
        std::copy(p.values.begin(), p.values.end(),
                  recon_.intensities.begin() + static_cast<std::ptrdiff_t>(p.windowLo));
        for (std::size_t i = 0; i < p.regions.size(); ++i)
            regionLoss_[p.regions[i]] = p.newLoss[i];
        total_ += p.delta;
        assign_[v] = x;
    }

private:
    struct Patch {
        Index windowLo = 0, windowHi = 0;
        std::vector<double> values;      // patched recon over the window
        std::vector<std::size_t> regions;  // affected region indices
        std::vector<double> newLoss;
        double delta = 0.0;
    };

    struct VarClusters {
        std::vector<const Cluster*> clusters;
        std::vector<std::size_t> shiftVar;  // shift variable of each cluster
        std::vector<std::size_t> concVar;
    };

    void clustersOfVariable() {
        std::map<std::string, std::pair<const Cluster*, const Compound*>> byId;
        for (const auto& compound : ctx_.library->compounds)
            for (const auto& cluster : compound.clusters)
                byId[cluster.id] = {&cluster, &compound};
        varClusters_.resize(ctx_.graph->variables.size());
        for (std::size_t v = 0; v < ctx_.graph->variables.size(); ++v) {
            const auto& var = ctx_.graph->variables[v];
            auto& vc = varClusters_[v];
            if (var.kind == Variable::Kind::shift) {
                const auto& [cluster, compound] = byId.at(var.id);
                vc.clusters.push_back(cluster);
                vc.shiftVar.push_back(v);
                vc.concVar.push_back(ctx_.graph->variableIndex.at(compound->id));
            } else {
                const Compound* compound = ctx_.library->findCompound(var.id);
                for (const auto& cluster : compound->clusters) {
                    vc.clusters.push_back(&cluster);
                    vc.shiftVar.push_back(ctx_.graph->variableIndex.at(cluster.id));
                    vc.concVar.push_back(v);
                }
            }
        }
    }

    double regionLossFrom(const ReconWindow& recon, std::size_t r) const {
        const Spectrum& obs = *ctx_.observed;
        return lossIndexRange(obs.intensities.data(),
                              obs.excluded.empty() ? nullptr : obs.excluded.data(),
                              obs.size(), recon, ctx_.regionRanges[r].first,
                              ctx_.regionRanges[r].second, obs.stepPpm, ctx_.lossConfig);
    }

    /// Contributions beyond this margin around a cluster are treated as
    /// unchanged; at 0.5 ppm a peak tail is ~1e-6 of its apex.
    static constexpr Ppm kMargin = 0.5;

    bool makePatch(std::size_t v, double x, Patch& out) {
        const auto& var = ctx_.graph->variables[v];
        const double old = assign_[v];
        if (x == old) return false;
        const auto& vc = varClusters_[v];

        Ppm lo = std::numeric_limits<double>::max();
        Ppm hi = std::numeric_limits<double>::lowest();
        bool any = false;
        for (std::size_t c = 0; c < vc.clusters.size(); ++c) {
            const double conc = var.kind == Variable::Kind::concentration
                                    ? 1.0
                                    : assign_[vc.concVar[c]];
            if (conc == 0.0 && var.kind == Variable::Kind::shift) continue;
            const double shiftOld =
                var.kind == Variable::Kind::shift ? old : assign_[vc.shiftVar[c]];
            const double shiftNew = var.kind == Variable::Kind::shift ? x : shiftOld;
            for (const auto& p : vc.clusters[c]->peaks) {
                lo = std::min({lo, shiftOld + p.centerOffset - kMargin,
                               shiftNew + p.centerOffset - kMargin});
                hi = std::max({hi, shiftOld + p.centerOffset + kMargin,
                               shiftNew + p.centerOffset + kMargin});
                any = true;
            }
        }
        if (!any) return false;

        const Spectrum& obs = *ctx_.observed;
        const Index span0 = obs.lowerIndex(lo);
        const Index span1 = std::min<Index>(obs.size(), obs.lowerIndex(hi) + 1);

        out.regions.clear();
        Index rLo = span0, rHi = span1;
        for (std::size_t r = 0; r < ctx_.regionRanges.size(); ++r) {
            const auto& range = ctx_.regionRanges[r];
            if (range.second + kStencilHalo <= span0 ||
                range.first >= span1 + kStencilHalo)
                continue;
            out.regions.push_back(r);
            rLo = std::min(rLo, range.first);
            rHi = std::max(rHi, range.second);
        }
        out.windowLo = std::min(span0, rLo) >= kStencilHalo
                           ? std::min(span0, rLo) - kStencilHalo
                           : 0;
        out.windowHi = std::min<Index>(obs.size(), std::max(span1, rHi) + kStencilHalo);

        out.values.assign(
            recon_.intensities.begin() + static_cast<std::ptrdiff_t>(out.windowLo),
            recon_.intensities.begin() + static_cast<std::ptrdiff_t>(out.windowHi));

        // apply the change of this variable's clusters inside [span0, span1)
        double* patch = out.values.data() + (span0 - out.windowLo);
        for (std::size_t c = 0; c < vc.clusters.size(); ++c) {
            if (var.kind == Variable::Kind::concentration) {
                const double shift = assign_[vc.shiftVar[c]];
                accumulateCluster(*vc.clusters[c], shift, x - old, obs.startPpm,
                                  obs.stepPpm, span0, span1, patch);
            } else {
                const double conc = assign_[vc.concVar[c]];
                if (conc == 0.0) continue;
                accumulateCluster(*vc.clusters[c], old, -conc, obs.startPpm, obs.stepPpm,
                                  span0, span1, patch);
                accumulateCluster(*vc.clusters[c], x, conc, obs.startPpm, obs.stepPpm,
                                  span0, span1, patch);
            }
        }

        const ReconWindow window{out.values.data(),
                                 static_cast<std::ptrdiff_t>(out.windowLo),
                                 out.values.size()};
        out.newLoss.clear();
        out.delta = 0.0;
        for (std::size_t r : out.regions) {
            const double nl = regionLossFrom(window, r);
            out.newLoss.push_back(nl);
            out.delta += nl - regionLoss_[r];
        }
        return true;
    }

    const InferContext& ctx_;
    std::vector<double> assign_;
    Spectrum recon_;
    std::vector<double> regionLoss_;
    double total_ = 0.0;
    std::vector<VarClusters> varClusters_;
};

/// Two sweeps of golden-section line search per variable around the
/// current value; only committed when the exact loss improves.
void coordinateDescent(Polisher& polisher, const InferContext& ctx,
                       const std::vector<double>& bandwidths) {
    constexpr double kInv = 0.6180339887498949;
    const std::size_t nVars = ctx.graph->variables.size();
    for (int sweep = 0; sweep < 2; ++sweep) {
        for (std::size_t v = 0; v < nVars; ++v) {
            if (ctx.frozen[v]) continue;
            const auto& var = ctx.graph->variables[v];
            const double cur = polisher.assignment()[v];
            const double radius =
                std::max(0.05 * var.width(), 3.0 * bandwidths[v]);
            double a = std::max(var.lo, cur - radius);
            double b = std::min(var.hi, cur + radius);
            if (!(b > a)) continue;

            double bestX = cur, bestF = polisher.total();
            auto probe = [&](double x) {
                const double f = polisher.evalCandidate(v, x);
                if (f < bestF) {
                    bestF = f;
                    bestX = x;
                }
                return f;
            };
            double x1 = b - kInv * (b - a), x2 = a + kInv * (b - a);
            double f1 = probe(x1), f2 = probe(x2);
            for (int it = 0; it < 40 && (b - a) > 1e-12 + 1e-9 * var.width(); ++it) {
                if (f1 < f2) {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - kInv * (b - a);
                    f1 = probe(x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + kInv * (b - a);
                    f2 = probe(x2);
                }
            }
            if (bestX != cur) polisher.commit(v, bestX);
        }
    }
}

} // namespace

ParticleSet initParticles(const FactorGraph& graph, const InferConfig& config) {
    if (config.particles < 100) throw std::invalid_argument("particle count must be >= 100");
    ParticleSet set;
    set.iteration = 0;
    set.perVariable.resize(graph.variables.size());
    for (std::size_t v = 0; v < graph.variables.size(); ++v) {
        auto& pv = set.perVariable[v];
        const auto& var = graph.variables[v];
        pv.values.resize(config.particles);
        pv.weights.assign(config.particles, 1.0 / static_cast<double>(config.particles));
        if (var.degenerate()) {
            std::fill(pv.values.begin(), pv.values.end(), var.lo);
            continue;
        }
        RngStream rng(config.seed, kTagInit, v);
        for (auto& x : pv.values) x = rng.uniform(var.lo, var.hi);
        if (config.useImportanceWeights)
            pv.binnedLogDensity.assign(kDensityBins, -std::log(var.width()));
        pv.kdeStd = var.width() / std::sqrt(12.0);
    }
    return set;
}

ParticleSet iterate(const ParticleSet& particles, const FactorGraph& graph,
                    const Spectrum& observed, const SpectralLibrary& library,
                    double temperature, const InferConfig& config,
                    const LossConfig& lossConfig) {
    const InferContext ctx = buildContext(graph, observed, library, lossConfig);
    return iterateImpl(particles, ctx, temperature, config, nullptr);
}

Solution runMap(const FactorGraph& graph, const Spectrum& observed,
                const SpectralLibrary& library, const InferConfig& config,
                const AnnealSchedule& schedule, const LossConfig& lossConfig) {
    const InferContext ctx = buildContext(graph, observed, library, lossConfig);
    const std::size_t nVars = graph.variables.size();

    Solution solution;

    std::size_t active = 0;
    for (std::size_t v = 0; v < nVars; ++v)
        if (!ctx.frozen[v]) ++active;

    if (active == 0) {
        std::vector<double> assign(ctx.frozenValue);
        solution.profile = assignmentToProfile(ctx, assign);
        solution.finalLoss = nVars == 0
                                 ? lossTotal(observed, Profile{}, library, graph.regions,
                                             lossConfig)
                                 : exactLoss(ctx, assign);
        solution.converged = true;
        solution.iterations = 0;
        return solution;
    }

    AnnealSchedule anneal = schedule;
    if (!(anneal.T0 > 0.0)) {
        const double zeroLoss = lossTotal(observed, nominalProfile(library), library,
                                          graph.regions, lossConfig);
        anneal.T0 = std::max(zeroLoss, 1e-300) /
                    std::max<std::size_t>(1, graph.factors.size());
    }
    if (!(anneal.Tmin > 0.0)) anneal.Tmin = 1e-6 * anneal.T0;

    ParticleSet particles = initParticles(graph, config);
    std::vector<double> best;
    double bestLoss = std::numeric_limits<double>::infinity();

    int t = 0;
    for (; t < config.maxIterations; ++t) {
        const double T = anneal.temperatureAt(t);
        std::vector<double> candidate;
        particles = iterateImpl(particles, ctx, T, config, &candidate);

        const double candLoss = exactLoss(ctx, candidate);
        if (candLoss < bestLoss) {
            bestLoss = candLoss;
            best = candidate;
        }
        solution.bestLossTrace.push_back(config.elitism ? bestLoss : candLoss);

        bool done = true;
        for (std::size_t v = 0; v < nVars; ++v) {
            if (ctx.frozen[v] || particles.perVariable[v].uninformative) continue;
            if (particles.perVariable[v].kdeStd >=
                config.convergenceTol * graph.variables[v].width()) {
                done = false;
                break;
            }
        }
        if (done) {
            solution.converged = true;
            ++t;
            break;
        }
    }
    solution.iterations = t;

    // modes of the final per-variable distributions, then local polish on
    // the exact loss
    std::vector<double> assign(nVars), bandwidths(nVars, 0.0);
    for (std::size_t v = 0; v < nVars; ++v) {
        if (ctx.frozen[v]) {
            assign[v] = ctx.frozenValue[v];
            continue;
        }
        assign[v] = kdeMode(particles.perVariable[v].values, graph.variables[v],
                            observed.stepPpm);
        bandwidths[v] = particles.perVariable[v].bandwidth;
    }

    Polisher polished(ctx, assign);
    coordinateDescent(polished, ctx, bandwidths);
    std::vector<double> finalAssign = polished.assignment();
    double finalLoss = exactLoss(ctx, finalAssign);

    if (config.elitism && bestLoss < finalLoss) {
        Polisher elitePolished(ctx, best);
        coordinateDescent(elitePolished, ctx, bandwidths);
        const std::vector<double>& eliteAssign = elitePolished.assignment();
        const double eliteLoss = exactLoss(ctx, eliteAssign);
        if (eliteLoss < finalLoss) {
            finalAssign = eliteAssign;
            finalLoss = eliteLoss;
        }
    }

    solution.profile = assignmentToProfile(ctx, finalAssign);
    solution.finalLoss = finalLoss;
    solution.diagnostics.reserve(nVars);
    for (std::size_t v = 0; v < nVars; ++v) {
        VariableDiagnostics d;
        d.id = graph.variables[v].id;
        d.mode = finalAssign[v];
        d.kdeStd = ctx.frozen[v] ? 0.0 : particles.perVariable[v].kdeStd;
        d.bandwidth = bandwidths[v];
        solution.diagnostics.push_back(std::move(d));
    }
    return solution;
}

Solution absoluteQuantify(Solution solution, const SpectralLibrary& library) {
    const auto it = solution.profile.concentrations.find(library.referenceCompound);
    if (it == solution.profile.concentrations.end() || !(it->second > 0.0)) {
        solution.referenceScaled = false;
        return solution;
    }
    const double fitted = it->second;
    const double scale = library.referenceConcentration / fitted;
    for (auto& [id, conc] : solution.profile.concentrations) conc *= scale;
    solution.intensityScale = fitted / library.referenceConcentration;
    solution.referenceScaled = true;
    return solution;
}

} // namespace nmrprof
