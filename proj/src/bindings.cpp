#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nmrprof/pipeline.hpp"

namespace py = pybind11;
using namespace nmrprof;

namespace {

py::array_t<double> toArray(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<double> fromArray(const py::array_t<double, py::array::c_style>& a) {
    return {a.data(), a.data() + a.size()};
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Automated 1D NMR spectral profiling: preprocessing, "
              "region-factored MAP deconvolution, and synthetic benchmarks";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    py::class_<PpmInterval>(m, "PpmInterval")
        .def(py::init<>())
        .def(py::init([](double lo, double hi) { return PpmInterval{lo, hi}; }))
        .def_readwrite("lo", &PpmInterval::lo)
        .def_readwrite("hi", &PpmInterval::hi)
        .def("__repr__", [](const PpmInterval& iv) {
            return "PpmInterval(" + std::to_string(iv.lo) + ", " + std::to_string(iv.hi) + ")";
        });

    py::class_<Spectrum>(m, "Spectrum")
        .def(py::init([](double start, double step,
                         const py::array_t<double, py::array::c_style>& values) {
                 return Spectrum(start, step, fromArray(values));
             }),
             py::arg("start_ppm"), py::arg("step_ppm"), py::arg("intensities"))
        .def_readwrite("start_ppm", &Spectrum::startPpm)
        .def_readwrite("step_ppm", &Spectrum::stepPpm)
        .def_property_readonly("intensities",
                               [](const Spectrum& s) { return toArray(s.intensities); })
        .def_property_readonly("ppm",
                               [](const Spectrum& s) {
                                   std::vector<double> axis(s.size());
                                   for (Index i = 0; i < s.size(); ++i) axis[i] = s.ppmAt(i);
                                   return toArray(axis);
                               })
        .def("__len__", &Spectrum::size);

    py::class_<ComplexSpectrum>(m, "ComplexSpectrum")
        .def_readonly("start_ppm", &ComplexSpectrum::startPpm)
        .def_readonly("step_ppm", &ComplexSpectrum::stepPpm)
        .def_property_readonly("re",
                               [](const ComplexSpectrum& s) { return toArray(s.re); })
        .def_property_readonly("im",
                               [](const ComplexSpectrum& s) { return toArray(s.im); })
        .def("real_channel", &ComplexSpectrum::realChannel)
        .def("__len__", &ComplexSpectrum::size);

    py::class_<Fid>(m, "Fid")
        .def(py::init([](const py::array_t<double, py::array::c_style>& re,
                         const py::array_t<double, py::array::c_style>& im, double dwell,
                         double freqMHz, double sweepHz) {
                 Fid f;
                 f.re = fromArray(re);
                 f.im = fromArray(im);
                 f.dwellTime = dwell;
                 f.spectrometerFreq = freqMHz;
                 f.sweepWidth = sweepHz;
                 return f;
             }),
             py::arg("re"), py::arg("im"), py::arg("dwell_time_s"),
             py::arg("spectrometer_freq_mhz"), py::arg("sweep_width_hz"))
        .def("__len__", &Fid::size);

    py::class_<PeakShape>(m, "PeakShape")
        .def(py::init([](double amp, double offset, double width) {
                 return PeakShape{amp, offset, width};
             }),
             py::arg("amplitude"), py::arg("center_offset"), py::arg("width_param"))
        .def_readwrite("amplitude", &PeakShape::amplitude)
        .def_readwrite("center_offset", &PeakShape::centerOffset)
        .def_readwrite("width_param", &PeakShape::widthParam);

    py::class_<Cluster>(m, "Cluster")
        .def(py::init<>())
        .def_readwrite("id", &Cluster::id)
        .def_readwrite("peaks", &Cluster::peaks)
        .def_readwrite("nominal_center", &Cluster::nominalCenter)
        .def_readwrite("shift_window", &Cluster::shiftWindow);

    py::class_<Compound>(m, "Compound")
        .def(py::init<>())
        .def_readwrite("id", &Compound::id)
        .def_readwrite("name", &Compound::name)
        .def_readwrite("clusters", &Compound::clusters)
        .def_readwrite("detectability", &Compound::detectability);

    py::class_<SpectralLibrary>(m, "SpectralLibrary")
        .def(py::init<>())
        .def_readwrite("biofluid", &SpectralLibrary::biofluidTag)
        .def_readwrite("compounds", &SpectralLibrary::compounds)
        .def_readwrite("reference_compound", &SpectralLibrary::referenceCompound)
        .def_readwrite("reference_concentration_um",
                       &SpectralLibrary::referenceConcentration)
        .def("cluster_count", &SpectralLibrary::clusterCount)
        .def("peak_count", &SpectralLibrary::peakCount)
        .def("__len__", [](const SpectralLibrary& l) { return l.compounds.size(); });

    py::class_<Profile>(m, "Profile")
        .def(py::init<>())
        .def_readwrite("concentrations", &Profile::concentrations)
        .def_readwrite("shifts", &Profile::shifts)
        .def_readwrite("detected", &Profile::detected);

    py::class_<GridSpec>(m, "GridSpec")
        .def(py::init([](double start, double step, std::size_t points) {
                 return GridSpec{start, step, points};
             }),
             py::arg("start_ppm"), py::arg("step_ppm"), py::arg("points"))
        .def_readwrite("start_ppm", &GridSpec::startPpm)
        .def_readwrite("step_ppm", &GridSpec::stepPpm)
        .def_readwrite("points", &GridSpec::points);

    py::class_<NoiseEstimate>(m, "NoiseEstimate")
        .def(py::init<>())
        .def_readwrite("sigma", &NoiseEstimate::sigma)
        .def_property_readonly("baseline_fraction", [](const NoiseEstimate& n) {
            if (n.baselineMask.empty()) return 0.0;
            std::size_t c = 0;
            for (auto m : n.baselineMask) c += m ? 1 : 0;
            return static_cast<double>(c) / static_cast<double>(n.baselineMask.size());
        });

    py::class_<PhaseParams>(m, "PhaseParams")
        .def(py::init([](double p0, double p1) { return PhaseParams{p0, p1}; }),
             py::arg("phi0") = 0.0, py::arg("phi1") = 0.0)
        .def_readwrite("phi0", &PhaseParams::phi0)
        .def_readwrite("phi1", &PhaseParams::phi1);

    py::class_<CompoundMixture>(m, "CompoundMixture")
        .def(py::init([](double p, double lo, double hi) {
                 return CompoundMixture{p, lo, hi};
             }),
             py::arg("presence_probability"), py::arg("concentration_lo"),
             py::arg("concentration_hi"))
        .def_readwrite("presence_probability", &CompoundMixture::presenceProbability)
        .def_readwrite("concentration_lo", &CompoundMixture::concentrationLo)
        .def_readwrite("concentration_hi", &CompoundMixture::concentrationHi);

    py::class_<MixtureSpec>(m, "MixtureSpec")
        .def(py::init<>())
        .def_readwrite("per_compound", &MixtureSpec::perCompound)
        .def_readwrite("noise_sigma", &MixtureSpec::noiseSigma)
        .def_readwrite("seed", &MixtureSpec::seed);

    py::class_<GroundTruth>(m, "GroundTruth")
        .def(py::init<>())
        .def_readwrite("profile", &GroundTruth::profile)
        .def_readwrite("noise_sigma", &GroundTruth::noiseSigma)
        .def_readwrite("seed", &GroundTruth::seed);

    py::class_<DetectionThresholds>(m, "DetectionThresholds")
        .def(py::init<>())
        .def_readwrite("per_compound", &DetectionThresholds::perCompound)
        .def_readwrite("noise_sigma", &DetectionThresholds::noiseSigma)
        .def_readwrite("scaling_constant", &DetectionThresholds::scalingConstant);

    py::class_<AccuracyReport>(m, "AccuracyReport")
        .def_readonly("identification_accuracy", &AccuracyReport::identificationAccuracy)
        .def_readonly("quantification_error", &AccuracyReport::quantificationError)
        .def_readonly("quantification_accuracy", &AccuracyReport::quantificationAccuracy)
        .def_readonly("quantification_defined", &AccuracyReport::quantificationDefined)
        .def_readonly("tp", &AccuracyReport::tp)
        .def_readonly("tn", &AccuracyReport::tn)
        .def_readonly("fp", &AccuracyReport::fp)
        .def_readonly("fn", &AccuracyReport::fn);

    py::class_<Solution>(m, "Solution")
        .def_readonly("profile", &Solution::profile)
        .def_readonly("final_loss", &Solution::finalLoss)
        .def_readonly("best_loss_trace", &Solution::bestLossTrace)
        .def_readonly("converged", &Solution::converged)
        .def_readonly("iterations", &Solution::iterations)
        .def_readonly("thresholds", &Solution::thresholds)
        .def_readonly("reference_scaled", &Solution::referenceScaled)
        .def_readonly("intensity_scale", &Solution::intensityScale);

    py::class_<ProfileRun>(m, "ProfileRun")
        .def_readonly("solution", &ProfileRun::solution)
        .def_property_readonly("spectrum",
                               [](const ProfileRun& r) { return r.preprocessed.spectrum; })
        .def_property_readonly("noise_sigma",
                               [](const ProfileRun& r) { return r.preprocessed.noise.sigma; })
        .def_property_readonly("region_count",
                               [](const ProfileRun& r) { return r.regions.size(); });

    // library + io
    m.def("load_library", &loadLibrary, py::arg("path"));
    m.def("save_library", &saveLibrary, py::arg("library"), py::arg("path"));
    m.def("validate_library", &validateLibrary, py::arg("library"));
    m.def("demo_library_15", &demoLibrary15);
    m.def("demo_library_csf48", &demoLibraryCsf48);
    m.def("read_spectrum_csv", &readSpectrumCsv, py::arg("path"));
    m.def("write_spectrum_csv", &writeSpectrumCsv, py::arg("spectrum"), py::arg("path"));
    m.def("default_grid", &defaultGrid);

    // forward model
    m.def(
        "eval_peak",
        [](double y, const PeakShape& peak, double shift) {
            return evalPeak(y, peak, shift);
        },
        py::arg("y"), py::arg("peak"), py::arg("cluster_shift") = 0.0);
    m.def("render_compound", &renderCompound, py::arg("compound"), py::arg("concentration"),
          py::arg("shifts"), py::arg("grid"));
    m.def("render_mixture", &renderMixture, py::arg("library"), py::arg("profile"),
          py::arg("grid"));
    m.def("nominal_profile", &nominalProfile, py::arg("library"),
          py::arg("concentrations") = std::map<std::string, double>{});

    // preprocessing
    m.def("zero_fill_transform", &zeroFillTransform, py::arg("fid"),
          py::arg("fill_factor") = 2);
    m.def("apply_phase", &applyPhase, py::arg("spectrum"), py::arg("params"));
    m.def("distort_phase", &distortPhase, py::arg("spectrum"), py::arg("params"));
    m.def("autophase", &autophase, py::arg("spectrum"), py::arg("noise"));
    m.def("detect_baseline", &detectBaseline, py::arg("spectrum"));
    m.def(
        "correct_baseline",
        [](const Spectrum& s, const NoiseEstimate& n, const std::string& method,
           double lambda) {
            const auto m2 = method == "hermite" ? BaselineMethod::hermite
                                                : BaselineMethod::whittaker;
            return correctBaseline(s, n, m2, lambda).first;
        },
        py::arg("spectrum"), py::arg("noise"), py::arg("method") = "whittaker",
        py::arg("smoothing_lambda") = 1e7);
    m.def("reference_shift", &referenceShift, py::arg("spectrum"), py::arg("window"),
          py::arg("noise"));
    m.def("exclude_solvent", &excludeSolvent, py::arg("spectrum"), py::arg("region"));
    m.def(
        "smooth_gaussian",
        [](const Spectrum& s, double sigmaPpm) {
            SmoothingFilter f;
            f.kind = SmoothingFilter::Kind::gaussian;
            f.sigmaPpm = sigmaPpm;
            return smooth(s, f);
        },
        py::arg("spectrum"), py::arg("sigma_ppm"));
    m.def(
        "smooth_savitzky_golay",
        [](const Spectrum& s, int window, int order) {
            SmoothingFilter f;
            f.kind = SmoothingFilter::Kind::savitzky_golay;
            f.window = window;
            f.order = order;
            return smooth(s, f);
        },
        py::arg("spectrum"), py::arg("window"), py::arg("order"));

    // synthetic mixtures
    m.def("demo_mixture_spec", &demoMixtureSpec, py::arg("library"), py::arg("seed"),
          py::arg("presence_probability") = 0.7, py::arg("concentration_lo") = 30.0,
          py::arg("concentration_hi") = 300.0, py::arg("noise_sigma") = -1.0);
    m.def("sample_profile", &sampleProfile, py::arg("library"), py::arg("spec"));
    m.def("generate_spectrum", &generateSpectrum, py::arg("library"), py::arg("truth"),
          py::arg("grid"));

    // metrics
    m.def("detection_thresholds", &detectionThresholds, py::arg("noise"),
          py::arg("library"), py::arg("grid"), py::arg("intensity_scale") = 1.0,
          py::arg("k") = 5.0);
    m.def("score_profiles", &scoreProfiles, py::arg("truth"), py::arg("estimate"),
          py::arg("thresholds"), py::arg("library"));

    // pipeline
    m.def(
        "profile_spectrum",
        [](const SpectralLibrary& library, const Spectrum& raw,
           const std::string& configJson) {
            RunOptions options;
            if (!configJson.empty())
                options = runOptionsFromJson(configJson, "<config>");
            return profileSpectrum(library, raw, options);
        },
        py::arg("library"), py::arg("spectrum"), py::arg("config_json") = std::string{},
        py::call_guard<py::gil_scoped_release>());
    m.def("default_config_json", [] { return runOptionsToJson(RunOptions{}); });
    m.def("solution_to_json", &solutionToJson, py::arg("solution"), py::arg("library"));
}
