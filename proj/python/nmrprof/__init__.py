"""Automated profiling of 1D NMR spectra.

Thin python surface over the C++ core: preprocessing (phasing, baseline,
referencing), spectrum synthesis with ground truth, and MAP deconvolution
against a compound library.
"""

from ._core import (  # noqa: F401
    AccuracyReport,
    Cluster,
    ComplexSpectrum,
    Compound,
    CompoundMixture,
    DetectionThresholds,
    Fid,
    GridSpec,
    GroundTruth,
    MixtureSpec,
    NoiseEstimate,
    PeakShape,
    PhaseParams,
    PpmInterval,
    Profile,
    ProfileRun,
    Solution,
    SpectralLibrary,
    Spectrum,
    ValidationError,
    apply_phase,
    autophase,
    correct_baseline,
    default_config_json,
    default_grid,
    demo_library_15,
    demo_library_csf48,
    demo_mixture_spec,
    detect_baseline,
    detection_thresholds,
    distort_phase,
    eval_peak,
    exclude_solvent,
    generate_spectrum,
    load_library,
    nominal_profile,
    profile_spectrum,
    read_spectrum_csv,
    reference_shift,
    render_compound,
    render_mixture,
    sample_profile,
    save_library,
    score_profiles,
    smooth_gaussian,
    smooth_savitzky_golay,
    solution_to_json,
    validate_library,
    write_spectrum_csv,
    zero_fill_transform,
)

__version__ = "0.1.0"
