//! Simulation of a Faraday-rotation Rb-87 magnetometer probed with
//! polarization-squeezed light.
//!
//! The chain runs from Stokes-noise bookkeeping ([`stokes`]) through the
//! lossy vapor cell ([`atom`]) and the field-to-angle response ([`faraday`])
//! to a synthesized polarimeter record and its spectral analysis
//! ([`polarimeter`]). [`calibration`] fits the one absolute scale the model
//! cannot predict.

pub mod atom;
pub mod calibration;
pub mod error;
pub mod export;
pub mod faraday;
pub mod polarimeter;
pub mod stokes;

pub use atom::{
    doppler_fwhm, effective_variance_with_phase_noise, optical_depth, propagate_variance_through_loss,
    squeezing_after_cell, transmission, vapor_density, AbsorptionProfile, AtomModel, CellCondition, ProbeConfig,
    SqueezingBudget, Transition,
};
pub use calibration::{calibrate, Calibration, OperatingPoint};
pub use error::{Error, Result};
pub use faraday::{angle_variance_from_field_noise, rotation_angle, Dataset, RotationModel, SlopeKey, SlopeTable};
pub use polarimeter::{
    extract_snr, measure_sensitivity, measure_sensitivity_averaged, sensitivity, synthesize_timeseries, welch_psd,
    zero_span_trace, AcquisitionConfig, AmplitudeSpectrum, FieldDrive, NoiseBudget, ProbeKind, SensitivityResult,
    ZeroSpanTrace,
};
pub use stokes::{
    noise_ellipsoid_sigma, output_s2_variance, polarimeter_s2, rotate_about_s3, squeezing_db_to_variance,
    variance_to_db, NoiseVariances, PolarizationState, StokesVector,
};
