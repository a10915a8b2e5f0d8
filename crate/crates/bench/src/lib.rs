//! Fixtures shared by the benchmarks.

use qmagsim_core::{AcquisitionConfig, FieldDrive, NoiseBudget, RotationModel};

/// Coherent probe at the -400 MHz operating point, `duration_s` of data.
pub fn operating_point(duration_s: f64) -> (FieldDrive, RotationModel, NoiseBudget, AcquisitionConfig) {
    (
        FieldDrive::default(),
        RotationModel::new(-0.038, 3000.0).expect("valid rotation"),
        NoiseBudget::pcs(0.76),
        AcquisitionConfig { duration_s, ..AcquisitionConfig::fft_analyzer() },
    )
}
