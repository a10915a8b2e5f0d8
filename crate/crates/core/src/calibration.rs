//! Fit of the absolute noise scale to a reference sensitivity.
//!
//! Only ratios between probes are predicted by the model. The absolute
//! angle-noise floor is set by bisecting on `noise_scale` until a simulated
//! coherent-probe run reproduces a measured sensitivity.
//!
//! A single 200 s run estimates the tone amplitude to about 4%, so the
//! simulated sensitivity is taken from a spectrum averaged over several
//! realizations. The seeds are fixed, so every bisection step sees the same
//! noise.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::faraday::RotationModel;
use crate::polarimeter::{measure_sensitivity_averaged, AcquisitionConfig, FieldDrive, NoiseBudget};

pub const CALIBRATION_TOLERANCE: f64 = 0.005;
pub const MAX_ITERATIONS: usize = 60;
pub const DEFAULT_REALIZATIONS: u32 = 8;

/// Simulated operating point: applied field, rotation curve, analyzer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub drive: FieldDrive,
    pub rotation: RotationModel,
    pub acquisition: AcquisitionConfig,
    /// Runs whose spectra are averaged per sensitivity estimate.
    pub realizations: u32,
}

impl OperatingPoint {
    pub fn new(drive: FieldDrive, rotation: RotationModel, acquisition: AcquisitionConfig) -> Self {
        Self { drive, rotation, acquisition, realizations: DEFAULT_REALIZATIONS }
    }

    /// Sensitivity this operating point reports for the given noise budget.
    pub fn sensitivity(&self, budget: &NoiseBudget) -> Result<f64> {
        measure_sensitivity_averaged(&self.drive, &self.rotation, budget, &self.acquisition, self.realizations)
            .map(|r| r.delta_b_sens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub noise_scale: f64,
    /// Simulated coherent-probe sensitivity at `noise_scale`.
    pub achieved_sensitivity: f64,
    pub target_sensitivity: f64,
    pub iterations: usize,
}

/// Noise scale that gives `delta_b_pcs` when the tone is measured without
/// estimation error: `delta_b = sqrt(2) * noise_scale / |dphi/dB|` at the bias.
pub fn analytic_noise_scale(delta_b_pcs: f64, op: &OperatingPoint) -> f64 {
    delta_b_pcs * op.rotation.local_slope(op.drive.b_dc_pt).abs() / std::f64::consts::SQRT_2
}

/// Find the `noise_scale` whose simulated coherent-probe sensitivity is
/// within 0.5% of `delta_b_pcs`.
///
/// The sensitivity is close to proportional to the noise scale, so the search
/// first tries proportional corrections of the analytic guess. If those do not
/// land inside the tolerance it brackets the target and bisects geometrically.
pub fn calibrate(delta_b_pcs: f64, op: &OperatingPoint) -> Result<Calibration> {
    ensure_finite("reference sensitivity", delta_b_pcs)?;
    if delta_b_pcs <= 0.0 {
        return Err(Error::Domain(format!("reference sensitivity must be positive, got {delta_b_pcs}")));
    }
    op.rotation.validate()?;
    if op.rotation.local_slope(op.drive.b_dc_pt) == 0.0 {
        return Err(Error::Calibration("rotation slope at the operating point is zero".into()));
    }
    let mut iterations = 0;
    let mut simulate = |scale: f64| -> Result<f64> {
        iterations += 1;
        if iterations > MAX_ITERATIONS {
            return Err(Error::Calibration(format!("no convergence within {MAX_ITERATIONS} iterations")));
        }
        op.sensitivity(&NoiseBudget::pcs(scale))
    };
    let converged = |val: f64| ((val - delta_b_pcs) / delta_b_pcs).abs() < CALIBRATION_TOLERANCE;

    // (scale, sensitivity) pairs either side of the target.
    let mut below: Option<(f64, f64)> = None;
    let mut above: Option<(f64, f64)> = None;
    let mut x = analytic_noise_scale(delta_b_pcs, op);
    for _ in 0..2 {
        let val = simulate(x)?;
        if converged(val) {
            return Ok(done(x, val, delta_b_pcs, iterations));
        }
        if val < delta_b_pcs {
            below = Some((x, val));
        } else {
            above = Some((x, val));
        }
        x *= delta_b_pcs / val;
    }

    let (mut lo, mut hi) = match (below, above) {
        (Some(b), Some(a)) => (b.0, a.0),
        (Some((s, _)), None) => {
            let mut hi = s * 1.05;
            while simulate(hi)? < delta_b_pcs {
                hi *= 2.0;
            }
            (s, hi)
        }
        (None, Some((s, _))) => {
            let mut lo = s / 1.05;
            while simulate(lo)? > delta_b_pcs {
                lo /= 2.0;
            }
            (lo, s)
        }
        (None, None) => unreachable!("two evaluations were recorded"),
    };
    loop {
        let mid = (lo * hi).sqrt();
        let val = simulate(mid)?;
        if converged(val) {
            return Ok(done(mid, val, delta_b_pcs, iterations));
        }
        if val < delta_b_pcs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

fn done(noise_scale: f64, achieved: f64, target: f64, iterations: usize) -> Calibration {
    Calibration { noise_scale, achieved_sensitivity: achieved, target_sensitivity: target, iterations }
}
