//! Rubidium-87 D1 vapor model: number density, Doppler-shaped optical depth,
//! transmission, and how loss and lock phase jitter degrade squeezing.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::stokes::{squeezing_db_to_variance, variance_to_db};

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const RB87_MASS_U: f64 = 86.909_180_527;
/// D1 line centre, Hz.
pub const D1_FREQUENCY_HZ: f64 = 377.107_463_380e12;
pub const GROUND_SPLITTING_MHZ: f64 = 6_834.682_610_904;
pub const EXCITED_SPLITTING_MHZ: f64 = 814.5;

pub const MIN_TEMPERATURE_K: f64 = 273.0;
pub const MAX_TEMPERATURE_K: f64 = 400.0;
pub const MAX_DETUNING_MHZ: f64 = 5_000.0;
pub const DEFAULT_CELL_LENGTH_CM: f64 = 7.5;

/// Measured (temperature K, density cm^-3) points the density law is fit to.
pub const DENSITY_ANCHORS: [(f64, f64); 3] = [(313.15, 5.8e10), (323.15, 1.5e11), (333.15, 3.4e11)];

/// 40 degC, the operating temperature all calibrations refer to.
pub const REFERENCE_TEMPERATURE_K: f64 = 313.15;

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    #[serde(rename = "Fg1-Fe1")]
    Fg1Fe1,
    #[serde(rename = "Fg1-Fe2")]
    Fg1Fe2,
    #[serde(rename = "Fg2-Fe1")]
    Fg2Fe1,
    #[serde(rename = "Fg2-Fe2")]
    Fg2Fe2,
}

impl Transition {
    pub const ALL: [Transition; 4] = [Transition::Fg2Fe1, Transition::Fg2Fe2, Transition::Fg1Fe2, Transition::Fg1Fe1];

    /// Optical frequency of this transition relative to Fg=2 -> Fe=1, in MHz.
    pub fn offset_from_reference_mhz(self) -> f64 {
        match self {
            Transition::Fg2Fe1 => 0.0,
            Transition::Fg2Fe2 => EXCITED_SPLITTING_MHZ,
            Transition::Fg1Fe1 => GROUND_SPLITTING_MHZ,
            Transition::Fg1Fe2 => GROUND_SPLITTING_MHZ + EXCITED_SPLITTING_MHZ,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Transition::Fg1Fe1 => "Fg1-Fe1",
            Transition::Fg1Fe2 => "Fg1-Fe2",
            Transition::Fg2Fe1 => "Fg2-Fe1",
            Transition::Fg2Fe2 => "Fg2-Fe2",
        }
    }

    pub fn ground_level(self) -> u8 {
        match self {
            Transition::Fg1Fe1 | Transition::Fg1Fe2 => 1,
            Transition::Fg2Fe1 | Transition::Fg2Fe2 => 2,
        }
    }
}

impl std::str::FromStr for Transition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Transition::ALL
            .into_iter()
            .find(|t| t.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown transition '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CellFields", into = "CellFields")]
pub struct CellCondition {
    temperature_k: f64,
    length_cm: f64,
    density_cm3: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellFields {
    temperature_k: f64,
    #[serde(default = "default_length")]
    length_cm: f64,
}

fn default_length() -> f64 {
    DEFAULT_CELL_LENGTH_CM
}

impl TryFrom<CellFields> for CellCondition {
    type Error = Error;

    fn try_from(f: CellFields) -> Result<Self> {
        CellCondition::new(f.temperature_k, f.length_cm)
    }
}

impl From<CellCondition> for CellFields {
    fn from(c: CellCondition) -> Self {
        CellFields { temperature_k: c.temperature_k, length_cm: c.length_cm }
    }
}

impl CellCondition {
    pub fn new(temperature_k: f64, length_cm: f64) -> Result<Self> {
        ensure_finite("cell length", length_cm)?;
        if length_cm <= 0.0 {
            return Err(Error::Domain(format!("cell length must be positive, got {length_cm}")));
        }
        let density_cm3 = vapor_density(temperature_k)?;
        Ok(Self { temperature_k, length_cm, density_cm3 })
    }

    /// The standard 7.5 cm cell at `temperature_k`.
    pub fn at_temperature(temperature_k: f64) -> Result<Self> {
        Self::new(temperature_k, DEFAULT_CELL_LENGTH_CM)
    }

    pub fn at_celsius(celsius: f64) -> Result<Self> {
        Self::at_temperature(celsius + 273.15)
    }

    pub fn temperature_k(&self) -> f64 {
        self.temperature_k
    }

    pub fn length_cm(&self) -> f64 {
        self.length_cm
    }

    pub fn density_cm3(&self) -> f64 {
        self.density_cm3
    }
}

impl Default for CellCondition {
    fn default() -> Self {
        Self::at_temperature(REFERENCE_TEMPERATURE_K).expect("reference temperature is in range")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub transition: Transition,
    /// Relative to the selected transition.
    pub detuning_mhz: f64,
    #[serde(default = "ProbeConfig::default_power")]
    pub power_mw: f64,
    #[serde(default = "ProbeConfig::default_beam")]
    pub beam_diameter_mm: f64,
}

impl ProbeConfig {
    fn default_power() -> f64 {
        1.0
    }

    fn default_beam() -> f64 {
        3.0
    }

    pub fn new(transition: Transition, detuning_mhz: f64) -> Result<Self> {
        let p =
            Self { transition, detuning_mhz, power_mw: Self::default_power(), beam_diameter_mm: Self::default_beam() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("detuning", self.detuning_mhz)?;
        if self.detuning_mhz.abs() > MAX_DETUNING_MHZ {
            return Err(Error::OutOfRange(format!(
                "|detuning| must not exceed {MAX_DETUNING_MHZ} MHz, got {}",
                self.detuning_mhz
            )));
        }
        if !(self.power_mw > 0.0) || !self.power_mw.is_finite() {
            return Err(Error::Domain(format!("power must be positive, got {}", self.power_mw)));
        }
        if !(self.beam_diameter_mm > 0.0) || !self.beam_diameter_mm.is_finite() {
            return Err(Error::Domain(format!("beam diameter must be positive, got {}", self.beam_diameter_mm)));
        }
        Ok(())
    }

    /// Detuning expressed relative to the Fg=2 -> Fe=1 line.
    pub fn detuning_from_reference_mhz(&self) -> f64 {
        self.detuning_mhz + self.transition.offset_from_reference_mhz()
    }
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            transition: Transition::Fg2Fe1,
            detuning_mhz: -400.0,
            power_mw: Self::default_power(),
            beam_diameter_mm: Self::default_beam(),
        }
    }
}

/// Squeezed-vacuum levels and the residual phase jitter of the lock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezingBudget {
    pub svs_level_db: f64,
    pub anti_level_db: f64,
    pub lock_phase_rms: f64,
}

impl SqueezingBudget {
    pub fn new(svs_level_db: f64, anti_level_db: f64, lock_phase_rms: f64) -> Result<Self> {
        let b = Self { svs_level_db, anti_level_db, lock_phase_rms };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("svs level", self.svs_level_db)?;
        ensure_finite("anti-squeezing level", self.anti_level_db)?;
        ensure_finite("lock phase rms", self.lock_phase_rms)?;
        if !(self.svs_level_db < 0.0 && self.anti_level_db > 0.0) {
            return Err(Error::Domain(format!(
                "need svs < 0 < anti, got ({}, {}) dB",
                self.svs_level_db, self.anti_level_db
            )));
        }
        if self.svs_level_db + self.anti_level_db < -1e-6 {
            return Err(Error::Domain("squeezing pair violates the uncertainty bound".into()));
        }
        if self.lock_phase_rms < 0.0 {
            return Err(Error::Domain("lock phase rms must be non-negative".into()));
        }
        Ok(())
    }

    /// Budget whose lock jitter is chosen so the locked level equals `target_db`.
    pub fn with_target(svs_level_db: f64, anti_level_db: f64, target_db: f64) -> Result<Self> {
        let theta = lock_phase_rms_for_target(svs_level_db, anti_level_db, target_db)?;
        Self::new(svs_level_db, anti_level_db, theta)
    }

    pub fn pss_variance(&self) -> Result<f64> {
        effective_variance_with_phase_noise(
            squeezing_db_to_variance(self.svs_level_db)?,
            squeezing_db_to_variance(self.anti_level_db)?,
            self.lock_phase_rms,
        )
    }

    pub fn pss_level_db(&self) -> Result<f64> {
        variance_to_db(self.pss_variance()?)
    }
}

impl Default for SqueezingBudget {
    /// -4.0 / +7.0 dB squeezed vacuum locked to a -3.7 dB polarization-squeezed probe.
    fn default() -> Self {
        Self::with_target(-4.0, 7.0, -3.7).expect("default budget is consistent")
    }
}

fn density_fit() -> (f64, f64) {
    static FIT: OnceLock<(f64, f64)> = OnceLock::new();
    *FIT.get_or_init(|| {
        // Ordinary least squares of log10(n) = a - b * x with x = 1/T.
        let k = DENSITY_ANCHORS.len() as f64;
        let xs: Vec<f64> = DENSITY_ANCHORS.iter().map(|(t, _)| 1.0 / t).collect();
        let ys: Vec<f64> = DENSITY_ANCHORS.iter().map(|(_, n)| n.log10()).collect();
        let mx = xs.iter().sum::<f64>() / k;
        let my = ys.iter().sum::<f64>() / k;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        (my - slope * mx, -slope)
    })
}

/// Coefficients `(a, b)` of `log10(n / cm^-3) = a - b / T`.
pub fn density_coefficients() -> (f64, f64) {
    density_fit()
}

/// Rb-87 number density in cm^-3.
pub fn vapor_density(temperature_k: f64) -> Result<f64> {
    ensure_finite("temperature", temperature_k)?;
    if !(MIN_TEMPERATURE_K..=MAX_TEMPERATURE_K).contains(&temperature_k) {
        return Err(Error::Domain(format!(
            "temperature must lie in [{MIN_TEMPERATURE_K}, {MAX_TEMPERATURE_K}] K, got {temperature_k}"
        )));
    }
    let (a, b) = density_fit();
    Ok(10f64.powf(a - b / temperature_k))
}

/// Doppler full width at half maximum of the D1 line, in MHz.
pub fn doppler_fwhm(temperature_k: f64) -> f64 {
    let mass = RB87_MASS_U * ATOMIC_MASS_UNIT;
    let ratio = 8.0 * std::f64::consts::LN_2 * BOLTZMANN * temperature_k / (mass * SPEED_OF_LIGHT.powi(2));
    D1_FREQUENCY_HZ * ratio.sqrt() / 1e6
}

/// Gaussian absorption line: peak depth at the reference cell, and the line
/// width as a multiple of the Doppler width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionProfile {
    pub peak_od_reference: f64,
    pub width_factor: f64,
}

/// Transmission that maps a squeezed level `in_db` onto `out_db` under pure loss.
pub fn transmission_for_levels(in_db: f64, out_db: f64) -> Result<f64> {
    let v_in = squeezing_db_to_variance(in_db)?;
    let v_out = squeezing_db_to_variance(out_db)?;
    if !(v_in < 1.0 && v_in <= v_out && v_out < 1.0) {
        return Err(Error::Domain(format!("levels ({in_db}, {out_db}) dB are not reachable by loss")));
    }
    Ok((1.0 - v_out) / (1.0 - v_in))
}

impl AbsorptionProfile {
    /// Calibrated to the measured degradation at 40 degC: -3.7 dB becomes
    /// -1.2 dB on resonance and -3.2 dB at 400 MHz detuning.
    pub fn calibrated() -> Self {
        let od0 = -transmission_for_levels(-3.7, -1.2).expect("valid anchor").ln();
        let od400 = -transmission_for_levels(-3.7, -3.2).expect("valid anchor").ln();
        let sigma = 400.0 / (2.0 * (od0 / od400).ln()).sqrt();
        let sigma_doppler = doppler_fwhm(REFERENCE_TEMPERATURE_K) / FWHM_PER_SIGMA;
        Self { peak_od_reference: od0, width_factor: sigma / sigma_doppler }
    }

    /// Same resonant depth, but the bare Doppler width.
    pub fn doppler_only() -> Self {
        Self { width_factor: 1.0, ..Self::calibrated() }
    }

    pub fn sigma_mhz(&self, temperature_k: f64) -> f64 {
        self.width_factor * doppler_fwhm(temperature_k) / FWHM_PER_SIGMA
    }

    pub fn peak_od(&self, cond: &CellCondition) -> f64 {
        let n_ref = vapor_density(REFERENCE_TEMPERATURE_K).expect("reference temperature is in range");
        self.peak_od_reference * (cond.density_cm3() / n_ref) * (cond.length_cm() / DEFAULT_CELL_LENGTH_CM)
    }

    pub fn optical_depth(&self, detuning_mhz: f64, cond: &CellCondition) -> f64 {
        let sigma = self.sigma_mhz(cond.temperature_k());
        self.peak_od(cond) * (-(detuning_mhz * detuning_mhz) / (2.0 * sigma * sigma)).exp()
    }

    pub fn transmission(&self, detuning_mhz: f64, cond: &CellCondition) -> f64 {
        (-self.optical_depth(detuning_mhz, cond)).exp()
    }
}

impl Default for AbsorptionProfile {
    fn default() -> Self {
        Self::calibrated()
    }
}

fn default_profile() -> &'static AbsorptionProfile {
    static PROFILE: OnceLock<AbsorptionProfile> = OnceLock::new();
    PROFILE.get_or_init(AbsorptionProfile::calibrated)
}

pub fn optical_depth(detuning_mhz: f64, cond: &CellCondition) -> f64 {
    default_profile().optical_depth(detuning_mhz, cond)
}

pub fn transmission(detuning_mhz: f64, cond: &CellCondition) -> f64 {
    default_profile().transmission(detuning_mhz, cond)
}

/// Beam-splitter loss: `eta * v + (1 - eta)`.
pub fn propagate_variance_through_loss(v_in: f64, eta: f64) -> Result<f64> {
    ensure_finite("v_in", v_in)?;
    ensure_finite("eta", eta)?;
    if v_in <= 0.0 {
        return Err(Error::Domain(format!("v_in must be positive, got {v_in}")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("transmission must lie in (0, 1], got {eta}")));
    }
    Ok(eta * v_in + (1.0 - eta))
}

/// Variance seen through a lock whose phase wanders as N(0, theta_rms^2).
pub fn effective_variance_with_phase_noise(v_sq: f64, v_anti: f64, theta_rms: f64) -> Result<f64> {
    ensure_finite("v_sq", v_sq)?;
    ensure_finite("v_anti", v_anti)?;
    ensure_finite("theta_rms", theta_rms)?;
    if !(v_sq > 0.0 && v_sq <= 1.0 && 1.0 <= v_anti) {
        return Err(Error::Domain(format!("need 0 < v_sq <= 1 <= v_anti, got ({v_sq}, {v_anti})")));
    }
    if theta_rms < 0.0 {
        return Err(Error::Domain(format!("theta_rms must be non-negative, got {theta_rms}")));
    }
    // E[cos^2] = (1 + E[cos 2t]) / 2 and E[cos 2t] = exp(-2 s^2).
    let c = (-2.0 * theta_rms * theta_rms).exp();
    Ok(v_sq * 0.5 * (1.0 + c) + v_anti * 0.5 * (1.0 - c))
}

/// Phase jitter that degrades the `(svs, anti)` pair to `target_db`.
pub fn lock_phase_rms_for_target(svs_db: f64, anti_db: f64, target_db: f64) -> Result<f64> {
    let v_sq = squeezing_db_to_variance(svs_db)?;
    let v_anti = squeezing_db_to_variance(anti_db)?;
    let target = squeezing_db_to_variance(target_db)?;
    let mid = 0.5 * (v_sq + v_anti);
    let half = 0.5 * (v_anti - v_sq);
    if !(target >= v_sq && target < mid) || half <= 0.0 {
        return Err(Error::Domain(format!("target {target_db} dB is not reachable from ({svs_db}, {anti_db}) dB")));
    }
    Ok((-((mid - target) / half).ln() / 2.0).sqrt())
}

/// Loss and optional spin back-action applied to a squeezed probe.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AtomModel {
    pub absorption: AbsorptionProfile,
    /// Excess S2 noise (shot-noise units) added after the loss channel.
    pub back_action_excess: f64,
}

impl AtomModel {
    pub fn variance_after_cell(&self, v_in: f64, detuning_mhz: f64, cond: &CellCondition) -> Result<f64> {
        ensure_finite("detuning", detuning_mhz)?;
        if self.back_action_excess < 0.0 {
            return Err(Error::Domain("back-action excess must be non-negative".into()));
        }
        let eta = self.absorption.transmission(detuning_mhz, cond);
        Ok(propagate_variance_through_loss(v_in, eta)? + self.back_action_excess)
    }

    pub fn squeezing_after_cell(&self, level_in_db: f64, detuning_mhz: f64, cond: &CellCondition) -> Result<f64> {
        ensure_finite("input level", level_in_db)?;
        if level_in_db >= 0.0 {
            return Err(Error::Domain(format!("input level must be squeezed (< 0 dB), got {level_in_db}")));
        }
        let v_in = squeezing_db_to_variance(level_in_db)?;
        variance_to_db(self.variance_after_cell(v_in, detuning_mhz, cond)?)
    }
}

/// Squeezing level (dB) left after the probe crosses the cell.
pub fn squeezing_after_cell(level_in_db: f64, detuning_mhz: f64, cond: &CellCondition) -> Result<f64> {
    AtomModel { absorption: *default_profile(), back_action_excess: 0.0 }.squeezing_after_cell(
        level_in_db,
        detuning_mhz,
        cond,
    )
}
