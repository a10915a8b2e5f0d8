//! Balanced-polarimeter signal chain: time-series synthesis under an applied
//! field, Welch spectral estimation with analyzer-style RBW/VBW, SNR
//! extraction and field sensitivity, plus a zero-span power trace.
//!
//! The series is the polarimeter output expressed as a rotation angle in
//! mrad. Its white noise floor is `noise_scale * sqrt(v2)` mrad/sqrt(Hz),
//! where `v2` is the S2 variance of the probe in shot-noise units.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use realfft::num_complex::Complex;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::faraday::RotationModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDrive {
    pub b_dc_pt: f64,
    pub b_ac_amplitude_pt: f64,
    pub f0_hz: f64,
}

impl FieldDrive {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("b_dc", self.b_dc_pt)?;
        ensure_finite("b_ac", self.b_ac_amplitude_pt)?;
        ensure_finite("f0", self.f0_hz)?;
        if self.f0_hz <= 0.0 {
            return Err(Error::Config(format!("f0 must be positive, got {}", self.f0_hz)));
        }
        Ok(())
    }

    pub fn field_at(&self, t: f64) -> f64 {
        self.field_at_cycle((self.f0_hz * t).fract())
    }

    /// Field at a phase given in cycles of the AC drive.
    fn field_at_cycle(&self, cycles: f64) -> f64 {
        self.b_dc_pt + self.b_ac_amplitude_pt * (2.0 * PI * cycles).sin()
    }
}

impl Default for FieldDrive {
    /// 40.5 pT at 10 kHz on a 110 pT bias.
    fn default() -> Self {
        Self { b_dc_pt: 110.0, b_ac_amplitude_pt: 40.5, f0_hz: 10_000.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub rbw_hz: f64,
    pub vbw_hz: f64,
    pub averages: u32,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    /// RF spectrum analyzer settings: 1 kHz RBW, 30 Hz VBW, 60 averages.
    fn default() -> Self {
        Self { sample_rate_hz: 200_000.0, duration_s: 2.0, rbw_hz: 1000.0, vbw_hz: 30.0, averages: 60, seed: 42 }
    }
}

impl AcquisitionConfig {
    /// FFT signal-analyzer settings for field calibration runs: 8 s segments
    /// (0.25 Hz RBW) over 200 s at 25 kHz.
    ///
    /// The 40 pT calibration tone sits only ~1.4 sqrt(Hz) above the floor,
    /// so it is buried at kHz resolution; sub-Hz bins are needed to resolve it.
    pub fn fft_analyzer() -> Self {
        Self { sample_rate_hz: 25_000.0, duration_s: 200.0, rbw_hz: 0.25, vbw_hz: 0.25, averages: 1, seed: 42 }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sample_rate", self.sample_rate_hz),
            ("duration", self.duration_s),
            ("rbw", self.rbw_hz),
            ("vbw", self.vbw_hz),
        ] {
            ensure_finite(name, v)?;
            if v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.rbw_hz < 4.0 / self.duration_s {
            return Err(Error::Config(format!(
                "rbw {} Hz is below 4/duration = {} Hz",
                self.rbw_hz,
                4.0 / self.duration_s
            )));
        }
        if self.vbw_hz > self.rbw_hz {
            return Err(Error::Config(format!("vbw {} Hz exceeds rbw {} Hz", self.vbw_hz, self.rbw_hz)));
        }
        if self.averages == 0 {
            return Err(Error::Config("averages must be at least 1".into()));
        }
        Ok(())
    }

    /// Validate and also check that `f0` is below Nyquist.
    pub fn validate_for(&self, f0_hz: f64) -> Result<()> {
        self.validate()?;
        if self.sample_rate_hz <= 2.0 * f0_hz {
            return Err(Error::Config(format!(
                "sample rate {} Hz does not exceed 2*f0 = {} Hz",
                self.sample_rate_hz,
                2.0 * f0_hz
            )));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.sample_rate_hz * self.duration_s).round() as usize
    }

    /// Welch segment length implied by the RBW.
    pub fn segment_len(&self) -> usize {
        (self.sample_rate_hz / self.rbw_hz * 2.0).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ProbeKind {
    Pcs,
    Pss,
}

impl ProbeKind {
    pub fn label(self) -> &'static str {
        match self {
            ProbeKind::Pcs => "PCS",
            ProbeKind::Pss => "PSS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub probe_kind: ProbeKind,
    pub v2_after_cell: f64,
    /// Angle-equivalent ASD of the shot-noise floor, mrad/sqrt(Hz).
    pub noise_scale: f64,
}

impl NoiseBudget {
    pub fn pcs(noise_scale: f64) -> Self {
        Self { probe_kind: ProbeKind::Pcs, v2_after_cell: 1.0, noise_scale }
    }

    pub fn pss(v2_after_cell: f64, noise_scale: f64) -> Self {
        Self { probe_kind: ProbeKind::Pss, v2_after_cell, noise_scale }
    }

    /// `noise_scale == 0` is accepted and yields a noiseless series.
    pub fn validate(&self) -> Result<()> {
        ensure_finite("v2_after_cell", self.v2_after_cell)?;
        ensure_finite("noise_scale", self.noise_scale)?;
        if self.v2_after_cell <= 0.0 {
            return Err(Error::Domain(format!("v2 must be positive, got {}", self.v2_after_cell)));
        }
        if self.noise_scale < 0.0 {
            return Err(Error::Domain(format!("noise_scale must be non-negative, got {}", self.noise_scale)));
        }
        if self.probe_kind == ProbeKind::Pcs && self.v2_after_cell != 1.0 {
            return Err(Error::Domain("a coherent probe has v2 = 1".into()));
        }
        Ok(())
    }

    /// Noise floor ASD in mrad/sqrt(Hz).
    pub fn floor_asd(&self) -> f64 {
        self.noise_scale * self.v2_after_cell.sqrt()
    }
}

/// Independent RNG stream for sweep point `index` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined input
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Polarimeter output (mrad) under `drive`, sampled per `acq`.
pub fn synthesize_timeseries(
    drive: &FieldDrive,
    rot: &RotationModel,
    budget: &NoiseBudget,
    acq: &AcquisitionConfig,
) -> Result<Vec<f64>> {
    drive.validate()?;
    rot.validate()?;
    budget.validate()?;
    acq.validate_for(drive.f0_hz)?;
    let fs = acq.sample_rate_hz;
    let sigma = budget.floor_asd() * (fs / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(acq.seed);
    let cycles_per_sample = drive.f0_hz / fs;
    Ok((0..acq.n_samples())
        .map(|k| {
            let n: f64 = StandardNormal.sample(&mut rng);
            let b = drive.field_at_cycle((k as f64 * cycles_per_sample).fract());
            rot.rotation_angle(b) + sigma * n
        })
        .collect())
}

/// White Gaussian noise whose variance follows `variance(t)` in shot-noise
/// units, scaled to an ASD of `noise_scale` at unit variance.
pub fn synthesize_noise(variance: impl Fn(f64) -> f64, noise_scale: f64, acq: &AcquisitionConfig) -> Result<Vec<f64>> {
    acq.validate()?;
    ensure_finite("noise_scale", noise_scale)?;
    let fs = acq.sample_rate_hz;
    let unit = noise_scale * (fs / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(acq.seed);
    (0..acq.n_samples())
        .map(|k| {
            let v = variance(k as f64 / fs);
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("variance profile returned {v}")));
            }
            let n: f64 = StandardNormal.sample(&mut rng);
            Ok(unit * v.sqrt() * n)
        })
        .collect()
}

/// One-sided amplitude spectral density trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSpectrum {
    /// Bin spacing, Hz.
    pub bin_width_hz: f64,
    /// Equivalent noise bandwidth of the window, Hz.
    pub enbw_hz: f64,
    pub segments: usize,
    /// ASD per bin, starting at DC, in series units per sqrt(Hz).
    pub asd: Vec<f64>,
}

impl AmplitudeSpectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_width_hz
    }

    pub fn bin_of(&self, f_hz: f64) -> usize {
        (f_hz / self.bin_width_hz).round() as usize
    }

    pub fn len(&self) -> usize {
        self.asd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.asd.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.asd.iter().enumerate().map(|(k, a)| (self.frequency(k), *a))
    }

    /// Power average of spectra taken with identical settings.
    pub fn mean_power(spectra: &[AmplitudeSpectrum]) -> Result<AmplitudeSpectrum> {
        let first = spectra.first().ok_or_else(|| Error::InvalidArgument("no spectra to average".into()))?;
        if spectra.iter().any(|s| s.len() != first.len() || s.bin_width_hz != first.bin_width_hz) {
            return Err(Error::InvalidArgument("spectra have different bins".into()));
        }
        let k = spectra.len() as f64;
        let asd =
            (0..first.len()).map(|i| (spectra.iter().map(|s| s.asd[i] * s.asd[i]).sum::<f64>() / k).sqrt()).collect();
        Ok(AmplitudeSpectrum {
            bin_width_hz: first.bin_width_hz,
            enbw_hz: first.enbw_hz,
            segments: spectra.iter().map(|s| s.segments).sum(),
            asd,
        })
    }
}

fn hann(n: usize) -> Vec<f64> {
    // periodic form: exact bin-centred leakage of 1/4 into each neighbour
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Welch estimate with Hann segments of `acq.segment_len()` and 50% overlap.
///
/// Each bin's power is passed through a one-pole video filter of bandwidth
/// `vbw` across segment times before averaging, which leaves the expected
/// level of a stationary input unchanged.
pub fn welch_psd(series: &[f64], acq: &AcquisitionConfig) -> Result<AmplitudeSpectrum> {
    acq.validate()?;
    let n = acq.segment_len();
    if n < 4 {
        return Err(Error::Config(format!("segment length {n} is too short")));
    }
    if series.len() < 2 * n {
        return Err(Error::Length { needed: 2 * n, got: series.len() });
    }
    let fs = acq.sample_rate_hz;
    let hop = n / 2;
    let window = hann(n);
    let sum_w: f64 = window.iter().sum();
    let sum_w2: f64 = window.iter().map(|w| w * w).sum();
    let n_bins = n / 2 + 1;
    let segments = (series.len() - n) / hop + 1;

    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();

    let alpha = 1.0 - (-2.0 * PI * acq.vbw_hz * hop as f64 / fs).exp();
    let mut video = vec![0.0; n_bins];
    let mut acc = vec![0.0; n_bins];

    for s in 0..segments {
        let seg = &series[s * hop..s * hop + n];
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = x * w;
        }
        fft.process_with_scratch(&mut buf, &mut spectrum, &mut scratch)
            .map_err(|e| Error::Degenerate(format!("fft failed: {e}")))?;
        for k in 0..n_bins {
            let one_sided = if k == 0 || (n.is_multiple_of(2) && k == n / 2) { 1.0 } else { 2.0 };
            let p = one_sided * spectrum[k].norm_sqr() / (fs * sum_w2);
            video[k] = if s == 0 { p } else { video[k] + alpha * (p - video[k]) };
            acc[k] += video[k];
        }
    }

    Ok(AmplitudeSpectrum {
        bin_width_hz: fs / n as f64,
        enbw_hz: fs * sum_w2 / (sum_w * sum_w),
        segments,
        asd: acc.into_iter().map(|p| (p / segments as f64).sqrt()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    /// Signal rms over noise ASD, sqrt(Hz).
    pub snr: f64,
    /// Noise-subtracted rms of the tone, series units.
    pub signal_rms: f64,
    /// Median ASD of the sideband annulus.
    pub noise_floor: f64,
    pub signal_bin: usize,
    /// ASD at the signal bin over the floor.
    pub peak_to_floor: f64,
}

/// Bins either side of the tone that are integrated for its power.
pub const SIGNAL_HALF_WIDTH_BINS: usize = 2;

/// Tone rms at `f0` over the noise ASD of the annulus `2*rbw..10*rbw` away.
///
/// The noise ASD is the annulus median, rescaled to the mean for the number
/// of averaged segments.
///
/// The rms integrates the Hann main lobe after removing the floor, so it is
/// independent of where the tone falls within its bin.
pub fn extract_snr(psd: &AmplitudeSpectrum, f0_hz: f64, rbw_hz: f64) -> Result<SnrEstimate> {
    ensure_finite("f0", f0_hz)?;
    let df = psd.bin_width_hz;
    let k0 = psd.bin_of(f0_hz);
    let half = SIGNAL_HALF_WIDTH_BINS;
    if f0_hz <= 0.0 || k0 < half || k0 + half >= psd.len() {
        return Err(Error::OutOfRange(format!("f0 = {f0_hz} Hz is not inside the trace")));
    }
    let inner = ((2.0 * rbw_hz / df).ceil() as usize).max(half + 1);
    let outer = (10.0 * rbw_hz / df).floor() as usize;
    let mut floor: Vec<f64> = (inner..=outer)
        .flat_map(|j| [k0.checked_sub(j), Some(k0 + j)])
        .flatten()
        .filter(|&k| k > 0 && k < psd.len())
        .map(|k| psd.asd[k])
        .collect();
    if floor.is_empty() {
        return Err(Error::Degenerate("no bins in the noise annulus".into()));
    }
    floor.sort_by(f64::total_cmp);
    let m = floor.len();
    let median = if m % 2 == 1 { floor[m / 2] } else { 0.5 * (floor[m / 2 - 1] + floor[m / 2]) };
    let noise_floor = median * median_to_mean_asd(psd.segments);
    if !(noise_floor > 0.0) {
        return Err(Error::Degenerate("noise floor is zero".into()));
    }
    let floor_psd = noise_floor * noise_floor;
    let power: f64 = (k0 - half..=k0 + half).map(|k| psd.asd[k] * psd.asd[k] - floor_psd).sum::<f64>() * df;
    let signal_rms = power.max(0.0).sqrt();
    Ok(SnrEstimate {
        snr: signal_rms / noise_floor,
        signal_rms,
        noise_floor,
        signal_bin: k0,
        peak_to_floor: psd.asd[k0] / noise_floor,
    })
}

/// Ratio of mean to median ASD for a Welch average of `segments` Hann
/// segments at 50% overlap, each bin being chi-squared with `nu` degrees of
/// freedom (Wilson-Hilferty median).
fn median_to_mean_asd(segments: usize) -> f64 {
    let m = segments.max(1) as f64;
    // Squared correlation of adjacent Hann segments at 50% overlap.
    let rho2 = 1.0 / 36.0;
    let nu = 2.0 * m / (1.0 + 2.0 * rho2 * (m - 1.0) / m);
    let median = nu * (1.0 - 2.0 / (9.0 * nu)).powi(3);
    (nu / median).sqrt()
}

/// Field sensitivity `delta_b / snr`, pT/sqrt(Hz).
pub fn sensitivity(delta_b_pt: f64, snr: f64) -> Result<f64> {
    ensure_finite("delta_b", delta_b_pt)?;
    ensure_finite("snr", snr)?;
    if delta_b_pt <= 0.0 || snr <= 0.0 {
        return Err(Error::Domain(format!("need delta_b > 0 and snr > 0, got ({delta_b_pt}, {snr})")));
    }
    Ok(delta_b_pt / snr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub delta_b_applied_pt: f64,
    pub snr: f64,
    pub delta_b_sens: f64,
    pub psd: AmplitudeSpectrum,
}

/// Synthesize, estimate the spectrum, and convert the tone SNR to a sensitivity.
pub fn measure_sensitivity(
    drive: &FieldDrive,
    rot: &RotationModel,
    budget: &NoiseBudget,
    acq: &AcquisitionConfig,
) -> Result<SensitivityResult> {
    let series = synthesize_timeseries(drive, rot, budget, acq)?;
    let psd = welch_psd(&series, acq)?;
    let est = extract_snr(&psd, drive.f0_hz, acq.rbw_hz)?;
    let delta_b = drive.b_ac_amplitude_pt.abs();
    Ok(SensitivityResult {
        delta_b_applied_pt: delta_b,
        snr: est.snr,
        delta_b_sens: sensitivity(delta_b, est.snr)?,
        psd,
    })
}

/// As [`measure_sensitivity`], with the spectrum power-averaged over
/// `realizations` independent runs seeded by `derive_seed(acq.seed, i)`.
///
/// One realization is exactly [`measure_sensitivity`] at `acq.seed`.
pub fn measure_sensitivity_averaged(
    drive: &FieldDrive,
    rot: &RotationModel,
    budget: &NoiseBudget,
    acq: &AcquisitionConfig,
    realizations: u32,
) -> Result<SensitivityResult> {
    match realizations {
        0 => Err(Error::Config("realizations must be at least 1".into())),
        1 => measure_sensitivity(drive, rot, budget, acq),
        k => {
            let spectra = (0..k as u64)
                .map(|i| {
                    let run = acq.with_seed(derive_seed(acq.seed, i));
                    welch_psd(&synthesize_timeseries(drive, rot, budget, &run)?, &run)
                })
                .collect::<Result<Vec<_>>>()?;
            let psd = AmplitudeSpectrum::mean_power(&spectra)?;
            let est = extract_snr(&psd, drive.f0_hz, acq.rbw_hz)?;
            let delta_b = drive.b_ac_amplitude_pt.abs();
            Ok(SensitivityResult {
                delta_b_applied_pt: delta_b,
                snr: est.snr,
                delta_b_sens: sensitivity(delta_b, est.snr)?,
                psd,
            })
        }
    }
}

/// Detected band power at `f0` versus time (linear units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    pub times_s: Vec<f64>,
    pub power: Vec<f64>,
}

/// Zero-span trace in dB relative to the shot-noise reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSpanTrace {
    pub times_s: Vec<f64>,
    pub power_db: Vec<f64>,
}

impl ZeroSpanTrace {
    /// Mean power over the trace, averaged in linear units, in dB.
    pub fn mean_db(&self) -> f64 {
        let mean = self.power_db.iter().map(|p| 10f64.powf(p / 10.0)).sum::<f64>() / self.power_db.len() as f64;
        10.0 * mean.log10()
    }
}

/// Zero-span detector: mix `f0` to baseband, boxcar of bandwidth `rbw`,
/// square-law detection, one-pole video filter of bandwidth `vbw`.
///
/// The series is cut into `acq.averages` equal sweeps whose traces are
/// averaged point by point. One output point per RBW time constant.
pub fn zero_span_power(series: &[f64], f0_hz: f64, acq: &AcquisitionConfig) -> Result<PowerTrace> {
    acq.validate_for(f0_hz)?;
    let fs = acq.sample_rate_hz;
    let width = (fs / acq.rbw_hz).round().max(1.0) as usize;
    let sweeps = acq.averages as usize;
    let sweep_len = series.len() / sweeps;
    if sweep_len < 4 * width {
        return Err(Error::Length { needed: 4 * width * sweeps, got: series.len() });
    }
    let alpha = 1.0 - (-2.0 * PI * acq.vbw_hz / fs).exp();
    let n_out = sweep_len / width;
    let mut power = vec![0.0; n_out];
    let omega = 2.0 * PI * f0_hz / fs;

    for s in 0..sweeps {
        let start = s * sweep_len;
        let seg = &series[start..start + sweep_len];
        let mixed: Vec<Complex<f64>> =
            seg.iter().enumerate().map(|(i, x)| Complex::from_polar(*x, -omega * (start + i) as f64)).collect();
        let mut sum: Complex<f64> = mixed[..width].iter().sum();
        let mut video = (sum / width as f64).norm_sqr();
        power[0] += video;
        for i in width..sweep_len {
            sum += mixed[i] - mixed[i - width];
            let detected = (sum / width as f64).norm_sqr();
            video += alpha * (detected - video);
            if (i + 1) % width == 0 {
                power[(i + 1) / width - 1] += video;
            }
        }
    }
    Ok(PowerTrace {
        times_s: (0..n_out).map(|j| ((j + 1) * width) as f64 / fs).collect(),
        power: power.into_iter().map(|p| p / sweeps as f64).collect(),
    })
}

/// Zero-span trace of `series` in dB relative to the mean level of the
/// shot-noise reference measured with identical settings.
pub fn zero_span_trace(
    series: &[f64],
    snl_reference: &[f64],
    f0_hz: f64,
    acq: &AcquisitionConfig,
) -> Result<ZeroSpanTrace> {
    let trace = zero_span_power(series, f0_hz, acq)?;
    let reference = zero_span_power(snl_reference, f0_hz, acq)?;
    let level = reference.power.iter().sum::<f64>() / reference.power.len() as f64;
    if !(level > 0.0) {
        return Err(Error::Degenerate("shot-noise reference has zero power".into()));
    }
    let power_db =
        trace.power.iter().map(|p| if *p > 0.0 { 10.0 * (p / level).log10() } else { f64::NEG_INFINITY }).collect();
    Ok(ZeroSpanTrace { times_s: trace.times_s, power_db })
}
