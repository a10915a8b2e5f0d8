mod common;

use common::median;
use qmagsim_core::polarimeter::{derive_seed, synthesize_noise, zero_span_power};
use qmagsim_core::{
    extract_snr, measure_sensitivity, synthesize_timeseries, welch_psd, zero_span_trace, AcquisitionConfig, FieldDrive,
    NoiseBudget, RotationModel,
};

fn quiet_drive(b_ac: f64) -> FieldDrive {
    FieldDrive { b_dc_pt: 0.0, b_ac_amplitude_pt: b_ac, f0_hz: 10_000.0 }
}

fn rot(slope: f64) -> RotationModel {
    RotationModel::new(slope, 3000.0).unwrap()
}

#[test]
fn white_noise_reads_back_its_asd() {
    let acq = AcquisitionConfig { duration_s: 5.0, seed: 9, ..AcquisitionConfig::default() };
    let scale = 0.8;
    let series = synthesize_timeseries(&quiet_drive(0.0), &rot(-0.038), &NoiseBudget::pcs(scale), &acq).unwrap();
    assert_eq!(series.len(), 1_000_000);
    let sigma = scale * (acq.sample_rate_hz / 2.0).sqrt();
    let theory = sigma * (2.0 / acq.sample_rate_hz).sqrt();
    let psd = welch_psd(&series, &acq).unwrap();
    let body = &psd.asd[1..psd.len() - 1];
    let med = median(body);
    let mean = body.iter().sum::<f64>() / body.len() as f64;
    assert!((med / theory - 1.0).abs() < 0.03, "median {med} vs {theory}");
    assert!((mean / theory - 1.0).abs() < 0.01, "mean {mean} vs {theory}");
}

#[test]
fn synthesized_variance_obeys_parseval() {
    let acq = AcquisitionConfig { duration_s: 2.0, seed: 4, ..AcquisitionConfig::default() };
    let scale = 1.3;
    let series = synthesize_timeseries(&quiet_drive(0.0), &rot(-0.1), &NoiseBudget::pcs(scale), &acq).unwrap();
    assert_eq!(series.len(), 400_000);
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / series.len() as f64;
    let expected = scale * scale * acq.sample_rate_hz / 2.0;
    assert!((var / expected - 1.0).abs() < 0.01, "{var} vs {expected}");
}

#[test]
fn noiseless_tone_amplitude_is_recovered() {
    let acq = AcquisitionConfig { duration_s: 0.5, ..AcquisitionConfig::default() };
    let series = synthesize_timeseries(&quiet_drive(40.5), &rot(-0.038), &NoiseBudget::pcs(0.0), &acq).unwrap();
    let peak = series.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!((peak - 1.539).abs() < 1e-3, "{peak}");

    let psd = welch_psd(&series, &acq).unwrap();
    let k = psd.bin_of(10_000.0);
    assert_eq!(psd.frequency(k), 10_000.0);
    // Peak ASD times sqrt(ENBW) is the tone rms for a bin-centred tone.
    let amplitude = psd.asd[k] * psd.enbw_hz.sqrt() * std::f64::consts::SQRT_2;
    assert!((amplitude / 1.539 - 1.0).abs() < 0.01, "{amplitude}");
}

#[test]
fn tone_amplitude_recovered_through_snr_estimator() {
    let acq = AcquisitionConfig { duration_s: 1.0, ..AcquisitionConfig::default() };
    let series: Vec<f64> = (0..acq.n_samples())
        .map(|k| 2.5 * (2.0 * std::f64::consts::PI * 10_000.0 * k as f64 / acq.sample_rate_hz).sin())
        .collect();
    let mut noisy = series.clone();
    // Tiny floor so the annulus median is non-zero.
    let floor = synthesize_noise(|_| 1.0, 1e-6, &acq).unwrap();
    for (x, n) in noisy.iter_mut().zip(&floor) {
        *x += n;
    }
    let est = extract_snr(&welch_psd(&noisy, &acq).unwrap(), 10_000.0, acq.rbw_hz).unwrap();
    assert!((est.signal_rms * std::f64::consts::SQRT_2 / 2.5 - 1.0).abs() < 0.01);
    // Off-centre tone: integrated lobe is insensitive to scalloping.
    let off: Vec<f64> = (0..acq.n_samples())
        .map(|k| 2.5 * (2.0 * std::f64::consts::PI * 10_180.0 * k as f64 / acq.sample_rate_hz).sin() + floor[k])
        .collect();
    let est = extract_snr(&welch_psd(&off, &acq).unwrap(), 10_180.0, acq.rbw_hz).unwrap();
    assert!((est.signal_rms * std::f64::consts::SQRT_2 / 2.5 - 1.0).abs() < 0.01, "{}", est.signal_rms);
}

#[test]
fn noise_only_trace_shows_no_tone() {
    let base =
        AcquisitionConfig { sample_rate_hz: 25_000.0, duration_s: 4.0, rbw_hz: 2.0, vbw_hz: 2.0, averages: 1, seed: 0 };
    let mut quiet = 0;
    for i in 0..100 {
        let acq = base.with_seed(derive_seed(77, i));
        let s = synthesize_timeseries(&quiet_drive(0.0), &rot(-0.038), &NoiseBudget::pcs(1.0), &acq).unwrap();
        let est = extract_snr(&welch_psd(&s, &acq).unwrap(), 10_000.0, acq.rbw_hz).unwrap();
        if est.peak_to_floor < 3.0 {
            quiet += 1;
        }
    }
    assert!(quiet >= 95, "{quiet}/100");
}

#[test]
fn identical_seeds_are_bit_identical() {
    let acq = AcquisitionConfig { duration_s: 0.2, seed: 1234, ..AcquisitionConfig::default() };
    let b = NoiseBudget::pss(0.4786, 0.9);
    let a1 = synthesize_timeseries(&FieldDrive::default(), &rot(-0.038), &b, &acq).unwrap();
    let a2 = synthesize_timeseries(&FieldDrive::default(), &rot(-0.038), &b, &acq).unwrap();
    assert!(a1.iter().zip(&a2).all(|(x, y)| x.to_bits() == y.to_bits()));
    let p1 = welch_psd(&a1, &acq).unwrap();
    let p2 = welch_psd(&a2, &acq).unwrap();
    assert!(p1.asd.iter().zip(&p2.asd).all(|(x, y)| x.to_bits() == y.to_bits()));
    let other = synthesize_timeseries(&FieldDrive::default(), &rot(-0.038), &b, &acq.with_seed(1235)).unwrap();
    assert_ne!(a1, other);
}

#[test]
fn doubling_drive_doubles_signal() {
    let acq = AcquisitionConfig { duration_s: 40.0, ..AcquisitionConfig::fft_analyzer() };
    let budget = NoiseBudget::pcs(0.2);
    let one = |b_ac: f64| {
        let d = FieldDrive { b_ac_amplitude_pt: b_ac, ..FieldDrive::default() };
        let s = synthesize_timeseries(&d, &rot(-0.038), &budget, &acq).unwrap();
        extract_snr(&welch_psd(&s, &acq).unwrap(), d.f0_hz, acq.rbw_hz).unwrap()
    };
    let (a, b) = (one(40.5), one(81.0));
    assert!((b.signal_rms / a.signal_rms - 2.0).abs() < 0.02, "{} {}", a.signal_rms, b.signal_rms);
    assert!((b.noise_floor / a.noise_floor - 1.0).abs() < 0.02);
}

#[test]
fn squeezed_probe_scales_sensitivity_by_sqrt_v2() {
    let acq = AcquisitionConfig::fft_analyzer().with_seed(5);
    let r = rot(-0.038);
    let d = FieldDrive::default();
    let pcs = measure_sensitivity(&d, &r, &NoiseBudget::pcs(0.757), &acq).unwrap();
    let pss = measure_sensitivity(&d, &r, &NoiseBudget::pss(0.4786, 0.757), &acq).unwrap();
    let ratio = pss.delta_b_sens / pcs.delta_b_sens;
    eprintln!("pcs {} pss {} ratio {ratio}", pcs.delta_b_sens, pss.delta_b_sens);
    assert!((ratio / 0.4786f64.sqrt() - 1.0).abs() < 0.05, "{ratio}");
    assert_eq!(pcs.delta_b_applied_pt, 40.5);
    assert!((pcs.delta_b_sens - pcs.delta_b_applied_pt / pcs.snr).abs() < 1e-12);
}

fn zero_span_acq(seed: u64) -> AcquisitionConfig {
    // 60 sweeps of 0.5 s each.
    AcquisitionConfig { sample_rate_hz: 25_000.0, duration_s: 30.0, rbw_hz: 1000.0, vbw_hz: 30.0, averages: 60, seed }
}

#[test]
fn zero_span_coherent_reference_reads_zero() {
    let snl = synthesize_noise(|_| 1.0, 1.0, &zero_span_acq(1)).unwrap();
    let other = synthesize_noise(|_| 1.0, 1.0, &zero_span_acq(2)).unwrap();
    let own = zero_span_trace(&snl, &snl, 10_000.0, &zero_span_acq(1)).unwrap();
    assert!(own.mean_db().abs() < 1e-9);
    let t = zero_span_trace(&other, &snl, 10_000.0, &zero_span_acq(1)).unwrap();
    assert!(t.mean_db().abs() < 0.3, "{}", t.mean_db());
}

#[test]
fn zero_span_locked_squeezing() {
    let acq = zero_span_acq(3);
    let snl = synthesize_noise(|_| 1.0, 1.0, &acq.with_seed(10)).unwrap();
    let pss = synthesize_noise(|_| 0.4266, 1.0, &acq).unwrap();
    let t = zero_span_trace(&pss, &snl, 10_000.0, &acq).unwrap();
    assert!((t.mean_db() + 3.7).abs() < 0.3, "{}", t.mean_db());
    assert!(t.power_db.iter().all(|p| *p < 0.0));
}

#[test]
fn zero_span_scanned_phase_spans_squeezing_and_antisqueezing() {
    // 15 sweeps of 2 s; the local-oscillator phase runs through 2 pi per sweep,
    // so squeezing sits mid-sweep and anti-squeezing at a quarter and three quarters.
    let acq = AcquisitionConfig { duration_s: 30.0, averages: 15, ..zero_span_acq(4) };
    let sweep = acq.duration_s / acq.averages as f64;
    let (v_sq, v_anti) = (0.398f64, 5.012f64);
    let variance = |t: f64| {
        let theta = std::f64::consts::TAU * (t % sweep) / sweep + std::f64::consts::FRAC_PI_2;
        v_sq * theta.sin().powi(2) + v_anti * theta.cos().powi(2)
    };
    let scanned = synthesize_noise(variance, 1.0, &acq).unwrap();
    let snl = synthesize_noise(|_| 1.0, 1.0, &acq.with_seed(11)).unwrap();
    let t = zero_span_trace(&scanned, &snl, 10_000.0, &acq).unwrap();
    let level_near = |centre: f64| {
        let window: Vec<f64> = t
            .times_s
            .iter()
            .zip(&t.power_db)
            .filter(|(ts, _)| (**ts - centre).abs() <= 0.01)
            .map(|(_, p)| 10f64.powf(p / 10.0))
            .collect();
        10.0 * (window.iter().sum::<f64>() / window.len() as f64).log10()
    };
    let sq = level_near(sweep / 2.0);
    let anti = 0.5 * (level_near(sweep / 4.0) + level_near(3.0 * sweep / 4.0));
    assert!((sq + 4.0).abs() < 0.3, "{sq}");
    assert!((anti - 7.0).abs() < 0.3, "{anti}");
    let lo = t.power_db.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t.power_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(lo < -3.0 && hi > 6.0, "{lo} {hi}");
    let raw = zero_span_power(&scanned, 10_000.0, &acq).unwrap();
    assert_eq!(raw.times_s.len(), t.power_db.len());
}

#[test]
fn calibration_recovers_the_analytic_scale_at_high_snr() {
    use qmagsim_core::calibrate;
    use qmagsim_core::calibration::{analytic_noise_scale, OperatingPoint};
    // Wide RBW and a long record: ~4000 segments pin the floor to ~0.25%.
    let acq = AcquisitionConfig { duration_s: 400.0, rbw_hz: 10.0, vbw_hz: 10.0, ..AcquisitionConfig::fft_analyzer() };
    let mut op = OperatingPoint::new(FieldDrive::default(), rot(-0.038), acq);
    op.realizations = 1;
    for target in [0.2, 0.35] {
        let x = analytic_noise_scale(target, &op);
        let cal = calibrate(target, &op).unwrap();
        assert!((cal.noise_scale / x - 1.0).abs() < 0.005, "{} vs {x}", cal.noise_scale);
        assert!((cal.achieved_sensitivity / target - 1.0).abs() < 0.005);
    }
}

#[test]
fn calibration_rejects_flat_rotation() {
    use qmagsim_core::calibration::OperatingPoint;
    use qmagsim_core::{calibrate, Error};
    let op = OperatingPoint::new(FieldDrive::default(), rot(0.0), AcquisitionConfig::fft_analyzer());
    assert!(matches!(calibrate(28.3, &op), Err(Error::Calibration(_))));
    // At the dispersion peak the local slope also vanishes.
    let peak = OperatingPoint::new(
        FieldDrive { b_dc_pt: 3000.0, ..FieldDrive::default() },
        rot(-0.038),
        AcquisitionConfig::fft_analyzer(),
    );
    assert!(matches!(calibrate(28.3, &peak), Err(Error::Calibration(_))));
}

#[test]
fn averaged_measurement_matches_single_run_for_one_realization() {
    let acq = AcquisitionConfig { duration_s: 20.0, ..AcquisitionConfig::fft_analyzer() };
    let b = NoiseBudget::pcs(0.5);
    let one = measure_sensitivity(&FieldDrive::default(), &rot(-0.038), &b, &acq).unwrap();
    let avg = qmagsim_core::measure_sensitivity_averaged(&FieldDrive::default(), &rot(-0.038), &b, &acq, 1).unwrap();
    assert_eq!(one, avg);
    let three = qmagsim_core::measure_sensitivity_averaged(&FieldDrive::default(), &rot(-0.038), &b, &acq, 3).unwrap();
    assert_eq!(three.psd.segments, 3 * one.psd.segments);
    assert!(qmagsim_core::measure_sensitivity_averaged(&FieldDrive::default(), &rot(-0.038), &b, &acq, 0).is_err());
}
