//! Scenario runners. Each writes its CSV series and SVG plots into the output
//! directory and returns the records the manifest is built from.

use std::collections::BTreeMap;

use qmagsim_core::atom::propagate_variance_through_loss;
use qmagsim_core::calibration::OperatingPoint;
use qmagsim_core::export::{sig9, write_rows, write_zero_span_csv, ASD_HEADER};
use qmagsim_core::faraday::SlopeKey;
use qmagsim_core::polarimeter::{derive_seed, synthesize_noise};
use qmagsim_core::{
    calibrate, measure_sensitivity_averaged, zero_span_trace, AmplitudeSpectrum, AtomModel, CellCondition, Dataset,
    NoiseBudget, RotationModel, SensitivityResult, SlopeTable,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Scenario, ScenarioConfig};
use crate::error::CliError;
use crate::output::{FileRecord, OutputDir};
use crate::svg::{render, Plot, Series};

/// How the noise scale of a run was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRecord {
    pub source: &'static str,
    pub noise_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_mrad_per_pt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_sensitivity_pt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub achieved_sensitivity_pt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    pub realizations: u32,
}

#[derive(Debug, Default)]
pub struct Products {
    pub files: Vec<FileRecord>,
    pub results: BTreeMap<String, Value>,
    pub calibration: Option<CalibrationRecord>,
}

/// One fig3c temperature: the curve, its file and two reference readings.
struct Curve {
    t_c: f64,
    points: Vec<(f64, f64)>,
    rec: FileRecord,
    at_400: f64,
    at_0: f64,
}

/// Noise variance in shot-noise units as a function of time.
type VarianceProfile = Box<dyn Fn(f64) -> f64 + Sync>;

pub struct Runner<'a> {
    pub cfg: &'a ScenarioConfig,
    pub table: &'a SlopeTable,
    pub out: &'a OutputDir,
    pub pool: &'a rayon::ThreadPool,
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_rows(&mut buf, header, rows).expect("writing to memory");
    buf
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

fn spectrum_window(psd: &AmplitudeSpectrum, f0: f64, span: f64) -> Vec<u8> {
    csv(ASD_HEADER, psd.points().filter(|(f, _)| (f - f0).abs() <= span / 2.0).map(|(f, a)| vec![f, a]))
}

impl Runner<'_> {
    pub fn run(&self) -> Result<Products, CliError> {
        match self.cfg.scenario() {
            Scenario::Fig3c => self.fig3c(),
            Scenario::Fig4a => self.fig4(Dataset::Fig4a),
            Scenario::Fig4b => self.fig4(Dataset::Fig4b),
            Scenario::Fig4c => self.fig4(Dataset::Fig4c),
            Scenario::Fig5a => self.fig5a(),
            Scenario::Fig5b => self.fig5b(),
            Scenario::Custom => self.custom(),
        }
    }

    fn atom(&self) -> AtomModel {
        AtomModel { back_action_excess: self.cfg.budget.back_action_excess, ..AtomModel::default() }
    }

    /// Squeezed-probe variance at the cell input.
    fn pss_input_variance(&self) -> Result<f64, CliError> {
        Ok(self.cfg.squeezing_budget()?.pss_variance()?)
    }

    fn plot(&self, name: &str, plot: Plot) -> Result<FileRecord, CliError> {
        self.out.write(name, render(&plot).as_bytes())
    }

    fn fig3c(&self) -> Result<Products, CliError> {
        let cfg = self.cfg;
        let f = &cfg.fig3c;
        let level_in = cfg.squeezing_budget()?.pss_level_db()?;
        let atom = self.atom();
        let n = ((f.detuning_stop_mhz - f.detuning_start_mhz) / f.detuning_step_mhz + 1e-9).floor() as usize;
        let grid: Vec<f64> = (0..=n).map(|i| f.detuning_start_mhz + i as f64 * f.detuning_step_mhz).collect();

        let curves = self.pool.install(|| {
            f.temperatures_c
                .par_iter()
                .map(|&t_c| -> Result<Curve, CliError> {
                    let cell = CellCondition::new(t_c + 273.15, cfg.cell.length_cm)?;
                    let points = grid
                        .iter()
                        .map(|&d| Ok((d, atom.squeezing_after_cell(level_in, d, &cell)?)))
                        .collect::<Result<Vec<_>, CliError>>()?;
                    let bytes = csv("detuning_mhz,squeezing_db", points.iter().map(|&(d, s)| vec![d, s]));
                    let rec = self.out.write(&format!("fig3c_{}C.csv", fmt_num(t_c)), &bytes)?;
                    let at_400 = atom.squeezing_after_cell(level_in, -400.0, &cell)?;
                    let at_0 = atom.squeezing_after_cell(level_in, 0.0, &cell)?;
                    Ok(Curve { t_c, points, rec, at_400, at_0 })
                })
                .collect::<Result<Vec<_>, CliError>>()
        })?;

        let mut p = Products::default();
        let mut at_400 = BTreeMap::new();
        let mut at_0 = BTreeMap::new();
        let mut series = Vec::new();
        for Curve { t_c, points, rec, at_400: a, at_0: b } in curves {
            let label = format!("{}C", fmt_num(t_c));
            at_400.insert(label.clone(), a);
            at_0.insert(label.clone(), b);
            series.push(Series::new(format!("{} degC", fmt_num(t_c)), points));
            p.files.push(rec);
        }
        p.files.push(self.plot(
            "fig3c.svg",
            Plot {
                title: format!("Squeezing after the cell, {level_in:.2} dB input"),
                x_label: "detuning (MHz)".into(),
                y_label: "squeezing (dB)".into(),
                series,
            },
        )?);
        p.results.insert("input_level_db".into(), json!(level_in));
        p.results.insert("squeezing_db_at_minus_400_mhz".into(), json!(at_400));
        p.results.insert("squeezing_db_on_resonance".into(), json!(at_0));
        Ok(p)
    }

    fn fig4(&self, dataset: Dataset) -> Result<Products, CliError> {
        let cfg = self.cfg;
        let id = dataset.id();
        let entries: Vec<(String, f64)> =
            self.table.entries().into_iter().filter(|(d, _, _)| *d == dataset).map(|(_, k, s)| (k, s)).collect();
        let unit = match dataset {
            Dataset::Fig4a => "",
            Dataset::Fig4b => "MHz",
            Dataset::Fig4c => "K",
        };
        let span = cfg.fig4.b_span_pt;
        let n = cfg.fig4.points;
        let b_grid: Vec<f64> = (0..n).map(|i| -span / 2.0 + span * i as f64 / (n - 1) as f64).collect();

        let mut p = Products::default();
        let mut slopes_csv = String::from("key,slope_mrad_per_pT\n");
        let mut series = Vec::new();
        let mut slopes = BTreeMap::new();
        for (key, slope) in &entries {
            slopes_csv.push_str(&format!("{key},{}\n", sig9(*slope)));
            slopes.insert(format!("{key}{unit}"), *slope);
            let model = RotationModel::new(*slope, cfg.rotation.width_pt)?;
            let points: Vec<(f64, f64)> = b_grid.iter().map(|&b| (b, model.rotation_angle(b))).collect();
            let bytes = csv("b_pt,phi_mrad", points.iter().map(|&(b, phi)| vec![b, phi]));
            p.files.push(self.out.write(&format!("{id}_rotation_{key}{unit}.csv"), &bytes)?);
            series.push(Series::new(format!("{key} {unit}").trim_end().to_string(), points));
        }
        p.files.push(self.out.write(&format!("{id}_slopes.csv"), slopes_csv.as_bytes())?);
        p.files.push(self.plot(
            &format!("{id}.svg"),
            Plot {
                title: format!("Rotation angle vs field ({id} slopes)"),
                x_label: "B (pT)".into(),
                y_label: "rotation (mrad)".into(),
                series,
            },
        )?);
        p.results.insert("slopes_mrad_per_pt".into(), json!(slopes));
        p.results.insert("dispersion_width_pt".into(), json!(cfg.rotation.width_pt));
        Ok(p)
    }

    /// Noise scale from the config, or calibrated at the reference point.
    fn noise_scale(&self) -> Result<CalibrationRecord, CliError> {
        let cfg = self.cfg;
        let realizations = cfg.budget.realizations;
        if let Some(s) = cfg.budget.noise_scale {
            return Ok(CalibrationRecord {
                source: "configured",
                noise_scale: s,
                slope_mrad_per_pt: None,
                target_sensitivity_pt: None,
                achieved_sensitivity_pt: None,
                iterations: None,
                realizations,
            });
        }
        calibrate_reference(cfg, self.table)
    }

    fn measure(&self, rotation: &RotationModel, budget: NoiseBudget) -> Result<SensitivityResult, CliError> {
        let cfg = self.cfg;
        Ok(measure_sensitivity_averaged(
            &cfg.field_drive()?,
            rotation,
            &budget,
            &cfg.acquisition(cfg.seed),
            cfg.budget.realizations,
        )?)
    }

    /// PCS and PSS spectra at the configured operating point.
    fn probe_pair(&self, prefix: &str, p: &mut Products) -> Result<(f64, f64), CliError> {
        let cfg = self.cfg;
        let cal = self.noise_scale()?;
        let ns = cal.noise_scale;
        p.calibration = Some(cal);
        let rotation = cfg.rotation_model(self.table)?;
        let cell = cfg.cell_condition()?;
        let v2 = self.atom().variance_after_cell(self.pss_input_variance()?, cfg.probe.detuning_mhz, &cell)?;
        let budgets = [("pcs", NoiseBudget::pcs(ns)), ("pss", NoiseBudget::pss(v2, ns))];
        let runs = self.pool.install(|| {
            budgets
                .par_iter()
                .map(|(name, b)| {
                    let r = self.measure(&rotation, *b)?;
                    let bytes = spectrum_window(&r.psd, cfg.drive.f0_hz, cfg.fig5a.span_hz);
                    let rec = self.out.write(&format!("{prefix}_{name}_asd.csv"), &bytes)?;
                    Ok((r, rec))
                })
                .collect::<Result<Vec<_>, CliError>>()
        })?;
        let (pcs, pss) = (&runs[0].0, &runs[1].0);
        let mut table = String::from("probe,snr_rthz,delta_b_pt_per_rthz\n");
        for (label, r) in [("PCS", pcs), ("PSS", pss)] {
            table.push_str(&format!("{label},{},{}\n", sig9(r.snr), sig9(r.delta_b_sens)));
        }
        p.files.push(self.out.write(&format!("{prefix}_sensitivity.csv"), table.as_bytes())?);
        let f0 = cfg.drive.f0_hz;
        let half = cfg.fig5a.span_hz / 2.0;
        let window = |r: &SensitivityResult| -> Vec<(f64, f64)> {
            r.psd.points().filter(|(f, _)| (f - f0).abs() <= half).collect()
        };
        p.files.push(self.plot(
            &format!("{prefix}_spectra.svg"),
            Plot {
                title: format!("Polarimeter noise around {} Hz", fmt_num(f0)),
                x_label: "frequency (Hz)".into(),
                y_label: "ASD (mrad/sqrt(Hz))".into(),
                series: vec![
                    Series::new(format!("PCS {:.1} pT/rtHz", pcs.delta_b_sens), window(pcs)),
                    Series::new(format!("PSS {:.1} pT/rtHz", pss.delta_b_sens), window(pss)),
                ],
            },
        )?);
        p.files.extend(runs.iter().map(|(_, rec)| rec.clone()));
        p.results.insert("v2_after_cell".into(), json!(v2));
        p.results.insert("slope_mrad_per_pt".into(), json!(rotation.slope_mrad_per_pt));
        p.results.insert("pcs_snr_rthz".into(), json!(pcs.snr));
        p.results.insert("pss_snr_rthz".into(), json!(pss.snr));
        p.results.insert("pcs_delta_b_pt_per_rthz".into(), json!(pcs.delta_b_sens));
        p.results.insert("pss_delta_b_pt_per_rthz".into(), json!(pss.delta_b_sens));
        p.results.insert("enhancement_db".into(), json!(20.0 * (pcs.delta_b_sens / pss.delta_b_sens).log10()));
        p.results.insert("predicted_enhancement_db".into(), json!(-10.0 * v2.log10()));
        Ok((v2, ns))
    }

    fn fig5a(&self) -> Result<Products, CliError> {
        let mut p = Products::default();
        self.probe_pair("fig5a", &mut p)?;
        Ok(p)
    }

    fn fig5b(&self) -> Result<Products, CliError> {
        let cfg = self.cfg;
        let mut p = Products::default();
        let cal = self.noise_scale()?;
        let ns = cal.noise_scale;
        p.calibration = Some(cal);
        let cell = cfg.cell_condition()?;
        let v_in = self.pss_input_variance()?;
        let atom = self.atom();
        let detunings = cfg.fig5b_detunings(self.table);
        let mut tasks = Vec::new();
        for &d in &detunings {
            let slope = self.table.slope_lookup(Dataset::Fig4b, SlopeKey::DetuningMhz(d))?;
            let rotation = RotationModel::new(slope, cfg.rotation.width_pt)?;
            let v2 = atom.variance_after_cell(v_in, d, &cell)?;
            tasks.push((d, rotation, NoiseBudget::pcs(ns)));
            tasks.push((d, rotation, NoiseBudget::pss(v2, ns)));
        }
        let sens = self.pool.install(|| {
            tasks
                .par_iter()
                .map(|(_, rot, b)| self.measure(rot, *b).map(|r| r.delta_b_sens))
                .collect::<Result<Vec<_>, CliError>>()
        })?;
        let pcs: Vec<(f64, f64)> = detunings.iter().zip(sens.iter().step_by(2)).map(|(d, s)| (*d, *s)).collect();
        let pss: Vec<(f64, f64)> =
            detunings.iter().zip(sens.iter().skip(1).step_by(2)).map(|(d, s)| (*d, *s)).collect();
        for (name, rows) in [("pcs", &pcs), ("pss", &pss)] {
            let bytes = csv("detuning_mhz,delta_b_pt_per_rthz", rows.iter().map(|&(d, s)| vec![d, s]));
            p.files.push(self.out.write(&format!("fig5b_{name}.csv"), &bytes)?);
        }
        p.files.push(self.plot(
            "fig5b.svg",
            Plot {
                title: "Sensitivity vs detuning".into(),
                x_label: "detuning (MHz)".into(),
                y_label: "sensitivity (pT/sqrt(Hz))".into(),
                series: vec![Series::new("PCS", pcs.clone()), Series::new("PSS", pss.clone())],
            },
        )?);
        p.results.insert("detunings_mhz".into(), json!(detunings));
        p.results.insert("pcs_delta_b_pt_per_rthz".into(), json!(pcs.iter().map(|x| x.1).collect::<Vec<_>>()));
        p.results.insert("pss_delta_b_pt_per_rthz".into(), json!(pss.iter().map(|x| x.1).collect::<Vec<_>>()));
        Ok(p)
    }

    fn custom(&self) -> Result<Products, CliError> {
        let cfg = self.cfg;
        let mut p = Products::default();
        let (v2, _) = self.probe_pair("custom", &mut p)?;

        // Zero-span traces at the RF analyzer settings, in shot-noise units.
        let zs = &cfg.zero_span;
        let acq = zs.with_seed(cfg.seed);
        let budget = cfg.squeezing_budget()?;
        let cell = cfg.cell_condition()?;
        let eta = self.atom().absorption.transmission(cfg.probe.detuning_mhz, &cell);
        let excess = cfg.budget.back_action_excess;
        let v_sq = propagate_variance_through_loss(10f64.powf(budget.svs_level_db / 10.0), eta)? + excess;
        let v_anti = propagate_variance_through_loss(10f64.powf(budget.anti_level_db / 10.0), eta)? + excess;
        let sweep = zs.duration_s / zs.averages as f64;
        let snl = synthesize_noise(|_| 1.0, 1.0, &acq.with_seed(derive_seed(cfg.seed, 1000)))?;
        let scan = move |t: f64| {
            // Local-oscillator phase runs through 2 pi once per sweep.
            let theta = std::f64::consts::TAU * (t % sweep) / sweep;
            v_sq * theta.cos().powi(2) + v_anti * theta.sin().powi(2)
        };
        let traces: [(&str, VarianceProfile); 3] =
            [("pcs", Box::new(|_| 1.0)), ("pss", Box::new(move |_| v2)), ("scan", Box::new(scan))];
        let outs = self.pool.install(|| {
            traces
                .par_iter()
                .enumerate()
                .map(|(i, (name, variance))| {
                    let series =
                        synthesize_noise(variance, 1.0, &acq.with_seed(derive_seed(cfg.seed, 1001 + i as u64)))?;
                    let trace = zero_span_trace(&series, &snl, zs.center_hz, &acq)?;
                    let mut buf = Vec::new();
                    write_zero_span_csv(&mut buf, &trace).expect("writing to memory");
                    let rec = self.out.write(&format!("custom_zero_span_{name}.csv"), &buf)?;
                    Ok((*name, trace, rec))
                })
                .collect::<Result<Vec<_>, CliError>>()
        })?;
        let mut series = Vec::new();
        for (name, trace, rec) in outs {
            p.results.insert(format!("zero_span_{name}_mean_db"), json!(trace.mean_db()));
            if name == "scan" {
                let lo = trace.power_db.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = trace.power_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                p.results.insert("zero_span_scan_min_db".into(), json!(lo));
                p.results.insert("zero_span_scan_max_db".into(), json!(hi));
            }
            series.push(Series::new(
                name.to_uppercase(),
                trace.times_s.iter().cloned().zip(trace.power_db.iter().cloned()).collect(),
            ));
            p.files.push(rec);
        }
        p.files.push(self.plot(
            "custom_zero_span.svg",
            Plot {
                title: format!("Zero span at {} Hz", fmt_num(zs.center_hz)),
                x_label: "time (s)".into(),
                y_label: "noise power re SNL (dB)".into(),
                series,
            },
        )?);
        p.results.insert("transition".into(), json!(cfg.probe.transition.label()));
        Ok(p)
    }
}

/// Fit the noise scale at the configured reference point.
pub fn calibrate_reference(cfg: &ScenarioConfig, table: &SlopeTable) -> Result<CalibrationRecord, CliError> {
    let rotation = cfg.calibration_rotation(table)?;
    let mut op = OperatingPoint::new(cfg.field_drive()?, rotation, cfg.acquisition(cfg.seed));
    op.realizations = cfg.budget.realizations;
    let target = cfg.calibration.reference_sensitivity_pt;
    let cal = calibrate(target, &op)?;
    Ok(CalibrationRecord {
        source: "calibrated",
        noise_scale: cal.noise_scale,
        slope_mrad_per_pt: Some(rotation.slope_mrad_per_pt),
        target_sensitivity_pt: Some(target),
        achieved_sensitivity_pt: Some(cal.achieved_sensitivity),
        iterations: Some(cal.iterations),
        realizations: op.realizations,
    })
}
