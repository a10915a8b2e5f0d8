//! Scenario configuration.
//!
//! A config file is TOML. Every section is optional and any key left out takes
//! the model default, but unknown keys are rejected. `--set a.b=v` overrides
//! are applied to the parsed document before it is checked, so they are
//! subject to the same rules.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use qmagsim_core::atom::DEFAULT_CELL_LENGTH_CM;
use qmagsim_core::calibration::DEFAULT_REALIZATIONS;
use qmagsim_core::faraday::{SlopeKey, DEFAULT_DISPERSION_WIDTH_PT};
use qmagsim_core::{
    AcquisitionConfig, CellCondition, Dataset, FieldDrive, ProbeConfig, RotationModel, SlopeTable, SqueezingBudget,
    Transition,
};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Fig3c,
    Fig4a,
    Fig4b,
    Fig4c,
    Fig5a,
    Fig5b,
    Custom,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Fig3c,
        Scenario::Fig4a,
        Scenario::Fig4b,
        Scenario::Fig4c,
        Scenario::Fig5a,
        Scenario::Fig5b,
        Scenario::Custom,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::Fig3c => "fig3c",
            Scenario::Fig4a => "fig4a",
            Scenario::Fig4b => "fig4b",
            Scenario::Fig4c => "fig4c",
            Scenario::Fig5a => "fig5a",
            Scenario::Fig5b => "fig5b",
            Scenario::Custom => "custom",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::Fig3c => "squeezing after the cell vs detuning, one curve per temperature",
            Scenario::Fig4a => "rotation slope and rotation curve per hyperfine transition",
            Scenario::Fig4b => "rotation slope and rotation curve per detuning",
            Scenario::Fig4c => "rotation slope and rotation curve per cell temperature",
            Scenario::Fig5a => "calibrated PCS and PSS spectra at the operating point",
            Scenario::Fig5b => "PCS and PSS sensitivity vs detuning",
            Scenario::Custom => "spectra, sensitivities and zero-span traces at one operating point",
        }
    }

    /// Sections that must appear in the config file.
    pub fn required_sections(self) -> &'static [&'static str] {
        match self {
            Scenario::Fig5a | Scenario::Fig5b => &["drive", "calibration"],
            Scenario::Custom => &["probe", "cell", "drive"],
            _ => &[],
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scenario {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.id() == s)
            .ok_or_else(|| CliError::Config(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    pub transition: Transition,
    pub detuning_mhz: f64,
    pub power_mw: f64,
    pub beam_diameter_mm: f64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        let p = ProbeConfig::default();
        Self {
            transition: p.transition,
            detuning_mhz: p.detuning_mhz,
            power_mw: p.power_mw,
            beam_diameter_mm: p.beam_diameter_mm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSettings {
    pub temperature_k: f64,
    pub length_cm: f64,
}

impl Default for CellSettings {
    fn default() -> Self {
        Self { temperature_k: CellCondition::default().temperature_k(), length_cm: DEFAULT_CELL_LENGTH_CM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveSettings {
    pub b_dc_pt: f64,
    pub b_ac_amplitude_pt: f64,
    pub f0_hz: f64,
}

impl Default for DriveSettings {
    fn default() -> Self {
        let d = FieldDrive::default();
        Self { b_dc_pt: d.b_dc_pt, b_ac_amplitude_pt: d.b_ac_amplitude_pt, f0_hz: d.f0_hz }
    }
}

/// FFT-analyzer settings for spectra and sensitivities. The seed is set per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcqSettings {
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub rbw_hz: f64,
    pub vbw_hz: f64,
    pub averages: u32,
}

impl Default for AcqSettings {
    fn default() -> Self {
        let a = AcquisitionConfig::fft_analyzer();
        Self {
            sample_rate_hz: a.sample_rate_hz,
            duration_s: a.duration_s,
            rbw_hz: a.rbw_hz,
            vbw_hz: a.vbw_hz,
            averages: a.averages,
        }
    }
}

impl AcqSettings {
    pub fn with_seed(&self, seed: u64) -> AcquisitionConfig {
        AcquisitionConfig {
            sample_rate_hz: self.sample_rate_hz,
            duration_s: self.duration_s,
            rbw_hz: self.rbw_hz,
            vbw_hz: self.vbw_hz,
            averages: self.averages,
            seed,
        }
    }
}

/// RF-analyzer settings for zero-span traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZeroSpanSettings {
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub rbw_hz: f64,
    pub vbw_hz: f64,
    pub averages: u32,
    pub center_hz: f64,
}

impl Default for ZeroSpanSettings {
    fn default() -> Self {
        let a = AcquisitionConfig::default();
        Self {
            sample_rate_hz: a.sample_rate_hz,
            duration_s: a.duration_s,
            rbw_hz: a.rbw_hz,
            vbw_hz: a.vbw_hz,
            averages: a.averages,
            center_hz: 50_000.0,
        }
    }
}

impl ZeroSpanSettings {
    pub fn with_seed(&self, seed: u64) -> AcquisitionConfig {
        AcquisitionConfig {
            sample_rate_hz: self.sample_rate_hz,
            duration_s: self.duration_s,
            rbw_hz: self.rbw_hz,
            vbw_hz: self.vbw_hz,
            averages: self.averages,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationSettings {
    pub dataset: Dataset,
    pub width_pt: f64,
    /// Replaces the table slope when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_mrad_per_pt: Option<f64>,
}

impl Default for RotationSettings {
    fn default() -> Self {
        Self { dataset: Dataset::Fig4b, width_pt: DEFAULT_DISPERSION_WIDTH_PT, slope_mrad_per_pt: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSettings {
    pub svs_level_db: f64,
    pub anti_level_db: f64,
    pub lock_phase_rms: f64,
    pub back_action_excess: f64,
    /// Skips calibration when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<f64>,
    pub realizations: u32,
}

impl Default for BudgetSettings {
    fn default() -> Self {
        let b = SqueezingBudget::default();
        Self {
            svs_level_db: b.svs_level_db,
            anti_level_db: b.anti_level_db,
            lock_phase_rms: b.lock_phase_rms,
            back_action_excess: 0.0,
            noise_scale: None,
            realizations: DEFAULT_REALIZATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    pub reference_sensitivity_pt: f64,
    /// Detuning whose detuning-table slope the reference was taken at.
    pub detuning_mhz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_mrad_per_pt: Option<f64>,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self { reference_sensitivity_pt: 28.3, detuning_mhz: -400.0, slope_mrad_per_pt: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig3cSettings {
    pub temperatures_c: Vec<f64>,
    pub detuning_start_mhz: f64,
    pub detuning_stop_mhz: f64,
    pub detuning_step_mhz: f64,
}

impl Default for Fig3cSettings {
    fn default() -> Self {
        Self {
            temperatures_c: vec![40.0, 50.0, 60.0],
            detuning_start_mhz: -1500.0,
            detuning_stop_mhz: 1500.0,
            detuning_step_mhz: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig4Settings {
    pub b_span_pt: f64,
    pub points: usize,
}

impl Default for Fig4Settings {
    fn default() -> Self {
        Self { b_span_pt: 12_000.0, points: 241 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig5aSettings {
    /// Width of the exported spectrum window around the drive frequency.
    pub span_hz: f64,
}

impl Default for Fig5aSettings {
    fn default() -> Self {
        Self { span_hz: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig5bSettings {
    /// Empty means every detuning in the slope table.
    pub detunings_mhz: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Option<Scenario>,
    pub seed: u64,
    pub probe: ProbeSettings,
    pub cell: CellSettings,
    pub drive: DriveSettings,
    pub acq: AcqSettings,
    pub rotation: RotationSettings,
    pub budget: BudgetSettings,
    pub calibration: CalibrationSettings,
    pub fig3c: Fig3cSettings,
    pub fig4: Fig4Settings,
    pub fig5a: Fig5aSettings,
    pub fig5b: Fig5bSettings,
    pub zero_span: ZeroSpanSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            seed: 42,
            probe: ProbeSettings::default(),
            cell: CellSettings::default(),
            drive: DriveSettings::default(),
            acq: AcqSettings::default(),
            rotation: RotationSettings::default(),
            budget: BudgetSettings::default(),
            calibration: CalibrationSettings::default(),
            fig3c: Fig3cSettings::default(),
            fig4: Fig4Settings::default(),
            fig5a: Fig5aSettings::default(),
            fig5b: Fig5bSettings::default(),
            zero_span: ZeroSpanSettings::default(),
        }
    }
}

/// Parse a `--set` value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Apply one `dotted.key=value` override to a TOML document.
pub fn apply_override(doc: &mut Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let (last, parents) = path.split_last().expect("split yields at least one element");
    let mut table = doc;
    for p in parents {
        let entry = table.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    table.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Inputs a run is assembled from besides the file itself.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<Scenario>,
    /// Used when neither the file nor `scenario` names one.
    pub fallback_scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub set: Vec<String>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str, overrides: &Overrides) -> Result<Self, CliError> {
        let mut doc: Table =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config is not valid TOML: {}", e.message())))?;
        for s in &overrides.set {
            apply_override(&mut doc, s)?;
        }
        if let Some(seed) = overrides.seed {
            let seed = i64::try_from(seed).map_err(|_| CliError::Config(format!("seed {seed} is too large")))?;
            doc.insert("seed".into(), Value::Integer(seed));
        }
        let mut cfg: ScenarioConfig =
            ScenarioConfig::deserialize(doc.clone()).map_err(|e| CliError::Config(e.message().to_string()))?;
        match (cfg.scenario, overrides.scenario) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::Config(format!("config is for scenario `{a}`, not `{b}`")));
            }
            (_, Some(b)) => cfg.scenario = Some(b),
            (Some(_), None) => {}
            (None, None) => match overrides.fallback_scenario {
                Some(f) => cfg.scenario = Some(f),
                None => return Err(CliError::Config("no scenario given".into())),
            },
        }
        let scenario = cfg.scenario();
        for section in scenario.required_sections() {
            if !doc.contains_key(*section) {
                return Err(CliError::Config(format!("scenario `{scenario}` requires a [{section}] section")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario.expect("scenario is resolved when the config is loaded")
    }

    /// Canonical TOML of the resolved config; hashed into the manifest.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate(&self) -> Result<(), CliError> {
        let model = |e: qmagsim_core::Error| CliError::Config(e.to_string());
        self.probe_config().map_err(model)?;
        self.cell_condition().map_err(model)?;
        self.field_drive().map_err(model)?;
        self.squeezing_budget().map_err(model)?;
        let acq = self.acquisition(self.seed);
        acq.validate_for(self.drive.f0_hz).map_err(model)?;
        let zs = self.zero_span.with_seed(self.seed);
        zs.validate_for(self.zero_span.center_hz).map_err(model)?;
        if self.budget.realizations == 0 {
            return Err(CliError::Config("budget.realizations must be at least 1".into()));
        }
        if let Some(s) = self.budget.noise_scale {
            if !(s > 0.0) || !s.is_finite() {
                return Err(CliError::Config(format!("budget.noise_scale must be positive, got {s}")));
            }
        }
        if !(self.calibration.reference_sensitivity_pt > 0.0) {
            return Err(CliError::Config("calibration.reference_sensitivity_pt must be positive".into()));
        }
        if !(self.rotation.width_pt > 0.0) {
            return Err(CliError::Config("rotation.width_pt must be positive".into()));
        }
        let f = &self.fig3c;
        if f.temperatures_c.is_empty()
            || !(f.detuning_step_mhz > 0.0)
            || !(f.detuning_stop_mhz >= f.detuning_start_mhz)
            || (f.detuning_stop_mhz - f.detuning_start_mhz) / f.detuning_step_mhz > 1e6
        {
            return Err(CliError::Config("fig3c needs temperatures and an increasing detuning grid".into()));
        }
        if self.fig4.points < 2 || !(self.fig4.b_span_pt > 0.0) {
            return Err(CliError::Config("fig4 needs at least 2 points over a positive span".into()));
        }
        if !(self.fig5a.span_hz > 0.0) {
            return Err(CliError::Config("fig5a.span_hz must be positive".into()));
        }
        Ok(())
    }

    pub fn probe_config(&self) -> qmagsim_core::Result<ProbeConfig> {
        let p = ProbeConfig {
            transition: self.probe.transition,
            detuning_mhz: self.probe.detuning_mhz,
            power_mw: self.probe.power_mw,
            beam_diameter_mm: self.probe.beam_diameter_mm,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn cell_condition(&self) -> qmagsim_core::Result<CellCondition> {
        CellCondition::new(self.cell.temperature_k, self.cell.length_cm)
    }

    pub fn field_drive(&self) -> qmagsim_core::Result<FieldDrive> {
        let d = FieldDrive {
            b_dc_pt: self.drive.b_dc_pt,
            b_ac_amplitude_pt: self.drive.b_ac_amplitude_pt,
            f0_hz: self.drive.f0_hz,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn squeezing_budget(&self) -> qmagsim_core::Result<SqueezingBudget> {
        SqueezingBudget::new(self.budget.svs_level_db, self.budget.anti_level_db, self.budget.lock_phase_rms)
    }

    pub fn acquisition(&self, seed: u64) -> AcquisitionConfig {
        self.acq.with_seed(seed)
    }

    /// Rotation curve at the configured probe and cell.
    pub fn rotation_model(&self, table: &SlopeTable) -> qmagsim_core::Result<RotationModel> {
        let slope = match self.rotation.slope_mrad_per_pt {
            Some(s) => s,
            None => {
                let key = match self.rotation.dataset {
                    Dataset::Fig4a => SlopeKey::Transition(self.probe.transition),
                    Dataset::Fig4b => SlopeKey::DetuningMhz(self.probe.detuning_mhz),
                    Dataset::Fig4c => SlopeKey::TemperatureK(self.cell.temperature_k),
                };
                table.slope_lookup(self.rotation.dataset, key)?
            }
        };
        RotationModel::new(slope, self.rotation.width_pt)
    }

    /// Rotation curve at the calibration reference point.
    pub fn calibration_rotation(&self, table: &SlopeTable) -> qmagsim_core::Result<RotationModel> {
        let slope = match self.calibration.slope_mrad_per_pt {
            Some(s) => s,
            None => table.slope_lookup(Dataset::Fig4b, SlopeKey::DetuningMhz(self.calibration.detuning_mhz))?,
        };
        RotationModel::new(slope, self.rotation.width_pt)
    }

    /// Detunings swept by fig5b, in the configured order.
    pub fn fig5b_detunings(&self, table: &SlopeTable) -> Vec<f64> {
        if self.fig5b.detunings_mhz.is_empty() {
            let mut keys = table.detuning_keys();
            keys.sort_by(|a, b| b.total_cmp(a));
            keys
        } else {
            self.fig5b.detunings_mhz.clone()
        }
    }
}
