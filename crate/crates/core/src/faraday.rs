//! Magnetically induced rotation angle: empirical near-zero slopes and a
//! dispersion-shaped response curve.
//!
//! The three calibration datasets (per transition, per detuning, per cell
//! temperature) were taken under different conditions and disagree at their
//! shared operating point, so they are kept apart and a caller always names
//! the one it uses.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::atom::Transition;
use crate::error::{ensure_finite, Error, Result};

/// Slope table shipped with the crate.
pub const EMBEDDED_SLOPE_TABLE: &str = include_str!("../data/slopes.csv");

pub const DEFAULT_DISPERSION_WIDTH_PT: f64 = 3000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    /// Slope per hyperfine transition, on resonance.
    Fig4a,
    /// Slope vs detuning from Fg=2 -> Fe=1.
    Fig4b,
    /// Slope vs cell temperature.
    Fig4c,
}

impl Dataset {
    pub fn id(self) -> &'static str {
        match self {
            Dataset::Fig4a => "fig4a",
            Dataset::Fig4b => "fig4b",
            Dataset::Fig4c => "fig4c",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fig4a" => Ok(Dataset::Fig4a),
            "fig4b" => Ok(Dataset::Fig4b),
            "fig4c" => Ok(Dataset::Fig4c),
            other => Err(Error::InvalidArgument(format!("unknown dataset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlopeKey {
    Transition(Transition),
    DetuningMhz(f64),
    TemperatureK(f64),
}

#[derive(Debug, Deserialize)]
struct Row {
    dataset_id: String,
    key: String,
    #[serde(rename = "slope_mrad_per_pT")]
    slope: f64,
}

/// Rotation slopes in mrad/pT, keyed per dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeTable {
    transitions: Vec<(Transition, f64)>,
    detunings: Vec<(f64, f64)>,
    temperatures: Vec<(f64, f64)>,
}

impl SlopeTable {
    pub fn embedded() -> Self {
        Self::from_csv(EMBEDDED_SLOPE_TABLE.as_bytes()).expect("embedded slope table is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file =
            std::fs::File::open(path).map_err(|e| Error::Table(format!("cannot open {}: {e}", path.display())))?;
        Self::from_csv(file)
    }

    /// Parse `dataset_id,key,slope_mrad_per_pT` rows; `#` starts a comment line.
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let mut table = SlopeTable { transitions: Vec::new(), detunings: Vec::new(), temperatures: Vec::new() };
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Table(format!("row {}: {e}", i + 1)))?;
            if !row.slope.is_finite() {
                return Err(Error::Table(format!("row {}: slope is not finite", i + 1)));
            }
            let numeric = |k: &str| {
                k.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Table(format!("row {}: bad numeric key '{k}'", i + 1)))
            };
            match row.dataset_id.parse::<Dataset>().map_err(|e| Error::Table(e.to_string()))? {
                Dataset::Fig4a => {
                    let t = row.key.parse::<Transition>().map_err(|e| Error::Table(e.to_string()))?;
                    table.transitions.push((t, row.slope));
                }
                Dataset::Fig4b => table.detunings.push((numeric(&row.key)?, row.slope)),
                Dataset::Fig4c => table.temperatures.push((numeric(&row.key)?, row.slope)),
            }
        }
        table.detunings.sort_by(|a, b| a.0.total_cmp(&b.0));
        table.temperatures.sort_by(|a, b| a.0.total_cmp(&b.0));
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        for t in Transition::ALL {
            match self.transitions.iter().filter(|(k, _)| *k == t).count() {
                1 => {}
                0 => return Err(Error::Table(format!("fig4a is missing {}", t.label()))),
                _ => return Err(Error::Table(format!("fig4a has duplicate {}", t.label()))),
            }
        }
        for (name, grid) in [("fig4b", &self.detunings), ("fig4c", &self.temperatures)] {
            if grid.len() < 2 {
                return Err(Error::Table(format!("{name} needs at least two entries")));
            }
            if grid.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Table(format!("{name} has duplicate keys")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.transitions.len() + self.detunings.len() + self.temperatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries as `(dataset, key label, slope)` in table order.
    pub fn entries(&self) -> Vec<(Dataset, String, f64)> {
        let mut out: Vec<_> =
            self.transitions.iter().map(|(t, s)| (Dataset::Fig4a, t.label().to_string(), *s)).collect();
        out.extend(self.detunings.iter().rev().map(|(k, s)| (Dataset::Fig4b, format!("{k}"), *s)));
        out.extend(self.temperatures.iter().map(|(k, s)| (Dataset::Fig4c, format!("{k}"), *s)));
        out
    }

    pub fn detuning_range(&self) -> (f64, f64) {
        (self.detunings[0].0, self.detunings[self.detunings.len() - 1].0)
    }

    pub fn temperature_range(&self) -> (f64, f64) {
        (self.temperatures[0].0, self.temperatures[self.temperatures.len() - 1].0)
    }

    pub fn detuning_keys(&self) -> Vec<f64> {
        self.detunings.iter().map(|(k, _)| *k).collect()
    }

    pub fn temperature_keys(&self) -> Vec<f64> {
        self.temperatures.iter().map(|(k, _)| *k).collect()
    }

    /// Slope in mrad/pT. Exact on table keys, linear between them, and an
    /// error outside the tabulated range.
    pub fn slope_lookup(&self, dataset: Dataset, key: SlopeKey) -> Result<f64> {
        match (dataset, key) {
            (Dataset::Fig4a, SlopeKey::Transition(t)) => self
                .transitions
                .iter()
                .find(|(k, _)| *k == t)
                .map(|(_, s)| *s)
                .ok_or_else(|| Error::Range(format!("no fig4a entry for {}", t.label()))),
            (Dataset::Fig4b, SlopeKey::DetuningMhz(d)) => interpolate(&self.detunings, d, "fig4b"),
            (Dataset::Fig4c, SlopeKey::TemperatureK(t)) => interpolate(&self.temperatures, t, "fig4c"),
            (ds, key) => Err(Error::InvalidArgument(format!("key {key:?} does not index {ds}"))),
        }
    }
}

impl Default for SlopeTable {
    fn default() -> Self {
        Self::embedded()
    }
}

fn interpolate(grid: &[(f64, f64)], x: f64, name: &str) -> Result<f64> {
    ensure_finite("lookup key", x)?;
    let (lo, hi) = (grid[0].0, grid[grid.len() - 1].0);
    if x < lo || x > hi {
        return Err(Error::Range(format!("{name} key {x} outside [{lo}, {hi}]")));
    }
    if let Some((_, s)) = grid.iter().find(|(k, _)| *k == x) {
        return Ok(*s);
    }
    let i = grid.partition_point(|(k, _)| *k < x);
    let ((x0, y0), (x1, y1)) = (grid[i - 1], grid[i]);
    let t = (x - x0) / (x1 - x0);
    Ok(y0 + t * (y1 - y0))
}

/// Near-zero slope plus dispersion half-width of the rotation curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationModel {
    pub slope_mrad_per_pt: f64,
    pub width_pt: f64,
    pub dataset: Option<Dataset>,
}

impl RotationModel {
    pub fn new(slope_mrad_per_pt: f64, width_pt: f64) -> Result<Self> {
        let m = Self { slope_mrad_per_pt, width_pt, dataset: None };
        m.validate()?;
        Ok(m)
    }

    pub fn from_table(table: &SlopeTable, dataset: Dataset, key: SlopeKey, width_pt: f64) -> Result<Self> {
        let slope = table.slope_lookup(dataset, key)?;
        Ok(Self { dataset: Some(dataset), ..Self::new(slope, width_pt)? })
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("slope", self.slope_mrad_per_pt)?;
        ensure_finite("dispersion width", self.width_pt)?;
        if self.width_pt <= 0.0 {
            return Err(Error::Domain(format!("dispersion width must be positive, got {}", self.width_pt)));
        }
        Ok(())
    }

    /// Rotation angle in mrad at field `b_pt`.
    pub fn rotation_angle(&self, b_pt: f64) -> f64 {
        let x = b_pt / self.width_pt;
        self.slope_mrad_per_pt * b_pt / (1.0 + x * x)
    }

    /// d(phi)/dB in mrad/pT at field `b_pt`.
    pub fn local_slope(&self, b_pt: f64) -> f64 {
        let x2 = (b_pt / self.width_pt).powi(2);
        self.slope_mrad_per_pt * (1.0 - x2) / (1.0 + x2).powi(2)
    }

    /// Largest |phi|, reached at |B| = width.
    pub fn peak_angle(&self) -> f64 {
        self.slope_mrad_per_pt.abs() * self.width_pt / 2.0
    }
}

pub fn rotation_angle(b_pt: f64, model: &RotationModel) -> f64 {
    model.rotation_angle(b_pt)
}

/// Rotation-angle variance (rad^2) produced by field noise of rms `sigma_b_pt`.
pub fn angle_variance_from_field_noise(sigma_b_pt: f64, model: &RotationModel) -> Result<f64> {
    ensure_finite("sigma_b", sigma_b_pt)?;
    if sigma_b_pt < 0.0 {
        return Err(Error::Domain(format!("sigma_b must be non-negative, got {sigma_b_pt}")));
    }
    let sigma_rad = model.slope_mrad_per_pt * sigma_b_pt * 1e-3;
    Ok(sigma_rad * sigma_rad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn embedded_table_values() {
        let t = SlopeTable::embedded();
        assert_eq!(t.len(), 12);
        let tr = |x| t.slope_lookup(Dataset::Fig4a, SlopeKey::Transition(x)).unwrap();
        assert_eq!(tr(Transition::Fg2Fe1), -0.151);
        assert_eq!(tr(Transition::Fg2Fe2), -0.062);
        assert_eq!(tr(Transition::Fg1Fe2), 0.005);
        assert_eq!(tr(Transition::Fg1Fe1), 0.028);
        assert_eq!(t.slope_lookup(Dataset::Fig4b, SlopeKey::DetuningMhz(-400.0)).unwrap(), -0.038);
        assert_eq!(t.slope_lookup(Dataset::Fig4c, SlopeKey::TemperatureK(333.0)).unwrap(), -0.398);
        let mid = t.slope_lookup(Dataset::Fig4b, SlopeKey::DetuningMhz(-250.0)).unwrap();
        assert!((mid - -0.0635).abs() < 1e-15);
    }

    #[test]
    fn sign_convention_follows_ground_level() {
        let t = SlopeTable::embedded();
        for tr in Transition::ALL {
            let s = t.slope_lookup(Dataset::Fig4a, SlopeKey::Transition(tr)).unwrap();
            match tr.ground_level() {
                2 => assert!(s < 0.0),
                _ => assert!(s > 0.0),
            }
        }
    }

    #[test]
    fn lookup_errors() {
        let t = SlopeTable::embedded();
        assert!(matches!(t.slope_lookup(Dataset::Fig4b, SlopeKey::DetuningMhz(-450.0)), Err(Error::Range(_))));
        assert!(matches!(t.slope_lookup(Dataset::Fig4b, SlopeKey::DetuningMhz(0.0)), Err(Error::Range(_))));
        assert!(matches!(t.slope_lookup(Dataset::Fig4c, SlopeKey::TemperatureK(340.0)), Err(Error::Range(_))));
        assert!(t.slope_lookup(Dataset::Fig4a, SlopeKey::DetuningMhz(-100.0)).is_err());
    }

    #[test]
    fn table_parsing_errors() {
        assert!(SlopeTable::from_csv("dataset_id,key,slope_mrad_per_pT\nfig4a,Fg2-Fe1,-0.1\n".as_bytes()).is_err());
        let dup = EMBEDDED_SLOPE_TABLE.to_string() + "fig4b,-100,-0.2\n";
        assert!(SlopeTable::from_csv(dup.as_bytes()).is_err());
        let bad = EMBEDDED_SLOPE_TABLE.to_string() + "fig9,1,1\n";
        assert!(SlopeTable::from_csv(bad.as_bytes()).is_err());
        let extra = EMBEDDED_SLOPE_TABLE.to_string() + "fig4b,-500,-0.02\n";
        let t = SlopeTable::from_csv(extra.as_bytes()).unwrap();
        assert_eq!(t.detuning_range(), (-500.0, -100.0));
    }

    #[test]
    fn rotation_examples() {
        let m = RotationModel::new(-0.151, 3000.0).unwrap();
        assert_eq!(rotation_angle(0.0, &m), 0.0);
        let phi = rotation_angle(10.0, &m);
        assert!((phi / -1.51 - 1.0).abs() < 1e-4, "{phi}");
        // Central finite difference as the slope oracle.
        let h = 0.01;
        let fd = (rotation_angle(h, &m) - rotation_angle(-h, &m)) / (2.0 * h);
        assert!((fd / m.slope_mrad_per_pt - 1.0).abs() < 1e-6);
        assert!(RotationModel::new(-0.1, 0.0).is_err());
        assert!(RotationModel::new(f64::NAN, 10.0).is_err());
    }

    #[test]
    fn angle_variance_examples() {
        let m = RotationModel::new(-0.151, 3000.0).unwrap();
        assert_eq!(angle_variance_from_field_noise(0.0, &m).unwrap(), 0.0);
        assert!((angle_variance_from_field_noise(1.0, &m).unwrap() - 2.2801e-8).abs() < 1e-20);
        let m = RotationModel::new(-0.038, 3000.0).unwrap();
        assert!((angle_variance_from_field_noise(10.0, &m).unwrap() - 1.444e-7).abs() < 1e-19);
        assert!(angle_variance_from_field_noise(-1.0, &m).is_err());
    }

    proptest! {
        #[test]
        fn odd_and_bounded(slope in -0.5f64..0.5, w in 10.0f64..10000.0, b in -20000.0f64..20000.0) {
            let m = RotationModel::new(slope, w).unwrap();
            prop_assert_eq!(m.rotation_angle(-b), -m.rotation_angle(b));
            prop_assert!(m.rotation_angle(b).abs() <= m.peak_angle() * (1.0 + 1e-12));
        }

        #[test]
        fn zero_field_slope_independent_of_width(slope in -0.5f64..0.5, w in 100.0f64..10000.0) {
            prop_assume!(slope.abs() > 1e-4);
            let m = RotationModel::new(slope, w).unwrap();
            let h = 0.01;
            let fd = (m.rotation_angle(h) - m.rotation_angle(-h)) / (2.0 * h);
            prop_assert!((fd / slope - 1.0).abs() < 1e-6);
            prop_assert_eq!(m.local_slope(0.0), slope);
        }

        #[test]
        fn interpolation_stays_between_neighbours(d in -400.0f64..-100.0, t in 303.0f64..333.0) {
            let tab = SlopeTable::embedded();
            for (grid, key, ds) in [
                (tab.detunings.clone(), SlopeKey::DetuningMhz(d), Dataset::Fig4b),
                (tab.temperatures.clone(), SlopeKey::TemperatureK(t), Dataset::Fig4c),
            ] {
                let x = match key { SlopeKey::DetuningMhz(v) | SlopeKey::TemperatureK(v) => v, _ => unreachable!() };
                let s = tab.slope_lookup(ds, key).unwrap();
                let i = grid.partition_point(|(k, _)| *k < x).max(1);
                let (a, b) = (grid[i - 1].1, grid[i].1);
                prop_assert!(s >= a.min(b) - 1e-15 && s <= a.max(b) + 1e-15);
            }
        }
    }
}
