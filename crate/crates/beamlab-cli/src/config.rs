//! Declarative experiment configurations (JSON) and their validation.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::RunError;

fn default_spacing() -> f64 {
    0.5
}

/// Planar array description; spacing is relative to the carrier wavelength.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "default_spacing")]
    pub spacing_over_lambda: f64,
}

/// Carrier selection: a default, optional per-table overrides, and an
/// optional reference carrier that pins the propagation-loss magnitude so
/// cross-carrier comparisons are fair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Carriers {
    pub default_hz: f64,
    #[serde(default)]
    pub per_table: BTreeMap<String, f64>,
    #[serde(default)]
    pub fair_reference_hz: Option<f64>,
}

impl Carriers {
    pub fn for_table(&self, table: &str) -> f64 {
        self.per_table.get(table).copied().unwrap_or(self.default_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamName {
    Steering,
    DerivativeRho,
    DerivativeTheta,
    DerivativePhi,
}

impl BeamName {
    pub fn as_str(&self) -> &'static str {
        match self {
            BeamName::Steering => "steering",
            BeamName::DerivativeRho => "derivative_rho",
            BeamName::DerivativeTheta => "derivative_theta",
            BeamName::DerivativePhi => "derivative_phi",
        }
    }
}

/// Slice sample counts; angles use that many interior points of `(0, pi)`,
/// ranges span half to one-and-a-half times the target range.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub theta: usize,
    pub phi: usize,
    pub rho: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { theta: 181, phi: 181, rho: 101 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleUpdateName {
    Joint,
    SummedPerSlice,
}

/// Projected-gradient solver knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthOpts {
    pub beta: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub scale_update: ScaleUpdateName,
    pub polish_sweeps: usize,
}

impl Default for SynthOpts {
    fn default() -> Self {
        Self {
            beta: 0.5,
            max_iters: 200,
            tol: 1e-6,
            scale_update: ScaleUpdateName::Joint,
            polish_sweeps: 0,
        }
    }
}

/// Which artifacts a beam-fidelity run writes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitSpec {
    #[serde(default)]
    pub slices_1d: bool,
    #[serde(default)]
    pub grid_2d: bool,
    #[serde(default)]
    pub metrics: bool,
}

/// Beam-fidelity experiment: synthesize desired beams under each table and
/// export pattern slices, 2-D maps and lobe metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub p_tx: [f64; 3],
    pub p_des: [f64; 3],
    pub array: ArraySpec,
    pub carriers: Carriers,
    pub tables: Vec<String>,
    pub beams: Vec<BeamName>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub synthesis: SynthOpts,
    pub emit: EmitSpec,
    pub output_dir: String,
    #[serde(default)]
    pub threads: Option<usize>,
}

/// Narrowband signal parameters in link-budget units.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub bandwidth_hz: f64,
    pub tx_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub num_transmissions: usize,
}

/// UE placement rule swept by a PEB run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepSpec {
    /// UE at `[-r, r, r]` for each listed `r` in meters.
    Distance { values: Vec<f64> },
    /// UE at fixed range and polar angle, azimuth swept (radians).
    Azimuth { rho_m: f64, phi_rad: f64, values: Vec<f64> },
    /// UE at fixed range and azimuth, polar angle swept (radians).
    Elevation { rho_m: f64, theta_rad: f64, values: Vec<f64> },
}

impl SweepSpec {
    pub fn values(&self) -> &[f64] {
        match self {
            SweepSpec::Distance { values }
            | SweepSpec::Azimuth { values, .. }
            | SweepSpec::Elevation { values, .. } => values,
        }
    }

    pub fn axis_name(&self) -> &'static str {
        match self {
            SweepSpec::Distance { .. } => "distance",
            SweepSpec::Azimuth { .. } => "azimuth",
            SweepSpec::Elevation { .. } => "elevation",
        }
    }
}

/// One family of PEB curves: a profile design evaluated per table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignEntry {
    Optimal {
        tables: Vec<String>,
        /// Re-run the power allocation on the projected-beam information
        /// matrices instead of keeping the unconstrained allocation.
        #[serde(default)]
        reoptimize_after_projection: bool,
    },
    Random {
        tables: Vec<String>,
        mc_trials: usize,
    },
    Directional {
        tables: Vec<String>,
        sphere_radius_m: f64,
        mc_trials: usize,
        /// Draw one aim point per trial instead of one per transmission.
        #[serde(default)]
        shared_draw: bool,
    },
}

impl DesignEntry {
    pub fn tables(&self) -> &[String] {
        match self {
            DesignEntry::Optimal { tables, .. }
            | DesignEntry::Random { tables, .. }
            | DesignEntry::Directional { tables, .. } => tables,
        }
    }

    /// Label used in output file names.
    pub fn label(&self) -> String {
        match self {
            DesignEntry::Optimal { .. } => "optimal".into(),
            DesignEntry::Random { .. } => "random".into(),
            DesignEntry::Directional { sphere_radius_m, .. } => {
                format!("directional_{sphere_radius_m}m")
            }
        }
    }
}

/// PEB sweep experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PebConfig {
    pub seed: u64,
    pub p_tx: [f64; 3],
    pub array: ArraySpec,
    pub signal: SignalSpec,
    pub carriers: Carriers,
    pub sweep: SweepSpec,
    pub designs: Vec<DesignEntry>,
    pub output_dir: String,
    #[serde(default)]
    pub threads: Option<usize>,
}

pub const BUILTIN_TABLE_NAMES: [&str; 4] = ["unconstrained", "k1", "k2", "v"];

fn check_point(field: &str, p: &[f64; 3], errors: &mut Vec<String>) {
    if p.iter().any(|v| !v.is_finite()) {
        errors.push(format!("{field}: components must be finite"));
    }
}

fn check_array(field: &str, a: &ArraySpec, errors: &mut Vec<String>) {
    if a.rows == 0 || a.cols == 0 {
        errors.push(format!("{field}.rows/cols: must be positive"));
    }
    if !(a.spacing_over_lambda > 0.0) {
        errors.push(format!("{field}.spacing_over_lambda: must be positive"));
    }
}

fn check_carriers(field: &str, c: &Carriers, errors: &mut Vec<String>) {
    if !(c.default_hz > 0.0) {
        errors.push(format!("{field}.default_hz: must be positive"));
    }
    for (name, hz) in &c.per_table {
        if !(*hz > 0.0) {
            errors.push(format!("{field}.per_table.{name}: must be positive"));
        }
    }
    if let Some(hz) = c.fair_reference_hz {
        if !(hz > 0.0) {
            errors.push(format!("{field}.fair_reference_hz: must be positive"));
        }
    }
}

fn check_table_name(field: &str, name: &str, errors: &mut Vec<String>) {
    let known = BUILTIN_TABLE_NAMES.contains(&name.to_lowercase().as_str());
    if !known && !name.ends_with(".csv") {
        errors.push(format!(
            "{field}: unknown table `{name}` (builtin: unconstrained, k1, k2, v; or a .csv path)"
        ));
    }
}

fn to_result(errors: Vec<String>) -> Result<(), RunError> {
    if errors.is_empty() {
        Ok(())
    } else {
        Err(RunError::Config(errors.join("; ")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let mut errors = Vec::new();
        check_point("p_tx", &self.p_tx, &mut errors);
        check_point("p_des", &self.p_des, &mut errors);
        check_array("array", &self.array, &mut errors);
        check_carriers("carriers", &self.carriers, &mut errors);
        if self.tables.is_empty() {
            errors.push("tables: must be nonempty".into());
        }
        for (i, t) in self.tables.iter().enumerate() {
            check_table_name(&format!("tables[{i}]"), t, &mut errors);
        }
        if self.beams.is_empty() {
            errors.push("beams: must be nonempty".into());
        }
        if self.grid.theta < 3 || self.grid.phi < 3 || self.grid.rho < 3 {
            errors.push("grid: each axis needs at least 3 samples".into());
        }
        if !(self.synthesis.beta > 0.0 && self.synthesis.beta < 1.0) {
            errors.push("synthesis.beta: must lie in (0, 1)".into());
        }
        if self.synthesis.max_iters == 0 {
            errors.push("synthesis.max_iters: must be positive".into());
        }
        if !(self.emit.slices_1d || self.emit.grid_2d || self.emit.metrics) {
            errors.push("emit: at least one of slices_1d, grid_2d, metrics".into());
        }
        if self.output_dir.is_empty() {
            errors.push("output_dir: must be nonempty".into());
        }
        to_result(errors)
    }
}

impl PebConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let mut errors = Vec::new();
        check_point("p_tx", &self.p_tx, &mut errors);
        check_array("array", &self.array, &mut errors);
        check_carriers("carriers", &self.carriers, &mut errors);
        let s = &self.signal;
        if !(s.bandwidth_hz > 0.0) {
            errors.push("signal.bandwidth_hz: must be positive".into());
        }
        if !s.tx_power_dbm.is_finite() || !s.noise_psd_dbm_hz.is_finite() {
            errors.push("signal: power and noise density must be finite".into());
        }
        if s.num_transmissions == 0 {
            errors.push("signal.num_transmissions: must be positive".into());
        }
        if self.sweep.values().is_empty() {
            errors.push("sweep.values: must be nonempty".into());
        }
        match &self.sweep {
            SweepSpec::Distance { values } => {
                if values.iter().any(|&v| !(v > 0.0)) {
                    errors.push("sweep.values: distances must be positive".into());
                }
            }
            SweepSpec::Azimuth { rho_m, phi_rad, values } => {
                if !(*rho_m > 0.0) {
                    errors.push("sweep.rho_m: must be positive".into());
                }
                if !(*phi_rad > 0.0 && *phi_rad < std::f64::consts::PI) {
                    errors.push("sweep.phi_rad: must lie in (0, pi)".into());
                }
                if values.iter().any(|&v| !(v > 0.0 && v < std::f64::consts::PI)) {
                    errors.push("sweep.values: azimuths must lie in (0, pi)".into());
                }
            }
            SweepSpec::Elevation { rho_m, theta_rad, values } => {
                if !(*rho_m > 0.0) {
                    errors.push("sweep.rho_m: must be positive".into());
                }
                if !(*theta_rad > 0.0 && *theta_rad < std::f64::consts::PI) {
                    errors.push("sweep.theta_rad: must lie in (0, pi)".into());
                }
                if values.iter().any(|&v| !(v > 0.0 && v < std::f64::consts::PI)) {
                    errors.push("sweep.values: polar angles must lie in (0, pi)".into());
                }
            }
        }
        if self.designs.is_empty() {
            errors.push("designs: must be nonempty".into());
        }
        for (i, d) in self.designs.iter().enumerate() {
            if d.tables().is_empty() {
                errors.push(format!("designs[{i}].tables: must be nonempty"));
            }
            for (j, t) in d.tables().iter().enumerate() {
                check_table_name(&format!("designs[{i}].tables[{j}]"), t, &mut errors);
            }
            match d {
                DesignEntry::Random { mc_trials, .. } => {
                    if *mc_trials == 0 {
                        errors.push(format!("designs[{i}].mc_trials: must be >= 1"));
                    }
                }
                DesignEntry::Directional { sphere_radius_m, mc_trials, .. } => {
                    if !(*sphere_radius_m > 0.0) {
                        errors.push(format!("designs[{i}].sphere_radius_m: must be positive"));
                    }
                    if *mc_trials == 0 {
                        errors.push(format!("designs[{i}].mc_trials: must be >= 1"));
                    }
                }
                DesignEntry::Optimal { .. } => {}
            }
        }
        if self.output_dir.is_empty() {
            errors.push("output_dir: must be nonempty".into());
        }
        to_result(errors)
    }
}

/// Applies the `BEAMLAB_SEED` environment override, if set and parseable.
pub fn resolve_seed(config_seed: u64) -> Result<u64, RunError> {
    match std::env::var("BEAMLAB_SEED") {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map_err(|_| RunError::Config(format!("BEAMLAB_SEED: not a valid u64: `{v}`"))),
        Err(_) => Ok(config_seed),
    }
}
