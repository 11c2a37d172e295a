//! Beam-fidelity and PEB-sweep experiment runners.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use beamlab_core::design::{
    allocation_fim, build_beam_basis, directional_profiles, optimize_allocation, per_beam_fims,
    random_profiles, time_sharing_precoder, trial_rng, BeamBasis, DirectionalSampling,
    NUM_BEAMS,
};
use beamlab_core::fisher::{
    channel_gain, fim_cartesian, fim_spherical, mu_and_derivatives, peb_report, peb_with_scale,
    ChannelState, GainMode, Precoder, SignalConfig,
};
use beamlab_core::geometry::{
    cart_to_sph, jacobian_sph_wrt_cart, sph_to_cart, steering_vector, CartesianPoint, RisArray,
    SphericalPoint,
};
use beamlab_core::hardware::{project_profile, LookupTable};
use beamlab_core::linalg::Mat5;
use beamlab_core::synthesis::{
    evaluate_pattern, evaluate_pattern_2d, lobe_metrics, synthesize_reduced, BeamKind,
    DesiredBeam, PatternMetrics, ScaleUpdate, SliceAxis, SliceGrid, SynthesisOptions,
};
use beamlab_core::{Error, SPEED_OF_LIGHT};

use crate::config::{
    resolve_seed, BeamName, DesignEntry, GridSpec, PebConfig, ScaleUpdateName, SweepSpec,
    SynthConfig, SynthOpts,
};
use crate::csvio::{format_sig, write_manifest, write_matrix, write_pairs};
use crate::RunError;

/// Where a run wrote its artifacts.
#[derive(Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub outputs: Vec<String>,
}

fn build_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, RunError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(RunError::Config("threads: must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| RunError::Config(format!("thread pool: {e}")))
}

/// A table selection: either the idealized unconstrained case or a concrete
/// lookup table.
#[derive(Debug, Clone)]
pub enum TableChoice {
    Unconstrained,
    Table(LookupTable),
}

impl TableChoice {
    pub fn resolve(name: &str) -> Result<Self, RunError> {
        let lower = name.to_lowercase();
        if lower == "unconstrained" {
            return Ok(TableChoice::Unconstrained);
        }
        if let Some(t) = LookupTable::builtin_by_name(&lower) {
            return Ok(TableChoice::Table(t));
        }
        if name.ends_with(".csv") {
            let text = std::fs::read_to_string(name)
                .map_err(|e| RunError::Config(format!("table file `{name}`: {e}")))?;
            let table = LookupTable::parse_csv(&text)
                .map_err(|e| RunError::Config(format!("table file `{name}`: {e}")))?;
            return Ok(TableChoice::Table(table));
        }
        Err(RunError::Config(format!("unknown table `{name}`")))
    }

    /// Table driving the synthesis solver; the unconstrained case is the
    /// continuous unit circle.
    pub fn synthesis_table(&self) -> LookupTable {
        match self {
            TableChoice::Unconstrained => LookupTable::unit_circle(),
            TableChoice::Table(t) => t.clone(),
        }
    }

    /// Constraint applied when realizing precoders; the unconstrained case
    /// applies none.
    pub fn design_constraint(&self) -> Option<&LookupTable> {
        match self {
            TableChoice::Unconstrained => None,
            TableChoice::Table(t) => Some(t),
        }
    }
}

fn point(p: &[f64; 3]) -> CartesianPoint {
    CartesianPoint::new(p[0], p[1], p[2])
}

fn beam_kind(b: BeamName) -> BeamKind {
    match b {
        BeamName::Steering => BeamKind::Steering,
        BeamName::DerivativeRho => BeamKind::DerivativeRho,
        BeamName::DerivativeTheta => BeamKind::DerivativeTheta,
        BeamName::DerivativePhi => BeamKind::DerivativePhi,
    }
}

fn synthesis_options(o: &SynthOpts) -> SynthesisOptions {
    SynthesisOptions {
        beta: o.beta,
        max_iters: o.max_iters,
        tol: o.tol,
        scale_update: match o.scale_update {
            ScaleUpdateName::Joint => ScaleUpdate::Joint,
            ScaleUpdateName::SummedPerSlice => ScaleUpdate::SummedPerSlice,
        },
        initial: None,
        polish_sweeps: o.polish_sweeps,
    }
}

fn grid_for(spec: &GridSpec, reference: SphericalPoint) -> Result<SliceGrid, RunError> {
    let pi = std::f64::consts::PI;
    let theta: Vec<f64> =
        (1..=spec.theta).map(|k| pi * k as f64 / (spec.theta + 1) as f64).collect();
    let phi: Vec<f64> = (1..=spec.phi).map(|k| pi * k as f64 / (spec.phi + 1) as f64).collect();
    let n = spec.rho;
    let rho: Vec<f64> = (0..n)
        .map(|i| 0.5 * reference.rho + i as f64 * (reference.rho / (n - 1) as f64))
        .collect();
    SliceGrid::new(rho, theta, phi, reference).map_err(|e| RunError::Config(e.to_string()))
}

struct FidelityJob {
    table_name: String,
    carrier_hz: f64,
    beam: BeamName,
}

struct FidelityOut {
    pattern_theta: Vec<(f64, f64)>,
    map_2d: Option<Vec<Vec<f64>>>,
}

/// Runs a beam-fidelity experiment: per-table synthesis of each requested
/// beam, 1-D azimuth slices, optional 2-D maps, and lobe metrics against the
/// unconstrained envelope.
pub fn run_beam_fidelity(config: &SynthConfig) -> Result<RunSummary, RunError> {
    config.validate()?;
    let seed = resolve_seed(config.seed)?;
    let out_dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&out_dir)?;

    let target = point(&config.p_des);
    let tx = point(&config.p_tx);
    let reference = cart_to_sph(&target).map_err(|e| RunError::Config(e.to_string()))?;

    // deduplicated job list; metrics need the unconstrained envelope at every
    // carrier in use
    let mut jobs: Vec<FidelityJob> = Vec::new();
    let mut seen: BTreeMap<(String, u64, String), usize> = BTreeMap::new();
    let mut push_job = |jobs: &mut Vec<FidelityJob>, name: &str, hz: f64, beam: BeamName| {
        let key = (name.to_string(), hz.to_bits(), beam.as_str().to_string());
        if !seen.contains_key(&key) {
            seen.insert(key, jobs.len());
            jobs.push(FidelityJob { table_name: name.to_string(), carrier_hz: hz, beam });
        }
    };
    for table in &config.tables {
        for &beam in &config.beams {
            push_job(&mut jobs, table, config.carriers.for_table(table), beam);
        }
    }
    if config.emit.metrics {
        for table in &config.tables {
            for &beam in &config.beams {
                push_job(
                    &mut jobs,
                    "unconstrained",
                    config.carriers.for_table(table),
                    beam,
                );
            }
        }
    }

    let opts = synthesis_options(&config.synthesis);
    let pool = build_pool(config.threads)?;
    let results: Vec<Result<FidelityOut, RunError>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|job| {
                let choice = TableChoice::resolve(&job.table_name)?;
                let lambda = SPEED_OF_LIGHT / job.carrier_hz;
                let array = RisArray::new(
                    config.array.rows,
                    config.array.cols,
                    config.array.spacing_over_lambda * lambda,
                    lambda,
                )?;
                let beam = DesiredBeam::new(beam_kind(job.beam), target, tx)?;
                let grid = grid_for(&config.grid, reference)?;
                let table = choice.synthesis_table();
                let res = synthesize_reduced(&beam, &grid, &array, &table, &opts)?;
                let omega = res.profile.omega();
                let pattern_theta =
                    evaluate_pattern(omega, &array, &tx, SliceAxis::Theta, &grid)?;
                let map_2d = if config.emit.grid_2d {
                    Some(evaluate_pattern_2d(
                        omega,
                        &array,
                        &tx,
                        grid.samples(SliceAxis::Theta),
                        grid.samples(SliceAxis::Phi),
                        reference.rho,
                    )?)
                } else {
                    None
                };
                Ok(FidelityOut { pattern_theta, map_2d })
            })
            .collect()
    });
    let mut by_key: BTreeMap<(String, u64, String), FidelityOut> = BTreeMap::new();
    for (job, res) in jobs.iter().zip(results) {
        by_key.insert(
            (job.table_name.clone(), job.carrier_hz.to_bits(), job.beam.as_str().to_string()),
            res?,
        );
    }

    let mut outputs = Vec::new();
    let grid = grid_for(&config.grid, reference)?;
    let mut metric_rows: Vec<(String, String, PatternMetrics)> = Vec::new();
    for table in &config.tables {
        let hz = config.carriers.for_table(table);
        for &beam in &config.beams {
            let key = (table.clone(), hz.to_bits(), beam.as_str().to_string());
            let out = &by_key[&key];
            if config.emit.slices_1d {
                let name = format!("pattern_{}_{}.csv", beam.as_str(), file_stem(table));
                write_pairs(
                    &out_dir.join(&name),
                    ("coordinate_rad", "gain_db"),
                    &out.pattern_theta,
                )?;
                outputs.push(name);
            }
            if config.emit.grid_2d {
                let name = format!("pattern2d_{}_{}.csv", beam.as_str(), file_stem(table));
                let map = out.map_2d.as_ref().expect("requested in job");
                write_matrix(
                    &out_dir.join(&name),
                    grid.samples(SliceAxis::Theta),
                    grid.samples(SliceAxis::Phi),
                    map,
                )?;
                outputs.push(name);
            }
            if config.emit.metrics {
                // secondary lobes are the peaks breaking the unconstrained
                // envelope; the unconstrained pattern itself reports none
                let env_key =
                    ("unconstrained".to_string(), hz.to_bits(), beam.as_str().to_string());
                let envelope = &by_key[&env_key].pattern_theta;
                let m = lobe_metrics(&out.pattern_theta, reference.theta, Some(envelope))?;
                metric_rows.push((table.clone(), beam.as_str().to_string(), m));
            }
        }
    }
    if config.emit.metrics {
        let mut text = String::from(
            "table,beam,main_peak_db,main_peak_direction_rad,secondary_peak_db,secondary_direction_rad\n",
        );
        for (table, beam, m) in &metric_rows {
            let (sdb, sdir) = match m.secondary {
                Some(s) => (format_sig(s.peak_db), format_sig(s.direction)),
                None => (String::new(), String::new()),
            };
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                file_stem(table),
                beam,
                format_sig(m.main_peak_db),
                format_sig(m.main_peak_direction),
                sdb,
                sdir
            ));
        }
        std::fs::write(out_dir.join("metrics.csv"), text)?;
        outputs.push("metrics.csv".into());
    }
    write_manifest(&out_dir, config, seed, &outputs)?;
    outputs.push("manifest.json".into());
    Ok(RunSummary { output_dir: out_dir, outputs })
}

fn file_stem(table: &str) -> String {
    let lower = table.to_lowercase();
    match lower.strip_suffix(".csv") {
        Some(stem) => Path::new(stem)
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or(lower.clone()),
        None => lower,
    }
}

/// Sweep points: the UE placement and the swept coordinate recorded in the
/// output (the RIS-UE distance for distance sweeps, the angle otherwise).
fn sweep_points(sweep: &SweepSpec) -> Result<Vec<(f64, CartesianPoint)>, RunError> {
    let mut out = Vec::new();
    match sweep {
        SweepSpec::Distance { values } => {
            for &r in values {
                let p = CartesianPoint::new(-r, r, r);
                out.push((p.norm(), p));
            }
        }
        SweepSpec::Azimuth { rho_m, phi_rad, values } => {
            for &theta in values {
                let s = SphericalPoint::new(*rho_m, theta, *phi_rad)
                    .map_err(|e| RunError::Config(e.to_string()))?;
                out.push((theta, sph_to_cart(&s)));
            }
        }
        SweepSpec::Elevation { rho_m, theta_rad, values } => {
            for &phi in values {
                let s = SphericalPoint::new(*rho_m, *theta_rad, phi)
                    .map_err(|e| RunError::Config(e.to_string()))?;
                out.push((phi, sph_to_cart(&s)));
            }
        }
    }
    Ok(out)
}

struct Curve {
    design: DesignEntry,
    table_name: String,
    file_name: String,
}

/// Information matrices of the four beams after projecting their profiles
/// onto a table; used by the re-optimize-after-projection mode.
fn projected_beam_fims(
    basis: &BeamBasis,
    table: &LookupTable,
    array: &RisArray,
    channel: &ChannelState,
    config: &SignalConfig,
) -> Result<[Mat5; NUM_BEAMS], Error> {
    let a_bs = steering_vector(array, &channel.p_bs)?;
    let jac = jacobian_sph_wrt_cart(&channel.p_ue)?;
    let mut out = [Mat5::zeros(); NUM_BEAMS];
    for (k, slot) in out.iter_mut().enumerate() {
        let beam = basis.beam(k);
        let omega: Vec<_> = beam.iter().zip(&a_bs).map(|(u, a)| u / a).collect();
        let omega = project_profile(&omega, table).into_omega();
        let column: Vec<_> = omega.iter().zip(&a_bs).map(|(w, a)| w * a).collect();
        let p = Precoder::new(vec![column], "beam")?;
        let d = mu_and_derivatives(array, &p, channel)?;
        *slot = fim_cartesian(&fim_spherical(&d, config), &jac);
    }
    Ok(out)
}

fn is_unlocalizable(e: &Error) -> bool {
    matches!(e, Error::SingularFim | Error::Unlocalizable)
}

/// PEB of one curve at one sweep point. Structural singularity maps to an
/// infinite bound (a sentinel row), anything else propagates as an error.
#[allow(clippy::too_many_arguments)]
fn curve_point_peb(
    curve: &Curve,
    p_ue: &CartesianPoint,
    config: &PebConfig,
    seed: u64,
    curve_idx: usize,
    point_idx: usize,
) -> Result<f64, RunError> {
    let choice = TableChoice::resolve(&curve.table_name)?;
    let carrier = config.carriers.for_table(&curve.table_name);
    let lambda = SPEED_OF_LIGHT / carrier;
    let array = RisArray::new(
        config.array.rows,
        config.array.cols,
        config.array.spacing_over_lambda * lambda,
        lambda,
    )
    .map_err(|e| RunError::Config(e.to_string()))?;
    let signal = SignalConfig::new(
        carrier,
        config.signal.bandwidth_hz,
        dbm(config.signal.tx_power_dbm),
        dbm(config.signal.noise_psd_dbm_hz),
        config.signal.noise_figure_db,
        config.signal.num_transmissions,
    )
    .map_err(|e| RunError::Config(e.to_string()))?;
    let mode = match config.carriers.fair_reference_hz {
        Some(reference_hz) => GainMode::FairPinned { reference_hz },
        None => GainMode::PerCarrier,
    };
    let p_bs = point(&config.p_tx);
    let alpha = channel_gain(&p_bs, &CartesianPoint::ORIGIN, p_ue, carrier, mode)?;
    let channel = ChannelState::new(alpha, *p_ue, p_bs)?;
    let t = config.signal.num_transmissions;

    match &curve.design {
        DesignEntry::Optimal { reoptimize_after_projection, .. } => {
            let basis = build_beam_basis(&array, p_ue)?;
            let fims = per_beam_fims(&basis, &array, &channel, &signal)?;
            let constraint = choice.design_constraint();
            let alloc_result = if *reoptimize_after_projection && constraint.is_some() {
                let table = constraint.expect("checked");
                let proj_fims = projected_beam_fims(&basis, table, &array, &channel, &signal)?;
                optimize_allocation(&proj_fims, t as f64)
            } else {
                optimize_allocation(&fims, t as f64)
            };
            let alloc = match alloc_result {
                Ok(a) => a,
                Err(e) if is_unlocalizable(&e) => return Ok(f64::INFINITY),
                Err(e) => return Err(e.into()),
            };
            let floored = alloc.with_floor(1.0);
            let precoder = time_sharing_precoder(&basis, &floored, constraint, &array, &p_bs)?;
            let d = mu_and_derivatives(&array, &precoder, &channel)?;
            let jac = jacobian_sph_wrt_cart(p_ue)?;
            let j = fim_cartesian(&fim_spherical(&d, &signal), &jac);
            // equilibrate against the information the unconstrained basis
            // achieves, which is the natural scale for this geometry
            let scale_src = allocation_fim(&fims, &floored);
            match peb_with_scale(&j, &scale_src.diagonal()) {
                Ok(p) => Ok(p),
                Err(e) if is_unlocalizable(&e) => Ok(f64::INFINITY),
                Err(e) => Err(e.into()),
            }
        }
        DesignEntry::Random { mc_trials, .. } => {
            let constraint = choice.design_constraint();
            mc_mean(*mc_trials, seed, curve_idx, point_idx, |rng| {
                let p = random_profiles(constraint, &array, &p_bs, t, rng)?;
                peb_report(&array, &p, &channel, &signal).map(|r| r.peb_meters)
            })
        }
        DesignEntry::Directional { sphere_radius_m, mc_trials, shared_draw, .. } => {
            let constraint = choice.design_constraint();
            let sampling = if *shared_draw {
                DirectionalSampling::SharedAcrossTransmissions
            } else {
                DirectionalSampling::PerTransmission
            };
            mc_mean(*mc_trials, seed, curve_idx, point_idx, |rng| {
                let p = directional_profiles(
                    p_ue,
                    *sphere_radius_m,
                    &array,
                    &p_bs,
                    t,
                    constraint,
                    sampling,
                    rng,
                )?;
                peb_report(&array, &p, &channel, &signal).map(|r| r.peb_meters)
            })
        }
    }
}

/// Mean PEB over seeded Monte-Carlo trials; any structurally singular trial
/// makes the whole point unlocalizable.
fn mc_mean<F>(
    trials: usize,
    seed: u64,
    curve_idx: usize,
    point_idx: usize,
    mut f: F,
) -> Result<f64, RunError>
where
    F: FnMut(&mut beamlab_core::design::TrialRng) -> Result<f64, Error>,
{
    let mut acc = 0.0;
    for trial in 0..trials {
        let stream =
            ((curve_idx as u64) << 40) ^ ((point_idx as u64) << 20) ^ trial as u64;
        let mut rng = trial_rng(seed, stream);
        match f(&mut rng) {
            Ok(v) => acc += v,
            Err(e) if is_unlocalizable(&e) => return Ok(f64::INFINITY),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(acc / trials as f64)
}

fn dbm(v: f64) -> f64 {
    1e-3 * 10f64.powf(v / 10.0)
}

/// Runs a PEB sweep: one CSV per (design, table) pair plus a manifest.
pub fn run_peb_sweep(config: &PebConfig) -> Result<RunSummary, RunError> {
    config.validate()?;
    let seed = resolve_seed(config.seed)?;
    let out_dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&out_dir)?;

    let points = sweep_points(&config.sweep)?;
    let mut curves: Vec<Curve> = Vec::new();
    for design in &config.designs {
        for table in design.tables() {
            let file_name = format!("peb_{}_{}.csv", design.label(), file_stem(table));
            if curves.iter().any(|c| c.file_name == file_name) {
                return Err(RunError::Config(format!(
                    "designs: duplicate curve `{file_name}`; merge the entries"
                )));
            }
            curves.push(Curve {
                design: design.clone(),
                table_name: table.clone(),
                file_name,
            });
        }
    }

    let pool = build_pool(config.threads)?;
    let jobs: Vec<(usize, usize)> = (0..curves.len())
        .flat_map(|c| (0..points.len()).map(move |p| (c, p)))
        .collect();
    let results: Vec<Result<f64, RunError>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(c, p)| curve_point_peb(&curves[c], &points[p].1, config, seed, c, p))
            .collect()
    });

    let mut outputs = Vec::new();
    for (c, curve) in curves.iter().enumerate() {
        let mut rows = Vec::with_capacity(points.len());
        for (p, (value, _)) in points.iter().enumerate() {
            let peb = results[c * points.len() + p].as_ref().map_err(clone_err)?;
            rows.push((*value, *peb));
        }
        write_pairs(&out_dir.join(&curve.file_name), ("sweep_value", "peb_m"), &rows)?;
        outputs.push(curve.file_name.clone());
    }
    write_manifest(&out_dir, config, seed, &outputs)?;
    outputs.push("manifest.json".into());
    Ok(RunSummary { output_dir: out_dir, outputs })
}

fn clone_err(e: &RunError) -> RunError {
    match e {
        RunError::Config(m) => RunError::Config(m.clone()),
        RunError::Numerical(m) => RunError::Numerical(m.clone()),
        RunError::Io(err) => RunError::Numerical(err.to_string()),
    }
}
