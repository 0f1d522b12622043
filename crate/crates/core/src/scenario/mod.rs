//! Scenario files, initial data, generated topography and the run driver.

mod snapshot;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{
    solve_strip_map, MapError, Rectangle, StripMap, StripMapOptions, Topography,
};
use crate::integrator::{
    integrate_with_stats, IntegrateError, IntegrationStats, SnapshotSchedule, StepperConfig,
};
use crate::models::{
    rhs_boussinesq, rhs_kdv_conformal, rhs_kdv_physical, rhs_kp_classical, rhs_kp_slow,
    rhs_kp_small, to_conformal, to_physical, BoussinesqState, CoefficientSet, IntegratingFactor,
    ModelError, ModelKind, ModelParams,
};
use crate::spectral::{PeriodicGrid, SpectralError, SpectralField};

pub use snapshot::{
    crest_position, decode_kpcf, encode_kpcf, payload_checksum, read_manifest, read_snapshot,
    write_atomic, write_manifest, write_snapshot, Crest, ManifestEntry, MapReport, RunManifest,
    SnapshotRecord, KPCF_HEADER_LEN, KPCF_MAGIC, KPCF_VERSION,
};

pub const SOLVER_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: malformed snapshot: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("field vanishes on the centre line, no crest to locate")]
    NoCrest,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

impl ScenarioError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for bad input, 3 for everything that fails while solving or writing.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub l_x: f64,
    pub l_y: f64,
    pub n_x: usize,
    pub n_y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectangleConfig {
    pub left: f64,
    pub width: f64,
    pub height: f64,
}

fn random_patch_n_rect() -> usize {
    12
}
fn random_patch_width() -> f64 {
    1.0
}
fn random_patch_support() -> [f64; 2] {
    [0.0, 12.0]
}
fn random_patch_amp_range() -> [f64; 2] {
    [-0.5, 0.5]
}

/// Bottom profile `H(x)`; the bottom sits at `-(1 + H)` in strip units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopographyConfig {
    Flat,
    /// Seeded rectangle train; the seed is the scenario's `seed`.
    RandomPatch {
        #[serde(default = "random_patch_n_rect")]
        n_rect: usize,
        #[serde(default = "random_patch_width")]
        width: f64,
        #[serde(default = "random_patch_support")]
        support: [f64; 2],
        #[serde(default = "random_patch_amp_range")]
        amp_range: [f64; 2],
    },
    Rectangles {
        rects: Vec<RectangleConfig>,
    },
    /// `amplitude * cos(π wavenumber x / L_x)`.
    Cosine {
        amplitude: f64,
        wavenumber: u32,
    },
    /// `amplitude * exp(-(x - center)² / (2 width²))`, periodized by wrapping.
    Gaussian {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// Values on `n` equispaced nodes covering `[-L_x, L_x)`.
    Sampled {
        values: Vec<f64>,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    GaussianDerivative {
        #[serde(default = "unit")]
        amplitude: f64,
        center: f64,
        s_x: f64,
        s_y: f64,
    },
    /// `a sech²(κ(x - x₀))` with `κ = sqrt(3εa / (4μ²))`, uniform in `y`.
    Soliton { amplitude: f64, center: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepperSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_dt: f64,
    pub max_dt: f64,
    pub safety: f64,
    pub max_steps: usize,
}

impl Default for StepperSettings {
    fn default() -> Self {
        StepperConfig::default().into()
    }
}

impl From<StepperConfig> for StepperSettings {
    fn from(c: StepperConfig) -> Self {
        Self {
            abs_tol: c.abs_tol,
            rel_tol: c.rel_tol,
            initial_dt: c.initial_dt,
            max_dt: c.max_dt,
            safety: c.safety,
            max_steps: c.max_steps,
        }
    }
}

impl From<StepperSettings> for StepperConfig {
    fn from(s: StepperSettings) -> Self {
        Self {
            abs_tol: s.abs_tol,
            rel_tol: s.rel_tol,
            initial_dt: s.initial_dt,
            max_dt: s.max_dt,
            safety: s.safety,
            max_steps: s.max_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StripMapSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub relax: f64,
}

impl Default for StripMapSettings {
    fn default() -> Self {
        let o = StripMapOptions::default();
        Self {
            tol: o.tol,
            max_iter: o.max_iter,
            relax: o.relax,
        }
    }
}

impl From<StripMapSettings> for StripMapOptions {
    fn from(s: StripMapSettings) -> Self {
        Self {
            tol: s.tol,
            max_iter: s.max_iter,
            relax: s.relax,
        }
    }
}

fn yes() -> bool {
    true
}
fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelKind,
    pub eps: f64,
    pub mu: f64,
    pub gamma: f64,
    pub grid: GridConfig,
    pub topography: TopographyConfig,
    pub initial_condition: InitialCondition,
    #[serde(default)]
    pub stepper: StepperSettings,
    pub snapshot_times: Vec<f64>,
    pub output_dir: PathBuf,
    #[serde(default = "yes")]
    pub dealias: bool,
    #[serde(default)]
    pub integrating_factor: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub strip_map: StripMapSettings,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            ScenarioError::Config(m) => ScenarioError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Pretty JSON with every default spelled out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn grid(&self) -> Result<PeriodicGrid, ScenarioError> {
        let g = self.grid;
        PeriodicGrid::new(g.n_x, g.n_y, g.l_x, g.l_y)
            .map_err(|e| ScenarioError::Config(e.to_string()))
    }

    pub fn params(&self) -> Result<ModelParams, ScenarioError> {
        ModelParams::new(self.model, self.eps, self.mu, self.gamma)
            .map(|p| p.with_dealias(self.dealias))
            .map_err(|e| ScenarioError::Config(e.to_string()))
    }

    pub fn stepper_config(&self) -> Result<StepperConfig, ScenarioError> {
        let c: StepperConfig = self.stepper.into();
        c.validate()
            .map_err(|e| ScenarioError::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn schedule(&self) -> Result<SnapshotSchedule, ScenarioError> {
        SnapshotSchedule::new(self.snapshot_times.clone())
            .map_err(|e| ScenarioError::Config(e.to_string()))
    }

    pub fn topography(&self) -> Result<Topography, ScenarioError> {
        let config = |e: MapError| ScenarioError::Config(e.to_string());
        match &self.topography {
            TopographyConfig::Flat => Ok(Topography::Flat),
            TopographyConfig::RandomPatch {
                n_rect,
                width,
                support,
                amp_range,
            } => {
                build_random_patch(self.seed, *n_rect, *width, *support, *amp_range).map_err(|e| {
                    match e {
                        ScenarioError::Map(m) => config(m),
                        other => other,
                    }
                })
            }
            TopographyConfig::Rectangles { rects } => Topography::rectangles(
                rects
                    .iter()
                    .map(|r| Rectangle {
                        left: r.left,
                        width: r.width,
                        height: r.height,
                    })
                    .collect(),
            )
            .map_err(config),
            &TopographyConfig::Cosine {
                amplitude,
                wavenumber,
            } => {
                let k = std::f64::consts::PI * wavenumber as f64 / self.grid.l_x;
                Ok(Topography::analytic(move |x| amplitude * (k * x).cos()))
            }
            &TopographyConfig::Gaussian {
                amplitude,
                center,
                width,
            } => {
                if !(width > 0.0) {
                    return Err(ScenarioError::Config(format!(
                        "gaussian width {width} must be positive"
                    )));
                }
                let l = self.grid.l_x;
                Ok(Topography::analytic(move |x| {
                    let d = (x - center + l).rem_euclid(2.0 * l) - l;
                    amplitude * (-d * d / (2.0 * width * width)).exp()
                }))
            }
            TopographyConfig::Sampled { values } => {
                if values.is_empty() {
                    return Err(ScenarioError::Config("sampled topography is empty".into()));
                }
                let spacing = 2.0 * self.grid.l_x / values.len() as f64;
                Topography::sampled(-self.grid.l_x, spacing, values.clone()).map_err(config)
            }
        }
    }

    /// Checks everything that can be checked without solving anything.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let grid = self.grid()?;
        self.params()?.regime();
        self.stepper_config()?;
        self.schedule()?;
        self.topography()?;
        if self.model.requires_one_dimension() && !grid.is_one_dimensional() {
            return Err(ScenarioError::Config(format!(
                "{} needs n_y = 1",
                self.model
            )));
        }
        if self.integrating_factor && !self.model.supports_integrating_factor() {
            return Err(ScenarioError::Config(format!(
                "integrating_factor is not available for {}",
                self.model
            )));
        }
        if let InitialCondition::GaussianDerivative { s_x, s_y, .. } = self.initial_condition {
            if !(s_x > 0.0 && s_y > 0.0) {
                return Err(ScenarioError::Config("s_x and s_y must be positive".into()));
            }
        }
        if let InitialCondition::Soliton { amplitude, .. } = self.initial_condition {
            if !(amplitude > 0.0 && self.eps > 0.0) {
                return Err(ScenarioError::Config(
                    "a soliton needs positive amplitude and eps".into(),
                ));
            }
        }
        Ok(())
    }
}

/// `∂_x` of a separable Gaussian, evaluated in closed form.
pub fn ic_gaussian_derivative(
    grid: &PeriodicGrid,
    center_x: f64,
    s_x: f64,
    s_y: f64,
) -> SpectralField {
    SpectralField::from_fn(*grid, |x, y| gaussian_derivative(x, y, center_x, s_x, s_y))
}

fn gaussian_derivative(x: f64, y: f64, c: f64, s_x: f64, s_y: f64) -> f64 {
    let d = x - c;
    -(d / (s_x * s_x)) * (-d * d / (2.0 * s_x * s_x)).exp() * (-y * y / (2.0 * s_y * s_y)).exp()
}

impl InitialCondition {
    /// Physical-space profile `η(x, y, 0)`.
    pub fn eval(&self, x: f64, y: f64, eps: f64, mu: f64) -> f64 {
        match *self {
            InitialCondition::GaussianDerivative {
                amplitude,
                center,
                s_x,
                s_y,
            } => amplitude * gaussian_derivative(x, y, center, s_x, s_y),
            InitialCondition::Soliton { amplitude, center } => {
                let kappa = (3.0 * eps * amplitude / (4.0 * mu * mu)).sqrt();
                amplitude / (kappa * (x - center)).cosh().powi(2)
            }
        }
    }
}

/// Rectangle train of `n_rect` adjacent bars of equal width filling
/// `support`, with heights drawn uniformly from `amp_range`.
///
/// Heights come from ChaCha8 `u32` draws, `H = lo + (hi - lo) u / (2³² - 1)`,
/// so a seed gives the same bottom on every platform.
pub fn build_random_patch(
    seed: u64,
    n_rect: usize,
    width: f64,
    support: [f64; 2],
    amp_range: [f64; 2],
) -> Result<Topography, ScenarioError> {
    let [a, b] = support;
    let [lo, hi] = amp_range;
    if n_rect == 0 || !(width > 0.0) || !(b > a) {
        return Err(ScenarioError::Config(format!(
            "need n_rect > 0, width > 0 and a non-empty support, got {n_rect}, {width}, [{a}, {b}]"
        )));
    }
    let length = b - a;
    if ((width * n_rect as f64) - length).abs() > 1e-12 * length.max(1.0) {
        return Err(ScenarioError::Config(format!(
            "{n_rect} rectangles of width {width} do not cover [{a}, {b}]"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(ScenarioError::Config(format!(
            "bad amplitude range [{lo}, {hi}]"
        )));
    }
    if 1.0 + lo <= 0.0 {
        return Err(MapError::InvalidTopography(format!(
            "amplitude range [{lo}, {hi}] allows 1 + H <= 0"
        ))
        .into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rects = (0..n_rect)
        .map(|i| {
            let u = rng.next_u32() as f64 / u32::MAX as f64;
            Rectangle {
                left: a + i as f64 * width,
                width,
                height: lo + (hi - lo) * u,
            }
        })
        .collect();
    Ok(Topography::rectangles(rects)?)
}

/// Model unknowns for the scalar and the two-field models.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelState {
    Scalar(SpectralField),
    Pair(BoussinesqState),
}

impl ModelState {
    pub fn eta(&self) -> &SpectralField {
        match self {
            ModelState::Scalar(f) => f,
            ModelState::Pair(s) => &s.eta,
        }
    }
}

/// One output time with both axis versions of the elevation.
#[derive(Debug, Clone)]
pub struct RunSnapshot {
    pub time: f64,
    /// `η` on the uniform `ξ` nodes.
    pub eta_conformal: SpectralField,
    /// `η` on the uniform `x` nodes.
    pub eta_physical: SpectralField,
    /// Boussinesq velocity on the `ξ` nodes.
    pub u: Option<SpectralField>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub snapshots: Vec<RunSnapshot>,
    pub stats: IntegrationStats,
    /// Seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

/// A validated scenario with its strip map and coefficients in place.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: PeriodicGrid,
    pub params: ModelParams,
    pub map: StripMap,
    pub coef: CoefficientSet,
    pub timings: BTreeMap<String, f64>,
}

impl Scenario {
    pub fn prepare(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let grid = config.grid()?;
        let params = config.params()?;
        let topo = config.topography()?;
        let mut timings = BTreeMap::new();
        let clock = Instant::now();
        // The classical model ignores the bottom.
        let map = if config.model == ModelKind::KpClassical || topo.is_flat() {
            StripMap::flat(&grid, config.mu)
        } else {
            solve_strip_map(&topo, config.mu, &grid, config.strip_map.into())?
        };
        let coef = CoefficientSet::from_map(&map, config.eps)?;
        timings.insert("strip_map".to_string(), clock.elapsed().as_secs_f64());
        Ok(Self {
            config,
            grid,
            params,
            map,
            coef,
            timings,
        })
    }

    /// `η(·, 0)` on the model's own axis. Conformal models sample the
    /// physical profile at `x(ξ_j)` directly.
    pub fn initial_eta(&self) -> SpectralField {
        let ic = self.config.initial_condition;
        let (eps, mu) = (self.config.eps, self.config.mu);
        let xs: Vec<f64> = if self.config.model.is_conformal() {
            self.map.x_surface().to_vec()
        } else {
            self.grid.x_nodes()
        };
        let ys = self.grid.y_nodes();
        let mut values = Vec::with_capacity(self.grid.len());
        for &x in &xs {
            values.extend(ys.iter().map(|&y| ic.eval(x, y, eps, mu)));
        }
        SpectralField::new(self.grid, values).expect("initial data is finite")
    }

    pub fn initial_state(&self) -> ModelState {
        let eta = self.initial_eta();
        match self.config.model {
            ModelKind::Boussinesq => {
                ModelState::Pair(BoussinesqState::right_moving(eta, &self.coef))
            }
            _ => ModelState::Scalar(eta),
        }
    }

    /// Integrates from the configured initial data to every snapshot time.
    pub fn simulate(&self) -> Result<RunOutput, ScenarioError> {
        let cfg = self.config.stepper_config()?;
        let schedule = self.config.schedule()?;
        let mut timings = self.timings.clone();
        let clock = Instant::now();
        let (p, coef) = (self.params, &self.coef);
        let (states, stats): (Vec<(f64, ModelState)>, _) = match self.initial_state() {
            ModelState::Pair(s0) => {
                let rhs = |_t: f64, s: &BoussinesqState| rhs_boussinesq(s, coef, &p);
                let tr = integrate_with_stats(rhs, s0, &schedule, &cfg)?;
                let states = tr
                    .snapshots
                    .into_iter()
                    .map(|(t, s)| (t, ModelState::Pair(s)))
                    .collect();
                (states, tr.stats)
            }
            ModelState::Scalar(eta0) if self.config.integrating_factor => {
                let factor = IntegratingFactor::new(&self.grid, &p)?;
                let rhs = |t: f64, v: &SpectralField| factor.rhs(t, v, coef);
                let tr = integrate_with_stats(rhs, eta0, &schedule, &cfg)?;
                let states = tr
                    .snapshots
                    .into_iter()
                    .map(|(t, v)| (t, ModelState::Scalar(factor.from_interaction(t, &v))))
                    .collect();
                (states, tr.stats)
            }
            ModelState::Scalar(eta0) => {
                let kind = p.kind;
                let rhs = |_t: f64, eta: &SpectralField| match kind {
                    ModelKind::KpSlow => rhs_kp_slow(eta, coef, &p),
                    ModelKind::KpSmall => rhs_kp_small(eta, coef, &p),
                    ModelKind::KpClassical => rhs_kp_classical(eta, &p),
                    ModelKind::KdvConformal => rhs_kdv_conformal(eta, coef, &p),
                    ModelKind::KdvPhysical => rhs_kdv_physical(eta, coef, &p),
                    ModelKind::Boussinesq => unreachable!("handled as a pair"),
                };
                let tr = integrate_with_stats(rhs, eta0, &schedule, &cfg)?;
                let states = tr
                    .snapshots
                    .into_iter()
                    .map(|(t, s)| (t, ModelState::Scalar(s)))
                    .collect();
                (states, tr.stats)
            }
        };
        timings.insert("integration".to_string(), clock.elapsed().as_secs_f64());

        let clock = Instant::now();
        let x_nodes = self.grid.x_nodes();
        let snapshots = states
            .into_iter()
            .map(|(time, state)| -> Result<RunSnapshot, ScenarioError> {
                let u = match &state {
                    ModelState::Pair(s) => Some(s.u.clone()),
                    ModelState::Scalar(_) => None,
                };
                let eta = state.eta().clone();
                let (eta_conformal, eta_physical) = if self.config.model.is_conformal() {
                    let phys = to_physical(&eta, &self.map, &x_nodes)?;
                    (eta, phys)
                } else if self.map.is_flat() {
                    (eta.clone(), eta)
                } else {
                    (to_conformal(&eta, &self.map)?, eta)
                };
                Ok(RunSnapshot {
                    time,
                    eta_conformal,
                    eta_physical,
                    u,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        timings.insert("resample".to_string(), clock.elapsed().as_secs_f64());
        Ok(RunOutput {
            snapshots,
            stats,
            timings,
        })
    }

    pub fn map_report(&self) -> MapReport {
        MapReport::new(&self.map, self.config.eps)
    }

    /// Writes the map table, every snapshot and `manifest.json` into `dir`.
    pub fn write_run(&self, out: &RunOutput, dir: &Path) -> Result<RunManifest, ScenarioError> {
        let clock = Instant::now();
        fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))?;
        let map_name = "strip_map.csv";
        let mut csv = Vec::new();
        self.map
            .write_csv(&mut csv)
            .map_err(|e| ScenarioError::io(&dir.join(map_name), e))?;
        write_atomic(&dir.join(map_name), &csv)?;

        let mut files = Vec::new();
        for snap in &out.snapshots {
            let mut records = vec![
                SnapshotRecord::new(snap.time, snap.eta_conformal.clone(), "eta_conformal"),
                SnapshotRecord::new(snap.time, snap.eta_physical.clone(), "eta_physical"),
            ];
            if let Some(u) = &snap.u {
                records.push(SnapshotRecord::new(snap.time, u.clone(), "u_conformal"));
            }
            for rec in records {
                let written = write_snapshot(&rec, dir)?;
                files.push(ManifestEntry {
                    variable: rec.variable.clone(),
                    time: rec.time,
                    file: file_name(&written.0),
                    centerline: file_name(&written.1),
                    checksum: rec.checksum.clone(),
                });
            }
        }
        let mut timings = out.timings.clone();
        timings.insert("output".to_string(), clock.elapsed().as_secs_f64());
        let regime = self.params.regime();
        let manifest = RunManifest {
            config: self.config.clone(),
            solver_version: SOLVER_VERSION.to_string(),
            files,
            strip_map_csv: map_name.to_string(),
            timings,
            strip_map: self.map_report(),
            eps_over_mu2: regime.eps_over_mu2,
            gamma_over_mu: regime.gamma_over_mu,
            regime_consistent: regime.consistent,
            accepted_steps: out.stats.accepted,
            rejected_steps: out.stats.rejected,
            rhs_evaluations: out.stats.rhs_evaluations,
        };
        write_manifest(&manifest, dir)?;
        Ok(manifest)
    }
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Prepare, simulate and write in one go, into `config.output_dir`.
pub fn run_scenario(config: ScenarioConfig) -> Result<RunManifest, ScenarioError> {
    let dir = config.output_dir.clone();
    let scenario = Scenario::prepare(config)?;
    let out = scenario.simulate()?;
    scenario.write_run(&out, &dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig::from_json(
            r#"{
                "model": "kp_slow", "eps": 0.05, "mu": 0.2236, "gamma": 0.2236,
                "grid": {"l_x": 10.0, "l_y": 10.0, "n_x": 32, "n_y": 16},
                "topography": {"kind": "random_patch", "n_rect": 4, "support": [0.0, 4.0]},
                "initial_condition": {"type": "gaussian_derivative", "center": -5.0, "s_x": 0.82, "s_y": 1.65},
                "snapshot_times": [0.0, 0.5],
                "output_dir": "out"
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_are_filled_and_round_trip() {
        let c = small_config();
        assert!(c.dealias);
        assert!(!c.integrating_factor);
        assert_eq!(c.seed, 1);
        assert_eq!(c.stepper, StepperSettings::default());
        let text = c.to_json();
        let again = ScenarioConfig::from_json(&text).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_json(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = small_config().to_json().replace("\"seed\"", "\"sead\"");
        assert!(matches!(
            ScenarioConfig::from_json(&text),
            Err(ScenarioError::Config(_))
        ));
        let text = small_config()
            .to_json()
            .replace("\"s_y\": 1.65", "\"s_y\": 1.65, \"s_z\": 1.0");
        assert!(ScenarioConfig::from_json(&text).is_err());
        let text = small_config()
            .to_json()
            .replace("\"n_rect\"", "\"n_rects\"");
        assert!(ScenarioConfig::from_json(&text).is_err());
    }

    #[test]
    fn gaussian_derivative_closed_form() {
        let grid = PeriodicGrid::new(256, 1, 30.0, 1.0).unwrap();
        let f = ic_gaussian_derivative(&grid, -5.0, 0.82, 1.65);
        assert!(f.x_means()[0].abs() < 1e-15);
        let peak = f.values().iter().cloned().fold(f64::MIN, f64::max);
        let exact = (-0.5f64).exp() / 0.82;
        assert!(peak <= exact && exact - peak < 1e-2, "{peak} {exact}");
        let i = f.values().iter().position(|&v| v == peak).unwrap();
        assert!((grid.x_node(i) - (-5.0 - 0.82)).abs() <= grid.dx());
    }

    #[test]
    fn gaussian_derivative_has_zero_mean_per_line() {
        let grid = PeriodicGrid::new(128, 64, 30.0, 30.0).unwrap();
        let f = ic_gaussian_derivative(&grid, -5.0, 0.82, 1.65);
        assert!(f.x_means().iter().all(|m| m.abs() < 1e-15));
    }

    #[test]
    fn random_patch_topography_is_seeded_and_in_range() {
        let a = build_random_patch(7, 12, 1.0, [0.0, 12.0], [-0.5, 0.5]).unwrap();
        let b = build_random_patch(7, 12, 1.0, [0.0, 12.0], [-0.5, 0.5]).unwrap();
        let c = build_random_patch(8, 12, 1.0, [0.0, 12.0], [-0.5, 0.5]).unwrap();
        let sample = |t: &Topography| {
            (0..600)
                .map(|q| t.height(-30.0 + 0.1 * q as f64, 30.0))
                .collect::<Vec<_>>()
        };
        assert_eq!(sample(&a), sample(&b));
        assert_ne!(sample(&a), sample(&c));
        for (q, h) in sample(&a).into_iter().enumerate() {
            let x = -30.0 + 0.1 * q as f64;
            assert!((0.5..=1.5).contains(&(1.0 + h)));
            if !(0.0..12.0).contains(&x) {
                assert_eq!(h, 0.0);
            }
        }
    }

    #[test]
    fn random_patch_degenerate_range_is_flat_and_bad_ranges_fail() {
        let t = build_random_patch(3, 12, 1.0, [0.0, 12.0], [0.0, 0.0]).unwrap();
        assert!((0..100).all(|q| t.height(-25.0 + 0.5 * q as f64, 30.0) == 0.0));
        assert!(matches!(
            build_random_patch(3, 12, 1.0, [0.0, 12.0], [-1.0, 0.5]),
            Err(ScenarioError::Map(MapError::InvalidTopography(_)))
        ));
        assert!(matches!(
            build_random_patch(3, 10, 1.0, [0.0, 12.0], [-0.5, 0.5]),
            Err(ScenarioError::Config(_))
        ));
    }

    #[test]
    fn validation_catches_model_mismatches() {
        let mut c = small_config();
        c.model = ModelKind::KdvConformal;
        assert!(matches!(c.validate(), Err(ScenarioError::Config(_))));
        let mut c = small_config();
        c.integrating_factor = true;
        assert!(matches!(c.validate(), Err(ScenarioError::Config(_))));
        c.model = ModelKind::KpClassical;
        assert!(c.validate().is_ok());
        let mut c = small_config();
        c.grid.n_x = 31;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn conformal_initial_data_is_sampled_at_mapped_points() {
        let s = Scenario::prepare(small_config()).unwrap();
        let eta = s.initial_eta();
        let ic = s.config.initial_condition;
        let j = s.grid.center_line();
        for i in [3, 10, 20] {
            let x = s.map.x_surface()[i];
            assert_eq!(eta.at(i, j), ic.eval(x, s.grid.y_node(j), 0.05, 0.2236));
        }
    }

    #[test]
    fn short_run_produces_every_snapshot() {
        let mut c = small_config();
        c.stepper = StepperConfig::with_tolerance(1e-6).into();
        let s = Scenario::prepare(c).unwrap();
        let out = s.simulate().unwrap();
        assert_eq!(out.snapshots.len(), 2);
        assert_eq!(out.snapshots[0].eta_conformal, s.initial_eta());
        assert!(out.snapshots[1].eta_physical.max_abs() > 0.1);
    }

    #[test]
    fn integrating_factor_matches_direct_run() {
        let mut c = small_config();
        c.model = ModelKind::KpClassical;
        c.stepper = StepperConfig::with_tolerance(1e-10).into();
        let direct = Scenario::prepare(c.clone()).unwrap().simulate().unwrap();
        c.integrating_factor = true;
        let factor = Scenario::prepare(c).unwrap().simulate().unwrap();
        let a = &direct.snapshots[1].eta_conformal;
        let b = &factor.snapshots[1].eta_conformal;
        assert!(a.zip_with(b, |x, y| x - y).unwrap().max_abs() < 1e-7);
    }
}
