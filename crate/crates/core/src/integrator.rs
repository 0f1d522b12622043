//! Adaptive Dormand–Prince 5(4) time stepping with exact snapshot hits.

use thiserror::Error;

use crate::models::{BoussinesqState, ModelError};
use crate::spectral::SpectralField;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("step size underflow (dt = {dt:e}) at t = {time}; problem too stiff")]
    Stiff { time: f64, dt: f64 },
    #[error("step budget of {steps} exhausted at t = {time}")]
    Budget { steps: usize, time: f64 },
    #[error("solution blew up at t = {time}")]
    BlowUp { time: f64 },
    #[error("right-hand side failed at t = {time}: {source}")]
    Rhs { time: f64, source: ModelError },
    #[error("invalid stepper configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_dt: f64,
    pub max_dt: f64,
    pub safety: f64,
    pub max_steps: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            initial_dt: 1e-4,
            max_dt: 0.5,
            safety: 0.9,
            max_steps: 1_000_000,
        }
    }
}

impl StepperConfig {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            abs_tol: tol,
            rel_tol: tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |m: String| Err(IntegrateError::Config(m));
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return bad(format!(
                "tolerances must be positive (abs {}, rel {})",
                self.abs_tol, self.rel_tol
            ));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return bad(format!("safety must lie in (0, 1), got {}", self.safety));
        }
        if !(self.initial_dt > 0.0 && self.max_dt > 0.0) {
            return bad("step sizes must be positive".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        Ok(())
    }
}

/// Output times, strictly increasing and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSchedule {
    times: Vec<f64>,
}

impl SnapshotSchedule {
    pub fn new(times: Vec<f64>) -> Result<Self, IntegrateError> {
        if times.is_empty() {
            return Err(IntegrateError::Config("snapshot schedule is empty".into()));
        }
        if !(times[0] >= 0.0) || times.iter().any(|t| !t.is_finite()) {
            return Err(IntegrateError::Config(
                "snapshot times must be finite and >= 0".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(IntegrateError::Config(
                "snapshot times must be strictly increasing".into(),
            ));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

/// A state the stepper can form linear combinations of.
pub trait OdeState: Clone {
    fn parts(&self) -> Vec<&[f64]>;
    fn parts_mut(&mut self) -> Vec<&mut [f64]>;
}

impl OdeState for Vec<f64> {
    fn parts(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }
    fn parts_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

impl OdeState for SpectralField {
    fn parts(&self) -> Vec<&[f64]> {
        vec![self.values()]
    }
    fn parts_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.values_mut()]
    }
}

impl OdeState for BoussinesqState {
    fn parts(&self) -> Vec<&[f64]> {
        vec![self.eta.values(), self.u.values()]
    }
    fn parts_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.eta.values_mut(), self.u.values_mut()]
    }
}

fn max_norm<S: OdeState>(s: &S) -> f64 {
    s.parts()
        .into_iter()
        .flat_map(|p| p.iter())
        .fold(0.0, |m, v| m.max(v.abs()))
}

fn is_finite<S: OdeState>(s: &S) -> bool {
    s.parts()
        .into_iter()
        .all(|p| p.iter().all(|v| v.is_finite()))
}

/// `y + dt * Σ c_i k_i` over the non-zero weights.
fn combine<S: OdeState>(y: &S, dt: f64, terms: &[(f64, &S)]) -> S {
    let mut out = y.clone();
    let ks: Vec<(f64, Vec<&[f64]>)> = terms
        .iter()
        .filter(|(c, _)| *c != 0.0)
        .map(|(c, k)| (*c * dt, k.parts()))
        .collect();
    for (p, dst) in out.parts_mut().into_iter().enumerate() {
        for (idx, v) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, k) in &ks {
                acc += c * k[p][idx];
            }
            *v += acc;
        }
    }
    out
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Result of one embedded-pair step.
#[derive(Debug, Clone)]
pub struct StepOutcome<S> {
    pub y_new: S,
    /// Max-norm of the embedded error estimate.
    pub err_estimate: f64,
    /// Estimate scaled by `abs_tol + rel_tol * ‖y‖∞`; the step is acceptable
    /// when this is at most one.
    pub err_ratio: f64,
    pub dt_next: f64,
    /// Derivative at the new point (first-same-as-last).
    pub k_last: S,
}

impl<S> StepOutcome<S> {
    pub fn accepted(&self) -> bool {
        self.err_ratio <= 1.0
    }
}

fn call<S, F>(rhs: &mut F, t: f64, y: &S) -> Result<S, IntegrateError>
where
    S: OdeState,
    F: FnMut(f64, &S) -> Result<S, ModelError>,
{
    let k = rhs(t, y).map_err(|source| match source {
        ModelError::BlowUp { .. } => IntegrateError::BlowUp { time: t },
        source => IntegrateError::Rhs { time: t, source },
    })?;
    if !is_finite(&k) {
        return Err(IntegrateError::BlowUp { time: t });
    }
    Ok(k)
}

fn step_with_first<S, F>(
    rhs: &mut F,
    y: &S,
    k1: S,
    t: f64,
    dt: f64,
    cfg: &StepperConfig,
) -> Result<StepOutcome<S>, IntegrateError>
where
    S: OdeState,
    F: FnMut(f64, &S) -> Result<S, ModelError>,
{
    let mut ks: Vec<S> = Vec::with_capacity(7);
    ks.push(k1);
    for stage in 1..7 {
        let terms: Vec<(f64, &S)> = (0..stage).map(|j| (A[stage][j], &ks[j])).collect();
        let ys = combine(y, dt, &terms);
        let k = call(rhs, t + C[stage] * dt, &ys)?;
        ks.push(k);
    }
    let terms: Vec<(f64, &S)> = (0..6).map(|j| (A[6][j], &ks[j])).collect();
    let y_new = combine(y, dt, &terms);
    if !is_finite(&y_new) {
        return Err(IntegrateError::BlowUp { time: t + dt });
    }
    let mut zero = y.clone();
    for p in zero.parts_mut() {
        p.iter_mut().for_each(|v| *v = 0.0);
    }
    let err_terms: Vec<(f64, &S)> = (0..7).map(|j| (E[j], &ks[j])).collect();
    let err_estimate = max_norm(&combine(&zero, dt, &err_terms));
    let scale = cfg.abs_tol + cfg.rel_tol * max_norm(y).max(max_norm(&y_new));
    let err_ratio = err_estimate / scale;
    let factor = if err_ratio == 0.0 {
        5.0
    } else {
        (cfg.safety * err_ratio.powf(-0.2)).clamp(0.2, 5.0)
    };
    let k_last = ks.pop().expect("seven stages");
    Ok(StepOutcome {
        y_new,
        err_estimate,
        err_ratio,
        dt_next: (dt * factor).min(cfg.max_dt),
        k_last,
    })
}

/// One Dormand–Prince step of size `dt` from `(t, y)`.
///
/// `dt_next = safety * dt * (1 / ratio)^{1/5}`, clamped to `[0.2 dt, 5 dt]`
/// and to `max_dt`.
pub fn step_once<S, F>(
    rhs: &mut F,
    y: &S,
    t: f64,
    dt: f64,
    cfg: &StepperConfig,
) -> Result<StepOutcome<S>, IntegrateError>
where
    S: OdeState,
    F: FnMut(f64, &S) -> Result<S, ModelError>,
{
    if !(dt > 0.0) {
        return Err(IntegrateError::Config(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let k1 = call(rhs, t, y)?;
    step_with_first(rhs, y, k1, t, dt, cfg)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
}

/// States at every scheduled time together with step statistics.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub snapshots: Vec<(f64, S)>,
    pub stats: IntegrationStats,
}

const MIN_DT: f64 = 1e-14;

/// Integrates from `t = 0` and returns the state at every scheduled time.
pub fn integrate<S, F>(
    rhs: F,
    y0: S,
    schedule: &SnapshotSchedule,
    cfg: &StepperConfig,
) -> Result<Vec<(f64, S)>, IntegrateError>
where
    S: OdeState,
    F: FnMut(f64, &S) -> Result<S, ModelError>,
{
    integrate_with_stats(rhs, y0, schedule, cfg).map(|t| t.snapshots)
}

pub fn integrate_with_stats<S, F>(
    mut rhs: F,
    y0: S,
    schedule: &SnapshotSchedule,
    cfg: &StepperConfig,
) -> Result<Trajectory<S>, IntegrateError>
where
    S: OdeState,
    F: FnMut(f64, &S) -> Result<S, ModelError>,
{
    cfg.validate()?;
    if !is_finite(&y0) {
        return Err(IntegrateError::BlowUp { time: 0.0 });
    }
    let mut stats = IntegrationStats::default();
    let mut snapshots = Vec::with_capacity(schedule.times().len());
    let mut t = 0.0f64;
    let mut y = y0;
    let mut dt = cfg.initial_dt.min(cfg.max_dt);
    let mut k1: Option<S> = None;
    let mut steps = 0usize;

    for &target in schedule.times() {
        while t < target {
            if steps >= cfg.max_steps {
                return Err(IntegrateError::Budget { steps, time: t });
            }
            let hits = t + dt >= target;
            let h = if hits { target - t } else { dt };
            if h < MIN_DT && !hits {
                return Err(IntegrateError::Stiff { time: t, dt: h });
            }
            let first = match k1.take() {
                Some(k) => k,
                None => {
                    stats.rhs_evaluations += 1;
                    call(&mut rhs, t, &y)?
                }
            };
            stats.rhs_evaluations += 6;
            let out = step_with_first(&mut rhs, &y, first.clone(), t, h, cfg)?;
            steps += 1;
            if out.accepted() {
                stats.accepted += 1;
                t = if hits { target } else { t + h };
                y = out.y_new;
                k1 = Some(out.k_last);
                // A clipped final step says nothing about the natural size.
                if !hits || out.dt_next > dt {
                    dt = out.dt_next;
                }
            } else {
                stats.rejected += 1;
                dt = out.dt_next.min(h);
                k1 = Some(first);
                if dt < MIN_DT {
                    return Err(IntegrateError::Stiff { time: t, dt });
                }
            }
        }
        snapshots.push((target, y.clone()));
    }
    Ok(Trajectory { snapshots, stats })
}
