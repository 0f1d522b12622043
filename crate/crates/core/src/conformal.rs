//! Conformal map from the uniform strip `-μ < ζ < μ` onto the fluid domain
//! over a ridge-like bottom, reflected about the undisturbed surface.
//!
//! The map is built from the trace `b(ξ) = H(x(ξ, -μ))` of the topography on
//! the strip floor. Writing `z` odd in `ζ` with `z(ξ, ±μ) = ±μ(1 + b)` and `x`
//! its harmonic conjugate gives, mode by mode,
//!
//! ```text
//! M(ξ)         = 1 + K * b,   K̂(k) = μk / sinh(μk)
//! x(ξ, -μ) - ξ =     C * b,   Ĉ(k) = -iμ coth(μk)
//! x(ξ,  0) - ξ =     P * b,   P̂(k) = -iμ / sinh(μk)
//! ```
//!
//! with the `k = 0` slot of `C` and `P` fixed to zero (no translation). The
//! trace itself depends on `x(ξ, -μ)`, so `b` is found by relaxed fixed-point
//! iteration with the bottom evaluated pointwise and never differentiated.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use thiserror::Error;

use crate::interp::{hermite, monotone_slopes, TrigInterpolant};
use crate::spectral::{Axis, PeriodicGrid, SpectralField, Spectrum};

/// Threshold on `max |ε m|` above which the small-amplitude model is flagged.
pub const SMALL_AMPLITUDE_LIMIT: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("invalid topography: {0}")]
    InvalidTopography(String),
    #[error("strip map did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("invalid solver option: {0}")]
    InvalidOption(String),
}

/// A single rectangular step of the bottom, `H = height` on
/// `[left, left + width)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub left: f64,
    pub width: f64,
    pub height: f64,
}

pub type BottomFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Bottom perturbation `H(x)`; the bed sits at `z = -μ(1 + H(x))`.
///
/// Every kind is periodic on the computational box and evaluated after
/// wrapping `x` into `[-L, L)`.
#[derive(Clone)]
pub enum Topography {
    Flat,
    Rectangles(Vec<Rectangle>),
    /// Periodic samples at `origin + j * spacing`, linearly interpolated.
    Sampled {
        origin: f64,
        spacing: f64,
        values: Vec<f64>,
    },
    Analytic(BottomFn),
}

impl fmt::Debug for Topography {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topography::Flat => write!(f, "Flat"),
            Topography::Rectangles(r) => f.debug_tuple("Rectangles").field(r).finish(),
            Topography::Sampled { values, .. } => {
                write!(f, "Sampled({} values)", values.len())
            }
            Topography::Analytic(_) => write!(f, "Analytic(..)"),
        }
    }
}

fn wrap(x: f64, half_length: f64) -> f64 {
    (x + half_length).rem_euclid(2.0 * half_length) - half_length
}

impl Topography {
    pub fn rectangles(rects: Vec<Rectangle>) -> Result<Self, MapError> {
        for r in &rects {
            if !(r.width.is_finite() && r.width > 0.0) {
                return Err(MapError::InvalidTopography(format!(
                    "rectangle width must be positive, got {}",
                    r.width
                )));
            }
            if !(r.left.is_finite() && r.height.is_finite()) || 1.0 + r.height <= 0.0 {
                return Err(MapError::InvalidTopography(format!(
                    "rectangle height {} puts the bottom at or above the surface",
                    r.height
                )));
            }
        }
        let mut sorted = rects.clone();
        sorted.sort_by(|a, b| a.left.total_cmp(&b.left));
        for w in sorted.windows(2) {
            if w[0].left + w[0].width > w[1].left {
                return Err(MapError::InvalidTopography(format!(
                    "rectangles starting at {} and {} overlap",
                    w[0].left, w[1].left
                )));
            }
        }
        Ok(Topography::Rectangles(rects))
    }

    pub fn sampled(origin: f64, spacing: f64, values: Vec<f64>) -> Result<Self, MapError> {
        if values.is_empty() || !(spacing > 0.0) {
            return Err(MapError::InvalidTopography("empty sampled bottom".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || 1.0 + **v <= 0.0) {
            return Err(MapError::InvalidTopography(format!(
                "sample {v} puts the bottom at or above the surface"
            )));
        }
        Ok(Topography::Sampled {
            origin,
            spacing,
            values,
        })
    }

    pub fn analytic(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Topography::Analytic(Arc::new(f))
    }

    /// `H(x)` on the periodic box of half-length `half_length`.
    pub fn height(&self, x: f64, half_length: f64) -> f64 {
        let xw = wrap(x, half_length);
        let period = 2.0 * half_length;
        match self {
            Topography::Flat => 0.0,
            Topography::Rectangles(rects) => rects
                .iter()
                .find(|r| (xw - r.left).rem_euclid(period) < r.width)
                .map_or(0.0, |r| r.height),
            Topography::Sampled {
                origin,
                spacing,
                values,
            } => {
                let n = values.len();
                let s = (xw - origin) / spacing;
                let c = s.floor();
                let t = s - c;
                let i = (c as i64).rem_euclid(n as i64) as usize;
                values[i] + t * (values[(i + 1) % n] - values[i])
            }
            Topography::Analytic(f) => f(xw),
        }
    }

    /// Rectangles with each edge replaced by a linear ramp of width `ramp`
    /// centered on it, with the slope. Other kinds return `(H, 0)`.
    pub fn ramped_height(&self, x: f64, half_length: f64, ramp: f64) -> (f64, f64) {
        let Topography::Rectangles(rects) = self else {
            return (self.height(x, half_length), 0.0);
        };
        let period = 2.0 * half_length;
        let step = |d: f64| -> (f64, f64) {
            // Periodic unit step at 0 smeared over [-ramp/2, ramp/2].
            let d = wrap(d, half_length);
            if d <= -0.5 * ramp {
                (0.0, 0.0)
            } else if d >= 0.5 * ramp {
                (1.0, 0.0)
            } else {
                (d / ramp + 0.5, 1.0 / ramp)
            }
        };
        let (mut h, mut slope) = (0.0, 0.0);
        for r in rects {
            if r.width >= period {
                h += r.height;
                continue;
            }
            let (up, s_up) = step(x - r.left);
            let (down, s_down) = step(x - r.left - r.width);
            // Inside the rectangle iff the rising step is on and the falling
            // one is off, counted modulo the period.
            let inside = up - down
                + if wrap(x - r.left, half_length) < wrap(x - r.left - r.width, half_length) {
                    1.0
                } else {
                    0.0
                };
            h += r.height * inside;
            slope += r.height * (s_up - s_down);
        }
        (h, slope)
    }

    pub fn is_flat(&self) -> bool {
        match self {
            Topography::Flat => true,
            Topography::Rectangles(r) => r.iter().all(|r| r.height == 0.0),
            Topography::Sampled { values, .. } => values.iter().all(|v| *v == 0.0),
            Topography::Analytic(_) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripMapOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub relax: f64,
}

impl Default for StripMapOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
            relax: 0.7,
        }
    }
}

/// `μk / sinh(μk)`, equal to 1 at `k = 0` and evaluated without overflow.
pub fn strip_kernel(mu: f64, k: f64) -> f64 {
    let a = (mu * k).abs();
    if a < 1e-8 {
        return 1.0 - a * a / 6.0;
    }
    let e = (-a).exp();
    2.0 * a * e / -(-2.0 * a).exp_m1()
}

fn coth_times_mu(mu: f64, k: f64) -> f64 {
    let a = (mu * k).abs();
    let e2 = (-2.0 * a).exp();
    k.signum() * mu * (1.0 + e2) / -(-2.0 * a).exp_m1()
}

fn csch_times_mu(mu: f64, k: f64) -> f64 {
    let a = (mu * k).abs();
    k.signum() * mu * 2.0 * (-a).exp() / -(-2.0 * a).exp_m1()
}

struct StripSymbols {
    kernel: Vec<Complex64>,
    bottom: Vec<Complex64>,
    surface: Vec<Complex64>,
}

impl StripSymbols {
    fn new(grid: &PeriodicGrid, mu: f64) -> Self {
        let n = grid.n_x();
        let k = grid.wavenumbers().k_x;
        let odd = |f: &dyn Fn(f64) -> f64| -> Vec<Complex64> {
            (0..n)
                .map(|i| {
                    if i == 0 || i == n / 2 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(0.0, -f(k[i]))
                    }
                })
                .collect()
        };
        Self {
            kernel: k
                .iter()
                .map(|&kk| Complex64::new(strip_kernel(mu, kk), 0.0))
                .collect(),
            bottom: odd(&|kk| coth_times_mu(mu, kk)),
            surface: odd(&|kk| csch_times_mu(mu, kk)),
        }
    }
}

/// Solved strip map sampled on the uniform `ξ` grid.
#[derive(Debug, Clone)]
pub struct StripMap {
    grid: PeriodicGrid,
    mu: f64,
    m: Vec<f64>,
    b: Vec<f64>,
    x_surface: Vec<f64>,
    x_bottom: Vec<f64>,
    iterations: usize,
    residual: f64,
    flat: bool,
    m_interp: TrigInterpolant,
    shift_interp: TrigInterpolant,
    inverse_slopes: Vec<f64>,
}

impl StripMap {
    /// The identity map of a flat bottom.
    pub fn flat(grid: &PeriodicGrid, mu: f64) -> Self {
        let grid = grid.x_line();
        let xi = grid.x_nodes();
        Self::assemble(
            grid,
            mu,
            vec![1.0; xi.len()],
            vec![0.0; xi.len()],
            xi.clone(),
            xi,
            1,
            0.0,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        grid: PeriodicGrid,
        mu: f64,
        m: Vec<f64>,
        b: Vec<f64>,
        x_surface: Vec<f64>,
        x_bottom: Vec<f64>,
        iterations: usize,
        residual: f64,
    ) -> Self {
        let origin = -grid.half_length_x();
        let period = grid.period_x();
        let xi = grid.x_nodes();
        let shift: Vec<f64> = x_surface.iter().zip(&xi).map(|(x, s)| x - s).collect();
        let flat = b.iter().all(|v| *v == 0.0);
        let mut table_x = x_surface.clone();
        table_x.push(x_surface[0] + period);
        let mut table_xi = xi;
        table_xi.push(origin + period);
        let inverse_slopes = monotone_slopes(&table_x, &table_xi);
        Self {
            m_interp: TrigInterpolant::new(&m, origin, period),
            shift_interp: TrigInterpolant::new(&shift, origin, period),
            grid,
            mu,
            m,
            b,
            x_surface,
            x_bottom,
            iterations,
            residual,
            flat,
            inverse_slopes,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn xi_nodes(&self) -> Vec<f64> {
        self.grid.x_nodes()
    }

    /// `M(ξ)` at the nodes.
    pub fn m(&self) -> &[f64] {
        &self.m
    }

    /// Bottom trace `b(ξ) = H(x(ξ, -μ))`.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn x_surface(&self) -> &[f64] {
        &self.x_surface
    }

    pub fn x_bottom(&self) -> &[f64] {
        &self.x_bottom
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    /// `M` at an arbitrary `ξ` by band-limited interpolation.
    pub fn m_at(&self, xi: f64) -> f64 {
        if self.flat {
            return 1.0;
        }
        self.m_interp.eval(xi)
    }

    /// `x(ξ, 0)` at an arbitrary `ξ`.
    pub fn x_surface_at(&self, xi: f64) -> f64 {
        if self.flat {
            return xi;
        }
        xi + self.shift_interp.eval(xi)
    }

    fn x_surface_slope_at(&self, xi: f64) -> f64 {
        1.0 + self.shift_interp.eval_deriv(xi)
    }

    /// `ξ(x)` for a single query; see [`invert_map`].
    pub fn xi_at(&self, x: f64) -> f64 {
        if self.flat {
            return x;
        }
        let period = self.grid.period_x();
        let x0 = self.x_surface[0];
        let wraps = ((x - x0) / period).floor();
        let xr = x - wraps * period;
        let n = self.x_surface.len();
        let table_x = |j: usize| {
            if j == n {
                x0 + period
            } else {
                self.x_surface[j]
            }
        };
        let table_xi = |j: usize| self.grid.x_node(0) + j as f64 * self.grid.dx();

        // Bracketing interval by bisection on the monotone table.
        let (mut lo, mut hi) = (0usize, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if table_x(mid) <= xr {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (mut a, mut c) = (table_xi(lo), table_xi(hi));
        let mut xi = hermite(
            table_x(lo),
            table_x(hi),
            a,
            c,
            self.inverse_slopes[lo],
            self.inverse_slopes[hi],
            xr,
        )
        .clamp(a, c);

        // Safeguarded Newton polish on the band-limited surface map.
        let tol = 1e-13 * self.grid.half_length_x().max(1.0);
        for _ in 0..40 {
            let f = self.x_surface_at(xi) - xr;
            if f.abs() <= tol {
                break;
            }
            if f > 0.0 {
                c = xi;
            } else {
                a = xi;
            }
            let slope = self.x_surface_slope_at(xi);
            let mut next = xi - f / slope;
            if !(next > a && next < c) || !slope.is_finite() || slope <= 0.0 {
                next = 0.5 * (a + c);
            }
            if (next - xi).abs() <= 1e-16 * self.grid.half_length_x() {
                xi = next;
                break;
            }
            xi = next;
        }
        xi + wraps * period
    }

    /// CSV with columns `xi,M,x_surface,x_bottom,b`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "xi,M,x_surface,x_bottom,b")?;
        for (i, xi) in self.xi_nodes().iter().enumerate() {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                xi, self.m[i], self.x_surface[i], self.x_bottom[i], self.b[i]
            )?;
        }
        Ok(())
    }
}

/// Columns of a strip-map CSV as written by [`StripMap::write_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct MapTable {
    pub xi: Vec<f64>,
    pub m: Vec<f64>,
    pub x_surface: Vec<f64>,
    pub x_bottom: Vec<f64>,
    pub b: Vec<f64>,
}

pub fn read_map_csv<R: BufRead>(r: R) -> io::Result<MapTable> {
    let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "xi,M,x_surface,x_bottom,b" {
        return Err(bad(format!("unexpected strip-map header {header:?}")));
    }
    let mut t = MapTable {
        xi: vec![],
        m: vec![],
        x_surface: vec![],
        x_bottom: vec![],
        b: vec![],
    };
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("line {}: {e}", n + 2)))?;
        if cols.len() != 5 {
            return Err(bad(format!("line {}: expected 5 columns", n + 2)));
        }
        t.xi.push(cols[0]);
        t.m.push(cols[1]);
        t.x_surface.push(cols[2]);
        t.x_bottom.push(cols[3]);
        t.b.push(cols[4]);
    }
    Ok(t)
}

fn apply_symbol(grid: &PeriodicGrid, values: &[f64], symbol: &[Complex64]) -> Vec<f64> {
    let field = SpectralField::from_raw(*grid, values.to_vec());
    Spectrum::forward(&field)
        .apply_axis_symbol(Axis::X, symbol)
        .inverse()
        .into_values()
}

/// Width of the ramp replacing a rectangle edge, in grid cells.
const RAMP_CELLS: f64 = 0.5;

/// Widest ramp in the continuation towards [`RAMP_CELLS`].
const RAMP_START: f64 = 0.25;

/// Solves for the strip map of `topo` with strip half-height `mu`.
///
/// Smooth bottoms use the relaxed fixed point `b <- (1 - relax) b + relax H(x_bottom)`.
/// Rectangles use damped Newton with edge ramps shrinking to half a cell;
/// `max_iter` then bounds each ramp stage and `relax` is ignored. The
/// reported iteration count sums the stages.
pub fn solve_strip_map(
    topo: &Topography,
    mu: f64,
    grid: &PeriodicGrid,
    opts: StripMapOptions,
) -> Result<StripMap, MapError> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(MapError::InvalidOption(format!(
            "mu must be positive, got {mu}"
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(MapError::InvalidOption(format!(
            "tol must be positive, got {}",
            opts.tol
        )));
    }
    if !(opts.relax > 0.0 && opts.relax <= 1.0) {
        return Err(MapError::InvalidOption(format!(
            "relax must lie in (0, 1], got {}",
            opts.relax
        )));
    }
    if opts.max_iter == 0 {
        return Err(MapError::InvalidOption(
            "max_iter must be at least 1".into(),
        ));
    }
    let grid = grid.x_line();
    let l = grid.half_length_x();
    let xi = grid.x_nodes();
    let symbols = StripSymbols::new(&grid, mu);

    let period = grid.period_x();
    let check = |x: f64, h: f64| -> Result<f64, MapError> {
        if !h.is_finite() || 1.0 + h <= 0.0 {
            return Err(MapError::InvalidTopography(format!(
                "H({x}) = {h} puts the bottom at or above the surface"
            )));
        }
        Ok(h)
    };
    let sample = |x_bottom: &[f64]| -> Result<Vec<f64>, MapError> {
        x_bottom
            .iter()
            .map(|&x| check(x, topo.height(x, l)))
            .collect()
    };
    let bottom_of = |b: &[f64]| -> Vec<f64> {
        let shift = apply_symbol(&grid, b, &symbols.bottom);
        xi.iter().zip(&shift).map(|(s, d)| s + d).collect()
    };

    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut b: Vec<f64>;
    if matches!(topo, Topography::Rectangles(_)) {
        // The trace b climbs each vertical wall while x_bottom stays put, so
        // no pointwise fixed point exists on a grid. Edges become ramps a
        // fraction of a cell wide and b - H(x_bottom) is solved by Newton.
        // Only nodes on a ramp have a nonzero Jacobian row, so each step is a
        // small dense solve in those rows.
        let n = xi.len();
        let mut unit = vec![0.0; n];
        unit[0] = 1.0;
        let column = apply_symbol(&grid, &unit, &symbols.bottom);
        let eval = |b: &[f64], ramp: f64| -> Result<(Vec<f64>, Vec<f64>), MapError> {
            let mut defect = Vec::with_capacity(n);
            let mut slope = Vec::with_capacity(n);
            for (x, bj) in bottom_of(b).into_iter().zip(b) {
                let (h, d) = topo.ramped_height(x, l, ramp);
                defect.push(check(x, h)? - bj);
                slope.push(d);
            }
            Ok((defect, slope))
        };
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let finest = RAMP_CELLS * grid.dx();
        let mut ramps = vec![finest];
        while ramps[ramps.len() - 1] < RAMP_START {
            let w = 2.0 * ramps[ramps.len() - 1];
            ramps.push(w);
        }
        ramps.reverse();
        b = xi
            .iter()
            .map(|&x| topo.ramped_height(x, l, ramps[0]).0)
            .collect();
        let mut r = Vec::new();
        for &ramp in &ramps {
            let stage_start = iterations;
            let (mut r_stage, mut slope) = eval(&b, ramp)?;
            while iterations < stage_start + opts.max_iter {
                iterations += 1;
                let rows: Vec<usize> = (0..n).filter(|&j| slope[j] != 0.0).collect();
                let mut step = r_stage.clone();
                if !rows.is_empty() {
                    let cr = apply_symbol(&grid, &r_stage, &symbols.bottom);
                    let m = rows.len();
                    let mut lhs = nalgebra::DMatrix::<f64>::identity(m, m);
                    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
                    for (a, &j) in rows.iter().enumerate() {
                        rhs[a] = slope[j] * cr[j];
                        for (c, &i) in rows.iter().enumerate() {
                            lhs[(a, c)] -= slope[j] * column[(j + n - i) % n];
                        }
                    }
                    let w = lhs.lu().solve(&rhs).ok_or_else(|| {
                        MapError::InvalidOption("singular Newton system in strip map".into())
                    })?;
                    for (a, &j) in rows.iter().enumerate() {
                        step[j] += w[a];
                    }
                }
                let before = norm(&r_stage);
                let mut scale = 1.0;
                let (next, next_r, next_slope) = loop {
                    let trial: Vec<f64> = b.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
                    let (trial_r, trial_slope) = eval(&trial, ramp)?;
                    if norm(&trial_r) < before || scale < 1e-3 {
                        break (trial, trial_r, trial_slope);
                    }
                    scale *= 0.5;
                };
                residual = scale * norm(&step);
                b = next;
                r_stage = next_r;
                slope = next_slope;
                if residual < opts.tol && norm(&r_stage) < opts.tol {
                    break;
                }
            }
            r = r_stage;
        }
        residual = residual.max(norm(&r));
    } else {
        b = sample(&xi)?;
        while iterations < opts.max_iter {
            iterations += 1;
            let target = sample(&bottom_of(&b))?;
            let mut update: f64 = 0.0;
            for j in 0..b.len() {
                let next = (1.0 - opts.relax) * b[j] + opts.relax * target[j];
                update = update.max((next - b[j]).abs());
                b[j] = next;
            }
            residual = update;
            if update < opts.tol {
                break;
            }
        }
    }
    if residual >= opts.tol {
        return Err(MapError::NonConvergence {
            iterations,
            residual,
        });
    }

    let smooth = apply_symbol(&grid, &b, &symbols.kernel);
    let m: Vec<f64> = smooth.iter().map(|v| 1.0 + v).collect();
    let bottom_shift = apply_symbol(&grid, &b, &symbols.bottom);
    let surface_shift = apply_symbol(&grid, &b, &symbols.surface);
    let x_bottom: Vec<f64> = xi.iter().zip(&bottom_shift).map(|(s, d)| s + d).collect();
    let x_surface: Vec<f64> = xi.iter().zip(&surface_shift).map(|(s, d)| s + d).collect();

    let min_m = m.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_m > 0.0) {
        return Err(MapError::InvalidMap(format!(
            "M reaches {min_m:e}; topography too steep for this solver"
        )));
    }
    let monotone = x_surface.windows(2).all(|w| w[1] > w[0])
        && x_surface[x_surface.len() - 1] < x_surface[0] + period;
    if !monotone {
        return Err(MapError::InvalidMap(
            "surface map x(ξ, 0) is not strictly increasing".into(),
        ));
    }
    Ok(StripMap::assemble(
        grid, mu, m, b, x_surface, x_bottom, iterations, residual,
    ))
}

/// `ξ(x)` for every query. Queries outside one period are wrapped.
pub fn invert_map(map: &StripMap, x_query: &[f64]) -> Vec<f64> {
    x_query.iter().map(|&x| map.xi_at(x)).collect()
}

/// Effective depth `d(x) = M(ξ(x))` and long-wave speed `c = sqrt(d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveDepth {
    pub x_nodes: Vec<f64>,
    pub d_values: Vec<f64>,
    pub c_values: Vec<f64>,
}

/// `d` is stored as `c * c` so that `c^2 = d` holds bit for bit.
pub fn effective_depth(map: &StripMap, x_nodes: &[f64]) -> EffectiveDepth {
    let xi = invert_map(map, x_nodes);
    let c_values: Vec<f64> = xi.iter().map(|&s| map.m_at(s).sqrt()).collect();
    EffectiveDepth {
        x_nodes: x_nodes.to_vec(),
        d_values: c_values.iter().map(|c| c * c).collect(),
        c_values,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallAmplitude {
    /// `m(ξ) = (M(ξ) - 1) / ε` on the `ξ` nodes.
    pub m: Vec<f64>,
    pub max_abs_eps_m: f64,
    /// Set when `max |ε m|` exceeds [`SMALL_AMPLITUDE_LIMIT`].
    pub regime_warning: bool,
}

pub fn small_amplitude_m(map: &StripMap, eps: f64) -> Result<SmallAmplitude, MapError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(MapError::InvalidOption(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let m: Vec<f64> = map.m.iter().map(|v| (v - 1.0) / eps).collect();
    let max_abs_eps_m = map.m.iter().fold(0.0f64, |a, v| a.max((v - 1.0).abs()));
    let regime_warning = max_abs_eps_m > SMALL_AMPLITUDE_LIMIT;
    if regime_warning {
        log::warn!(
            "small-amplitude regime violated: max |eps m| = {max_abs_eps_m:.3} > {SMALL_AMPLITUDE_LIMIT}"
        );
    }
    Ok(SmallAmplitude {
        m,
        max_abs_eps_m,
        regime_warning,
    })
}

/// Effective amplitude `h(x) = m(ξ(x))`.
pub fn effective_amplitude(map: &StripMap, eps: f64, x_nodes: &[f64]) -> Vec<f64> {
    invert_map(map, x_nodes)
        .into_iter()
        .map(|s| (map.m_at(s) - 1.0) / eps)
        .collect()
}

/// Spectral derivative `M_ξ` on the `ξ` nodes.
pub fn deriv_m(map: &StripMap) -> Vec<f64> {
    let field = SpectralField::from_raw(map.grid, map.m.clone());
    Spectrum::forward(&field)
        .deriv_x(1)
        .expect("first derivative is supported")
        .inverse()
        .into_values()
}
