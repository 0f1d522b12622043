//! Right-hand sides of the reduced water-wave models, the Riemann-invariant
//! diagnostic and the conformal-to-physical resampling.
//!
//! All KP-type evaluators share one assembly routine with the terms summed in
//! a fixed order: advection, nonlinearity, topographic, dispersive,
//! transverse. With the dealiasing policy on, the input spectrum is projected
//! onto the two-thirds band before any product is formed and the assembled
//! right-hand side is projected again.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{effective_depth, invert_map, MapError, StripMap};
use crate::interp::PeriodicHermite;
use crate::spectral::{mode_number, PeriodicGrid, SpectralError, SpectralField, Spectrum};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("non-finite value in the {term} term")]
    BlowUp { term: &'static str },
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    KpSlow,
    KpSmall,
    KpClassical,
    KdvConformal,
    KdvPhysical,
    Boussinesq,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::KpSlow,
        ModelKind::KpSmall,
        ModelKind::KpClassical,
        ModelKind::KdvConformal,
        ModelKind::KdvPhysical,
        ModelKind::Boussinesq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::KpSlow => "kp_slow",
            ModelKind::KpSmall => "kp_small",
            ModelKind::KpClassical => "kp_classical",
            ModelKind::KdvConformal => "kdv_conformal",
            ModelKind::KdvPhysical => "kdv_physical",
            ModelKind::Boussinesq => "boussinesq",
        }
    }

    /// KdV variants only make sense on a single line.
    pub fn requires_one_dimension(self) -> bool {
        matches!(self, ModelKind::KdvConformal | ModelKind::KdvPhysical)
    }

    /// Whether the unknown lives on the conformal `ξ` axis.
    pub fn is_conformal(self) -> bool {
        !matches!(self, ModelKind::KdvPhysical | ModelKind::KpClassical)
    }

    /// Kinds whose linear part has constant coefficients.
    pub fn supports_integrating_factor(self) -> bool {
        matches!(self, ModelKind::KpClassical | ModelKind::KpSmall)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ModelError::InvalidParams(format!("unknown model kind {s:?}")))
    }
}

/// Scaling parameters plus the model selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub eps: f64,
    pub mu: f64,
    pub gamma: f64,
    pub kind: ModelKind,
    /// Two-thirds rule on every pointwise product.
    pub dealias: bool,
}

/// Ratios that should stay O(1) for the asymptotic models to be consistent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    pub eps_over_mu2: f64,
    pub gamma_over_mu: f64,
    pub consistent: bool,
}

const REGIME_BAND: (f64, f64) = (0.2, 5.0);

impl ModelParams {
    pub fn new(kind: ModelKind, eps: f64, mu: f64, gamma: f64) -> Result<Self, ModelError> {
        let p = Self {
            eps,
            mu,
            gamma,
            kind,
            dealias: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_dealias(mut self, dealias: bool) -> Self {
        self.dealias = dealias;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(ModelError::InvalidParams(format!("eps = {}", self.eps)));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(ModelError::InvalidParams(format!("mu = {}", self.mu)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(ModelError::InvalidParams(format!("gamma = {}", self.gamma)));
        }
        Ok(())
    }

    /// Records `ε/μ²` and `γ/μ` and warns when either leaves `[0.2, 5]`.
    pub fn regime(&self) -> RegimeReport {
        let eps_over_mu2 = self.eps / (self.mu * self.mu);
        let gamma_over_mu = self.gamma / self.mu;
        let inside = |r: f64| (REGIME_BAND.0..=REGIME_BAND.1).contains(&r);
        let transverse_ok = self.gamma == 0.0 || inside(gamma_over_mu);
        let consistent = inside(eps_over_mu2) && transverse_ok;
        if !consistent {
            log::warn!(
                "parameters outside the KP scaling: eps/mu^2 = {eps_over_mu2:.3}, gamma/mu = {gamma_over_mu:.3}"
            );
        }
        RegimeReport {
            eps_over_mu2,
            gamma_over_mu,
            consistent,
        }
    }
}

/// Frozen topographic coefficients, all sampled on the `n_x` nodes of one
/// line and broadcast along `y`.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    grid: PeriodicGrid,
    pub m: Vec<f64>,
    pub m_xi: Vec<f64>,
    pub sqrt_m: Vec<f64>,
    /// Small-amplitude coefficient `(M - 1) / ε`.
    pub small_m: Vec<f64>,
    /// Effective depth on the physical `x` nodes.
    pub d: Vec<f64>,
    pub c: Vec<f64>,
    pub c_x: Vec<f64>,
    inv_sqrt_m: Vec<f64>,
    inv_m32: Vec<f64>,
    slope_m: Vec<f64>,
    c_over_d: Vec<f64>,
    c_d2: Vec<f64>,
}

fn spectral_slope(grid: &PeriodicGrid, v: &[f64]) -> Vec<f64> {
    Spectrum::forward(&SpectralField::from_raw(*grid, v.to_vec()))
        .deriv_x(1)
        .expect("first derivative is supported")
        .inverse()
        .into_values()
}

impl CoefficientSet {
    /// Builds every coefficient from `M(ξ)` and the effective depth `d(x)`.
    pub fn from_parts(
        grid: &PeriodicGrid,
        m: Vec<f64>,
        d: Vec<f64>,
        eps: f64,
    ) -> Result<Self, ModelError> {
        let line = grid.x_line();
        let n = line.n_x();
        if m.len() != n || d.len() != n {
            return Err(ModelError::InvalidParams(format!(
                "coefficient arrays must have {n} entries"
            )));
        }
        if m.iter().chain(&d).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ModelError::InvalidParams(
                "M and d must be positive and finite".into(),
            ));
        }
        let m_xi = spectral_slope(&line, &m);
        let sqrt_m: Vec<f64> = m.iter().map(|v| v.sqrt()).collect();
        let small_m = if eps > 0.0 {
            m.iter().map(|v| (v - 1.0) / eps).collect()
        } else {
            vec![0.0; n]
        };
        let c: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
        let d: Vec<f64> = c.iter().map(|v| v * v).collect();
        let c_x = spectral_slope(&line, &c);
        let inv_sqrt_m: Vec<f64> = sqrt_m.iter().map(|s| 1.0 / s).collect();
        let inv_m32: Vec<f64> = m.iter().zip(&sqrt_m).map(|(a, s)| 1.0 / (a * s)).collect();
        let slope_m = m_xi.iter().zip(&inv_m32).map(|(a, b)| a * b).collect();
        let c_over_d = c.iter().zip(&d).map(|(a, b)| a / b).collect();
        let c_d2 = c.iter().zip(&d).map(|(a, b)| a * b * b).collect();
        Ok(Self {
            grid: line,
            m,
            m_xi,
            sqrt_m,
            small_m,
            d,
            c,
            c_x,
            inv_sqrt_m,
            inv_m32,
            slope_m,
            c_over_d,
            c_d2,
        })
    }

    pub fn flat(grid: &PeriodicGrid) -> Self {
        let n = grid.n_x();
        Self::from_parts(grid, vec![1.0; n], vec![1.0; n], 1.0)
            .expect("unit coefficients are valid")
    }

    /// Coefficients of a solved strip map; `d` and `c` are sampled on the
    /// uniform `x` nodes that coincide with the `ξ` nodes.
    pub fn from_map(map: &StripMap, eps: f64) -> Result<Self, ModelError> {
        let nodes = map.xi_nodes();
        let depth = effective_depth(map, &nodes);
        Self::from_parts(map.grid(), map.m().to_vec(), depth.d_values, eps)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    fn check(&self, grid: &PeriodicGrid) -> Result<(), ModelError> {
        if grid.n_x() != self.grid.n_x() {
            return Err(ModelError::InvalidParams(format!(
                "coefficients have {} nodes, field has {}",
                self.grid.n_x(),
                grid.n_x()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Factor<'a> {
    Absent,
    Constant(f64),
    Varying(f64, &'a [f64]),
}

impl Factor<'_> {
    #[inline]
    fn at(&self, i: usize) -> f64 {
        match *self {
            Factor::Absent => 0.0,
            Factor::Constant(c) => c,
            Factor::Varying(s, a) => s * a[i],
        }
    }

    fn present(&self) -> bool {
        !matches!(self, Factor::Absent)
    }
}

/// `η_t = -[A η_ξ + B η η_ξ + T η + D η_ξξξ + O ∂_ξ⁻¹(I η_yy)]`.
#[derive(Debug, Clone, Copy)]
struct KpTerms<'a> {
    advection: Factor<'a>,
    nonlinear: Factor<'a>,
    topographic: Factor<'a>,
    dispersive: Factor<'a>,
    transverse_outer: Factor<'a>,
    transverse_inner: Option<&'a [f64]>,
}

impl<'a> KpTerms<'a> {
    fn none() -> Self {
        Self {
            advection: Factor::Absent,
            nonlinear: Factor::Absent,
            topographic: Factor::Absent,
            dispersive: Factor::Absent,
            transverse_outer: Factor::Absent,
            transverse_inner: None,
        }
    }

    fn classical(p: &ModelParams) -> Self {
        Self {
            advection: Factor::Constant(1.0),
            nonlinear: Factor::Constant(1.5 * p.eps),
            dispersive: Factor::Constant(p.mu * p.mu / 6.0),
            transverse_outer: Factor::Constant(0.5 * p.gamma * p.gamma),
            ..Self::none()
        }
    }

    fn slow(coef: &'a CoefficientSet, p: &ModelParams) -> Self {
        Self {
            advection: Factor::Varying(1.0, &coef.inv_sqrt_m),
            nonlinear: Factor::Varying(1.5 * p.eps, &coef.inv_m32),
            topographic: Factor::Varying(0.25 * p.mu * p.mu, &coef.slope_m),
            dispersive: Factor::Varying(p.mu * p.mu / 6.0, &coef.inv_sqrt_m),
            transverse_outer: Factor::Varying(0.5 * p.gamma * p.gamma, &coef.m),
            transverse_inner: Some(&coef.sqrt_m),
        }
    }

    fn small(advection: &'a [f64], p: &ModelParams) -> Self {
        Self {
            advection: Factor::Varying(1.0, advection),
            ..Self::classical(p)
        }
    }

    fn physical(coef: &'a CoefficientSet, p: &ModelParams) -> Self {
        Self {
            advection: Factor::Varying(1.0, &coef.c),
            nonlinear: Factor::Varying(1.5 * p.eps, &coef.c_over_d),
            topographic: Factor::Varying(0.5 * p.mu * p.mu, &coef.c_x),
            dispersive: Factor::Varying(p.mu * p.mu / 6.0, &coef.c_d2),
            ..Self::none()
        }
    }

    fn without_transverse(mut self) -> Self {
        self.transverse_outer = Factor::Absent;
        self.transverse_inner = None;
        self
    }
}

fn check_term(values: &[f64], term: &'static str) -> Result<(), ModelError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::BlowUp { term })
    }
}

fn project(field: SpectralField, dealias: bool) -> SpectralField {
    if dealias {
        let mut s = Spectrum::forward(&field);
        s.truncate_two_thirds();
        s.inverse()
    } else {
        field
    }
}

fn kp_assemble(
    eta: &SpectralField,
    terms: KpTerms<'_>,
    dealias: bool,
) -> Result<SpectralField, ModelError> {
    check_term(eta.values(), "input")?;
    let grid = *eta.grid();
    let n_y = grid.n_y();
    let mut hat = Spectrum::forward(eta);
    if dealias {
        hat.truncate_two_thirds();
    }
    let needs_eta = terms.nonlinear.present() || terms.topographic.present();
    let eta_p = if needs_eta && dealias {
        Some(hat.inverse())
    } else {
        None
    };
    let eta_p = eta_p.as_ref().unwrap_or(eta);

    let eta_x = if terms.advection.present() || terms.nonlinear.present() {
        let f = hat.deriv_x(1)?.inverse();
        check_term(f.values(), "advection")?;
        Some(f)
    } else {
        None
    };
    let eta_xxx = if terms.dispersive.present() {
        let f = hat.deriv_x(3)?.inverse();
        check_term(f.values(), "dispersive")?;
        Some(f)
    } else {
        None
    };
    let transverse = if terms.transverse_outer.present() && n_y > 1 {
        let mut g = hat.deriv_y(2)?.inverse();
        if let Some(inner) = terms.transverse_inner {
            g = g.scale_rows(inner);
        }
        let mut g_hat = Spectrum::forward(&g);
        if dealias {
            g_hat.truncate_two_thirds();
        }
        let f = g_hat.antideriv_x().inverse();
        check_term(f.values(), "transverse")?;
        Some(f)
    } else {
        None
    };

    let mut out = vec![0.0; grid.len()];
    out.par_chunks_mut(n_y)
        .enumerate()
        .try_for_each(|(i, row)| -> Result<(), ModelError> {
            let adv = terms.advection.at(i);
            let nl = terms.nonlinear.at(i);
            let topo = terms.topographic.at(i);
            let disp = terms.dispersive.at(i);
            let outer = terms.transverse_outer.at(i);
            for (j, slot) in row.iter_mut().enumerate() {
                let idx = i * n_y + j;
                let mut acc = 0.0;
                if let Some(ex) = &eta_x {
                    let ex = ex.values()[idx];
                    if terms.advection.present() {
                        acc += adv * ex;
                    }
                    if terms.nonlinear.present() {
                        let v = nl * (eta_p.values()[idx] * ex);
                        if !v.is_finite() {
                            return Err(ModelError::BlowUp { term: "nonlinear" });
                        }
                        acc += v;
                    }
                }
                if terms.topographic.present() {
                    let v = topo * eta_p.values()[idx];
                    if !v.is_finite() {
                        return Err(ModelError::BlowUp {
                            term: "topographic",
                        });
                    }
                    acc += v;
                }
                if let Some(e3) = &eta_xxx {
                    acc += disp * e3.values()[idx];
                }
                if let Some(t) = &transverse {
                    acc += outer * t.values()[idx];
                }
                *slot = -acc;
            }
            Ok(())
        })?;
    let out = project(SpectralField::from_raw(grid, out), dealias);
    check_term(out.values(), "assembled")?;
    Ok(out)
}

fn transverse_active(p: &ModelParams, grid: &PeriodicGrid) -> bool {
    p.gamma != 0.0 && grid.n_y() > 1
}

/// Variable-coefficient KP for slowly varying `M`.
pub fn rhs_kp_slow(
    eta: &SpectralField,
    coef: &CoefficientSet,
    p: &ModelParams,
) -> Result<SpectralField, ModelError> {
    coef.check(eta.grid())?;
    let mut terms = KpTerms::slow(coef, p);
    if !transverse_active(p, eta.grid()) {
        terms = terms.without_transverse();
    }
    kp_assemble(eta, terms, p.dealias)
}

/// KP for small-amplitude topography, `M = 1 + ε m`.
pub fn rhs_kp_small(
    eta: &SpectralField,
    coef: &CoefficientSet,
    p: &ModelParams,
) -> Result<SpectralField, ModelError> {
    coef.check(eta.grid())?;
    let advection: Vec<f64> = coef.small_m.iter().map(|m| 1.0 - 0.5 * p.eps * m).collect();
    let mut terms = KpTerms::small(&advection, p);
    if !transverse_active(p, eta.grid()) {
        terms = terms.without_transverse();
    }
    kp_assemble(eta, terms, p.dealias)
}

/// Constant-depth KP.
pub fn rhs_kp_classical(eta: &SpectralField, p: &ModelParams) -> Result<SpectralField, ModelError> {
    let mut terms = KpTerms::classical(p);
    if !transverse_active(p, eta.grid()) {
        terms = terms.without_transverse();
    }
    kp_assemble(eta, terms, p.dealias)
}

fn require_line(eta: &SpectralField, what: &str) -> Result<(), ModelError> {
    if eta.grid().is_one_dimensional() {
        Ok(())
    } else {
        Err(ModelError::InvalidParams(format!(
            "{what} needs a 1D field"
        )))
    }
}

/// KdV in conformal variables: the `γ = 0` restriction of [`rhs_kp_slow`].
pub fn rhs_kdv_conformal(
    eta: &SpectralField,
    coef: &CoefficientSet,
    p: &ModelParams,
) -> Result<SpectralField, ModelError> {
    require_line(eta, "kdv_conformal")?;
    let p = ModelParams { gamma: 0.0, ..*p };
    rhs_kp_slow(eta, coef, &p)
}

/// KdV for slowly varying effective depth written on the physical `x` axis.
pub fn rhs_kdv_physical(
    eta: &SpectralField,
    coef: &CoefficientSet,
    p: &ModelParams,
) -> Result<SpectralField, ModelError> {
    require_line(eta, "kdv_physical")?;
    coef.check(eta.grid())?;
    kp_assemble(eta, KpTerms::physical(coef, p), p.dealias)
}

/// Surface elevation and `u = φ_ξ` of the reduced Boussinesq pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BoussinesqState {
    pub eta: SpectralField,
    pub u: SpectralField,
}

impl BoussinesqState {
    pub fn new(eta: SpectralField, u: SpectralField) -> Result<Self, ModelError> {
        if eta.grid() != u.grid() {
            return Err(SpectralError::GridMismatch.into());
        }
        eta.check_finite()?;
        u.check_finite()?;
        Ok(Self { eta, u })
    }

    /// Right-moving initial data: `u = sqrt(M) η`, i.e. `R_- = 0`.
    pub fn right_moving(eta: SpectralField, coef: &CoefficientSet) -> Self {
        let u = eta.scale_rows(&coef.sqrt_m);
        Self { eta, u }
    }
}

/// Time derivative of the Boussinesq pair. The `u` equation is solved for
/// `u_t` through `(1 - (μ²/3) ∂_ξξ)⁻¹`.
pub fn rhs_boussinesq(
    state: &BoussinesqState,
    coef: &CoefficientSet,
    p: &ModelParams,
) -> Result<BoussinesqState, ModelError> {
    let grid = *state.eta.grid();
    if state.u.grid() != &grid {
        return Err(SpectralError::GridMismatch.into());
    }
    coef.check(&grid)?;
    check_term(state.eta.values(), "input")?;
    check_term(state.u.values(), "input")?;
    let n_y = grid.n_y();
    let dealias = p.dealias;

    let mut eta_hat = Spectrum::forward(&state.eta);
    let mut u_hat = Spectrum::forward(&state.u);
    if dealias {
        eta_hat.truncate_two_thirds();
        u_hat.truncate_two_thirds();
    }
    let (eta_p, u_p) = if dealias {
        (eta_hat.inverse(), u_hat.inverse())
    } else {
        (state.eta.clone(), state.u.clone())
    };

    let u_x = u_hat.deriv_x(1)?.inverse();
    let eta_x = eta_hat.deriv_x(1)?.inverse();
    let transverse = if transverse_active(p, &grid) {
        Some(u_hat.antideriv_x().deriv_y(2)?.inverse())
    } else {
        None
    };

    let differentiate =
        |values: Vec<f64>, term: &'static str| -> Result<SpectralField, ModelError> {
            check_term(&values, term)?;
            let mut h = Spectrum::forward(&SpectralField::from_raw(grid, values));
            if dealias {
                h.truncate_two_thirds();
            }
            Ok(h.deriv_x(1)?.inverse())
        };
    let mut flux = Vec::with_capacity(grid.len());
    let mut kinetic = Vec::with_capacity(grid.len());
    for i in 0..grid.n_x() {
        let inv_m = 1.0 / coef.m[i];
        for j in 0..n_y {
            let idx = i * n_y + j;
            let e = eta_p.values()[idx];
            let u = u_p.values()[idx];
            flux.push(e * u * inv_m);
            let w = u * inv_m;
            kinetic.push(w * w);
        }
    }
    let flux_x = differentiate(flux, "nonlinear")?;
    let kinetic_x = differentiate(kinetic, "nonlinear")?;

    let g2 = p.gamma * p.gamma;
    let mut eta_t = vec![0.0; grid.len()];
    let mut u_rhs = vec![0.0; grid.len()];
    for i in 0..grid.n_x() {
        let m = coef.m[i];
        for j in 0..n_y {
            let idx = i * n_y + j;
            let mut acc = u_x.values()[idx];
            if let Some(t) = &transverse {
                acc += g2 * m * m * t.values()[idx];
            }
            acc += p.eps * flux_x.values()[idx];
            eta_t[idx] = -acc / m;
            u_rhs[idx] = -(eta_x.values()[idx] + 0.5 * p.eps * kinetic_x.values()[idx]);
        }
    }
    check_term(&eta_t, "assembled")?;

    let mu2 = p.mu * p.mu;
    let kx = grid.wavenumbers().k_x;
    let mut u_t = Spectrum::forward(&SpectralField::from_raw(grid, u_rhs))
        .map_modes(|i, _| Complex64::new(1.0 / (1.0 + mu2 * kx[i] * kx[i] / 3.0), 0.0));
    if dealias {
        u_t.truncate_two_thirds();
    }
    let u_t = u_t.inverse();
    check_term(u_t.values(), "helmholtz")?;
    Ok(BoussinesqState {
        eta: project(SpectralField::from_raw(grid, eta_t), dealias),
        u: u_t,
    })
}

/// `R_± = u ± sqrt(M) η`.
pub fn riemann_invariants(
    state: &BoussinesqState,
    coef: &CoefficientSet,
) -> Result<(SpectralField, SpectralField), ModelError> {
    coef.check(state.eta.grid())?;
    let s = state.eta.scale_rows(&coef.sqrt_m);
    let plus = state.u.zip_with(&s, |u, v| u + v)?;
    let minus = state.u.zip_with(&s, |u, v| u - v)?;
    Ok((plus, minus))
}

fn resample_lines(field: &SpectralField, queries: &[f64]) -> SpectralField {
    let grid = *field.grid();
    let n_y = grid.n_y();
    let interps: Vec<PeriodicHermite> = (0..n_y)
        .map(|j| PeriodicHermite::new(field.x_line(j), grid.x_node(0), grid.dx()))
        .collect();
    let mut values = vec![0.0; grid.len()];
    values
        .par_chunks_mut(n_y)
        .zip(queries.par_iter())
        .for_each(|(row, &q)| {
            for (v, ip) in row.iter_mut().zip(&interps) {
                *v = ip.eval(q);
            }
        });
    SpectralField::from_raw(grid, values)
}

/// Resamples a conformal-variable field onto physical nodes,
/// `η_phys(x, y) = η(ξ(x), y)`.
pub fn to_physical(
    eta: &SpectralField,
    map: &StripMap,
    x_grid: &[f64],
) -> Result<SpectralField, ModelError> {
    if x_grid.len() != eta.grid().n_x() || map.grid().n_x() != eta.grid().n_x() {
        return Err(ModelError::InvalidParams(format!(
            "to_physical needs {} x nodes and a map on the same grid",
            eta.grid().n_x()
        )));
    }
    let xi = invert_map(map, x_grid);
    Ok(resample_lines(eta, &xi))
}

/// Inverse of [`to_physical`]: samples a field given on the uniform physical
/// nodes at `x(ξ_j, 0)`.
pub fn to_conformal(eta_phys: &SpectralField, map: &StripMap) -> Result<SpectralField, ModelError> {
    if map.grid().n_x() != eta_phys.grid().n_x() {
        return Err(ModelError::InvalidParams(
            "map and field grids differ".into(),
        ));
    }
    Ok(resample_lines(eta_phys, map.x_surface()))
}

/// Linear dispersion relation of the constant-coefficient KP operator,
/// `ω(k, l) = k - μ²k³/6 + γ²l²/(2k)`.
pub fn kp_frequency(k: f64, l: f64, mu: f64, gamma: f64) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    k - mu * mu * k * k * k / 6.0 + gamma * gamma * l * l / (2.0 * k)
}

/// Boussinesq pair frequency for the right-moving branch,
/// `ω² = (k² + γ²l²) / (1 + μ²k²/3)` with `M = 1`.
pub fn boussinesq_frequency(k: f64, l: f64, mu: f64, gamma: f64) -> f64 {
    ((k * k + gamma * gamma * l * l) / (1.0 + mu * mu * k * k / 3.0)).sqrt()
}

/// Exact exponential treatment of the constant-coefficient linear part of
/// `kp_classical` and `kp_small`.
///
/// The interaction variable is `v̂ = e^{iωt} η̂`; it is real in physical space
/// because `ω` is odd under `(k, l) -> (-k, -l)`.
#[derive(Debug, Clone)]
pub struct IntegratingFactor {
    grid: PeriodicGrid,
    omega: Vec<f64>,
    params: ModelParams,
}

impl IntegratingFactor {
    pub fn new(grid: &PeriodicGrid, p: &ModelParams) -> Result<Self, ModelError> {
        if !p.kind.supports_integrating_factor() {
            return Err(ModelError::InvalidParams(format!(
                "integrating factor is only available for kp_classical and kp_small, not {}",
                p.kind
            )));
        }
        let ks = grid.wavenumbers();
        let (n_x, n_y) = (grid.n_x(), grid.n_y());
        let gamma = if transverse_active(p, grid) {
            p.gamma
        } else {
            0.0
        };
        let mut omega = vec![0.0; grid.len()];
        for i in 0..n_x {
            let mx = mode_number(i, n_x);
            let nyquist_x = i == n_x / 2;
            let keep_x = 3 * mx.unsigned_abs() as usize <= n_x;
            for j in 0..n_y {
                let keep_y = n_y == 1 || 3 * mode_number(j, n_y).unsigned_abs() as usize <= n_y;
                if nyquist_x || (p.dealias && !(keep_x && keep_y)) {
                    continue;
                }
                omega[i * n_y + j] = kp_frequency(ks.k_x[i], ks.k_y[j], p.mu, gamma);
            }
        }
        Ok(Self {
            grid: *grid,
            omega,
            params: *p,
        })
    }

    fn rotate(&self, field: &SpectralField, t: f64) -> SpectralField {
        let n_y = self.grid.n_y();
        Spectrum::forward(field)
            .map_modes(|i, j| {
                let (s, c) = (self.omega[i * n_y + j] * t).sin_cos();
                Complex64::new(c, s)
            })
            .inverse()
    }

    /// `v(t)` from `η(t)`.
    pub fn to_interaction(&self, t: f64, eta: &SpectralField) -> SpectralField {
        self.rotate(eta, t)
    }

    /// `η(t)` from `v(t)`.
    pub fn from_interaction(&self, t: f64, v: &SpectralField) -> SpectralField {
        self.rotate(v, -t)
    }

    /// Time derivative of the interaction variable.
    pub fn rhs(
        &self,
        t: f64,
        v: &SpectralField,
        coef: &CoefficientSet,
    ) -> Result<SpectralField, ModelError> {
        let eta = self.from_interaction(t, v);
        let p = &self.params;
        let advection: Vec<f64>;
        let mut terms = KpTerms::none();
        terms.nonlinear = Factor::Constant(1.5 * p.eps);
        if p.kind == ModelKind::KpSmall {
            coef.check(v.grid())?;
            advection = coef.small_m.clone();
            terms.advection = Factor::Varying(-0.5 * p.eps, &advection);
        }
        let n = kp_assemble(&eta, terms, p.dealias)?;
        Ok(self.to_interaction(t, &n))
    }
}

/// Angular wavenumber of mode `m` on a box of half-length `l`.
pub fn mode_wavenumber(m: i64, half_length: f64) -> f64 {
    m as f64 * PI / half_length
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kind: ModelKind, eps: f64, mu: f64, gamma: f64) -> ModelParams {
        ModelParams::new(kind, eps, mu, gamma).unwrap()
    }

    fn smooth_m(grid: &PeriodicGrid) -> Vec<f64> {
        let l = grid.half_length_x();
        grid.x_nodes()
            .iter()
            .map(|x| 1.0 + 0.2 * (PI * x / l).cos())
            .collect()
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!("kp".parse::<ModelKind>().is_err());
    }

    #[test]
    fn regime_ratios() {
        let p = params(ModelKind::KpSlow, 0.05, 0.05f64.sqrt(), 0.05f64.sqrt());
        let r = p.regime();
        assert!((r.eps_over_mu2 - 1.0).abs() < 1e-12);
        assert!((r.gamma_over_mu - 1.0).abs() < 1e-12);
        assert!(r.consistent);
        let off = params(ModelKind::KpSlow, 0.5, 0.1, 0.1);
        assert!(!off.regime().consistent);
        assert!(ModelParams::new(ModelKind::KpSlow, 0.1, 0.0, 0.1).is_err());
    }

    #[test]
    fn zero_field_gives_zero_rhs() {
        let grid = PeriodicGrid::new(32, 16, 10.0, 10.0).unwrap();
        let coef =
            CoefficientSet::from_parts(&grid, smooth_m(&grid), smooth_m(&grid), 0.05).unwrap();
        let z = SpectralField::zeros(grid);
        let p = params(ModelKind::KpSlow, 0.05, 0.2, 0.2);
        assert_eq!(rhs_kp_slow(&z, &coef, &p).unwrap().max_abs(), 0.0);
        assert_eq!(rhs_kp_small(&z, &coef, &p).unwrap().max_abs(), 0.0);
        assert_eq!(rhs_kp_classical(&z, &p).unwrap().max_abs(), 0.0);
        let state = BoussinesqState::new(z.clone(), z.clone()).unwrap();
        let d = rhs_boussinesq(&state, &coef, &p).unwrap();
        assert_eq!(d.eta.max_abs(), 0.0);
        assert_eq!(d.u.max_abs(), 0.0);
        let line = grid.x_line();
        let coef1 =
            CoefficientSet::from_parts(&line, smooth_m(&line), smooth_m(&line), 0.05).unwrap();
        let z1 = SpectralField::zeros(line);
        assert_eq!(rhs_kdv_physical(&z1, &coef1, &p).unwrap().max_abs(), 0.0);
        assert_eq!(rhs_kdv_conformal(&z1, &coef1, &p).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn kdv_variants_need_a_line() {
        let grid = PeriodicGrid::new(16, 4, 1.0, 1.0).unwrap();
        let coef = CoefficientSet::flat(&grid);
        let p = params(ModelKind::KdvConformal, 0.05, 0.2, 0.0);
        let z = SpectralField::zeros(grid);
        assert!(rhs_kdv_conformal(&z, &coef, &p).is_err());
        assert!(rhs_kdv_physical(&z, &coef, &p).is_err());
    }

    #[test]
    fn blow_up_names_the_term() {
        let grid = PeriodicGrid::line(16, 1.0).unwrap();
        let p = params(ModelKind::KpClassical, 0.05, 0.2, 0.0);
        let mut v = vec![0.0; 16];
        v[3] = f64::INFINITY;
        let f = SpectralField::from_raw(grid, v);
        assert_eq!(
            rhs_kp_classical(&f, &p),
            Err(ModelError::BlowUp { term: "input" })
        );
        let huge = SpectralField::from_fn(grid, |x, _| 1e200 * (PI * x).sin());
        assert_eq!(
            rhs_kp_classical(&huge, &p),
            Err(ModelError::BlowUp { term: "nonlinear" })
        );
    }

    #[test]
    fn kdv_conformal_is_kp_slow_without_transverse() {
        let line = PeriodicGrid::line(128, 15.0).unwrap();
        let coef =
            CoefficientSet::from_parts(&line, smooth_m(&line), smooth_m(&line), 0.05).unwrap();
        let eta = SpectralField::from_fn(line, |x, _| (-(x - 2.0) * (x - 2.0)).exp());
        let p = params(ModelKind::KpSlow, 0.05, 0.2, 0.3);
        let a = rhs_kdv_conformal(&eta, &coef, &p).unwrap();
        let b = rhs_kp_slow(&eta, &coef, &ModelParams { gamma: 0.0, ..p }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kp_slow_matches_term_by_term_oracle() {
        // Single mode η = sin(kξ) and M = 1 + 0.2 cos(πξ/L): every term is
        // assembled from closed-form derivatives.
        let l = 20.0;
        let grid = PeriodicGrid::line(256, l).unwrap();
        let kk = 3.0 * PI / l;
        let q = PI / l;
        let (eps, mu) = (0.05, 0.3);
        let m_of = |x: f64| 1.0 + 0.2 * (q * x).cos();
        let mx_of = |x: f64| -0.2 * q * (q * x).sin();
        let coef =
            CoefficientSet::from_parts(&grid, smooth_m(&grid), smooth_m(&grid), eps).unwrap();
        let eta = SpectralField::from_fn(grid, |x, _| (kk * x).sin());
        let p = params(ModelKind::KpSlow, eps, mu, 0.0);
        for dealias in [true, false] {
            let out = rhs_kp_slow(&eta, &coef, &p.with_dealias(dealias)).unwrap();
            for (i, x) in grid.x_nodes().into_iter().enumerate() {
                let m = m_of(x);
                let e = (kk * x).sin();
                let ex = kk * (kk * x).cos();
                let exxx = -kk * kk * kk * (kk * x).cos();
                let expected = -(ex / m.sqrt()
                    + 1.5 * eps * e * ex / (m * m.sqrt())
                    + mu * mu / 4.0 * mx_of(x) / (m * m.sqrt()) * e
                    + mu * mu / 6.0 * exxx / m.sqrt());
                assert!(
                    (out.at(i, 0) - expected).abs() < 1e-10,
                    "dealias {dealias} x {x}"
                );
            }
        }
    }

    #[test]
    fn kdv_physical_matches_term_by_term_oracle() {
        let l = 20.0;
        let grid = PeriodicGrid::line(256, l).unwrap();
        let kk = 2.0 * PI / l;
        let q = PI / l;
        let (eps, mu) = (0.05, 0.3);
        let d_of = |x: f64| 1.0 + 0.2 * (q * x).cos();
        let dx_of = |x: f64| -0.2 * q * (q * x).sin();
        let coef =
            CoefficientSet::from_parts(&grid, smooth_m(&grid), smooth_m(&grid), eps).unwrap();
        let eta = SpectralField::from_fn(grid, |x, _| (kk * x).cos());
        let p = params(ModelKind::KdvPhysical, eps, mu, 0.0);
        let out = rhs_kdv_physical(&eta, &coef, &p).unwrap();
        for (i, x) in grid.x_nodes().into_iter().enumerate() {
            let d = d_of(x);
            let c = d.sqrt();
            let c_x = dx_of(x) / (2.0 * c);
            let e = (kk * x).cos();
            let ex = -kk * (kk * x).sin();
            let exxx = kk * kk * kk * (kk * x).sin();
            let expected = -(c * ex
                + 1.5 * eps * c / d * e * ex
                + mu * mu / 6.0 * c * d * d * exxx
                + mu * mu * c_x / 2.0 * e);
            assert!((out.at(i, 0) - expected).abs() < 1e-10, "x {x}");
        }
    }

    #[test]
    fn flat_physical_kdv_is_classical() {
        let grid = PeriodicGrid::line(128, 10.0).unwrap();
        let coef = CoefficientSet::flat(&grid);
        let eta = SpectralField::from_fn(grid, |x, _| 0.5 / (x * 0.8).cosh().powi(2));
        let p = params(ModelKind::KdvPhysical, 0.05, 0.2, 0.0);
        let a = rhs_kdv_physical(&eta, &coef, &p).unwrap();
        let b = rhs_kp_classical(&eta, &p).unwrap();
        assert!(a.zip_with(&b, |x, y| x - y).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn soliton_is_a_travelling_wave_of_classical_rhs() {
        // Balancing η_t + c η_ξ = 0 against the KdV terms for a sech² profile
        // gives κ² = 3εa / (4μ²) and c = 1 + εa/2.
        let (eps, mu2, a): (f64, f64, f64) = (0.05, 0.05, 1.0);
        let kappa = (3.0 * eps * a / (4.0 * mu2)).sqrt();
        let speed = 1.0 + eps * a / 2.0;
        let grid = PeriodicGrid::line(1024, 30.0).unwrap();
        let sech2 = |x: f64| 1.0 / (kappa * x).cosh().powi(2);
        let eta = SpectralField::from_fn(grid, |x, _| a * sech2(x));
        let p = params(ModelKind::KpClassical, eps, mu2.sqrt(), 0.0);
        let rhs = rhs_kp_classical(&eta, &p).unwrap();
        for (i, x) in grid.x_nodes().into_iter().enumerate() {
            let eta_x = -2.0 * a * kappa * sech2(x) * (kappa * x).tanh();
            assert!((rhs.at(i, 0) + speed * eta_x).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_modes_follow_kp_dispersion() {
        let grid = PeriodicGrid::new(64, 32, 10.0, 8.0).unwrap();
        let (mu, gamma) = (0.25, 0.3);
        let p = params(ModelKind::KpClassical, 0.0, mu, gamma);
        for (mx, my) in [(1i64, 0i64), (3, 2), (5, -4), (2, 7)] {
            let k = mode_wavenumber(mx, 10.0);
            let l = mode_wavenumber(my, 8.0);
            let eta = SpectralField::from_fn(grid, |x, y| (k * x + l * y).cos());
            let rhs = rhs_kp_classical(&eta, &p).unwrap();
            let w = kp_frequency(k, l, mu, gamma);
            let expected = SpectralField::from_fn(grid, |x, y| w * (k * x + l * y).sin());
            let err = rhs.zip_with(&expected, |a, b| a - b).unwrap().max_abs();
            assert!(err < 1e-12, "mode ({mx},{my}) err {err}");
        }
    }

    #[test]
    fn constant_m_slows_small_amplitude_advection() {
        let grid = PeriodicGrid::line(64, 10.0).unwrap();
        let (eps, m0) = (0.05, 0.8);
        let m = vec![1.0 + eps * m0; 64];
        let coef = CoefficientSet::from_parts(&grid, m.clone(), m, eps).unwrap();
        let p = params(ModelKind::KpSmall, 0.0, 0.2, 0.0);
        // Linear part only: keep ε in the advection coefficient, drop η η_ξ.
        let p = ModelParams { eps, ..p };
        let k = mode_wavenumber(2, 10.0);
        let amp = 1e-9;
        let eta = SpectralField::from_fn(grid, |x, _| amp * (k * x).cos());
        let rhs = rhs_kp_small(&eta, &coef, &p).unwrap();
        let w = (1.0 - eps * m0 / 2.0) * k - 0.04 * k * k * k / 6.0;
        for (i, x) in grid.x_nodes().into_iter().enumerate() {
            assert!((rhs.at(i, 0) - amp * w * (k * x).sin()).abs() < 1e-9 * amp);
        }
    }

    #[test]
    fn boussinesq_plane_wave_is_consistent() {
        let grid = PeriodicGrid::line(128, 10.0).unwrap();
        let coef = CoefficientSet::flat(&grid);
        let mu = 0.4;
        let p = params(ModelKind::Boussinesq, 0.0, mu, 0.0);
        let k = mode_wavenumber(4, 10.0);
        let w = boussinesq_frequency(k, 0.0, mu, 0.0);
        let eta = SpectralField::from_fn(grid, |x, _| (k * x).cos());
        let u = SpectralField::from_fn(grid, |x, _| w / k * (k * x).cos());
        let st = BoussinesqState::new(eta, u).unwrap();
        let d = rhs_boussinesq(&st, &coef, &p).unwrap();
        for (i, x) in grid.x_nodes().into_iter().enumerate() {
            // η = cos(kx - ωt) -> η_t = ω sin(kx); u_t = (ω²/k) sin(kx).
            assert!((d.eta.at(i, 0) - w * (k * x).sin()).abs() < 1e-12);
            assert!((d.u.at(i, 0) - w * w / k * (k * x).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn boussinesq_transport_with_unit_coupling() {
        // u = η, ε = γ = 0: η_t = -η_ξ and u_t = -(1 - μ²∂²/3)⁻¹ η_ξ.
        let grid = PeriodicGrid::line(64, 5.0).unwrap();
        let coef = CoefficientSet::flat(&grid);
        let mu = 0.5;
        let p = params(ModelKind::Boussinesq, 0.0, mu, 0.0);
        let eta = SpectralField::from_fn(grid, |x, _| (-(x * x)).exp());
        let st = BoussinesqState::new(eta.clone(), eta.clone()).unwrap();
        let d = rhs_boussinesq(&st, &coef, &p).unwrap();
        let mut ex = Spectrum::forward(&eta);
        ex.truncate_two_thirds();
        let ex = ex.deriv_x(1).unwrap();
        let expect_eta = ex.inverse().map(|v| -v);
        let kx = grid.wavenumbers().k_x;
        let expect_u = ex
            .map_modes(|i, _| Complex64::new(-1.0 / (1.0 + mu * mu * kx[i] * kx[i] / 3.0), 0.0))
            .inverse();
        assert!(d.eta.zip_with(&expect_eta, |a, b| a - b).unwrap().max_abs() < 1e-12);
        assert!(d.u.zip_with(&expect_u, |a, b| a - b).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn riemann_identities() {
        let grid = PeriodicGrid::new(16, 4, 3.0, 2.0).unwrap();
        let coef =
            CoefficientSet::from_parts(&grid, smooth_m(&grid), smooth_m(&grid), 0.05).unwrap();
        let eta = SpectralField::from_fn(grid, |x, y| (x + 0.3 * y).sin());
        let st = BoussinesqState::right_moving(eta.clone(), &coef);
        let (_, minus) = riemann_invariants(&st, &coef).unwrap();
        assert!(minus.max_abs() < 1e-15);

        let line = PeriodicGrid::line(8, 1.0).unwrap();
        let st = BoussinesqState::new(
            SpectralField::constant(line, 1.0),
            SpectralField::zeros(line),
        )
        .unwrap();
        let (plus, minus) = riemann_invariants(&st, &CoefficientSet::flat(&line)).unwrap();
        assert!(plus.values().iter().all(|&v| v == 1.0));
        assert!(minus.values().iter().all(|&v| v == -1.0));
    }

    #[test]
    fn integrating_factor_round_trip_and_kind_check() {
        let grid = PeriodicGrid::new(32, 16, 10.0, 10.0).unwrap();
        let p = params(ModelKind::KpClassical, 0.05, 0.2, 0.2);
        let f = IntegratingFactor::new(&grid, &p).unwrap();
        let eta = SpectralField::from_fn(grid, |x, y| (-(x * x) / 4.0 - y * y / 9.0).exp() * x);
        let v = f.to_interaction(0.7, &eta);
        let back = f.from_interaction(0.7, &v);
        assert!(back.zip_with(&eta, |a, b| a - b).unwrap().max_abs() < 1e-13);
        let slow = params(ModelKind::KpSlow, 0.05, 0.2, 0.2);
        assert!(IntegratingFactor::new(&grid, &slow).is_err());
    }
}
