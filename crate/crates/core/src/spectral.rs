//! Periodic grids, real-valued fields and Fourier-multiplier operators.
//!
//! Transform convention: the forward transform is unscaled and the inverse
//! carries the full `1/(n_x n_y)` factor. Field storage is row-major with the
//! row index running along `x` (or `ξ`), so `values[i * n_y + j]` is the
//! sample at `(x_i, y_j)`.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field holds a non-finite value at flat index {index}")]
    InvalidField { index: usize },
    #[error("expected {expected} samples, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("derivative order {0} is not in 1..=4")]
    UnsupportedOrder(u32),
    #[error("multiplier symbol is not finite at k = {k}")]
    SymbolSingularity { k: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Uniform periodic grid on `[-L_x, L_x) x [-L_y, L_y)`.
///
/// `n_y == 1` denotes a one-dimensional problem whose single `y` node sits at
/// `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    n_x: usize,
    n_y: usize,
    half_length_x: f64,
    half_length_y: f64,
}

impl PeriodicGrid {
    pub fn new(
        n_x: usize,
        n_y: usize,
        half_length_x: f64,
        half_length_y: f64,
    ) -> Result<Self, SpectralError> {
        if n_x < 2 || !n_x.is_multiple_of(2) {
            return Err(SpectralError::InvalidGrid(format!(
                "n_x must be even and at least 2, got {n_x}"
            )));
        }
        if n_y == 0 || (n_y != 1 && !n_y.is_multiple_of(2)) {
            return Err(SpectralError::InvalidGrid(format!(
                "n_y must be 1 or even, got {n_y}"
            )));
        }
        for (name, l) in [("L_x", half_length_x), ("L_y", half_length_y)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(SpectralError::InvalidGrid(format!(
                    "{name} must be positive and finite, got {l}"
                )));
            }
        }
        Ok(Self {
            n_x,
            n_y,
            half_length_x,
            half_length_y,
        })
    }

    /// One-dimensional grid in `x` only.
    pub fn line(n_x: usize, half_length_x: f64) -> Result<Self, SpectralError> {
        Self::new(n_x, 1, half_length_x, 1.0)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_one_dimensional(&self) -> bool {
        self.n_y == 1
    }

    pub fn half_length_x(&self) -> f64 {
        self.half_length_x
    }

    pub fn half_length_y(&self) -> f64 {
        self.half_length_y
    }

    pub fn period_x(&self) -> f64 {
        2.0 * self.half_length_x
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_length_x / self.n_x as f64
    }

    /// Spacing in `y`; for a 1D grid this is the unit weight.
    pub fn dy(&self) -> f64 {
        if self.n_y == 1 {
            1.0
        } else {
            2.0 * self.half_length_y / self.n_y as f64
        }
    }

    pub fn x_node(&self, i: usize) -> f64 {
        -self.half_length_x + i as f64 * self.dx()
    }

    pub fn y_node(&self, j: usize) -> f64 {
        if self.n_y == 1 {
            0.0
        } else {
            -self.half_length_y + j as f64 * self.dy()
        }
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.x_node(i)).collect()
    }

    pub fn y_nodes(&self) -> Vec<f64> {
        (0..self.n_y).map(|j| self.y_node(j)).collect()
    }

    /// Index of the `y = 0` line.
    pub fn center_line(&self) -> usize {
        self.n_y / 2
    }

    /// The 1D grid carrying only the `x` direction of this grid.
    pub fn x_line(&self) -> PeriodicGrid {
        PeriodicGrid {
            n_y: 1,
            half_length_y: 1.0,
            ..*self
        }
    }

    pub fn wavenumbers(&self) -> WavenumberSet {
        WavenumberSet {
            k_x: axis_wavenumbers(self.n_x, self.half_length_x),
            k_y: if self.n_y == 1 {
                vec![0.0]
            } else {
                axis_wavenumbers(self.n_y, self.half_length_y)
            },
        }
    }
}

/// Angular wavenumbers in standard transform ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct WavenumberSet {
    pub k_x: Vec<f64>,
    pub k_y: Vec<f64>,
}

/// Signed mode number of transform slot `i` on an `n`-point axis. The Nyquist
/// slot `n/2` maps to `-n/2`.
pub fn mode_number(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

fn is_nyquist(i: usize, n: usize) -> bool {
    n > 1 && n.is_multiple_of(2) && i == n / 2
}

fn axis_wavenumbers(n: usize, half_length: f64) -> Vec<f64> {
    let base = PI / half_length;
    (0..n).map(|i| mode_number(i, n) as f64 * base).collect()
}

/// Slot `i` survives the 2/3 truncation when `|m| <= n/3`.
fn inside_two_thirds(i: usize, n: usize) -> bool {
    n == 1 || 3 * mode_number(i, n).unsigned_abs() as usize <= n
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut p = planner().lock().unwrap_or_else(|e| e.into_inner());
    if inverse {
        p.plan_fft_inverse(n)
    } else {
        p.plan_fft_forward(n)
    }
}

fn fft_rows(data: &mut [Complex64], row_len: usize, inverse: bool) {
    let fft = plan(row_len, inverse);
    let scratch_len = fft.get_inplace_scratch_len();
    // Batch rows per task so small transforms are not dominated by scheduling.
    let rows_per_task = (4096 / row_len).max(1);
    data.par_chunks_mut(row_len * rows_per_task).for_each_init(
        || vec![Complex64::new(0.0, 0.0); scratch_len],
        |scratch, chunk| fft.process_with_scratch(chunk, scratch),
    );
}

fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
    out.par_chunks_mut(rows).enumerate().for_each(|(c, dst)| {
        for (r, v) in dst.iter_mut().enumerate() {
            *v = src[r * cols + c];
        }
    });
    out
}

fn transform_2d(grid: &PeriodicGrid, data: &mut Vec<Complex64>, inverse: bool) {
    let (n_x, n_y) = (grid.n_x, grid.n_y);
    if n_y > 1 {
        fft_rows(data, n_y, inverse);
        let mut t = transpose(data, n_x, n_y);
        fft_rows(&mut t, n_x, inverse);
        *data = transpose(&t, n_y, n_x);
    } else {
        fft_rows(data, n_x, inverse);
    }
}

/// Real field sampled on a [`PeriodicGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl SpectralField {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self, SpectralError> {
        if values.len() != grid.len() {
            return Err(SpectralError::ShapeMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        let field = Self { grid, values };
        field.check_finite()?;
        Ok(field)
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: PeriodicGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let ys = grid.y_nodes();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n_x {
            let x = grid.x_node(i);
            values.extend(ys.iter().map(|&y| f(x, y)));
        }
        Self { grid, values }
    }

    /// Wraps values without the finiteness check. Used on hot paths whose
    /// inputs were already validated.
    pub(crate) fn from_raw(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n_y + j]
    }

    pub fn check_finite(&self) -> Result<(), SpectralError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(SpectralError::InvalidField { index }),
            None => Ok(()),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Grid-weighted L2 norm, `sqrt(sum f^2 dx dy)`.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (s * self.grid.dx() * self.grid.dy()).sqrt()
    }

    /// Mean along `x` for every `y` line.
    pub fn x_means(&self) -> Vec<f64> {
        let (n_x, n_y) = (self.grid.n_x, self.grid.n_y);
        let mut sums = vec![0.0; n_y];
        for row in self.values.chunks_exact(n_y) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums.iter_mut().for_each(|s| *s /= n_x as f64);
        sums
    }

    /// Samples along `x` at the `y` index `j`.
    pub fn x_line(&self, j: usize) -> Vec<f64> {
        (0..self.grid.n_x).map(|i| self.at(i, j)).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &SpectralField,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, SpectralError> {
        if self.grid != other.grid {
            return Err(SpectralError::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Multiplies every `x` row by a profile that depends on `x` only.
    pub fn scale_rows(&self, profile: &[f64]) -> Self {
        debug_assert_eq!(profile.len(), self.grid.n_x);
        let n_y = self.grid.n_y;
        let mut values = self.values.clone();
        for (row, &p) in values.chunks_exact_mut(n_y).zip(profile) {
            row.iter_mut().for_each(|v| *v *= p);
        }
        Self {
            grid: self.grid,
            values,
        }
    }
}

/// Transform-space coefficients of a real field.
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: PeriodicGrid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn forward(field: &SpectralField) -> Self {
        let mut coeffs: Vec<Complex64> = field
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        transform_2d(&field.grid, &mut coeffs, false);
        Self {
            grid: field.grid,
            coeffs,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize, j: usize) -> Complex64 {
        self.coeffs[i * self.grid.n_y + j]
    }

    /// Inverse transform keeping the imaginary residue.
    pub fn inverse_complex(&self) -> Vec<Complex64> {
        let mut data = self.coeffs.clone();
        transform_2d(&self.grid, &mut data, true);
        let scale = 1.0 / self.grid.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    /// Inverse transform; the imaginary residue is dropped.
    pub fn inverse(&self) -> SpectralField {
        let values = self.inverse_complex().into_iter().map(|c| c.re).collect();
        SpectralField::from_raw(self.grid, values)
    }

    /// Multiplies mode `(i, j)` by `symbol(i, j)`.
    pub fn map_modes(&self, symbol: impl Fn(usize, usize) -> Complex64 + Sync) -> Self {
        let n_y = self.grid.n_y;
        let mut coeffs = self.coeffs.clone();
        coeffs.par_chunks_mut(n_y).enumerate().for_each(|(i, row)| {
            for (j, c) in row.iter_mut().enumerate() {
                *c *= symbol(i, j);
            }
        });
        Self {
            grid: self.grid,
            coeffs,
        }
    }

    /// Applies a per-slot multiplier along one axis.
    pub fn apply_axis_symbol(&self, axis: Axis, symbol: &[Complex64]) -> Self {
        match axis {
            Axis::X => self.map_modes(|i, _| symbol[i]),
            Axis::Y => self.map_modes(|_, j| symbol[j]),
        }
    }

    pub fn deriv(&self, axis: Axis, order: u32) -> Result<Self, SpectralError> {
        let symbol = derivative_symbol(&self.grid, axis, order)?;
        Ok(self.apply_axis_symbol(axis, &symbol))
    }

    pub fn deriv_x(&self, order: u32) -> Result<Self, SpectralError> {
        self.deriv(Axis::X, order)
    }

    pub fn deriv_y(&self, order: u32) -> Result<Self, SpectralError> {
        self.deriv(Axis::Y, order)
    }

    /// Multiplier `1/(i k_x)`; the `k_x = 0` column and the `x` Nyquist slot
    /// are set to zero.
    pub fn antideriv_x(&self) -> Self {
        let n_x = self.grid.n_x;
        let k = axis_wavenumbers(n_x, self.grid.half_length_x);
        let symbol: Vec<Complex64> = (0..n_x)
            .map(|i| {
                if i == 0 || is_nyquist(i, n_x) {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, -1.0 / k[i])
                }
            })
            .collect();
        self.apply_axis_symbol(Axis::X, &symbol)
    }

    /// Zeroes every mode whose `|k_x|` or `|k_y|` exceeds two thirds of the
    /// respective maximum.
    pub fn truncate_two_thirds(&mut self) {
        let (n_x, n_y) = (self.grid.n_x, self.grid.n_y);
        let keep_y: Vec<bool> = (0..n_y).map(|j| inside_two_thirds(j, n_y)).collect();
        for (i, row) in self.coeffs.chunks_exact_mut(n_y).enumerate() {
            let keep_x = inside_two_thirds(i, n_x);
            for (c, &ky) in row.iter_mut().zip(&keep_y) {
                if !(keep_x && ky) {
                    *c = Complex64::new(0.0, 0.0);
                }
            }
        }
    }
}

/// `(i k)^order` per slot, with the Nyquist slot zeroed for odd orders.
pub(crate) fn derivative_symbol(
    grid: &PeriodicGrid,
    axis: Axis,
    order: u32,
) -> Result<Vec<Complex64>, SpectralError> {
    if !(1..=4).contains(&order) {
        return Err(SpectralError::UnsupportedOrder(order));
    }
    let (n, l) = match axis {
        Axis::X => (grid.n_x, grid.half_length_x),
        Axis::Y => (grid.n_y, grid.half_length_y),
    };
    if n == 1 {
        return Ok(vec![Complex64::new(0.0, 0.0)]);
    }
    let k = axis_wavenumbers(n, l);
    Ok((0..n)
        .map(|i| {
            if order % 2 == 1 && is_nyquist(i, n) {
                return Complex64::new(0.0, 0.0);
            }
            let kk = k[i];
            match order {
                1 => Complex64::new(0.0, kk),
                2 => Complex64::new(-kk * kk, 0.0),
                3 => Complex64::new(0.0, -kk * kk * kk),
                _ => Complex64::new(kk * kk * kk * kk, 0.0),
            }
        })
        .collect())
}

/// Spectral derivative `∂_x^order f`.
pub fn deriv_x(f: &SpectralField, order: u32) -> Result<SpectralField, SpectralError> {
    f.check_finite()?;
    Ok(Spectrum::forward(f).deriv_x(order)?.inverse())
}

/// Spectral derivative `∂_y^order f`.
pub fn deriv_y(f: &SpectralField, order: u32) -> Result<SpectralField, SpectralError> {
    f.check_finite()?;
    Ok(Spectrum::forward(f).deriv_y(order)?.inverse())
}

/// Fourier antiderivative in `x`. The `x`-mean of the input is discarded and
/// the result has zero `x`-mean on every `y` line.
pub fn antideriv_x(f: &SpectralField) -> Result<SpectralField, SpectralError> {
    f.check_finite()?;
    Ok(Spectrum::forward(f).antideriv_x().inverse())
}

/// Pointwise multiplication by a real even symbol along one axis.
pub fn apply_multiplier(
    f: &SpectralField,
    symbol: impl Fn(f64) -> f64,
    axis: Axis,
) -> Result<SpectralField, SpectralError> {
    f.check_finite()?;
    let ks = f.grid.wavenumbers();
    let ks = match axis {
        Axis::X => ks.k_x,
        Axis::Y => ks.k_y,
    };
    let mut values = Vec::with_capacity(ks.len());
    for &k in &ks {
        let s = symbol(k);
        if !s.is_finite() {
            return Err(SpectralError::SymbolSingularity { k });
        }
        values.push(Complex64::new(s, 0.0));
    }
    Ok(Spectrum::forward(f)
        .apply_axis_symbol(axis, &values)
        .inverse())
}

/// Two-thirds rule truncation.
pub fn dealias_23(f: &SpectralField) -> Result<SpectralField, SpectralError> {
    f.check_finite()?;
    let mut s = Spectrum::forward(f);
    s.truncate_two_thirds();
    Ok(s.inverse())
}

/// Pointwise product of two fields with both factors and the result projected
/// onto the two-thirds band.
pub fn dealiased_product(
    a: &SpectralField,
    b: &SpectralField,
) -> Result<SpectralField, SpectralError> {
    let a = dealias_23(a)?;
    let b = dealias_23(b)?;
    dealias_23(&a.zip_with(&b, |p, q| p * q)?)
}
