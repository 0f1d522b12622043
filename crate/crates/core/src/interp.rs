//! Interpolation kernels on uniform periodic samples and monotone tables.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::spectral::{mode_number, SpectralField, Spectrum};

/// Band-limited (trigonometric) interpolant of periodic samples.
#[derive(Debug, Clone)]
pub struct TrigInterpolant {
    origin: f64,
    period: f64,
    // (angular wavenumber, coefficient / n, weight) for modes with m >= 0.
    modes: Vec<(f64, Complex64, f64)>,
}

impl TrigInterpolant {
    /// `samples` sit at `origin + j * period / n`.
    pub fn new(samples: &[f64], origin: f64, period: f64) -> Self {
        let n = samples.len();
        let grid = crate::spectral::PeriodicGrid::line(n, period / 2.0)
            .expect("trigonometric interpolation needs an even sample count");
        let field = SpectralField::from_raw(grid, samples.to_vec());
        let spec = Spectrum::forward(&field);
        let base = 2.0 * PI / period;
        let mut modes = Vec::with_capacity(n / 2 + 1);
        for i in 0..n {
            let m = mode_number(i, n);
            let c = spec.coeff(i, 0) / n as f64;
            if m == 0 {
                modes.push((0.0, c, 1.0));
            } else if m > 0 {
                modes.push((m as f64 * base, c, 2.0));
            } else if m == -(n as i64) / 2 {
                // Nyquist slot: symmetric split gives a pure cosine.
                modes.push((-(m as f64) * base, c, 1.0));
            }
        }
        Self {
            origin,
            period,
            modes,
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = x - self.origin;
        self.modes
            .iter()
            .map(|&(k, c, w)| {
                let (s, co) = (k * t).sin_cos();
                w * (c.re * co - c.im * s)
            })
            .sum()
    }

    pub fn eval_deriv(&self, x: f64) -> f64 {
        let t = x - self.origin;
        self.modes
            .iter()
            .map(|&(k, c, w)| {
                if w == 1.0 && k != 0.0 {
                    // Nyquist cosine has an ambiguous derivative; drop it.
                    return 0.0;
                }
                let (s, co) = (k * t).sin_cos();
                -w * k * (c.re * s + c.im * co)
            })
            .sum()
    }
}

/// Fritsch–Carlson slopes for a strictly increasing table.
pub fn monotone_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m
}

/// Cubic Hermite evaluation on `[x0, x1]`, written so that equal end values
/// with zero slopes reproduce the constant exactly.
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, m0: f64, m1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h10 = t3 - 2.0 * t2 + t;
    let h11 = t3 - t2;
    y0 + (y1 - y0) * h01 + h * (h10 * m0 + h11 * m1)
}

/// Interpolates periodic uniform samples with cubic Hermite pieces whose
/// nodal slopes come from fourth-order centred differences.
#[derive(Debug, Clone)]
pub struct PeriodicHermite {
    origin: f64,
    spacing: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl PeriodicHermite {
    pub fn new(values: Vec<f64>, origin: f64, spacing: f64) -> Self {
        let n = values.len();
        let at = |i: isize| values[i.rem_euclid(n as isize) as usize];
        let slopes = (0..n as isize)
            .map(|i| {
                (-at(i + 2) + 8.0 * at(i + 1) - 8.0 * at(i - 1) + at(i - 2)) / (12.0 * spacing)
            })
            .collect();
        Self {
            origin,
            spacing,
            values,
            slopes,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let s = (x - self.origin) / self.spacing;
        let cell = s.floor();
        let frac = s - cell;
        let i = (cell as i64).rem_euclid(n as i64) as usize;
        let k = (i + 1) % n;
        if frac == 0.0 {
            return self.values[i];
        }
        hermite(
            0.0,
            self.spacing,
            self.values[i],
            self.values[k],
            self.slopes[i],
            self.slopes[k],
            frac * self.spacing,
        )
    }
}
