use std::f64::consts::PI;

use kp_conformal::models::{
    rhs_kp_classical, rhs_kp_slow, rhs_kp_small, CoefficientSet, ModelKind, ModelParams,
};
use kp_conformal::scenario::ScenarioConfig;
use kp_conformal::spectral::{antideriv_x, deriv_x, PeriodicGrid, SpectralField, Spectrum};
use proptest::prelude::*;

const MU: f64 = 0.223_606_797_749_979;

fn grid() -> PeriodicGrid {
    PeriodicGrid::new(32, 16, 5.0, 4.0).unwrap()
}

/// Real field from random cosine/sine amplitudes on modes `|m| <= 5`.
fn band_limited(g: PeriodicGrid, amps: &[(f64, f64)]) -> SpectralField {
    let modes: Vec<(f64, f64)> = (0..=5)
        .flat_map(|mx| (-5..=5).map(move |my| (mx, my)))
        .map(|(mx, my)| {
            (
                PI * mx as f64 / g.half_length_x(),
                PI * my as f64 / g.half_length_y(),
            )
        })
        .collect();
    SpectralField::from_fn(g, |x, y| {
        modes
            .iter()
            .zip(amps)
            .map(|(&(k, l), &(a, b))| a * (k * x + l * y).cos() + b * (k * x + l * y).sin())
            .sum()
    })
}

fn amps() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 66)
}

fn inner(a: &SpectralField, b: &SpectralField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x * y)
        .sum::<f64>()
        * a.grid().dx()
        * a.grid().dy()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parseval(values in prop::collection::vec(-10.0..10.0f64, 512)) {
        let f = SpectralField::new(grid(), values).unwrap();
        let g = f.grid();
        let n = g.len() as f64;
        let physical: f64 = f.values().iter().map(|v| v * v).sum::<f64>() * g.dx() * g.dy();
        let spectral: f64 = Spectrum::forward(&f).coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>()
            * g.dx() * g.dy() / n;
        prop_assert!((physical - spectral).abs() <= 1e-10 * physical.max(1e-300));
    }

    #[test]
    fn derivative_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, p in amps(), q in amps()) {
        let (f, g) = (band_limited(grid(), &p), band_limited(grid(), &q));
        let combo = f.zip_with(&g, |u, v| a * u + b * v).unwrap();
        let lhs = deriv_x(&combo, 1).unwrap();
        let (df, dg) = (deriv_x(&f, 1).unwrap(), deriv_x(&g, 1).unwrap());
        let rhs = df.zip_with(&dg, |u, v| a * u + b * v).unwrap();
        prop_assert!(lhs.zip_with(&rhs, |u, v| u - v).unwrap().max_abs() < 1e-12 * (1.0 + lhs.max_abs()));
    }

    #[test]
    fn antiderivative_inverts_derivative_up_to_mean(p in amps()) {
        let f = band_limited(grid(), &p);
        let back = antideriv_x(&deriv_x(&f, 1).unwrap()).unwrap();
        let means = f.x_means();
        let n_y = f.grid().n_y();
        let worst = back
            .values()
            .iter()
            .zip(f.values())
            .enumerate()
            .map(|(idx, (b, v))| (b - (v - means[idx % n_y])).abs())
            .fold(0.0, f64::max);
        prop_assert!(worst < 1e-11, "worst {worst}");
    }

    #[test]
    fn reductions_agree(p in amps(), eps in 0.0..0.2f64) {
        let g = grid();
        let eta = band_limited(g, &p).map(|v| 0.1 * v);
        let ps = ModelParams::new(ModelKind::KpSlow, eps, MU, MU).unwrap();
        let coef = CoefficientSet::flat(&g);
        let a = rhs_kp_slow(&eta, &coef, &ps).unwrap();
        let b = rhs_kp_small(&eta, &coef, &ModelParams { kind: ModelKind::KpSmall, ..ps }).unwrap();
        let c = rhs_kp_classical(&eta, &ModelParams { kind: ModelKind::KpClassical, ..ps }).unwrap();
        prop_assert!(a.zip_with(&b, |u, v| u - v).unwrap().max_abs() <= 1e-13);
        prop_assert!(a.zip_with(&c, |u, v| u - v).unwrap().max_abs() <= 1e-13);
    }

    #[test]
    fn linear_operator_is_skew(p in amps(), q in amps()) {
        let g = grid();
        let (f, h) = (band_limited(g, &p), band_limited(g, &q));
        let params = ModelParams::new(ModelKind::KpClassical, 0.0, MU, 0.0).unwrap();
        let lf = rhs_kp_classical(&f, &params).unwrap();
        let lh = rhs_kp_classical(&h, &params).unwrap();
        let scale = f.l2_norm() * lh.l2_norm() + lf.l2_norm() * h.l2_norm();
        prop_assert!((inner(&f, &lh) + inner(&lf, &h)).abs() < 1e-11 * scale.max(1.0));
    }

    #[test]
    fn classical_rhs_has_zero_line_means(p in amps()) {
        let eta = band_limited(grid(), &p).map(|v| 0.2 * v);
        let params = ModelParams::new(ModelKind::KpClassical, 0.05, MU, MU).unwrap();
        let r = rhs_kp_classical(&eta, &params).unwrap();
        let scale = r.max_abs().max(1.0);
        prop_assert!(r.x_means().iter().all(|m| m.abs() < 1e-13 * scale));
    }

    #[test]
    fn config_round_trip(
        eps in 0.001..0.2f64,
        mu in 0.01..1.0f64,
        n in 1usize..6,
        tol in 1e-14..1e-4f64,
        seed in any::<u64>(),
        times in prop::collection::vec(0.01..1.0f64, 1..4),
    ) {
        let mut acc = 0.0;
        let times: Vec<f64> = times.into_iter().map(|t| { acc += t; acc }).collect();
        let json = serde_json::json!({
            "model": "kp_small", "eps": eps, "mu": mu, "gamma": mu,
            "grid": {"l_x": 10.0 * mu, "l_y": 3.0, "n_x": 2 * n, "n_y": 4},
            "topography": {"kind": "random_patch", "n_rect": n, "support": [0.0, n as f64]},
            "initial_condition": {"type": "soliton", "amplitude": 0.5, "center": -1.0},
            "stepper": {"abs_tol": tol, "rel_tol": tol},
            "snapshot_times": times,
            "output_dir": "runs/prop",
            "seed": seed
        });
        let first = ScenarioConfig::from_json(&json.to_string()).unwrap();
        let text = first.to_json();
        let second = ScenarioConfig::from_json(&text).unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(text, second.to_json());
    }
}
