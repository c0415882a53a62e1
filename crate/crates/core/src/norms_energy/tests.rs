use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::column::{vertical_modes, VerticalGrid};
use crate::dynamics::{ForcingPreset, ModelParams, TermToggles};
use crate::sphere::SphereGrid;

fn model_k(levels: usize, params: ModelParams) -> Model {
    Model::new(
        SphereGrid::new(7, 12, 24).unwrap(),
        VerticalGrid::new(levels).unwrap(),
        params,
    )
    .unwrap()
}

fn model() -> Model {
    model_k(9, ModelParams::default())
}

fn random(m: &Model, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    m.random_state(&mut rng, 7, 1.0)
}

#[test]
fn constant_field_norms() {
    let m = model();
    let mut s = State::zeros(&m.grid, &m.vgrid);
    s.temp.fill(1.0);
    assert!((l2_norm(&m, &s.temp) - (4.0 * PI).sqrt()).abs() < 1e-12);
    let f = Forcing::zeros(&m.grid, &m.vgrid);
    let n = v_norms(&m, &s, &f).unwrap();
    // only the surface term of the temperature form survives
    let expect = (4.0 * PI * m.params.alpha_s).sqrt();
    assert!((n.v2_t - expect).abs() < 1e-12, "{} vs {expect}", n.v2_t);
    assert_eq!(n.v1_v, 0.0);
    assert_eq!(n.v3_q, 0.0);
    assert!((energy(&m, &s) - 2.0 * PI).abs() < 1e-12);
}

#[test]
fn zero_state() {
    let m = model();
    let s = State::zeros(&m.grid, &m.vgrid);
    let f = Forcing::zeros(&m.grid, &m.vgrid);
    let n = v_norms(&m, &s, &f).unwrap();
    assert_eq!([n.l2_v, n.l2_t, n.l2_q, n.v1_v, n.v2_t, n.v3_q, n.dtu_l2], [0.0; 7]);
    let b = energy_budget(&m, &s, &f).unwrap();
    assert_eq!((b.residual, b.relative), (0.0, 0.0));
    assert_eq!(h2_norm_sq(&m, &m.to_spectral(&s)), 0.0);
}

#[test]
fn grid_and_coefficient_norms_agree() {
    let m = model();
    for seed in 0..3 {
        let s = random(&m, seed);
        let grid = state_l2_sq(&m, &s);
        let spec = spec_l2_sq(&m, &m.to_spectral(&s));
        assert!((grid - spec).abs() < 1e-12 * grid, "{grid} vs {spec}");
    }
}

/// Gradient form from grid quadrature of `|grad T|²` against the
/// coefficient formula.
#[test]
fn gradient_form_two_ways() {
    let m = model();
    let s = random(&m, 4);
    let spec = m.to_spectral(&s);
    let mut direct = 0.0;
    for k in 0..m.levels() {
        let tk = s.temp.index_axis(ndarray::Axis(0), k).to_owned();
        let g = m.grid.grad(&tk);
        direct += m.vgrid.weights()[k] * m.grid.inner_vec(&g, &g);
    }
    let coef = scalar_gradient_sq(&m, &spec.temp);
    assert!((direct - coef).abs() < 1e-11 * coef);
}

#[test]
fn eigenmode_norms() {
    let m = model();
    let (kappa, e) = vertical_modes(&m.vgrid, m.params.temperature_bc());
    let y = m.grid.from_fn(|t, p| t.sin() * t.cos() * p.cos());
    for j in [0, 3] {
        let mut s = State::zeros(&m.grid, &m.vgrid);
        for (k, mut lvl) in s.temp.outer_iter_mut().enumerate() {
            lvl.assign(&(&y * e[j][k]));
        }
        let l2 = state_l2_sq(&m, &s);
        let spec = m.to_spectral(&s);
        let v2 = v_norms_sq(&m, &spec)[1];
        assert!((v2 - (6.0 + kappa[j]) * l2).abs() < 1e-10 * v2);
        let h2 = h2_norm_sq(&m, &spec);
        assert!((h2 - (6.0 + kappa[j]).powi(2) * l2).abs() < 1e-10 * h2);
    }
}

#[test]
fn diffusion_only_budget_is_exact() {
    let m = model_k(9, ModelParams { toggles: TermToggles::diffusion_only(), ..Default::default() });
    let f = Forcing::zeros(&m.grid, &m.vgrid);
    for seed in 0..3 {
        let b = energy_budget(&m, &random(&m, seed), &f).unwrap();
        assert!(b.de_dt < 0.0);
        assert!(b.relative < 1e-9, "{b:?}");
    }
}

#[test]
fn forced_budget_second_order() {
    let params = ModelParams::default();
    let rels: Vec<f64> = [9, 17, 33]
        .iter()
        .map(|&k| {
            let m = model_k(k, params.clone());
            let f = Forcing::preset(ForcingPreset::Moist, 5.0, &m.grid, &m.vgrid);
            let b = energy_budget(&m, &random(&m, 11), &f).unwrap();
            assert!(b.relative <= budget_tolerance(&m), "K={k}: {b:?}");
            b.relative
        })
        .collect();
    for w in rels.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 1.8, "{rels:?}");
    }
}

#[test]
fn identities_pass_on_random_fields() {
    let m = model_k(17, ModelParams::default());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = m.random_state(&mut rng, 7, 1.0);
    let b = m.random_state(&mut rng, 7, 1.0);
    let h = m.grid.random_scalar(&mut rng, 7);
    let r = check_identities(&m, &a.v, &b.v, &a.temp, &a.q, &h);
    assert_eq!(r.checks.len(), 8);
    for c in &r.checks {
        assert!(c.passed(), "{c:?}");
    }
    assert!(r.get("buoyancy_pairing").unwrap().kind == IdentityKind::Vertical);
    assert!(r.get("nonexistent").is_none());
}

#[test]
fn barotropic_divergence_breaks_preconditions() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = m.random_state(&mut rng, 7, 1.0);
    let h = m.grid.random_scalar(&mut rng, 7);
    let gh = VField3D::broadcast(&m.grid.grad(&h), m.levels());
    let mut bad = a.v.clone();
    bad.theta += &gh.theta;
    bad.phi += &gh.phi;
    let r = check_identities(&m, &bad, &bad, &a.temp, &a.q, &h);
    assert!(!r.get("gradient_orthogonal_to_v1").unwrap().precondition_ok);
    assert!(!r.get("advection_velocity").unwrap().precondition_ok);
    assert!(r.get("grad_div_adjoint").unwrap().passed());
    assert!(!r.all_passed());
}

#[test]
fn monitor_and_fit() {
    let samples: Vec<(f64, f64)> = (0..=8).map(|i| (i as f64 * 0.5, 1.0)).collect();
    let mon = h2_integral_monitor(&samples);
    assert!((mon.integral[8] - 4.0).abs() < 1e-15);
    assert!((mon.c_at(4.0).unwrap() - 4.0 / 6.0).abs() < 1e-15);
    assert_eq!(mon.c_at(0.0), Some(0.0));
    assert_eq!(mon.c_at(5.0), None);
    assert!(mon.c_fit.windows(2).all(|w| w[1] >= w[0]));

    let x = [0.0, 1.0, 2.0, 3.0];
    let (slope, se) = linear_fit_slope(&x, &x.map(|t| 2.0 - 0.5 * t));
    assert!((slope + 0.5).abs() < 1e-15 && se < 1e-15);
    let (_, se) = linear_fit_slope(&x, &[0.0, 1.0, 0.0, 1.0]);
    assert!(se > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn norms_are_seminorms(a in 0u64..1000, b in 0u64..1000, lambda in -5.0f64..5.0) {
        let m = model_k(5, ModelParams::default());
        let (x, y) = (m.to_spectral(&random(&m, a)), m.to_spectral(&random(&m, b)));
        let nx = v_norms_sq(&m, &x).map(f64::sqrt);
        let ny = v_norms_sq(&m, &y).map(f64::sqrt);
        let mut sum = x.clone();
        sum.axpy(1.0, &y);
        let ns = v_norms_sq(&m, &sum).map(f64::sqrt);
        let nl = v_norms_sq(&m, &x.scaled(lambda)).map(f64::sqrt);
        for i in 0..3 {
            prop_assert!(ns[i] <= (nx[i] + ny[i]) * (1.0 + 1e-12));
            prop_assert!((nl[i] - lambda.abs() * nx[i]).abs() <= 1e-12 * nx[i].max(1.0));
        }
        let l2 = spec_l2_sq(&m, &x.scaled(lambda));
        prop_assert!((l2 - lambda * lambda * spec_l2_sq(&m, &x)).abs() <= 1e-12 * l2.max(1.0));
    }
}
