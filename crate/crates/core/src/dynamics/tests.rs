use ndarray::Axis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::column::vertical_modes;
use crate::norms_energy::{spec_inner, spec_l2_sq};

fn model_with(n_lat: usize, levels: usize, params: ModelParams) -> Model {
    Model::new(
        SphereGrid::new(7, n_lat, 2 * n_lat).unwrap(),
        VerticalGrid::new(levels).unwrap(),
        params,
    )
    .unwrap()
}

fn model() -> Model {
    model_with(12, 9, ModelParams::default())
}

fn toggled(t: TermToggles) -> ModelParams {
    ModelParams {
        toggles: t,
        ..ModelParams::default()
    }
}

fn random(m: &Model, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    m.random_state(&mut rng, 7, 1.0)
}

/// Field with every level equal to `h` times `profile[k]`.
fn separable(m: &Model, h: &Array2<f64>, profile: &[f64]) -> Field3D {
    let mut f = m.vgrid.zeros(&m.grid);
    for (k, mut lvl) in f.outer_iter_mut().enumerate() {
        lvl.assign(&(h * profile[k]));
    }
    f
}

#[test]
fn params_validation() {
    assert!(ModelParams::default().validate().is_ok());
    let bad = [
        ModelParams { p_top: 2.0, ..Default::default() },
        ModelParams { p_top: 0.0, ..Default::default() },
        ModelParams { r0: 0.0, ..Default::default() },
        ModelParams { nu2: 0.0, ..Default::default() },
        ModelParams { mu1: -1.0, ..Default::default() },
        ModelParams { alpha_s: -0.1, ..Default::default() },
        ModelParams { a: f64::NAN, ..Default::default() },
    ];
    for p in bad {
        assert!(p.validate().is_err(), "{p:?}");
    }
    let e = ModelParams { p_top: 2.0, ..Default::default() }.validate().unwrap_err().to_string();
    assert!(e.contains("p0") && e.contains("P"));
}

#[test]
fn coriolis_examples() {
    // odd latitude count puts a node on the equator
    let m = model_with(25, 3, ModelParams { r0: 0.5, ..Default::default() });
    let eq = m.grid.theta().iter().position(|t| (t - std::f64::consts::FRAC_PI_2).abs() < 1e-14).unwrap();
    let mut v = VField3D::zeros(&m.grid, &m.vgrid);
    v.phi.fill(1.0);
    let c = m.coriolis(&v);
    for k in 0..3 {
        for (j, ct) in m.grid.cos_theta().iter().enumerate() {
            for i in 0..m.grid.n_lon() {
                // (f/R₀)(-v_φ, v_θ) with f = 2 cos θ
                let expect = -2.0 * ct / 0.5;
                assert!((c.theta[[k, j, i]] - expect).abs() < 1e-14);
                assert_eq!(c.phi[[k, j, i]], 0.0);
            }
        }
        assert!(c.theta.index_axis(Axis(0), k).row(eq).iter().all(|x| x.abs() < 1e-15));
    }
    // the Coriolis force does no work, pointwise
    let r = random(&m, 1);
    let c = m.coriolis(&r.v);
    let work = &(&c.theta * &r.v.theta) + &(&c.phi * &r.v.phi);
    assert!(work.iter().all(|w| w.abs() < 1e-14));
}

#[test]
fn buoyancy_examples() {
    let m = model_with(12, 65, ModelParams::default());
    let (g, vg) = (&m.grid, &m.vgrid);
    let one = vg.from_fn(g, |_, _, _| 1.0);
    let zero = vg.zeros(g);
    // horizontally uniform temperature exerts no horizontal force
    let b = m.buoyancy_grad(&one, &zero);
    assert!(b.theta.iter().chain(b.phi.iter()).all(|x| x.abs() < 1e-12));

    // T = cos θ, q = 0: B(ξ) = grad cos θ · ∫_ξ¹ bP/p dξ' = -sin θ · bP/(P-p₀) ln(P/p(ξ)) e_θ
    let t = vg.from_fn(g, |th, _, _| th.cos());
    let b = m.buoyancy_grad(&t, &zero);
    let p = &m.params;
    let mut err: f64 = 0.0;
    for (k, &xi) in vg.xi().iter().enumerate() {
        let pk = (p.p_surface - p.p_top) * xi + p.p_top;
        let integral = p.b * p.p_surface / (p.p_surface - p.p_top) * (p.p_surface / pk).ln();
        for (j, st) in g.sin_theta().iter().enumerate() {
            err = err.max((b.theta[[k, j, 0]] + st * integral).abs());
            assert!(b.phi[[k, j, 0]].abs() < 1e-12);
        }
    }
    // trapezoid rule at h = 1/64
    assert!(err < 2e-3, "{err}");

    // the moisture factor (1 + a q) scales the force for uniform q
    let q = vg.from_fn(g, |_, _, _| 0.5);
    let bq = m.buoyancy_grad(&t, &q);
    let f = 1.0 + p.a * 0.5;
    assert!(bq.theta.iter().zip(b.theta.iter()).all(|(x, y)| (x - f * y).abs() < 1e-12));
}

#[test]
fn rest_state_has_zero_tendency() {
    let m = model();
    let s = State::zeros(&m.grid, &m.vgrid);
    let t = m.tendency(&s, &Forcing::zeros(&m.grid, &m.vgrid)).unwrap();
    for f in [&t.dv.theta, &t.dv.phi, &t.dtemp, &t.dq, &t.phi_s.clone().insert_axis(Axis(0))] {
        assert!(f.iter().all(|x| *x == 0.0));
    }
}

#[test]
fn forcing_only_enters_scalars() {
    let m = model_with(12, 9, toggled(TermToggles { forcing: true, ..TermToggles::none() }));
    let f = Forcing::preset(ForcingPreset::Moist, 3.0, &m.grid, &m.vgrid);
    let t = m.tendency(&State::zeros(&m.grid, &m.vgrid), &f).unwrap();
    let close = |a: &Field3D, b: &Field3D| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12);
    assert!(close(&t.dtemp, &f.q1));
    assert!(close(&t.dq, &f.q2));
    assert!(t.dv.theta.iter().all(|x| x.abs() < 1e-14));
    let none = Forcing::preset(ForcingPreset::None, 3.0, &m.grid, &m.vgrid);
    assert!(none.q1.iter().chain(none.q2.iter()).all(|x| *x == 0.0));
    let thermal = Forcing::preset(ForcingPreset::Thermal, 3.0, &m.grid, &m.vgrid);
    assert!(thermal.q2.iter().all(|x| *x == 0.0));
    assert_eq!(thermal.q1, f.q1);
}

#[test]
fn diffusion_eigenmodes() {
    let params = ModelParams {
        nu1: 0.7,
        nu2: 0.3,
        nu3: 1.3,
        mu1: 0.5,
        mu2: 2.0,
        mu3: 0.9,
        alpha_s: 1.0,
        beta_s: 0.4,
        toggles: TermToggles::diffusion_only(),
        ..Default::default()
    };
    let m = model_with(12, 9, params.clone());
    let g = &m.grid;
    // degree-2 harmonic: sin θ cos θ cos φ
    let y = g.from_fn(|t, p| t.sin() * t.cos() * p.cos());
    let ll = 6.0;
    let (kt, et) = vertical_modes(&m.vgrid, params.temperature_bc());
    let (kq, eq) = vertical_modes(&m.vgrid, params.moisture_bc());
    let (kv, ev) = vertical_modes(&m.vgrid, VerticalBc::Neumann);
    for j in [0, 2, 5] {
        let mut s = State::zeros(g, &m.vgrid);
        s.temp = separable(&m, &y, &et[j]);
        s.q = separable(&m, &y, &eq[j]);
        // rotational velocity k × grad Y
        let r = g.grad(&y).perp();
        s.v = VField3D {
            theta: separable(&m, &r.theta, &ev[j]),
            phi: separable(&m, &r.phi, &ev[j]),
        };
        let t = m.tendency(&s, &Forcing::zeros(g, &m.vgrid)).unwrap();
        let rates = [
            params.nu2 * ll + params.mu2 * kt[j],
            params.nu3 * ll + params.mu3 * kq[j],
            params.nu1 * ll + params.mu1 * kv[j],
        ];
        let check = |d: &Field3D, f: &Field3D, rate: f64| {
            let scale = f.iter().fold(0.0f64, |a, x| a.max(x.abs())) * rate;
            let err = d.iter().zip(f.iter()).fold(0.0f64, |a, (x, y)| a.max((x + rate * y).abs()));
            assert!(err < 1e-10 * scale, "mode {j}: {err} vs {scale}");
        };
        check(&t.dtemp, &s.temp, rates[0]);
        check(&t.dq, &s.q, rates[1]);
        check(&t.dv.theta, &s.v.theta, rates[2]);
        check(&t.dv.phi, &s.v.phi, rates[2]);
    }
}

#[test]
fn surface_pressure_projection() {
    let m = model();
    let g = &m.grid;
    let h = g.from_fn(|t, p| t.sin().powi(2) * (2.0 * p).sin() + t.cos());
    let raw = VField3D::broadcast(&g.grad(&h), m.levels());
    let (phi, rest) = m.project_surface_pressure(&raw).unwrap();
    let hm = g.mean(&h);
    assert!(phi.iter().zip(h.iter()).all(|(a, b)| (a - (b - hm)).abs() < 1e-12));
    assert!(rest.theta.iter().chain(rest.phi.iter()).all(|x| x.abs() < 1e-12));

    // a purely baroclinic field is left alone
    let mut s = random(&m, 2);
    s.v = VField3D::zeros(g, &m.vgrid);
    let xi = m.vgrid.xi().to_vec();
    let prof: Vec<f64> = xi.iter().map(|x| (std::f64::consts::PI * x).cos()).collect();
    let gv = g.grad(&h);
    s.v.theta = separable(&m, &gv.theta, &prof);
    s.v.phi = separable(&m, &gv.phi, &prof);
    assert!(m.constraint_residual(&s.v) < 1e-12);
    let (phi, rest) = m.project_surface_pressure(&s.v).unwrap();
    assert!(phi.iter().all(|x| x.abs() < 1e-12));
    assert!(rest.theta.iter().zip(s.v.theta.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn tendency_satisfies_constraint() {
    let m = model();
    let f = Forcing::preset(ForcingPreset::Moist, 5.0, &m.grid, &m.vgrid);
    for seed in 0..3 {
        let s = random(&m, seed);
        let t = m.tendency(&s, &f).unwrap();
        let scale = crate::column::l2_norm_for(&m.grid, &m.vgrid, &t.dv);
        assert!(m.constraint_residual(&t.dv) <= 1e-12 * scale);
    }
    let mut s = random(&m, 4);
    s.v.theta += 0.1;
    assert!(m.constraint_residual(&s.v) > 1e-3);
    m.make_admissible(&mut s);
    assert!(m.constraint_residual(&s.v) < 1e-12);
}

#[test]
fn toggles_are_additive() {
    let base = model();
    let f = Forcing::preset(ForcingPreset::Moist, 2.0, &base.grid, &base.vgrid);
    let s = random(&base, 5);
    let sf = base.spec_forcing(&f);
    let spec = base.to_spectral(&s);
    let all = base.tendency_spec(&spec, &sf, 0.0).unwrap().0;
    let singles = [
        TermToggles { advection: true, ..TermToggles::none() },
        TermToggles { coriolis: true, ..TermToggles::none() },
        TermToggles { buoyancy: true, ..TermToggles::none() },
        TermToggles { diffusion: true, ..TermToggles::none() },
        TermToggles { forcing: true, ..TermToggles::none() },
    ];
    let mut sum = SpecState::zeros(7, 9);
    for t in singles {
        let m = base.with_params(toggled(t)).unwrap();
        sum.axpy(1.0, &m.tendency_spec(&spec, &sf, 0.0).unwrap().0);
    }
    let none = base.with_params(toggled(TermToggles::none())).unwrap();
    assert_eq!(spec_l2_sq(&none, &none.tendency_spec(&spec, &sf, 0.0).unwrap().0), 0.0);
    let mut d = sum;
    d.axpy(-1.0, &all);
    assert!(spec_l2_sq(&base, &d).sqrt() < 1e-11 * spec_l2_sq(&base, &all).sqrt());
}

#[test]
fn conservative_terms_do_no_work() {
    let base = model_with(12, 33, ModelParams::default());
    let s = random(&base, 6);
    let spec = base.to_spectral(&s);
    let sf = base.spec_forcing(&Forcing::zeros(&base.grid, &base.vgrid));
    let h = base.vgrid.spacing();
    let size = spec_l2_sq(&base, &spec);
    for (t, tol) in [
        (TermToggles { coriolis: true, ..TermToggles::none() }, 1e-13),
        (TermToggles { advection: true, ..TermToggles::none() }, 2.0 * h * h),
        (TermToggles { buoyancy: true, ..TermToggles::none() }, 2.0 * h * h),
        (TermToggles { advection: true, coriolis: true, buoyancy: true, ..TermToggles::none() }, 4.0 * h * h),
    ] {
        let m = base.with_params(toggled(t)).unwrap();
        let tend = m.tendency_spec(&spec, &sf, 0.0).unwrap().0;
        let work = spec_inner(&m, &spec, &tend);
        let scale = size.sqrt() * spec_l2_sq(&m, &tend).sqrt();
        assert!(work.abs() <= tol * scale, "{t:?}: {work} vs {}", tol * scale);
    }
    // diffusion alone dissipates
    let m = base.with_params(toggled(TermToggles::diffusion_only())).unwrap();
    let tend = m.tendency_spec(&spec, &sf, 0.0).unwrap().0;
    assert!(spec_inner(&m, &spec, &tend) < 0.0);
}

#[test]
fn spectral_roundtrip_and_blowup_tag() {
    let m = model();
    let s = random(&m, 7);
    let back = m.from_spectral(&m.to_spectral(&s), s.time);
    let d = back.difference(&s);
    assert!(crate::norms_energy::state_l2_sq(&m, &d).sqrt() < 1e-12);

    let mut bad = s.clone();
    bad.temp[[3, 4, 5]] = f64::NAN;
    let e = m.tendency(&bad, &Forcing::zeros(&m.grid, &m.vgrid)).unwrap_err();
    assert!(matches!(e, Error::Blowup { .. }), "{e}");
}
