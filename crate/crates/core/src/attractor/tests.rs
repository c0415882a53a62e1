use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::column::tests::robin_root;
use crate::column::VerticalGrid;
use crate::dynamics::{ForcingPreset, ModelParams};
use crate::sphere::SphereGrid;

fn model(lt: usize, levels: usize) -> Model {
    let n_lat = (3 * lt + 3) / 2;
    Model::new(
        SphereGrid::new(lt, n_lat, 2 * n_lat).unwrap(),
        VerticalGrid::new(levels).unwrap(),
        ModelParams::default(),
    )
    .unwrap()
}

fn random_spec(m: &Model, seed: u64) -> SpecState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    m.to_spectral(&m.random_state(&mut rng, m.grid.truncation(), 1.0))
}

fn rel_diff(m: &Model, a: &SpecState, b: &SpecState) -> f64 {
    let mut d = a.clone();
    d.axpy(-1.0, b);
    (norms_energy::spec_l2_sq(m, &d) / norms_energy::spec_l2_sq(m, b).max(1e-300)).sqrt()
}

#[test]
fn mode_counts_and_ordering() {
    let (lt, k) = (7, 5);
    let m = model(lt, k);
    let b = SpectralBasis::build(&m).unwrap();
    let n2 = (lt + 1) * (lt + 1);
    // vector harmonics start at l = 1 and lose the barotropic divergent modes
    assert_eq!(b.counts(), [(n2 - 1) * (2 * k - 1), n2 * k, n2 * k]);
    assert_eq!(b.mode_count(), (n2 - 1) * (2 * k - 1));
    for op in &b.operators {
        assert!(op.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }
    assert_eq!(b.lambda_n(0), None);
    let l1 = b.lambda_n(1).unwrap();
    assert_relative_eq!(l1, b.operators[1].modes[0].eigenvalue);
}

#[test]
fn vertical_vectors_are_weight_orthonormal() {
    let m = model(3, 9);
    let b = SpectralBasis::build(&m).unwrap();
    let w = m.vgrid.weights();
    for op in &b.operators {
        for (i, a) in op.vertical_vectors.iter().enumerate() {
            for (j, c) in op.vertical_vectors.iter().enumerate() {
                let ip: f64 = (0..w.len()).map(|k| w[k] * a[k] * c[k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "{i} {j} {ip}");
            }
        }
    }
}

#[test]
fn smallest_eigenvalues() {
    // A₂ with αₛ = 1: lowest vertical eigenvalue tends to m₀², m₀ tan m₀ = 1
    let m0 = robin_root(1.0);
    assert!((m0 - 0.8603).abs() < 1e-4);
    let m = model(3, 64);
    let b = SpectralBasis::build(&m).unwrap();
    let t0 = b.operators[1].modes[0];
    assert_eq!((t0.l, t0.vertical), (0, 0));
    assert!((t0.eigenvalue - m0 * m0).abs() < 1e-3, "{}", t0.eigenvalue);
    // A₁: the rotational l = 1 vertically constant mode, eigenvalue 2
    let v0 = b.operators[0].modes[0];
    assert_eq!((v0.l, v0.kind, v0.vertical), (1, HorizontalKind::Rotational, 0));
    assert!((v0.eigenvalue - 2.0).abs() < 1e-10);
}

#[test]
fn rayleigh_quotient_of_single_modes() {
    let m = model(5, 6);
    let b = SpectralBasis::build(&m).unwrap();
    for ci in 0..3 {
        for idx in [0, 1, 7, b.operators[ci].len() / 2, b.operators[ci].len() - 1] {
            let mut c: Coords = [0, 1, 2].map(|i| vec![0.0; b.operators[i].len()]);
            c[ci][idx] = 1.0;
            let s = b.from_coords(&c);
            let l2 = norms_energy::spec_l2_sq(&m, &s);
            let v1: f64 = norms_energy::v_norms_sq(&m, &s).iter().sum();
            let lam = b.operators[ci].modes[idx].eigenvalue;
            assert!((l2 - 1.0).abs() < 1e-12, "component {ci} mode {idx}: {l2}");
            assert!((v1 - lam).abs() < 1e-10 * lam.max(1.0), "{v1} vs {lam}");
        }
    }
}

#[test]
fn coordinates_match_norms() {
    let m = model(7, 9);
    let b = SpectralBasis::build(&m).unwrap();
    for seed in 0..3 {
        let s = random_spec(&m, seed);
        let c = b.coords(&s);
        let back = b.from_coords(&c);
        assert!(rel_diff(&m, &back, &s) < 1e-12);
        let sum_sq: f64 = c.iter().flatten().map(|x| x * x).sum();
        assert_relative_eq!(sum_sq, norms_energy::spec_l2_sq(&m, &s), max_relative = 1e-12);
        let psi = psi_of(&b, &s);
        let v: f64 = norms_energy::v_norms_sq(&m, &s).iter().sum();
        assert_relative_eq!(psi, v, max_relative = 1e-12);
    }
}

#[test]
fn projector_algebra() {
    let m = model(5, 5);
    let b = SpectralBasis::build(&m).unwrap();
    let s = random_spec(&m, 4);
    assert_eq!(b.project_high(&s, 0).unwrap(), s);
    let full = b.project_high(&s, b.mode_count()).unwrap();
    assert!(norms_energy::spec_l2_sq(&m, &full).sqrt() < 1e-12 * norms_energy::spec_l2_sq(&m, &s).sqrt());
    assert!(b.project_high(&s, b.mode_count() + 1).is_err());
    for n in [1, 3, 40, 200] {
        let mut sum = b.project_low(&s, n).unwrap();
        sum.axpy(1.0, &b.project_high(&s, n).unwrap());
        assert!(rel_diff(&m, &sum, &s) < 1e-13);
        for k in [2, 50, 300] {
            let a = b.project_high(&b.project_high(&s, n).unwrap(), k).unwrap();
            let expect = b.project_high(&s, n.max(k)).unwrap();
            let mut d = a.clone();
            d.axpy(-1.0, &expect);
            let r = (norms_energy::spec_l2_sq(&m, &d) / norms_energy::spec_l2_sq(&m, &s)).sqrt();
            assert!(r < 1e-13, "n {n} k {k}: {r:e}");
        }
    }
}

#[test]
fn phi_psi_basics() {
    let m = model(5, 5);
    let b = SpectralBasis::build(&m).unwrap();
    let z = SpecState::zeros(5, 5);
    assert_eq!(b.phi_psi(&z, 0).unwrap(), (0.0, 0.0));
    let s = random_spec(&m, 6);
    let (phi0, psi) = b.phi_psi(&s, 0).unwrap();
    assert_eq!(phi0, psi);
    let mut last = psi;
    for n in 0..=b.mode_count() {
        let (phi, _) = b.phi_psi(&s, n).unwrap();
        assert!(phi <= last && phi <= psi && phi >= 0.0);
        last = phi;
    }
    assert_eq!(last, 0.0);
    // φ from tails agrees with the norm of the projected field
    let n = 25;
    let q = b.project_high(&s, n).unwrap();
    let (phi, _) = b.phi_psi(&s, n).unwrap();
    let direct: f64 = norms_energy::v_norms_sq(&m, &q).iter().sum();
    assert_relative_eq!(phi, direct, max_relative = 1e-10);
}

#[test]
fn max_eigenvalue_grows_with_resolution() {
    let a = SpectralBasis::build(&model(3, 5)).unwrap();
    let b = SpectralBasis::build(&model(5, 9)).unwrap();
    for i in 0..3 {
        let la = a.operators[i].modes.last().unwrap().eigenvalue;
        let lb = b.operators[i].modes.last().unwrap().eigenvalue;
        assert!(lb > la);
    }
}

#[test]
fn identical_pairs() {
    let m = model(5, 5);
    let b = SpectralBasis::build(&m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u = m.random_state(&mut rng, 5, 1.0);
    let f = Forcing::preset(ForcingPreset::Moist, 5.0, &m.grid, &m.vgrid);
    let cfg = StepperConfig {
        dt: 0.01,
        ..Default::default()
    };
    let traj = evolve_pair(&m, &f, &cfg, &b, (&u, &u), 0.1, 1).unwrap();
    assert_eq!(traj.samples.len(), 11);
    for s in &traj.samples {
        assert_eq!(s.psi, 0.0);
        assert_eq!(s.h2_integral, 0.0);
        assert!(s.diff.groups().iter().all(|g| g.iter().all(|x| x.as_slice().iter().all(|c| c.re == 0.0 && c.im == 0.0))));
    }
    let rep = squeeze_experiment(&m, &f, &cfg, &b, &[(u.clone(), u.clone())], 0.1, &[0, 10]).unwrap();
    assert_eq!(rep.excluded(), 1);
    assert_eq!(rep.delta_hat, vec![None, None]);
    assert!(rep.diagnostic.is_some());
    assert!(estimate_gamma(&m, &f, &cfg, &b, &[(u.clone(), u)], &[0.0, 0.1]).is_err());
}

#[test]
fn inadmissible_pair_rejected() {
    let m = model(5, 5);
    let b = SpectralBasis::build(&m).unwrap();
    let mut u = State::zeros(&m.grid, &m.vgrid);
    let v = m.grid.grad(&m.grid.from_fn(|t, _| t.cos()));
    u.v = crate::column::VField3D::broadcast(&v, 5);
    let z = State::zeros(&m.grid, &m.vgrid);
    let f = Forcing::zeros(&m.grid, &m.vgrid);
    let r = evolve_pair(&m, &f, &StepperConfig::default(), &b, (&u, &z), 0.1, 1);
    assert!(matches!(r, Err(Error::Attractor(_))));
}

#[test]
fn ensemble_and_gamma() {
    let m = model(5, 5);
    let b = SpectralBasis::build(&m).unwrap();
    let f = Forcing::preset(ForcingPreset::Moist, 5.0, &m.grid, &m.vgrid);
    let cfg = StepperConfig {
        dt: 0.02,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u = m.random_state(&mut rng, 5, 1.0);
    let bases = trajectory_states(&m, &f, &cfg, &u, 3, 0.2).unwrap();
    assert_eq!(bases.len(), 3);
    assert!((bases[2].time - 0.4).abs() < 1e-12);
    let pairs = perturbed_pairs(&m, &bases, 1e-5, 42);
    assert_eq!(pairs, perturbed_pairs(&m, &bases, 1e-5, 42));
    assert_ne!(pairs[0].1, perturbed_pairs(&m, &bases, 1e-5, 43)[0].1);
    for (a, p) in &pairs {
        let d = a.difference(p);
        let r = (norms_energy::state_l2_sq(&m, &d) / norms_energy::state_l2_sq(&m, a)).sqrt();
        assert_relative_eq!(r, 1e-5, max_relative = 1e-10);
        let ds = m.to_spectral(&d);
        let r = m.constraint_residual_spec(&ds) / norms_energy::spec_l2_sq(&m, &ds).sqrt();
        assert!(r < 1e-9, "{r:e}");
    }
    let times = [0.0, 0.1, 0.2, 0.4];
    let g = estimate_gamma(&m, &f, &cfg, &b, &pairs, &times).unwrap();
    assert_eq!(g.gamma[0], 1.0);
    assert!(g.gamma.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(g.lipschitz_surrogate(), Some(g.gamma[3].sqrt()));
    assert!(estimate_gamma(&m, &f, &cfg, &b, &pairs, &[0.2, 0.1]).is_err());

    let ns: Vec<usize> = (0..=b.mode_count()).step_by(7).chain([b.mode_count()]).collect();
    let rep = squeeze_experiment(&m, &f, &cfg, &b, &pairs, 0.2, &ns).unwrap();
    assert_eq!(rep.excluded(), 0);
    let d: Vec<f64> = rep.delta_hat.iter().map(|x| x.unwrap()).collect();
    assert!(d.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*d.last().unwrap(), 0.0);
    for p in &rep.pairs {
        assert_eq!(p.phi_t[0], p.psi_t);
    }
}

#[test]
fn linear_regime_scaling() {
    let m = model(5, 5);
    let b = SpectralBasis::build(&m).unwrap();
    let f = Forcing::preset(ForcingPreset::Moist, 10.0, &m.grid, &m.vgrid);
    let cfg = StepperConfig {
        dt: 0.02,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let u = m.random_state(&mut rng, 5, 1.0);
    let norm_mu = |eps: f64| {
        let pair = &perturbed_pairs(&m, &[u.clone()], eps, 3)[0];
        let t = evolve_pair(&m, &f, &cfg, &b, (&pair.0, &pair.1), 0.5, u64::MAX).unwrap();
        let v = m.velocity_from_spectral(&t.last().diff);
        norms_energy::l2_norm_vec(&m, &v)
    };
    for eps in [1e-4, 1e-5] {
        let ratio = norm_mu(eps) / norm_mu(0.5 * eps);
        assert!((ratio - 2.0).abs() < 0.2, "eps {eps}: ratio {ratio}");
    }
}

#[test]
fn dimension_bound_values() {
    let g = 0.8346268f64;
    assert_eq!(GAUSS_CONSTANT, g);
    let limit = (8.0 * g * g).ln() / 2f64.ln();
    let v = dimension_bound(1, 1.0, 1e-6).unwrap();
    assert!((v - limit).abs() < 1e-9);
    assert!((v - 2.4784).abs() < 1e-3);
    for bad in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
        assert!(dimension_bound(1, 1.0, bad).is_err());
    }
    assert!(dimension_bound(0, 1.0, 0.5).is_err());
    assert!(dimension_bound(1, 0.0, 0.5).is_err());
    assert!(dimension_bound(1, -1.0, 0.5).is_err());
}

proptest! {
    #[test]
    fn dimension_bound_structure(n in 1usize..1000, c in 0.1f64..100.0, d in 0.01f64..0.98, dd in 0.001f64..0.01, dc in 0.01f64..1.0) {
        let base = dimension_bound(n, c, d).unwrap();
        prop_assert_eq!(dimension_bound(2 * n, c, d).unwrap(), 2.0 * base);
        prop_assert!(dimension_bound(n, c, d + dd).unwrap() > base);
        prop_assert!(dimension_bound(n, c + dc, d).unwrap() > base);
    }

    #[test]
    fn projector_nesting(seed in 0u64..1000, n in 0usize..300, k in 0usize..300) {
        let m = model(3, 4);
        let b = SpectralBasis::build(&m).unwrap();
        let s = random_spec(&m, seed);
        let (lo, hi) = (n.min(k).min(b.mode_count()), n.max(k).min(b.mode_count()));
        let (phi_lo, psi) = b.phi_psi(&s, lo).unwrap();
        let (phi_hi, _) = b.phi_psi(&s, hi).unwrap();
        prop_assert!(phi_hi <= phi_lo);
        prop_assert!(phi_lo <= psi);
    }
}
