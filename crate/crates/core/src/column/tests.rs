use approx::assert_abs_diff_eq;
use ndarray::{Array1, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::sphere::SphereGrid;

fn small_grid() -> SphereGrid {
    SphereGrid::new(7, 12, 24).unwrap()
}

/// Root of `m tan m = α` in (0, π/2) by bisection.
pub(crate) fn robin_root(alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, std::f64::consts::FRAC_PI_2 - 1e-15);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid.tan() < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn pressure_law() {
    assert_eq!(pressure_of_xi(1.0, 1.0, 0.1).unwrap(), 1.0);
    assert_eq!(pressure_of_xi(0.0, 1.0, 0.1).unwrap(), 0.1);
    assert_abs_diff_eq!(pressure_of_xi(0.5, 1.0, 0.1).unwrap(), 0.55, epsilon = 1e-15);
    assert!(pressure_of_xi(1.5, 1.0, 0.1).is_err());
    assert!(pressure_of_xi(0.5, 1.0, 2.0).is_err());
    assert!(pressure_of_xi(0.5, 1.0, 0.0).is_err());
}

#[test]
fn grid_weights_and_nodes() {
    for k in [3, 9, 17, 64] {
        let vg = VerticalGrid::new(k).unwrap();
        assert_abs_diff_eq!(vg.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        assert!(vg.xi().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(vg.xi()[0], 0.0);
        assert_eq!(vg.xi()[k - 1], 1.0);
        let rows = vg.partial_weights();
        assert_abs_diff_eq!(rows[0].iter().sum::<f64>(), 1.0, epsilon = 1e-14);
    }
    assert!(VerticalGrid::new(2).is_err());
}

#[test]
fn partial_integral_oracles() {
    let g = small_grid();
    let vg = VerticalGrid::new(17).unwrap();
    let one = vg.from_fn(&g, |_, _, _| 1.0);
    let p = vg.partial_integral(&one);
    for (k, &xi) in vg.xi().iter().enumerate() {
        assert!(p.index_axis(Axis(0), k).iter().all(|x| (x - (1.0 - xi)).abs() < 1e-14));
    }
    assert!(vg.partial_integral(&vg.zeros(&g)).iter().all(|x| *x == 0.0));

    // telescoping against the explicit weight rows
    let f = vg.from_fn(&g, |t, p, xi| (3.0 * xi).sin() + t.cos() * p.sin());
    let pf = vg.partial_integral(&f);
    let rows = vg.partial_weights();
    let (k, m) = (3, 11);
    let h = vg.spacing();
    for j in 0..g.n_lat() {
        for i in 0..g.n_lon() {
            let col: Vec<f64> = (0..17).map(|l| f[[l, j, i]]).collect();
            let seg: f64 = (k..m).map(|l| 0.5 * h * (col[l] + col[l + 1])).sum();
            assert_abs_diff_eq!(pf[[k, j, i]], seg + pf[[m, j, i]], epsilon = 1e-14);
            let direct: f64 = rows[k].iter().zip(&col).map(|(w, c)| w * c).sum();
            assert_abs_diff_eq!(pf[[k, j, i]], direct, epsilon = 1e-14);
        }
    }
}

#[test]
fn barotropic_baroclinic_split() {
    let g = small_grid();
    let vg = VerticalGrid::new(9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base = g.random_vector(&mut rng, 7);
    let (m, f) = vertical_mean_and_fluct(&vg, &VField3D::broadcast(&base, 9));
    assert!((&m.theta - &base.theta).iter().all(|x| x.abs() < 1e-14));
    assert!(f.theta.iter().chain(f.phi.iter()).all(|x| x.abs() < 1e-14));

    let mut v = VField3D::zeros(&g, &vg);
    for k in 0..9 {
        let other = g.random_vector(&mut rng, 7);
        v.set_level(k, &(&other * (1.0 + k as f64)));
    }
    let (m, f) = vertical_mean_and_fluct(&vg, &v);
    let (m2, _) = vertical_mean_and_fluct(&vg, &f);
    assert!(m2.theta.iter().chain(m2.phi.iter()).all(|x| x.abs() < 1e-12));
    let back = &f + &VField3D::broadcast(&m, 9);
    assert!((&back - &v).theta.iter().all(|x| x.abs() < 1e-13));
    let (mm, _) = vertical_mean_and_fluct(&vg, &VField3D::broadcast(&m, 9));
    assert!((&mm.phi - &m.phi).iter().all(|x| x.abs() < 1e-13));

    // linear profile: trapezoid is exact, mean is the midpoint value
    let lin = vg.from_fn(&g, |t, _, xi| t.cos() * (2.0 + 3.0 * xi));
    let mean = vg.mean(&lin);
    let expect = g.from_fn(|t, _| t.cos() * 3.5);
    assert!((&mean - &expect).iter().all(|x| x.abs() < 1e-14));
}

#[test]
fn vertical_velocity_diagnosis() {
    let g = small_grid();
    let vg = VerticalGrid::new(9).unwrap();
    assert!(diagnose_w(&g, &vg, &VField3D::zeros(&g, &vg)).iter().all(|x| *x == 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut v = VField3D::zeros(&g, &vg);
    for k in 0..9 {
        v.set_level(k, &g.random_vector(&mut rng, 7));
    }
    let w = diagnose_w(&g, &vg, &v);
    assert!(w.index_axis(Axis(0), 8).iter().all(|x| *x == 0.0));
    assert!(g.l2_norm(&w.index_axis(Axis(0), 0).to_owned()) > 1e-3);

    // remove the barotropic divergent part: χ̄ → 0
    let (mean, _) = vertical_mean_and_fluct(&vg, &v);
    let mut p = g.potentials(&mean);
    p.psi = crate::sphere::Spectrum::zeros(7);
    let grad_part = g.from_potentials(&p);
    v.scaled_add(-1.0, &VField3D::broadcast(&grad_part, 9));
    let w = diagnose_w(&g, &vg, &v);
    assert!(g.l2_norm(&w.index_axis(Axis(0), 0).to_owned()) <= 1e-9);
}

#[test]
fn geopotential_reconstruction() {
    let g = small_grid();
    let params = crate::dynamics::ModelParams::default();
    let phi_s = g.from_fn(|t, p| t.cos() + 0.1 * p.sin() * t.sin());
    let mut errs = Vec::new();
    for k in [17, 33] {
        let vg = VerticalGrid::new(k).unwrap();
        let z = vg.zeros(&g);
        let phi = reconstruct_phi(&vg, &z, &z, &phi_s, &params);
        for lvl in phi.outer_iter() {
            assert!((&lvl - &phi_s).iter().all(|x| x.abs() == 0.0));
        }
        let one = vg.from_fn(&g, |_, _, _| 1.0);
        let phi = reconstruct_phi(&vg, &one, &z, &phi_s, &params);
        assert_eq!(phi.index_axis(Axis(0), k - 1), phi_s.view());
        let (pp, p0, b) = (params.p_surface, params.p_top, params.b);
        let mut err: f64 = 0.0;
        for (lvl, &xi) in vg.xi().iter().enumerate() {
            let p = (pp - p0) * xi + p0;
            let exact = b * pp / (pp - p0) * (pp / p).ln();
            let d = &phi.index_axis(Axis(0), lvl) - &phi_s;
            err = err.max(d.iter().fold(0.0f64, |a, x| a.max((x - exact).abs())));
        }
        errs.push(err);
    }
    let eoc = (errs[0] / errs[1]).log2();
    assert!(errs[0] < 0.05, "{errs:?}");
    assert!(eoc > 1.9, "eoc {eoc}");
}

#[test]
fn boundary_closures() {
    let g = small_grid();
    let vg = VerticalGrid::new(9).unwrap();
    assert!(VerticalBc::robin(-1.0).is_err());
    assert_eq!(VerticalBc::robin(0.0).unwrap().alpha(), 0.0);
    let f = vg.from_fn(&g, |t, p, xi| (t.cos() + p.sin()) * (1.0 + xi * xi * xi));
    assert_eq!(
        vg.d2_xi(&f, VerticalBc::Robin(0.0)),
        vg.d2_xi(&f, VerticalBc::Neumann)
    );
    assert_eq!(
        vg.neg_second_difference(VerticalBc::Robin(0.0)),
        vg.neg_second_difference(VerticalBc::Neumann)
    );
    let one = vg.from_fn(&g, |_, _, _| 1.0);
    for alpha in [0.0, 0.5, 1.0, 3.0] {
        let d = vg.d_xi(&one, VerticalBc::Robin(alpha));
        assert!(d.index_axis(Axis(0), 8).iter().all(|x| (x + alpha).abs() < 1e-12));
        assert!(d.index_axis(Axis(0), 0).iter().all(|x| x.abs() < 1e-15));
    }
    let d = vg.d_xi(&f, VerticalBc::Neumann);
    assert!(d.index_axis(Axis(0), 0).iter().all(|x| x.abs() < 1e-14));
    assert!(d.index_axis(Axis(0), 8).iter().all(|x| x.abs() < 1e-14));
}

/// Solves `-f'' + f = r` with the closure and returns the max nodal error
/// against `f = cos(m ξ)`, `m tan m = α`.
fn robin_bvp_error(levels: usize, alpha: f64) -> f64 {
    let vg = VerticalGrid::new(levels).unwrap();
    let m = robin_root(alpha);
    let a = vg.neg_second_difference(VerticalBc::Robin(alpha)).shifted(1.0, 1.0);
    let rhs: Vec<Complex64> = vg
        .xi()
        .iter()
        .map(|x| Complex64::new((m * m + 1.0) * (m * x).cos(), 0.0))
        .collect();
    let mut sol = vec![Complex64::new(0.0, 0.0); levels];
    a.solve(&rhs, &mut sol, &mut Vec::new());
    vg.xi()
        .iter()
        .zip(&sol)
        .map(|(x, s)| (s.re - (m * x).cos()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn robin_closure_second_order() {
    for alpha in [0.5, 1.0, 2.0] {
        let e1 = robin_bvp_error(17, alpha);
        let e2 = robin_bvp_error(33, alpha);
        let eoc = (e1 / e2).log2();
        assert!(eoc >= 1.9, "alpha {alpha}: {e1} {e2} eoc {eoc}");
    }
}

#[test]
fn weighted_form_identity() {
    let g = small_grid();
    let vg = VerticalGrid::new(12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut f = vg.zeros(&g);
    for mut lvl in f.outer_iter_mut() {
        lvl.assign(&g.random_scalar(&mut rng, 7));
    }
    for bc in [VerticalBc::Neumann, VerticalBc::Robin(0.7)] {
        let lhs = -vg.inner(&g, &vg.d2_xi(&f, bc), &f);
        let rhs = vg.vertical_form(&g, &f, bc);
        assert!((lhs - rhs).abs() < 1e-10 * rhs, "{lhs} {rhs}");
    }
    let one = vg.from_fn(&g, |_, _, _| 1.0);
    let form = vg.vertical_form(&g, &one, VerticalBc::Robin(1.0));
    assert_abs_diff_eq!(form, 4.0 * std::f64::consts::PI, epsilon = 1e-12);
}

#[test]
fn thomas_solver_and_modes() {
    let vg = VerticalGrid::new(10).unwrap();
    let a = vg.neg_second_difference(VerticalBc::Robin(1.0)).shifted(1.0, 0.1);
    let x: Vec<Complex64> = (0..10).map(|k| Complex64::new(k as f64, -(k as f64).sin())).collect();
    let mut b = x.clone();
    a.apply(&x, &mut b);
    let mut y = x.clone();
    a.solve(&b, &mut y, &mut Vec::new());
    for (p, q) in x.iter().zip(&y) {
        assert!((p - q).norm() < 1e-12);
    }

    let (vals, vecs) = vertical_modes(&vg, VerticalBc::Neumann);
    assert!(vals[0].abs() < 1e-10);
    assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    let w = Array1::from(vg.weights().to_vec());
    for i in 0..10 {
        for j in 0..10 {
            let d: f64 = (0..10).map(|k| w[k] * vecs[i][k] * vecs[j][k]).sum();
            let e = if i == j { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(d, e, epsilon = 1e-12);
        }
    }
    let dense = vg.neg_second_difference(VerticalBc::Neumann).to_dense();
    let av: Vec<f64> = (0..10).map(|r| (0..10).map(|c| dense[r][c] * vecs[3][c]).sum()).collect();
    for k in 0..10 {
        assert_abs_diff_eq!(av[k], vals[3] * vecs[3][k], epsilon = 1e-9);
    }
}

#[test]
fn lowest_robin_eigenvalue_converges() {
    let m0 = robin_root(1.0);
    assert_abs_diff_eq!(m0, 0.8603, epsilon = 1e-4);
    let exact = m0 * m0;
    let e: Vec<f64> = [32usize, 64]
        .iter()
        .map(|&k| {
            let vg = VerticalGrid::new(k).unwrap();
            (vertical_modes(&vg, VerticalBc::Robin(1.0)).0[0] - exact).abs()
        })
        .collect();
    assert!(e[1] < 1e-3);
    assert!((e[0] / e[1]).log2() >= 1.9);
}
