#![allow(clippy::approx_constant)] // quoted reference decimals

use fracctl::grid::{SampledFunction, TimeGrid};
use fracctl::linear_control::{
    apply_control, control_bounds, duality_residual, euler_lagrange_residual, functional_j, gramian, kalman_rank, minimizer_zb,
    observability_constant, synthesize_linear, Gramian,
};
use fracctl::random::{InstanceGenerator, LinearInstance};
use fracctl::special_functions::{mittag_leffler, MlQuery};
use fracctl::transition::{build_kernels, TransitionKernel};
use fracctl::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use std::f64::consts::PI;

fn grid(n: usize) -> TimeGrid<f64> {
    TimeGrid::new(0.0, 1.0, n).unwrap()
}

fn ml(alpha: f64, beta: f64, x: f64) -> f64 {
    mittag_leffler(&MlQuery::new(alpha, beta, x).unwrap())
}

/// Kernel of the dissipative system D^α y = -A g(t) y + B u.
fn kernel(inst: &LinearInstance, n: usize) -> TransitionKernel<f64> {
    build_kernels(&-inst.a.clone(), &inst.g(n), inst.alpha, 1e-12).unwrap()
}

fn scalar_kernel(n: usize) -> TransitionKernel<f64> {
    let g = SampledFunction::scalar_from_fn(grid(n), |_| 1.0).unwrap();
    build_kernels(&DMatrix::zeros(1, 1), &g, 0.5, 1e-13).unwrap()
}

/// Gauss-Legendre nodes and weights on [0, 1] by Newton iteration.
fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    (1..=m)
        .map(|i| {
            let mut x = (PI * (i as f64 - 0.25) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=m {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            ((1.0 - x) / 2.0, 1.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

#[test]
fn scalar_closed_form_instance() {
    let k = scalar_kernel(2000);
    let b = DMatrix::from_element(1, 1, 1.0);
    let (y0, yb) = (DVector::zeros(1), DVector::from_element(1, 1.0));
    let w = gramian(&k, &b).unwrap();
    assert!((w.matrix()[(0, 0)] - 2.0 / PI).abs() < 1e-10);
    assert!((w.matrix()[(0, 0)] - 0.6366198).abs() < 1e-7);
    let law = synthesize_linear(&k, &b, &y0, &yb).unwrap();
    assert!((law.z_hat_b[0] - 1.5707963).abs() < 1e-7);
    assert!(law.u.values().iter().all(|v| (v[0] - 0.8862269).abs() < 1e-7));
    let y = apply_control(&k, &b, &law.u, &y0).unwrap();
    assert!((y.value(2000)[0] - 1.0).abs() < 1e-3);
    for zb in [0.0, 0.5, 1.0, 2.5] {
        let j = functional_j(&DVector::from_element(1, zb), &k, &b, &y0, &yb).unwrap();
        assert!((j - (zb * zb / PI - zb)).abs() < 1e-10, "z_b = {zb}");
    }
    assert!((functional_j(&law.z_hat_b, &k, &b, &y0, &yb).unwrap() + 0.7853982).abs() < 1e-7);
    assert!(euler_lagrange_residual(&law.z_hat_b, &DVector::from_element(1, 1.0), &k, &b, &y0, &yb).unwrap() <= 1e-6);
    let obs = observability_constant(&k, &b).unwrap();
    assert!((obs.constant.unwrap() - 3.1415927).abs() < 1e-6);
    assert!(euler_lagrange_residual(&law.z_hat_b, &DVector::zeros(1), &k, &b, &y0, &yb).unwrap() == 0.0);
}

#[test]
fn gramian_of_a_diagonal_system_against_fine_quadrature() {
    // A = diag(1, 2), B = I, g ≡ 1: W_ii = ∫ (1-t)^(α-1) E_{α,α}(λ_i (1-t)^α)² dt,
    // i.e. (1/α) ∫_0^1 E_{α,α}(λ_i s)² ds after s = (1-t)^α
    let alpha = 0.5;
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
    let g = SampledFunction::scalar_from_fn(grid(1024), |_| 1.0).unwrap();
    let k = build_kernels(&a, &g, alpha, 1e-13).unwrap();
    let w = gramian(&k, &DMatrix::identity(2, 2)).unwrap();
    let gl = gauss_legendre(40);
    for (i, lam) in [1.0, 2.0].iter().enumerate() {
        let want: f64 = gl.iter().map(|&(s, wt)| wt * ml(alpha, alpha, lam * s).powi(2)).sum::<f64>() / alpha;
        assert!((w.matrix()[(i, i)] - want).abs() < 1e-4 * want, "{} vs {want}", w.matrix()[(i, i)]);
    }
    assert!(w.matrix()[(0, 1)].abs() < 1e-14);
    assert!((w.diagonal_form() - w.matrix()).amax() < 1e-14);
    assert!(w.min_eigenvalue() > 0.0);
}

#[test]
fn three_verdicts_agree_on_random_instances() {
    let mut gen = InstanceGenerator::new(20261015);
    let (mut yes, mut no) = (0, 0);
    for case in 0..100 {
        let inst = if case % 4 == 3 { gen.deficient(4) } else { gen.linear(4) };
        let k = kernel(&inst, 256);
        let (_, kalman) = kalman_rank(&inst.a, &inst.b).unwrap();
        let w = gramian(&k, &inst.b).unwrap();
        let obs = observability_constant(&k, &inst.b).unwrap();
        assert_eq!(kalman, w.is_nonsingular(), "case {case}: Kalman vs Gramian, λ = {:e}", w.min_eigenvalue());
        assert_eq!(kalman, obs.constant.is_some(), "case {case}: Kalman vs observability");
        assert_eq!(obs.constant.is_some(), obs.unique_continuation);
        if inst.deficient {
            assert!(!kalman, "case {case}: deficient instance passed the rank test");
        }
        if kalman {
            yes += 1;
        } else {
            no += 1;
        }
    }
    assert!(yes >= 50 && no >= 20, "{yes} controllable, {no} not");
}

#[test]
fn deficient_instance_is_rejected() {
    let mut gen = InstanceGenerator::new(3);
    let inst = gen.deficient(3);
    let k = kernel(&inst, 128);
    let err = synthesize_linear(&k, &inst.b, &inst.y0, &inst.yb).unwrap_err();
    assert!(matches!(err, Error::NotControllable { .. }));
}

#[test]
fn controls_steer_random_instances() {
    let mut gen = InstanceGenerator::new(99);
    for case in 0..25 {
        let inst = gen.controllable(4);
        let k = kernel(&inst, 2000);
        let law = synthesize_linear(&k, &inst.b, &inst.y0, &inst.yb).unwrap();
        let y = apply_control(&k, &inst.b, &law.u, &inst.y0).unwrap();
        let err = (y.value(2000) - &inst.yb).norm();
        assert!(err <= 1e-3 * inst.yb.norm().max(1.0), "case {case}: {err:e}");
        assert_eq!(y.value(0), &inst.y0);
        assert!(law.u.values().iter().all(|v| v.iter().all(|x| x.is_finite())));

        let bounds = control_bounds(&k, &inst.b, &law).unwrap();
        assert!(bounds.adjoint_excess <= 1e-6 && bounds.control_excess <= 1e-6, "case {case}: {bounds:?}");

        // ‖u‖ ≤ √C |y_b - Ψ y0| on the unit horizon
        let c = observability_constant(&k, &inst.b).unwrap().constant.unwrap();
        let rhs = c.sqrt() * (&inst.yb - k.psi_ab() * &inst.y0).norm();
        assert!(law.l2_norm <= rhs * (1.0 + 1e-8), "case {case}: {} > {rhs}", law.l2_norm);
    }
}

#[test]
fn duality_and_euler_lagrange_hold() {
    let mut gen = InstanceGenerator::new(1234);
    let inst = gen.controllable(4);
    let k = kernel(&inst, 1024);
    let law = synthesize_linear(&k, &inst.b, &inst.y0, &inst.yb).unwrap();
    let d = inst.dim();
    for _ in 0..10 {
        let zb = gen.normal_vector(d);
        let r = euler_lagrange_residual(&law.z_hat_b, &zb, &k, &inst.b, &inst.y0, &inst.yb).unwrap();
        assert!(r <= 1e-5 * (1.0 + inst.yb.norm() * zb.norm()), "{r:e}");
        // the pairing holds for any control, not just the optimal one
        let u = SampledFunction::from_fn(*k.grid(), |t| DVector::from_fn(inst.b.ncols(), |i, _| (t * (i + 1) as f64).cos())).unwrap();
        let dr = duality_residual(&k, &inst.b, &u, &inst.y0, &zb).unwrap();
        assert!(dr <= 1e-5 * (1.0 + inst.y0.norm() * zb.norm()), "{dr:e}");
    }
}

#[test]
fn control_energy_is_the_observability_form() {
    // ‖u‖² = ẑᵀ O ẑ, while ⟨y_b - Ψ y0, ẑ⟩ = ẑᵀ W ẑ; the two agree only when O = W
    let mut gen = InstanceGenerator::new(55);
    for _ in 0..10 {
        let inst = gen.controllable(3);
        let k = kernel(&inst, 1024);
        let law = synthesize_linear(&k, &inst.b, &inst.y0, &inst.yb).unwrap();
        let obs = observability_constant(&k, &inst.b).unwrap();
        let z = &law.z_hat_b;
        let energy = law.l2_norm.powi(2);
        let o_form = z.dot(&(&obs.matrix * z));
        assert!((energy - o_form).abs() <= 1e-5 * o_form, "{energy} vs {o_form}");
        let pairing = (&inst.yb - k.psi_ab() * &inst.y0).dot(z);
        let w_form = z.dot(&(law.gramian.matrix() * z));
        assert!((pairing - w_form).abs() <= 1e-8 * w_form.abs().max(1.0));
    }
    // scalar instance: ‖u‖² = π/4, ⟨y_b, ẑ⟩ = π/2
    let k = scalar_kernel(512);
    let b = DMatrix::from_element(1, 1, 1.0);
    let law = synthesize_linear(&k, &b, &DVector::zeros(1), &DVector::from_element(1, 1.0)).unwrap();
    assert!((law.l2_norm.powi(2) - PI / 4.0).abs() < 1e-10);
    assert!((law.z_hat_b[0] - PI / 2.0).abs() < 1e-10);
}

#[test]
fn apply_control_is_affine() {
    let mut gen = InstanceGenerator::new(8);
    let inst = gen.controllable(4);
    let k = kernel(&inst, 512);
    let m = inst.b.ncols();
    let u1 = SampledFunction::from_fn(*k.grid(), |t| DVector::from_fn(m, |i, _| (3.0 * t + i as f64).sin())).unwrap();
    let u2 = SampledFunction::from_fn(*k.grid(), |t| DVector::from_fn(m, |i, _| t * t - i as f64)).unwrap();
    let sum = SampledFunction::new(*k.grid(), u1.values().iter().zip(u2.values()).map(|(a, b)| a + b).collect()).unwrap();
    let zero = SampledFunction::constant(*k.grid(), DVector::zeros(m)).unwrap();
    let run = |u: &SampledFunction<f64>| apply_control(&k, &inst.b, u, &inst.y0).unwrap();
    let (y1, y2, ys, y0) = (run(&u1), run(&u2), run(&sum), run(&zero));
    for j in 0..=512 {
        let lhs = ys.value(j) - y0.value(j);
        let rhs = (y1.value(j) - y0.value(j)) + (y2.value(j) - y0.value(j));
        assert!((lhs - rhs).amax() <= 1e-9);
        assert!((y0.value(j) - k.psi(j) * &inst.y0).amax() <= 1e-14);
    }
    let wrong = SampledFunction::constant(grid(256), DVector::zeros(m)).unwrap();
    assert!(apply_control(&k, &inst.b, &wrong, &inst.y0).is_err());
}

#[test]
fn minimizer_is_a_local_minimum_of_j() {
    let mut gen = InstanceGenerator::new(71);
    for _ in 0..5 {
        let inst = gen.controllable(4);
        let k = kernel(&inst, 512);
        let law = synthesize_linear(&k, &inst.b, &inst.y0, &inst.yb).unwrap();
        let j = |z: &DVector<f64>| functional_j(z, &k, &inst.b, &inst.y0, &inst.yb).unwrap();
        let best = j(&law.z_hat_b);
        assert_eq!(j(&DVector::zeros(inst.dim())), 0.0);
        for i in 0..inst.dim() {
            for s in [0.01, -0.01] {
                let mut z = law.z_hat_b.clone();
                z[i] += s;
                assert!(best <= j(&z), "direction {i}, step {s}");
            }
        }
        // J(ẑ) = -½ ⟨y_b - Ψ y0, ẑ⟩ up to the quadrature of z0 = Ψᵀ ẑ
        let half = -0.5 * (&inst.yb - k.psi_ab() * &inst.y0).dot(&law.z_hat_b);
        assert!((best - half).abs() <= 1e-5 * (1.0 + half.abs()), "{best} vs {half}");
    }
}

#[test]
fn observability_constant_inverts_the_smallest_eigenvalue() {
    let mut gen = InstanceGenerator::new(600);
    for _ in 0..20 {
        let inst = gen.linear(4);
        let k = kernel(&inst, 256);
        let obs = observability_constant(&k, &inst.b).unwrap();
        if let Some(c) = obs.constant {
            assert!((c * obs.min_eigenvalue - 1.0).abs() <= 1e-8);
        }
        let o = &obs.matrix;
        assert!((o - o.transpose()).amax() <= 1e-10 * (1.0 + o.amax()));
    }
    let k = scalar_kernel(64);
    assert!(observability_constant(&k, &DMatrix::zeros(1, 1)).unwrap().constant.is_none());
}

#[test]
fn gramian_is_symmetric_positive_semidefinite() {
    let mut gen = InstanceGenerator::new(17);
    for _ in 0..20 {
        let inst = if gen.uniform(0.0, 1.0) < 0.3 { gen.deficient(4) } else { gen.linear(4) };
        let k = kernel(&inst, 256);
        let w = gramian(&k, &inst.b).unwrap();
        let m = w.matrix();
        let norm = m.amax();
        assert!((m - m.transpose()).amax() <= 1e-10 * (1.0 + norm));
        for _ in 0..10 {
            let x = gen.normal_vector(inst.dim());
            let x = &x / x.norm();
            assert!(x.dot(&(m * &x)) >= -1e-10 * norm);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn minimizer_solves_the_normal_equation(seed in 0u64..10_000, d in 1usize..6) {
        let mut gen = InstanceGenerator::new(seed);
        let spectrum: Vec<f64> = (0..d).map(|_| gen.uniform(0.05, 3.0)).collect();
        let w = gen.with_spectrum(&spectrum);
        let psi = gen.normal_matrix(d, d);
        let (y0, yb) = (gen.normal_vector(d), gen.normal_vector(d));
        let g = Gramian::from_matrix(w.clone(), (0.0, 1.0), 0.5).unwrap();
        let z = minimizer_zb(&g, &psi, &y0, &yb).unwrap();
        let res = (&w * &z + &psi * &y0 - &yb).norm();
        prop_assert!(res <= 1e-10 * (1.0 + yb.norm()), "{}", res);
        let reachable = &psi * &y0;
        prop_assert!(minimizer_zb(&g, &psi, &y0, &reachable).unwrap().norm() <= 1e-12 * (1.0 + y0.norm()));
        let singular = Gramian::from_matrix(DMatrix::zeros(d, d), (0.0, 1.0), 0.5).unwrap();
        prop_assert!(minimizer_zb(&singular, &psi, &y0, &yb).is_err());
    }
}
