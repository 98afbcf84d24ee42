use fracctl::frac_ode::{solve_caputo_linear, solve_caputo_nonlinear, FieldDescriptor, LinearSystem, Trajectory};
use fracctl::grid::{sup_distance, SampledFunction, TimeGrid};
use fracctl::nonlinear_control::{
    compute_split_constants, control_norm, estimate_kz, fixed_point_solve, memory_term, solve_yp, Pipeline, SynthesisReport,
};
use fracctl::problem::{Numerics, ProblemSpec};
use fracctl::random::InstanceGenerator;
use fracctl::transition::build_kernels;
use fracctl::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn reference() -> ProblemSpec {
    ProblemSpec::from_json(include_str!("../../fracctl-cli/fixtures/reference_d2.json")).unwrap()
}

fn constant_two() -> ProblemSpec {
    ProblemSpec::from_json(include_str!("../../fracctl-cli/fixtures/constant_two.json")).unwrap()
}

fn circle(n: usize, eps: f64) -> Trajectory<f64> {
    let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
    SampledFunction::from_fn(grid, |t: f64| DVector::from_vec(vec![0.5 * t.cos() + eps * (5.0 * t).sin(), 0.5 * t.sin()])).unwrap()
}

fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

#[test]
fn split_constants_follow_the_formulas() {
    let v = circle(100, 0.0);
    let one = compute_split_constants(&v, &FieldDescriptor::constant(1.0), 0.5, 1.0).unwrap();
    assert_eq!((one.m_v, one.k_v, one.t_v), (1.0, 1.0, 0.0));
    let two = compute_split_constants(&v, &FieldDescriptor::constant(2.0), 0.5, 1.0).unwrap();
    assert_eq!((two.m_v, two.k_v, two.t_v_exact), (2.0, 4.0, 0.5));
    assert_eq!(two.split_index, 50);

    let f = FieldDescriptor::gauss_plus(1.0, 1.0);
    for &alpha in &[0.3, 0.6, 0.9] {
        let s = compute_split_constants(&v, &f, alpha, 2.0).unwrap();
        // |v| = 1/2 everywhere
        assert!((s.m_v - (1.0 + (-0.25f64).exp())).abs() < 1e-15);
        assert!((s.k_v - s.m_v.powf(1.0 / alpha)).abs() < 1e-12);
        assert!((s.t_v_exact - (2.0 - 2.0 / s.k_v.powf(alpha))).abs() < 1e-12);
        assert!(s.m_v / s.k_v.powf(alpha) <= 1.0 + 1e-15);
        assert!(s.t_v <= s.t_v_exact && s.t_v_exact - s.t_v < 2.0 / 100.0);
    }
    let zero = FieldDescriptor::rational_plus(0.0, 0.0);
    assert!(matches!(compute_split_constants(&v, &zero, 0.5, 1.0), Err(Error::NonPositiveField(_))));
}

#[test]
fn split_constants_are_continuous() {
    let f = FieldDescriptor::gauss_plus(1.0, 1.0);
    let limit = compute_split_constants(&circle(400, 0.0), &f, 0.6, 1.0).unwrap();
    let mut last = f64::INFINITY;
    for k in 1..=6 {
        let eps = 0.1 / 4f64.powi(k);
        let s = compute_split_constants(&circle(400, eps), &f, 0.6, 1.0).unwrap();
        let gap = (s.m_v - limit.m_v).abs().max((s.k_v - limit.k_v).abs()).max((s.t_v_exact - limit.t_v_exact).abs());
        assert!(gap <= 10.0 * eps, "eps {eps}: {gap}");
        assert!(gap <= last);
        last = gap;
    }
    assert!(last < 1e-4);
}

#[test]
fn memory_term_examples() {
    // z = t on [0, 1/2]: closed-form antiderivative
    let head = TimeGrid::new(0.0, 0.5, 1000).unwrap();
    let z = Trajectory::scalar_from_fn(head, |t| t).unwrap();
    let eval = [0.6f64, 0.75, 1.0];
    let h = memory_term(&z, &eval, 0.5).unwrap();
    for (t, got) in eval.iter().zip(&h) {
        let want = (t.powf(0.5) - (t - 0.5f64).powf(0.5)) / gamma(1.5);
        assert!((got[0] - want).abs() < 1e-6, "t {t}: {} vs {want}", got[0]);
    }
    assert!((h[2][0] - 0.33049461).abs() < 1e-6);

    let flat = Trajectory::constant(head, DVector::from_vec(vec![1.0, -2.0])).unwrap();
    assert!(memory_term(&flat, &eval, 0.3).unwrap().iter().all(|v| v.iter().all(|&x| x == 0.0)));
    assert!(memory_term(&z, &[0.5], 0.5).is_err());
}

#[test]
fn memory_term_of_a_coast_is_bounded_by_kz_gamma() {
    let mut gen = InstanceGenerator::new(3);
    for _ in 0..6 {
        let alpha = gen.uniform(0.3, 0.9);
        let a = gen.psd_matrix(3);
        let y0 = gen.normal_vector(3);
        let n = 800;
        let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
        let f = FieldDescriptor::rational_plus(0.5, 1.5);
        let coast = solve_caputo_nonlinear(&a, &f, &y0, &grid, alpha).unwrap();
        let s = n / 3;
        let z = Trajectory::new(grid.head(s).unwrap(), coast.values()[..=s].to_vec()).unwrap();
        let eval: Vec<f64> = (s + 1..=n).map(|j| grid.node(j)).collect();
        let h = memory_term(&z, &eval, alpha).unwrap();
        let sup = h.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let bound = estimate_kz(&coast, alpha) * gamma(alpha);
        assert!(sup <= bound * (1.0 + 1e-6), "alpha {alpha}: {sup} > {bound}");
    }
}

#[test]
fn particular_solution_matches_direct_solve() {
    let n = 2000;
    let alpha = 0.6;
    let a = DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.8]);
    let y0 = DVector::from_vec(vec![1.0, -0.6]);
    let f = FieldDescriptor::constant(2.0);
    let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
    let coast = solve_caputo_nonlinear(&a, &f, &y0, &grid, alpha).unwrap();
    let s = n / 2;
    let z = Trajectory::new(grid.head(s).unwrap(), coast.values()[..=s].to_vec()).unwrap();
    let sub = grid.tail(s).unwrap();
    let eval: Vec<f64> = (s + 1..=n).map(|j| grid.node(j)).collect();
    let mut h = vec![-(&a * z.value(s)) * 2.0];
    h.extend(memory_term(&z, &eval, alpha).unwrap());
    let h = SampledFunction::new(sub, h).unwrap();
    let g = SampledFunction::scalar_from_fn(sub, |_| 2.0).unwrap();

    let kernel = build_kernels(&-&a, &g, alpha, 1e-12).unwrap();
    let y_p = solve_yp(&kernel, &h).unwrap();
    assert!(y_p.value(0).iter().all(|&x| x == 0.0));
    let minus_h = h.map(|v| -v).unwrap();
    let sys = LinearSystem::separable(-&a, g.clone(), minus_h, DVector::zeros(2)).unwrap();
    let direct = solve_caputo_linear(&sys, alpha).unwrap();
    let err = sup_distance(y_p.values(), direct.values());
    assert!(err < 1e-3, "{err}");

    let bound = estimate_kz(&coast, alpha) * gamma(alpha) / alpha;
    assert!(y_p.sup_norm() <= bound, "{} > {bound}", y_p.sup_norm());

    let zero = SampledFunction::constant(sub, DVector::zeros(2)).unwrap();
    assert!(solve_yp(&kernel, &zero).unwrap().values().iter().all(|v| v.iter().all(|&x| x == 0.0)));
    let wrong = SampledFunction::constant(sub, DVector::zeros(3)).unwrap();
    assert!(solve_yp(&kernel, &wrong).is_err());
}

#[test]
fn assembled_iterate_splices_the_coast() {
    let spec = constant_two();
    let pipe = Pipeline::<f64>::new(&spec).unwrap();
    let (y, u, rec) = pipe.assemble_iterate(pipe.coast(), 1).unwrap();
    let s = rec.split.split_index;
    assert_eq!(s, 1000);
    for j in 0..=s {
        assert_eq!(y.value(j), pipe.coast().value(j));
        assert!(u.samples.value(j).iter().all(|&x| x == 0.0));
    }
    assert!(rec.audits_pass(), "{:?}", rec.audits);
    assert!(rec.terminal_error <= 1e-3 * (1.0 + 1.0));
    let grid = TimeGrid::new(0.0, 2.0, 2000).unwrap();
    let off_grid = Trajectory::constant(grid, DVector::zeros(2)).unwrap();
    assert!(pipe.assemble_iterate(&off_grid, 1).is_err());
}

fn check_report(report: &SynthesisReport<f64>, spec: &ProblemSpec) {
    let y0 = spec.y0_vector();
    assert_eq!(report.trajectory.value(0), &y0);
    let last = report.iterations.last().unwrap();
    // with T_v = 0 the zero segment is the single point t = 0, where u takes u_2(0)
    let s = last.split.split_index;
    for j in (0..=s).filter(|_| s > 0) {
        assert!(report.control.samples.value(j).iter().all(|&x| x == 0.0), "u({j}) != 0");
    }
    assert!(report.control_l2_norm.is_finite() && report.control_l2_norm > 0.0);
    assert!((control_norm(&report.control) - report.control_l2_norm).abs() < 1e-12);
    assert!(report.audits_pass(), "{:?}", last.audits);
}

#[test]
fn constant_field_converges_immediately() {
    let spec = constant_two();
    let report = fixed_point_solve::<f64>(&spec, &spec.numerics).unwrap();
    assert!(report.converged);
    assert!(report.iterations.len() <= 2);
    let last = report.iterations.last().unwrap();
    assert!(last.update_norm <= spec.numerics.fp_tol * (1.0 + report.trajectory.sup_norm()));
    assert!(report.terminal_error <= 2e-3, "{}", report.terminal_error);
    check_report(&report, &spec);

    let again = fixed_point_solve::<f64>(&spec, &spec.numerics).unwrap();
    assert_eq!(again.terminal_error, report.terminal_error);
    assert_eq!(again.trajectory.values(), report.trajectory.values());
}

#[test]
fn reference_instance_is_steered() {
    let spec = reference();
    let report = fixed_point_solve::<f64>(&spec, &spec.numerics).unwrap();
    assert!(report.converged && report.fixed_point_converged);
    assert!(report.terminal_error <= 1e-2, "{}", report.terminal_error);
    let y_t = spec.y_t_vector();
    let iterate_err = (report.trajectory.value(2000) - &y_t).norm();
    assert!(iterate_err <= 1e-3 * (1.0 + y_t.norm()), "{iterate_err}");
    check_report(&report, &spec);
    assert_eq!(report.seed, 20261015);
    let c = report.constants;
    for x in [c.k_z, c.c_w, c.c_t, c.c_u, c.c_y, c.c_alpha] {
        assert!(x.is_finite() && x > 0.0);
    }
}

#[test]
fn preconditions_are_checked_before_iterating() {
    let mut spec = reference();
    spec.b = vec![vec![0.0, 0.0]; 2];
    assert!(matches!(fixed_point_solve::<f64>(&spec, &spec.numerics), Err(Error::NotControllable { rank: Some(0), .. })));
    let mut spec = reference();
    spec.a = vec![vec![1.0, 0.5], vec![0.0, 1.0]];
    assert!(fixed_point_solve::<f64>(&spec, &spec.numerics).is_err());
    let mut spec = reference();
    spec.a = vec![vec![1.0, 0.0], vec![0.0, -0.5]];
    assert!(fixed_point_solve::<f64>(&spec, &spec.numerics).is_err());
}

#[test]
fn random_constant_problems_converge_in_two_iterations() {
    let mut gen = InstanceGenerator::new(8);
    let numerics = Numerics { n_steps: 400, ..Numerics::default() };
    for case in 0..4 {
        let c = gen.uniform(0.5, 3.0);
        let spec = gen.problem(3, FieldDescriptor::constant(c), numerics);
        let report = fixed_point_solve::<f64>(&spec, &numerics).unwrap();
        assert!(report.fixed_point_converged && report.iterations.len() <= 2, "case {case}");
        for rec in &report.iterations {
            let c_y = rec.constants.c_y;
            assert!(report.trajectory.sup_norm() <= c_y * (1.0 + 1e-6), "case {case}");
        }
        check_report(&report, &spec);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn split_constant_invariants(c1 in 0.05f64..3.0, c2 in 0.0f64..3.0, alpha in 0.1f64..0.99, t in 0.2f64..5.0) {
        let grid = TimeGrid::new(0.0, t, 64).unwrap();
        let v = SampledFunction::from_fn(grid, |s| DVector::from_vec(vec![s.sin(), 1.0 - s])).unwrap();
        let s = compute_split_constants(&v, &FieldDescriptor::gauss_plus(c1, c2), alpha, t).unwrap();
        prop_assert!(s.k_v >= 1.0);
        prop_assert!(s.m_v / s.k_v.powf(alpha) <= 1.0 + 1e-12);
        prop_assert!(s.t_v_exact >= 0.0 && s.t_v_exact < t);
        prop_assert!(s.t_v <= s.t_v_exact + 1e-12);
        if s.m_v <= 1.0 {
            prop_assert_eq!(s.t_v, 0.0);
        }
    }
}
