use super::*;

fn bound_problem() -> FnProblem<'static> {
    // min x² s.t. 1 - x ≤ 0
    FnProblem::new(
        1,
        1,
        |x| (x[0] * x[0], vec![2.0 * x[0]]),
        |x| (vec![1.0 - x[0]], DMatrix::from_element(1, 1, -1.0)),
    )
}

fn state_at(x: &[f64], s: &[f64], nu: &[f64], mu: f64, radius: f64) -> BarrierState {
    BarrierState {
        x: x.to_vec(),
        s: s.to_vec(),
        nu: nu.to_vec(),
        mu,
        tr_radius: radius,
        h_obj: Bfgs::new(x.len()),
        h_con: Bfgs::new(x.len()),
        penalty: 1.0,
    }
}

#[test]
fn bound_constrained_square() {
    let p = bound_problem();
    let sol = minimize(&p, &[3.0], &TroptSettings::default()).unwrap();
    assert_eq!(sol.report.status, Status::Converged, "{:?}", sol.report);
    assert!((sol.x[0] - 1.0).abs() <= 1e-6, "x = {}", sol.x[0]);
    assert!(sol.report.max_violation <= 1e-8);
    assert!(sol.report.kkt_norm <= 1e-8);
}

#[test]
fn unconstrained_quadratic() {
    let p = FnProblem::unconstrained(2, |x| (x[0] * x[0] + x[1] * x[1], vec![2.0 * x[0], 2.0 * x[1]]));
    let sol = minimize(&p, &[1.5, -0.7], &TroptSettings::default()).unwrap();
    assert_eq!(sol.report.status, Status::Converged);
    assert!(norm(&sol.x) <= 1e-8);
}

#[test]
fn rosenbrock_in_disk() {
    let p = FnProblem::new(
        2,
        1,
        |x| {
            let (a, b) = (1.0 - x[0], x[1] - x[0] * x[0]);
            (a * a + 100.0 * b * b, vec![-2.0 * a - 400.0 * x[0] * b, 200.0 * b])
        },
        |x| (vec![x[0] * x[0] + x[1] * x[1] - 2.0], DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]])),
    );
    let sol = minimize(&p, &[-1.0, 0.5], &TroptSettings { max_iters: 3000, ..Default::default() }).unwrap();
    assert!((sol.x[0] - 1.0).abs() <= 1e-4 && (sol.x[1] - 1.0).abs() <= 1e-4, "{:?} {:?}", sol.x, sol.report);
    assert!(sol.report.max_violation <= 1e-8);
}

#[test]
fn kkt_residuals_at_analytic_solution() {
    let p = bound_problem();
    let ev = Evaluation::at(&p, &[1.0]).unwrap();
    let st = state_at(&[1.0], &[0.0], &[2.0], 0.0, 1.0);
    let k = kkt_residuals(&st, &ev);
    assert!(norm_inf(&k.e1) <= 1e-8 && norm_inf(&k.e2) <= 1e-8 && norm_inf(&k.e3) <= 1e-8);
}

#[test]
fn kkt_residual_exact_zeros() {
    let p = bound_problem();
    let ev = Evaluation::at(&p, &[1.5]).unwrap();
    let mu = 0.3;
    let s = [0.5];
    let st = state_at(&[1.5], &s, &[mu / s[0]], mu, 1.0);
    let k = kkt_residuals(&st, &ev);
    assert_eq!(k.e2, vec![0.0]);
    assert_eq!(k.e3, vec![0.0]);
}

#[test]
fn multiplier_of_single_active_linear_constraint() {
    // min (x-2)² + (y-1)² s.t. x + y - 1 ≤ 0; optimum (1, 0), ν = 2
    let p = FnProblem::new(
        2,
        1,
        |x| ((x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2), vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] - 1.0)]),
        |x| (vec![x[0] + x[1] - 1.0], DMatrix::from_row_slice(1, 2, &[1.0, 1.0])),
    );
    let ev = Evaluation::at(&p, &[1.0, 0.0]).unwrap();
    // With s → 0 and μ = 0 the least-squares system reduces to ∇h + Jᵀν = 0.
    let st = state_at(&[1.0, 0.0], &[1e-12], &[0.0], 0.0, 1.0);
    let nu = estimate_multipliers(&st, &ev).unwrap();
    assert!((nu[0] - 2.0).abs() < 1e-10, "{nu:?}");
    // Away from s → 0 compare with the closed-form least-squares solution.
    let (s, mu) = (0.5, 0.1);
    let st = state_at(&[1.0, 0.0], &[s], &[0.0], mu, 1.0);
    let nu = estimate_multipliers(&st, &ev).unwrap();
    // minimize (-2 + ν)² + (-2 + ν)² + (-μ + sν)²
    let expect = (2.0 * 2.0 + mu * s) / (2.0 + s * s);
    assert!((nu[0] - expect).abs() < 1e-12);
}

#[test]
fn multipliers_without_constraints_are_empty() {
    let p = FnProblem::unconstrained(2, |x| (x[0] * x[0], vec![2.0 * x[0], 0.0]));
    let ev = Evaluation::at(&p, &[1.0, 1.0]).unwrap();
    let st = state_at(&[1.0, 1.0], &[], &[], 0.1, 1.0);
    assert!(estimate_multipliers(&st, &ev).unwrap().is_empty());
}

#[test]
fn duplicated_constraint_splits_multiplier() {
    let single = bound_problem();
    let double = FnProblem::new(
        1,
        2,
        |x| (x[0] * x[0], vec![2.0 * x[0]]),
        |x| (vec![1.0 - x[0], 1.0 - x[0]], DMatrix::from_element(2, 1, -1.0)),
    );
    let e1 = Evaluation::at(&single, &[1.0]).unwrap();
    let e2 = Evaluation::at(&double, &[1.0]).unwrap();
    let n1 = estimate_multipliers(&state_at(&[1.0], &[1e-9], &[0.0], 0.0, 1.0), &e1).unwrap();
    let n2 = estimate_multipliers(&state_at(&[1.0], &[1e-9, 1e-9], &[0.0, 0.0], 0.0, 1.0), &e2).unwrap();
    assert!((n2[0] - n2[1]).abs() < 1e-9);
    assert!((n2[0] + n2[1] - n1[0]).abs() < 1e-6, "{n1:?} {n2:?}");
}

#[test]
fn slack_hessian_branches() {
    let mu = 0.2;
    let s = 0.4;
    let st = state_at(&[0.0], &[s, s, 0.5], &[mu / s, 0.0, 2.0], mu, 1.0);
    let h = slack_hessian(&st);
    assert!((h[0] - mu / (s * s)).abs() < 1e-12);
    assert_eq!(h[1], mu / (s * s));
    assert_eq!(h[2], 4.0);
}

#[test]
fn normal_step_properties() {
    let p = FnProblem::new(
        2,
        1,
        |x| (x[0] * x[0] + x[1] * x[1], vec![2.0 * x[0], 2.0 * x[1]]),
        |x| (vec![x[0] + 2.0 * x[1] - 3.0], DMatrix::from_row_slice(1, 2, &[1.0, 2.0])),
    );
    let settings = TroptSettings::default();
    // feasible: g + s = 0
    let ev = Evaluation::at(&p, &[0.0, 0.0]).unwrap();
    let st = state_at(&[0.0, 0.0], &[3.0], &[0.0], 0.1, 1.0);
    assert!(norm(&normal_step(&st, &ev, &settings).unwrap()) == 0.0);
    // large radius: least-norm correction of A d = -(g + s) with A = [1, 2, s]
    let st = state_at(&[0.0, 0.0], &[0.5], &[0.0], 0.1, 1e6);
    let d = normal_step(&st, &ev, &settings).unwrap();
    let a = [1.0, 2.0, 0.5];
    let b = -3.0 + 0.5;
    let scale = -b / dot(&a, &a);
    for i in 0..3 {
        assert!((d[i] - scale * a[i]).abs() < 1e-12, "{d:?}");
    }
    // radius respected
    for r in [1e-3, 0.1, 0.7] {
        let st = state_at(&[0.0, 0.0], &[0.5], &[0.0], 0.1, r);
        let d = normal_step(&st, &ev, &settings).unwrap();
        assert!(norm(&d) <= 0.8 * r * (1.0 + 1e-12));
    }
}

#[test]
fn tangential_step_properties() {
    let settings = TroptSettings::default();
    // zero model gradient → zero step
    let p = FnProblem::unconstrained(2, |x| (x[0] * x[0] + x[1] * x[1], vec![2.0 * x[0], 2.0 * x[1]]));
    let ev = Evaluation::at(&p, &[0.0, 0.0]).unwrap();
    let st = state_at(&[0.0, 0.0], &[], &[], 0.1, 1.0);
    assert_eq!(tangential_step(&st, &ev, &[0.0, 0.0], &settings).unwrap(), vec![0.0, 0.0]);
    // m = 0 with huge radius → Newton step of the model
    let ev = Evaluation::at(&p, &[1.0, -2.0]).unwrap();
    let mut st = state_at(&[1.0, -2.0], &[], &[], 0.1, 1e9);
    st.h_obj.b = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
    st.h_con.b = DMatrix::zeros(2, 2);
    let d = tangential_step(&st, &ev, &[0.0, 0.0], &settings).unwrap();
    let newton = st.h_obj.b.clone().lu().solve(&DVector::from_column_slice(&[-2.0, 4.0])).unwrap();
    assert!((d[0] - newton[0]).abs() < 1e-10 && (d[1] - newton[1]).abs() < 1e-10);
    // projection property with a constraint
    let p = FnProblem::new(
        3,
        1,
        |x| (x.iter().map(|v| v * v).sum(), x.iter().map(|v| 2.0 * v).collect()),
        |x| (vec![x[0] - x[1] + 0.5 * x[2]], DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 0.5])),
    );
    let x = [0.3, 0.9, -1.2];
    let ev = Evaluation::at(&p, &x).unwrap();
    let st = state_at(&x, &[0.7], &[0.1], 0.1, 0.5);
    let d = tangential_step(&st, &ev, &[0.0; 4], &settings).unwrap();
    assert!(norm(&d) > 0.0);
    let a_d = d[0] - d[1] + 0.5 * d[2] + 0.7 * d[3];
    assert!(a_d.abs() < 1e-10);
}

#[test]
fn exact_model_step_is_accepted_and_expands() {
    // quadratic objective with its exact Hessian; step ends on the boundary
    let p = FnProblem::unconstrained(2, |x| (x[0] * x[0] + 2.0 * x[1] * x[1], vec![2.0 * x[0], 4.0 * x[1]]));
    let settings = TroptSettings::default();
    let mut ev = Evaluation::at(&p, &[3.0, 1.0]).unwrap();
    let mut st = state_at(&[3.0, 1.0], &[], &[], 0.1, 0.5);
    st.h_obj.b = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
    st.h_con.b = DMatrix::zeros(2, 2);
    let out = sqp_step(&p, &settings, &mut st, &mut ev).unwrap();
    assert!(out.accepted);
    assert!((out.ratio - 1.0).abs() < 1e-10);
    assert_eq!(st.tr_radius, 1.0);
}

#[test]
fn merit_increase_is_rejected_and_radius_shrinks() {
    // model claims decrease (H ≈ 0 direction) but the true function rises sharply
    let p = FnProblem::unconstrained(1, |x| (-x[0] + 100.0 * x[0].powi(4), vec![-1.0 + 400.0 * x[0].powi(3)]));
    let settings = TroptSettings::default();
    let mut ev = Evaluation::at(&p, &[0.0]).unwrap();
    let mut st = state_at(&[0.0], &[], &[], 0.1, 1.0);
    st.h_obj.b = DMatrix::from_element(1, 1, 1e-6);
    st.h_con.b = DMatrix::zeros(1, 1);
    let out = sqp_step(&p, &settings, &mut st, &mut ev).unwrap();
    assert!(!out.accepted);
    assert_eq!(st.x, vec![0.0]);
    assert!(st.tr_radius <= 0.5);
}

#[test]
fn fraction_to_boundary_caps_slack_step() {
    let p = bound_problem();
    let st = state_at(&[3.0], &[2.0], &[0.0], 0.1, 10.0);
    let t = trial_point(&p, &st, &[0.0, -5.0], 0.995).unwrap();
    assert!((t.s[0] - (1.0 - 0.995) * 2.0).abs() < 1e-15);
}

#[test]
fn slacks_stay_positive_and_mu_is_monotone() {
    let p = FnProblem::new(
        2,
        2,
        |x| ((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)]),
        |x| (vec![x[0] - 1.0, -x[1]], DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])),
    );
    let sol = minimize(&p, &[0.0, 2.0], &TroptSettings::default()).unwrap();
    assert_eq!(sol.report.status, Status::Converged);
    assert!((sol.x[0] - 1.0).abs() < 1e-6 && sol.x[1].abs() < 1e-6);
    for w in sol.trace.windows(2) {
        assert!(w[1].mu <= w[0].mu);
    }
}

#[test]
fn trace_csv_has_header_and_rows() {
    let p = bound_problem();
    let sol = minimize(&p, &[3.0], &TroptSettings::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    sol.write_trace(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "iter,mu,tr_radius,objective,max_violation,kkt_norm,step_accepted");
    assert_eq!(lines.count(), sol.trace.len());
}

#[test]
fn rejects_bad_settings() {
    let p = bound_problem();
    let bad = TroptSettings { mu_shrink: 1.5, ..Default::default() };
    assert!(matches!(minimize(&p, &[3.0], &bad), Err(Error::Config(_))));
}
