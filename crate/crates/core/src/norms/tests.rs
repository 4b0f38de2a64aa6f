use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::*;
use crate::fem::{self, BoundaryCondition};
use crate::forms::{check_piecewise_lipschitz, estimate_bounds};
use crate::stepper::{self, ShiftPolicy, StepOptions};

fn spd(n: usize, seed: &[f64]) -> DMatrix<f64> {
    let r = DMatrix::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()] + 0.1 * (i as f64 - j as f64));
    &r * r.transpose() + DMatrix::identity(n, n) * 0.5
}

fn robin_setup(n: usize) -> (fem::FemSpace1D, GramPair) {
    let s = fem::build_space(n, BoundaryCondition::Robin).unwrap();
    let g = s.grams().unwrap();
    (s, g)
}

/// Families quadratic in `t`: `K(1 + 0.3t) + (1 + t²)·boundary + c·M`.
fn quadratic_family(s: &fem::FemSpace1D, horizon: f64, c: f64) -> DiscreteFormFamily {
    let (k, bg, m) = (s.stiffness.clone(), s.boundary_gram.clone(), s.mass_h.clone());
    DiscreteFormFamily::from_fn(s.dim(), horizon, move |t| &k * (1.0 + 0.3 * t) + &bg * (1.0 + t * t) + &m * c)
        .with_symmetric(true)
}

#[test]
fn dual_norm_examples() {
    let g = GramPair::identity(2);
    assert!((dual_norm(&DVector::from_column_slice(&[3.0, 4.0]), &g).unwrap() - 5.0).abs() < 1e-14);
    let g = GramPair::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 4.0)).unwrap();
    assert!((dual_norm(&DVector::from_element(1, 2.0), &g).unwrap() - 1.0).abs() < 1e-14);
    assert!(dual_norm(&DVector::zeros(3), &g).is_err());
}

proptest! {
    #[test]
    fn dual_norm_matches_explicit_inverse(seed in prop::collection::vec(-1.0f64..1.0, 16), f in prop::collection::vec(-5.0f64..5.0, 4)) {
        let gv = spd(4, &seed);
        let grams = GramPair::new(DMatrix::identity(4, 4), gv.clone()).unwrap();
        let f = DVector::from_vec(f);
        let oracle = f.dot(&(gv.clone().try_inverse().unwrap() * &f)).sqrt();
        let got = dual_norm(&f, &grams).unwrap();
        prop_assert!((got - oracle).abs() <= 1e-10 * oracle.max(1.0));
        // Duality: |fᵀx| ≤ ‖f‖_{V′}‖x‖_V with equality at x = G⁻¹f.
        let x = gv.clone().try_inverse().unwrap() * &f;
        prop_assert!((f.dot(&x).abs() - got * grams.norm_v(&x)).abs() <= 1e-10 * got.powi(2).max(1.0));
        let y = DVector::from_fn(4, |i, _| seed[i] - 0.3);
        prop_assert!(f.dot(&y).abs() <= got * grams.norm_v(&y) * (1.0 + 1e-12) + 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn poincare_in_time_holds(coeffs in prop::collection::vec(-3.0f64..3.0, 12), horizon in 0.05f64..3.0) {
        let (_, grams) = robin_setup(2);
        let c: Vec<DVector<f64>> = coeffs.chunks(3).map(DVector::from_column_slice).collect();
        let p = PolyPath::new(c).unwrap();
        let slack = identities::poincare_in_time(&p, &grams, Window::new(0.0, horizon).unwrap()).unwrap();
        prop_assert!(slack >= -1e-10);
    }
}

fn trajectory_from(times: Vec<f64>, u: impl Fn(f64) -> f64, ud: impl Fn(f64) -> f64, udd: impl Fn(f64) -> f64) -> Trajectory {
    let one = |x: f64| DVector::from_element(1, x);
    Trajectory {
        u: times.iter().map(|&t| one(u(t))).collect(),
        udot: times.iter().map(|&t| one(ud(t))).collect(),
        uddot: times.iter().map(|&t| one(udd(t))).collect(),
        meta: stepper::TrajectoryMeta { scenario_hash: 0, solver: "synthetic", dt: 0.0, shift: 0.0, splits: vec![] },
        times,
    }
}

#[test]
fn mr_norms_of_simple_trajectories() {
    let g = GramPair::identity(1);
    let times: Vec<f64> = (0..=100).map(|k| 2.0 * k as f64 / 100.0).collect();
    let c = trajectory_from(times.clone(), |_| 3.0, |_| 0.0, |_| 0.0);
    let r = mr_norms(&c, &g, MrSpace::VVDual).unwrap();
    assert!((r.l2v_u - 2f64.sqrt() * 3.0).abs() < 1e-12);
    assert_eq!((r.l2v_udot.unwrap(), r.l2vp_uddot), (0.0, 0.0));
    let z = trajectory_from(times, |_| 0.0, |_| 0.0, |_| 0.0);
    let r = mr_norms(&z, &g, MrSpace::VHDual).unwrap();
    assert_eq!(r.mr_norm, 0.0);
    assert!(matches!(r.component("l2H_uddot"), Err(Error::SpaceMismatch(_))));
    assert!(matches!(r.component("l2V_udot"), Err(Error::SpaceMismatch(_))));

    let times: Vec<f64> = (0..=1000).map(|k| k as f64 / 1000.0).collect();
    let tr = trajectory_from(times, f64::cos, |t| -t.sin(), |t| -t.cos());
    let r = mr_norms(&tr, &g, MrSpace::VVDual).unwrap();
    let cos2 = 0.5 + 2f64.sin() / 4.0;
    let sin2 = 0.5 - 2f64.sin() / 4.0;
    assert!((r.l2v_u.powi(2) - cos2).abs() < 1e-6);
    assert!((r.l2v_udot.unwrap().powi(2) - sin2).abs() < 1e-6);
    assert!((r.l2vp_uddot.powi(2) - cos2).abs() < 1e-6);
    assert!((r.mr_norm.powi(2) - (2.0 * cos2 + sin2)).abs() < 1e-6);
}

#[test]
fn identity_examples_with_symbolic_oracles() {
    let horizon = 1.5;
    let w = Window::new(0.0, horizon).unwrap();
    let mass = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let grams = GramPair::new(mass.clone(), &mass * 3.0).unwrap();
    let dir = DVector::from_column_slice(&[1.0, -2.0]);

    // v = (T − t)² w: both sides −2T²‖w‖²_H.
    let v = PolyPath::scalar_times(&[horizon * horizon, -2.0 * horizon, 1.0], &dir);
    assert!(identities::velocity_energy_weighted(&v, &grams, 0.0, w).unwrap().abs() < 1e-13);

    // u = v = t in one dimension.
    let t = PolyPath::scalar_times(&[0.0, 1.0], &DVector::from_element(1, 1.0));
    assert!(identities::pairing_product_rule(&t, &t, w).unwrap().abs() < 1e-14);

    // Constant b, λ = 0, v = t²w: ∫ b(v̇, v̈) = 2T² b(w, w).
    let b = DiscreteFormFamily::constant(mass.clone(), horizon);
    let v = PolyPath::scalar_times(&[0.0, 0.0, 1.0], &dir);
    assert!(identities::damping_energy(&b, &v, 0.0, w).unwrap().abs() < 1e-13);

    let bad = PolyPath::scalar_times(&[0.0, 1.0], &dir);
    assert!(matches!(
        identities::velocity_energy_weighted(&bad, &grams, 0.0, w),
        Err(Error::ConstraintViolated(_))
    ));
    let ns = DiscreteFormFamily::constant(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), horizon);
    assert!(matches!(identities::stiffness_energy(&ns, &v, 1.0, w), Err(Error::NotSymmetric)));
}

#[test]
fn equalities_hold_on_quadratic_families() {
    let (s, grams) = robin_setup(4);
    let horizon = 0.8;
    let a = quadratic_family(&s, horizon, 0.0);
    let b = quadratic_family(&s, horizon, 1.0);
    for lambda in [0.0, 0.7, 5.0] {
        for w in [Window::new(0.0, horizon).unwrap(), Window::new(0.2, 0.6).unwrap()] {
            let checks = path_suite(&a, Some(&b), &grams, lambda, None, w).unwrap();
            assert_eq!(checks.len(), 8);
            for c in &checks {
                assert!(c.passes(1e-8), "{} = {} at lambda {lambda}", c.name, c.value);
            }
        }
    }
}

#[test]
fn damped_lower_bound_with_sufficient_lambda() {
    // Families linear in t so that the sampled Lipschitz modulus is exact.
    let (s, grams) = robin_setup(3);
    let horizon = 0.5;
    let (k, bg, m) = (s.stiffness.clone(), s.boundary_gram.clone(), s.mass_h.clone());
    let a = DiscreteFormFamily::from_fn(s.dim(), horizon, move |t| &k + &bg * (1.0 + 2.0 * t) + &m)
        .with_symmetric(true);
    let b = a.plus_matrix(&s.mass_h, 0.5);
    let samples = a.uniform_samples(8);
    let bounds = estimate_bounds(&a, &grams, &samples).unwrap().combine(&estimate_bounds(&b, &grams, &samples).unwrap());
    assert!(bounds.is_coercive());
    let bp = [0.0, horizon];
    let mdot = check_piecewise_lipschitz(&a, &grams, &bp, 4)
        .unwrap()
        .mdot
        .max(check_piecewise_lipschitz(&b, &grams, &bp, 4).unwrap().mdot);
    let c = LowerBoundConstants { alpha: bounds.alpha, m: bounds.m, mdot };
    let lambda = lower_bound_lambda(c);
    assert!(c.admits(lambda, 0.5 * c.alpha));
    let w = Window::new(0.0, horizon).unwrap();
    for seed in 0..20 {
        let v = probe_path(s.dim(), seed, w);
        for scale in [1.0, 2.0, 8.0] {
            let slack = identities::damped_h_lower_bound(&a, &b, &grams, &v, scale * lambda, c, 0.5 * c.alpha, w).unwrap();
            assert!(slack >= -1e-10, "seed {seed}, scale {scale}: {slack}");
        }
    }
}

fn scalar_damped(horizon: f64, dt: f64, f: stepper::Forcing, u0: f64, u1: f64) -> Scenario {
    let grams = GramPair::identity(1);
    let fam = DiscreteFormFamily::constant(DMatrix::from_element(1, 1, 1.0), horizon);
    let bounds = estimate_bounds(&fam, &grams, &fam.uniform_samples(2)).unwrap();
    let fam = fam.with_bounds(bounds);
    Scenario {
        a: fam.clone(),
        b: Some(fam),
        grams,
        u0: DVector::from_element(1, u0),
        u1: DVector::from_element(1, u1),
        f,
        horizon,
        dt,
        mode: Mode::Damped,
    }
}

#[test]
fn apriori_examples() {
    let sc = scalar_damped(0.2, 0.01, stepper::Scenario::zero_forcing(1), 0.0, 0.0);
    let tr = stepper::solve_damped(&sc, StepOptions::default()).unwrap();
    assert!(matches!(apriori_check(&tr, &sc), Err(Error::RatioUndefined)));

    // α = M = 1: threshold T² < 1/6.
    assert!(explicit_small_time_constant(1.0, 1.0, 0.4).is_some());
    assert!(explicit_small_time_constant(1.0, 1.0, 0.5).is_none());
    for (k, amp) in [0.3, -1.7, 2.2].iter().enumerate() {
        let amp = *amp;
        let f: stepper::Forcing = Arc::new(move |t| DVector::from_element(1, amp * (3.0 * t + k as f64).sin()));
        let sc = scalar_damped(0.3, 0.005, f, 0.5 * k as f64, 1.0 - amp);
        let tr = stepper::solve_damped(&sc, StepOptions::default()).unwrap();
        let check = apriori_check(&tr, &sc).unwrap();
        assert!(check.ratio.is_finite());
        assert_eq!(check.bound_ok, Some(true), "{check:?}");
    }
}

#[test]
fn energy_balance_of_solver_output() {
    let f: stepper::Forcing = Arc::new(|t| DVector::from_element(1, -t.sin()));
    let sc = scalar_damped(1.0, 0.02, f, 1.0, 0.0);
    for shift in [ShiftPolicy::Off, ShiftPolicy::Fixed(0.5)] {
        let tr = stepper::solve_damped(&sc, StepOptions { shift, ..Default::default() }).unwrap();
        assert!(energy_balance(&tr, &sc).unwrap() < 1e-12);
    }
    // Non-symmetric matrices on a Robin space.
    let (s, grams) = robin_setup(5);
    let mut skew = DMatrix::zeros(6, 6);
    skew[(0, 1)] = 0.3;
    skew[(1, 0)] = -0.3;
    let a = DiscreteFormFamily::constant(&s.stiffness + &s.mass_h + skew, 1.0);
    let b = DiscreteFormFamily::constant(s.gram_v.clone(), 1.0);
    let ab = estimate_bounds(&a, &grams, &[0.0]).unwrap();
    let bb = estimate_bounds(&b, &grams, &[0.0]).unwrap();
    let n = s.dim();
    let sc = Scenario {
        a: a.with_bounds(ab),
        b: Some(b.with_bounds(bb)),
        grams: grams.clone(),
        u0: s.interpolate(|x| x * x),
        u1: DVector::zeros(n),
        f: Arc::new(move |t| DVector::from_element(n, t.cos())),
        horizon: 1.0,
        dt: 0.05,
        mode: Mode::Damped,
    };
    let tr = stepper::solve_damped(&sc, StepOptions::default()).unwrap();
    assert!(energy_balance(&tr, &sc).unwrap() < 1e-12);
    let report = mr_norms(&tr, &grams, MrSpace::VVDual).unwrap();
    let data = data_norm(MrSpace::VVDual, &sc, &tr.times).unwrap();
    let report = report.with_data_norm(data);
    assert!(report.ratio.unwrap().is_finite());
    assert_eq!(report.rows().last().unwrap().0, "ratio");
}
