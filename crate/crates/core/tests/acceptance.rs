//! Acceptance criteria, one line per criterion with wall time.
//!
//! Run with `cargo test --test acceptance`; exits non-zero when any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use nonauto_mr::cli::build::{self, Built, BuiltProblem};
use nonauto_mr::cli::config::ScenarioConfig;
use nonauto_mr::cli::pipeline;
use nonauto_mr::fem::{self, BoundaryCondition, PathFn};
use nonauto_mr::forms::{DiscreteFormFamily, GramPair};
use nonauto_mr::lions::{self, LionsMode, LionsParams, SpaceTimeBasis};
use nonauto_mr::norms::{self, identities, LowerBoundConstants, PolyPath, Window};
use nonauto_mr::quasilinear;
use nonauto_mr::stepper::{self, Mode, Scenario, StepOptions, Trajectory};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<(bool, String), String>;

/// Name, runtime limit in seconds, check.
type Criterion = (&'static str, f64, fn() -> Outcome);

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load_cfg(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&fixture(name)).expect("fixture parses")
}

fn build_cfg(cfg: &ScenarioConfig) -> Built {
    build::build(cfg, &fixture("")).expect("fixture builds")
}

fn linear(b: &Built) -> &Scenario {
    match &b.problem {
        BuiltProblem::Linear(sc) => sc,
        BuiltProblem::Quasilinear(_) => panic!("linear fixture expected"),
    }
}

fn solve(sc: &Scenario) -> Trajectory {
    match sc.mode {
        Mode::Damped => stepper::solve_damped(sc, StepOptions::default()),
        Mode::Wave => stepper::solve_wave(sc, StepOptions::default()),
    }
    .expect("solve")
}

fn random_vector(rng: &mut StdRng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_path(rng: &mut StdRng, n: usize) -> PolyPath {
    let degree = rng.gen_range(2..=5);
    PolyPath::new((0..=degree).map(|_| random_vector(rng, n)).collect()).expect("path")
}

/// Stiffness family, damping family and norms of one test setting.
struct Setting {
    name: &'static str,
    a: DiscreteFormFamily,
    b: DiscreteFormFamily,
    grams: GramPair,
}

fn certified(fam: DiscreteFormFamily, grams: &GramPair) -> DiscreteFormFamily {
    build::certify_family(fam, grams).expect("certify")
}

fn settings(horizon: f64) -> Vec<Setting> {
    let robin = fem::build_space(8, BoundaryCondition::Robin).unwrap();
    let rg = robin.grams().unwrap();
    let beta1: fem::BoundaryWeight = Arc::new(|t, x| 1.0 + t + 0.5 * x);
    let beta2: fem::BoundaryWeight = Arc::new(|t, _| 2.0 + t.cos());
    let ra = certified(fem::assemble_robin_family(&robin, beta1, horizon).unwrap(), &rg);
    let rb = certified(fem::assemble_robin_family(&robin, beta2, horizon).unwrap(), &rg);

    let dir = fem::build_space(8, BoundaryCondition::Dirichlet).unwrap();
    let dg = dir.grams().unwrap();
    let g0 = dir.interpolate(|x| (std::f64::consts::PI * x).sin());
    let g1 = g0.clone();
    let path: PathFn = Arc::new(move |t| (g0.clone() * t.sin(), g1.clone() * t.cos()));
    let ca: fem::Coefficient = Arc::new(|t, x, y, z| 1.0 + 0.5 * x * t + 1.0 / (1.0 + y * y + z * z));
    let cb: fem::Coefficient = Arc::new(|t, _, y, _| 2.0 + (t + y).sin());
    let qa = certified(fem::assemble_coefficient_family(&dir, ca, path.clone(), 1.0, horizon).unwrap(), &dg);
    let qb = certified(fem::assemble_coefficient_family(&dir, cb, path, 1.0, horizon).unwrap(), &dg);

    let n = 4;
    let k0 = DMatrix::from_fn(n, n, |i, j| if i == j { 3.0 } else { 0.5 / (1.0 + (i + j) as f64) });
    let k1 = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.2 });
    let (k0b, k1b) = (k0.clone(), k1.clone());
    let mg = GramPair::new(DMatrix::identity(n, n) * 0.5, DMatrix::identity(n, n)).unwrap();
    let ma = DiscreteFormFamily::from_fn(n, horizon, move |t| &k0 + &k1 * (t * t)).with_symmetric(true);
    let mb = DiscreteFormFamily::from_fn(n, horizon, move |t| &k0b * (1.0 + 0.3 * t.sin()) + &k1b).with_symmetric(true);
    let (ma, mb) = (certified(ma, &mg), certified(mb, &mg));

    vec![
        Setting { name: "robin", a: ra, b: rb, grams: rg },
        Setting { name: "coefficient", a: qa, b: qb, grams: dg },
        Setting { name: "matrix", a: ma, b: mb, grams: mg },
    ]
}

fn c1_identities() -> Outcome {
    let w = Window::new(0.0, 1.0).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut count = 0;
    for s in settings(1.0) {
        let n = s.grams.dim();
        for _ in 0..20 {
            let (u, v) = (random_path(&mut rng, n), random_path(&mut rng, n));
            let vz = v.with_zero_final_velocity(w.end);
            let lambda = rng.gen_range(0.0..3.0);
            let r = [
                identities::pairing_product_rule(&v, &u, w),
                identities::h_norm_derivative(&u, &s.grams, w),
                identities::form_product_rule(&s.a, &u, &v, w),
                identities::damping_energy(&s.b, &v, lambda, w),
                identities::stiffness_energy(&s.a, &v, lambda, w),
                identities::wave_stiffness_energy(&s.a, &vz, lambda, w),
                identities::velocity_energy_weighted(&vz, &s.grams, lambda, w),
            ];
            for x in r {
                worst = worst.max(x.map_err(|e| format!("{}: {e}", s.name))?.abs());
                count += 1;
            }
        }
    }
    Ok((worst <= 1e-8, format!("{count} residuals, max {worst:.2e}")))
}

fn c2_inequalities() -> Outcome {
    let w = Window::new(0.0, 1.0).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(22);
    let mut worst = f64::INFINITY;
    let mut count = 0;
    let all = settings(1.0);
    for k in 0..1000 {
        let s = &all[k % all.len()];
        let bounds = s.a.bounds.clone().unwrap().combine(s.b.bounds.as_ref().unwrap());
        let consts = LowerBoundConstants { alpha: bounds.alpha, m: bounds.m, mdot: bounds.mdot.unwrap() };
        let lambda = norms::lower_bound_lambda(consts);
        if !consts.admits(lambda, 0.5 * consts.alpha) {
            return Ok((false, format!("{}: lambda {lambda} not admissible", s.name)));
        }
        let v = random_path(&mut rng, s.grams.dim());
        let p = identities::poincare_in_time(&v, &s.grams, w).map_err(|e| e.to_string())?;
        let l = identities::damped_h_lower_bound(&s.a, &s.b, &s.grams, &v, lambda, consts, 0.5 * consts.alpha, w)
            .map_err(|e| e.to_string())?;
        worst = worst.min(p).min(l);
        count += 2;
    }
    Ok((worst >= -1e-10, format!("{count} slacks, min {worst:.3e}")))
}

fn c3_lions() -> Outcome {
    let t = 0.2;
    let one = DiscreteFormFamily::constant(DMatrix::identity(1, 1), t);
    let g = GramPair::identity(1);
    let mut min_c = f64::INFINITY;
    let mut max_doublings = 0;
    for degree in [2, 3] {
        for m in [1, 2, 4] {
            let grid = lions::uniform_grid(t, m);
            let basis = SpaceTimeBasis::new(LionsMode::DampedVprime, grid.clone(), degree, 1).map_err(|e| e.to_string())?;
            let c = lions::certify(&basis, &one, Some(&one), &g, LionsParams::default()).map_err(|e| e.to_string())?;
            min_c = min_c.min(c);
            for (mode, b) in [(LionsMode::DampedH, Some(&one)), (LionsMode::Wave, None)] {
                let basis = SpaceTimeBasis::new(mode, grid.clone(), degree, 1).map_err(|e| e.to_string())?;
                let cert = lions::select_parameters(&basis, &one, b, &g, 0.0).map_err(|e| e.to_string())?;
                if !cert.is_certified() {
                    return Ok((false, format!("{} degree {degree} elements {m} not certified", mode.name())));
                }
                max_doublings = max_doublings.max(cert.doublings);
            }
        }
    }
    Ok((min_c > 0.0 && max_doublings <= lions::MAX_DOUBLINGS, format!("min dampedVprime C {min_c:.3e}, max doublings {max_doublings}")))
}

fn scalar_cfg(dt: f64) -> ScenarioConfig {
    let mut cfg = load_cfg("scalar_cos.json");
    cfg.problem.dt = dt;
    cfg
}

fn c4_convergence() -> Outcome {
    let dts = [1.0 / 40.0, 1.0 / 80.0, 1.0 / 160.0, 1.0 / 320.0];
    let mut errs = Vec::new();
    for dt in dts {
        let b = build_cfg(&scalar_cfg(dt));
        let traj = solve(linear(&b));
        let e = traj.times.iter().zip(&traj.u).map(|(t, u)| (u[0] - t.cos()).abs()).fold(0.0, f64::max);
        errs.push(e);
    }
    let orders: Vec<f64> = errs.windows(2).map(|p| (p[0] / p[1]).log2()).collect();
    let ok = orders.iter().all(|o| (1.8..=2.2).contains(o)) && errs[3] < 1e-4;
    Ok((ok, format!("orders {orders:.3?}, error at 1/320 {:.2e}", errs[3])))
}

fn c5_cross() -> Outcome {
    let b = build_cfg(&scalar_cfg(1.0 / 320.0));
    let sc = linear(&b);
    let traj = solve(sc);
    let basis = SpaceTimeBasis::new(LionsMode::DampedVprime, lions::uniform_grid(sc.horizon, 16), 3, 1).map_err(|e| e.to_string())?;
    let data = lions::LionsData { u0: sc.u0.clone(), u1: sc.u1.clone(), f: sc.f.clone() };
    let system = lions::assemble(&basis, &sc.a, sc.b.as_ref(), &sc.grams, &data, LionsParams::default()).map_err(|e| e.to_string())?;
    let sol = lions::solve(&system).map_err(|e| e.to_string())?;
    let d = traj.times.iter().zip(&traj.u).map(|(&t, u)| (sol.eval(t).0 - u).amax()).fold(0.0, f64::max);
    Ok((d <= 1e-3, format!("max node distance {d:.2e}")))
}

fn c6_zero() -> Outcome {
    let mut worst = 0.0f64;
    let mut breaks = 0;
    for name in ["zero_damped.json", "zero_wave.json"] {
        let b = build_cfg(&load_cfg(name));
        let sc = linear(&b);
        breaks += sc.a.interior_breakpoints().len();
        let traj = solve(sc);
        for (u, v) in traj.u.iter().zip(&traj.udot) {
            worst = worst.max(u.amax()).max(v.amax());
        }
    }
    Ok((worst <= 1e-12 && breaks > 0, format!("sup norm {worst:.1e}, {breaks} breakpoints")))
}

fn c7_robin() -> Outcome {
    let base = load_cfg("robin_mms.json");
    let built = build_cfg(&base);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rows = pipeline::study(&built, 4, |c| build::build(c, &fixture("")), dir.path()).map_err(|e| e.to_string())?;
    let order = |o: Option<pipeline::Order>| match o {
        Some(pipeline::Order::Observed(v)) => v,
        _ => f64::NAN,
    };
    let last = rows.last().unwrap();
    let (oh, ov) = (order(last.order_h), order(last.order_v));
    let mut flux = Vec::new();
    for level in 0..4 {
        let mut cfg = base.clone();
        cfg.problem.dt /= 2f64.powi(level);
        cfg.space.as_mut().unwrap().elements <<= level;
        let b = build_cfg(&cfg);
        let traj = solve(linear(&b));
        flux.push(pipeline::robin_flux_max(&b, &traj).ok_or("no flux residual")?);
    }
    let decreasing = flux.windows(2).all(|p| p[1] < p[0]);
    let ok = (0.9..=1.1).contains(&ov) && (1.8..=2.2).contains(&oh) && decreasing;
    Ok((ok, format!("V order {ov:.3}, H order {oh:.3}, flux {flux:.3?}")))
}

fn c8_apriori() -> Outcome {
    let base = load_cfg("apriori.json");
    let built = build_cfg(&base);
    let sc = linear(&built);
    let n = sc.dim();
    let mut rng = StdRng::seed_from_u64(88);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let mut s = sc.clone();
        s.u0 = random_vector(&mut rng, n);
        s.u1 = random_vector(&mut rng, n);
        let (r0, r1, r2) = (random_vector(&mut rng, n), random_vector(&mut rng, n), random_vector(&mut rng, n));
        s.f = Arc::new(move |t| &r0 + &r1 * t + &r2 * (3.0 * t).sin());
        let check = norms::apriori_check(&solve(&s), &s).map_err(|e| e.to_string())?;
        if check.bound_ok != Some(true) {
            return Ok((false, format!("ratio {} exceeds {:?}", check.ratio, check.explicit_constant)));
        }
        worst = worst.max(check.ratio / check.explicit_constant.unwrap());
    }
    let mut ratios = Vec::new();
    for level in 0..3 {
        let mut cfg = base.clone();
        cfg.space.as_mut().unwrap().elements <<= level;
        let b = build_cfg(&cfg);
        let s = linear(&b);
        ratios.push(norms::apriori_check(&solve(s), s).map_err(|e| e.to_string())?.ratio);
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
    let spread = (hi - lo) / lo;
    Ok((spread < 0.2, format!("max ratio/C {worst:.3}, refinement spread {:.1}%", 100.0 * spread)))
}

fn c9_quasilinear() -> Outcome {
    let built = build_cfg(&load_cfg("quasilinear.json"));
    let BuiltProblem::Quasilinear(q) = &built.problem else {
        return Err("quasilinear fixture expected".into());
    };
    let out = quasilinear::picard_solve(q).map_err(|e| e.to_string())?;
    let last = *out.history.last().unwrap_or(&0.0);
    let residual = quasilinear::nonlinear_residual(&out.trajectory, q).map_err(|e| e.to_string())?;
    let (lo, hi) = out.iterate_mr_norms.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
    let ok = out.iterations <= 50 && last <= 1e-8 && residual <= 10.0 * (q.dt * q.dt + q.tol) && hi / lo < 3.0;
    Ok((ok, format!("{} iterations, distance {last:.1e}, residual {residual:.1e}, MR spread {:.3}", out.iterations, hi / lo)))
}

const FIXTURES: [&str; 7] =
    ["scalar_cos.json", "constant_exact.json", "zero_damped.json", "zero_wave.json", "robin_mms.json", "apriori.json", "quasilinear.json"];

fn c10_determinism() -> Outcome {
    let mut files = 0;
    for name in FIXTURES {
        let built = build_cfg(&load_cfg(name));
        let (d1, d2) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
        let r1 = pipeline::run(&built, d1.path()).map_err(|e| format!("{name}: {e}"))?;
        pipeline::run(&built, d2.path()).map_err(|e| format!("{name}: {e}"))?;
        for f in &r1.files {
            let other = d2.path().join(f.file_name().unwrap());
            if std::fs::read(f).map_err(|e| e.to_string())? != std::fs::read(&other).map_err(|e| e.to_string())? {
                return Ok((false, format!("{name}: {} differs", f.display())));
            }
            files += 1;
        }
    }
    Ok((true, format!("{files} CSVs identical across {} fixtures", FIXTURES.len())))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("energy identities", 10.0, c1_identities),
        ("inequalities", 30.0, c2_inequalities),
        ("space-time coercivity", 60.0, c3_lions),
        ("solver convergence", 10.0, c4_convergence),
        ("space-time cross-validation", 60.0, c5_cross),
        ("zero data", 10.0, c6_zero),
        ("robin manufactured solution", 120.0, c7_robin),
        ("a priori estimate", 120.0, c8_apriori),
        ("quasilinear picard", 300.0, c9_quasilinear),
        ("determinism", f64::INFINITY, c10_determinism),
    ];
    let mut failed = 0;
    for (k, (name, limit, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok && secs < limit, d),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        let limit = if limit.is_finite() { format!("{limit:.0}s") } else { "none".into() };
        println!("criterion {:>2} {} {name} [{secs:.2}s, limit {limit}] {detail}", k + 1, if ok { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
