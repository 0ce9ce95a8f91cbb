//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines print in order; exits non-zero on any FAIL.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use assoc_sign::cli;
use assoc_sign::expfam::{corollary2_bidirectional, realize, sign_equivalence, ExpFamSpec, FamilyKind};
use assoc_sign::fixtures;
use assoc_sign::measures::{correlation, density_assoc, expectation_assoc, property_binary_driver, property_binary_response, property_chain, property_null};
use assoc_sign::oracle::{random_table, search_counterexample, verify, Scenario, Target, TrialConfig};
use assoc_sign::par::ExecMode;
use assoc_sign::regress::{cochran_path, local_poly_deriv, LinearPathModel, SampleFrame};
use assoc_sign::transitivity::{detect_simpson_joint, RuleId};
use assoc_sign::{AssocSign, CondFamily, MeasureKind, ProbTable, Variable};

const TOL: f64 = 1e-9;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(label: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{label}: got {got}, want {want} (tol {tol:e})"))
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

fn mean_shift(p: &ProbTable, response: &str, driver: &str) -> Result<f64, String> {
    expectation_assoc(p, response, driver, None, TOL).map_err(e)?.grid[0].ok_or_else(|| "undefined mean shift".into())
}

fn odds_ratios(p: &ProbTable, given: Option<&str>) -> Result<Vec<f64>, String> {
    let r = density_assoc(p, "X", "Z", given, TOL).map_err(e)?;
    r.grid.iter().map(|v| v.map(f64::exp).ok_or_else(|| "undefined odds ratio".to_string())).collect()
}

fn fixture_exactness() -> Outcome {
    let start = Instant::now();
    let trans = fixtures::trans();
    close("TRANS (Z on Y)", mean_shift(&trans, "Z", "Y")?, 0.08, 1e-12)?;
    close("TRANS (Y on X)", mean_shift(&trans, "Y", "X")?, 0.2, 1e-12)?;
    close("TRANS (Z on X)", mean_shift(&trans, "Z", "X")?, -0.08, 1e-12)?;

    let ex2 = fixtures::ex2().joint_uniform_x().map_err(e)?;
    close("EX2", mean_shift(&ex2, "Z", "X")?, -0.32, 1e-12)?;
    let ex3 = fixtures::ex3().joint_uniform_x().map_err(e)?;
    close("EX3", mean_shift(&ex3, "Z", "X")?, -0.005, 1e-12)?;
    let cov = correlation(&ex3, "Y", "Z", None, TOL).map_err(e)?.grid[0].ok_or("undefined covariance")?;
    close("EX3 cov(Y,Z)", cov, 0.0017, 5e-5)?;
    for p in [0.1, 0.3, 0.49] {
        close(&format!("EX1({p})"), mean_shift(&fixtures::ex1(p).map_err(e)?, "Z", "X")?, -p, 1e-12)?;
    }

    let birch = fixtures::birch();
    for or in odds_ratios(&birch, None)?.into_iter().chain(odds_ratios(&birch, Some("Y"))?) {
        close("BIRCH (X,Z) odds ratio", or, 1.0, 1e-12)?;
    }
    for (a, b, g) in [("X", "Y", "Z"), ("Y", "Z", "X")] {
        let r = density_assoc(&birch, a, b, Some(g), TOL).map_err(e)?;
        let signs = r.slice_signs().map_err(e)?;
        ensure(signs.iter().all(|s| s.sign != AssocSign::Zero), || format!("BIRCH ({a},{b}) has a Zero slice: {signs:?}"))?;
    }

    let printed = fixtures::smoke_printed_margin().normalize().map_err(e)?;
    let margin = density_assoc(&printed, "X", "Z", None, TOL).map_err(e)?.grid[0].ok_or("undefined")?.exp();
    close("SMOKE printed margin OR (4 dp)", (margin * 1e4).round() / 1e4, 0.6848, 0.0)?;
    close("SMOKE margin vs printed 0.68", margin, 0.68, 0.005)?;
    let smoke = fixtures::smoke();
    let collapsed = odds_ratios(&smoke, None)?[0];
    close("SMOKE collapsed OR (documented discrepancy)", collapsed, 139.0 * 502.0 / (170.0 * 443.0), 1e-12)?;
    let slices = odds_ratios(&smoke, Some("Y"))?;
    for (got, printed) in slices.iter().zip([1.02, 1.96, 1.61]) {
        close("SMOKE slice OR", *got, printed, 0.005)?;
    }
    close("SMOKE 65+ slice OR", slices[3], 1.60, 0.005)?;
    ensure((slices[3] - 1.02).abs() > 0.5, || "65+ slice unexpectedly matches the printed 1.02".into())?;
    let rep = detect_simpson_joint(&smoke, MeasureKind::Density, TOL).map_err(e)?;
    ensure(rep.reversal, || "SMOKE reversal flag is false".into())?;

    let took = start.elapsed();
    ensure(took < Duration::from_secs(1), || format!("took {took:?}"))?;
    Ok(format!(
        "TRANS/EX1/EX2/EX3/BIRCH exact; SMOKE margin OR {margin:.4} (collapse {collapsed:.4}), 65+ slice {:.4} vs printed 1.02; {took:.2?}",
        slices[3]
    ))
}

fn soundness_sweeps() -> Outcome {
    let cfg = TrialConfig { seed: 42, trials: 10_000, dims: vec![3, 3, 3], ..Default::default() };
    let mut parts = Vec::new();
    let targets = [RuleId::T1, RuleId::T2, RuleId::T3, RuleId::T5, RuleId::T6, RuleId::T7, RuleId::T8, RuleId::C5].map(Target::Rule);
    for t in targets.into_iter().chain([Target::Lemma1]) {
        let start = Instant::now();
        let r = verify(t, &cfg).map_err(e)?;
        let took = start.elapsed();
        ensure(r.accepted == 10_000, || format!("{t}: only {} accepted", r.accepted))?;
        ensure(r.passed, || format!("{t}: {} counterexample(s), first: {}", r.counterexamples.len(), r.counterexamples[0].detail))?;
        let nc = r.negative_control.as_ref().ok_or("missing negative control")?;
        ensure(nc.failed_as_designed, || format!("{t}: negative control never fired"))?;
        ensure(took < Duration::from_secs(60), || format!("{t}: took {took:?}"))?;
        parts.push(format!("{t} {:.1?}", took));
    }
    Ok(format!("0 counterexamples, controls live: {}", parts.join(", ")))
}

/// Mixture of table shapes so every property has applicable cases: uniform
/// cells, product (null) tables, and totally positive tables.
fn two_way(rng: &mut ChaCha8Rng, t: u64) -> ProbTable {
    let (kx, ky) = (rng.random_range(2..=4), rng.random_range(2..=4));
    let vars = vec![Variable::indexed("X", kx), Variable::indexed("Y", ky)];
    match t % 3 {
        0 => random_table(&TrialConfig { seed: t, dims: vec![kx, ky], ..Default::default() }).expect("table"),
        1 => {
            let a: Vec<f64> = (0..kx).map(|_| rng.random_range(0.05..1.0)).collect();
            let b: Vec<f64> = (0..ky).map(|_| rng.random_range(0.05..1.0)).collect();
            let w = (0..kx * ky).map(|c| a[c / ky] * b[c % ky]).collect();
            ProbTable::from_weights(vars, w).expect("table")
        }
        _ => {
            let mut u: Vec<f64> = (0..kx).map(|_| rng.random::<f64>()).collect();
            let mut v: Vec<f64> = (0..ky).map(|_| rng.random::<f64>()).collect();
            u.sort_by(f64::total_cmp);
            v.sort_by(f64::total_cmp);
            let s = rng.random_range(-3.0..3.0);
            let m: Vec<f64> = (0..kx + ky).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = (0..kx * ky).map(|c| (m[c / ky] + m[kx + c % ky] + s * u[c / ky] * v[c % ky]).exp()).collect();
            ProbTable::from_weights(vars, w).expect("table")
        }
    }
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut applicable = [0usize; 4];
    for t in 0..10_000u64 {
        let p = two_way(&mut rng, t);
        let checks = [
            property_chain(&p, "X", "Y", TOL).map_err(e)?,
            property_null(&p, "X", "Y", TOL).map_err(e)?,
            property_binary_response(&p, "X", "Y", TOL).map_err(e)?,
            property_binary_driver(&p, "X", "Y", TOL).map_err(e)?,
        ];
        for (i, c) in checks.iter().enumerate() {
            ensure(c.holds, || format!("{} violated at table {t}: {:?}", c.name, c.signs))?;
            applicable[i] += usize::from(c.applicable);
        }
    }
    let mut normal = 0;
    for _ in 0..50 {
        let k = rng.random_range(2..=4);
        let mut theta: Vec<f64> = (0..k).map(|_| rng.random_range(-1.5..1.5)).collect();
        if rng.random::<bool>() {
            theta.sort_by(f64::total_cmp);
        }
        let r = sign_equivalence(&ExpFamSpec::normal(1.0, theta), None, TOL).map_err(e)?;
        let monotone = r.labels.iter().find(|l| l.0 == "theta").map(|l| l.1 != AssocSign::Mixed).unwrap_or(false);
        if monotone {
            ensure(r.agree, || format!("discretized Normal labels disagree: {r:?}"))?;
            normal += 1;
        }
    }
    Ok(format!(
        "10000 tables, 0 violations; applicable: chain {}, null {}, binary-Y {}, binary-X {}; Normal member agrees on {normal} monotone maps",
        applicable[0], applicable[1], applicable[2], applicable[3]
    ))
}

fn random_spec(rng: &mut ChaCha8Rng) -> ExpFamSpec {
    let k = rng.random_range(2..=4);
    let mut acc = rng.random_range(-1.0..1.0);
    let mut theta = vec![acc];
    let dir = [1.0, -1.0, 0.0][rng.random_range(0..3)];
    for _ in 1..k {
        if rng.random::<f64>() > 0.2 {
            acc += dir * rng.random_range(0.0..1.0);
        }
        theta.push(acc);
    }
    match rng.random_range(0..3) {
        0 => ExpFamSpec::new(FamilyKind::Bernoulli, theta),
        1 => ExpFamSpec::binomial(rng.random_range(1..=5), theta),
        _ => ExpFamSpec::new(FamilyKind::Poisson, theta),
    }
}

fn expfam_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for i in 0..1000 {
        let spec = random_spec(&mut rng);
        let r = sign_equivalence(&spec, None, TOL).map_err(e)?;
        let three: Vec<AssocSign> = r.labels[..3].iter().map(|l| l.1).collect();
        ensure(three.iter().all(|s| *s == three[0]), || format!("theta map {i} ({spec:?}): labels {:?}", r.labels))?;
    }
    let kinds = [MeasureKind::Density, MeasureKind::Distribution, MeasureKind::Expectation];
    let mut checked = 0;
    for i in 0..1000 {
        let spec = random_spec(&mut rng);
        let fam = realize(&spec, None).map_err(e)?;
        let y = Variable::indexed("Y", fam.support.len()).with_scores(fam.support.clone()).map_err(e)?;
        let kz = rng.random_range(2..=3);
        let span = fam.support.last().unwrap() - fam.support[0];
        let strength = if rng.random::<f64>() < 0.15 { 0.0 } else { rng.random_range(0.2..3.0) };
        let base: Vec<f64> = (0..kz).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rows = fam
            .support
            .iter()
            .map(|s| (0..kz).map(|z| (base[z] + strength * (s - fam.support[0]) / span * z as f64).exp()).collect())
            .collect();
        let pz = CondFamily::from_weight_rows(Variable::indexed("Z", kz), y, rows).map_err(e)?;
        let kind = kinds[i % 3];
        let r = corollary2_bidirectional(&fam, &pz, kind, TOL).map_err(e)?;
        ensure(r.agree, || format!("composed instance {i} ({kind}): {:?}", r.labels))?;
        checked += 1;
    }
    Ok(format!("1000 theta maps with identical labels; {checked} composed instances agree both ways"))
}

fn counterexample_guarantees() -> Outcome {
    let cfg = TrialConfig { seed: 42, trials: 200, ..Default::default() };
    let mut parts = Vec::new();
    for sc in [Scenario::T3ExpectationPremise, Scenario::T3CorrelationPremise, Scenario::DroppedCi] {
        let r = search_counterexample(sc, &cfg).map_err(e)?;
        let first = r.counterexamples.first().ok_or_else(|| format!("{sc}: nothing found"))?;
        ensure(first.fixture.is_some(), || format!("{sc}: first hit is not a seed table"))?;
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = cli::run(["assoc-sign", "verify", "--rule", sc.code(), "--seed", "42", "--trials", "50"], &mut out, &mut err);
        ensure(code == cli::EXIT_COUNTEREXAMPLE, || format!("{sc}: CLI exit {code}"))?;
        let worst = first.conclusion.as_ref().and_then(|c| c.grid.as_ref()).and_then(|g| g[0]).unwrap_or(f64::NAN);
        parts.push(format!("{sc} via {} ({worst:+.3})", first.fixture.as_deref().unwrap_or("?")));
    }
    Ok(format!("{}; CLI exit 4", parts.join(", ")))
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let (u1, u2): (f64, f64) = (rng.random::<f64>().max(1e-300), rng.random());
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn regression_toolkit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let y: Vec<f64> = (0..400).map(|_| rng.random_range(-2.0..2.0)).collect();
    let grid: Vec<f64> = (0..31).map(|i| -1.5 + 0.1 * i as f64).collect();
    let mut worst_poly: f64 = 0.0;
    for bw in [0.15, 0.4, 1.0, 5.0] {
        let c = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let z: Vec<f64> = y.iter().map(|v| c[0] + c[1] * v + c[2] * v * v).collect();
        let curve = local_poly_deriv(&y, &z, &grid, bw, 2, ExecMode::Parallel).map_err(e)?;
        for (g, (val, d)) in grid.iter().zip(curve.value.iter().zip(&curve.derivative)) {
            let (val, d) = (val.ok_or("undefined point")?, d.ok_or("undefined point")?);
            worst_poly = worst_poly.max((val - (c[0] + c[1] * g + c[2] * g * g)).abs()).max((d - (c[1] + 2.0 * c[2] * g)).abs());
        }
    }
    ensure(worst_poly < 1e-6, || format!("polynomial reproduction error {worst_poly:e}"))?;

    let mut worst_gap: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(50..500);
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.random::<bool>())).collect();
        let b = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let yv: Vec<f64> = x.iter().map(|x| b[0] * x + gauss(&mut rng)).collect();
        let z: Vec<f64> = x.iter().zip(&yv).map(|(x, y)| b[1] * x + b[2] * y + gauss(&mut rng)).collect();
        let m = LinearPathModel::fit(&SampleFrame::complete(&x, &yv, &z).map_err(e)?).map_err(e)?;
        let v = cochran_path(&m, None, TOL).map_err(e)?;
        worst_gap = worst_gap.max(v.identity_gap.ok_or("no direct fit")?);
    }
    ensure(worst_gap < 1e-8, || format!("Cochran identity gap {worst_gap:e}"))?;

    let ys: Vec<f64> = (0..5000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let zs: Vec<f64> = ys.iter().map(|v| v * v + 0.1 * gauss(&mut rng)).collect();
    let g: Vec<f64> = (0..33).map(|i| -0.8 + 0.05 * i as f64).collect();
    let curve = local_poly_deriv(&ys, &zs, &g, 0.2, 2, ExecMode::Parallel).map_err(e)?;
    let mut worst_d: f64 = 0.0;
    for (gv, d) in g.iter().zip(&curve.derivative) {
        worst_d = worst_d.max((d.ok_or("undefined point")? - 2.0 * gv).abs());
    }
    ensure(worst_d < 0.1, || format!("derivative error {worst_d}"))?;
    Ok(format!("reproduction {worst_poly:.1e}, Cochran gap {worst_gap:.1e}, z=y^2 derivative error {worst_d:.3}"))
}

fn main() {
    // honor `cargo test -- --list` style probes from tooling
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("1 fixture exactness", fixture_exactness),
        ("2 soundness sweeps", soundness_sweeps),
        ("3 property suites", property_suites),
        ("4 exponential-family equivalence", expfam_equivalence),
        ("5 counterexample guarantees", counterexample_guarantees),
        ("6 regression toolkit", regression_toolkit),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        match res {
            Ok(msg) => println!("criterion {name}: PASS ({msg})"),
            Err(msg) => {
                failed += 1;
                println!("criterion {name}: FAIL ({msg})");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
