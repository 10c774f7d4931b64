//! Built-in check problems with known solutions, run by `sfbf --check`.
//!
//! Each check exercises one convergence property end to end and reports a
//! single pass/fail line.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::composite::{
    solve_convex, solve_lifted, solve_primal_dual, solve_variational_inequality, vi_gap, CompositeProblem, ConvexBlock,
    ConvexProblem, DualBlock,
};
use crate::diagnostics::{
    fbf_supermartingale, quasi_fejer_check, robbins_siegmund_check, summability_report, ErrorBound,
};
use crate::error::Result;
use crate::fbf::{fbf_step, fbf_step_metric, run, FbfConfig, IterateTrace, StepRule};
use crate::operators::{
    Affine, BoxIndicator, ConvexFn, L1Norm, MonotoneOperator, Quadratic, ScaledIdentityMap, Subdifferential, UniformL1,
    ZeroFn,
};
use crate::runner::{parse_config, run_batch, BatchOptions};
use crate::space::{LinearMap, Metric, ProductPoint, Vector};
use crate::stochastic::{ErrorDraw, NoiseKind, NoiseTriple};

/// `B = [[0, 1], [-1, 0]]`, `||B|| = 1`.
pub fn rotation() -> Affine {
    Affine::skew_rotation(2, 1.0).expect("even dimension")
}

/// `A = d||.||_1`; with the rotation its only zero is the origin.
pub fn l1_operator() -> Arc<dyn MonotoneOperator> {
    Subdifferential::of(Arc::new(L1Norm::new(1.0)))
}

/// `A = d(||.||_1 + 1/2 ||.||^2)`, uniformly monotone.
pub fn uniform_operator() -> Arc<dyn MonotoneOperator> {
    Subdifferential::of(Arc::new(UniformL1))
}

/// Indicator of `[-1, 1]^2`.
pub fn unit_box() -> Arc<dyn ConvexFn> {
    Arc::new(BoxIndicator::new(-1.0, 1.0).expect("valid box"))
}

/// `minimize |x| + |x| + 1/2 (x - 1)^2`, minimized at 0.
pub fn toy_convex() -> ConvexProblem {
    let one = Vector::from_raw(vec![1.0]);
    ConvexProblem::new(
        Vector::zeros(1),
        Arc::new(L1Norm::new(1.0)),
        Arc::new(Affine::quadratic_gradient(&one)),
        vec![ConvexBlock::new(
            Vector::zeros(1),
            Arc::new(L1Norm::new(1.0)),
            LinearMap::identity(1),
        )],
    )
    .with_h_value(Arc::new(Quadratic::new(one)))
}

/// A primal-dual zero of [`toy_convex`]: the duals solving it form `[0, 1]`.
pub fn toy_convex_solution() -> ProductPoint {
    ProductPoint {
        primal: Vector::zeros(1),
        duals: vec![Vector::from_raw(vec![0.5])],
    }
}

/// Random composite problem drawn from the library, with dimension 1-3 and
/// one or two blocks.
pub fn random_composite(rng: &mut ChaCha20Rng) -> CompositeProblem {
    let n = rng.random_range(1..=3usize);
    let vec_of =
        |rng: &mut ChaCha20Rng, d: usize, s: f64| Vector::from_raw((0..d).map(|_| rng.random_range(-s..s)).collect());
    let convex = |rng: &mut ChaCha20Rng| -> Arc<dyn ConvexFn> {
        match rng.random_range(0..4) {
            0 => Arc::new(L1Norm::new(rng.random_range(0.1..2.0))),
            1 => Arc::new(BoxIndicator::new(-rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)).unwrap()),
            2 => Arc::new(UniformL1),
            _ => Arc::new(ZeroFn),
        }
    };
    let blocks = (0..rng.random_range(1..=2))
        .map(|_| {
            let g = rng.random_range(1..=3usize);
            let l = LinearMap::new(nalgebra::DMatrix::from_fn(g, n, |_, _| rng.random_range(-2.0..2.0))).unwrap();
            DualBlock::new(
                vec_of(rng, g, 0.5),
                Subdifferential::of(convex(rng)),
                Arc::new(ScaledIdentityMap::new(rng.random_range(0.0..1.0)).unwrap()),
                l,
            )
        })
        .collect();
    let c: Arc<dyn crate::operators::ForwardOp> = if n % 2 == 0 && rng.random_bool(0.5) {
        Arc::new(Affine::skew_rotation(n, rng.random_range(0.1..2.0)).unwrap())
    } else {
        Arc::new(ScaledIdentityMap::new(rng.random_range(0.0..1.0)).unwrap())
    };
    CompositeProblem::new(vec_of(rng, n, 0.5), Subdifferential::of(convex(rng)), c, blocks).unwrap()
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct CheckOutcome {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mark = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "[{mark}] {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

fn outcome(id: usize, name: &'static str, r: Result<(bool, String)>) -> CheckOutcome {
    match r {
        Ok((pass, detail)) => CheckOutcome { id, name, pass, detail },
        Err(e) => CheckOutcome {
            id,
            name,
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

fn gaussian(sigma: f64, rho: f64) -> NoiseTriple {
    NoiseTriple::uniform(NoiseKind::GaussianGeometric { sigma, rho })
}

/// First `n` with `||x_n - 0|| <= tol`.
fn hitting_time(trace: &IterateTrace, tol: f64) -> Option<usize> {
    trace.distances()?.iter().position(|&d| d <= tol)
}

fn deterministic_convergence() -> Result<(bool, String)> {
    let start = Instant::now();
    let cfg = FbfConfig::new(0.1, 500);
    let zero = Vector::zeros(2);
    let tr = run(
        l1_operator().as_ref(),
        &rotation(),
        1.0,
        &cfg,
        &Vector::from_raw(vec![1.0, 0.0]),
        Some(&zero),
    )?;
    let elapsed = start.elapsed().as_secs_f64();
    let inclusion = l1_operator().graph_distance(&zero, &zero).unwrap_or(f64::INFINITY);
    let hit = hitting_time(&tr, 1e-6);
    Ok((
        hit.is_some() && inclusion == 0.0 && elapsed < 1.0,
        format!("||x_n|| <= 1e-6 at n = {hit:?}, {elapsed:.3}s"),
    ))
}

fn single_step() -> Result<(bool, String)> {
    let zero_a = Subdifferential::of(Arc::new(ZeroFn));
    let out = fbf_step(
        zero_a.as_ref(),
        &rotation(),
        &Vector::from_raw(vec![1.0, 0.0]),
        0.5,
        &ErrorDraw::zeros(2),
    )?;
    let err = (out.x_next[0] - 0.75).abs().max((out.x_next[1] - 0.5).abs());
    Ok((err <= 1e-14, format!("x+ = {}, error {err:e}", out.x_next)))
}

const STOCHASTIC_CONFIG: &str = r#"
seeds = []
reference = [0.0, 0.0]
[problem]
kind = "inclusion"
dim = 2
a = "l1"
b = "skew_rotation"
x0 = [1.0, 0.0]
[solver]
epsilon = 0.1
max_iters = 10000
converge_tol = 1e-3
[noise.a]
kind = "gaussian_geometric"
sigma = 0.1
rho = 0.9
[noise.b]
kind = "gaussian_geometric"
sigma = 0.1
rho = 0.9
[noise.c]
kind = "gaussian_geometric"
sigma = 0.1
rho = 0.9
"#;

fn stochastic_config(seeds: &[u64]) -> Result<crate::runner::RunConfig> {
    let list = seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(", ");
    parse_config(&STOCHASTIC_CONFIG.replace("seeds = []", &format!("seeds = [{list}]")))
}

fn stochastic_convergence(jobs: Option<usize>) -> Result<(bool, String)> {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..200).collect();
    let res = crate::runner::execute(
        &stochastic_config(&seeds)?,
        &BatchOptions {
            jobs,
            dump_iterates: false,
        },
    )?;
    let elapsed = start.elapsed().as_secs_f64();
    let frac = res.summary.convergence_fraction;
    let summable = res
        .runs
        .iter()
        .all(|(_, r)| r.as_ref().is_ok_and(|r| summability_report(&r.trace).pass));
    Ok((
        frac >= 0.95 && elapsed < 60.0 && summable,
        format!("converged fraction {frac} over 200 seeds, residuals summable: {summable}, {elapsed:.2}s"),
    ))
}

/// Noise-free runs of every built-in problem.
fn zero_noise_traces() -> Result<Vec<(&'static str, IterateTrace)>> {
    let zero = Vector::zeros(2);
    let cfg = FbfConfig::new(0.1, 1000);
    let x0 = Vector::from_raw(vec![5.0, 3.0]);
    let mut out = vec![
        (
            "l1+rotation",
            run(l1_operator().as_ref(), &rotation(), 1.0, &cfg, &x0, Some(&zero))?,
        ),
        (
            "uniform+rotation",
            run(uniform_operator().as_ref(), &rotation(), 1.0, &cfg, &x0, Some(&zero))?,
        ),
        (
            "box vi",
            solve_variational_inequality(
                unit_box(),
                &rotation(),
                1.0,
                &cfg,
                &Vector::from_raw(vec![1.0, 0.0]),
                Some(&zero),
            )?,
        ),
    ];
    let sol = solve_convex(
        &toy_convex(),
        &FbfConfig::new(0.05, 2000),
        &Vector::from_raw(vec![3.0]),
        &[Vector::zeros(1)],
        Some(&toy_convex_solution()),
    )?;
    out.push(("toy convex", sol.trace));
    Ok(out)
}

fn summability_everywhere() -> Result<(bool, String)> {
    let noise = gaussian(0.1, 0.9);
    let zero = Vector::zeros(2);
    let cfg = FbfConfig::new(0.1, 10_000).with_noise(noise, 11);
    let x0 = Vector::from_raw(vec![1.0, 0.0]);
    let traces = [
        run(l1_operator().as_ref(), &rotation(), 1.0, &cfg, &x0, Some(&zero))?,
        run(uniform_operator().as_ref(), &rotation(), 1.0, &cfg, &x0, Some(&zero))?,
        solve_variational_inequality(unit_box(), &rotation(), 1.0, &cfg, &x0, Some(&zero))?,
        solve_convex(
            &toy_convex(),
            &cfg.clone().with_step(StepRule::Constant(0.3)),
            &Vector::from_raw(vec![3.0]),
            &[Vector::zeros(1)],
            None,
        )?
        .trace,
    ];
    let failing: Vec<usize> = traces
        .iter()
        .enumerate()
        .filter(|(_, t)| !summability_report(t).pass)
        .map(|(k, _)| k)
        .collect();
    Ok((
        failing.is_empty(),
        format!("{} noisy problems, failing: {failing:?}", traces.len()),
    ))
}

fn quasi_fejer_everywhere() -> Result<(bool, String)> {
    let mut worst = f64::INFINITY;
    let mut failing = Vec::new();
    for (name, tr) in zero_noise_traces()? {
        let r = quasi_fejer_check(&tr, None, None, &ErrorBound::Zero)?;
        worst = worst.min(r.worst_margin);
        if !r.pass {
            failing.push(name);
        }
    }
    Ok((
        failing.is_empty(),
        format!("worst margin {worst:e}, failing: {failing:?}"),
    ))
}

fn robbins_siegmund_everywhere() -> Result<(bool, String)> {
    let mut worst = f64::INFINITY;
    let mut failing = Vec::new();
    for (name, tr) in zero_noise_traces()? {
        let r = robbins_siegmund_check(&fbf_supermartingale(&tr)?);
        worst = worst.min(r.worst_margin);
        if !r.pass {
            failing.push(name);
        }
    }
    Ok((
        failing.is_empty(),
        format!("worst margin {worst:e}, failing: {failing:?}"),
    ))
}

fn lift_equivalence() -> Result<(bool, String)> {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..20 {
        let p = random_composite(&mut rng);
        let x0 = Vector::from_raw((0..p.primal_dim()).map(|_| rng.random_range(-2.0..2.0)).collect());
        let v0: Vec<Vector> = p
            .dual_dims()
            .into_iter()
            .map(|g| Vector::from_raw((0..g).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        for seed in 0..5 {
            let cfg = FbfConfig::new(0.05, 200).with_noise(gaussian(0.2, 0.9), seed);
            let a = solve_primal_dual(&p, &cfg, &x0, &v0, None)?.trace;
            let b = solve_lifted(&p, &cfg, &x0, &v0, None)?;
            let same = a.to_csv_string() == b.to_csv_string()
                && a.final_x
                    .iter()
                    .zip(b.final_x.iter())
                    .all(|(u, w)| u.to_bits() == w.to_bits());
            mismatches += usize::from(!same);
        }
    }
    Ok((mismatches == 0, format!("100 trajectories, {mismatches} mismatches")))
}

fn convex_specialization() -> Result<(bool, String)> {
    let cfg = FbfConfig::new(0.05, 20_000).with_stop_tol(1e-12);
    let sol = solve_convex(
        &toy_convex(),
        &cfg,
        &Vector::from_raw(vec![3.0]),
        &[Vector::zeros(1)],
        None,
    )?;
    let x = sol.x[0];
    Ok((x.abs() <= 1e-5, format!("x = {x:e}")))
}

fn metric_reduction() -> Result<(bool, String)> {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let id = Metric::identity(2);
    let l1 = l1_operator();
    let zero_a = Subdifferential::of(Arc::new(ZeroFn));
    let rot = rotation();
    let mut worst: f64 = 0.0;
    let mut identical = true;
    for _ in 0..1000 {
        let x = Vector::from_raw(vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]);
        let e = || Vector::from_raw(vec![0.0, 0.0]);
        let errs = ErrorDraw { a: e(), b: e(), c: e() };
        let gamma = rng.random_range(0.01..0.99);
        identical &= fbf_step(l1.as_ref(), &rot, &x, gamma, &errs)?
            == fbf_step_metric(l1.as_ref(), &rot, &id, &x, gamma, &errs)?;
        let lambda = rng.random_range(0.1..2.0);
        let u = Metric::scaled_identity(2, lambda)?;
        let m = fbf_step_metric(zero_a.as_ref(), &rot, &u, &x, gamma, &errs)?;
        let p = fbf_step(zero_a.as_ref(), &rot, &x, gamma * lambda, &errs)?;
        worst = worst.max(m.x_next.dist(&p.x_next));
    }
    Ok((
        identical && worst <= 1e-12,
        format!("identity bit-exact: {identical}, scalar max error {worst:e}"),
    ))
}

fn strong_convergence() -> Result<(bool, String)> {
    let zero = Vector::zeros(2);
    let cfg = FbfConfig::new(0.1, 1000);
    let x0 = Vector::from_raw(vec![5.0, 3.0]);
    let uni = run(uniform_operator().as_ref(), &rotation(), 1.0, &cfg, &x0, Some(&zero))?;
    let l1 = run(l1_operator().as_ref(), &rotation(), 1.0, &cfg, &x0, Some(&zero))?;
    let (hu, hl) = (hitting_time(&uni, 1e-6), hitting_time(&l1, 1e-6));
    let reached = hitting_time(&uni, 1e-8).is_some();
    let faster = matches!((hu, hl), (Some(u), Some(l)) if u < l) || (hu.is_some() && hl.is_none());
    Ok((
        reached && faster,
        format!("iterations to 1e-6: uniform {hu:?}, l1 {hl:?}; 1e-8 reached: {reached}"),
    ))
}

fn variational_inequality() -> Result<(bool, String)> {
    let zero = Vector::zeros(2);
    let cfg = FbfConfig::new(0.1, 1000).with_stop_tol(1e-12);
    let f = unit_box();
    let tr = solve_variational_inequality(
        f.clone(),
        &rotation(),
        1.0,
        &cfg,
        &Vector::from_raw(vec![1.0, 0.0]),
        Some(&zero),
    )?;
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let ys: Vec<Vector> = (0..1000)
        .map(|_| Vector::from_raw(vec![rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]))
        .collect();
    let gap = vi_gap(f.as_ref(), &rotation(), &tr.final_x, &ys).unwrap_or(f64::INFINITY);
    let norm = tr.final_x.norm();
    Ok((
        norm <= 1e-6 && gap <= 1e-8,
        format!("||x|| = {norm:e}, worst gap {gap:e}"),
    ))
}

fn scratch_dir(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("sfbf-check-{}-{tag}", std::process::id()))
}

fn read_dir_sorted(dir: &std::path::Path) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        files.push((
            entry.file_name().to_string_lossy().into_owned(),
            fs::read(entry.path())?,
        ));
    }
    files.sort();
    Ok(files)
}

fn reproducibility(jobs: Option<usize>) -> Result<(bool, String)> {
    let cfg = stochastic_config(&[1, 2, 3, 4, 5, 6, 7, 8])?;
    let (a, b) = (scratch_dir("a"), scratch_dir("b"));
    let opts = BatchOptions {
        jobs,
        dump_iterates: true,
    };
    run_batch(&cfg, &a, &opts)?;
    run_batch(&cfg, &b, &BatchOptions { jobs: Some(1), ..opts })?;
    let fa = read_dir_sorted(&a).map_err(|source| crate::Error::Io {
        path: a.clone(),
        source,
    })?;
    let fb = read_dir_sorted(&b).map_err(|source| crate::Error::Io {
        path: b.clone(),
        source,
    })?;
    let _ = fs::remove_dir_all(&a);
    let _ = fs::remove_dir_all(&b);
    Ok((fa == fb && !fa.is_empty(), format!("{} files compared", fa.len())))
}

/// Runs every built-in check.
pub fn run_checks(jobs: Option<usize>) -> Vec<CheckOutcome> {
    vec![
        outcome(1, "deterministic convergence", deterministic_convergence()),
        outcome(2, "single-step oracle", single_step()),
        outcome(3, "stochastic convergence", stochastic_convergence(jobs)),
        outcome(4, "residual summability", summability_everywhere()),
        outcome(5, "quasi-Fejer monotonicity", quasi_fejer_everywhere()),
        outcome(6, "Robbins-Siegmund inequality", robbins_siegmund_everywhere()),
        outcome(7, "lift equivalence", lift_equivalence()),
        outcome(8, "convex specialization", convex_specialization()),
        outcome(9, "metric reduction", metric_reduction()),
        outcome(10, "strong convergence", strong_convergence()),
        outcome(11, "variational inequality", variational_inequality()),
        outcome(12, "reproducibility", reproducibility(jobs)),
    ]
}
