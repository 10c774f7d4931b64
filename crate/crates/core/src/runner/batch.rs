//! Seeded replication batches and their on-disk outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{Problem, RunConfig};
use crate::composite::{solve_convex, solve_primal_dual, solve_variational_inequality};
use crate::diagnostics::{
    fbf_supermartingale, quasi_fejer_check, robbins_siegmund_check, summability_report, ErrorBound, Report,
};
use crate::error::{Error, Result};
use crate::fbf::{run, IterateTrace};
use crate::space::Vector;

#[derive(Clone, Debug, Default)]
pub struct BatchOptions {
    /// Worker threads; `None` uses all available cores.
    pub jobs: Option<usize>,
    pub dump_iterates: bool,
}

/// One finished trajectory.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub trace: IterateTrace,
    pub x: Vector,
    pub duals: Option<Vec<Vector>>,
    pub reports: Vec<Report>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub iterations: usize,
    pub final_residual: Option<f64>,
    /// Distance of the final primal iterate to the reference.
    pub final_distance: Option<f64>,
    pub converged: bool,
    pub stopped_by_tolerance: bool,
    pub diagnostics_pass: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchSummary {
    pub problem: String,
    pub seeds: usize,
    pub converge_tol: f64,
    pub converged: usize,
    pub convergence_fraction: f64,
    pub diverged: usize,
    pub failed: usize,
    /// Per check name, the fraction of seeds (where it ran) that passed.
    pub diagnostics_pass_rates: BTreeMap<String, f64>,
    pub per_seed: Vec<SeedSummary>,
}

/// Everything a batch produced, in seed order.
#[derive(Debug)]
pub struct BatchResult {
    pub summary: BatchSummary,
    pub runs: Vec<(u64, Result<SeedRun>)>,
}

impl BatchResult {
    /// `2` if a trajectory diverged or produced non-finite values, `1` for
    /// any other failure, `0` otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.summary.diverged > 0 {
            2
        } else if self.summary.failed > 0 {
            1
        } else {
            0
        }
    }
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::Divergence { .. } | Error::NonFiniteIterate { .. })
}

/// Runs one trajectory with the given seed and checks its trace.
pub fn run_seed(cfg: &RunConfig, seed: u64, keep_iterates: bool) -> Result<SeedRun> {
    let mut solver = cfg.solver.clone();
    solver.seed = seed;
    solver.keep_iterates = keep_iterates;
    let reference = cfg.reference.as_ref();
    let (trace, x, duals) = match &cfg.problem {
        Problem::Inclusion { a, b, x0 } => {
            let tr = run(a.as_ref(), b.as_ref(), cfg.beta, &solver, x0, reference)?;
            let x = tr.final_x.clone();
            (tr, x, None)
        }
        Problem::Vi { f, b, x0 } => {
            let tr = solve_variational_inequality(f.clone(), b.as_ref(), cfg.beta, &solver, x0, reference)?;
            let x = tr.final_x.clone();
            (tr, x, None)
        }
        Problem::Composite { problem, x0, v0 } => {
            let sol = solve_primal_dual(problem, &solver, x0, v0, cfg.lifted_reference().as_ref())?;
            (sol.trace, sol.x, Some(sol.v))
        }
        Problem::Convex { problem, x0, v0 } => {
            let sol = solve_convex(problem, &solver, x0, v0, cfg.lifted_reference().as_ref())?;
            (sol.trace, sol.x, Some(sol.v))
        }
    };
    let reports = check_trace(&trace)?;
    Ok(SeedRun {
        seed,
        trace,
        x,
        duals,
        reports,
    })
}

/// Summability always; quasi-Fejer and Robbins-Siegmund when distances to a
/// reference were recorded (the latter only for noise-free runs).
pub fn check_trace(trace: &IterateTrace) -> Result<Vec<Report>> {
    let mut reports = vec![summability_report(trace)];
    if trace.fejer_distances().is_some() {
        let bound = if trace.noisy {
            ErrorBound::Realized
        } else {
            ErrorBound::Zero
        };
        reports.push(quasi_fejer_check(trace, None, None, &bound)?);
        if !trace.noisy {
            reports.push(robbins_siegmund_check(&fbf_supermartingale(trace)?));
        }
    }
    Ok(reports)
}

fn summarize_seed(cfg: &RunConfig, seed: u64, run: &Result<SeedRun>) -> SeedSummary {
    match run {
        Ok(r) => {
            let final_distance = cfg.reference.as_ref().map(|x_ref| r.x.dist(x_ref));
            let final_residual = r.trace.final_residual();
            let converged = match (final_distance, final_residual) {
                (Some(d), _) => d <= cfg.converge_tol,
                (None, Some(res)) => res <= cfg.converge_tol,
                (None, None) => false,
            };
            SeedSummary {
                seed,
                iterations: r.trace.len(),
                final_residual,
                final_distance,
                converged,
                stopped_by_tolerance: r.trace.stopped_by_tolerance,
                diagnostics_pass: r.reports.iter().all(|rep| rep.pass),
                error: None,
            }
        }
        Err(e) => SeedSummary {
            seed,
            iterations: 0,
            final_residual: None,
            final_distance: None,
            converged: false,
            stopped_by_tolerance: false,
            diagnostics_pass: false,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every seed (concurrently, up to `jobs`) without touching the disk.
pub fn execute(cfg: &RunConfig, opts: &BatchOptions) -> Result<BatchResult> {
    let work = || -> Vec<(u64, Result<SeedRun>)> {
        cfg.seeds
            .par_iter()
            .map(|&seed| (seed, run_seed(cfg, seed, opts.dump_iterates)))
            .collect()
    };
    let runs = match opts.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start {jobs} workers: {e}")))?
            .install(work),
        None => work(),
    };

    let per_seed: Vec<SeedSummary> = runs.iter().map(|(s, r)| summarize_seed(cfg, *s, r)).collect();
    let mut tallies: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (_, r) in &runs {
        if let Ok(r) = r {
            for rep in &r.reports {
                let t = tallies.entry(rep.check.clone()).or_default();
                t.0 += usize::from(rep.pass);
                t.1 += 1;
            }
        }
    }
    let converged = per_seed.iter().filter(|s| s.converged).count();
    let diverged = runs
        .iter()
        .filter(|(_, r)| r.as_ref().err().is_some_and(is_divergence))
        .count();
    let failed = runs.iter().filter(|(_, r)| r.is_err()).count() - diverged;
    let summary = BatchSummary {
        problem: cfg.problem.kind().to_string(),
        seeds: cfg.seeds.len(),
        converge_tol: cfg.converge_tol,
        converged,
        convergence_fraction: converged as f64 / cfg.seeds.len() as f64,
        diverged,
        failed,
        diagnostics_pass_rates: tallies
            .into_iter()
            .map(|(k, (pass, total))| (k, pass as f64 / total as f64))
            .collect(),
        per_seed,
    };
    Ok(BatchResult { summary, runs })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("outputs serialize") + "\n";
    fs::write(path, text).map_err(io_err(path))
}

/// Names of the files a batch writes into its output directory.
pub fn trace_file_name(seed: u64) -> String {
    format!("trace_seed_{seed}.csv")
}

/// Runs the batch and writes, from this thread only, one trace CSV per seed
/// (plus iterate dumps on request), `summary.json` and `diagnostics.json`.
pub fn run_batch(cfg: &RunConfig, out_dir: &Path, opts: &BatchOptions) -> Result<BatchResult> {
    let result = execute(cfg, opts)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut diagnostics = Vec::with_capacity(result.runs.len());
    for (seed, run) in &result.runs {
        let Ok(run) = run else {
            diagnostics.push(json!({ "seed": seed, "reports": [] }));
            continue;
        };
        let path: PathBuf = out_dir.join(trace_file_name(*seed));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        run.trace.write_csv(BufWriter::new(file)).map_err(io_err(&path))?;
        if opts.dump_iterates {
            let path = out_dir.join(format!("iterates_seed_{seed}.csv"));
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            run.trace
                .write_iterates_csv(BufWriter::new(file))
                .map_err(io_err(&path))?;
        }
        diagnostics.push(json!({ "seed": seed, "reports": run.reports }));
    }
    write_json(&out_dir.join("summary.json"), &result.summary)?;
    write_json(
        &out_dir.join("diagnostics.json"),
        &json!({
            "pass_rates": result.summary.diagnostics_pass_rates,
            "per_seed": diagnostics,
        }),
    )?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::parse_config;

    fn config(seeds: &str, noise: &str) -> RunConfig {
        parse_config(&format!(
            r#"
            seeds = {seeds}
            reference = [0.0, 0.0]
            [problem]
            kind = "inclusion"
            dim = 2
            a = "l1"
            b = "skew_rotation"
            x0 = [1.0, 0.0]
            [solver]
            epsilon = 0.1
            max_iters = 2000
            converge_tol = 1e-3
            {noise}
            "#
        ))
        .unwrap()
    }

    #[test]
    fn single_zero_noise_seed_converges() {
        let res = execute(&config("[7]", ""), &BatchOptions::default()).unwrap();
        assert_eq!(res.summary.convergence_fraction, 1.0);
        assert_eq!(res.exit_code(), 0);
        for (check, rate) in &res.summary.diagnostics_pass_rates {
            assert_eq!(*rate, 1.0, "{check}");
        }
        assert_eq!(res.summary.diagnostics_pass_rates.len(), 3);
    }

    #[test]
    fn fraction_is_count_over_seeds() {
        let noise = r#"
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
        let res = execute(
            &config("[1, 2, 3, 4, 5]", noise),
            &BatchOptions {
                jobs: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        let flags = res.summary.per_seed.iter().filter(|s| s.converged).count();
        assert_eq!(res.summary.converged, flags);
        assert_eq!(res.summary.convergence_fraction, flags as f64 / 5.0);
        // per-seed results come back in seed order
        let order: Vec<u64> = res.summary.per_seed.iter().map(|s| s.seed).collect();
        assert_eq!(order, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn divergence_sets_exit_code() {
        let cfg = parse_config(
            r#"
            seeds = [1]
            [problem]
            kind = "inclusion"
            dim = 2
            a = "zero"
            b = { name = "skew_rotation", scale = 50.0, beta = 0.5 }
            x0 = [1.0, 0.0]
            [solver]
            epsilon = 0.1
            "#,
        )
        .unwrap();
        let res = execute(&cfg, &BatchOptions::default()).unwrap();
        assert_eq!(res.summary.diverged, 1);
        assert_eq!(res.exit_code(), 2);
        assert!(res.summary.per_seed[0].error.as_ref().unwrap().contains("divergence"));
    }

    #[test]
    fn outputs_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let opts = BatchOptions {
            jobs: Some(1),
            dump_iterates: true,
        };
        run_batch(&config("[3, 9]", ""), dir.path(), &opts).unwrap();
        for f in [
            "trace_seed_3.csv",
            "trace_seed_9.csv",
            "iterates_seed_3.csv",
            "summary.json",
            "diagnostics.json",
        ] {
            assert!(dir.path().join(f).exists(), "missing {f}");
        }
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["seeds"], 2);
    }
}
