//! TOML run configuration: parsing and whole-document validation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::composite::{CompositeProblem, ConvexBlock, ConvexProblem, DualBlock};
use crate::error::{ConfigIssue, Error, Result};
use crate::fbf::{step_size_interval, FbfConfig, StepRule};
use crate::operators::{
    build_convex, build_forward, build_resolvent, ConvexFn, ForwardOp, MonotoneOperator, OperatorSpec, CONVEX_NAMES,
};
use crate::space::{LinearMap, Metric, MetricSequence, ProductPoint, Vector};
use crate::stochastic::NoiseTriple;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output: Option<PathBuf>,
    #[serde(default)]
    seeds: Vec<u64>,
    reference: Option<Vec<f64>>,
    reference_duals: Option<Vec<Vec<f64>>>,
    problem: RawProblem,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    noise: NoiseTriple,
}

fn zero_spec() -> OperatorSpec {
    OperatorSpec::named("zero")
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawProblem {
    Inclusion {
        dim: usize,
        a: OperatorSpec,
        b: OperatorSpec,
        x0: Vec<f64>,
    },
    Composite {
        dim: usize,
        z: Option<Vec<f64>>,
        a: OperatorSpec,
        #[serde(default = "zero_spec")]
        c: OperatorSpec,
        x0: Vec<f64>,
        blocks: Vec<RawCompositeBlock>,
    },
    Convex {
        dim: usize,
        z: Option<Vec<f64>>,
        f: OperatorSpec,
        #[serde(default = "zero_spec")]
        h: OperatorSpec,
        x0: Vec<f64>,
        blocks: Vec<RawConvexBlock>,
    },
    Vi {
        dim: usize,
        f: OperatorSpec,
        b: OperatorSpec,
        x0: Vec<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompositeBlock {
    l: Vec<Vec<f64>>,
    r: Option<Vec<f64>>,
    b: OperatorSpec,
    #[serde(default = "zero_spec")]
    dinv: OperatorSpec,
    v0: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConvexBlock {
    l: Vec<Vec<f64>>,
    r: Option<Vec<f64>>,
    g: OperatorSpec,
    lstar_grad: Option<OperatorSpec>,
    v0: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawGamma {
    Constant(f64),
    Sequence(Vec<f64>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    scalar: Option<f64>,
    diagonal: Option<Vec<f64>>,
    matrix: Option<Vec<Vec<f64>>>,
    alpha: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    beta: Option<f64>,
    mu: Option<f64>,
    epsilon: Option<f64>,
    gamma: Option<RawGamma>,
    #[serde(default = "default_max_iters")]
    max_iters: usize,
    #[serde(default)]
    stop_tol: f64,
    #[serde(default = "default_converge_tol")]
    converge_tol: f64,
    metric: Option<RawMetric>,
}

fn default_max_iters() -> usize {
    1000
}

fn default_converge_tol() -> f64 {
    1e-6
}

impl Default for RawSolver {
    fn default() -> Self {
        RawSolver {
            beta: None,
            mu: None,
            epsilon: None,
            gamma: None,
            max_iters: default_max_iters(),
            stop_tol: 0.0,
            converge_tol: default_converge_tol(),
            metric: None,
        }
    }
}

/// A validated problem with its starting point.
#[derive(Clone, Debug)]
pub enum Problem {
    Inclusion {
        a: Arc<dyn MonotoneOperator>,
        b: Arc<dyn ForwardOp>,
        x0: Vector,
    },
    Composite {
        problem: CompositeProblem,
        x0: Vector,
        v0: Vec<Vector>,
    },
    Convex {
        problem: ConvexProblem,
        x0: Vector,
        v0: Vec<Vector>,
    },
    Vi {
        f: Arc<dyn ConvexFn>,
        b: Arc<dyn ForwardOp>,
        x0: Vector,
    },
}

impl Problem {
    pub fn kind(&self) -> &'static str {
        match self {
            Problem::Inclusion { .. } => "inclusion",
            Problem::Composite { .. } => "composite",
            Problem::Convex { .. } => "convex",
            Problem::Vi { .. } => "vi",
        }
    }

    pub fn is_primal_dual(&self) -> bool {
        matches!(self, Problem::Composite { .. } | Problem::Convex { .. })
    }
}

/// A fully validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub problem: Problem,
    /// Solver settings; the seed is replaced per trajectory.
    pub solver: FbfConfig,
    /// Lipschitz constant used for the step-size interval.
    pub beta: f64,
    pub seeds: Vec<u64>,
    /// Known primal solution.
    pub reference: Option<Vector>,
    /// Known dual solution (primal-dual problems only).
    pub reference_duals: Option<Vec<Vector>>,
    pub output: Option<PathBuf>,
    /// A seed counts as converged when its final distance to the reference
    /// (or, without one, its final residual) is at most this.
    pub converge_tol: f64,
}

impl RunConfig {
    /// Full product-space reference for primal-dual problems.
    pub fn lifted_reference(&self) -> Option<ProductPoint> {
        Some(ProductPoint {
            primal: self.reference.clone()?,
            duals: self.reference_duals.clone()?,
        })
    }
}

#[derive(Default)]
struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }

    fn check<T>(&mut self, path: impl Into<String>, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.push(path, e.to_string());
                None
            }
        }
    }

    fn vector(&mut self, path: &str, values: Vec<f64>, dim: usize) -> Option<Vector> {
        if values.len() != dim {
            self.push(path, format!("expected {dim} entries, found {}", values.len()));
            return None;
        }
        self.check(path, Vector::new(values))
    }

    fn matrix(&mut self, path: &str, rows: &[Vec<f64>], ncols: usize) -> Option<LinearMap> {
        if rows.is_empty() {
            self.push(path, "matrix has no rows");
            return None;
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
            self.push(
                format!("{path}[{bad}]"),
                format!(
                    "row has {} entries, expected {ncols} (the primal dimension)",
                    rows[bad].len()
                ),
            );
            return None;
        }
        self.check(path, LinearMap::from_rows(rows))
    }
}

fn validate_dim(issues: &mut Issues, dim: usize) -> bool {
    if dim == 0 {
        issues.push("problem.dim", "must be positive");
        false
    } else {
        true
    }
}

fn build_metric(issues: &mut Issues, raw: &RawMetric, dim: usize) -> Option<Metric> {
    let given = [raw.scalar.is_some(), raw.diagonal.is_some(), raw.matrix.is_some()];
    if given.iter().filter(|&&g| g).count() != 1 {
        issues.push("solver.metric", "give exactly one of `scalar`, `diagonal`, `matrix`");
        return None;
    }
    if let Some(s) = raw.scalar {
        return issues.check("solver.metric.scalar", Metric::scaled_identity(dim, s));
    }
    if let Some(d) = &raw.diagonal {
        if d.len() != dim {
            issues.push(
                "solver.metric.diagonal",
                format!("expected {dim} entries, found {}", d.len()),
            );
            return None;
        }
        return issues.check("solver.metric.diagonal", Metric::diagonal(d));
    }
    let rows = raw.matrix.as_ref().expect("one field is set");
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        issues.push("solver.metric.matrix", format!("must be {dim}x{dim}"));
        return None;
    }
    let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
    let alpha = match raw.alpha {
        Some(a) => a,
        None => m.clone().symmetric_eigen().eigenvalues.min(),
    };
    issues.check("solver.metric.matrix", Metric::new(m, alpha))
}

/// Parses and validates a config, reporting every issue found.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with_seeds(text, None)
}

/// Like [`parse_config`], with `seeds` (when given) replacing the config's
/// seed list before validation.
pub fn parse_config_with_seeds(text: &str, seeds: Option<Vec<u64>>) -> Result<RunConfig> {
    let mut raw: RawConfig = toml::from_str(text).map_err(|e| {
        Error::Config(vec![ConfigIssue {
            path: "<document>".into(),
            message: e.to_string().trim_end().to_string(),
        }])
    })?;
    if let Some(seeds) = seeds {
        raw.seeds = seeds;
    }
    let mut issues = Issues::default();

    if raw.seeds.is_empty() {
        issues.push("seeds", "must list at least one seed");
    }
    let mut sorted = raw.seeds.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        issues.push("seeds", "seeds must be distinct (each names one output file)");
    }

    let s = &raw.solver;
    let (problem, default_beta, dim) = build_problem(&mut issues, raw.problem);

    let metric = match (&s.metric, dim) {
        (Some(m), Some(d)) => build_metric(&mut issues, m, d),
        _ => None,
    };
    if metric.is_some() && problem.as_ref().is_some_and(Problem::is_primal_dual) {
        issues.push(
            "solver.metric",
            "variable metrics are not supported for composite or convex problems",
        );
    }
    let metric_seq = match (metric, s.mu, dim) {
        (None, None, _) => None,
        (m, mu, Some(d)) => {
            let w = m.unwrap_or_else(|| Metric::identity(d));
            let norm = w.operator_norm();
            let mu = mu.unwrap_or(norm);
            if mu.is_nan() || mu < norm * (1.0 - 1e-12) {
                issues.push("solver.mu", format!("must be at least the metric norm {norm}"));
                None
            } else {
                let alpha = w.alpha();
                issues.check(
                    "solver.mu",
                    MetricSequence::new(d, alpha, mu.max(alpha), 0.0, move |_| w.clone(), |_| 0.0),
                )
            }
        }
        _ => None,
    };

    let beta = match (s.beta, default_beta) {
        (Some(b), _) if problem.as_ref().is_some_and(Problem::is_primal_dual) => {
            issues.push(
                "solver.beta",
                format!("derived from the operators for primal-dual problems; remove it (given {b})"),
            );
            None
        }
        (Some(b), _) => Some(b),
        (None, Some(b)) => Some(b),
        (None, None) => None,
    };
    if let Some(b) = beta {
        if !(b > 0.0 && b.is_finite()) {
            issues.push(
                "solver.beta",
                format!(
                    "Lipschitz constant must be positive, got {b}; declare solver.beta for a zero forward operator"
                ),
            );
        }
    }

    let mu = metric_seq.as_ref().map_or(1.0, MetricSequence::mu);
    let interval = match (s.epsilon, beta) {
        (None, _) => {
            issues.push("solver.epsilon", "is required");
            None
        }
        (Some(eps), Some(b)) if b > 0.0 && b.is_finite() => {
            issues.check("solver.epsilon", step_size_interval(b, mu, eps))
        }
        _ => None,
    };

    let step = match &s.gamma {
        None => StepRule::Midpoint,
        Some(RawGamma::Constant(g)) => StepRule::Constant(*g),
        Some(RawGamma::Sequence(v)) => StepRule::Sequence(v.clone()),
    };
    if let Some((lo, hi)) = interval {
        let gammas: Vec<f64> = match &step {
            StepRule::Midpoint => vec![],
            StepRule::Constant(g) => vec![*g],
            StepRule::Sequence(v) => v.clone(),
        };
        if matches!(step, StepRule::Sequence(ref v) if v.is_empty()) {
            issues.push("solver.gamma", "step sequence is empty");
        }
        for (k, g) in gammas.iter().enumerate() {
            if !(*g >= lo && *g <= hi) {
                issues.push(format!("solver.gamma[{k}]"), format!("{g} lies outside [{lo}, {hi}]"));
            }
        }
    }
    if s.max_iters == 0 {
        issues.push("solver.max_iters", "must be positive");
    }
    if s.stop_tol.is_nan() || s.stop_tol < 0.0 {
        issues.push("solver.stop_tol", "must be >= 0");
    }
    if s.converge_tol.is_nan() || s.converge_tol < 0.0 {
        issues.push("solver.converge_tol", "must be >= 0");
    }
    for (slot, kind) in [("a", raw.noise.a), ("b", raw.noise.b), ("c", raw.noise.c)] {
        issues.check(format!("noise.{slot}"), kind.validate());
    }

    let has_reference = raw.reference.is_some();
    let reference = match (raw.reference, dim) {
        (Some(r), Some(d)) => issues.vector("reference", r, d),
        _ => None,
    };
    let reference_duals = match (&raw.reference_duals, &problem) {
        (None, _) => None,
        (Some(rd), Some(Problem::Composite { v0, .. } | Problem::Convex { v0, .. })) => {
            if rd.len() != v0.len() {
                issues.push(
                    "reference_duals",
                    format!("expected {} blocks, found {}", v0.len(), rd.len()),
                );
                None
            } else {
                let out: Vec<Option<Vector>> = rd
                    .iter()
                    .zip(v0)
                    .enumerate()
                    .map(|(i, (r, v))| issues.vector(&format!("reference_duals[{i}]"), r.clone(), v.dim()))
                    .collect();
                out.into_iter().collect()
            }
        }
        (Some(_), Some(_)) => {
            issues.push("reference_duals", "only meaningful for composite and convex problems");
            None
        }
        (Some(_), None) => None,
    };
    if raw.reference_duals.is_some() && !has_reference {
        issues.push("reference_duals", "requires `reference` as well");
    }

    if !issues.0.is_empty() {
        return Err(Error::Config(issues.0));
    }
    let mut solver = FbfConfig::new(s.epsilon.expect("validated"), s.max_iters)
        .with_step(step)
        .with_stop_tol(s.stop_tol)
        .with_noise(raw.noise, 0);
    solver.metric = metric_seq;
    Ok(RunConfig {
        problem: problem.expect("validated"),
        solver,
        beta: beta.expect("validated"),
        seeds: raw.seeds,
        reference,
        reference_duals,
        output: raw.output,
        converge_tol: s.converge_tol,
    })
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    load_config_with_seeds(path, None)
}

/// Reads a config file, overriding its seeds when `seeds` is given.
pub fn load_config_with_seeds(path: &Path, seeds: Option<Vec<u64>>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_with_seeds(&text, seeds)
}

/// Builds the problem; returns it with the default Lipschitz constant and
/// the primal dimension.
fn build_problem(issues: &mut Issues, raw: RawProblem) -> (Option<Problem>, Option<f64>, Option<usize>) {
    match raw {
        RawProblem::Inclusion { dim, a, b, x0 } => {
            if !validate_dim(issues, dim) {
                return (None, None, None);
            }
            let a = issues.check("problem.a", build_resolvent(&a, dim));
            let b = issues.check("problem.b", build_forward(&b, dim));
            let x0 = issues.vector("problem.x0", x0, dim);
            let beta = b.as_ref().map(|b| b.beta());
            let problem = match (a, b, x0) {
                (Some(a), Some(b), Some(x0)) => Some(Problem::Inclusion { a, b, x0 }),
                _ => None,
            };
            (problem, beta, Some(dim))
        }
        RawProblem::Vi { dim, f, b, x0 } => {
            if !validate_dim(issues, dim) {
                return (None, None, None);
            }
            let f = issues.check("problem.f", build_convex(&f, dim));
            let b = issues.check("problem.b", build_forward(&b, dim));
            let x0 = issues.vector("problem.x0", x0, dim);
            let beta = b.as_ref().map(|b| b.beta());
            let problem = match (f, b, x0) {
                (Some(f), Some(b), Some(x0)) => Some(Problem::Vi { f, b, x0 }),
                _ => None,
            };
            (problem, beta, Some(dim))
        }
        RawProblem::Composite {
            dim,
            z,
            a,
            c,
            x0,
            blocks,
        } => {
            if !validate_dim(issues, dim) {
                return (None, None, None);
            }
            let z = z.map_or(Some(Vector::zeros(dim)), |z| issues.vector("problem.z", z, dim));
            let a = issues.check("problem.a", build_resolvent(&a, dim));
            let c = issues.check("problem.c", build_forward(&c, dim));
            let x0 = issues.vector("problem.x0", x0, dim);
            if blocks.is_empty() {
                issues.push("problem.blocks", "need at least one block");
            }
            let n_blocks = blocks.len();
            let mut built = Vec::new();
            let mut v0s = Vec::new();
            for (i, blk) in blocks.into_iter().enumerate() {
                let path = |f: &str| format!("problem.blocks[{i}].{f}");
                let Some(l) = issues.matrix(&path("l"), &blk.l, dim) else {
                    continue;
                };
                let g = l.range_dim();
                let r = blk
                    .r
                    .map_or(Some(Vector::zeros(g)), |r| issues.vector(&path("r"), r, g));
                let b = issues.check(path("b"), build_resolvent(&blk.b, g));
                let dinv = issues.check(path("dinv"), build_forward(&blk.dinv, g));
                let v0 = blk
                    .v0
                    .map_or(Some(Vector::zeros(g)), |v| issues.vector(&path("v0"), v, g));
                if let (Some(r), Some(b), Some(dinv), Some(v0)) = (r, b, dinv, v0) {
                    built.push(DualBlock::new(r, b, dinv, l));
                    v0s.push(v0);
                }
            }
            let problem = match (z, a, c, x0) {
                (Some(z), Some(a), Some(c), Some(x0)) if n_blocks > 0 && built.len() == n_blocks => issues
                    .check("problem", CompositeProblem::new(z, a, c, built))
                    .map(|problem| Problem::Composite { problem, x0, v0: v0s }),
                _ => None,
            };
            let beta = match &problem {
                Some(Problem::Composite { problem, .. }) => Some(positive_or_one(problem.beta_bound())),
                _ => None,
            };
            (problem, beta, Some(dim))
        }
        RawProblem::Convex {
            dim,
            z,
            f,
            h,
            x0,
            blocks,
        } => {
            if !validate_dim(issues, dim) {
                return (None, None, None);
            }
            let z = z.map_or(Some(Vector::zeros(dim)), |z| issues.vector("problem.z", z, dim));
            let f = issues.check("problem.f", build_convex(&f, dim));
            let h_grad = issues.check("problem.h", build_forward(&h, dim));
            // The value of h is known when the same name is a library function.
            let h_value = CONVEX_NAMES
                .contains(&h.name())
                .then(|| build_convex(&h, dim).ok())
                .flatten();
            let x0 = issues.vector("problem.x0", x0, dim);
            if blocks.is_empty() {
                issues.push("problem.blocks", "need at least one block");
            }
            let n_blocks = blocks.len();
            let mut built = Vec::new();
            let mut v0s = Vec::new();
            for (i, blk) in blocks.into_iter().enumerate() {
                let path = |f: &str| format!("problem.blocks[{i}].{f}");
                let Some(l) = issues.matrix(&path("l"), &blk.l, dim) else {
                    continue;
                };
                let g_dim = l.range_dim();
                let r = blk
                    .r
                    .map_or(Some(Vector::zeros(g_dim)), |r| issues.vector(&path("r"), r, g_dim));
                let g = issues.check(path("g"), build_convex(&blk.g, g_dim));
                let smoothing = match &blk.lstar_grad {
                    Some(spec) => issues.check(path("lstar_grad"), build_forward(spec, g_dim)).map(Some),
                    None => Some(None),
                };
                let v0 = blk
                    .v0
                    .map_or(Some(Vector::zeros(g_dim)), |v| issues.vector(&path("v0"), v, g_dim));
                if let (Some(r), Some(g), Some(smoothing), Some(v0)) = (r, g, smoothing, v0) {
                    let mut block = ConvexBlock::new(r, g, l);
                    if let Some(s) = smoothing {
                        block = block.with_smoothing(s);
                    }
                    built.push(block);
                    v0s.push(v0);
                }
            }
            let problem = match (z, f, h_grad, x0) {
                (Some(z), Some(f), Some(h_grad), Some(x0)) if n_blocks > 0 && built.len() == n_blocks => {
                    let mut problem = ConvexProblem::new(z, f, h_grad, built);
                    if let Some(hv) = h_value {
                        problem = problem.with_h_value(hv);
                    }
                    issues
                        .check("problem", problem.to_composite())
                        .map(|c| (Problem::Convex { problem, x0, v0: v0s }, c.beta_bound()))
                }
                _ => None,
            };
            match problem {
                Some((p, b)) => (Some(p), Some(positive_or_one(b)), Some(dim)),
                None => (None, None, Some(dim)),
            }
        }
    }
}

fn positive_or_one(b: f64) -> f64 {
    if b > 0.0 {
        b
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        seeds = [1]
        [problem]
        kind = "inclusion"
        dim = 2
        a = "l1"
        b = "skew_rotation"
        x0 = [1.0, 0.0]
        [solver]
        epsilon = 0.1
    "#;

    fn issues_of(text: &str) -> Vec<ConfigIssue> {
        match parse_config(text) {
            Err(Error::Config(v)) => v,
            other => panic!("expected config issues, got {other:?}"),
        }
    }

    #[test]
    fn minimal_inclusion_config() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.problem.kind(), "inclusion");
        assert_eq!(cfg.beta, 1.0);
        assert_eq!(cfg.seeds, vec![1]);
        assert_eq!(cfg.solver.step, StepRule::Midpoint);
        assert!(cfg.solver.metric.is_none());
    }

    #[test]
    fn epsilon_out_of_range_cites_bound() {
        let text = MINIMAL.replace("epsilon = 0.1", "epsilon = 0.9\nbeta = 1.0\nmu = 1.0");
        let issues = issues_of(&text);
        let eps = issues
            .iter()
            .find(|i| i.path == "solver.epsilon")
            .expect("epsilon issue");
        assert!(eps.message.contains("0.5"), "{eps}");
    }

    #[test]
    fn unknown_operator_is_named() {
        let issues = issues_of(&MINIMAL.replace("a = \"l1\"", "a = \"nonexistent\""));
        assert_eq!(issues[0].path, "problem.a");
        assert!(issues[0].message.contains("nonexistent"));
    }

    #[test]
    fn all_issues_are_reported() {
        let text = r#"
            seeds = []
            reference = [0.0]
            [problem]
            kind = "inclusion"
            dim = 2
            a = "nonexistent"
            b = "skew_rotation"
            x0 = [1.0, 0.0, 3.0]
            [solver]
            epsilon = 0.7
            [noise.a]
            kind = "gaussian_geometric"
            sigma = -1.0
            rho = 0.5
        "#;
        let paths: Vec<String> = issues_of(text).into_iter().map(|i| i.path).collect();
        for p in [
            "seeds",
            "problem.a",
            "problem.x0",
            "solver.epsilon",
            "noise.a",
            "reference",
        ] {
            assert!(paths.iter().any(|q| q == p), "missing {p} in {paths:?}");
        }
    }

    #[test]
    fn syntax_errors_are_reported() {
        let issues = issues_of("seeds = [1\n");
        assert_eq!(issues[0].path, "<document>");
    }

    #[test]
    fn composite_and_convex_configs() {
        let text = r#"
            seeds = [3, 4]
            reference = [0.0]
            [problem]
            kind = "convex"
            dim = 1
            f = "l1"
            h = { name = "quadratic", center = [1.0] }
            x0 = [3.0]
            [[problem.blocks]]
            l = [[1.0]]
            g = "l1"
            [solver]
            epsilon = 0.05
            max_iters = 100
        "#;
        let cfg = parse_config(text).unwrap();
        let Problem::Convex { problem, .. } = &cfg.problem else {
            panic!("wrong kind")
        };
        assert_eq!(cfg.beta, 2.0);
        assert!(problem.h_value.is_some());

        let text = r#"
            seeds = [3]
            [problem]
            kind = "composite"
            dim = 2
            a = "l1"
            c = "skew_rotation"
            x0 = [1.0, 1.0]
            [[problem.blocks]]
            l = [[3.0, 0.0]]
            b = { name = "box_projection", lo = -1.0, hi = 1.0 }
            [[problem.blocks]]
            l = [[0.0, 4.0], [0.0, 0.0]]
            b = "l1"
            dinv = { name = "scaled_identity", scale = 0.5 }
            [solver]
            epsilon = 0.05
        "#;
        let cfg = parse_config(text).unwrap();
        assert!((cfg.beta - 6.0).abs() < 1e-10);
    }

    #[test]
    fn block_dimension_errors_have_paths() {
        let text = r#"
            seeds = [3]
            [problem]
            kind = "composite"
            dim = 2
            a = "l1"
            x0 = [1.0, 1.0]
            [[problem.blocks]]
            l = [[3.0]]
            b = "l1"
            [solver]
            epsilon = 0.05
        "#;
        let issues = issues_of(text);
        assert!(issues[0].path.starts_with("problem.blocks[0].l"), "{issues:?}");
    }

    #[test]
    fn metric_config() {
        let text = MINIMAL.replace("epsilon = 0.1", "epsilon = 0.1\nmetric = { diagonal = [1.0, 2.0] }");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.solver.mu(), 2.0);
        let text = MINIMAL.replace("epsilon = 0.1", "epsilon = 0.1\nmetric = { scalar = 2.0 }\nmu = 1.0");
        assert!(issues_of(&text).iter().any(|i| i.path == "solver.mu"));
    }

    #[test]
    fn zero_forward_needs_declared_beta() {
        let text = MINIMAL.replace("b = \"skew_rotation\"", "b = \"zero\"");
        assert!(issues_of(&text).iter().any(|i| i.path == "solver.beta"));
        let text = text.replace("epsilon = 0.1", "epsilon = 0.1\nbeta = 1.0");
        parse_config(&text).unwrap();
    }

    #[test]
    fn gamma_outside_interval() {
        let text = MINIMAL.replace("epsilon = 0.1", "epsilon = 0.1\ngamma = [0.5, 0.95]");
        assert!(issues_of(&text).iter().any(|i| i.path == "solver.gamma[1]"));
    }
}
