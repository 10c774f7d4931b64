//! Stochastic forward-backward-forward iteration.
//!
//! For `A` maximally monotone and `B` monotone and `beta`-Lipschitz, one step
//! with step size `gamma` and errors `(a, b, c)` is
//!
//! ```text
//! y      = x - gamma U (B x + a)
//! p      = J_{gamma U A}(y) + b
//! q      = p - gamma U (B p + c)
//! x_next = x - y + q
//! ```
//!
//! with `U = Id` in the plain form. Step sizes must stay inside
//! `[eps, (1 - eps) / (beta mu)]` where `mu = sup ||U_n||`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{ForwardOp, MonotoneOperator};
use crate::space::{inverse_metric_norm, Metric, MetricSequence, Vector};
use crate::stochastic::{ErrorDraw, ErrorSampler, NoiseTriple};

mod trace;

pub use trace::{IterateTrace, Iterates, TraceRecord, CSV_HEADER};

/// Multiplier in the divergence guard `||x_n|| > GUARD * (1 + ||x_0||)`.
pub const DIVERGENCE_GUARD: f64 = 1e6;

/// Returns `(eps, (1 - eps) / (beta mu))`.
pub fn step_size_interval(beta: f64, mu: f64, epsilon: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let bound = 1.0 / (beta * mu + 1.0);
    if !(epsilon > 0.0 && epsilon < bound) {
        return Err(Error::EpsilonOutOfRange { epsilon, bound });
    }
    Ok((epsilon, (1.0 - epsilon) / (beta * mu)))
}

/// How `gamma_n` is chosen inside the admissible interval.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Constant at the midpoint of the interval.
    #[default]
    Midpoint,
    Constant(f64),
    /// `gamma_n = seq[n]`, repeating the last entry past the end.
    Sequence(Vec<f64>),
}

impl StepRule {
    pub fn gamma(&self, n: usize, lo: f64, hi: f64) -> f64 {
        match self {
            StepRule::Midpoint => 0.5 * (lo + hi),
            StepRule::Constant(g) => *g,
            StepRule::Sequence(seq) => seq.get(n).or(seq.last()).copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FbfConfig {
    pub epsilon: f64,
    pub step: StepRule,
    pub max_iters: usize,
    /// Stop once `||x_n - p_n|| <= stop_tol`.
    pub stop_tol: f64,
    pub noise: NoiseTriple,
    pub seed: u64,
    /// Absent means `U_n = Id`.
    pub metric: Option<MetricSequence>,
    /// Store `x_n, y_n, p_n, q_n` in every record.
    pub keep_iterates: bool,
}

impl FbfConfig {
    pub fn new(epsilon: f64, max_iters: usize) -> Self {
        FbfConfig {
            epsilon,
            step: StepRule::Midpoint,
            max_iters,
            stop_tol: 0.0,
            noise: NoiseTriple::zero(),
            seed: 0,
            metric: None,
            keep_iterates: false,
        }
    }

    pub fn with_step(mut self, step: StepRule) -> Self {
        self.step = step;
        self
    }

    pub fn with_stop_tol(mut self, tol: f64) -> Self {
        self.stop_tol = tol;
        self
    }

    pub fn with_noise(mut self, noise: NoiseTriple, seed: u64) -> Self {
        self.noise = noise;
        self.seed = seed;
        self
    }

    pub fn with_metric(mut self, metric: MetricSequence) -> Self {
        self.metric = Some(metric);
        self
    }

    pub fn keep_iterates(mut self, keep: bool) -> Self {
        self.keep_iterates = keep;
        self
    }

    pub fn mu(&self) -> f64 {
        self.metric.as_ref().map_or(1.0, MetricSequence::mu)
    }

    pub fn alpha(&self) -> f64 {
        self.metric.as_ref().map_or(1.0, MetricSequence::alpha)
    }

    /// Checks every parameter that does not depend on the problem.
    pub fn validate(&self, beta: f64) -> Result<(f64, f64)> {
        let interval = step_size_interval(beta, self.mu(), self.epsilon)?;
        if self.stop_tol.is_nan() || self.stop_tol < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "stop_tol must be >= 0, got {}",
                self.stop_tol
            )));
        }
        if let StepRule::Sequence(seq) = &self.step {
            if seq.is_empty() {
                return Err(Error::InvalidParameter("step sequence is empty".into()));
            }
        }
        self.noise.validate()?;
        Ok(interval)
    }
}

/// The four vectors produced by one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub x_next: Vector,
    pub y: Vector,
    pub p: Vector,
    pub q: Vector,
}

pub(crate) fn finite(v: Vector, substep: &'static str, n: usize) -> Result<Vector> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteIterate { substep, n })
    }
}

/// `x - gamma * (bx + e)`, entrywise.
#[inline]
pub(crate) fn forward_step(x: &Vector, bx: &Vector, e: &Vector, gamma: f64) -> Vector {
    Vector::from_raw(
        x.iter()
            .zip(bx.iter())
            .zip(e.iter())
            .map(|((&xi, &bi), &ei)| xi - gamma * (bi + ei))
            .collect(),
    )
}

#[inline]
pub(crate) fn add(a: &Vector, b: &Vector) -> Vector {
    a.zip_map(b, |x, y| x + y)
}

/// `x - y + q`, evaluated as `(x - y) + q`.
#[inline]
pub(crate) fn correction(x: &Vector, y: &Vector, q: &Vector) -> Vector {
    Vector::from_raw(
        x.iter()
            .zip(y.iter())
            .zip(q.iter())
            .map(|((&xi, &yi), &qi)| xi - yi + qi)
            .collect(),
    )
}

fn check_dims(a: &dyn MonotoneOperator, b: &dyn ForwardOp, x: &Vector, errors: &ErrorDraw) -> Result<()> {
    let d = x.dim();
    for (expected, context) in [(a.dim(), "fbf step (A)"), (b.dim(), "fbf step (B)")] {
        if let Some(e) = expected {
            if e != d {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: e,
                    found: d,
                });
            }
        }
    }
    for e in [&errors.a, &errors.b, &errors.c] {
        e.ensure_dim(d, "fbf step (errors)")?;
    }
    Ok(())
}

fn step_impl(
    a: &dyn MonotoneOperator,
    b: &dyn ForwardOp,
    x: &Vector,
    gamma: f64,
    errors: &ErrorDraw,
    n: usize,
) -> Result<StepOutput> {
    let y = finite(forward_step(x, &b.apply(x), &errors.a, gamma), "forward", n)?;
    let p = finite(add(&a.apply_resolvent(gamma, &y), &errors.b), "resolvent", n)?;
    let q = finite(forward_step(&p, &b.apply(&p), &errors.c, gamma), "second forward", n)?;
    let x_next = finite(correction(x, &y, &q), "correction", n)?;
    Ok(StepOutput { x_next, y, p, q })
}

/// One plain step (`U = Id`).
pub fn fbf_step(
    a: &dyn MonotoneOperator,
    b: &dyn ForwardOp,
    x: &Vector,
    gamma: f64,
    errors: &ErrorDraw,
) -> Result<StepOutput> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::NonPositiveStep { gamma });
    }
    check_dims(a, b, x, errors)?;
    step_impl(a, b, x, gamma, errors, 0)
}

/// `x - gamma * U (bx + e)`, entrywise after applying `U`.
fn metric_forward_step(u: &Metric, x: &Vector, bx: &Vector, e: &Vector, gamma: f64) -> Vector {
    let w = add(bx, e);
    let uw = u.apply_unchecked(w.as_slice());
    x.zip_map(&uw, |xi, ui| xi - gamma * ui)
}

/// `J_{gamma U A}(y)`: coordinatewise prox for diagonal `U` and separable
/// `A`, otherwise `J_{gamma lambda A}` for `U = lambda Id`.
fn metric_resolvent(a: &dyn MonotoneOperator, u: &Metric, gamma: f64, y: &Vector) -> Result<Vector> {
    if let Some(diag) = u.as_diagonal() {
        let steps: Vec<f64> = diag.iter().map(|d| gamma * d).collect();
        if let Some(p) = a.separable_resolvent(&steps, y) {
            return Ok(p);
        }
    }
    match u.as_scalar() {
        Some(lambda) => Ok(a.apply_resolvent(gamma * lambda, y)),
        None => Err(Error::Unsupported(format!(
            "resolvent of `{}` under a non-scalar metric needs a separable prox and a diagonal metric",
            a.name()
        ))),
    }
}

fn metric_step_impl(
    a: &dyn MonotoneOperator,
    b: &dyn ForwardOp,
    u: &Metric,
    x: &Vector,
    gamma: f64,
    errors: &ErrorDraw,
    n: usize,
) -> Result<StepOutput> {
    let y = finite(metric_forward_step(u, x, &b.apply(x), &errors.a, gamma), "forward", n)?;
    let p = finite(add(&metric_resolvent(a, u, gamma, &y)?, &errors.b), "resolvent", n)?;
    let q = finite(
        metric_forward_step(u, &p, &b.apply(&p), &errors.c, gamma),
        "second forward",
        n,
    )?;
    let x_next = finite(correction(x, &y, &q), "correction", n)?;
    Ok(StepOutput { x_next, y, p, q })
}

/// One variable-metric step with metric `U_n = u`.
pub fn fbf_step_metric(
    a: &dyn MonotoneOperator,
    b: &dyn ForwardOp,
    u: &Metric,
    x: &Vector,
    gamma: f64,
    errors: &ErrorDraw,
) -> Result<StepOutput> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::NonPositiveStep { gamma });
    }
    check_dims(a, b, x, errors)?;
    x.ensure_dim(u.dim(), "fbf step (metric)")?;
    metric_step_impl(a, b, u, x, gamma, errors, 0)
}

/// Quantities shared by every trajectory recorder.
pub(crate) struct Recorder<'a> {
    pub reference: Option<&'a Vector>,
    pub keep_iterates: bool,
    pub threshold: f64,
}

impl Recorder<'_> {
    pub fn new<'a>(x0: &Vector, reference: Option<&'a Vector>, keep_iterates: bool) -> Recorder<'a> {
        Recorder {
            reference,
            keep_iterates,
            threshold: DIVERGENCE_GUARD * (1.0 + x0.norm()),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &self,
        n: usize,
        gamma: f64,
        x: &Vector,
        out: &StepOutput,
        errors: &ErrorDraw,
        moments: [f64; 3],
        metric: Option<(&Metric, f64)>,
    ) -> Result<TraceRecord> {
        let metric_dist = match (metric, self.reference) {
            (Some((u, _)), Some(r)) => Some(inverse_metric_norm(u, &(x - r))?),
            _ => None,
        };
        Ok(TraceRecord {
            n,
            gamma,
            res_primal: x.dist(&out.p),
            res_yq: out.y.dist(&out.q),
            dist_ref: self.reference.map(|r| x.dist(r)),
            metric_dist,
            moment_a: moments[0],
            moment_b: moments[1],
            moment_c: moments[2],
            norm_a: errors.a.norm(),
            norm_b: errors.b.norm(),
            norm_c: errors.c.norm(),
            eta: metric.map_or(0.0, |(_, eta)| eta),
            iterates: self.keep_iterates.then(|| Iterates {
                x: x.clone(),
                y: out.y.clone(),
                p: out.p.clone(),
                q: out.q.clone(),
            }),
        })
    }

    pub fn guard(&self, n: usize, x_next: &Vector) -> Result<()> {
        let norm = x_next.norm();
        if norm > self.threshold {
            return Err(Error::Divergence {
                n,
                norm,
                threshold: self.threshold,
            });
        }
        Ok(())
    }
}

pub(crate) fn checked_gamma(rule: &StepRule, n: usize, lo: f64, hi: f64) -> Result<f64> {
    let gamma = rule.gamma(n, lo, hi);
    if !(gamma >= lo && gamma <= hi) {
        return Err(Error::StepOutOfRange { n, gamma, lo, hi });
    }
    Ok(gamma)
}

/// Runs the iteration from `x0` until `max_iters` steps or
/// `||x_n - p_n|| <= stop_tol`.
pub fn run(
    a: &dyn MonotoneOperator,
    b: &dyn ForwardOp,
    beta: f64,
    config: &FbfConfig,
    x0: &Vector,
    reference: Option<&Vector>,
) -> Result<IterateTrace> {
    let (lo, hi) = config.validate(beta)?;
    let dim = x0.dim();
    if !x0.is_finite() || dim == 0 {
        return Err(Error::NonFinite { what: "x0" });
    }
    check_dims(a, b, x0, &ErrorDraw::zeros(dim))?;
    if let Some(r) = reference {
        r.ensure_dim(dim, "reference point")?;
    }
    if let Some(seq) = &config.metric {
        if seq.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: "metric sequence",
                expected: dim,
                found: seq.dim(),
            });
        }
    }

    let mut sampler = ErrorSampler::new(config.noise, dim, config.seed);
    let recorder = Recorder::new(x0, reference, config.keep_iterates);
    let mut records = Vec::with_capacity(config.max_iters.min(1 << 16));
    let mut x = x0.clone();
    let mut stopped_by_tolerance = false;

    for n in 0..config.max_iters {
        let gamma = checked_gamma(&config.step, n, lo, hi)?;
        let errors = sampler.sample(n);
        let moments = sampler.moments(n);
        let (out, record) = match &config.metric {
            Some(seq) => {
                let u = seq.metric(n);
                let out = metric_step_impl(a, b, &u, &x, gamma, &errors, n)?;
                let record = recorder.record(n, gamma, &x, &out, &errors, moments, Some((&u, seq.eta(n))))?;
                (out, record)
            }
            None => {
                let out = step_impl(a, b, &x, gamma, &errors, n)?;
                let record = recorder.record(n, gamma, &x, &out, &errors, moments, None)?;
                (out, record)
            }
        };
        recorder.guard(n + 1, &out.x_next)?;
        let done = record.res_primal <= config.stop_tol;
        records.push(record);
        x = out.x_next;
        if done {
            stopped_by_tolerance = true;
            break;
        }
    }

    let final_metric_dist = match (&config.metric, reference) {
        (Some(seq), Some(r)) => Some(inverse_metric_norm(&seq.metric(records.len()), &(&x - r))?),
        _ => None,
    };
    Ok(IterateTrace {
        final_dist_ref: reference.map(|r| x.dist(r)),
        final_metric_dist,
        final_x: x,
        records,
        beta,
        mu: config.mu(),
        alpha: config.alpha(),
        noisy: !config.noise.is_zero(),
        stopped_by_tolerance,
    })
}
