//! Primal-dual composite inclusions, their convex-minimization special case
//! and monotone variational inequalities, all solved by the FBF iteration.
//!
//! The composite problem is to find `x` with
//!
//! ```text
//! z in A x + sum_i L_i^* ((B_i [] D_i)(L_i x - r_i)) + C x
//! ```
//!
//! together with dual variables `v_i`. It is lifted to the product space
//! `K = H x G_1 x ... x G_m`, where it becomes a two-operator inclusion with
//! a split resolvent and a monotone Lipschitz coupling operator.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fbf::{
    self, checked_gamma, correction, finite, forward_step, FbfConfig, IterateTrace, Recorder, StepOutput,
};
use crate::operators::{inverse_resolvent_unchecked, ConvexFn, ForwardOp, MonotoneOperator, Subdifferential, ZeroMap};
use crate::space::{LinearMap, ProductPoint, Vector};
use crate::stochastic::ErrorSampler;

/// One dual block `r_i + B_i^{-1}`, `D_i^{-1}` and `L_i`.
#[derive(Clone, Debug)]
pub struct DualBlock {
    pub r: Vector,
    /// `B_i`; only its inverse resolvent is ever evaluated.
    pub b: Arc<dyn MonotoneOperator>,
    /// `D_i^{-1}`, monotone and Lipschitz.
    pub dinv: Arc<dyn ForwardOp>,
    pub l: LinearMap,
}

impl DualBlock {
    pub fn new(r: Vector, b: Arc<dyn MonotoneOperator>, dinv: Arc<dyn ForwardOp>, l: LinearMap) -> Self {
        DualBlock { r, b, dinv, l }
    }

    pub fn dim(&self) -> usize {
        self.l.range_dim()
    }
}

#[derive(Clone, Debug)]
pub struct CompositeProblem {
    z: Vector,
    a: Arc<dyn MonotoneOperator>,
    c: Arc<dyn ForwardOp>,
    blocks: Vec<DualBlock>,
}

fn dim_check(expected: usize, found: Option<usize>, context: &'static str) -> Result<()> {
    match found {
        Some(f) if f != expected => Err(Error::DimensionMismatch {
            context,
            expected,
            found: f,
        }),
        _ => Ok(()),
    }
}

impl CompositeProblem {
    pub fn new(z: Vector, a: Arc<dyn MonotoneOperator>, c: Arc<dyn ForwardOp>, blocks: Vec<DualBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidParameter(
                "composite problem needs at least one dual block".into(),
            ));
        }
        let n = z.dim();
        dim_check(n, a.dim(), "composite A")?;
        dim_check(n, c.dim(), "composite C")?;
        for blk in &blocks {
            dim_check(n, Some(blk.l.domain_dim()), "composite L_i domain")?;
            let g = blk.dim();
            dim_check(g, Some(blk.r.dim()), "composite r_i")?;
            dim_check(g, blk.b.dim(), "composite B_i")?;
            dim_check(g, blk.dinv.dim(), "composite D_i^-1")?;
        }
        Ok(CompositeProblem { z, a, c, blocks })
    }

    pub fn primal_dim(&self) -> usize {
        self.z.dim()
    }

    pub fn dual_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(DualBlock::dim).collect()
    }

    /// `dim K`
    pub fn lifted_dim(&self) -> usize {
        self.primal_dim() + self.dual_dims().iter().sum::<usize>()
    }

    pub fn blocks(&self) -> &[DualBlock] {
        &self.blocks
    }

    /// `max(nu_0, ..., nu_m) + sqrt(sum ||L_i||^2)`.
    pub fn beta_bound(&self) -> f64 {
        let nu = self.blocks.iter().map(|b| b.dinv.beta()).fold(self.c.beta(), f64::max);
        let l_sq: f64 = self.blocks.iter().map(|b| b.l.norm().powi(2)).sum();
        nu + l_sq.sqrt()
    }

    /// Step-size constant used by the solvers: the bound itself, or 1 when
    /// every operator vanishes (any positive constant is then valid).
    fn solver_beta(&self) -> f64 {
        let b = self.beta_bound();
        if b > 0.0 {
            b
        } else {
            1.0
        }
    }

    fn split(&self, w: &Vector) -> (Vector, Vec<Vector>) {
        let p = ProductPoint::from_flat(w, self.primal_dim(), &self.dual_dims()).expect("lifted dimension checked");
        (p.primal, p.duals)
    }

    /// `C x + sum_i L_i^* v_i`
    fn primal_coupling(&self, x: &Vector, v: &[Vector]) -> Vector {
        let mut acc = self.c.apply(x);
        for (blk, vi) in self.blocks.iter().zip(v) {
            let lt = blk.l.adjoint(vi);
            acc = fbf::add(&acc, &lt);
        }
        acc
    }

    /// `J_{gamma A}(y + gamma z)`
    fn primal_resolvent(&self, gamma: f64, y: &Vector) -> Vector {
        let shifted = y.zip_map(&self.z, |yi, zi| yi + gamma * zi);
        self.a.apply_resolvent(gamma, &shifted)
    }

    /// `J_{gamma B_i^{-1}}(y - gamma r_i)`
    fn dual_resolvent(&self, i: usize, gamma: f64, y: &Vector) -> Vector {
        let blk = &self.blocks[i];
        let shifted = y.zip_map(&blk.r, |yi, ri| yi - gamma * ri);
        inverse_resolvent_unchecked(blk.b.as_ref(), gamma, &shifted)
    }

    /// Lifts to `(A_K, B_K)` on the product space.
    pub fn lift(&self) -> (LiftedResolvent, LiftedForward) {
        (
            LiftedResolvent { problem: self.clone() },
            LiftedForward {
                problem: self.clone(),
                beta: self.solver_beta(),
            },
        )
    }

    /// Distances certifying `(x, v)` as a zero of the lifted inclusion: the
    /// primal line `z - sum L_i^* v_i - C x in A x` and, per block,
    /// `L_i x - D_i^{-1} v_i - r_i in B_i^{-1} v_i`. `None` where the
    /// operator has no graph test.
    pub fn optimality_residuals(&self, x: &Vector, v: &[Vector]) -> Result<OptimalityResiduals> {
        x.ensure_dim(self.primal_dim(), "optimality residual (x)")?;
        if v.len() != self.blocks.len() {
            return Err(Error::DimensionMismatch {
                context: "optimality residual (blocks)",
                expected: self.blocks.len(),
                found: v.len(),
            });
        }
        let coupling = self.primal_coupling(x, v);
        let u = self.z.zip_map(&coupling, |zi, ci| zi - ci);
        // Inverse graphs are the stable side near kinks of f (and of
        // indicators and support functions in the dual blocks).
        let primal = match self.a.registered_inverse() {
            Some(inv) => inv.graph_distance(&u, x),
            None => self.a.graph_distance(x, &u),
        };
        let mut duals = Vec::with_capacity(v.len());
        for (blk, vi) in self.blocks.iter().zip(v) {
            vi.ensure_dim(blk.dim(), "optimality residual (v_i)")?;
            let lx = blk.l.apply(x);
            let dv = blk.dinv.apply(vi);
            let w = Vector::from_raw(
                lx.iter()
                    .zip(dv.iter())
                    .zip(blk.r.iter())
                    .map(|((&l, &d), &r)| l - d - r)
                    .collect(),
            );
            let d = match blk.b.registered_inverse() {
                Some(inv) => inv.graph_distance(vi, &w),
                None => blk.b.graph_distance(&w, vi),
            };
            duals.push(d);
        }
        Ok(OptimalityResiduals { primal, duals })
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct OptimalityResiduals {
    pub primal: Option<f64>,
    pub duals: Vec<Option<f64>>,
}

impl OptimalityResiduals {
    /// Largest available residual, `None` if any is unavailable.
    pub fn max(&self) -> Option<f64> {
        std::iter::once(self.primal)
            .chain(self.duals.iter().copied())
            .try_fold(0.0f64, |acc, d| d.map(|d| acc.max(d)))
    }
}

/// `(x, v) -> (-z + A x) x (r_i + B_i^{-1} v_i)_i` on the product space.
#[derive(Clone, Debug)]
pub struct LiftedResolvent {
    problem: CompositeProblem,
}

impl MonotoneOperator for LiftedResolvent {
    fn name(&self) -> &str {
        "lifted_resolvent"
    }

    fn dim(&self) -> Option<usize> {
        Some(self.problem.lifted_dim())
    }

    fn apply_resolvent(&self, gamma: f64, w: &Vector) -> Vector {
        let pb = &self.problem;
        let (x, v) = pb.split(w);
        let px = pb.primal_resolvent(gamma, &x);
        let pv = v
            .iter()
            .enumerate()
            .map(|(i, vi)| pb.dual_resolvent(i, gamma, vi))
            .collect();
        ProductPoint { primal: px, duals: pv }.flatten()
    }

    fn graph_distance(&self, p: &Vector, u: &Vector) -> Option<f64> {
        let pb = &self.problem;
        let (px, pv) = pb.split(p);
        let (ux, uv) = pb.split(u);
        let mut sq = pb.a.graph_distance(&px, &ux.zip_map(&pb.z, |a, b| a + b))?.powi(2);
        for ((blk, pi), ui) in pb.blocks.iter().zip(&pv).zip(&uv) {
            let w = ui.zip_map(&blk.r, |a, b| a - b);
            let d = match blk.b.registered_inverse() {
                Some(inv) => inv.graph_distance(pi, &w)?,
                None => blk.b.graph_distance(&w, pi)?,
            };
            sq += d * d;
        }
        Some(sq.sqrt())
    }
}

/// `(x, v) -> (C x + sum L_i^* v_i, (D_i^{-1} v_i - L_i x)_i)`.
#[derive(Clone, Debug)]
pub struct LiftedForward {
    problem: CompositeProblem,
    beta: f64,
}

impl ForwardOp for LiftedForward {
    fn name(&self) -> &str {
        "lifted_forward"
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn dim(&self) -> Option<usize> {
        Some(self.problem.lifted_dim())
    }

    fn apply(&self, w: &Vector) -> Vector {
        let pb = &self.problem;
        let (x, v) = pb.split(w);
        let primal = pb.primal_coupling(&x, &v);
        let duals = pb
            .blocks
            .iter()
            .zip(&v)
            .map(|(blk, vi)| {
                let dv = blk.dinv.apply(vi);
                let lx = blk.l.apply(&x);
                dv.zip_map(&lx, |d, l| d - l)
            })
            .collect();
        ProductPoint { primal, duals }.flatten()
    }
}

/// Primal and dual estimates with the trace on the product space.
#[derive(Clone, Debug)]
pub struct PrimalDualSolution {
    pub trace: IterateTrace,
    pub x: Vector,
    pub v: Vec<Vector>,
}

/// `v + gamma * (t + e)`, entrywise.
fn ascent_step(v: &Vector, t: &Vector, e: &[f64], gamma: f64) -> Vector {
    Vector::from_raw(
        v.iter()
            .zip(t.iter())
            .zip(e)
            .map(|((&vi, &ti), &ei)| vi + gamma * (ti + ei))
            .collect(),
    )
}

/// `L_i x - D_i^{-1} v_i`
fn dual_coupling(blk: &DualBlock, x: &Vector, v: &Vector) -> Vector {
    let lx = blk.l.apply(x);
    let dv = blk.dinv.apply(v);
    lx.zip_map(&dv, |l, d| l - d)
}

/// Runs the primal-dual iteration directly on the primal and dual variables.
///
/// Errors are drawn on the product space; the dual components of `a` and `c`
/// enter with the sign of the dual ascent, so a trajectory coincides bit for
/// bit with [`fbf::run`] on [`CompositeProblem::lift`] for the same seed.
pub fn solve_primal_dual(
    problem: &CompositeProblem,
    config: &FbfConfig,
    x0: &Vector,
    v0: &[Vector],
    reference: Option<&ProductPoint>,
) -> Result<PrimalDualSolution> {
    if config.metric.is_some() {
        return Err(Error::Unsupported("variable metrics in the primal-dual solver".into()));
    }
    let beta = problem.solver_beta();
    let (lo, hi) = config.validate(beta)?;
    x0.ensure_dim(problem.primal_dim(), "primal start")?;
    if v0.len() != problem.blocks.len() {
        return Err(Error::DimensionMismatch {
            context: "dual start (blocks)",
            expected: problem.blocks.len(),
            found: v0.len(),
        });
    }
    for (blk, vi) in problem.blocks.iter().zip(v0) {
        vi.ensure_dim(blk.dim(), "dual start")?;
    }
    let start = ProductPoint {
        primal: x0.clone(),
        duals: v0.to_vec(),
    }
    .flatten();
    if !start.is_finite() {
        return Err(Error::NonFinite { what: "start point" });
    }
    let reference = match reference {
        Some(r) => {
            let flat = r.flatten();
            flat.ensure_dim(start.dim(), "reference point")?;
            Some(flat)
        }
        None => None,
    };

    let primal_dim = problem.primal_dim();
    let dual_dims = problem.dual_dims();
    let mut sampler = ErrorSampler::new(config.noise, start.dim(), config.seed);
    let recorder = Recorder::new(&start, reference.as_ref(), config.keep_iterates);
    let mut records = Vec::with_capacity(config.max_iters.min(1 << 16));
    let mut x = x0.clone();
    let mut v = v0.to_vec();
    let mut stopped_by_tolerance = false;

    // Split a product-space vector into its primal block and dual blocks.
    let blocks_of = |e: &Vector| ProductPoint::from_flat(e, primal_dim, &dual_dims).expect("sampler dimension");

    for n in 0..config.max_iters {
        let gamma = checked_gamma(&config.step, n, lo, hi)?;
        let errors = sampler.sample(n);
        let moments = sampler.moments(n);
        let ea = blocks_of(&errors.a);
        let eb = blocks_of(&errors.b);
        let ec = blocks_of(&errors.c);

        let y1 = forward_step(&x, &problem.primal_coupling(&x, &v), &ea.primal, gamma);
        let p1 = fbf::add(&problem.primal_resolvent(gamma, &y1), &eb.primal);

        let mut y2 = Vec::with_capacity(v.len());
        let mut p2 = Vec::with_capacity(v.len());
        for (i, blk) in problem.blocks.iter().enumerate() {
            let a2: Vec<f64> = ea.duals[i].iter().map(|e| -e).collect();
            let y = ascent_step(&v[i], &dual_coupling(blk, &x, &v[i]), &a2, gamma);
            p2.push(fbf::add(&problem.dual_resolvent(i, gamma, &y), &eb.duals[i]));
            y2.push(y);
        }
        let mut q2 = Vec::with_capacity(v.len());
        for (i, blk) in problem.blocks.iter().enumerate() {
            let c2: Vec<f64> = ec.duals[i].iter().map(|e| -e).collect();
            q2.push(ascent_step(&p2[i], &dual_coupling(blk, &p1, &p2[i]), &c2, gamma));
        }
        let q1 = forward_step(&p1, &problem.primal_coupling(&p1, &p2), &ec.primal, gamma);

        let x_next = correction(&x, &y1, &q1);
        let v_next: Vec<Vector> = v
            .iter()
            .zip(&y2)
            .zip(&q2)
            .map(|((vi, yi), qi)| correction(vi, yi, qi))
            .collect();

        let flat = |primal: Vector, duals: Vec<Vector>| ProductPoint { primal, duals }.flatten();
        let w = flat(x.clone(), v.clone());
        let out = StepOutput {
            y: finite(flat(y1, y2), "forward", n)?,
            p: finite(flat(p1, p2), "resolvent", n)?,
            q: finite(flat(q1, q2), "second forward", n)?,
            x_next: finite(flat(x_next.clone(), v_next.clone()), "correction", n)?,
        };
        let record = recorder.record(n, gamma, &w, &out, &errors, moments, None)?;
        recorder.guard(n + 1, &out.x_next)?;
        let done = record.res_primal <= config.stop_tol;
        records.push(record);
        x = x_next;
        v = v_next;
        if done {
            stopped_by_tolerance = true;
            break;
        }
    }

    let final_flat = ProductPoint {
        primal: x.clone(),
        duals: v.clone(),
    }
    .flatten();
    let trace = IterateTrace {
        final_dist_ref: reference.as_ref().map(|r| final_flat.dist(r)),
        final_metric_dist: None,
        final_x: final_flat,
        records,
        beta,
        mu: 1.0,
        alpha: 1.0,
        noisy: !config.noise.is_zero(),
        stopped_by_tolerance,
    };
    Ok(PrimalDualSolution { trace, x, v })
}

/// One dual block of the convex problem: `g_i`, `L_i`, `r_i` and the
/// gradient of `l_i^*` (absent means `l_i` is the indicator of `{0}`).
#[derive(Clone, Debug)]
pub struct ConvexBlock {
    pub r: Vector,
    pub g: Arc<dyn ConvexFn>,
    pub lstar_grad: Option<Arc<dyn ForwardOp>>,
    pub l: LinearMap,
}

impl ConvexBlock {
    pub fn new(r: Vector, g: Arc<dyn ConvexFn>, l: LinearMap) -> Self {
        ConvexBlock {
            r,
            g,
            lstar_grad: None,
            l,
        }
    }

    pub fn with_smoothing(mut self, lstar_grad: Arc<dyn ForwardOp>) -> Self {
        self.lstar_grad = Some(lstar_grad);
        self
    }
}

/// `minimize f(x) - <x, z> + sum_i (g_i [] l_i)(L_i x - r_i) + h(x)`.
#[derive(Clone, Debug)]
pub struct ConvexProblem {
    pub z: Vector,
    pub f: Arc<dyn ConvexFn>,
    pub h_grad: Arc<dyn ForwardOp>,
    /// Value of `h`, when known; only used for objective reporting.
    pub h_value: Option<Arc<dyn ConvexFn>>,
    pub blocks: Vec<ConvexBlock>,
}

impl ConvexProblem {
    pub fn new(z: Vector, f: Arc<dyn ConvexFn>, h_grad: Arc<dyn ForwardOp>, blocks: Vec<ConvexBlock>) -> Self {
        ConvexProblem {
            z,
            f,
            h_grad,
            h_value: None,
            blocks,
        }
    }

    pub fn with_h_value(mut self, h: Arc<dyn ConvexFn>) -> Self {
        self.h_value = Some(h);
        self
    }

    /// The composite inclusion given by the optimality conditions.
    pub fn to_composite(&self) -> Result<CompositeProblem> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| DualBlock {
                r: b.r.clone(),
                b: Subdifferential::of(b.g.clone()),
                dinv: b.lstar_grad.clone().unwrap_or_else(|| Arc::new(ZeroMap)),
                l: b.l.clone(),
            })
            .collect();
        CompositeProblem::new(
            self.z.clone(),
            Subdifferential::of(self.f.clone()),
            self.h_grad.clone(),
            blocks,
        )
    }

    /// Primal objective; `None` when a term has no value available
    /// (unknown `h`, or a smoothed block whose infimal convolution is not
    /// evaluated).
    pub fn objective(&self, x: &Vector) -> Option<f64> {
        let mut total = self.f.value(x)? - x.dot(&self.z);
        for b in &self.blocks {
            if b.lstar_grad.is_some() {
                return None;
            }
            let arg = b.l.apply(x).zip_map(&b.r, |a, r| a - r);
            total += b.g.value(&arg)?;
        }
        Some(total + self.h_value.as_ref()?.value(x)?)
    }
}

/// Runs the primal-dual iteration on the optimality system of `problem`:
/// prox of `f`, gradient steps on `h`, prox of `g_i^*` through the Moreau
/// identity and gradient steps on `l_i^*`.
pub fn solve_convex(
    problem: &ConvexProblem,
    config: &FbfConfig,
    x0: &Vector,
    v0: &[Vector],
    reference: Option<&ProductPoint>,
) -> Result<PrimalDualSolution> {
    solve_primal_dual(&problem.to_composite()?, config, x0, v0, reference)
}

/// Solves `<x - y, B x> + f(x) <= f(y)` for all `y` by FBF with `A = df`.
pub fn solve_variational_inequality(
    f: Arc<dyn ConvexFn>,
    b: &dyn ForwardOp,
    beta: f64,
    config: &FbfConfig,
    x0: &Vector,
    reference: Option<&Vector>,
) -> Result<IterateTrace> {
    let a = Subdifferential::of(f);
    fbf::run(a.as_ref(), b, beta, config, x0, reference)
}

/// `max_y <x - y, B x> + f(x) - f(y)` over the given test points; a solution
/// has a nonpositive gap. `None` if `f` has no value.
pub fn vi_gap(f: &dyn ConvexFn, b: &dyn ForwardOp, x: &Vector, ys: &[Vector]) -> Option<f64> {
    let bx = b.apply(x);
    let fx = f.value(x)?;
    let mut worst = f64::NEG_INFINITY;
    for y in ys {
        let fy = f.value(y)?;
        worst = worst.max((x - y).dot(&bx) + fx - fy);
    }
    Some(worst)
}

/// Fresh start for the duals: zeros in every `G_i`.
pub fn zero_duals(problem: &CompositeProblem) -> Vec<Vector> {
    problem.dual_dims().into_iter().map(Vector::zeros).collect()
}

/// Result of [`solve_primal_dual`] replayed through the lift, for
/// cross-checking: [`fbf::run`] on `(A_K, B_K)` from the packed start.
pub fn solve_lifted(
    problem: &CompositeProblem,
    config: &FbfConfig,
    x0: &Vector,
    v0: &[Vector],
    reference: Option<&ProductPoint>,
) -> Result<IterateTrace> {
    let (a, b) = problem.lift();
    let start = ProductPoint {
        primal: x0.clone(),
        duals: v0.to_vec(),
    }
    .flatten();
    let reference = reference.map(ProductPoint::flatten);
    fbf::run(&a, &b, b.beta(), config, &start, reference.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{
        certify_with_beta, Affine, BoxIndicator, IndicatorZero, L1Norm, Quadratic, ScaledIdentityMap, ZeroFn,
    };
    use crate::stochastic::{NoiseKind, NoiseTriple};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::new(xs.to_vec()).unwrap()
    }

    fn l1(w: f64) -> Arc<dyn ConvexFn> {
        Arc::new(L1Norm::new(w))
    }

    fn scalar_map(s: f64) -> LinearMap {
        LinearMap::new(DMatrix::from_element(1, 1, s)).unwrap()
    }

    fn zero_problem(n: usize, g: usize, l: LinearMap) -> CompositeProblem {
        // B = N_{0}, so that B^{-1} = 0 as well
        let blk = DualBlock::new(
            Vector::zeros(g),
            Subdifferential::of(Arc::new(IndicatorZero)),
            Arc::new(ZeroMap),
            l,
        );
        CompositeProblem::new(
            Vector::zeros(n),
            Subdifferential::of(Arc::new(ZeroFn)),
            Arc::new(ZeroMap),
            vec![blk],
        )
        .unwrap()
    }

    #[test]
    fn beta_bound_examples() {
        let blk = |nu: f64, norm: f64| {
            DualBlock::new(
                v(&[0.0]),
                Subdifferential::of(Arc::new(ZeroFn)),
                Arc::new(ScaledIdentityMap::new(nu).unwrap()),
                scalar_map(norm),
            )
        };
        let zero_a = || Subdifferential::of(Arc::new(ZeroFn));
        let p = CompositeProblem::new(
            v(&[0.0]),
            zero_a(),
            Arc::new(ScaledIdentityMap::new(1.0).unwrap()),
            vec![blk(2.0, 3.0)],
        )
        .unwrap();
        assert_abs_diff_eq!(p.beta_bound(), 5.0, epsilon = 1e-12);
        let p = CompositeProblem::new(v(&[0.0]), zero_a(), Arc::new(ZeroMap), vec![blk(0.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(p.beta_bound(), 1.0, epsilon = 1e-12);
        let p = CompositeProblem::new(
            v(&[0.0]),
            zero_a(),
            Arc::new(ScaledIdentityMap::new(0.5).unwrap()),
            vec![blk(0.0, 3.0), blk(0.5, 4.0)],
        )
        .unwrap();
        assert_abs_diff_eq!(p.beta_bound(), 5.5, epsilon = 1e-12);
    }

    #[test]
    fn canonical_skew_lift() {
        let p = zero_problem(1, 1, LinearMap::identity(1));
        let (_, b) = p.lift();
        assert_eq!(b.apply(&v(&[2.0, 3.0])), v(&[3.0, -2.0]));
    }

    #[test]
    fn coupling_is_skew_and_bounded() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let l1m = LinearMap::new(DMatrix::from_fn(2, 3, |_, _| rng.random_range(-2.0..2.0))).unwrap();
        let l2m = LinearMap::new(DMatrix::from_fn(4, 3, |_, _| rng.random_range(-2.0..2.0))).unwrap();
        let zero_blk = |l: LinearMap| {
            DualBlock::new(
                Vector::zeros(l.range_dim()),
                Subdifferential::of(Arc::new(ZeroFn)),
                Arc::new(ZeroMap),
                l,
            )
        };
        let p = CompositeProblem::new(
            Vector::zeros(3),
            Subdifferential::of(Arc::new(ZeroFn)),
            Arc::new(ZeroMap),
            vec![zero_blk(l1m.clone()), zero_blk(l2m.clone())],
        )
        .unwrap();
        let (_, b) = p.lift();
        for _ in 0..200 {
            let u = Vector::from_raw((0..9).map(|_| rng.random_range(-10.0..10.0)).collect());
            assert!(u.dot(&b.apply(&u)).abs() <= 1e-12 * (1.0 + u.norm_sq()));
        }

        // With monotone C and D^-1 the bound still dominates.
        let blk = DualBlock::new(
            Vector::zeros(2),
            Subdifferential::of(Arc::new(ZeroFn)),
            Arc::new(ScaledIdentityMap::new(0.7).unwrap()),
            l1m,
        );
        let p = CompositeProblem::new(
            Vector::zeros(3),
            Subdifferential::of(Arc::new(ZeroFn)),
            Arc::new(ScaledIdentityMap::new(0.3).unwrap()),
            vec![blk, zero_blk(l2m)],
        )
        .unwrap();
        let (_, b) = p.lift();
        let report = certify_with_beta(&b, p.beta_bound(), 9, 500, 1);
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn lifted_resolvent_splits() {
        let blk = DualBlock::new(
            v(&[0.0]),
            Subdifferential::of(l1(1.0)),
            Arc::new(ZeroMap),
            LinearMap::identity(1),
        );
        let p = CompositeProblem::new(v(&[1.0]), Subdifferential::of(l1(1.0)), Arc::new(ZeroMap), vec![blk]).unwrap();
        let (a, _) = p.lift();
        let out = a.apply_resolvent(1.0, &v(&[2.0, 0.5]));
        assert_eq!(out[0], 2.0);
        // J_{B^-1} for B = d|.| is the projection onto [-1, 1]
        assert_eq!(out[1], 0.5);
        let out = a.apply_resolvent(1.0, &v(&[2.0, -3.0]));
        assert_eq!(out[1], -1.0);
    }

    fn toy_convex() -> ConvexProblem {
        // minimize |x| + |x| + 1/2 (x - 1)^2
        ConvexProblem::new(
            v(&[0.0]),
            l1(1.0),
            Arc::new(Affine::quadratic_gradient(&v(&[1.0]))),
            vec![ConvexBlock::new(v(&[0.0]), l1(1.0), LinearMap::identity(1))],
        )
        .with_h_value(Arc::new(Quadratic::new(v(&[1.0]))))
    }

    #[test]
    fn toy_convex_problem_reaches_zero() {
        let pb = toy_convex();
        let cfg = FbfConfig::new(0.05, 20_000).with_stop_tol(1e-12);
        let sol = solve_convex(&pb, &cfg, &v(&[3.0]), &[v(&[0.0])], None).unwrap();
        assert!(sol.x[0].abs() <= 1e-5, "x = {}", sol.x[0]);
        let res = pb.to_composite().unwrap().optimality_residuals(&sol.x, &sol.v).unwrap();
        assert!(res.max().unwrap() <= 1e-4, "{res:?}");
        assert!(pb.objective(&sol.x).unwrap() <= 0.5 + 1e-8);
    }

    #[test]
    fn composite_example_with_explicit_operators() {
        // A = d|.|, C = x - 1, B_1 = d|.|, D^-1 = 0, L = Id
        let blk = DualBlock::new(
            v(&[0.0]),
            Subdifferential::of(l1(1.0)),
            Arc::new(ZeroMap),
            LinearMap::identity(1),
        );
        let p = CompositeProblem::new(
            v(&[0.0]),
            Subdifferential::of(l1(1.0)),
            Arc::new(Affine::quadratic_gradient(&v(&[1.0]))),
            vec![blk],
        )
        .unwrap();
        let cfg = FbfConfig::new(0.05, 20_000).with_stop_tol(1e-12);
        let sol = solve_primal_dual(&p, &cfg, &v(&[-2.0]), &[v(&[0.5])], None).unwrap();
        assert!(sol.x[0].abs() <= 1e-5);
    }

    #[test]
    fn unconstrained_quadratic() {
        let c = v(&[1.5, -0.5]);
        let pb = ConvexProblem::new(
            Vector::zeros(2),
            Arc::new(ZeroFn),
            Arc::new(Affine::quadratic_gradient(&c)),
            vec![ConvexBlock::new(
                Vector::zeros(2),
                Arc::new(ZeroFn),
                LinearMap::identity(2),
            )],
        );
        let cfg = FbfConfig::new(0.05, 5000).with_stop_tol(1e-13);
        let sol = solve_convex(&pb, &cfg, &Vector::zeros(2), &[Vector::zeros(2)], None).unwrap();
        assert!(sol.x.dist(&c) <= 1e-8);
    }

    #[test]
    fn all_zero_problem_is_fixed() {
        let p = zero_problem(2, 2, LinearMap::new(DMatrix::zeros(2, 2)).unwrap());
        let cfg = FbfConfig::new(0.1, 10);
        let x0 = v(&[1.0, -2.0]);
        let v0 = vec![v(&[0.5, 0.25])];
        let sol = solve_primal_dual(&p, &cfg, &x0, &v0, None).unwrap();
        assert_eq!(sol.x, x0);
        assert_eq!(sol.v, v0);
        assert!(sol.trace.records.iter().all(|r| r.res_primal == 0.0 && r.res_yq == 0.0));
    }

    #[test]
    fn explicit_loop_matches_lift_bitwise() {
        let blk = DualBlock::new(
            v(&[0.3, -0.1]),
            Subdifferential::of(Arc::new(BoxIndicator::new(-0.5, 1.0).unwrap())),
            Arc::new(ScaledIdentityMap::new(0.4).unwrap()),
            LinearMap::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.3]]).unwrap(),
        );
        let p = CompositeProblem::new(
            v(&[0.2, 0.1]),
            Subdifferential::of(l1(0.7)),
            Arc::new(Affine::skew_rotation(2, 0.5).unwrap()),
            vec![blk],
        )
        .unwrap();
        let noise = NoiseTriple::uniform(NoiseKind::GaussianGeometric { sigma: 0.3, rho: 0.9 });
        let cfg = FbfConfig::new(0.05, 200).with_noise(noise, 9);
        let x0 = v(&[1.0, -1.0]);
        let v0 = vec![v(&[0.0, 0.2])];
        let a = solve_primal_dual(&p, &cfg, &x0, &v0, None).unwrap().trace;
        let b = solve_lifted(&p, &cfg, &x0, &v0, None).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        let bits = |t: &IterateTrace| t.final_x.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn metric_is_rejected() {
        let p = zero_problem(1, 1, LinearMap::identity(1));
        let cfg = FbfConfig::new(0.1, 10).with_metric(crate::space::MetricSequence::constant(
            crate::space::Metric::identity(2),
        ));
        assert!(matches!(
            solve_primal_dual(&p, &cfg, &v(&[1.0]), &[v(&[0.0])], None),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn vi_examples() {
        let zero = Vector::zeros(2);
        let boxf: Arc<dyn ConvexFn> = Arc::new(BoxIndicator::new(-1.0, 1.0).unwrap());
        let rot = Affine::skew_rotation(2, 1.0).unwrap();
        let cfg = FbfConfig::new(0.1, 1000).with_stop_tol(1e-13);
        let tr = solve_variational_inequality(boxf.clone(), &rot, 1.0, &cfg, &v(&[1.0, 0.0]), Some(&zero)).unwrap();
        assert!(tr.final_x.norm() <= 1e-6);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let ys: Vec<Vector> = (0..1000)
            .map(|_| v(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]))
            .collect();
        assert!(vi_gap(boxf.as_ref(), &rot, &tr.final_x, &ys).unwrap() <= 1e-8);

        // f = 0, B = x - c
        let c = v(&[0.5, -2.0]);
        let bq = Affine::quadratic_gradient(&c);
        let tr = solve_variational_inequality(Arc::new(ZeroFn), &bq, 1.0, &cfg, &zero, None).unwrap();
        assert!(tr.final_x.dist(&c) <= 1e-8);

        // B = 0, f = |.|
        let tr = solve_variational_inequality(l1(1.0), &ZeroMap, 1.0, &cfg, &v(&[3.0, -0.2]), None).unwrap();
        assert_eq!(tr.final_x, zero);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let blk = DualBlock::new(
            v(&[0.0, 0.0]),
            Subdifferential::of(l1(1.0)),
            Arc::new(ZeroMap),
            LinearMap::identity(1),
        );
        assert!(matches!(
            CompositeProblem::new(v(&[0.0]), Subdifferential::of(l1(1.0)), Arc::new(ZeroMap), vec![blk]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(CompositeProblem::new(v(&[0.0]), Subdifferential::of(l1(1.0)), Arc::new(ZeroMap), vec![]).is_err());
    }
}
