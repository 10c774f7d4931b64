//! Finite-dimensional Hilbert-space arithmetic.
//!
//! Vectors are dense `f64` arrays under the Euclidean inner product. A
//! [`Metric`] is a symmetric operator bounded below by `alpha * Id` and
//! induces the norms `sqrt(<Wx, x>)` and `sqrt(<W^{-1}x, x>)`. The product
//! space `H + G_1 + ... + G_m` used by the primal-dual solver is handled by
//! [`ProductPoint`], which flattens to a single [`Vector`].

use std::fmt;
use std::ops::{Add, Index, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry test of a metric.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Tolerance for spectral lower-bound checks.
pub const SPECTRAL_TOL: f64 = 1e-10;
/// Above this dimension metrics are validated by factorization instead of a
/// full eigendecomposition.
pub const EIGEN_DIM_LIMIT: usize = 512;
/// Condition estimate beyond which a metric counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Element of a finite-dimensional real Hilbert space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() || entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "Vector::new" });
        }
        Ok(Vector(entries))
    }

    /// Wraps raw entries without validation. Iterations use this for
    /// intermediate values and check finiteness explicitly.
    pub fn from_raw(entries: Vec<f64>) -> Self {
        Vector(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `||self - other||`
    pub fn dist(&self, other: &Vector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn scale(&self, s: f64) -> Vector {
        self.map(|v| s * v)
    }

    pub(crate) fn ensure_dim(&self, expected: usize, context: &'static str) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                context,
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }

    pub(crate) fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for &Vector {
    type Output = Vector;
    fn add(self, rhs: &Vector) -> Vector {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Vector {
    type Output = Vector;
    fn sub(self, rhs: &Vector) -> Vector {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<&Vector> for f64 {
    type Output = Vector;
    fn mul(self, rhs: &Vector) -> Vector {
        rhs.scale(self)
    }
}

impl Neg for &Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.map(|v| -v)
    }
}

impl fmt::Display for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Dense row-major matrix-vector product with a fixed summation order.
pub(crate) fn matvec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| {
            let mut acc = 0.0;
            for (j, xj) in x.iter().enumerate() {
                acc += m[(i, j)] * xj;
            }
            acc
        })
        .collect()
}

/// `m^T x`, summed in row order.
pub(crate) fn matvec_transpose(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..m.ncols())
        .map(|j| {
            let mut acc = 0.0;
            for (i, xi) in x.iter().enumerate() {
                acc += m[(i, j)] * xi;
            }
            acc
        })
        .collect()
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
enum Structure {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Dense,
}

/// Self-adjoint operator `W` with `W >= alpha * Id`, `alpha > 0`.
#[derive(Clone, Debug)]
pub struct Metric {
    matrix: DMatrix<f64>,
    alpha: f64,
    min_eig: f64,
    max_eig: f64,
    structure: Structure,
}

impl Metric {
    /// Validates symmetry and the spectral lower bound `alpha`.
    pub fn new(matrix: DMatrix<f64>, alpha: f64) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::InvalidMetric(format!(
                "matrix must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidMetric(format!("alpha must be positive, got {alpha}")));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMetric("non-finite entry".into()));
        }
        let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in (i + 1)..n {
                let gap = (matrix[(i, j)] - matrix[(j, i)]).abs();
                if gap > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidMetric(format!(
                        "not symmetric: |W[{i},{j}] - W[{j},{i}]| = {gap:.3e}"
                    )));
                }
            }
        }
        let matrix = (&matrix + matrix.transpose()) * 0.5;

        let off_diagonal_zero = (0..n).all(|i| (0..n).all(|j| i == j || matrix[(i, j)] == 0.0));
        let structure = if off_diagonal_zero {
            let d: Vec<f64> = (0..n).map(|i| matrix[(i, i)]).collect();
            if d.iter().all(|&v| v == d[0]) {
                Structure::Scalar(d[0])
            } else {
                Structure::Diagonal(d)
            }
        } else {
            Structure::Dense
        };

        let (min_eig, max_eig) = match &structure {
            Structure::Scalar(l) => (*l, *l),
            Structure::Diagonal(d) => (
                d.iter().cloned().fold(f64::INFINITY, f64::min),
                d.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ),
            Structure::Dense if n <= EIGEN_DIM_LIMIT => {
                let eig = matrix.clone().symmetric_eigen();
                (eig.eigenvalues.min(), eig.eigenvalues.max())
            }
            Structure::Dense => {
                let shifted = &matrix - DMatrix::identity(n, n) * (alpha - SPECTRAL_TOL * alpha.max(1.0));
                if shifted.cholesky().is_none() {
                    return Err(Error::InvalidMetric(format!(
                        "W - alpha*Id is not positive semidefinite (alpha = {alpha})"
                    )));
                }
                (alpha, power_iteration_max(&matrix))
            }
        };
        if min_eig < alpha - SPECTRAL_TOL * max_eig.abs().max(1.0) {
            return Err(Error::InvalidMetric(format!(
                "smallest eigenvalue {min_eig:.6e} is below alpha = {alpha}"
            )));
        }
        Ok(Metric {
            matrix,
            alpha,
            min_eig,
            max_eig,
            structure,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0).expect("identity is a valid metric")
    }

    pub fn scaled_identity(dim: usize, lambda: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * lambda, lambda)
    }

    /// Diagonal metric with `alpha` set to the smallest entry.
    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let alpha = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)), alpha)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Operator norm `||W||` (largest eigenvalue).
    pub fn operator_norm(&self) -> f64 {
        self.max_eig
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    /// `Some(lambda)` when `W = lambda * Id`.
    pub fn as_scalar(&self) -> Option<f64> {
        match self.structure {
            Structure::Scalar(l) => Some(l),
            _ => None,
        }
    }

    /// Diagonal entries when `W` is diagonal (including scalar multiples of
    /// the identity).
    pub fn as_diagonal(&self) -> Option<Vec<f64>> {
        match &self.structure {
            Structure::Scalar(l) => Some(vec![*l; self.dim()]),
            Structure::Diagonal(d) => Some(d.clone()),
            Structure::Dense => None,
        }
    }

    pub fn condition_estimate(&self) -> f64 {
        self.max_eig / self.min_eig
    }

    /// `W x`
    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        x.ensure_dim(self.dim(), "metric apply")?;
        Ok(self.apply_unchecked(x.as_slice()))
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64]) -> Vector {
        match &self.structure {
            Structure::Scalar(l) => Vector::from_raw(x.iter().map(|v| l * v).collect()),
            Structure::Diagonal(d) => Vector::from_raw(x.iter().zip(d).map(|(v, di)| di * v).collect()),
            Structure::Dense => Vector::from_raw(matvec(&self.matrix, x)),
        }
    }

    /// `<W x, x>`
    pub fn quadratic_form(&self, x: &Vector) -> Result<f64> {
        Ok(self.apply(x)?.dot(x))
    }

    /// Solves `W y = x`.
    pub fn solve(&self, x: &Vector) -> Result<Vector> {
        x.ensure_dim(self.dim(), "metric solve")?;
        let cond = self.condition_estimate();
        if !(cond.is_finite() && cond <= MAX_CONDITION) {
            return Err(Error::SingularMetric { condition: cond });
        }
        match &self.structure {
            Structure::Scalar(l) => Ok(x.map(|v| v / l)),
            Structure::Diagonal(d) => Ok(Vector::from_raw(x.iter().zip(d).map(|(v, di)| v / di).collect())),
            Structure::Dense => {
                let chol = self
                    .matrix
                    .clone()
                    .cholesky()
                    .ok_or(Error::SingularMetric { condition: cond })?;
                Ok(Vector::from_raw(chol.solve(&x.to_dvector()).as_slice().to_vec()))
            }
        }
    }
}

fn power_iteration_max(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    let mut v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w) / v.dot(&v);
        v = w / norm;
        if (next - lambda).abs() <= 1e-14 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

/// `||x||_W = sqrt(<W x, x>)`
pub fn metric_norm(w: &Metric, x: &Vector) -> Result<f64> {
    Ok(w.quadratic_form(x)?.max(0.0).sqrt())
}

/// `||x||_{W^{-1}} = sqrt(<W^{-1} x, x>)`, via a linear solve.
pub fn inverse_metric_norm(w: &Metric, x: &Vector) -> Result<f64> {
    Ok(w.solve(x)?.dot(x).max(0.0).sqrt())
}

type MetricGenerator = dyn Fn(usize) -> Metric + Send + Sync;
type EtaGenerator = dyn Fn(usize) -> f64 + Send + Sync;

/// Sequence `(U_n)` of metrics with `(1 + eta_n) U_{n+1} >= U_n >= alpha Id`
/// and `sup ||U_n|| <= mu`.
#[derive(Clone)]
pub struct MetricSequence {
    dim: usize,
    metrics: Arc<MetricGenerator>,
    eta: Arc<EtaGenerator>,
    eta_sum: f64,
    mu: f64,
    alpha: f64,
}

impl fmt::Debug for MetricSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricSequence")
            .field("dim", &self.dim)
            .field("eta_sum", &self.eta_sum)
            .field("mu", &self.mu)
            .field("alpha", &self.alpha)
            .finish_non_exhaustive()
    }
}

impl MetricSequence {
    /// `eta_sum` is the closed-form value (or an upper bound) of `sum eta_n`.
    pub fn new(
        dim: usize,
        alpha: f64,
        mu: f64,
        eta_sum: f64,
        metrics: impl Fn(usize) -> Metric + Send + Sync + 'static,
        eta: impl Fn(usize) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(alpha > 0.0 && mu >= alpha && mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "metric sequence needs 0 < alpha <= mu < inf (alpha = {alpha}, mu = {mu})"
            )));
        }
        if !(eta_sum >= 0.0 && eta_sum.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sum of eta must be finite and nonnegative, got {eta_sum}"
            )));
        }
        Ok(MetricSequence {
            dim,
            metrics: Arc::new(metrics),
            eta: Arc::new(eta),
            eta_sum,
            mu,
            alpha,
        })
    }

    /// `U_n = W` for every `n`.
    pub fn constant(w: Metric) -> Self {
        let dim = w.dim();
        let alpha = w.alpha();
        let mu = w.operator_norm();
        MetricSequence {
            dim,
            metrics: Arc::new(move |_| w.clone()),
            eta: Arc::new(|_| 0.0),
            eta_sum: 0.0,
            mu,
            alpha,
        }
    }

    pub fn metric(&self, n: usize) -> Metric {
        (self.metrics)(n)
    }

    pub fn eta(&self, n: usize) -> f64 {
        (self.eta)(n)
    }

    pub fn eta_sum(&self) -> f64 {
        self.eta_sum
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Worst sampled margins of the metric-sequence conditions at index `n`.
#[derive(Clone, Debug, Serialize)]
pub struct MetricStepCheck {
    pub n: usize,
    /// `min_x (1 + eta_n)<x, U_{n+1} x> - <x, U_n x>` over sampled unit `x`.
    pub growth_margin: f64,
    /// `min_x <x, U_n x> - alpha` over sampled unit `x`.
    pub lower_margin: f64,
    /// `mu - ||U_n||`
    pub norm_margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricSequenceReport {
    pub steps: Vec<MetricStepCheck>,
    pub eta_partial_sum: f64,
    pub worst_margin: f64,
    pub pass: bool,
}

/// Samples unit vectors and checks the growth, lower-bound and norm
/// conditions for `n < horizon`.
pub fn check_metric_sequence(
    seq: &MetricSequence,
    horizon: usize,
    samples: usize,
    rng_seed: u64,
) -> MetricSequenceReport {
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let dim = seq.dim();
    let probes: Vec<Vector> = (0..samples.max(1))
        .map(|_| {
            let v = Vector::from_raw((0..dim).map(|_| rng.sample(StandardNormal)).collect());
            let norm = v.norm();
            if norm > 0.0 {
                v.scale(1.0 / norm)
            } else {
                let mut e = vec![0.0; dim];
                e[0] = 1.0;
                Vector::from_raw(e)
            }
        })
        .collect();

    let mut steps = Vec::with_capacity(horizon);
    let mut eta_partial_sum = 0.0;
    let mut current = seq.metric(0);
    for n in 0..horizon {
        let next = seq.metric(n + 1);
        let eta = seq.eta(n);
        eta_partial_sum += eta;
        let mut growth = f64::INFINITY;
        let mut lower = f64::INFINITY;
        for x in &probes {
            let un = current.apply_unchecked(x.as_slice()).dot(x);
            let un1 = next.apply_unchecked(x.as_slice()).dot(x);
            growth = growth.min((1.0 + eta) * un1 - un);
            lower = lower.min(un - seq.alpha() * x.norm_sq());
        }
        steps.push(MetricStepCheck {
            n,
            growth_margin: growth,
            lower_margin: lower,
            norm_margin: seq.mu() - current.operator_norm(),
        });
        current = next;
    }
    let worst_margin = steps
        .iter()
        .flat_map(|s| [s.growth_margin, s.lower_margin, s.norm_margin])
        .fold(f64::INFINITY, f64::min);
    let pass = worst_margin >= -SPECTRAL_TOL && eta_partial_sum <= seq.eta_sum() + SPECTRAL_TOL;
    MetricSequenceReport {
        steps,
        eta_partial_sum,
        worst_margin,
        pass,
    }
}

/// Point `(x, v_1, ..., v_m)` of the product space `H + G_1 + ... + G_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductPoint {
    pub primal: Vector,
    pub duals: Vec<Vector>,
}

impl ProductPoint {
    pub fn norm_sq(&self) -> f64 {
        self.primal.norm_sq() + self.duals.iter().map(Vector::norm_sq).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Block dimensions `(dim H, [dim G_i])`.
    pub fn shape(&self) -> (usize, Vec<usize>) {
        (self.primal.dim(), self.duals.iter().map(Vector::dim).collect())
    }

    /// Concatenation `[x; v_1; ...; v_m]`.
    pub fn flatten(&self) -> Vector {
        let mut out = Vec::with_capacity(self.primal.dim() + self.duals.iter().map(Vector::dim).sum::<usize>());
        out.extend_from_slice(self.primal.as_slice());
        for v in &self.duals {
            out.extend_from_slice(v.as_slice());
        }
        Vector::from_raw(out)
    }

    /// Inverse of [`ProductPoint::flatten`].
    pub fn from_flat(flat: &Vector, primal_dim: usize, dual_dims: &[usize]) -> Result<Self> {
        let total = primal_dim + dual_dims.iter().sum::<usize>();
        flat.ensure_dim(total, "product point unflatten")?;
        let s = flat.as_slice();
        let primal = Vector::from_raw(s[..primal_dim].to_vec());
        let mut offset = primal_dim;
        let duals = dual_dims
            .iter()
            .map(|&d| {
                let v = Vector::from_raw(s[offset..offset + d].to_vec());
                offset += d;
                v
            })
            .collect();
        Ok(ProductPoint { primal, duals })
    }
}

pub fn pack(primal: Vector, duals: Vec<Vector>) -> ProductPoint {
    ProductPoint { primal, duals }
}

pub fn unpack(p: ProductPoint) -> (Vector, Vec<Vector>) {
    (p.primal, p.duals)
}

/// Bounded linear map `L: H -> G` with its operator norm.
#[derive(Clone, Debug)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
    norm: f64,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::InvalidParameter("linear map must be nonempty".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("linear map has non-finite entries".into()));
        }
        let norm = spectral_norm(&matrix);
        Ok(LinearMap { matrix, norm })
    }

    /// Row-major construction.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::InvalidParameter("ragged matrix rows".into()));
        }
        Self::new(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity map")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `||L||`
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn domain_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn range_dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `L x`
    pub fn apply(&self, x: &Vector) -> Vector {
        Vector::from_raw(matvec(&self.matrix, x.as_slice()))
    }

    /// `L^* v`
    pub fn adjoint(&self, v: &Vector) -> Vector {
        Vector::from_raw(matvec_transpose(&self.matrix, v.as_slice()))
    }
}
