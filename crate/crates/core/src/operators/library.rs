//! Closed-form operators used by test problems and the CLI registry.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{ConvexFn, ForwardOp, MonotoneOperator};
use crate::error::{Error, Result};
use crate::space::{matvec, spectral_norm, Vector};

/// `sign(x) * max(|x| - t, 0)`
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn per_coordinate(x: &Vector, steps: &[f64], f: impl Fn(f64, f64) -> f64) -> Option<Vector> {
    if steps.len() != x.dim() {
        return None;
    }
    Some(Vector::from_raw(
        x.iter().zip(steps).map(|(&xi, &g)| f(xi, g)).collect(),
    ))
}

fn sum_sq(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|v| v * v).sum::<f64>().sqrt()
}

/// `f = 0`
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroFn;

impl ConvexFn for ZeroFn {
    fn name(&self) -> &str {
        "zero"
    }

    fn value(&self, _x: &Vector) -> Option<f64> {
        Some(0.0)
    }

    fn prox(&self, _gamma: f64, x: &Vector) -> Vector {
        x.clone()
    }

    fn separable_prox(&self, steps: &[f64], x: &Vector) -> Option<Vector> {
        per_coordinate(x, steps, |xi, _| xi)
    }

    fn subgradient_distance(&self, _p: &Vector, u: &Vector) -> Option<f64> {
        Some(u.norm())
    }

    fn conjugate(&self) -> Option<Arc<dyn ConvexFn>> {
        Some(Arc::new(IndicatorZero))
    }
}

/// Indicator of `{0}`. Its prox is the zero map and its conjugate is `0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct IndicatorZero;

impl ConvexFn for IndicatorZero {
    fn name(&self) -> &str {
        "indicator_zero"
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        Some(if x.iter().all(|&v| v == 0.0) {
            0.0
        } else {
            f64::INFINITY
        })
    }

    fn prox(&self, _gamma: f64, x: &Vector) -> Vector {
        Vector::zeros(x.dim())
    }

    fn separable_prox(&self, steps: &[f64], x: &Vector) -> Option<Vector> {
        per_coordinate(x, steps, |_, _| 0.0)
    }

    fn subgradient_distance(&self, p: &Vector, _u: &Vector) -> Option<f64> {
        Some(if p.iter().all(|&v| v == 0.0) {
            0.0
        } else {
            f64::INFINITY
        })
    }

    fn conjugate(&self) -> Option<Arc<dyn ConvexFn>> {
        Some(Arc::new(ZeroFn))
    }
}

/// `f = (c/2) ||x||^2`, `c >= 0`. Its subdifferential is `c * Id`.
#[derive(Clone, Copy, Debug)]
pub struct ScaledSquaredNorm {
    c: f64,
}

impl ScaledSquaredNorm {
    pub fn new(c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale must be >= 0, got {c}")));
        }
        Ok(ScaledSquaredNorm { c })
    }
}

impl ConvexFn for ScaledSquaredNorm {
    fn name(&self) -> &str {
        "scaled_identity"
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        Some(0.5 * self.c * x.norm_sq())
    }

    fn prox(&self, gamma: f64, x: &Vector) -> Vector {
        x.map(|v| v / (1.0 + gamma * self.c))
    }

    fn separable_prox(&self, steps: &[f64], x: &Vector) -> Option<Vector> {
        per_coordinate(x, steps, |xi, g| xi / (1.0 + g * self.c))
    }

    fn subgradient_distance(&self, p: &Vector, u: &Vector) -> Option<f64> {
        Some(sum_sq(p.iter().zip(u.iter()).map(|(pi, ui)| ui - self.c * pi)))
    }

    fn conjugate(&self) -> Option<Arc<dyn ConvexFn>> {
        if self.c > 0.0 {
            Some(Arc::new(ScaledSquaredNorm { c: 1.0 / self.c }))
        } else {
            Some(Arc::new(IndicatorZero))
        }
    }
}

/// `f = w ||x||_1`; the resolvent of `df` is soft thresholding.
#[derive(Clone, Copy, Debug)]
pub struct L1Norm {
    weight: f64,
}

impl L1Norm {
    pub fn new(weight: f64) -> Self {
        assert!(weight >= 0.0 && weight.is_finite(), "l1 weight must be >= 0");
        L1Norm { weight }
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

/// `dist(u, w * d|p|)` for a scalar coordinate.
fn l1_subgradient_gap(p: f64, u: f64, w: f64) -> f64 {
    if p > 0.0 {
        u - w
    } else if p < 0.0 {
        u + w
    } else {
        (u.abs() - w).max(0.0)
    }
}

impl ConvexFn for L1Norm {
    fn name(&self) -> &str {
        "l1"
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        Some(self.weight * x.iter().map(|v| v.abs()).sum::<f64>())
    }

    fn prox(&self, gamma: f64, x: &Vector) -> Vector {
        let t = gamma * self.weight;
        x.map(|v| soft_threshold(v, t))
    }

    fn separable_prox(&self, steps: &[f64], x: &Vector) -> Option<Vector> {
        per_coordinate(x, steps, |xi, g| soft_threshold(xi, g * self.weight))
    }

    fn subgradient_distance(&self, p: &Vector, u: &Vector) -> Option<f64> {
        Some(sum_sq(
            p.iter()
                .zip(u.iter())
                .map(|(&pi, &ui)| l1_subgradient_gap(pi, ui, self.weight)),
        ))
    }

    fn conjugate(&self) -> Option<Arc<dyn ConvexFn>> {
        Some(Arc::new(BoxIndicator {
            lo: -self.weight,
            hi: self.weight,
        }))
    }
}

/// Indicator of the box `[lo, hi]^d`. Its subdifferential is the normal cone
/// and its resolvent the projection.
#[derive(Clone, Copy, Debug)]
pub struct BoxIndicator {
    lo: f64,
    hi: f64,
}

impl BoxIndicator {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "box needs finite lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(BoxIndicator { lo, hi })
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

impl ConvexFn for BoxIndicator {
    fn name(&self) -> &str {
        "box_projection"
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        let inside = x.iter().all(|&v| v >= self.lo && v <= self.hi);
        Some(if inside { 0.0 } else { f64::INFINITY })
    }

    fn prox(&self, _gamma: f64, x: &Vector) -> Vector {
        x.map(|v| v.clamp(self.lo, self.hi))
    }

    fn separable_prox(&self, steps: &[f64], x: &Vector) -> Option<Vector> {
        per_coordinate(x, steps, |xi, _| xi.clamp(self.lo, self.hi))
    }

    fn subgradient_distance(&self, p: &Vector, u: &Vector) -> Option<f64> {
        let mut acc = 0.0;
        for (&pi, &ui) in p.iter().zip(u.iter()) {
            if pi < self.lo || pi > self.hi {
                return Some(f64::INFINITY);
            }
            let gap = if self.lo == self.hi {
                0.0
            } else if pi == self.hi {
                (-ui).max(0.0)
            } else if pi == self.lo {
                ui.max(0.0)
            } else {
                ui.abs()
            };
            acc += gap * gap;
        }
        Some(acc.sqrt())
    }

    fn conjugate(&self) -> Option<Arc<dyn ConvexFn>> {
        Some(Arc::new(BoxSupport {
            lo: self.lo,
            hi: self.hi,
        }))
    }
}

/// Support function of `[lo, hi]^d`: `sum max(lo*y, hi*y)`.
#[derive(Clone, Copy, Debug)]
pub struct BoxSupport {
    lo: f64,
    hi: f64,
}

impl BoxSupport {
    /// `y - g * clamp(y / g)`, with an exact zero inside the scaled box.
    fn prox_scalar(&self, y: f64, g: f64) -> f64 {
        if y > g * self.hi {
            y - g * self.hi
        } else if y < g * self.lo {
            y - g * self.lo
        } else {
            0.0
        }
    }
}

impl ConvexFn for BoxSupport {
    fn name(&self) -> &str {
        "box_support"
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        Some(x.iter().map(|&y| (self.lo * y).max(self.hi * y)).sum())
    }

    fn prox(&self, gamma: f64, x: &Vector) -> Vector {
        x.map(|y| self.prox_scalar(y, gamma))
    }

    fn separable_prox(&self, steps: &[f64], x: &Vector) -> Option<Vector> {
        per_coordinate(x, steps, |y, g| self.prox_scalar(y, g))
    }

    fn subgradient_distance(&self, p: &Vector, u: &Vector) -> Option<f64> {
        Some(sum_sq(p.iter().zip(u.iter()).map(|(&y, &ui)| {
            if y > 0.0 {
                ui - self.hi
            } else if y < 0.0 {
                ui - self.lo
            } else if ui > self.hi {
                ui - self.hi
            } else if ui < self.lo {
                self.lo - ui
            } else {
                0.0
            }
        })))
    }

    fn conjugate(&self) -> Option<Arc<dyn ConvexFn>> {
        Some(Arc::new(BoxIndicator {
            lo: self.lo,
            hi: self.hi,
        }))
    }
}

/// `f = 1/2 ||x - c||^2`
#[derive(Clone, Debug)]
pub struct Quadratic {
    center: Vector,
}

impl Quadratic {
    pub fn new(center: Vector) -> Self {
        Quadratic { center }
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }
}

impl ConvexFn for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> Option<usize> {
        Some(self.center.dim())
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        Some(0.5 * x.dist(&self.center).powi(2))
    }

    fn prox(&self, gamma: f64, x: &Vector) -> Vector {
        x.zip_map(&self.center, |xi, ci| (xi + gamma * ci) / (1.0 + gamma))
    }

    fn separable_prox(&self, steps: &[f64], x: &Vector) -> Option<Vector> {
        if steps.len() != x.dim() || x.dim() != self.center.dim() {
            return None;
        }
        Some(Vector::from_raw(
            x.iter()
                .zip(steps)
                .zip(self.center.iter())
                .map(|((&xi, &g), &ci)| (xi + g * ci) / (1.0 + g))
                .collect(),
        ))
    }

    fn subgradient_distance(&self, p: &Vector, u: &Vector) -> Option<f64> {
        Some(sum_sq(
            p.iter()
                .zip(u.iter())
                .zip(self.center.iter())
                .map(|((pi, ui), ci)| ui - (pi - ci)),
        ))
    }

    fn conjugate(&self) -> Option<Arc<dyn ConvexFn>> {
        Some(Arc::new(QuadraticConjugate {
            center: self.center.clone(),
        }))
    }
}

/// `f = 1/2 ||y||^2 + <c, y>`, the conjugate of [`Quadratic`].
#[derive(Clone, Debug)]
pub struct QuadraticConjugate {
    center: Vector,
}

impl ConvexFn for QuadraticConjugate {
    fn name(&self) -> &str {
        "quadratic_conjugate"
    }

    fn dim(&self) -> Option<usize> {
        Some(self.center.dim())
    }

    fn value(&self, y: &Vector) -> Option<f64> {
        Some(0.5 * y.norm_sq() + y.dot(&self.center))
    }

    fn prox(&self, gamma: f64, y: &Vector) -> Vector {
        y.zip_map(&self.center, |yi, ci| (yi - gamma * ci) / (1.0 + gamma))
    }

    fn subgradient_distance(&self, p: &Vector, u: &Vector) -> Option<f64> {
        Some(sum_sq(
            p.iter()
                .zip(u.iter())
                .zip(self.center.iter())
                .map(|((pi, ui), ci)| ui - (pi + ci)),
        ))
    }

    fn conjugate(&self) -> Option<Arc<dyn ConvexFn>> {
        Some(Arc::new(Quadratic {
            center: self.center.clone(),
        }))
    }
}

/// `f = ||x||_1 + 1/2 ||x||^2`. `df` is uniformly monotone with modulus
/// `phi(t) = t^2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformL1;

impl ConvexFn for UniformL1 {
    fn name(&self) -> &str {
        "uniform_l1"
    }

    fn value(&self, x: &Vector) -> Option<f64> {
        Some(x.iter().map(|v| v.abs() + 0.5 * v * v).sum())
    }

    fn prox(&self, gamma: f64, x: &Vector) -> Vector {
        x.map(|v| soft_threshold(v, gamma) / (1.0 + gamma))
    }

    fn separable_prox(&self, steps: &[f64], x: &Vector) -> Option<Vector> {
        per_coordinate(x, steps, |v, g| soft_threshold(v, g) / (1.0 + g))
    }

    fn subgradient_distance(&self, p: &Vector, u: &Vector) -> Option<f64> {
        Some(sum_sq(
            p.iter()
                .zip(u.iter())
                .map(|(&pi, &ui)| l1_subgradient_gap(pi, ui - pi, 1.0)),
        ))
    }

    fn conjugate(&self) -> Option<Arc<dyn ConvexFn>> {
        Some(Arc::new(UniformL1Conjugate))
    }
}

/// `f = sum 1/2 max(|y| - 1, 0)^2`, the conjugate of [`UniformL1`].
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformL1Conjugate;

fn uniform_conj_prox(y: f64, g: f64) -> f64 {
    if y.abs() <= 1.0 {
        y
    } else {
        y.signum() * (1.0 + (y.abs() - 1.0) / (1.0 + g))
    }
}

impl ConvexFn for UniformL1Conjugate {
    fn name(&self) -> &str {
        "uniform_l1_conjugate"
    }

    fn value(&self, y: &Vector) -> Option<f64> {
        Some(y.iter().map(|v| 0.5 * (v.abs() - 1.0).max(0.0).powi(2)).sum())
    }

    fn prox(&self, gamma: f64, y: &Vector) -> Vector {
        y.map(|v| uniform_conj_prox(v, gamma))
    }

    fn separable_prox(&self, steps: &[f64], x: &Vector) -> Option<Vector> {
        per_coordinate(x, steps, uniform_conj_prox)
    }

    fn subgradient_distance(&self, p: &Vector, u: &Vector) -> Option<f64> {
        Some(sum_sq(
            p.iter()
                .zip(u.iter())
                .map(|(&y, &ui)| ui - y.signum() * (y.abs() - 1.0).max(0.0)),
        ))
    }

    fn conjugate(&self) -> Option<Arc<dyn ConvexFn>> {
        Some(Arc::new(UniformL1))
    }
}

/// `B = 0` as a forward operator of any dimension.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroMap;

impl ForwardOp for ZeroMap {
    fn name(&self) -> &str {
        "zero"
    }

    fn beta(&self) -> f64 {
        0.0
    }

    fn apply(&self, x: &Vector) -> Vector {
        Vector::zeros(x.dim())
    }
}

/// `B x = c x`, `c >= 0`.
#[derive(Clone, Copy, Debug)]
pub struct ScaledIdentityMap {
    c: f64,
}

impl ScaledIdentityMap {
    pub fn new(c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale must be >= 0, got {c}")));
        }
        Ok(ScaledIdentityMap { c })
    }
}

impl ForwardOp for ScaledIdentityMap {
    fn name(&self) -> &str {
        "scaled_identity"
    }

    fn beta(&self) -> f64 {
        self.c
    }

    fn apply(&self, x: &Vector) -> Vector {
        x.scale(self.c)
    }
}

/// Affine monotone map `x -> M x + b` with `M + M^T` positive semidefinite.
/// Serves both as a forward operator (`beta = ||M||`) and as a maximally
/// monotone operator through `(Id + g M)^{-1}(x - g b)`.
#[derive(Clone, Debug)]
pub struct Affine {
    name: String,
    matrix: DMatrix<f64>,
    offset: Option<Vector>,
    beta: f64,
}

impl Affine {
    /// Validates squareness and monotonicity of `M`.
    pub fn new(name: &str, matrix: DMatrix<f64>, offset: Option<Vector>) -> Result<Self> {
        let a = Self::unchecked(name, matrix, offset)?;
        let sym = (&a.matrix + a.matrix.transpose()) * 0.5;
        let min_eig = sym.symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-10 * a.beta.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "affine map `{name}` is not monotone: M + M^T has eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(a)
    }

    /// Skips the monotonicity check (used to build counterexamples).
    pub fn unchecked(name: &str, matrix: DMatrix<f64>, offset: Option<Vector>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::InvalidParameter(format!(
                "affine map `{name}` needs a square nonempty matrix"
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "affine map `{name}` has non-finite entries"
            )));
        }
        if let Some(b) = &offset {
            b.ensure_dim(n, "affine offset")?;
        }
        let beta = spectral_norm(&matrix);
        Ok(Affine {
            name: name.to_string(),
            matrix,
            offset,
            beta,
        })
    }

    /// Block-diagonal rotation generator with blocks `s * [[0, 1], [-1, 0]]`.
    pub fn skew_rotation(dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "skew_rotation needs an even dimension, got {dim}"
            )));
        }
        let mut m = DMatrix::zeros(dim, dim);
        for k in (0..dim).step_by(2) {
            m[(k, k + 1)] = scale;
            m[(k + 1, k)] = -scale;
        }
        let mut op = Self::new("skew_rotation", m, None)?;
        // Block rotations have norm |scale| exactly; the SVD is off by an ulp.
        op.beta = scale.abs();
        Ok(op)
    }

    /// Skew-symmetric linear map; rejects matrices with `M != -M^T`.
    pub fn skew(matrix: DMatrix<f64>) -> Result<Self> {
        let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if matrix.nrows() == matrix.ncols() && (&matrix + matrix.transpose()).iter().any(|v| v.abs() > 1e-12 * scale) {
            return Err(Error::InvalidParameter("matrix is not skew-symmetric".into()));
        }
        Self::new("skew", matrix, None)
    }

    /// Gradient of `1/2 ||x - c||^2`.
    pub fn quadratic_gradient(center: &Vector) -> Self {
        let n = center.dim();
        Self::new("quadratic", DMatrix::identity(n, n), Some(-center)).expect("identity is monotone")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    fn eval(&self, x: &Vector) -> Vector {
        let mut out = matvec(&self.matrix, x.as_slice());
        if let Some(b) = &self.offset {
            for (o, bi) in out.iter_mut().zip(b.iter()) {
                *o += bi;
            }
        }
        Vector::from_raw(out)
    }
}

impl ForwardOp for Affine {
    fn name(&self) -> &str {
        &self.name
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn dim(&self) -> Option<usize> {
        Some(self.matrix.nrows())
    }

    fn apply(&self, x: &Vector) -> Vector {
        self.eval(x)
    }
}

impl MonotoneOperator for Affine {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> Option<usize> {
        Some(self.matrix.nrows())
    }

    fn apply_resolvent(&self, gamma: f64, x: &Vector) -> Vector {
        let n = self.matrix.nrows();
        let lhs = DMatrix::identity(n, n) + &self.matrix * gamma;
        let mut rhs = x.to_dvector();
        if let Some(b) = &self.offset {
            rhs -= DVector::from_column_slice(b.as_slice()) * gamma;
        }
        // I + gM is invertible for monotone M; a failed solve yields NaN,
        // which the iteration reports as a non-finite resolvent.
        match lhs.lu().solve(&rhs) {
            Some(p) => Vector::from_raw(p.as_slice().to_vec()),
            None => Vector::from_raw(vec![f64::NAN; n]),
        }
    }

    fn graph_distance(&self, p: &Vector, u: &Vector) -> Option<f64> {
        Some(u.dist(&self.eval(p)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{conjugate_prox, inverse_resolvent, resolvent, Subdifferential};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn library_functions() -> Vec<Arc<dyn ConvexFn>> {
        vec![
            Arc::new(ZeroFn),
            Arc::new(IndicatorZero),
            Arc::new(ScaledSquaredNorm::new(0.0).unwrap()),
            Arc::new(ScaledSquaredNorm::new(2.5).unwrap()),
            Arc::new(L1Norm::new(1.0)),
            Arc::new(L1Norm::new(0.3)),
            Arc::new(BoxIndicator::new(-1.0, 1.0).unwrap()),
            Arc::new(BoxIndicator::new(-0.5, 2.0).unwrap()),
            Arc::new(BoxSupport { lo: -0.5, hi: 2.0 }),
            Arc::new(Quadratic::new(Vector::from_raw(vec![1.0, -2.0, 0.5]))),
            Arc::new(QuadraticConjugate {
                center: Vector::from_raw(vec![1.0, -2.0, 0.5]),
            }),
            Arc::new(UniformL1),
            Arc::new(UniformL1Conjugate),
        ]
    }

    fn random_vec(rng: &mut ChaCha20Rng, dim: usize) -> Vector {
        Vector::from_raw((0..dim).map(|_| rng.random_range(-4.0..4.0)).collect())
    }

    #[test]
    fn resolvent_inclusion_holds_on_library() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for f in library_functions() {
            let a = Subdifferential::of(f.clone());
            for _ in 0..100 {
                let gamma = rng.random_range(0.05..5.0);
                let x = random_vec(&mut rng, 3);
                let p = resolvent(a.as_ref(), gamma, &x).unwrap();
                let u = x.zip_map(&p, |xi, pi| (xi - pi) / gamma);
                let d = a.graph_distance(&p, &u).unwrap();
                assert!(d <= 1e-9, "{}: inclusion gap {d} at gamma={gamma}", f.name());
            }
        }
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -2.0, 0.5, 1.0, 0.0, -1.0, 0.0]);
        let aff = Affine::new("affine", m, Some(Vector::from_raw(vec![0.1, 0.2, -0.3]))).unwrap();
        for _ in 0..100 {
            let gamma = rng.random_range(0.05..5.0);
            let x = random_vec(&mut rng, 3);
            let p = resolvent(&aff, gamma, &x).unwrap();
            let u = x.zip_map(&p, |xi, pi| (xi - pi) / gamma);
            assert!(MonotoneOperator::graph_distance(&aff, &p, &u).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn resolvents_are_firmly_nonexpansive() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for f in library_functions() {
            let a = Subdifferential::of(f.clone());
            for _ in 0..100 {
                let gamma = rng.random_range(0.05..5.0);
                let x = random_vec(&mut rng, 3);
                let y = random_vec(&mut rng, 3);
                let jx = a.apply_resolvent(gamma, &x);
                let jy = a.apply_resolvent(gamma, &y);
                let dj = &jx - &jy;
                assert!(dj.norm_sq() <= (&x - &y).dot(&dj) + 1e-10, "{}", f.name());
            }
        }
    }

    #[test]
    fn moreau_identity_against_registered_conjugates() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for f in library_functions() {
            let conj = f.conjugate().expect("library functions register conjugates");
            for _ in 0..100 {
                let gamma = rng.random_range(0.05..5.0);
                let x = random_vec(&mut rng, 3);
                // prox_{g f}(x) + g prox_{f*/g}(x/g) = x
                let p = f.prox(gamma, &x);
                let pc = conj.prox(1.0 / gamma, &x.scale(1.0 / gamma));
                let recon = p.zip_map(&pc, |a, b| a + gamma * b);
                assert!(recon.dist(&x) <= 1e-10, "{}", f.name());

                // Inverse resolvent via Moreau agrees with the registered inverse.
                let a = Subdifferential::of(f.clone());
                let via_identity = inverse_resolvent(a.as_ref(), gamma, &x).unwrap();
                let direct = a.registered_inverse().unwrap().apply_resolvent(gamma, &x);
                assert!(via_identity.dist(&direct) <= 1e-10, "{}", f.name());
                let cp = conjugate_prox(f.as_ref(), gamma, &x).unwrap();
                assert!(cp.dist(&direct) <= 1e-10, "{}", f.name());
            }
        }
    }

    #[test]
    fn soft_threshold_matches_grid_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let l1 = L1Norm::new(1.0);
        for _ in 0..20 {
            let gamma = rng.random_range(0.1..2.0);
            let x = rng.random_range(-3.0..3.0);
            let step = 1e-4;
            let mut best = (f64::INFINITY, 0.0);
            for k in 0..=80_000 {
                let p = -4.0 + k as f64 * step;
                let obj = p.abs() + (p - x) * (p - x) / (2.0 * gamma);
                if obj < best.0 {
                    best = (obj, p);
                }
            }
            let p = l1.prox(gamma, &Vector::from_raw(vec![x]))[0];
            assert!((p - best.1).abs() <= 1e-4, "x={x} gamma={gamma}");
        }
    }

    #[test]
    fn uniform_prox_matches_grid_oracle() {
        let f = UniformL1;
        for &(x, gamma) in &[(2.0, 1.0), (-0.5, 0.3), (3.7, 0.5), (0.9, 2.0)] {
            let step = 1e-4;
            let mut best = (f64::INFINITY, 0.0);
            for k in 0..=80_000 {
                let p = -4.0 + k as f64 * step;
                let obj = p.abs() + 0.5 * p * p + (p - x) * (p - x) / (2.0 * gamma);
                if obj < best.0 {
                    best = (obj, p);
                }
            }
            let p = f.prox(gamma, &Vector::from_raw(vec![x]))[0];
            assert!((p - best.1).abs() <= 1e-4);
        }
    }

    #[test]
    fn separable_prox_with_uniform_steps_matches_prox() {
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        for f in library_functions() {
            let gamma = rng.random_range(0.05..5.0);
            let x = random_vec(&mut rng, 3);
            if let Some(sep) = f.separable_prox(&[gamma; 3], &x) {
                assert_eq!(sep, f.prox(gamma, &x), "{}", f.name());
            }
        }
    }

    #[test]
    fn affine_rejects_non_monotone() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(Affine::new("bad", m, None).is_err());
        assert!(Affine::skew_rotation(3, 1.0).is_err());
        assert!(Affine::skew(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).is_err());
    }
}
