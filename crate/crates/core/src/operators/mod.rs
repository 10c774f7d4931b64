//! Operator abstractions.
//!
//! Set-valued maximally monotone operators are only ever touched through
//! their resolvents `J_{gA} = (Id + gA)^{-1}`; single-valued Lipschitz
//! monotone operators are evaluated forward; convex functions expose their
//! proximity operators. Concrete operators live in [`library`] and are
//! looked up by name through [`registry`].

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::space::Vector;

pub mod library;
pub mod registry;

pub use library::*;
pub use registry::{
    build_convex, build_forward, build_resolvent, OperatorParams, OperatorSpec, CONVEX_NAMES, FORWARD_NAMES,
    RESOLVENT_NAMES,
};

/// Maximally monotone operator `A`, represented by its resolvent.
pub trait MonotoneOperator: Send + Sync + Debug {
    fn name(&self) -> &str;

    /// Fixed dimension, if the operator has one.
    fn dim(&self) -> Option<usize> {
        None
    }

    /// `J_{gamma A}(x)`; `gamma > 0` and dimensions are checked by the caller.
    fn apply_resolvent(&self, gamma: f64, x: &Vector) -> Vector;

    /// Resolvent of `gamma * diag(steps) * A` for coordinate-separable
    /// operators, i.e. `J_{gamma_i A_i}` applied coordinatewise.
    fn separable_resolvent(&self, _steps: &[f64], _x: &Vector) -> Option<Vector> {
        None
    }

    /// Distance from `u` to the set `A p`, when the graph is known.
    /// `+inf` marks `p` outside the domain.
    fn graph_distance(&self, _p: &Vector, _u: &Vector) -> Option<f64> {
        None
    }

    /// Directly registered `A^{-1}`, when a closed form exists.
    fn registered_inverse(&self) -> Option<Arc<dyn MonotoneOperator>> {
        None
    }
}

/// Single-valued monotone operator with Lipschitz constant `beta`.
pub trait ForwardOp: Send + Sync + Debug {
    fn name(&self) -> &str;

    fn beta(&self) -> f64;

    fn dim(&self) -> Option<usize> {
        None
    }

    fn apply(&self, x: &Vector) -> Vector;
}

/// Proper lower semicontinuous convex function, accessed through its prox.
pub trait ConvexFn: Send + Sync + Debug {
    fn name(&self) -> &str;

    fn dim(&self) -> Option<usize> {
        None
    }

    /// `f(x)`, possibly `+inf`.
    fn value(&self, _x: &Vector) -> Option<f64> {
        None
    }

    /// `prox_{gamma f}(x)`
    fn prox(&self, gamma: f64, x: &Vector) -> Vector;

    /// Coordinatewise prox with per-coordinate steps.
    fn separable_prox(&self, _steps: &[f64], _x: &Vector) -> Option<Vector> {
        None
    }

    /// `dist(u, df(p))`; `+inf` when `p` is outside `dom df`.
    fn subgradient_distance(&self, _p: &Vector, _u: &Vector) -> Option<f64> {
        None
    }

    /// Fenchel conjugate `f*`, when registered in closed form.
    fn conjugate(&self) -> Option<Arc<dyn ConvexFn>> {
        None
    }
}

/// The subdifferential `df` of a convex function, as a monotone operator.
#[derive(Clone, Debug)]
pub struct Subdifferential(pub Arc<dyn ConvexFn>);

impl Subdifferential {
    pub fn of(f: Arc<dyn ConvexFn>) -> Arc<dyn MonotoneOperator> {
        Arc::new(Subdifferential(f))
    }

    pub fn function(&self) -> &Arc<dyn ConvexFn> {
        &self.0
    }
}

impl MonotoneOperator for Subdifferential {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn dim(&self) -> Option<usize> {
        self.0.dim()
    }

    fn apply_resolvent(&self, gamma: f64, x: &Vector) -> Vector {
        self.0.prox(gamma, x)
    }

    fn separable_resolvent(&self, steps: &[f64], x: &Vector) -> Option<Vector> {
        self.0.separable_prox(steps, x)
    }

    fn graph_distance(&self, p: &Vector, u: &Vector) -> Option<f64> {
        self.0.subgradient_distance(p, u)
    }

    fn registered_inverse(&self) -> Option<Arc<dyn MonotoneOperator>> {
        self.0.conjugate().map(Subdifferential::of)
    }
}

fn check_step(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveStep { gamma })
    }
}

fn check_dim(expected: Option<usize>, x: &Vector, context: &'static str) -> Result<()> {
    match expected {
        Some(d) if d != x.dim() => Err(Error::DimensionMismatch {
            context,
            expected: d,
            found: x.dim(),
        }),
        _ => Ok(()),
    }
}

/// `J_{gamma A}(x)`
pub fn resolvent(a: &dyn MonotoneOperator, gamma: f64, x: &Vector) -> Result<Vector> {
    check_step(gamma)?;
    check_dim(a.dim(), x, "resolvent")?;
    Ok(a.apply_resolvent(gamma, x))
}

/// `J_{gamma A^{-1}}(x) = x - gamma * J_{A/gamma}(x/gamma)`.
pub fn inverse_resolvent(a: &dyn MonotoneOperator, gamma: f64, x: &Vector) -> Result<Vector> {
    check_step(gamma)?;
    check_dim(a.dim(), x, "inverse resolvent")?;
    Ok(inverse_resolvent_unchecked(a, gamma, x))
}

pub(crate) fn inverse_resolvent_unchecked(a: &dyn MonotoneOperator, gamma: f64, x: &Vector) -> Vector {
    let inner = a.apply_resolvent(1.0 / gamma, &x.map(|v| v / gamma));
    x.zip_map(&inner, |xi, ji| xi - gamma * ji)
}

/// `prox_{gamma f}(x)`
pub fn prox(f: &dyn ConvexFn, gamma: f64, x: &Vector) -> Result<Vector> {
    check_step(gamma)?;
    check_dim(f.dim(), x, "prox")?;
    Ok(f.prox(gamma, x))
}

/// `prox_{gamma f*}(x)` through the Moreau decomposition.
pub fn conjugate_prox(f: &dyn ConvexFn, gamma: f64, x: &Vector) -> Result<Vector> {
    check_step(gamma)?;
    check_dim(f.dim(), x, "conjugate prox")?;
    let inner = f.prox(1.0 / gamma, &x.map(|v| v / gamma));
    Ok(x.zip_map(&inner, |xi, pi| xi - gamma * pi))
}

/// `B x`
pub fn forward(b: &dyn ForwardOp, x: &Vector) -> Result<Vector> {
    check_dim(b.dim(), x, "forward")?;
    Ok(b.apply(x))
}

/// Outcome of sampling-based certification of a forward operator.
#[derive(Clone, Debug, Serialize)]
pub struct CertificationReport {
    pub operator: String,
    pub samples: usize,
    /// `min <x - y, Bx - By> / ||x - y||^2` over sampled pairs.
    pub worst_monotonicity_margin: f64,
    /// `max ||Bx - By|| / ||x - y||` over sampled pairs.
    pub worst_lipschitz_ratio: f64,
    pub declared_beta: f64,
    pub pass: bool,
}

/// Falsification test for monotonicity and the declared Lipschitz constant on
/// `samples` random pairs in `R^dim`.
pub fn certify_monotone_lipschitz(b: &dyn ForwardOp, dim: usize, samples: usize, rng_seed: u64) -> CertificationReport {
    certify_with_beta(b, b.beta(), dim, samples, rng_seed)
}

/// Like [`certify_monotone_lipschitz`] but checks against an explicit constant.
pub fn certify_with_beta(
    b: &dyn ForwardOp,
    beta: f64,
    dim: usize,
    samples: usize,
    rng_seed: u64,
) -> CertificationReport {
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let mut margin = f64::INFINITY;
    let mut ratio = 0.0f64;
    let draw = |rng: &mut ChaCha20Rng, scale: f64| {
        Vector::from_raw((0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
    };
    for k in 0..samples.max(2) {
        // Mix scales so both local and global behaviour is probed.
        let scale = [1.0, 0.01, 100.0][k % 3];
        let x = draw(&mut rng, scale);
        let y = draw(&mut rng, scale);
        let dx = &x - &y;
        let dn = dx.norm();
        if dn == 0.0 {
            continue;
        }
        let db = &b.apply(&x) - &b.apply(&y);
        margin = margin.min(dx.dot(&db) / (dn * dn));
        ratio = ratio.max(db.norm() / dn);
    }
    let pass = margin >= -1e-10 && ratio <= beta * (1.0 + 1e-8);
    CertificationReport {
        operator: b.name().to_string(),
        samples,
        worst_monotonicity_margin: margin,
        worst_lipschitz_ratio: ratio,
        declared_beta: beta,
        pass,
    }
}
