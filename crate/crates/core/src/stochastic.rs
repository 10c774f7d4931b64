//! Noise schedules for the error sequences `(a_n, b_n, c_n)`.
//!
//! Errors are drawn independently of the iterate path, so their conditional
//! second moments given the past are known in closed form. Each trajectory
//! owns a ChaCha20 generator keyed by a 64-bit seed; the draws for iteration
//! `n` come from stream `n` of that generator, in the order `a`, `b`, `c`
//! and entry-major within each vector. A given seed therefore reproduces
//! the same error stream bit for bit, and iterations never share draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::Vector;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseKind {
    #[default]
    Zero,
    /// Entries `N(0, (sigma rho^n)^2)`.
    GaussianGeometric { sigma: f64, rho: f64 },
    /// Entries uniform on `[-sigma rho^n, sigma rho^n]`.
    BoundedUniformGeometric { sigma: f64, rho: f64 },
}

impl NoiseKind {
    pub fn is_zero(&self) -> bool {
        match *self {
            NoiseKind::Zero => true,
            NoiseKind::GaussianGeometric { sigma, .. } | NoiseKind::BoundedUniformGeometric { sigma, .. } => {
                sigma == 0.0
            }
        }
    }

    /// Checks `sigma >= 0` and `0 <= rho` (summability of `rho < 1` is
    /// reported by [`NoiseSchedule::verify_summability`]).
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseKind::Zero => Ok(()),
            NoiseKind::GaussianGeometric { sigma, rho } | NoiseKind::BoundedUniformGeometric { sigma, rho } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "noise sigma must be >= 0, got {sigma}"
                    )));
                }
                if !(rho >= 0.0 && rho.is_finite()) {
                    return Err(Error::InvalidParameter(format!("noise rho must be >= 0, got {rho}")));
                }
                Ok(())
            }
        }
    }
}

/// A noise kind bound to a vector dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub kind: NoiseKind,
    pub dim: usize,
}

/// Closed-form total of `sum_n sqrt(E ||e_n||^2)` with a numeric cross-check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summability {
    /// Closed-form series total; `+inf` when the series diverges.
    pub total: f64,
    /// Direct partial sum up to the first term below the tolerance.
    pub partial_sum: f64,
    pub terms: usize,
    pub pass: bool,
}

impl NoiseSchedule {
    pub fn new(kind: NoiseKind, dim: usize) -> Self {
        NoiseSchedule { kind, dim }
    }

    /// Per-entry scale `sigma rho^n`.
    pub fn amplitude(&self, n: usize) -> f64 {
        match self.kind {
            NoiseKind::Zero => 0.0,
            NoiseKind::GaussianGeometric { sigma, rho } | NoiseKind::BoundedUniformGeometric { sigma, rho } => {
                sigma * rho.powf(n as f64)
            }
        }
    }

    /// `sqrt(E[||e_n||^2 | F_n])`.
    pub fn conditional_moment(&self, n: usize) -> f64 {
        let d = self.dim as f64;
        match self.kind {
            NoiseKind::Zero => 0.0,
            NoiseKind::GaussianGeometric { .. } => self.amplitude(n) * d.sqrt(),
            NoiseKind::BoundedUniformGeometric { .. } => self.amplitude(n) * (d / 3.0).sqrt(),
        }
    }

    /// Sums the moment series. The closed form is `first / (1 - rho)`; the
    /// direct partial sum runs until a term drops below `tol` and must agree
    /// with it up to the geometric tail bound.
    pub fn verify_summability(&self, tol: f64) -> Summability {
        let rho = match self.kind {
            NoiseKind::Zero => {
                return Summability {
                    total: 0.0,
                    partial_sum: 0.0,
                    terms: 0,
                    pass: true,
                }
            }
            NoiseKind::GaussianGeometric { rho, .. } | NoiseKind::BoundedUniformGeometric { rho, .. } => rho,
        };
        let first = self.conditional_moment(0);
        if first == 0.0 {
            return Summability {
                total: 0.0,
                partial_sum: 0.0,
                terms: 0,
                pass: true,
            };
        }
        if rho >= 1.0 {
            return Summability {
                total: f64::INFINITY,
                partial_sum: f64::INFINITY,
                terms: 0,
                pass: false,
            };
        }
        let total = first / (1.0 - rho);
        let tol = tol.max(f64::MIN_POSITIVE);
        let mut partial = 0.0;
        let mut n = 0usize;
        let mut term = first;
        const MAX_TERMS: usize = 10_000_000;
        while n < MAX_TERMS {
            term = self.conditional_moment(n);
            partial += term;
            n += 1;
            if term <= tol {
                break;
            }
        }
        let tail = term * rho / (1.0 - rho);
        let pass = total.is_finite() && (total - partial).abs() <= tail + tol + 1e-12 * total;
        Summability {
            total,
            partial_sum: partial,
            terms: n,
            pass,
        }
    }
}

/// The three error schedules of one trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseTriple {
    #[serde(default)]
    pub a: NoiseKind,
    #[serde(default)]
    pub b: NoiseKind,
    #[serde(default)]
    pub c: NoiseKind,
}

impl NoiseTriple {
    pub fn zero() -> Self {
        Self::default()
    }

    /// The same kind in all three slots.
    pub fn uniform(kind: NoiseKind) -> Self {
        NoiseTriple {
            a: kind,
            b: kind,
            c: kind,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero() && self.c.is_zero()
    }

    pub fn schedules(&self, dim: usize) -> [NoiseSchedule; 3] {
        [
            NoiseSchedule::new(self.a, dim),
            NoiseSchedule::new(self.b, dim),
            NoiseSchedule::new(self.c, dim),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        self.a.validate()?;
        self.b.validate()?;
        self.c.validate()
    }
}

/// One draw `(a_n, b_n, c_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorDraw {
    pub a: Vector,
    pub b: Vector,
    pub c: Vector,
}

impl ErrorDraw {
    pub fn zeros(dim: usize) -> Self {
        ErrorDraw {
            a: Vector::zeros(dim),
            b: Vector::zeros(dim),
            c: Vector::zeros(dim),
        }
    }
}

fn draw_vector(schedule: &NoiseSchedule, n: usize, rng: &mut ChaCha20Rng) -> Vector {
    let dim = schedule.dim;
    match schedule.kind {
        NoiseKind::Zero => Vector::zeros(dim),
        NoiseKind::GaussianGeometric { .. } => {
            let s = schedule.amplitude(n);
            Vector::from_raw((0..dim).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect())
        }
        NoiseKind::BoundedUniformGeometric { .. } => {
            let s = schedule.amplitude(n);
            Vector::from_raw((0..dim).map(|_| s * rng.random_range(-1.0..=1.0)).collect())
        }
    }
}

/// Draws `(a_n, b_n, c_n)` from stream `n` of `rng`.
pub fn sample_errors(triple: &NoiseTriple, dim: usize, n: usize, rng: &mut ChaCha20Rng) -> ErrorDraw {
    rng.set_stream(n as u64);
    rng.set_word_pos(0);
    let [sa, sb, sc] = triple.schedules(dim);
    let a = draw_vector(&sa, n, rng);
    let b = draw_vector(&sb, n, rng);
    let c = draw_vector(&sc, n, rng);
    ErrorDraw { a, b, c }
}

/// Seeded error stream of one trajectory.
#[derive(Clone, Debug)]
pub struct ErrorSampler {
    triple: NoiseTriple,
    dim: usize,
    rng: ChaCha20Rng,
}

impl ErrorSampler {
    pub fn new(triple: NoiseTriple, dim: usize, seed: u64) -> Self {
        ErrorSampler {
            triple,
            dim,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self, n: usize) -> ErrorDraw {
        if self.triple.is_zero() {
            return ErrorDraw::zeros(self.dim);
        }
        sample_errors(&self.triple, self.dim, n, &mut self.rng)
    }

    /// Conditional moments `sqrt(E||a_n||^2)`, `sqrt(E||b_n||^2)`, `sqrt(E||c_n||^2)`.
    pub fn moments(&self, n: usize) -> [f64; 3] {
        self.triple.schedules(self.dim).map(|s| s.conditional_moment(n))
    }

    pub fn triple(&self) -> &NoiseTriple {
        &self.triple
    }
}
