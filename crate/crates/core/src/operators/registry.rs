//! Name-keyed construction of library operators from config specs.
//!
//! A spec is either a bare name (`"l1"`) or a table carrying the name and
//! its parameters (`{ name = "box_projection", lo = -1, hi = 1 }`).

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::library::*;
use super::{ConvexFn, ForwardOp, MonotoneOperator, Subdifferential};
use crate::error::{Error, Result};
use crate::space::Vector;

/// Names accepted where a convex function is expected.
pub const CONVEX_NAMES: &[&str] = &[
    "zero",
    "l1",
    "box_projection",
    "quadratic",
    "indicator_zero",
    "uniform_l1",
    "scaled_identity",
];

/// Names accepted where a maximally monotone (resolvent) operator is expected.
pub const RESOLVENT_NAMES: &[&str] = &[
    "zero",
    "l1",
    "box_projection",
    "quadratic",
    "indicator_zero",
    "uniform_l1",
    "scaled_identity",
    "affine",
    "skew_rotation",
    "skew",
];

/// Names accepted where a Lipschitz forward operator is expected.
pub const FORWARD_NAMES: &[&str] = &[
    "zero",
    "scaled_identity",
    "affine",
    "skew_rotation",
    "skew",
    "quadratic",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorParams {
    pub name: String,
    /// l1 weight
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    /// scaled_identity / skew_rotation scale
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// quadratic center
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    /// affine / skew matrix, row-major
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// affine offset
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    /// Declared Lipschitz constant overriding the computed one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Name(String),
    Detailed(OperatorParams),
}

impl OperatorSpec {
    pub fn named(name: &str) -> Self {
        OperatorSpec::Name(name.to_string())
    }

    pub fn params(&self) -> OperatorParams {
        match self {
            OperatorSpec::Name(n) => OperatorParams {
                name: n.clone(),
                ..Default::default()
            },
            OperatorSpec::Detailed(p) => p.clone(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            OperatorSpec::Name(n) => n,
            OperatorSpec::Detailed(p) => &p.name,
        }
    }
}

impl From<&str> for OperatorSpec {
    fn from(s: &str) -> Self {
        OperatorSpec::named(s)
    }
}

fn center(p: &OperatorParams, dim: usize) -> Result<Vector> {
    match &p.center {
        Some(c) => {
            let v = Vector::new(c.clone())?;
            v.ensure_dim(dim, "quadratic center")?;
            Ok(v)
        }
        None => Ok(Vector::zeros(dim)),
    }
}

fn matrix(p: &OperatorParams, dim: usize) -> Result<DMatrix<f64>> {
    let rows = p
        .matrix
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter(format!("`{}` requires `matrix`", p.name)))?;
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidParameter(format!(
            "`{}` matrix must be {dim}x{dim}",
            p.name
        )));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn affine(p: &OperatorParams, dim: usize) -> Result<Affine> {
    match p.name.as_str() {
        "affine" => {
            let offset = p.offset.clone().map(Vector::new).transpose()?;
            Affine::new("affine", matrix(p, dim)?, offset)
        }
        "skew" => Affine::skew(matrix(p, dim)?),
        "skew_rotation" => Affine::skew_rotation(dim, p.scale.unwrap_or(1.0)),
        other => unreachable!("not an affine operator: {other}"),
    }
}

/// Builds a convex function on `R^dim`.
pub fn build_convex(spec: &OperatorSpec, dim: usize) -> Result<Arc<dyn ConvexFn>> {
    let p = spec.params();
    Ok(match p.name.as_str() {
        "zero" => Arc::new(ZeroFn),
        "l1" => {
            let w = p.weight.unwrap_or(1.0);
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!("l1 weight must be >= 0, got {w}")));
            }
            Arc::new(L1Norm::new(w))
        }
        "box_projection" => Arc::new(BoxIndicator::new(p.lo.unwrap_or(-1.0), p.hi.unwrap_or(1.0))?),
        "quadratic" => Arc::new(Quadratic::new(center(&p, dim)?)),
        "indicator_zero" => Arc::new(IndicatorZero),
        "uniform_l1" => Arc::new(UniformL1),
        "scaled_identity" => Arc::new(ScaledSquaredNorm::new(p.scale.unwrap_or(1.0))?),
        other => {
            return Err(Error::UnknownOperator {
                name: other.to_string(),
                role: "convex function",
            })
        }
    })
}

/// Builds a maximally monotone operator on `R^dim`.
pub fn build_resolvent(spec: &OperatorSpec, dim: usize) -> Result<Arc<dyn MonotoneOperator>> {
    let p = spec.params();
    match p.name.as_str() {
        "affine" | "skew" | "skew_rotation" => Ok(Arc::new(affine(&p, dim)?)),
        name if CONVEX_NAMES.contains(&name) => Ok(Subdifferential::of(build_convex(spec, dim)?)),
        other => Err(Error::UnknownOperator {
            name: other.to_string(),
            role: "monotone operator",
        }),
    }
}

/// A forward operator whose declared constant replaces the computed one.
#[derive(Debug)]
struct Declared {
    inner: Arc<dyn ForwardOp>,
    beta: f64,
}

impl ForwardOp for Declared {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn beta(&self) -> f64 {
        self.beta
    }
    fn dim(&self) -> Option<usize> {
        self.inner.dim()
    }
    fn apply(&self, x: &Vector) -> Vector {
        self.inner.apply(x)
    }
}

/// Builds a monotone Lipschitz forward operator on `R^dim`.
pub fn build_forward(spec: &OperatorSpec, dim: usize) -> Result<Arc<dyn ForwardOp>> {
    let p = spec.params();
    let op: Arc<dyn ForwardOp> = match p.name.as_str() {
        "zero" => Arc::new(ZeroMap),
        "scaled_identity" => Arc::new(ScaledIdentityMap::new(p.scale.unwrap_or(1.0))?),
        "affine" | "skew" | "skew_rotation" => Arc::new(affine(&p, dim)?),
        "quadratic" => Arc::new(Affine::quadratic_gradient(&center(&p, dim)?)),
        other => {
            return Err(Error::UnknownOperator {
                name: other.to_string(),
                role: "forward operator",
            })
        }
    };
    match p.beta {
        Some(beta) if !(beta >= 0.0 && beta.is_finite()) => Err(Error::InvalidParameter(format!(
            "declared beta must be >= 0, got {beta}"
        ))),
        Some(beta) => Ok(Arc::new(Declared { inner: op, beta })),
        None => Ok(op),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_parse_from_toml() {
        #[derive(Deserialize)]
        struct Holder {
            a: OperatorSpec,
            b: OperatorSpec,
        }
        let h: Holder = toml::from_str(
            r#"
            a = "l1"
            b = { name = "box_projection", lo = -2.0, hi = 0.5 }
            "#,
        )
        .unwrap();
        assert_eq!(h.a.name(), "l1");
        assert_eq!(h.b.params().lo, Some(-2.0));
    }

    #[test]
    fn every_listed_name_builds() {
        for name in CONVEX_NAMES {
            build_convex(&OperatorSpec::named(name), 2).unwrap();
        }
        for name in RESOLVENT_NAMES.iter().filter(|n| !matches!(**n, "affine" | "skew")) {
            build_resolvent(&OperatorSpec::named(name), 2).unwrap();
        }
        for name in FORWARD_NAMES.iter().filter(|n| !matches!(**n, "affine" | "skew")) {
            build_forward(&OperatorSpec::named(name), 2).unwrap();
        }
    }

    #[test]
    fn unknown_names_are_reported() {
        match build_resolvent(&OperatorSpec::named("nonexistent"), 2) {
            Err(Error::UnknownOperator { name, .. }) => assert_eq!(name, "nonexistent"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(build_forward(&OperatorSpec::named("l1"), 2).is_err());
    }

    #[test]
    fn affine_from_params() {
        let spec = OperatorSpec::Detailed(OperatorParams {
            name: "affine".into(),
            matrix: Some(vec![vec![1.0, 1.0], vec![-1.0, 1.0]]),
            offset: Some(vec![0.5, 0.0]),
            ..Default::default()
        });
        let b = build_forward(&spec, 2).unwrap();
        assert!((b.beta() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(b.apply(&Vector::from_raw(vec![1.0, 0.0])).as_slice(), &[1.5, -1.0]);
    }

    #[test]
    fn declared_beta_overrides() {
        let spec = OperatorSpec::Detailed(OperatorParams {
            name: "zero".into(),
            beta: Some(1.0),
            ..Default::default()
        });
        assert_eq!(build_forward(&spec, 3).unwrap().beta(), 1.0);
    }
}
