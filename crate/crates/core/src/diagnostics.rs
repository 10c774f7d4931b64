//! Pathwise checks of the convergence certificates on recorded traces.
//!
//! Conditional-expectation inequalities cannot be observed on one path, so
//! deterministic runs are checked step by step and noisy runs are either
//! checked against a pathwise error bound built from the realized error
//! norms, or summarized by the frequency of violations.

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fbf::IterateTrace;
use crate::space::Vector;

/// Absolute tolerance on per-step margins.
pub const MARGIN_TOL: f64 = 1e-10;

/// Pass threshold on the last-decade increment ratio of residual sums.
pub const SUMMABILITY_RATIO: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub check: String,
    pub pass: bool,
    pub worst_margin: f64,
    pub violation_rate: f64,
    pub details: Value,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Sequences of `E[z_{n+1}|F_n] <= (1 + t_n) z_n + zeta_n - xi_n`, realized
/// along one path. `z` has one more entry than the others.
#[derive(Clone, Debug, PartialEq)]
pub struct SupermartingaleTrace {
    pub z: Vec<f64>,
    pub t: Vec<f64>,
    pub zeta: Vec<f64>,
    pub xi: Vec<f64>,
}

impl SupermartingaleTrace {
    pub fn new(z: Vec<f64>, t: Vec<f64>, zeta: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        let horizon = t.len();
        if z.len() != horizon + 1 || zeta.len() != horizon || xi.len() != horizon {
            return Err(Error::InvalidParameter(format!(
                "supermartingale trace needs |z| = horizon + 1 and |t| = |zeta| = |xi| = horizon, got {}, {}, {}, {}",
                z.len(),
                t.len(),
                zeta.len(),
                xi.len()
            )));
        }
        let ok = |s: &[f64]| s.iter().all(|v| v.is_finite() && *v >= 0.0);
        if !(ok(&z) && ok(&t) && ok(&zeta) && ok(&xi)) {
            return Err(Error::InvalidParameter(
                "supermartingale trace entries must be finite and nonnegative".into(),
            ));
        }
        Ok(SupermartingaleTrace { z, t, zeta, xi })
    }

    /// Constant `t = zeta = xi = 0`.
    pub fn plain(z: Vec<f64>) -> Result<Self> {
        let h = z.len().saturating_sub(1);
        Self::new(z, vec![0.0; h], vec![0.0; h], vec![0.0; h])
    }

    pub fn horizon(&self) -> usize {
        self.t.len()
    }
}

/// Window covering the last 10% of `0..len` (at least one entry).
fn tail(len: usize) -> std::ops::Range<usize> {
    let k = len.div_ceil(10).max(1).min(len);
    len - k..len
}

/// Per-step margins `(1 + t_n) z_n + zeta_n - xi_n - z_{n+1}`, plus the tail
/// oscillation of `z` and the partial sum of `xi`.
pub fn robbins_siegmund_check(tr: &SupermartingaleTrace) -> Report {
    let h = tr.horizon();
    if h < 1 {
        return Report {
            check: "robbins_siegmund".into(),
            pass: false,
            worst_margin: f64::NAN,
            violation_rate: f64::NAN,
            details: json!({ "error": "horizon too short" }),
        };
    }
    let margins: Vec<f64> = (0..h)
        .map(|n| (1.0 + tr.t[n]) * tr.z[n] + tr.zeta[n] - tr.xi[n] - tr.z[n + 1])
        .collect();
    let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let violations = margins.iter().filter(|&&m| m < -MARGIN_TOL).count();
    let window = &tr.z[tail(tr.z.len())];
    let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
    Report {
        check: "robbins_siegmund".into(),
        pass: violations == 0,
        worst_margin: worst,
        violation_rate: violations as f64 / h as f64,
        details: json!({
            "horizon": h,
            "z_last": tr.z[h],
            "z_tail_oscillation": hi - lo,
            "xi_sum": tr.xi.iter().sum::<f64>(),
            "t_sum": tr.t.iter().sum::<f64>(),
            "zeta_sum": tr.zeta.iter().sum::<f64>(),
        }),
    }
}

/// The supermartingale read off a run: `z_n` the squared (metric) distance
/// to the reference, `t_n = eta_n`, `zeta_n = 0` and
/// `xi_n = (1 - gamma_n^2 beta^2 mu^2) ||x_n - p_n||^2 / mu`.
pub fn fbf_supermartingale(trace: &IterateTrace) -> Result<SupermartingaleTrace> {
    let d = trace.fejer_distances().ok_or(Error::MissingDistances(
        "supermartingale needs distances to a reference",
    ))?;
    let (beta, mu) = (trace.beta, trace.mu);
    let xi = trace
        .records
        .iter()
        .map(|r| {
            let c = 1.0 - (r.gamma * beta * mu).powi(2);
            (c / mu * r.res_primal * r.res_primal).max(0.0)
        })
        .collect();
    SupermartingaleTrace::new(
        d.iter().map(|x| x * x).collect(),
        trace.records.iter().map(|r| r.eta).collect(),
        vec![0.0; trace.len()],
        xi,
    )
}

/// Bound on the error term of the quasi-Fejer inequality.
#[derive(Clone, Debug, PartialEq)]
pub enum ErrorBound {
    /// `eps_n = 0`.
    Zero,
    /// Built from the realized error norms and step sizes; a pathwise bound.
    Realized,
    /// Built from the analytic moments of the noise schedules; holds only in
    /// conditional expectation.
    Analytic,
    Custom(Vec<f64>),
}

/// Pathwise bound on `||x_{n+1} - x'_{n+1}||_{U_{n+1}^{-1}}`, where `x'` is
/// the error-free step from `x_n`:
/// `(gamma mu |a| + 2 (sqrt(mu/alpha) gamma mu |a| + |b|) + gamma mu |c|) / sqrt(alpha)`.
pub fn realized_error_bound(trace: &IterateTrace) -> Vec<f64> {
    let (mu, alpha) = (trace.mu, trace.alpha);
    let spread = (mu / alpha).sqrt();
    trace
        .records
        .iter()
        .map(|r| {
            let gm = r.gamma * mu;
            (gm * r.norm_a + 2.0 * (spread * gm * r.norm_a + r.norm_b) + gm * r.norm_c) / alpha.sqrt()
        })
        .collect()
}

/// `sqrt(mu/alpha) (2 (m_b + m_a/(beta mu)) + m_c/(beta mu) + m_a/(beta mu))`
/// from the analytic moments `m` of the schedules.
pub fn analytic_error_bound(trace: &IterateTrace) -> Vec<f64> {
    let (mu, alpha, beta) = (trace.mu, trace.alpha, trace.beta);
    let inv = 1.0 / (beta * mu);
    let spread = (mu / alpha).sqrt();
    trace
        .records
        .iter()
        .map(|r| spread * (2.0 * (r.moment_b + inv * r.moment_a) + inv * r.moment_c + inv * r.moment_a))
        .collect()
}

/// Margins `(1 + eta_n) d_n + eps_n - d_{n+1}` of the quasi-Fejer inequality.
///
/// Distances come from the trace (metric ones when recorded) or, given a
/// `target`, are recomputed from the kept iterates in the plain norm. `eta`
/// defaults to the recorded sequence. The check is strict (every margin
/// `>= -1e-10`) for noise-free runs and for the realized bound; for other
/// bounds on noisy runs only the violation rate is informative and the
/// report passes.
pub fn quasi_fejer_check(
    trace: &IterateTrace,
    target: Option<&Vector>,
    eta: Option<&[f64]>,
    bound: &ErrorBound,
) -> Result<Report> {
    let d: Vec<f64> = match target {
        Some(t) => trace
            .iterate_path()
            .ok_or(Error::MissingDistances(
                "quasi-Fejer check against a target needs kept iterates",
            ))?
            .into_iter()
            .map(|x| x.dist(t))
            .collect(),
        None => trace.fejer_distances().ok_or(Error::MissingDistances(
            "quasi-Fejer check needs distances to a reference",
        ))?,
    };
    let h = trace.len();
    let recorded: Vec<f64>;
    let eta = match eta {
        Some(e) => e,
        None => {
            recorded = trace.records.iter().map(|r| r.eta).collect();
            &recorded
        }
    };
    let eps = match bound {
        ErrorBound::Zero => vec![0.0; h],
        ErrorBound::Realized => realized_error_bound(trace),
        ErrorBound::Analytic => analytic_error_bound(trace),
        ErrorBound::Custom(v) => v.clone(),
    };
    if eta.len() < h || eps.len() < h {
        return Err(Error::InvalidParameter(format!(
            "quasi-Fejer check needs {h} entries of eta and eps, got {} and {}",
            eta.len(),
            eps.len()
        )));
    }
    Ok(fejer_report(
        &d,
        eta,
        &eps,
        !trace.noisy || *bound == ErrorBound::Realized,
    ))
}

/// Core of [`quasi_fejer_check`] on raw sequences; `d` has one more entry
/// than the horizon.
pub fn fejer_report(d: &[f64], eta: &[f64], eps: &[f64], strict: bool) -> Report {
    let h = d.len().saturating_sub(1);
    let margins: Vec<f64> = (0..h).map(|n| (1.0 + eta[n]) * d[n] + eps[n] - d[n + 1]).collect();
    let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let violations = margins.iter().filter(|&&m| m < -MARGIN_TOL).count();
    let first_violation = margins.iter().position(|&m| m < -MARGIN_TOL);
    Report {
        check: "quasi_fejer".into(),
        pass: !strict || violations == 0,
        worst_margin: worst,
        violation_rate: if h == 0 { 0.0 } else { violations as f64 / h as f64 },
        details: json!({
            "horizon": h,
            "strict": strict,
            "first_violation": first_violation,
            "d_first": d.first(),
            "d_last": d.last(),
        }),
    }
}

fn decade_ratio(series: &[f64]) -> (f64, f64) {
    let total: f64 = series.iter().sum();
    let cut = series.len() * 9 / 10;
    let head: f64 = series[..cut].iter().sum();
    let ratio = if total > 0.0 { (total - head) / total } else { 0.0 };
    (total, ratio)
}

/// Partial sums of the squared residual series and the share contributed by
/// the last tenth of the horizon.
pub fn summability_from_residuals(res_primal: &[f64], res_yq: &[f64]) -> Report {
    let sq = |s: &[f64]| s.iter().map(|r| r * r).collect::<Vec<_>>();
    let (sum_p, ratio_p) = decade_ratio(&sq(res_primal));
    let (sum_q, ratio_q) = decade_ratio(&sq(res_yq));
    let worst = ratio_p.max(ratio_q);
    Report {
        check: "summability".into(),
        pass: !res_primal.is_empty() && worst < SUMMABILITY_RATIO,
        worst_margin: SUMMABILITY_RATIO - worst,
        violation_rate: f64::from(u8::from(ratio_p >= SUMMABILITY_RATIO) + u8::from(ratio_q >= SUMMABILITY_RATIO))
            / 2.0,
        details: json!({
            "horizon": res_primal.len(),
            "sum_res_primal_sq": sum_p,
            "sum_res_yq_sq": sum_q,
            "decade_ratio_primal": ratio_p,
            "decade_ratio_yq": ratio_q,
        }),
    }
}

pub fn summability_report(trace: &IterateTrace) -> Report {
    let p: Vec<f64> = trace.records.iter().map(|r| r.res_primal).collect();
    let q: Vec<f64> = trace.records.iter().map(|r| r.res_yq).collect();
    summability_from_residuals(&p, &q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbf::{run, FbfConfig, StepRule};
    use crate::operators::{Affine, L1Norm, Subdifferential, ZeroFn, ZeroMap};
    use crate::stochastic::{NoiseKind, NoiseTriple};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn rot_run(cfg: &FbfConfig) -> IterateTrace {
        let a = Subdifferential::of(Arc::new(L1Norm::new(1.0)));
        let b = Affine::skew_rotation(2, 1.0).unwrap();
        let zero = Vector::zeros(2);
        run(a.as_ref(), &b, 1.0, cfg, &Vector::from_raw(vec![1.0, 0.0]), Some(&zero)).unwrap()
    }

    #[test]
    fn rs_telescoping_example() {
        let n = 40;
        let z: Vec<f64> = (0..=n).map(|k| 0.5f64.powi(k)).collect();
        let xi: Vec<f64> = (0..n).map(|k| 0.5f64.powi(k + 1)).collect();
        let tr = SupermartingaleTrace::new(z, vec![0.0; n as usize], vec![0.0; n as usize], xi).unwrap();
        let r = robbins_siegmund_check(&tr);
        assert!(r.pass);
        assert_abs_diff_eq!(r.worst_margin, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.details["xi_sum"].as_f64().unwrap(), 1.0, epsilon = 1e-11);
        assert!(r.details["z_last"].as_f64().unwrap() < 1e-11);
    }

    #[test]
    fn rs_constant_and_growing() {
        let r = robbins_siegmund_check(&SupermartingaleTrace::plain(vec![1.0; 50]).unwrap());
        assert!(r.pass);
        assert_eq!(r.details["z_last"].as_f64(), Some(1.0));
        assert_eq!(r.details["z_tail_oscillation"].as_f64(), Some(0.0));

        let r = robbins_siegmund_check(&SupermartingaleTrace::plain((0..50).map(f64::from).collect()).unwrap());
        assert!(!r.pass);
        assert_eq!(r.violation_rate, 1.0);
        assert_eq!(r.worst_margin, -1.0);
    }

    #[test]
    fn rs_rejects_negative_entries() {
        assert!(SupermartingaleTrace::plain(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn fejer_rotation_run() {
        let a = Subdifferential::of(Arc::new(ZeroFn));
        let b = Affine::skew_rotation(2, 1.0).unwrap();
        let zero = Vector::zeros(2);
        let cfg = FbfConfig::new(0.1, 100).with_step(StepRule::Constant(0.5));
        let tr = run(
            a.as_ref(),
            &b,
            1.0,
            &cfg,
            &Vector::from_raw(vec![1.0, 0.0]),
            Some(&zero),
        )
        .unwrap();
        let d = tr.distances().unwrap();
        assert_eq!(d[0], 1.0);
        assert_abs_diff_eq!(d[1], 0.8125f64.sqrt(), epsilon = 1e-14);
        let r = quasi_fejer_check(&tr, None, None, &ErrorBound::Zero).unwrap();
        assert!(r.pass, "{r:?}");
        let rs = robbins_siegmund_check(&fbf_supermartingale(&tr).unwrap());
        assert!(rs.pass, "{rs:?}");
    }

    #[test]
    fn fejer_proximal_point() {
        // x0 = 2, gamma = 1: 2, 1, 0, 0, ...
        let a = Subdifferential::of(Arc::new(L1Norm::new(1.0)));
        let cfg = FbfConfig::new(0.1, 6)
            .with_step(StepRule::Constant(0.9))
            .keep_iterates(true);
        let tr = run(a.as_ref(), &ZeroMap, 1.0, &cfg, &Vector::from_raw(vec![2.0]), None).unwrap();
        let target = Vector::zeros(1);
        let r = quasi_fejer_check(&tr, Some(&target), None, &ErrorBound::Zero).unwrap();
        assert!(r.pass);
        // Closed form at gamma = 1 on raw sequences.
        let r = fejer_report(&[2.0, 1.0, 0.0, 0.0], &[0.0; 3], &[0.0; 3], true);
        assert!(r.pass);
    }

    #[test]
    fn fejer_adversarial_doubling() {
        let d: Vec<f64> = (0..10).map(|k| 2f64.powi(k)).collect();
        let r = fejer_report(&d, &[0.0; 9], &[0.0; 9], true);
        assert!(!r.pass);
        assert_eq!(r.violation_rate, 1.0);
        assert_eq!(r.worst_margin, -256.0);
    }

    #[test]
    fn missing_distances_is_an_error() {
        let a = Subdifferential::of(Arc::new(L1Norm::new(1.0)));
        let cfg = FbfConfig::new(0.1, 5);
        let tr = run(a.as_ref(), &ZeroMap, 1.0, &cfg, &Vector::from_raw(vec![2.0]), None).unwrap();
        assert!(matches!(
            quasi_fejer_check(&tr, None, None, &ErrorBound::Zero),
            Err(Error::MissingDistances(_))
        ));
    }

    #[test]
    fn realized_bound_holds_pathwise_on_noisy_runs() {
        for seed in 0..20 {
            let noise = NoiseTriple::uniform(NoiseKind::GaussianGeometric { sigma: 0.5, rho: 0.95 });
            let cfg = FbfConfig::new(0.1, 300).with_noise(noise, seed);
            let tr = rot_run(&cfg);
            let r = quasi_fejer_check(&tr, None, None, &ErrorBound::Realized).unwrap();
            assert!(r.pass, "seed {seed}: {r:?}");
            let r = quasi_fejer_check(&tr, None, None, &ErrorBound::Analytic).unwrap();
            assert!(r.pass);
        }
    }

    #[test]
    fn summability_examples() {
        let geo: Vec<f64> = (0..200).map(|k| 0.5f64.powi(k)).collect();
        let r = summability_from_residuals(&geo, &geo);
        assert!(r.pass);
        assert_abs_diff_eq!(
            r.details["sum_res_primal_sq"].as_f64().unwrap(),
            4.0 / 3.0,
            epsilon = 1e-12
        );

        let ones = vec![1.0; 100];
        let r = summability_from_residuals(&ones, &ones);
        assert!(!r.pass);
        assert_abs_diff_eq!(r.details["decade_ratio_primal"].as_f64().unwrap(), 0.1, epsilon = 1e-12);

        let zeros = vec![0.0; 100];
        let r = summability_from_residuals(&zeros, &zeros);
        assert!(r.pass);
        assert_eq!(r.details["sum_res_primal_sq"].as_f64(), Some(0.0));
    }

    #[test]
    fn summability_on_noisy_run() {
        let noise = NoiseTriple::uniform(NoiseKind::GaussianGeometric { sigma: 0.1, rho: 0.9 });
        let cfg = FbfConfig::new(0.1, 2000).with_noise(noise, 1);
        let r = summability_report(&rot_run(&cfg));
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn report_serializes_with_fixed_keys() {
        let r = summability_from_residuals(&[1.0], &[1.0]);
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        for k in ["check", "pass", "worst_margin", "violation_rate", "details"] {
            assert!(v.get(k).is_some(), "missing {k}");
        }
    }
}
