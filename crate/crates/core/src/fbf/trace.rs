use std::io::{self, Write};

use serde::Serialize;

use crate::space::Vector;

/// Column header of the trace CSV.
pub const CSV_HEADER: &str = "n,gamma,res_primal,res_yq,dist_ref,metric_dist,moment_a,moment_b,moment_c";

/// Full iterates of one step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Iterates {
    pub x: Vector,
    pub y: Vector,
    pub p: Vector,
    pub q: Vector,
}

/// Everything recorded for iteration `n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub n: usize,
    pub gamma: f64,
    /// `||x_n - p_n||`
    pub res_primal: f64,
    /// `||y_n - q_n||`
    pub res_yq: f64,
    /// `||x_n - x_ref||`
    pub dist_ref: Option<f64>,
    /// `||x_n - x_ref||_{U_n^{-1}}`
    pub metric_dist: Option<f64>,
    /// Analytic `sqrt(E||a_n||^2)` and friends.
    pub moment_a: f64,
    pub moment_b: f64,
    pub moment_c: f64,
    /// Realized `||a_n||`, `||b_n||`, `||c_n||`.
    pub norm_a: f64,
    pub norm_b: f64,
    pub norm_c: f64,
    /// `eta_n` of the metric sequence (0 without one).
    pub eta: f64,
    pub iterates: Option<Iterates>,
}

/// Per-iteration history of one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterateTrace {
    pub records: Vec<TraceRecord>,
    /// `x_N` after the last recorded step.
    pub final_x: Vector,
    pub final_dist_ref: Option<f64>,
    pub final_metric_dist: Option<f64>,
    pub beta: f64,
    /// `sup ||U_n||` (1 without a metric sequence).
    pub mu: f64,
    /// Lower spectral bound of the metrics (1 without a metric sequence).
    pub alpha: f64,
    pub noisy: bool,
    pub stopped_by_tolerance: bool,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl IterateTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_metric(&self) -> bool {
        self.records.first().is_some_and(|r| r.metric_dist.is_some())
    }

    /// `||x_n - x_ref||` for `n = 0..=N`.
    pub fn distances(&self) -> Option<Vec<f64>> {
        let mut out: Vec<f64> = self.records.iter().map(|r| r.dist_ref).collect::<Option<_>>()?;
        out.push(self.final_dist_ref?);
        Some(out)
    }

    /// `||x_n - x_ref||_{U_n^{-1}}` for `n = 0..=N`.
    pub fn metric_distances(&self) -> Option<Vec<f64>> {
        let mut out: Vec<f64> = self.records.iter().map(|r| r.metric_dist).collect::<Option<_>>()?;
        out.push(self.final_metric_dist?);
        Some(out)
    }

    /// Metric distances when a metric sequence was used, plain ones otherwise.
    pub fn fejer_distances(&self) -> Option<Vec<f64>> {
        if self.has_metric() {
            self.metric_distances()
        } else {
            self.distances()
        }
    }

    /// `[x_0, ..., x_N]`, when iterates were kept.
    pub fn iterate_path(&self) -> Option<Vec<&Vector>> {
        let mut out: Vec<&Vector> = self
            .records
            .iter()
            .map(|r| r.iterates.as_ref().map(|it| &it.x))
            .collect::<Option<_>>()?;
        out.push(&self.final_x);
        Some(out)
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.records.last().map(|r| r.res_primal)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{},{},{:e},{:e},{:e}",
                r.n,
                r.gamma,
                r.res_primal,
                r.res_yq,
                fmt_opt(r.dist_ref),
                fmt_opt(r.metric_dist),
                r.moment_a,
                r.moment_b,
                r.moment_c
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    /// Long-format dump `n,vector,index,value` of all kept iterates.
    pub fn write_iterates_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n,vector,index,value")?;
        for r in &self.records {
            if let Some(it) = &r.iterates {
                for (label, v) in [("x", &it.x), ("y", &it.y), ("p", &it.p), ("q", &it.q)] {
                    for (i, val) in v.iter().enumerate() {
                        writeln!(w, "{},{label},{i},{val:e}", r.n)?;
                    }
                }
            }
        }
        for (i, val) in self.final_x.iter().enumerate() {
            writeln!(w, "{},x,{i},{val:e}", self.records.len())?;
        }
        Ok(())
    }
}
