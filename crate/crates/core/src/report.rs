//! Residual records, tolerance policy, sample plans, and the point-parallel
//! evaluation driver.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::jet::{At, Layout, Point};

/// A residual passes iff `r ≤ abs + rel · scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-8, rel: 1e-8 }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Tolerance {
        Tolerance { abs, rel }
    }

    pub fn threshold(&self, scale: f64) -> f64 {
        self.abs + self.rel * scale.abs()
    }

    pub fn passes(&self, r: f64, scale: f64) -> bool {
        r.is_finite() && r <= self.threshold(scale)
    }
}

/// One residual measured at one point.
#[derive(Clone, Debug)]
pub struct Residual {
    pub id: String,
    pub anchor: String,
    pub value: f64,
    pub scale: f64,
}

impl Residual {
    pub fn new(id: impl Into<String>, anchor: impl Into<String>, value: f64, scale: f64) -> Self {
        Residual {
            id: id.into(),
            anchor: anchor.into(),
            value,
            scale,
        }
    }
}

/// Aggregated verdict of one check over all sample points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check_id: String,
    pub anchor: String,
    /// Worst residual in scientific notation, `inf` for evaluation errors.
    pub residual: String,
    pub point: Vec<f64>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn residual_value(&self) -> f64 {
        self.residual.parse().unwrap_or(f64::INFINITY)
    }
}

pub fn format_residual(r: f64) -> String {
    if r.is_finite() {
        format!("{r:.2e}")
    } else {
        "inf".to_string()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    pub records: Vec<CheckRecord>,
    pub points: usize,
    /// Wall time; reported in text output only so machine output stays
    /// reproducible.
    #[serde(skip)]
    pub elapsed_ms: u128,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Report {
        Report {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn get(&self, id: &str) -> Option<&CheckRecord> {
        self.records.iter().find(|r| r.check_id == id)
    }

    /// Verdict of every record whose id starts with `prefix`.
    pub fn group_pass(&self, prefix: &str) -> bool {
        self.records
            .iter()
            .filter(|r| r.check_id.starts_with(prefix))
            .all(|r| r.pass)
    }

    pub fn failing(&self) -> Vec<&CheckRecord> {
        self.records.iter().filter(|r| !r.pass).collect()
    }

    pub fn failing_anchors(&self) -> Vec<&str> {
        self.failing().iter().map(|r| r.anchor.as_str()).collect()
    }

    pub fn extend(&mut self, other: Report) {
        self.points = self.points.max(other.points);
        self.elapsed_ms += other.elapsed_ms;
        self.records.extend(other.records);
    }

    pub fn push(&mut self, rec: CheckRecord) {
        self.records.push(rec);
    }

    /// Record a pass/fail without a numeric residual.
    pub fn push_flag(&mut self, id: &str, anchor: &str, pass: bool, note: Option<String>) {
        self.records.push(CheckRecord {
            check_id: id.to_string(),
            anchor: anchor.to_string(),
            residual: format_residual(if pass { 0.0 } else { f64::INFINITY }),
            point: Vec::new(),
            pass,
            note,
        });
    }

    /// Add a record stating whether two verdicts agree.
    pub fn push_agreement(&mut self, id: &str, anchor: &str, a: (&str, bool), b: (&str, bool)) {
        let pass = a.1 == b.1;
        let note = if pass {
            None
        } else {
            Some(
                GeomError::VerdictDisagreement(format!(
                    "{} says {}, {} says {}",
                    a.0,
                    verdict_word(a.1),
                    b.0,
                    verdict_word(b.1)
                ))
                .to_string(),
            )
        };
        self.push_flag(id, anchor, pass, note);
    }

    pub fn disagreements(&self) -> usize {
        self.records
            .iter()
            .filter(|r| {
                !r.pass
                    && r.note
                        .as_deref()
                        .is_some_and(|n| n.starts_with("verdicts disagree"))
            })
            .count()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let idw = self
            .records
            .iter()
            .map(|r| r.check_id.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let anw = self
            .records
            .iter()
            .map(|r| r.anchor.chars().count())
            .max()
            .unwrap_or(6)
            .max(6);
        let _ = writeln!(s, "# {}", self.title);
        let _ = writeln!(
            s,
            "{:<idw$}  {:<anw$}  {:>9}  {:<6}  worst point",
            "check", "anchor", "residual", "result"
        );
        for r in &self.records {
            let pt = r
                .point
                .iter()
                .map(|x| format!("{x:.4}"))
                .collect::<Vec<_>>()
                .join(", ");
            let pad = anw - r.anchor.chars().count();
            let _ = writeln!(
                s,
                "{:<idw$}  {}{}  {:>9}  {:<6}  [{}]{}",
                r.check_id,
                r.anchor,
                " ".repeat(pad),
                r.residual,
                if r.pass { "PASS" } else { "FAIL" },
                pt,
                r.note.as_ref().map(|n| format!("  ({n})")).unwrap_or_default()
            );
        }
        if !self.records.is_empty() {
            let _ = writeln!(
                s,
                "overall: {}  ({} checks, {} points, {} ms)",
                verdict_word(self.pass()).to_uppercase(),
                self.records.len(),
                self.points,
                self.elapsed_ms
            );
        }
        s
    }

    pub fn to_machine(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            title: &'a str,
            verdict: &'a str,
            points: usize,
            records: &'a [CheckRecord],
        }
        serde_json::to_string_pretty(&Doc {
            title: &self.title,
            verdict: verdict_word(self.pass()),
            points: self.points,
            records: &self.records,
        })
        .expect("report serializes")
    }

    pub fn from_machine(text: &str) -> Result<Report> {
        #[derive(Deserialize)]
        struct Doc {
            title: String,
            points: usize,
            records: Vec<CheckRecord>,
        }
        let d: Doc = serde_json::from_str(text).map_err(|e| GeomError::ParseError {
            line: e.line(),
            col: e.column(),
            msg: e.to_string(),
        })?;
        Ok(Report {
            title: d.title,
            records: d.records,
            points: d.points,
            elapsed_ms: 0,
        })
    }
}

fn verdict_word(p: bool) -> &'static str {
    if p {
        "pass"
    } else {
        "fail"
    }
}

/// Points at which a pipeline is evaluated, with the jet layout they share.
#[derive(Clone, Debug)]
pub struct SamplePlan {
    pub layout: Arc<Layout>,
    pub points: Vec<Point>,
}

/// Layout order used by all pipelines; nested constructions request jets a
/// few orders above what the checks themselves differentiate.
pub const PIPELINE_ORDER: usize = 6;

impl SamplePlan {
    pub fn new(dim: usize, points: Vec<Point>) -> SamplePlan {
        SamplePlan {
            layout: Layout::new(dim, PIPELINE_ORDER),
            points,
        }
    }

    pub fn with_layout(layout: Arc<Layout>, points: Vec<Point>) -> SamplePlan {
        SamplePlan { layout, points }
    }

    pub fn sites(&self) -> Vec<At> {
        self.points
            .iter()
            .map(|p| At::new(self.layout.clone(), p.clone()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Toric chart `(t¹..tⁿ, μ¹..μⁿ)`: a `grid`-per-axis lattice on the μ box
    /// shrunk toward `center`, kept where `inside` holds after undoing the
    /// shrink, crossed with `fibers` random torus points.
    #[allow(clippy::too_many_arguments)]
    pub fn toric(
        bounds: &[(f64, f64)],
        center: &[f64],
        inside: impl Fn(&[f64]) -> bool,
        grid: usize,
        fibers: usize,
        shrink: f64,
        seed: u64,
    ) -> SamplePlan {
        let n = bounds.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts: Vec<Vec<f64>> = (0..fibers.max(1))
            .map(|_| {
                (0..n)
                    .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                    .collect()
            })
            .collect();
        let mut mus = Vec::new();
        let total = grid.max(1).pow(n as u32);
        for k in 0..total {
            let mut rem = k;
            let mut mu = vec![0.0; n];
            for (i, (lo, hi)) in bounds.iter().enumerate() {
                let g = rem % grid.max(1);
                rem /= grid.max(1);
                let frac = if grid <= 1 {
                    0.5
                } else {
                    (g as f64 + 0.5) / grid as f64
                };
                let raw = lo + frac * (hi - lo);
                mu[i] = center[i] + (1.0 - shrink) * (raw - center[i]);
            }
            // inside the domain shrunk toward the center
            let expanded: Vec<f64> = mu
                .iter()
                .zip(center)
                .map(|(m, c)| c + (m - c) / (1.0 - shrink))
                .collect();
            if inside(&expanded) && inside(&mu) {
                mus.push(mu);
            }
        }
        let mut pts = Vec::new();
        for mu in &mus {
            for t in &ts {
                let mut p = t.clone();
                p.extend_from_slice(mu);
                pts.push(Point(p));
            }
        }
        SamplePlan::new(2 * n, pts)
    }

    /// `count` uniform points of the box accepted by `inside`.
    pub fn random_box(
        bounds: &[(f64, f64)],
        inside: impl Fn(&[f64]) -> bool,
        count: usize,
        seed: u64,
    ) -> SamplePlan {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        let mut tries = 0;
        while pts.len() < count && tries < 1000 * count.max(1) {
            tries += 1;
            let p: Vec<f64> = bounds
                .iter()
                .map(|(lo, hi)| rng.random_range(*lo..*hi))
                .collect();
            if inside(&p) {
                pts.push(Point(p));
            }
        }
        SamplePlan::new(bounds.len(), pts)
    }
}

/// Evaluate `f` at every site (in parallel) and fold the residuals into one
/// record per check id. Errors at a site become a failing `error_id` record.
pub fn evaluate<F>(plan: &SamplePlan, tol: Tolerance, error_id: &str, anchor: &str, f: F) -> Vec<CheckRecord>
where
    F: Fn(&At) -> Result<Vec<Residual>> + Sync,
{
    let sites = plan.sites();
    let results: Vec<Result<Vec<Residual>>> = sites.par_iter().map(&f).collect();
    fold_results(&plan.points, results, tol, error_id, anchor)
}

pub fn fold_results(
    points: &[Point],
    results: Vec<Result<Vec<Residual>>>,
    tol: Tolerance,
    error_id: &str,
    anchor: &str,
) -> Vec<CheckRecord> {
    struct Acc {
        anchor: String,
        worst: f64,
        value: f64,
        point: Vec<f64>,
        pass: bool,
    }
    let mut order: Vec<String> = Vec::new();
    let mut accs: HashMap<String, Acc> = HashMap::new();
    let mut errors: Vec<(Vec<f64>, String)> = Vec::new();
    for (p, res) in points.iter().zip(results) {
        match res {
            Ok(rs) => {
                for r in rs {
                    let ratio = if r.value.is_finite() {
                        r.value / tol.threshold(r.scale)
                    } else {
                        f64::INFINITY
                    };
                    let ok = tol.passes(r.value, r.scale);
                    let e = accs.entry(r.id.clone()).or_insert_with(|| {
                        order.push(r.id.clone());
                        Acc {
                            anchor: r.anchor.clone(),
                            worst: f64::NEG_INFINITY,
                            value: 0.0,
                            point: p.0.clone(),
                            pass: true,
                        }
                    });
                    e.pass &= ok;
                    if ratio > e.worst || (ratio.is_nan() && e.worst.is_finite()) {
                        e.worst = if ratio.is_nan() { f64::INFINITY } else { ratio };
                        e.value = r.value;
                        e.point = p.0.clone();
                    }
                }
            }
            Err(e) => errors.push((p.0.clone(), e.to_string())),
        }
    }
    let mut out: Vec<CheckRecord> = order
        .into_iter()
        .map(|id| {
            let a = accs.remove(&id).unwrap();
            CheckRecord {
                check_id: id,
                anchor: a.anchor,
                residual: format_residual(a.value),
                point: a.point,
                pass: a.pass && a.value.is_finite(),
                note: None,
            }
        })
        .collect();
    if let Some((p, msg)) = errors.first() {
        out.push(CheckRecord {
            check_id: error_id.to_string(),
            anchor: anchor.to_string(),
            residual: format_residual(f64::INFINITY),
            point: p.clone(),
            pass: false,
            note: Some(if errors.len() > 1 {
                format!("{msg} (and {} more points)", errors.len() - 1)
            } else {
                msg.clone()
            }),
        });
    }
    out
}
