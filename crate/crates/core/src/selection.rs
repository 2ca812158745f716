//! Discovery-quality metrics, the tolerance sweep with Pareto/knee selection,
//! and the per-axis regression diagnostic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{summand_keys, RegressionProblem};
use crate::error::{CtsrError, Result};
use crate::library::{ScalarCandidate, ScalarFactor};
use crate::solver::{train_stridge, Hyperparams, SparseSolution};
use crate::symbolic::CandidateTerm;

/// The exact equation: canonical terms with their true coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub terms: Vec<(CandidateTerm, f64)>,
}

impl GroundTruth {
    pub fn new(terms: Vec<(CandidateTerm, f64)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(CtsrError::Spec("ground truth needs at least one term".into()));
        }
        if let Some((t, _)) = terms.iter().find(|(_, c)| *c == 0.0 || !c.is_finite()) {
            return Err(CtsrError::Spec(format!("ground-truth coefficient of `{t}` must be finite and nonzero")));
        }
        let terms = terms
            .into_iter()
            .map(|(t, c)| Ok((t.canonicalize()?, c)))
            .collect::<Result<_>>()?;
        Ok(GroundTruth { terms })
    }

    /// `(column label, coefficient)` pairs for a tensor problem.
    pub fn labelled(&self) -> Vec<(String, f64)> {
        self.terms.iter().map(|(t, c)| (t.to_string(), *c)).collect()
    }

    /// Exact equation of one component in component-wise form, with each
    /// scalar term mapped to the label of a column of `problem` built from
    /// `library`. Repeated scalar terms are merged and cancelled ones dropped.
    pub fn scalar_component(&self, dim: usize, free: &[u8], library: &[ScalarCandidate], problem: &RegressionProblem) -> Result<Vec<(String, f64)>> {
        let mut merged: BTreeMap<ScalarCandidate, f64> = BTreeMap::new();
        for (term, coef) in &self.terms {
            for keys in summand_keys(term, dim, free) {
                let cand = ScalarCandidate {
                    factors: keys
                        .into_iter()
                        .map(|k| ScalarFactor {
                            quantity: k.quantity,
                            components: k.components,
                            deriv: k.deriv,
                        })
                        .collect(),
                };
                *merged.entry(normalize_scalar(&cand)).or_default() += coef;
            }
        }
        let mut by_norm: BTreeMap<ScalarCandidate, Vec<String>> = BTreeMap::new();
        for c in library {
            by_norm.entry(normalize_scalar(c)).or_default().push(c.to_string());
        }
        let resolve = |label: &str| -> Option<String> {
            if problem.column_index(label).is_some() {
                return Some(label.to_string());
            }
            let p = problem.pruned.iter().find(|p| p.label == label)?;
            p.duplicate_of().map(str::to_string)
        };
        merged
            .into_iter()
            .filter(|(_, c)| c.abs() > 1e-14)
            .map(|(cand, c)| {
                by_norm
                    .get(&cand)
                    .and_then(|labels| labels.iter().find_map(|l| resolve(l)))
                    .map(|l| (l, c))
                    .ok_or_else(|| CtsrError::UnresolvedTruth(cand.to_string()))
            })
            .collect()
    }
}

/// Sorts derivative axes within factors and the factors themselves.
fn normalize_scalar(c: &ScalarCandidate) -> ScalarCandidate {
    let mut factors: Vec<ScalarFactor> = c
        .factors
        .iter()
        .map(|f| {
            let mut f = f.clone();
            f.deriv.sort_unstable();
            f
        })
        .collect();
    factors.sort();
    ScalarCandidate { factors }
}

fn truth_indices(solution: &SparseSolution, truth: &[(String, f64)]) -> Result<Vec<usize>> {
    truth
        .iter()
        .map(|(l, _)| {
            solution
                .columns
                .iter()
                .position(|c| c == l)
                .ok_or_else(|| CtsrError::UnresolvedTruth(l.clone()))
        })
        .collect()
}

/// Mean relative coefficient error over the true terms, in percent. A true
/// term with a zero coefficient counts as 100%.
pub fn prediction_error_labels(solution: &SparseSolution, truth: &[(String, f64)]) -> Result<f64> {
    let idx = truth_indices(solution, truth)?;
    if truth.is_empty() {
        return Err(CtsrError::Spec("ground truth needs at least one term".into()));
    }
    let total: f64 = idx
        .iter()
        .zip(truth)
        .map(|(&i, (_, c))| {
            let xi = solution.coefficients[i];
            if xi == 0.0 { 1.0 } else { (xi - c).abs() / c.abs() }
        })
        .sum();
    Ok(100.0 * total / truth.len() as f64)
}

/// Number of nonzero coefficients on terms absent from the exact equation.
pub fn redundancy_count_labels(solution: &SparseSolution, truth: &[(String, f64)]) -> Result<usize> {
    let idx: BTreeSet<usize> = truth_indices(solution, truth)?.into_iter().collect();
    Ok(solution.support.iter().filter(|s| !idx.contains(s)).count())
}

pub fn prediction_error(solution: &SparseSolution, truth: &GroundTruth) -> Result<f64> {
    prediction_error_labels(solution, &truth.labelled())
}

pub fn redundancy_count(solution: &SparseSolution, truth: &GroundTruth) -> Result<usize> {
    redundancy_count_labels(solution, &truth.labelled())
}

/// Logarithmic tolerance grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            min: 1e-5,
            max: 1e3,
            points: 60,
        }
    }
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0 && self.max >= self.min && self.max.is_finite()) || self.points == 0 {
            return Err(CtsrError::Spec(format!("invalid tolerance grid: {self:?}")));
        }
        if self.points == 1 {
            return Ok(vec![self.min]);
        }
        let (a, b) = (self.min.log10(), self.max.log10());
        Ok((0..self.points)
            .map(|i| 10f64.powf(a + (b - a) * i as f64 / (self.points - 1) as f64))
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub d_tol: f64,
    pub sparsity: usize,
    /// `‖lhs − Θξ‖₂` on the full problem.
    pub residual: f64,
    pub solution: SparseSolution,
}

/// Seed of the `index`-th run of a batch started from `seed`; index 0 keeps it.
pub fn derived_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// One [`train_stridge`] run per grid tolerance, in grid order.
pub fn sweep_dtol(problem: &RegressionProblem, hyper: &Hyperparams, grid: &GridSpec) -> Result<Vec<ParetoPoint>> {
    grid.values()?
        .into_par_iter()
        .enumerate()
        .map(|(i, d_tol)| {
            let h = Hyperparams {
                d_tol,
                seed: derived_seed(hyper.seed, i),
                ..hyper.clone()
            };
            let solution = train_stridge(problem, &h)?;
            Ok(ParetoPoint {
                d_tol,
                sparsity: solution.nnz(),
                residual: solution.residual_norm(problem),
                solution,
            })
        })
        .collect()
}

fn dominates(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    a.sparsity <= b.sparsity && a.residual <= b.residual && (a.sparsity < b.sparsity || a.residual < b.residual)
}

/// Indices of the non-dominated points (fewer terms, lower residual), ordered
/// by sparsity. Of identical points only the one with the smallest tolerance
/// is kept.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<usize> {
    let mut front: Vec<usize> = (0..points.len())
        .filter(|&i| !points.iter().any(|q| dominates(q, &points[i])))
        .filter(|&i| {
            let p = &points[i];
            !points.iter().enumerate().any(|(j, q)| {
                j != i && q.sparsity == p.sparsity && q.residual == p.residual && (q.d_tol, j) < (p.d_tol, i)
            })
        })
        .collect();
    front.sort_by(|&a, &b| points[a].sparsity.cmp(&points[b].sparsity).then(points[b].residual.total_cmp(&points[a].residual)));
    front
}

/// Front point farthest from the chord joining the front's sparsest point to
/// its far end, in (sparsity, log₁₀ residual) coordinates scaled to the unit
/// box. When richer models in the sweep were dominated, the far end is moved
/// out to the largest sparsity seen at the lowest front residual, so a front
/// that stops at its floor still has a corner. A straight front returns its
/// middle point. `None` for fewer than two front points.
pub fn knee_point(points: &[ParetoPoint], front: &[usize]) -> Option<usize> {
    if front.len() < 2 {
        return None;
    }
    let floor = front
        .iter()
        .map(|&i| points[i].residual)
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor * 1e-3 } else { 1e-300 };
    let mut xy: Vec<(f64, f64)> = front
        .iter()
        .map(|&i| (points[i].sparsity as f64, points[i].residual.max(floor).log10()))
        .collect();
    let last = xy[xy.len() - 1];
    let richest = points.iter().map(|p| p.sparsity).max().unwrap_or(0) as f64;
    let anchor = (richest.max(last.0), last.1);
    xy.push(anchor);
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = xy.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = xy.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi - lo } else { 1.0 })
    };
    let (x0, sx) = span(|p| p.0);
    let (y0, sy) = span(|p| p.1);
    let unit: Vec<(f64, f64)> = xy.iter().map(|(x, y)| ((x - x0) / sx, (y - y0) / sy)).collect();
    let (a, b) = (unit[0], unit[unit.len() - 1]);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    let dist: Vec<f64> = unit[..front.len()]
        .iter()
        .map(|p| if len > 0.0 { (dx * (p.1 - a.1) - dy * (p.0 - a.0)).abs() / len } else { 0.0 })
        .collect();
    let (best, max) = dist
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv + 1e-12 { (i, v) } else { (bi, bv) });
    if max <= 1e-9 {
        return Some(front[(front.len() - 1) / 2]);
    }
    Some(front[best])
}

/// Sweep output with front membership and the suggested tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<ParetoPoint>,
    pub front: Vec<usize>,
    pub knee: Option<usize>,
    /// Description of the knee rule, reported with the suggestion.
    pub knee_method: String,
}

impl SweepReport {
    pub fn new(points: Vec<ParetoPoint>) -> Self {
        let front = pareto_front(&points);
        let knee = knee_point(&points, &front);
        SweepReport {
            points,
            front,
            knee,
            knee_method: "maximum distance to the chord from the sparsest front point to (largest sweep sparsity, lowest front residual) in unit-scaled (terms, log10 residual)".into(),
        }
    }

    pub fn suggested_dtol(&self) -> Option<f64> {
        self.knee.map(|k| self.points[k].d_tol)
    }

    /// The knee, or the only front point when every run agrees on one model.
    pub fn selected(&self) -> Option<usize> {
        match self.front.as_slice() {
            [only] => Some(*only),
            _ => self.knee,
        }
    }

    /// Columns `d_tol, sparsity, residual, is_front, is_knee`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["d_tol", "sparsity", "residual", "is_front", "is_knee"])?;
        for (i, p) in self.points.iter().enumerate() {
            out.write_record([
                format!("{:e}", p.d_tol),
                p.sparsity.to_string(),
                format!("{:e}", p.residual),
                self.front.contains(&i).to_string(),
                (self.knee == Some(i)).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Scatter of residual against term count with the front joined and the
    /// knee circled.
    pub fn to_svg(&self) -> String {
        let (w, h, m) = (640.0, 420.0, 60.0);
        let floor = self
            .points
            .iter()
            .map(|p| p.residual)
            .filter(|r| *r > 0.0)
            .fold(f64::INFINITY, f64::min);
        let floor = if floor.is_finite() { floor * 0.5 } else { 1e-16 };
        let ly = |r: f64| r.max(floor).log10();
        let xmax = self.points.iter().map(|p| p.sparsity).max().unwrap_or(1).max(1) as f64;
        let (ylo, yhi) = self.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(ly(p.residual)), hi.max(ly(p.residual)))
        });
        let (ylo, yhi) = if ylo.is_finite() && yhi > ylo { (ylo.floor(), yhi.ceil()) } else { (ylo.floor() - 1.0, ylo.floor() + 1.0) };
        let px = |s: usize| m + (w - 2.0 * m) * s as f64 / xmax;
        let py = |r: f64| h - m - (h - 2.0 * m) * (ly(r) - ylo) / (yhi - ylo);

        let mut svg = String::new();
        let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
            h - m,
            w - m
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">number of terms</text>"#, w / 2.0, h - 20.0);
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{}" transform="rotate(-90 18 {})" text-anchor="middle">log10 residual</text>"#,
            h / 2.0,
            h / 2.0
        );
        for k in 0..=4 {
            let y = ylo + (yhi - ylo) * k as f64 / 4.0;
            let yy = h - m - (h - 2.0 * m) * k as f64 / 4.0;
            let _ = writeln!(svg, r#"<text x="{}" y="{yy}" text-anchor="end">{y:.1}</text>"#, m - 6.0);
        }
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w - m, h - m + 16.0, xmax as usize);
        let _ = writeln!(svg, r#"<text x="{m}" y="{}" text-anchor="middle">0</text>"#, h - m + 16.0);
        for p in &self.points {
            let _ = writeln!(svg, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#888"/>"##, px(p.sparsity), py(p.residual));
        }
        if !self.front.is_empty() {
            let path: Vec<String> = self
                .front
                .iter()
                .map(|&i| format!("{:.2},{:.2}", px(self.points[i].sparsity), py(self.points[i].residual)))
                .collect();
            let _ = writeln!(
                svg,
                r##"<polyline points="{}" fill="none" stroke="#1f5fbf" stroke-dasharray="6 4"/>"##,
                path.join(" ")
            );
        }
        if let Some(k) = self.knee {
            let p = &self.points[k];
            let _ = writeln!(
                svg,
                r##"<circle cx="{:.2}" cy="{:.2}" r="8" fill="none" stroke="#c0392b" stroke-width="2"/>"##,
                px(p.sparsity),
                py(p.residual)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}">d_tol = {:.3e}</text>"#,
                px(p.sparsity) + 10.0,
                py(p.residual) - 10.0,
                p.d_tol
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Result of one regression in the per-axis diagnostic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRun {
    /// Free component of the rows used; empty for the stacked run.
    pub component: Vec<u8>,
    pub rows: usize,
    pub error: f64,
    pub redundant: usize,
    pub solution: SparseSolution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionSplit {
    pub per_axis: Vec<SplitRun>,
    pub stacked: SplitRun,
}

impl DimensionSplit {
    pub fn worst_axis_error(&self) -> f64 {
        self.per_axis.iter().map(|r| r.error).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Fits each free-component row block on its own and the stacked problem,
/// reporting prediction errors against the exact equation.
pub fn dimension_split_diagnostic(problem: &RegressionProblem, truth: &GroundTruth, hyper: &Hyperparams) -> Result<DimensionSplit> {
    if problem.rows.iter().any(|r| r.free.len() != 1) {
        return Err(CtsrError::Spec("the per-axis diagnostic needs a first-order target".into()));
    }
    let labels = truth.labelled();
    let run = |component: Vec<u8>, p: &RegressionProblem| -> Result<SplitRun> {
        let solution = train_stridge(p, hyper)?;
        Ok(SplitRun {
            component,
            rows: p.n_rows(),
            error: prediction_error_labels(&solution, &labels)?,
            redundant: redundancy_count_labels(&solution, &labels)?,
            solution,
        })
    };
    let per_axis = problem
        .row_blocks()
        .into_par_iter()
        .map(|(free, rows)| run(free, &problem.select_rows(&rows)))
        .collect::<Result<Vec<_>>>()?;
    let stacked = run(Vec::new(), problem)?;
    Ok(DimensionSplit { per_axis, stacked })
}
