//! Numeric evaluation of candidates by index contraction and assembly of the
//! regression system `lhs ≈ Θ ξ`.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ComponentKey, SampleTable};
use crate::error::{CtsrError, Result};
use crate::library::{tuples, ScalarCandidate};
use crate::symbolic::{CandidateTerm, Suffix, TensorFactor};

/// Anything that can supply field component values at one point.
pub trait FieldValues {
    fn value(&self, key: &ComponentKey) -> Option<f64>;
}

/// One row of a sample table viewed as a point source.
#[derive(Clone, Copy)]
pub struct SampleRow<'a> {
    pub table: &'a SampleTable,
    pub row: usize,
}

impl FieldValues for SampleRow<'_> {
    fn value(&self, key: &ComponentKey) -> Option<f64> {
        self.table.value(self.row, key)
    }
}

impl<F: Fn(&ComponentKey) -> Option<f64>> FieldValues for F {
    fn value(&self, key: &ComponentKey) -> Option<f64> {
        self(key)
    }
}

/// Component key addressed by a factor under a suffix → axis assignment.
pub fn factor_key(factor: &TensorFactor, axis: impl Fn(Suffix) -> u8) -> ComponentKey {
    let bo = factor.kind.base_order as usize;
    let comps: Vec<u8> = factor.slots[..bo].iter().map(|&s| axis(s)).collect();
    let deriv: Vec<u8> = factor.slots[bo..].iter().map(|&s| axis(s)).collect();
    let mut comps = comps;
    if factor.kind.symmetric_base {
        comps.sort_unstable();
    }
    ComponentKey::new(factor.kind.base.clone(), &comps).with_deriv(&deriv)
}

/// Visits every assignment of axes to the term's suffixes with the free
/// suffixes pinned to `free_values` (in ascending label order), passing the
/// per-factor component keys of each summand.
fn for_each_summand(term: &CandidateTerm, dim: usize, free_values: &[u8], mut f: impl FnMut(Vec<ComponentKey>)) {
    let free = term.free_suffixes();
    assert_eq!(free.len(), free_values.len(), "free value count must match term order");
    let repeated: Vec<Suffix> = term.repeated_suffixes().into_iter().collect();
    let mut axis: BTreeMap<Suffix, u8> = free.iter().copied().zip(free_values.iter().copied()).collect();
    for assignment in tuples(dim, repeated.len()) {
        for (s, a) in repeated.iter().zip(&assignment) {
            axis.insert(*s, *a);
        }
        let keys = term.factors().iter().map(|fa| factor_key(fa, |s| axis[&s])).collect();
        f(keys);
    }
}

/// Per-summand factor keys of one component of a candidate.
pub fn summand_keys(term: &CandidateTerm, dim: usize, free_values: &[u8]) -> Vec<Vec<ComponentKey>> {
    let mut out = Vec::new();
    for_each_summand(term, dim, free_values, |keys| out.push(keys));
    out
}

/// Value of one component of a candidate: the factor product summed over every
/// axis assignment of the repeated suffixes. Axes are 0-based.
pub fn evaluate_candidate(term: &CandidateTerm, source: &impl FieldValues, dim: usize, free_values: &[u8]) -> Result<f64> {
    let mut total = 0.0;
    let mut missing = None;
    for_each_summand(term, dim, free_values, |keys| {
        let mut prod = 1.0;
        for k in &keys {
            match source.value(k) {
                Some(v) => prod *= v,
                None => {
                    missing.get_or_insert_with(|| k.name());
                }
            }
        }
        total += prod;
    });
    match missing {
        Some(name) => Err(CtsrError::MissingField(name)),
        None => Ok(total),
    }
}

/// Free-index tuples that become row blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStacking {
    /// Every ordered tuple, `dim^order` blocks.
    #[default]
    Ordered,
    /// Non-decreasing tuples only (for symmetric targets).
    UpperTriangle,
}

impl RowStacking {
    pub fn tuples(self, dim: usize, order: usize) -> Vec<Vec<u8>> {
        let all = tuples(dim, order);
        match self {
            RowStacking::Ordered => all,
            RowStacking::UpperTriangle => all.into_iter().filter(|t| t.windows(2).all(|w| w[0] <= w[1])).collect(),
        }
    }
}

/// What the left-hand side of the regression is.
#[derive(Clone, Debug, PartialEq)]
pub enum LhsSpec {
    /// Time derivative of a quantity of the target order.
    TimeDerivative { quantity: String },
    /// Fixed linear combination of tensor terms of the target order.
    Combination(Vec<(f64, CandidateTerm)>),
    /// A stored quantity of the target order used directly.
    Channel { quantity: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub sample: usize,
    pub free: Vec<u8>,
}

/// Why a column was removed before regression.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneReason {
    Zero,
    /// Parallel to the named retained column.
    ParallelTo(String),
    /// In the span of the retained columns without being parallel to one.
    Dependent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedColumn {
    pub label: String,
    pub reason: PruneReason,
}

impl PrunedColumn {
    /// The retained column this one duplicates, if it is parallel to one.
    pub fn duplicate_of(&self) -> Option<&str> {
        match &self.reason {
            PruneReason::ParallelTo(l) => Some(l),
            _ => None,
        }
    }
}

/// The assembled system.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionProblem {
    pub theta: DMatrix<f64>,
    pub lhs: DVector<f64>,
    pub columns: Vec<String>,
    /// Factor count per column; used to prefer the simpler of two parallel columns.
    pub column_factors: Vec<usize>,
    pub rows: Vec<RowMeta>,
    pub pruned: Vec<PrunedColumn>,
}

impl RegressionProblem {
    pub fn n_rows(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.theta.ncols()
    }

    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == label)
    }

    /// Sub-problem with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> RegressionProblem {
        RegressionProblem {
            theta: self.theta.select_rows(rows),
            lhs: self.lhs.select_rows(rows),
            columns: self.columns.clone(),
            column_factors: self.column_factors.clone(),
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
            pruned: self.pruned.clone(),
        }
    }

    /// Row indices grouped by free tuple, in first-appearance order.
    pub fn row_blocks(&self) -> Vec<(Vec<u8>, Vec<usize>)> {
        let mut blocks: Vec<(Vec<u8>, Vec<usize>)> = Vec::new();
        for (r, meta) in self.rows.iter().enumerate() {
            match blocks.iter_mut().find(|(t, _)| *t == meta.free) {
                Some((_, rows)) => rows.push(r),
                None => blocks.push((meta.free.clone(), vec![r])),
            }
        }
        blocks
    }

    /// Drops all-zero columns, columns parallel to a kept one, and then columns
    /// in the span of the kept ones. Columns with fewer factors are preferred,
    /// then earlier ones.
    pub fn prune_dependent(mut self, tol: f64) -> RegressionProblem {
        let (keep, parallel) = parallel_columns(&self.theta, &self.column_factors, tol);
        let mut dropped: Vec<(usize, PruneReason)> = parallel
            .into_iter()
            .map(|(c, k)| (c, k.map_or(PruneReason::Zero, |k| PruneReason::ParallelTo(self.columns[k].clone()))))
            .collect();
        let mut order = keep;
        order.sort_by_key(|&c| (self.column_factors[c], c));
        let mut keep = Vec::with_capacity(order.len());
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for c in order {
            let col = self.theta.column(c);
            let mut r: DVector<f64> = col / col.norm();
            for _ in 0..2 {
                for q in &basis {
                    let d = q.dot(&r);
                    r.axpy(-d, q, 1.0);
                }
            }
            let norm = r.norm();
            if norm <= tol {
                dropped.push((c, PruneReason::Dependent));
            } else {
                basis.push(r / norm);
                keep.push(c);
            }
        }
        keep.sort_unstable();
        dropped.sort_by_key(|(c, _)| *c);
        for (c, reason) in dropped {
            self.pruned.push(PrunedColumn {
                label: self.columns[c].clone(),
                reason,
            });
        }
        self.theta = self.theta.select_columns(&keep);
        self.columns = keep.iter().map(|&c| self.columns[c].clone()).collect();
        self.column_factors = keep.iter().map(|&c| self.column_factors[c]).collect();
        self
    }

    /// CSV with one row per regression row: metadata, Θ entries, lhs.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["row".to_string(), "sample".into(), "free".into()];
        header.extend(self.columns.iter().cloned());
        header.push("lhs".into());
        out.write_record(&header)?;
        for (r, meta) in self.rows.iter().enumerate() {
            let free: Vec<String> = meta.free.iter().map(ToString::to_string).collect();
            let mut rec = vec![r.to_string(), meta.sample.to_string(), free.join(" ")];
            rec.extend(self.theta.row(r).iter().map(|v| format!("{v:e}")));
            rec.push(format!("{:e}", self.lhs[r]));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Returns kept column indices and (dropped, parallel kept) pairs.
fn parallel_columns(theta: &DMatrix<f64>, factors: &[usize], tol: f64) -> (Vec<usize>, Vec<(usize, Option<usize>)>) {
    let n = theta.ncols();
    let mut pruned = Vec::new();
    // Unit columns with a sign convention, plus a scalar fingerprint to find candidates quickly.
    let mut units: Vec<Option<DVector<f64>>> = Vec::with_capacity(n);
    for c in 0..n {
        let col = theta.column(c);
        let norm = col.norm();
        if norm == 0.0 {
            units.push(None);
            pruned.push((c, None));
            continue;
        }
        let mut u = col / norm;
        if let Some(first) = u.iter().find(|v| v.abs() > 1e-8) {
            if *first < 0.0 {
                u = -u;
            }
        }
        units.push(Some(u));
    }
    let weights = DVector::from_fn(theta.nrows(), |r, _| ((r as f64 + 1.0) * 0.618_033_988_7).fract() + 0.5);
    let mut order: Vec<(f64, usize)> = units
        .iter()
        .enumerate()
        .filter_map(|(c, u)| u.as_ref().map(|u| (u.dot(&weights), c)))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let bound = tol * weights.norm();

    // Union parallel columns into groups, then keep one per group.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            if order[j].0 - order[i].0 > bound {
                break;
            }
            let (a, b) = (order[i].1, order[j].1);
            let (ua, ub) = (units[a].as_ref().unwrap(), units[b].as_ref().unwrap());
            if (ua - ub).amax() <= tol {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for c in 0..n {
        if units[c].is_some() {
            let root = find(&mut parent, c);
            groups.entry(root).or_default().push(c);
        }
    }
    let mut keep = Vec::new();
    for members in groups.values() {
        let best = *members.iter().min_by_key(|&&c| (factors[c], c)).unwrap();
        keep.push(best);
        pruned.extend(members.iter().filter(|&&c| c != best).map(|&c| (c, Some(best))));
    }
    keep.sort_unstable();
    pruned.sort_unstable();
    (keep, pruned)
}

/// A candidate pre-resolved against a sample table: per free tuple, the list of
/// summands, each a list of table column indices to multiply.
struct Compiled {
    blocks: Vec<Vec<Vec<usize>>>,
}

impl Compiled {
    fn new(term: &CandidateTerm, table: &SampleTable, free_tuples: &[Vec<u8>]) -> Result<Self> {
        let dim = table.spatial_dim;
        let mut blocks = Vec::with_capacity(free_tuples.len());
        for free in free_tuples {
            let mut summands = Vec::new();
            let mut missing = None;
            for_each_summand(term, dim, free, |keys| {
                let mut cols = Vec::with_capacity(keys.len());
                for k in keys {
                    match table.column(&table.normalize(&k)) {
                        Some(c) => cols.push(c),
                        None => {
                            missing.get_or_insert(k.name());
                        }
                    }
                }
                summands.push(cols);
            });
            if let Some(name) = missing {
                return Err(CtsrError::MissingField(format!("{name} (needed by `{term}`)")));
            }
            blocks.push(summands);
        }
        Ok(Compiled { blocks })
    }

    fn eval(&self, block: usize, row: &[f64]) -> f64 {
        self.blocks[block]
            .iter()
            .map(|cols| cols.iter().map(|&c| row[c]).product::<f64>())
            .sum()
    }
}

fn row_meta(n_samples: usize, free_tuples: &[Vec<u8>]) -> Vec<RowMeta> {
    free_tuples
        .iter()
        .flat_map(|t| (0..n_samples).map(move |s| RowMeta { sample: s, free: t.clone() }))
        .collect()
}

/// Θ for tensor candidates. Rows are grouped in blocks by free tuple, then by
/// sample, so block `b` holds component `free_tuples[b]` of every sample.
pub fn assemble_theta(terms: &[CandidateTerm], table: &SampleTable, target_order: usize, stacking: RowStacking) -> Result<(DMatrix<f64>, Vec<RowMeta>)> {
    if terms.is_empty() || table.is_empty() {
        return Err(CtsrError::Spec("cannot assemble an empty library or sample table".into()));
    }
    let free_tuples = stacking.tuples(table.spatial_dim, target_order);
    let n = table.len();
    let columns: Vec<Vec<f64>> = terms
        .par_iter()
        .map(|term| {
            if term.order() != target_order {
                return Err(CtsrError::Spec(format!(
                    "candidate `{term}` has order {}, target order is {target_order}",
                    term.order()
                )));
            }
            let compiled = Compiled::new(term, table, &free_tuples)?;
            let mut col = Vec::with_capacity(n * free_tuples.len());
            for b in 0..free_tuples.len() {
                for s in 0..n {
                    let v = compiled.eval(b, table.row(s));
                    if !v.is_finite() {
                        return Err(CtsrError::NonFinite {
                            candidate: term.to_string(),
                            sample: s,
                        });
                    }
                    col.push(v);
                }
            }
            Ok(col)
        })
        .collect::<Result<_>>()?;
    let rows = n * free_tuples.len();
    let theta = DMatrix::from_vec(rows, terms.len(), columns.concat());
    Ok((theta, row_meta(n, &free_tuples)))
}

/// Left-hand side aligned with [`assemble_theta`] rows.
pub fn assemble_lhs(spec: &LhsSpec, table: &SampleTable, target_order: usize, stacking: RowStacking) -> Result<DVector<f64>> {
    let free_tuples = stacking.tuples(table.spatial_dim, target_order);
    let n = table.len();
    let mut out = Vec::with_capacity(n * free_tuples.len());
    match spec {
        LhsSpec::TimeDerivative { quantity } | LhsSpec::Channel { quantity } => {
            let time = matches!(spec, LhsSpec::TimeDerivative { .. });
            for free in &free_tuples {
                let mut key = ComponentKey::new(quantity.as_str(), free);
                if time {
                    key = key.with_time_deriv();
                }
                let col = table
                    .column(&table.normalize(&key))
                    .ok_or_else(|| CtsrError::MissingField(key.name()))?;
                out.extend((0..n).map(|s| table.row(s)[col]));
            }
        }
        LhsSpec::Combination(terms) => {
            let compiled = terms
                .iter()
                .map(|(c, t)| {
                    if t.order() != target_order {
                        return Err(CtsrError::Spec(format!("left-hand term `{t}` has order {}", t.order())));
                    }
                    Ok((*c, Compiled::new(t, table, &free_tuples)?))
                })
                .collect::<Result<Vec<_>>>()?;
            for b in 0..free_tuples.len() {
                for s in 0..n {
                    out.push(compiled.iter().map(|(c, t)| c * t.eval(b, table.row(s))).sum());
                }
            }
        }
    }
    if let Some(r) = out.iter().position(|v| !v.is_finite()) {
        return Err(CtsrError::NonFinite {
            candidate: "lhs".into(),
            sample: r % n,
        });
    }
    Ok(DVector::from_vec(out))
}

/// Settings for [`assemble_problem`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    pub stacking: RowStacking,
    /// Drop zero, parallel and linearly dependent columns; the tolerance applies
    /// to unit columns. `None` keeps all.
    pub prune_tol: Option<f64>,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            stacking: RowStacking::Ordered,
            prune_tol: Some(1e-10),
        }
    }
}

pub fn assemble_problem(terms: &[CandidateTerm], lhs: &LhsSpec, table: &SampleTable, target_order: usize, options: AssemblyOptions) -> Result<RegressionProblem> {
    let (theta, rows) = assemble_theta(terms, table, target_order, options.stacking)?;
    let lhs = assemble_lhs(lhs, table, target_order, options.stacking)?;
    let problem = RegressionProblem {
        theta,
        lhs,
        columns: terms.iter().map(ToString::to_string).collect(),
        column_factors: terms.iter().map(|t| t.factors().len()).collect(),
        rows,
        pruned: Vec::new(),
    };
    Ok(match options.prune_tol {
        Some(tol) => problem.prune_dependent(tol),
        None => problem,
    })
}

/// Component-wise baseline: one problem per left-hand component, each with one
/// row per sample and one column per scalar candidate.
pub fn assemble_scalar(library: &[ScalarCandidate], lhs: &LhsSpec, table: &SampleTable, target_order: usize, options: AssemblyOptions) -> Result<Vec<(Vec<u8>, RegressionProblem)>> {
    if library.is_empty() || table.is_empty() {
        return Err(CtsrError::Spec("cannot assemble an empty library or sample table".into()));
    }
    let n = table.len();
    let columns: Vec<Vec<f64>> = library
        .par_iter()
        .map(|cand| {
            let cols = cand
                .factors
                .iter()
                .map(|f| {
                    let key = table.normalize(&ComponentKey::new(f.quantity.as_str(), &f.components).with_deriv(&f.deriv));
                    table.column(&key).ok_or_else(|| CtsrError::MissingField(key.name()))
                })
                .collect::<Result<Vec<usize>>>()?;
            (0..n)
                .map(|s| {
                    let row = table.row(s);
                    let v: f64 = cols.iter().map(|&c| row[c]).product();
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(CtsrError::NonFinite {
                            candidate: cand.to_string(),
                            sample: s,
                        })
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let theta = DMatrix::from_vec(n, library.len(), columns.concat());
    let labels: Vec<String> = library.iter().map(ToString::to_string).collect();
    let factors: Vec<usize> = library.iter().map(|c| c.factors.len()).collect();
    let lhs_all = assemble_lhs(lhs, table, target_order, RowStacking::Ordered)?;
    let base = RegressionProblem {
        theta,
        lhs: DVector::zeros(n),
        columns: labels,
        column_factors: factors,
        rows: row_meta(n, &[vec![]]),
        pruned: Vec::new(),
    };
    let base = match options.prune_tol {
        Some(tol) => base.prune_dependent(tol),
        None => base,
    };
    let free_tuples = options.stacking.tuples(table.spatial_dim, target_order);
    let all_tuples = RowStacking::Ordered.tuples(table.spatial_dim, target_order);
    Ok(free_tuples
        .into_iter()
        .map(|free| {
            let b = all_tuples.iter().position(|t| *t == free).expect("tuple listed");
            let mut p = base.clone();
            p.lhs = lhs_all.rows(b * n, n).into_owned();
            p.rows = row_meta(n, std::slice::from_ref(&free));
            (free, p)
        })
        .collect())
}
