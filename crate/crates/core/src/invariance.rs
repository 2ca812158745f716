//! Empirical checks that candidate terms transform as tensors and that a
//! discovered equation keeps its residual under rotations and reflections.
//!
//! Analytic fields accept any orthogonal matrix: a cosine mode `cos(k·Rᵀx)` is
//! the mode `cos((Rk)·x)`, so the rotated field is again a trigonometric field.
//! Grid datasets accept only signed permutations, which map a periodic lattice
//! onto itself without interpolation.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{evaluate_candidate, summand_keys, FieldValues, LhsSpec};
use crate::dataset::{channel_snapshot, Boundary, ComponentKey, GridDataset};
use crate::error::{CtsrError, Result};
use crate::library::{tuples, ScalarCandidate};
use crate::symbolic::CandidateTerm;
use crate::synthetic::{AnalyticQuantity, AnalyticSource, Mode, TrigField};

const ORTHO_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    /// Signed permutation; maps a periodic grid onto itself.
    Lattice,
    /// Any other rotation or reflection.
    General,
}

/// An orthogonal matrix `R` acting as `x ↦ Rx`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalTransform {
    pub name: String,
    pub matrix: DMatrix<f64>,
    pub kind: TransformKind,
}

impl OrthogonalTransform {
    pub fn new(name: impl Into<String>, matrix: DMatrix<f64>) -> Result<Self> {
        let d = matrix.nrows();
        if d == 0 || d > 3 || matrix.ncols() != d {
            return Err(CtsrError::Spec(format!("transform must be square of size 1..=3, got {}x{}", d, matrix.ncols())));
        }
        let gram = matrix.transpose() * &matrix;
        let off = (gram - DMatrix::identity(d, d)).abs().max();
        if off > ORTHO_TOL {
            return Err(CtsrError::Spec(format!("matrix is not orthogonal: |RᵀR - I| = {off:e}")));
        }
        let lattice = matrix.iter().all(|&v| v == 0.0 || v == 1.0 || v == -1.0);
        Ok(OrthogonalTransform {
            name: name.into(),
            matrix,
            kind: if lattice { TransformKind::Lattice } else { TransformKind::General },
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new("identity", DMatrix::identity(dim, dim)).expect("identity is orthogonal")
    }

    /// `(Rv)_a = signs[a] · v[perm[a]]`.
    pub fn signed_permutation(perm: &[usize], signs: &[f64]) -> Result<Self> {
        let d = perm.len();
        let mut seen = vec![false; d];
        for &p in perm {
            if p >= d || std::mem::replace(&mut seen[p], true) {
                return Err(CtsrError::Spec(format!("{perm:?} is not a permutation")));
            }
        }
        if signs.len() != d || signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(CtsrError::Spec(format!("signs must be ±1, one per axis: {signs:?}")));
        }
        let mut m = DMatrix::zeros(d, d);
        for a in 0..d {
            m[(a, perm[a])] = signs[a];
        }
        let name = format!(
            "perm[{}]sign[{}]",
            perm.iter().map(ToString::to_string).collect::<Vec<_>>().join(""),
            signs.iter().map(|&s| if s > 0.0 { '+' } else { '-' }).collect::<String>()
        );
        Self::new(name, m)
    }

    /// Every signed permutation of `dim` axes (`2^dim · dim!` elements).
    pub fn lattice_group(dim: usize) -> Vec<Self> {
        let mut out = Vec::new();
        for perm in permutations(dim) {
            for mask in 0..(1usize << dim) {
                let signs: Vec<f64> = (0..dim).map(|a| if mask >> a & 1 == 1 { -1.0 } else { 1.0 }).collect();
                out.push(Self::signed_permutation(&perm, &signs).expect("valid signed permutation"));
            }
        }
        out
    }

    /// Haar-distributed rotation (`det = +1`).
    pub fn random_rotation(dim: usize, rng: &mut impl Rng) -> Self {
        Self::random_with_det(dim, 1.0, "rotation", rng)
    }

    /// Haar-distributed improper orthogonal matrix (`det = -1`).
    pub fn random_reflection(dim: usize, rng: &mut impl Rng) -> Self {
        Self::random_with_det(dim, -1.0, "reflection", rng)
    }

    fn random_with_det(dim: usize, det: f64, name: &str, rng: &mut impl Rng) -> Self {
        let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..dim {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        if q.determinant().signum() != det {
            q.column_mut(0).neg_mut();
        }
        let mut t = Self::new(name, q).expect("QR factor is orthogonal");
        t.kind = TransformKind::General;
        t
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    /// `self · first`: apply `first`, then `self`.
    pub fn compose(&self, first: &Self) -> Result<Self> {
        Self::new(format!("{}*{}", self.name, first.name), &self.matrix * &first.matrix)
    }

    pub fn transpose(&self) -> Self {
        OrthogonalTransform {
            name: format!("{}^T", self.name),
            matrix: self.matrix.transpose(),
            kind: self.kind,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|a| (0..d).map(|b| self.matrix[(a, b)] * x[b]).sum()).collect()
    }

    /// `(perm, signs)` for a lattice transform.
    pub fn as_signed_permutation(&self) -> Option<(Vec<usize>, Vec<f64>)> {
        if self.kind != TransformKind::Lattice {
            return None;
        }
        let d = self.dim();
        let mut perm = vec![0; d];
        let mut signs = vec![0.0; d];
        for a in 0..d {
            let b = (0..d).find(|&b| self.matrix[(a, b)] != 0.0)?;
            perm[a] = b;
            signs[a] = self.matrix[(a, b)];
        }
        Some((perm, signs))
    }

    /// `R⊗…⊗R · v` for an order-`order` tensor given on every ordered tuple
    /// (lexicographic, as in [`tuples`]).
    pub fn rotate_tensor(&self, values: &[f64], order: usize) -> Vec<f64> {
        let d = self.dim();
        let all = tuples(d, order);
        assert_eq!(values.len(), all.len(), "one value per component");
        all.iter()
            .map(|out| {
                all.iter()
                    .zip(values)
                    .map(|(src, v)| weight(&self.matrix, out, src) * v)
                    .sum()
            })
            .collect()
    }
}

fn weight(r: &DMatrix<f64>, out: &[u8], src: &[u8]) -> f64 {
    out.iter().zip(src).map(|(&i, &j)| r[(i as usize, j as usize)]).product()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

/// Active transformation of an analytic source: `T'(x) = R⊗…⊗R T(Rᵀx)`.
pub fn transform_analytic(source: &AnalyticSource, r: &OrthogonalTransform) -> Result<AnalyticSource> {
    let d = source.spatial_dim;
    if r.dim() != d {
        return Err(CtsrError::Spec(format!("transform is {}-dimensional, source is {d}-dimensional", r.dim())));
    }
    let mut out = AnalyticSource::new(d);
    for q in source.quantities.values() {
        let order = q.decl.order as usize;
        let all = tuples(d, order);
        let mut components = std::collections::BTreeMap::new();
        for c in q.decl.components(d) {
            let mut field = TrigField::constant(0.0);
            for s in &all {
                let w = weight(&r.matrix, &c, s);
                if w == 0.0 {
                    continue;
                }
                let src = q.field(s).ok_or_else(|| CtsrError::MissingField(format!("{}{s:?}", q.decl.name)))?;
                field.offset += w * src.offset;
                field.modes.extend(src.modes.iter().map(|m| Mode {
                    k: r.apply(&m.k),
                    amp: w * m.amp,
                    omega: m.omega,
                    phase: m.phase,
                }));
            }
            components.insert(c, field);
        }
        out.insert(AnalyticQuantity {
            decl: q.decl.clone(),
            components,
        });
    }
    Ok(out)
}

fn lattice_parts(ds: &GridDataset, r: &OrthogonalTransform) -> Result<(Vec<usize>, Vec<f64>)> {
    let (perm, signs) = r.as_signed_permutation().ok_or_else(|| {
        CtsrError::Spec(format!("`{}` is not a signed permutation; grid data only supports lattice symmetries", r.name))
    })?;
    if perm.len() != ds.spatial_dim {
        return Err(CtsrError::Spec(format!("transform is {}-dimensional, dataset is {}-dimensional", perm.len(), ds.spatial_dim)));
    }
    for a in 0..perm.len() {
        let b = perm[a];
        if ds.shape[a] != ds.shape[b] || ds.spacing[a] != ds.spacing[b] || ds.boundary[a] != ds.boundary[b] {
            return Err(CtsrError::Spec(format!("axes {a} and {b} differ in shape, spacing or boundary")));
        }
        if signs[a] < 0.0 && ds.boundary[a] != Boundary::Periodic {
            return Err(CtsrError::Spec(format!("reflection along clamped axis {a}")));
        }
    }
    Ok((perm, signs))
}

/// Node of the transformed lattice that holds the image of `coords`.
fn lattice_image(ds: &GridDataset, perm: &[usize], signs: &[f64], coords: &[usize]) -> Vec<usize> {
    (0..perm.len())
        .map(|a| {
            let n = ds.shape[a];
            let c = coords[perm[a]] % n;
            if signs[a] < 0.0 {
                (n - c) % n
            } else {
                c
            }
        })
        .collect()
}

/// Active transformation of a grid dataset by a lattice symmetry. Every stored
/// channel, derivative channels included, is transformed with one factor of
/// `R` per component and per derivative axis.
pub fn transform_grid(ds: &GridDataset, r: &OrthogonalTransform) -> Result<GridDataset> {
    let (perm, signs) = lattice_parts(ds, r)?;
    let n = ds.points();
    // Source node of every target node: m with m[perm[a]] = signs[a]·n[a].
    let inverse = r.transpose();
    let (iperm, isigns) = inverse.as_signed_permutation().expect("transpose of a lattice map");
    let source_node: Vec<usize> = (0..n)
        .map(|p| ds.flat_index(&lattice_image(ds, &iperm, &isigns, &ds.coords(p))))
        .collect();
    let mut out = GridDataset {
        fields: Default::default(),
        ..ds.clone()
    };
    for name in ds.fields.keys() {
        let key = ComponentKey::parse_name(name).ok_or_else(|| CtsrError::Format(format!("unparseable field name `{name}`")))?;
        let mut sign = 1.0;
        let comps: Vec<u8> = key
            .components
            .iter()
            .map(|&c| {
                sign *= signs[c as usize];
                perm[c as usize] as u8
            })
            .collect();
        let deriv: Vec<u8> = key
            .deriv
            .iter()
            .map(|&c| {
                sign *= signs[c as usize];
                perm[c as usize] as u8
            })
            .collect();
        let mut src_key = ComponentKey::new(key.quantity.clone(), &comps).with_deriv(&deriv);
        src_key.time_deriv = key.time_deriv;
        let src = ds.get(&src_key).ok_or_else(|| CtsrError::MissingField(src_key.name()))?;
        let mut values = Vec::with_capacity(src.len());
        for t in 0..ds.times {
            let snap = ds.snapshot(src, t);
            values.extend(source_node.iter().map(|&m| sign * snap[m]));
        }
        out.fields.insert(name.clone(), values);
    }
    Ok(out)
}

/// Where fields come from.
#[derive(Clone, Debug)]
pub enum FieldSource {
    Analytic(AnalyticSource),
    /// Derivatives not stored in the dataset use central differences.
    Grid(GridDataset),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Position {
    Point { x: Vec<f64>, t: f64 },
    Node { coords: Vec<usize>, t: usize },
}

impl FieldSource {
    pub fn spatial_dim(&self) -> usize {
        match self {
            FieldSource::Analytic(a) => a.spatial_dim,
            FieldSource::Grid(g) => g.spatial_dim,
        }
    }

    pub fn transform(&self, r: &OrthogonalTransform) -> Result<FieldSource> {
        Ok(match self {
            FieldSource::Analytic(a) => FieldSource::Analytic(transform_analytic(a, r)?),
            FieldSource::Grid(g) => FieldSource::Grid(transform_grid(g, r)?),
        })
    }

    /// Random evaluation positions: uniform in `[0, length)^d × [0, 1)` for
    /// analytic sources; interior nodes and snapshots with a neighbour on both
    /// sides (when there are at least three) for grids.
    pub fn sample_positions(&self, count: usize, length: f64, seed: u64) -> Vec<Position> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            FieldSource::Analytic(a) => (0..count)
                .map(|_| Position::Point {
                    x: (0..a.spatial_dim).map(|_| rng.random_range(0.0..length)).collect(),
                    t: rng.random_range(0.0..1.0),
                })
                .collect(),
            FieldSource::Grid(g) => (0..count)
                .map(|_| {
                    let coords = (0..g.spatial_dim)
                        .map(|a| match g.boundary[a] {
                            Boundary::Periodic => rng.random_range(0..g.shape[a]),
                            Boundary::Clamped => rng.random_range(1..g.shape[a].max(3) - 1),
                        })
                        .collect();
                    let t = if g.times >= 3 { rng.random_range(1..g.times - 1) } else { 0 };
                    Position::Node { coords, t }
                })
                .collect(),
        }
    }

    /// Image of a position under `R`, where the transformed source takes the
    /// rotated values of the original one.
    pub fn map_position(&self, pos: &Position, r: &OrthogonalTransform) -> Result<Position> {
        match (self, pos) {
            (FieldSource::Analytic(_), Position::Point { x, t }) => Ok(Position::Point { x: r.apply(x), t: *t }),
            (FieldSource::Grid(g), Position::Node { coords, t }) => {
                let (perm, signs) = lattice_parts(g, r)?;
                Ok(Position::Node {
                    coords: lattice_image(g, &perm, &signs, coords),
                    t: *t,
                })
            }
            _ => Err(CtsrError::Spec("position kind does not match the field source".into())),
        }
    }

    fn resolve(&self, keys: &BTreeSet<ComponentKey>, positions: &[Position]) -> Result<Resolved<'_>> {
        let mut channels = HashMap::new();
        if let FieldSource::Grid(g) = self {
            let times: BTreeSet<usize> = positions
                .iter()
                .filter_map(|p| match p {
                    Position::Node { t, .. } => Some(*t),
                    Position::Point { .. } => None,
                })
                .collect();
            let wanted: BTreeSet<ComponentKey> = keys.iter().map(|k| g.storage_key(k)).collect();
            let jobs: Vec<(&ComponentKey, usize)> = wanted.iter().flat_map(|k| times.iter().map(move |&t| (k, t))).collect();
            let snaps = jobs
                .par_iter()
                .map(|(k, t)| Ok((((*k).clone(), *t), channel_snapshot(g, k, *t)?)))
                .collect::<Result<Vec<_>>>()?;
            channels.extend(snaps);
        }
        Ok(Resolved { source: self, channels })
    }
}

struct Resolved<'a> {
    source: &'a FieldSource,
    channels: HashMap<(ComponentKey, usize), Vec<f64>>,
}

impl Resolved<'_> {
    fn at<'b>(&'b self, pos: &'b Position) -> PointValues<'b> {
        PointValues { resolved: self, pos }
    }
}

struct PointValues<'a> {
    resolved: &'a Resolved<'a>,
    pos: &'a Position,
}

impl FieldValues for PointValues<'_> {
    fn value(&self, key: &ComponentKey) -> Option<f64> {
        match (self.resolved.source, self.pos) {
            (FieldSource::Analytic(a), Position::Point { x, t }) => a.value_at(key, x, *t),
            (FieldSource::Grid(g), Position::Node { coords, t }) => {
                let snap = self.resolved.channels.get(&(g.storage_key(key), *t))?;
                Some(snap[g.flat_index(coords)])
            }
            _ => None,
        }
    }
}

fn term_keys(term: &CandidateTerm, dim: usize, out: &mut BTreeSet<ComponentKey>) {
    for free in tuples(dim, term.order()) {
        for summand in summand_keys(term, dim, &free) {
            out.extend(summand);
        }
    }
}

/// Every component of a candidate at one point, in [`tuples`] order.
fn evaluate_all(term: &CandidateTerm, values: &impl FieldValues, dim: usize) -> Result<Vec<f64>> {
    tuples(dim, term.order())
        .iter()
        .map(|free| evaluate_candidate(term, values, dim, free))
        .collect()
}

/// Largest `|f(T')(Rx) − R⊗…⊗R f(T)(x)|` over the positions.
pub fn check_equivariance(term: &CandidateTerm, source: &FieldSource, r: &OrthogonalTransform, positions: &[Position]) -> Result<f64> {
    let transformed = source.transform(r)?;
    let m = deviation_matrix(std::slice::from_ref(term), source, &transformed, r, positions)?;
    Ok(m[0])
}

fn deviation_matrix(terms: &[CandidateTerm], original: &FieldSource, transformed: &FieldSource, r: &OrthogonalTransform, positions: &[Position]) -> Result<Vec<f64>> {
    let dim = original.spatial_dim();
    let mut keys = BTreeSet::new();
    for t in terms {
        term_keys(t, dim, &mut keys);
    }
    let mapped = positions.iter().map(|p| original.map_position(p, r)).collect::<Result<Vec<_>>>()?;
    let before = original.resolve(&keys, positions)?;
    let after = transformed.resolve(&keys, &mapped)?;
    terms
        .par_iter()
        .map(|term| {
            let mut worst = 0.0f64;
            for (p, q) in positions.iter().zip(&mapped) {
                let expected = r.rotate_tensor(&evaluate_all(term, &before.at(p), dim)?, term.order());
                let got = evaluate_all(term, &after.at(q), dim)?;
                for (a, b) in got.iter().zip(&expected) {
                    worst = worst.max((a - b).abs());
                }
            }
            Ok(worst)
        })
        .collect()
}

/// Candidate × transform table of equivariance deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceMatrix {
    pub candidates: Vec<String>,
    pub transforms: Vec<String>,
    /// `deviations[candidate][transform]`.
    pub deviations: Vec<Vec<f64>>,
}

impl EquivarianceMatrix {
    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().flatten().fold(0.0, |m, &v| m.max(v))
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.deviations.iter().flatten().all(|&v| v < threshold)
    }

    /// Candidates with at least one deviation at or above the threshold.
    pub fn failures(&self, threshold: f64) -> Vec<&str> {
        self.candidates
            .iter()
            .zip(&self.deviations)
            .filter(|(_, row)| row.iter().any(|&v| !(v < threshold)))
            .map(|(c, _)| c.as_str())
            .collect()
    }

    pub fn summary(&self, threshold: f64) -> String {
        format!(
            "{} candidates x {} transforms, max deviation {:.3e}, threshold {:.0e}: {}",
            self.candidates.len(),
            self.transforms.len(),
            self.max_deviation(),
            threshold,
            if self.passes(threshold) { "PASS" } else { "FAIL" }
        )
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["candidate".to_string()];
        header.extend(self.transforms.iter().cloned());
        out.write_record(&header)?;
        for (c, row) in self.candidates.iter().zip(&self.deviations) {
            let mut rec = vec![c.clone()];
            rec.extend(row.iter().map(|v| format!("{v:e}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Equivariance deviation of every candidate under every transform.
pub fn equivariance_matrix(terms: &[CandidateTerm], source: &FieldSource, transforms: &[OrthogonalTransform], positions: &[Position]) -> Result<EquivarianceMatrix> {
    let mut columns = Vec::with_capacity(transforms.len());
    for r in transforms {
        let transformed = source.transform(r)?;
        columns.push(deviation_matrix(terms, source, &transformed, r, positions)?);
    }
    Ok(EquivarianceMatrix {
        candidates: terms.iter().map(ToString::to_string).collect(),
        transforms: transforms.iter().map(|r| r.name.clone()).collect(),
        deviations: (0..terms.len()).map(|i| columns.iter().map(|c| c[i]).collect()).collect(),
    })
}

/// A fitted equation `lhs = Σ ξ θ`.
#[derive(Clone, Debug, PartialEq)]
pub enum EquationModel {
    /// Tensor terms shared by every component.
    Tensor {
        lhs: LhsSpec,
        target_order: usize,
        terms: Vec<(f64, CandidateTerm)>,
    },
    /// Separate scalar terms per left-hand component; components not listed
    /// predict zero.
    Componentwise {
        lhs: LhsSpec,
        target_order: usize,
        components: Vec<(Vec<u8>, Vec<(f64, ScalarCandidate)>)>,
    },
}

impl EquationModel {
    fn parts(&self) -> (&LhsSpec, usize) {
        match self {
            EquationModel::Tensor { lhs, target_order, .. } | EquationModel::Componentwise { lhs, target_order, .. } => (lhs, *target_order),
        }
    }

    fn keys(&self, dim: usize) -> BTreeSet<ComponentKey> {
        let (lhs, order) = self.parts();
        let mut keys = lhs_keys(lhs, dim, order);
        match self {
            EquationModel::Tensor { terms, .. } => {
                for (_, t) in terms {
                    term_keys(t, dim, &mut keys);
                }
            }
            EquationModel::Componentwise { components, .. } => {
                for (_, terms) in components {
                    for (_, s) in terms {
                        keys.extend(s.factors.iter().map(scalar_key));
                    }
                }
            }
        }
        keys
    }

    /// `(lhs, prediction)` for every component at one point.
    fn components(&self, values: &impl FieldValues, dim: usize) -> Result<Vec<(f64, f64)>> {
        let (lhs, order) = self.parts();
        let all = tuples(dim, order);
        let left = lhs_values(lhs, values, dim, order)?;
        let right: Vec<f64> = match self {
            EquationModel::Tensor { terms, .. } => {
                let mut out = vec![0.0; all.len()];
                for (c, t) in terms {
                    for (o, v) in out.iter_mut().zip(evaluate_all(t, values, dim)?) {
                        *o += c * v;
                    }
                }
                out
            }
            EquationModel::Componentwise { components, .. } => all
                .iter()
                .map(|free| {
                    let Some((_, terms)) = components.iter().find(|(c, _)| c == free) else {
                        return Ok(0.0);
                    };
                    terms
                        .iter()
                        .map(|(c, s)| Ok(c * scalar_value(s, values)?))
                        .sum::<Result<f64>>()
                })
                .collect::<Result<_>>()?,
        };
        Ok(left.into_iter().zip(right).collect())
    }
}

fn scalar_key(f: &crate::library::ScalarFactor) -> ComponentKey {
    ComponentKey::new(f.quantity.clone(), &f.components).with_deriv(&f.deriv)
}

fn scalar_value(s: &ScalarCandidate, values: &impl FieldValues) -> Result<f64> {
    s.factors
        .iter()
        .map(|f| {
            let k = scalar_key(f);
            values.value(&k).ok_or_else(|| CtsrError::MissingField(k.name()))
        })
        .product()
}

fn lhs_keys(lhs: &LhsSpec, dim: usize, order: usize) -> BTreeSet<ComponentKey> {
    let mut keys = BTreeSet::new();
    match lhs {
        LhsSpec::TimeDerivative { quantity } => keys.extend(tuples(dim, order).iter().map(|c| ComponentKey::new(quantity.as_str(), c).with_time_deriv())),
        LhsSpec::Channel { quantity } => keys.extend(tuples(dim, order).iter().map(|c| ComponentKey::new(quantity.as_str(), c))),
        LhsSpec::Combination(terms) => {
            for (_, t) in terms {
                term_keys(t, dim, &mut keys);
            }
        }
    }
    keys
}

fn lhs_values(lhs: &LhsSpec, values: &impl FieldValues, dim: usize, order: usize) -> Result<Vec<f64>> {
    match lhs {
        LhsSpec::Combination(terms) => {
            let mut out = vec![0.0; dim.pow(order as u32)];
            for (c, t) in terms {
                for (o, v) in out.iter_mut().zip(evaluate_all(t, values, dim)?) {
                    *o += c * v;
                }
            }
            Ok(out)
        }
        _ => lhs_keys(lhs, dim, order)
            .into_iter()
            .map(|k| values.value(&k).ok_or_else(|| CtsrError::MissingField(k.name())))
            .collect(),
    }
}

/// Residual norms of one model before and after a transformation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub residual: f64,
    pub transformed_residual: f64,
    pub lhs_norm: f64,
    /// `|transformed_residual − residual| / lhs_norm` (unscaled when the
    /// left-hand side vanishes).
    pub relative_increase: f64,
}

/// Evaluates `lhs − Θξ` with the same coefficients on the original positions
/// and on their images in the transformed fields.
pub fn check_equation_invariance(model: &EquationModel, source: &FieldSource, r: &OrthogonalTransform, positions: &[Position]) -> Result<InvarianceReport> {
    let dim = source.spatial_dim();
    let transformed = source.transform(r)?;
    let mapped = positions.iter().map(|p| source.map_position(p, r)).collect::<Result<Vec<_>>>()?;
    let keys = model.keys(dim);
    let before = source.resolve(&keys, positions)?;
    let after = transformed.resolve(&keys, &mapped)?;
    let (mut res, mut res_t, mut lhs) = (0.0, 0.0, 0.0);
    for (p, q) in positions.iter().zip(&mapped) {
        for (l, f) in model.components(&before.at(p), dim)? {
            res += (l - f) * (l - f);
            lhs += l * l;
        }
        for (l, f) in model.components(&after.at(q), dim)? {
            res_t += (l - f) * (l - f);
        }
    }
    let (residual, transformed_residual, lhs_norm) = (res.sqrt(), res_t.sqrt(), lhs.sqrt());
    let scale = if lhs_norm > 0.0 { lhs_norm } else { 1.0 };
    Ok(InvarianceReport {
        residual,
        transformed_residual,
        lhs_norm,
        relative_increase: (transformed_residual - residual).abs() / scale,
    })
}

/// A deliberately non-tensorial model: component `i` of the left-hand side is
/// fitted by least squares to `u_i ∂u_i/∂x_i` alone, one coefficient per
/// component, on the original positions.
pub fn diagonal_control(quantity: &str, lhs: LhsSpec, source: &FieldSource, positions: &[Position]) -> Result<EquationModel> {
    let dim = source.spatial_dim();
    let candidates: Vec<ScalarCandidate> = (0..dim as u8)
        .map(|i| ScalarCandidate {
            factors: vec![
                crate::library::ScalarFactor {
                    quantity: quantity.to_string(),
                    components: vec![i],
                    deriv: vec![],
                },
                crate::library::ScalarFactor {
                    quantity: quantity.to_string(),
                    components: vec![i],
                    deriv: vec![i],
                },
            ],
        })
        .collect();
    let probe = EquationModel::Componentwise {
        lhs: lhs.clone(),
        target_order: 1,
        components: candidates.iter().enumerate().map(|(i, s)| (vec![i as u8], vec![(1.0, s.clone())])).collect(),
    };
    let resolved = source.resolve(&probe.keys(dim), positions)?;
    let mut num = vec![0.0; dim];
    let mut den = vec![0.0; dim];
    for p in positions {
        for (i, (l, f)) in probe.components(&resolved.at(p), dim)?.into_iter().enumerate() {
            num[i] += l * f;
            den[i] += f * f;
        }
    }
    Ok(EquationModel::Componentwise {
        lhs,
        target_order: 1,
        components: candidates
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let c = if den[i] > 0.0 { num[i] / den[i] } else { 0.0 };
                (vec![i as u8], vec![(c, s)])
            })
            .collect(),
    })
}
