use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::analytic::{AnalyticQuantity, AnalyticSource, FamilyParams, TrigField};
use crate::assembly::{assemble_lhs, LhsSpec, RowStacking};
use crate::dataset::{Boundary, ComponentKey, GridDataset, QuantityDecl, SamplePlan, SamplePoint, SampleTable};
use crate::error::{CtsrError, Result};
use crate::symbolic::CandidateTerm;

/// Name of the stored left-hand-side quantity.
pub const LHS: &str = "lhs";

/// Equation forms available for manufactured data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManufacturedEquation {
    /// `u_t = −u_j ∂u_i/∂x_j + ε ∂²u_i/∂x_j∂x_j` in 2D.
    Burgers2d,
    /// `u_t = −u_j ∂u_i/∂x_j + Pr Ra^{-1/2} ∂²u_i/∂x_j∂x_j − ∂p/∂x_i − Pr θ g_i` in 2D.
    NaturalConvection2d,
    /// `u_t = −u_j ∂u_i/∂x_j + Re⁻¹ ∂²u_i/∂x_j∂x_j − ∂p/∂x_i` in 3D.
    NavierStokes3d,
    /// Steady Giesekus constitutive law for a symmetric polymer stress in 3D.
    Giesekus3d,
}

impl ManufacturedEquation {
    pub fn spatial_dim(self) -> usize {
        match self {
            ManufacturedEquation::Burgers2d | ManufacturedEquation::NaturalConvection2d => 2,
            ManufacturedEquation::NavierStokes3d | ManufacturedEquation::Giesekus3d => 3,
        }
    }

    pub fn target_order(self) -> usize {
        match self {
            ManufacturedEquation::Giesekus3d => 2,
            _ => 1,
        }
    }

    pub fn is_steady(self) -> bool {
        self == ManufacturedEquation::Giesekus3d
    }

    /// Quantities with the derivative depth each needs.
    pub fn quantities(self) -> Vec<(QuantityDecl, u8)> {
        let u = QuantityDecl::new("u", 1);
        match self {
            ManufacturedEquation::Burgers2d => vec![(u, 2)],
            ManufacturedEquation::NaturalConvection2d => vec![
                (u, 2),
                (QuantityDecl::new("p", 0), 2),
                (QuantityDecl::new("theta", 0), 2),
                (QuantityDecl::new("g", 1), 0),
            ],
            ManufacturedEquation::NavierStokes3d => vec![(u, 2), (QuantityDecl::new("p", 0), 2)],
            ManufacturedEquation::Giesekus3d => vec![(u, 1), (QuantityDecl::symmetric("tau", 2), 1)],
        }
    }

    pub fn lhs_decl(self) -> QuantityDecl {
        match self {
            ManufacturedEquation::Giesekus3d => QuantityDecl::symmetric(LHS, 2),
            _ => QuantityDecl::new(LHS, 1),
        }
    }

    /// Canonical right-hand terms with their default coefficients.
    pub fn truth(self) -> Vec<(&'static str, f64)> {
        match self {
            ManufacturedEquation::Burgers2d => vec![("u[j] du[i]/dx[j]", -1.0), ("d2u[i]/dx[j]dx[j]", 0.1)],
            ManufacturedEquation::NaturalConvection2d => vec![
                ("u[j] du[i]/dx[j]", -1.0),
                ("d2u[i]/dx[j]dx[j]", 0.00071),
                ("dp/dx[i]", -1.0),
                ("g[i] theta", -0.71),
            ],
            ManufacturedEquation::NavierStokes3d => vec![
                ("u[j] du[i]/dx[j]", -1.0),
                ("d2u[i]/dx[j]dx[j]", 0.005),
                ("dp/dx[i]", -1.0),
            ],
            ManufacturedEquation::Giesekus3d => vec![
                ("tau[i,j]", 1.0),
                ("dtau[i,j]/dx[k] u[k]", 0.008),
                ("tau[i,k] du[j]/dx[k]", -0.008),
                ("tau[j,k] du[i]/dx[k]", -0.008),
                ("tau[i,k] tau[j,k]", 0.93),
            ],
        }
    }

    pub fn is_symmetric(name: &str) -> bool {
        name == "tau" || name == LHS
    }

    pub fn truth_terms(self, coefficients: Option<&[f64]>) -> Result<Vec<(f64, CandidateTerm)>> {
        let truth = self.truth();
        if let Some(c) = coefficients {
            if c.len() != truth.len() {
                return Err(CtsrError::Spec(format!(
                    "{self:?} has {} terms, {} coefficients given",
                    truth.len(),
                    c.len()
                )));
            }
        }
        truth
            .iter()
            .enumerate()
            .map(|(i, (text, c))| {
                let coef = coefficients.map_or(*c, |cs| cs[i]);
                Ok((coef, CandidateTerm::parse(text, Self::is_symmetric)?.canonicalize()?))
            })
            .collect()
    }

    /// Random analytic fields for the equation's quantities. Gravity is the
    /// constant unit vector along the negative last axis.
    pub fn random_source(self, family: &FamilyParams, seed: u64) -> AnalyticSource {
        let dim = self.spatial_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut family = family.clone();
        if self.is_steady() {
            family.frequency = 0.0;
        }
        let mut src = AnalyticSource::new(dim);
        for (decl, _) in self.quantities() {
            if decl.name == "g" {
                let mut g = vec![0.0; dim];
                g[dim - 1] = -1.0;
                src.insert(AnalyticQuantity::constant(decl, dim, &g));
            } else {
                src.insert(AnalyticQuantity::random(decl, dim, &family, &mut rng));
            }
        }
        src
    }
}

/// How a manufactured dataset supplies spatial derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    /// Exact derivative fields are stored alongside the values.
    #[default]
    Analytic,
    /// Only values are stored; derivatives come from the stencils.
    Stencil,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedSpec {
    pub equation: ManufacturedEquation,
    /// Overrides the default coefficients, in the order of `truth()`.
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default)]
    pub family: FamilyParams,
    /// Grid points per axis.
    pub n: usize,
    /// Snapshot count (ignored for steady equations, which store one).
    pub times: usize,
    pub dt: f64,
    #[serde(default)]
    pub derivative_mode: DerivativeMode,
    /// Standard deviation of Gaussian noise added to the lhs channel, relative
    /// to the channel's RMS over the whole dataset.
    #[serde(default)]
    pub noise: f64,
    pub seed: u64,
}

impl ManufacturedSpec {
    pub fn new(equation: ManufacturedEquation) -> Self {
        ManufacturedSpec {
            equation,
            coefficients: None,
            family: FamilyParams::default(),
            n: if equation.spatial_dim() == 2 { 32 } else { 16 },
            times: if equation.is_steady() { 1 } else { 24 },
            dt: 0.02,
            derivative_mode: DerivativeMode::Analytic,
            noise: 0.0,
            seed: 0,
        }
    }
}

/// Samples analytic fields on a periodic grid and stores the left-hand side
/// computed exactly from the declared right-hand side as the `lhs` quantity.
pub fn manufactured_dataset(spec: &ManufacturedSpec) -> Result<GridDataset> {
    let eq = spec.equation;
    let dim = eq.spatial_dim();
    let times = if eq.is_steady() { 1 } else { spec.times };
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(CtsrError::Spec(format!("noise level must be finite and non-negative, got {}", spec.noise)));
    }
    if spec.n < 3 || times == 0 {
        return Err(CtsrError::Spec("manufactured grid needs n >= 3 and at least one snapshot".into()));
    }
    let h = spec.family.length / spec.n as f64;
    let mut ds = GridDataset::new(vec![spec.n; dim], vec![h; dim], spec.dt, times, vec![Boundary::Periodic; dim])?;
    let mut plan = SamplePlan::new();
    for (decl, depth) in eq.quantities() {
        plan = plan.quantity(&decl.name, depth);
        ds.declare(decl);
    }
    ds.declare(eq.lhs_decl());
    let keys = plan.resolve(&ds)?;
    let truth = eq.truth_terms(spec.coefficients.as_deref())?;
    let source = eq.random_source(&spec.family, spec.seed);

    // Keys grouped by the analytic component they differentiate.
    let mut groups: Vec<(&TrigField, Vec<usize>, Vec<(&[u8], usize)>)> = Vec::new();
    for (c, key) in keys.iter().enumerate() {
        let field = source
            .quantities
            .get(&key.quantity)
            .and_then(|q| q.field(&key.components))
            .ok_or_else(|| CtsrError::MissingField(key.name()))?;
        let request = (key.deriv.as_slice(), key.time_deriv as usize);
        match groups.iter_mut().find(|(f, _, _)| std::ptr::eq(*f, field)) {
            Some((_, cols, reqs)) => {
                cols.push(c);
                reqs.push(request);
            }
            None => groups.push((field, vec![c], vec![request])),
        }
    }
    let n = ds.points();
    let positions: Vec<Vec<f64>> = (0..n).map(|p| ds.position(&ds.coords(p))).collect();
    let points: Vec<SamplePoint> = (0..n).map(|p| SamplePoint { coords: ds.coords(p), t: 0 }).collect();
    let lhs_comps = eq.lhs_decl().components(dim);
    let all_tuples = RowStacking::Ordered.tuples(dim, eq.target_order());

    let mut fields: Vec<Vec<f64>> = vec![Vec::with_capacity(n * times); keys.len()];
    let mut lhs: Vec<Vec<f64>> = vec![Vec::with_capacity(n * times); lhs_comps.len()];
    for t in 0..times {
        let time = t as f64 * spec.dt;
        let width = keys.len();
        let mut values = vec![0.0; n * width];
        let mut buf = vec![0.0; width];
        for (p, x) in positions.iter().enumerate() {
            for (field, cols, requests) in &groups {
                field.eval_many(x, time, requests, &mut buf[..cols.len()]);
                for (&c, v) in cols.iter().zip(&buf) {
                    values[p * width + c] = *v;
                }
            }
        }
        let table = SampleTable::new(keys.clone(), points.clone(), values, dim, 0)
            .with_symmetric(ds.quantities.iter().filter(|q| q.symmetric).map(|q| q.name.clone()));
        let rhs = assemble_lhs(&LhsSpec::Combination(truth.clone()), &table, eq.target_order(), RowStacking::Ordered)?;
        for (c, comps) in lhs_comps.iter().enumerate() {
            let b = all_tuples.iter().position(|t| t == comps).expect("stored tuple");
            lhs[c].extend(rhs.rows(b * n, n).iter());
        }
        for (c, f) in fields.iter_mut().enumerate() {
            f.extend((0..n).map(|p| table.row(p)[c]));
        }
    }
    for (key, values) in keys.iter().zip(fields) {
        if spec.derivative_mode == DerivativeMode::Analytic || key.deriv.is_empty() {
            ds.insert(key, values)?;
        }
    }
    if spec.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6e6f_6973_65);
        for channel in lhs.iter_mut() {
            let rms = (channel.iter().map(|v| v * v).sum::<f64>() / channel.len() as f64).sqrt();
            for v in channel.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += spec.noise * rms * z;
            }
        }
    }
    for (comps, values) in lhs_comps.iter().zip(lhs) {
        ds.insert(&ComponentKey::new(LHS, comps), values)?;
    }
    ds.metadata.insert("generator".into(), format!("manufactured {eq:?}"));
    ds.metadata.insert("seed".into(), spec.seed.to_string());
    ds.metadata.insert("derivatives".into(), format!("{:?}", spec.derivative_mode).to_lowercase());
    ds.metadata.insert("lhs_noise".into(), spec.noise.to_string());
    ds.metadata.insert("coefficients".into(), format!("{:?}", truth.iter().map(|(c, _)| *c).collect::<Vec<_>>()));
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{evaluate_candidate, SampleRow};
    use crate::dataset::sample_points;

    #[test]
    fn truth_terms_are_canonical() {
        for eq in [
            ManufacturedEquation::Burgers2d,
            ManufacturedEquation::NaturalConvection2d,
            ManufacturedEquation::NavierStokes3d,
            ManufacturedEquation::Giesekus3d,
        ] {
            for ((text, _), (_, term)) in eq.truth().iter().zip(eq.truth_terms(None).unwrap()) {
                assert_eq!(term.to_string(), *text);
            }
        }
    }

    #[test]
    fn lhs_channel_matches_right_side() {
        let mut spec = ManufacturedSpec::new(ManufacturedEquation::Giesekus3d);
        spec.n = 6;
        let ds = manufactured_dataset(&spec).unwrap();
        assert_eq!(ds.times, 1);
        assert!(ds.fields.contains_key("lhs.0.2") && !ds.fields.contains_key("lhs.2.0"));
        let plan = SamplePlan::new().quantity("u", 1).quantity("tau", 1).channel(LHS);
        let table = sample_points(&ds, &plan, 10, 0, 1).unwrap();
        let truth = ManufacturedEquation::Giesekus3d.truth_terms(None).unwrap();
        for r in 0..table.len() {
            let row = SampleRow { table: &table, row: r };
            let rhs: f64 = truth.iter().map(|(c, t)| c * evaluate_candidate(t, &row, 3, &[2, 1]).unwrap()).sum();
            let lhs = table.value(r, &ComponentKey::new(LHS, &[2, 1])).unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn zero_amplitude_gives_zero_channels() {
        let mut spec = ManufacturedSpec::new(ManufacturedEquation::NavierStokes3d);
        spec.n = 4;
        spec.times = 3;
        spec.family.amplitude = 0.0;
        spec.family.offset = 0.0;
        let ds = manufactured_dataset(&spec).unwrap();
        assert!(ds.fields.values().all(|f| f.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn stencil_mode_stores_values_only() {
        let mut spec = ManufacturedSpec::new(ManufacturedEquation::NaturalConvection2d);
        spec.n = 8;
        spec.times = 3;
        spec.derivative_mode = DerivativeMode::Stencil;
        let ds = manufactured_dataset(&spec).unwrap();
        assert!(ds.fields.keys().all(|k| !k.contains('/')));
        assert_eq!(ds.field("g.1").unwrap()[0], -1.0);
    }
}
