//! Presets for the four benchmark problems and the glue that turns a dataset
//! plus a library into regression problems.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_problem, assemble_scalar, AssemblyOptions, LhsSpec, RegressionProblem, RowStacking};
use crate::dataset::{GridDataset, SamplePlan, SampleTable};
use crate::error::{CtsrError, Result};
use crate::library::{build_scalar_library, build_tensor_library, InputTensorSpec, LibraryMode, LibrarySpec, ScalarCandidate, TensorLibrary};
use crate::selection::GroundTruth;
use crate::solver::Hyperparams;
use crate::synthetic::{BurgersConfig, ManufacturedEquation, ManufacturedSpec, LHS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CasePreset {
    #[serde(rename = "burgers2d")]
    Burgers2d,
    #[serde(rename = "convection2d")]
    Convection2d,
    #[serde(rename = "ns3d")]
    Ns3d,
    #[serde(rename = "giesekus3d")]
    Giesekus3d,
}

/// Subsampling parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampling {
    pub n_space: usize,
    /// `0` samples the first snapshot only.
    pub n_time: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            n_space: 50,
            n_time: 20,
            seed: 0,
        }
    }
}

impl CasePreset {
    pub const ALL: [CasePreset; 4] = [CasePreset::Burgers2d, CasePreset::Convection2d, CasePreset::Ns3d, CasePreset::Giesekus3d];

    pub fn name(self) -> &'static str {
        match self {
            CasePreset::Burgers2d => "burgers2d",
            CasePreset::Convection2d => "convection2d",
            CasePreset::Ns3d => "ns3d",
            CasePreset::Giesekus3d => "giesekus3d",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn equation(self) -> ManufacturedEquation {
        match self {
            CasePreset::Burgers2d => ManufacturedEquation::Burgers2d,
            CasePreset::Convection2d => ManufacturedEquation::NaturalConvection2d,
            CasePreset::Ns3d => ManufacturedEquation::NavierStokes3d,
            CasePreset::Giesekus3d => ManufacturedEquation::Giesekus3d,
        }
    }

    pub fn library_spec(self, mode: LibraryMode) -> LibrarySpec {
        let u2 = InputTensorSpec::new("u", 1, 2);
        let (inputs, dim) = match self {
            CasePreset::Burgers2d => (vec![u2], 2),
            CasePreset::Convection2d => (
                vec![
                    u2,
                    InputTensorSpec::new("p", 0, 2),
                    InputTensorSpec::new("theta", 0, 2),
                    InputTensorSpec::new("g", 1, 0).tensor_only(),
                ],
                2,
            ),
            CasePreset::Ns3d => (vec![u2, InputTensorSpec::new("p", 0, 2)], 3),
            CasePreset::Giesekus3d => (
                vec![
                    InputTensorSpec::new("u", 1, 1).exclude_standalone(1),
                    InputTensorSpec::new("tau", 2, 1).symmetric(),
                ],
                3,
            ),
        };
        LibrarySpec {
            inputs,
            max_poly_order: 2,
            target_order: self.equation().target_order(),
            mode,
            spatial_dim: dim,
        }
    }

    pub fn hyperparams(self) -> Hyperparams {
        Hyperparams {
            d_tol: match self {
                CasePreset::Burgers2d => 1e-3,
                CasePreset::Convection2d | CasePreset::Ns3d => 1e-2,
                CasePreset::Giesekus3d => 1.2,
            },
            ..Hyperparams::default()
        }
    }

    pub fn sampling(self) -> Sampling {
        match self {
            CasePreset::Giesekus3d => Sampling {
                n_space: 1000,
                n_time: 0,
                seed: 0,
            },
            _ => Sampling::default(),
        }
    }

    pub fn lhs(self) -> LhsSpec {
        match self {
            CasePreset::Burgers2d => LhsSpec::TimeDerivative { quantity: "u".into() },
            _ => LhsSpec::Channel { quantity: LHS.into() },
        }
    }

    pub fn truth(self) -> GroundTruth {
        let terms = self.equation().truth_terms(None).expect("preset truth parses");
        GroundTruth::new(terms.into_iter().map(|(c, t)| (t, c)).collect()).expect("preset truth is valid")
    }

    /// Default dataset for the preset: the Burgers solver (200 snapshots at
    /// spacing 0.02) or a manufactured dataset.
    pub fn dataset_source(self) -> DatasetSource {
        match self {
            CasePreset::Burgers2d => DatasetSource::Burgers(BurgersConfig {
                steps: 199 * 40,
                ..BurgersConfig::default()
            }),
            _ => DatasetSource::Manufactured(ManufacturedSpec::new(self.equation())),
        }
    }

    /// Stacking used for the component-wise baseline: symmetric targets only
    /// need the independent components.
    pub fn scalar_stacking(self) -> RowStacking {
        match self {
            CasePreset::Giesekus3d => RowStacking::UpperTriangle,
            _ => RowStacking::Ordered,
        }
    }
}

/// Where a preset's data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum DatasetSource {
    Burgers(BurgersConfig),
    Manufactured(ManufacturedSpec),
}

impl DatasetSource {
    pub fn generate(&self) -> Result<GridDataset> {
        match self {
            DatasetSource::Burgers(c) => crate::synthetic::burgers2d_simulate(c),
            DatasetSource::Manufactured(s) => crate::synthetic::manufactured_dataset(s),
        }
    }
}

/// Channels needed to evaluate a library and its left-hand side.
pub fn sample_plan(spec: &LibrarySpec, lhs: &LhsSpec) -> SamplePlan {
    let mut plan = SamplePlan::new();
    for input in &spec.inputs {
        plan = plan.quantity(&input.name, input.max_deriv);
    }
    match lhs {
        LhsSpec::TimeDerivative { quantity } => plan.time_derivative(quantity),
        LhsSpec::Channel { quantity } => plan.channel(quantity),
        LhsSpec::Combination(terms) => {
            let mut depth: BTreeMap<&str, u8> = BTreeMap::new();
            for (_, t) in terms {
                for f in t.factors() {
                    let d = depth.entry(f.kind.base.as_str()).or_default();
                    *d = (*d).max(f.kind.deriv_order);
                }
            }
            depth.into_iter().fold(plan, |p, (q, d)| p.quantity(q, d))
        }
    }
}

/// Draws the sample table for a library.
pub fn sample_for(ds: &GridDataset, spec: &LibrarySpec, lhs: &LhsSpec, sampling: Sampling) -> Result<SampleTable> {
    if ds.spatial_dim != spec.spatial_dim {
        return Err(CtsrError::Spec(format!(
            "dataset is {}-dimensional, library expects {}",
            ds.spatial_dim, spec.spatial_dim
        )));
    }
    crate::dataset::sample_points(ds, &sample_plan(spec, lhs), sampling.n_space, sampling.n_time, sampling.seed)
}

/// Builds the tensor library and its stacked regression problem.
pub fn tensor_problem(spec: &LibrarySpec, lhs: &LhsSpec, table: &SampleTable) -> Result<(TensorLibrary, RegressionProblem)> {
    let library = build_tensor_library(spec)?;
    let problem = assemble_problem(&library.terms(), lhs, table, spec.target_order, AssemblyOptions::default())?;
    Ok((library, problem))
}

/// Builds the component-wise library and one problem per left-hand component.
pub fn scalar_problems(spec: &LibrarySpec, lhs: &LhsSpec, table: &SampleTable, stacking: RowStacking) -> Result<(Vec<ScalarCandidate>, Vec<(Vec<u8>, RegressionProblem)>)> {
    let library = build_scalar_library(spec)?;
    let options = AssemblyOptions {
        stacking,
        ..AssemblyOptions::default()
    };
    let problems = assemble_scalar(&library, lhs, table, spec.target_order, options)?;
    Ok((library, problems))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_terms_are_in_the_tensor_libraries() {
        for case in CasePreset::ALL {
            let lib = build_tensor_library(&case.library_spec(LibraryMode::Tensor)).unwrap();
            for (term, _) in &case.truth().terms {
                assert!(lib.position(term).is_some(), "{} missing from {}", term, case.name());
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for case in CasePreset::ALL {
            assert_eq!(CasePreset::from_name(case.name()), Some(case));
            let json = serde_json::to_string(&case).unwrap();
            assert_eq!(json, format!("\"{}\"", case.name()));
        }
        assert_eq!(CasePreset::from_name("custom"), None);
    }

    #[test]
    fn preset_hyperparameters() {
        let d: Vec<f64> = CasePreset::ALL.iter().map(|c| c.hyperparams().d_tol).collect();
        assert_eq!(d, vec![0.001, 0.01, 0.01, 1.2]);
        assert!(CasePreset::ALL.iter().all(|c| c.hyperparams().lambda == 1e-5));
    }

    #[test]
    fn burgers_preset_has_200_snapshots() {
        match CasePreset::Burgers2d.dataset_source() {
            DatasetSource::Burgers(c) => {
                assert_eq!(c.snapshots(), 200);
                assert!((c.snapshot_dt() - 0.02).abs() < 1e-15);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn manufactured_cases_assemble() {
        for case in [CasePreset::Convection2d, CasePreset::Giesekus3d] {
            let mut source = match case.dataset_source() {
                DatasetSource::Manufactured(s) => s,
                _ => unreachable!(),
            };
            source.n = 8;
            source.times = 5;
            let ds = crate::synthetic::manufactured_dataset(&source).unwrap();
            let spec = case.library_spec(LibraryMode::Tensor);
            let sampling = Sampling {
                n_space: 20,
                n_time: if case == CasePreset::Giesekus3d { 0 } else { 2 },
                seed: 3,
            };
            let table = sample_for(&ds, &spec, &case.lhs(), sampling).unwrap();
            let (_, p) = tensor_problem(&spec, &case.lhs(), &table).unwrap();
            let blocks = spec.spatial_dim.pow(spec.target_order as u32);
            assert_eq!(p.n_rows(), table.len() * blocks);
            let (_, sp) = scalar_problems(&spec, &case.lhs(), &table, case.scalar_stacking()).unwrap();
            assert_eq!(sp.len(), if case == CasePreset::Giesekus3d { 6 } else { 2 });
        }
    }
}
