//! Fixtures shared by the pipeline benchmarks.

use ctsr_core::assembly::{LhsSpec, RegressionProblem};
use ctsr_core::cases::{sample_for, scalar_problems, tensor_problem, CasePreset};
use ctsr_core::dataset::{GridDataset, SampleTable};
use ctsr_core::library::{LibraryMode, LibrarySpec};

/// Manufactured 3D incompressible-flow data with the preset sampling.
pub struct Fixture {
    pub case: CasePreset,
    pub dataset: GridDataset,
    pub lhs: LhsSpec,
    pub tensor_spec: LibrarySpec,
    pub scalar_spec: LibrarySpec,
    pub tensor_table: SampleTable,
    pub scalar_table: SampleTable,
}

impl Fixture {
    pub fn new(case: CasePreset) -> Self {
        let dataset = case.dataset_source().generate().expect("preset data generates");
        let lhs = case.lhs();
        let tensor_spec = case.library_spec(LibraryMode::Tensor);
        let scalar_spec = case.library_spec(LibraryMode::Scalar);
        let tensor_table = sample_for(&dataset, &tensor_spec, &lhs, case.sampling()).expect("sampling");
        let scalar_table = sample_for(&dataset, &scalar_spec, &lhs, case.sampling()).expect("sampling");
        Fixture {
            case,
            dataset,
            lhs,
            tensor_spec,
            scalar_spec,
            tensor_table,
            scalar_table,
        }
    }

    pub fn tensor_problem(&self) -> RegressionProblem {
        tensor_problem(&self.tensor_spec, &self.lhs, &self.tensor_table).expect("assembly").1
    }

    pub fn scalar_problems(&self) -> Vec<RegressionProblem> {
        scalar_problems(&self.scalar_spec, &self.lhs, &self.scalar_table, self.case.scalar_stacking())
            .expect("assembly")
            .1
            .into_iter()
            .map(|(_, p)| p)
            .collect()
    }
}
