use std::f64::consts::TAU;
use std::sync::LazyLock;

use ctsr_core::cases::CasePreset;
use ctsr_core::invariance::{check_equivariance, FieldSource, OrthogonalTransform};
use ctsr_core::library::{build_tensor_library, LibraryMode};
use ctsr_core::symbolic::CandidateTerm;
use ctsr_core::synthetic::FamilyParams;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

static NS3D: LazyLock<Vec<CandidateTerm>> =
    LazyLock::new(|| build_tensor_library(&CasePreset::Ns3d.library_spec(LibraryMode::Tensor)).unwrap().terms());

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn deviation_is_subadditive_under_composition(pick in any::<usize>(), seed in any::<u64>(), reflect in any::<(bool, bool)>()) {
        let term = &NS3D[pick % NS3D.len()];
        let src = FieldSource::Analytic(CasePreset::Ns3d.equation().random_source(&FamilyParams::default(), seed % 100));
        let pos = src.sample_positions(5, TAU, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |r: bool| if r { OrthogonalTransform::random_reflection(3, &mut rng) } else { OrthogonalTransform::random_rotation(3, &mut rng) };
        let r1 = draw(reflect.0);
        let r2 = draw(reflect.1);
        let both = r2.compose(&r1).unwrap();
        let d1 = check_equivariance(term, &src, &r1, &pos).unwrap();
        let d2 = check_equivariance(term, &src, &r2, &pos).unwrap();
        let d12 = check_equivariance(term, &src, &both, &pos).unwrap();
        prop_assert!(d12 <= d1 + d2 + 1e-12, "{d12} > {d1} + {d2}");
        prop_assert!(d12 < 1e-8);
    }

    #[test]
    fn lattice_elements_compose_within_the_group(a in 0usize..48, b in 0usize..48) {
        let g = OrthogonalTransform::lattice_group(3);
        let c = g[a].compose(&g[b]).unwrap();
        prop_assert!(g.iter().any(|h| h.matrix == c.matrix));
    }
}
