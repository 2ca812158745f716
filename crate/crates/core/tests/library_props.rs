use std::collections::BTreeSet;

use ctsr_core::assembly::evaluate_candidate;
use ctsr_core::cases::CasePreset;
use ctsr_core::dataset::QuantityDecl;
use ctsr_core::library::{build_tensor_library, tuples, LibraryMode, LibrarySpec};
use ctsr_core::symbolic::{CandidateTerm, FactorKind, Suffix, Template};
use ctsr_core::synthetic::{AnalyticQuantity, AnalyticSource, FamilyParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn candidates_are_unique_and_valid() {
    for case in CasePreset::ALL {
        let spec = case.library_spec(LibraryMode::Tensor);
        let lib = build_tensor_library(&spec).unwrap();
        let mut seen = BTreeSet::new();
        for t in lib.terms() {
            assert!(t.check_validity(spec.target_order).is_valid(), "{t}");
            assert!(seen.insert(t.canonicalize().unwrap()), "duplicate {t}");
        }
    }
}

/// Every labelling of every template with `k <= p` velocity factors times
/// `{1, du, d2u}`, filtered by validity and canonicalized.
fn brute_force_burgers(p: usize) -> BTreeSet<CandidateTerm> {
    let u = |d| FactorKind::new("u", 1, d, false);
    let mut out = BTreeSet::new();
    for k in 0..=p {
        for extra in [None, Some(1), Some(2)] {
            let mut kinds = vec![u(0); k];
            kinds.extend(extra.map(u));
            if kinds.is_empty() {
                continue;
            }
            let template = Template::new(kinds);
            let n = template.slot_count();
            for code in 0..n.pow(n as u32) {
                let labels: Vec<Suffix> = (0..n).map(|i| Suffix((code / n.pow(i as u32) % n) as u8)).collect();
                let term = template.label(&labels);
                if term.check_validity(1).is_valid() {
                    out.insert(term.canonicalize().unwrap());
                }
            }
        }
    }
    out
}

#[test]
fn burgers_library_matches_brute_force() {
    for p in 0..=2 {
        let spec = LibrarySpec {
            max_poly_order: p,
            ..CasePreset::Burgers2d.library_spec(LibraryMode::Tensor)
        };
        let ours: BTreeSet<CandidateTerm> = build_tensor_library(&spec).unwrap().terms().into_iter().collect();
        assert_eq!(ours, brute_force_burgers(p), "P = {p}");
    }
}

#[test]
fn tensor_columns_are_numerically_distinct() {
    // Every input, constant gravity included, is a random smooth field here.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in CasePreset::ALL {
        let spec = case.library_spec(LibraryMode::Tensor);
        let dim = spec.spatial_dim;
        let mut src = AnalyticSource::new(dim);
        for input in &spec.inputs {
            let decl = if input.symmetric_base {
                QuantityDecl::symmetric(input.name.clone(), input.base_order)
            } else {
                QuantityDecl::new(input.name.clone(), input.base_order)
            };
            src.insert(AnalyticQuantity::random(decl, dim, &FamilyParams::default(), &mut rng));
        }
        let points: Vec<Vec<f64>> = (0..20).map(|_| (0..dim).map(|_| rng.random_range(0.0..6.0)).collect()).collect();
        let terms = build_tensor_library(&spec).unwrap().terms();
        let columns: Vec<Vec<f64>> = terms
            .iter()
            .map(|t| {
                let mut col = Vec::new();
                for x in &points {
                    for free in tuples(dim, spec.target_order) {
                        col.push(evaluate_candidate(t, &src.at(x, 0.0), dim, &free).unwrap());
                    }
                }
                col
            })
            .collect();
        for a in 0..columns.len() {
            for b in a + 1..columns.len() {
                let diff = columns[a].iter().zip(&columns[b]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(diff > 0.0, "{}: `{}` duplicates `{}`", case.name(), terms[a], terms[b]);
            }
        }
    }
}
