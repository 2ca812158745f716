use std::collections::BTreeMap;

use ctsr_core::assembly::evaluate_candidate;
use ctsr_core::cases::CasePreset;
use ctsr_core::library::{enumerate_templates, tuples, LibraryMode};
use ctsr_core::symbolic::{CandidateTerm, Suffix, Template};
use ctsr_core::synthetic::{AnalyticSource, FamilyParams};
use proptest::prelude::*;

/// A valid labelling of a library template: `order` free labels used once and
/// dummy labels used twice, drawn from a wide label range and shuffled.
fn labelled(case: CasePreset, template_pick: usize, label_pool: Vec<u8>, shuffle: Vec<u32>) -> Option<(CandidateTerm, usize)> {
    let spec = case.library_spec(LibraryMode::Tensor);
    let order = spec.target_order;
    let templates: Vec<Template> = enumerate_templates(&spec)
        .into_iter()
        .map(|e| e.template)
        .filter(|t| t.slot_count() >= order && (t.slot_count() - order) % 2 == 0)
        .collect();
    let template = &templates[template_pick % templates.len()];
    let n = template.slot_count();
    let dummies = (n - order) / 2;
    let mut distinct = label_pool;
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < order + dummies {
        return None;
    }
    let mut labels: Vec<Suffix> = Vec::new();
    labels.extend(distinct[..order].iter().map(|&l| Suffix(l)));
    for &l in &distinct[order..order + dummies] {
        labels.push(Suffix(l));
        labels.push(Suffix(l));
    }
    let mut keyed: Vec<(u32, Suffix)> = shuffle.into_iter().zip(labels).collect();
    keyed.sort_by_key(|(k, _)| *k);
    let labels: Vec<Suffix> = keyed.into_iter().map(|(_, l)| l).collect();
    if labels.len() != n {
        return None;
    }
    Some((template.label(&labels), order))
}

fn case_strategy() -> impl Strategy<Value = CasePreset> {
    prop::sample::select(CasePreset::ALL.to_vec())
}

fn term_strategy() -> impl Strategy<Value = (CasePreset, CandidateTerm, usize)> {
    (case_strategy(), 0usize..1000, prop::collection::vec(0u8..30, 8), prop::collection::vec(any::<u32>(), 7))
        .prop_filter_map("not enough labels", |(case, pick, pool, shuffle)| {
            labelled(case, pick, pool, shuffle).map(|(t, o)| (case, t, o))
        })
}

fn counts(term: &CandidateTerm) -> Vec<usize> {
    let mut c: Vec<usize> = term.suffix_counts().into_values().collect();
    c.sort_unstable();
    c
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(1.0)).fold(0.0, f64::max)
}

fn evaluate_all(term: &CandidateTerm, src: &AnalyticSource, x: &[f64]) -> Vec<f64> {
    tuples(src.spatial_dim, term.order())
        .iter()
        .map(|free| evaluate_candidate(term, &src.at(x, 0.2), src.spatial_dim, free).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonicalization_is_idempotent((_, term, order) in term_strategy()) {
        prop_assert!(term.check_validity(order).is_valid());
        let c = term.canonicalize().unwrap();
        prop_assert_eq!(c.canonicalize().unwrap(), c.clone());
        prop_assert!(c.is_canonical());
    }

    #[test]
    fn occurrence_counts_survive_canonicalization((_, term, _) in term_strategy()) {
        prop_assert_eq!(counts(&term), counts(&term.canonicalize().unwrap()));
    }

    #[test]
    fn relabelling_keeps_the_canonical_form((_, term, _) in term_strategy(), targets in prop::collection::vec(40u8..120, 8)) {
        // Any bijection of dummy labels; free labels keep their relative order.
        let free = term.free_suffixes();
        let mut fresh = targets;
        fresh.sort_unstable();
        fresh.dedup();
        prop_assume!(fresh.len() >= term.suffix_counts().len());
        let mut map = BTreeMap::new();
        let (low, high) = fresh.split_at(free.len());
        for (s, &l) in free.iter().zip(low) {
            map.insert(*s, Suffix(l));
        }
        let dummies: Vec<Suffix> = term.repeated_suffixes().into_iter().collect();
        for (s, &l) in dummies.iter().zip(high.iter().rev()) {
            map.insert(*s, Suffix(l));
        }
        let relabelled = term.relabel(|s| map[&s]);
        prop_assert_eq!(relabelled.canonicalize().unwrap(), term.canonicalize().unwrap());
    }

    #[test]
    fn symmetric_slot_permutation_keeps_the_canonical_form((_, term, _) in term_strategy(), pick in any::<usize>()) {
        let mut factors = term.factors().to_vec();
        let groups: Vec<(usize, Vec<usize>)> = factors
            .iter()
            .enumerate()
            .flat_map(|(i, f)| f.symmetric_slot_groups().into_iter().map(move |g| (i, g)))
            .filter(|(_, g)| g.len() > 1)
            .collect();
        prop_assume!(!groups.is_empty());
        let (f, g) = &groups[pick % groups.len()];
        let first = g[0];
        let last = g[g.len() - 1];
        factors[*f].slots.swap(first, last);
        let swapped = CandidateTerm::new(factors);
        prop_assert_eq!(swapped.canonicalize().unwrap(), term.canonicalize().unwrap());
    }

    #[test]
    fn equivalent_terms_have_equal_values((case, term, _) in term_strategy(), seed in 0u64..1000) {
        let src = case.equation().random_source(&FamilyParams::default(), seed);
        let canonical = term.canonicalize().unwrap();
        prop_assert!(term.equivalent(&canonical));
        let x = vec![0.3, 1.7, 4.1][..src.spatial_dim].to_vec();
        let a = evaluate_all(&term, &src, &x);
        let b = evaluate_all(&canonical, &src, &x);
        prop_assert!(max_abs_diff(&a, &b) <= 1e-12, "{term} vs {canonical}: {a:?} {b:?}");
    }
}
