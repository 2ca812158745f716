//! Symbolic Cartesian tensor terms.
//!
//! A [`CandidateTerm`] is a product of [`TensorFactor`]s whose index slots carry
//! [`Suffix`] labels. A label used once is a free suffix, a label used twice is
//! summed over (Einstein convention). This module implements suffix assignment,
//! validity checking and canonicalisation; numeric evaluation lives in
//! [`crate::assembly`].
//!
//! Canonical text form, used in reports and golden files:
//!
//! ```text
//! u[j] du[i]/dx[j]          u_j ∂u_i/∂x_j
//! d2u[i]/dx[j]dx[j]         ∂²u_i/(∂x_j ∂x_j)
//! tau[i,k] du[j]/dx[k]      τ_ik ∂u_j/∂x_k
//! dp/dx[i]                  ∂p/∂x_i
//! 1                         the constant
//! ```

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CtsrError, Result};

const LETTERS: &[u8] = b"ijklmnopqrstuvwxyzabcdefgh";

/// Index label. `0 ↔ i`, `1 ↔ j`, `2 ↔ k`, ...; labels past the alphabet print as `s26`, `s27`, ...
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Suffix(pub u8);

impl Suffix {
    pub fn parse(text: &str) -> Option<Suffix> {
        let bytes = text.as_bytes();
        if bytes.len() == 1 {
            return LETTERS
                .iter()
                .position(|&c| c == bytes[0])
                .map(|p| Suffix(p as u8));
        }
        text.strip_prefix('s')?.parse().ok().map(Suffix)
    }
}

impl fmt::Display for Suffix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match LETTERS.get(self.0 as usize) {
            Some(&c) => write!(f, "{}", c as char),
            None => write!(f, "s{}", self.0),
        }
    }
}

/// The unlabelled shape of a factor: which quantity, its tensor order, and how
/// many spatial derivatives are applied to it.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct FactorKind {
    pub base: String,
    pub base_order: u8,
    pub deriv_order: u8,
    /// The quantity itself is a symmetric tensor (e.g. a polymer stress).
    pub symmetric_base: bool,
}

impl FactorKind {
    pub fn new(base: impl Into<String>, base_order: u8, deriv_order: u8, symmetric_base: bool) -> Self {
        FactorKind {
            base: base.into(),
            base_order,
            deriv_order,
            symmetric_base,
        }
    }

    pub fn slot_count(&self) -> usize {
        (self.base_order + self.deriv_order) as usize
    }

    /// Disjoint slot sets whose labels may be permuted freely: the indices of a
    /// symmetric base tensor, and the derivative slots of a second (or higher) derivative.
    pub fn symmetric_slot_groups(&self) -> Vec<Vec<usize>> {
        let mut groups = Vec::new();
        let bo = self.base_order as usize;
        if self.symmetric_base && bo >= 2 {
            groups.push((0..bo).collect());
        }
        if self.deriv_order >= 2 {
            groups.push((bo..bo + self.deriv_order as usize).collect());
        }
        groups
    }

    fn sort_key(&self) -> (&str, u8, u8, bool) {
        (&self.base, self.deriv_order, self.base_order, self.symmetric_base)
    }

    fn write_labelled(&self, f: &mut impl fmt::Write, labels: &[String]) -> fmt::Result {
        let bo = self.base_order as usize;
        match self.deriv_order {
            0 => {}
            1 => f.write_char('d')?,
            n => write!(f, "d{n}")?,
        }
        f.write_str(&self.base)?;
        if bo > 0 {
            write!(f, "[{}]", labels[..bo].join(","))?;
        }
        if self.deriv_order > 0 {
            f.write_char('/')?;
            for label in &labels[bo..] {
                write!(f, "dx[{label}]")?;
            }
        }
        Ok(())
    }
}

impl Ord for FactorKind {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for FactorKind {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct TensorFactor {
    pub kind: FactorKind,
    pub slots: Vec<Suffix>,
}

impl TensorFactor {
    pub fn new(kind: FactorKind, slots: Vec<Suffix>) -> Result<Self> {
        if slots.len() != kind.slot_count() {
            return Err(CtsrError::Spec(format!(
                "factor {} expects {} slots, got {}",
                kind.base,
                kind.slot_count(),
                slots.len()
            )));
        }
        Ok(TensorFactor { kind, slots })
    }

    pub fn symmetric_slot_groups(&self) -> Vec<Vec<usize>> {
        self.kind.symmetric_slot_groups()
    }
}

impl Ord for TensorFactor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.kind
            .cmp(&other.kind)
            .then_with(|| self.slots.cmp(&other.slots))
    }
}

impl PartialOrd for TensorFactor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for TensorFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.slots.iter().map(ToString::to_string).collect();
        self.kind.write_labelled(f, &labels)
    }
}

/// An unlabelled product of factor kinds, e.g. `u[_] du[_]/dx[_]`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Template {
    factors: Vec<FactorKind>,
}

impl Template {
    pub fn new(mut factors: Vec<FactorKind>) -> Self {
        factors.sort();
        Template { factors }
    }

    pub fn constant() -> Self {
        Template { factors: Vec::new() }
    }

    pub fn factors(&self) -> &[FactorKind] {
        &self.factors
    }

    pub fn slot_count(&self) -> usize {
        self.factors.iter().map(FactorKind::slot_count).sum()
    }

    pub fn is_constant(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn label(&self, labels: &[Suffix]) -> CandidateTerm {
        assert_eq!(labels.len(), self.slot_count(), "label count must match slot count");
        let mut offset = 0;
        let factors = self
            .factors
            .iter()
            .map(|kind| {
                let n = kind.slot_count();
                let slots = labels[offset..offset + n].to_vec();
                offset += n;
                TensorFactor {
                    kind: kind.clone(),
                    slots,
                }
            })
            .collect();
        CandidateTerm { factors }
    }

    /// Number of raw suffix assignments, `n^n` for `n` slots.
    pub fn raw_assignment_count(&self) -> u128 {
        let n = self.slot_count() as u32;
        (n as u128).pow(n)
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return f.write_str("1");
        }
        for (i, kind) in self.factors.iter().enumerate() {
            if i > 0 {
                f.write_char(' ')?;
            }
            let labels = vec!["_".to_string(); kind.slot_count()];
            kind.write_labelled(f, &labels)?;
        }
        Ok(())
    }
}

use fmt::Write as _;

/// Outcome of the tensor-notation validity rules.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validity {
    Valid,
    /// A label occurs more than twice.
    SuffixOverused { suffix: Suffix, count: usize },
    /// The number of free suffixes differs from the target equation order.
    FreeCountMismatch { free: usize, target: usize },
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }
}

impl fmt::Display for Validity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Validity::Valid => f.write_str("valid"),
            Validity::SuffixOverused { suffix, count } => {
                write!(f, "suffix {suffix} appears {count} times")
            }
            Validity::FreeCountMismatch { free, target } => {
                write!(f, "{free} free suffixes for a target of order {target}")
            }
        }
    }
}

/// A labelled product of tensor factors.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct CandidateTerm {
    factors: Vec<TensorFactor>,
}

impl CandidateTerm {
    pub fn new(factors: Vec<TensorFactor>) -> Self {
        CandidateTerm { factors }
    }

    pub fn constant() -> Self {
        CandidateTerm {
            factors: Vec::new(),
        }
    }

    pub fn factors(&self) -> &[TensorFactor] {
        &self.factors
    }

    pub fn template(&self) -> Template {
        Template::new(self.factors.iter().map(|f| f.kind.clone()).collect())
    }

    pub fn slot_count(&self) -> usize {
        self.factors.iter().map(|f| f.slots.len()).sum()
    }

    pub fn labels(&self) -> impl Iterator<Item = Suffix> + '_ {
        self.factors.iter().flat_map(|f| f.slots.iter().copied())
    }

    pub fn suffix_counts(&self) -> BTreeMap<Suffix, usize> {
        let mut counts = BTreeMap::new();
        for s in self.labels() {
            *counts.entry(s).or_insert(0) += 1;
        }
        counts
    }

    /// Free suffixes in ascending label order; position `k` of a free-value
    /// tuple binds the `k`-th entry.
    pub fn free_suffixes(&self) -> Vec<Suffix> {
        self.suffix_counts()
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(s, _)| s)
            .collect()
    }

    pub fn repeated_suffixes(&self) -> BTreeSet<Suffix> {
        self.suffix_counts()
            .into_iter()
            .filter(|&(_, c)| c == 2)
            .map(|(s, _)| s)
            .collect()
    }

    /// Tensor order of the term (number of free suffixes).
    pub fn order(&self) -> usize {
        self.free_suffixes().len()
    }

    pub fn check_validity(&self, target_order: usize) -> Validity {
        if let Some(v) = self.overuse() {
            return v;
        }
        let free = self.order();
        if free != target_order {
            return Validity::FreeCountMismatch {
                free,
                target: target_order,
            };
        }
        Validity::Valid
    }

    fn overuse(&self) -> Option<Validity> {
        self.suffix_counts()
            .into_iter()
            .find(|&(_, c)| c > 2)
            .map(|(suffix, count)| Validity::SuffixOverused { suffix, count })
    }

    pub fn relabel(&self, map: impl Fn(Suffix) -> Suffix) -> CandidateTerm {
        CandidateTerm {
            factors: self
                .factors
                .iter()
                .map(|f| TensorFactor {
                    kind: f.kind.clone(),
                    slots: f.slots.iter().map(|&s| map(s)).collect(),
                })
                .collect(),
        }
    }

    /// Unique representative of the term's equivalence class under factor
    /// commutativity and symmetric slot groups.
    ///
    /// Factors are ordered by kind; free suffixes are renamed to the lowest labels
    /// keeping their relative order, repeated suffixes follow by first appearance,
    /// and labels inside each symmetric group are sorted. Renaming and sorting are
    /// iterated to a fixed point for every admissible arrangement of tied factors
    /// and symmetric slots, and the lexicographically smallest result is kept.
    pub fn canonicalize(&self) -> Result<CandidateTerm> {
        if let Some(reason) = self.overuse() {
            return Err(CtsrError::InvalidTerm {
                term: self.to_string(),
                reason,
            });
        }
        let mut factors = self.factors.clone();
        factors.sort_by(|a, b| a.kind.cmp(&b.kind));
        let kinds: Vec<FactorKind> = factors.iter().map(|f| f.kind.clone()).collect();

        let mut runs = Vec::new();
        let mut start = 0;
        for i in 1..=factors.len() {
            if i == factors.len() || factors[i].kind != factors[start].kind {
                runs.push(start..i);
                start = i;
            }
        }

        // Slot positions of every symmetric group in the flattened label vector.
        let mut offsets = Vec::with_capacity(kinds.len());
        let mut acc = 0;
        for k in &kinds {
            offsets.push(acc);
            acc += k.slot_count();
        }
        let groups: Vec<Vec<usize>> = kinds
            .iter()
            .zip(&offsets)
            .flat_map(|(k, &off)| {
                k.symmetric_slot_groups()
                    .into_iter()
                    .map(move |g| g.into_iter().map(|s| s + off).collect::<Vec<_>>())
            })
            .collect();

        let run_perms: Vec<Vec<Vec<usize>>> = runs.iter().map(|r| permutations(r.len())).collect();
        let group_perms: Vec<Vec<Vec<usize>>> = groups.iter().map(|g| permutations(g.len())).collect();

        let mut best: Option<Vec<Suffix>> = None;
        for_each_choice(&run_perms, |run_choice| {
            let mut order: Vec<usize> = Vec::with_capacity(factors.len());
            for (r, perm) in runs.iter().zip(run_choice) {
                order.extend(perm.iter().map(|&p| r.start + p));
            }
            let base: Vec<Suffix> = order
                .iter()
                .flat_map(|&i| factors[i].slots.iter().copied())
                .collect();
            for_each_choice(&group_perms, |group_choice| {
                let mut arranged = base.clone();
                for (g, perm) in groups.iter().zip(group_choice) {
                    for (dst, &src) in g.iter().zip(perm.iter()) {
                        arranged[*dst] = base[g[src]];
                    }
                }
                let settled = settle(arranged, &groups);
                if best.as_ref().is_none_or(|b| settled < *b) {
                    best = Some(settled);
                }
            });
        });

        let labels = best.unwrap_or_default();
        Ok(Template { factors: kinds }.label(&labels))
    }

    pub fn is_canonical(&self) -> bool {
        self.canonicalize().map(|c| c == *self).unwrap_or(false)
    }

    /// Structural equality of canonical forms. Terms with an overused suffix are
    /// never equivalent to anything.
    pub fn equivalent(&self, other: &CandidateTerm) -> bool {
        match (self.canonicalize(), other.canonicalize()) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        }
    }

    /// Parse the canonical text form. `symmetric` reports whether a base quantity
    /// is a symmetric tensor.
    pub fn parse(text: &str, symmetric: impl Fn(&str) -> bool) -> Result<CandidateTerm> {
        let err = |message: &str| CtsrError::Parse {
            text: text.to_string(),
            message: message.to_string(),
        };
        let text = text.trim();
        if text == "1" {
            return Ok(CandidateTerm::constant());
        }
        let mut factors = Vec::new();
        for token in text.split_whitespace() {
            let (numerator, deriv_labels) = match token.split_once('/') {
                None => (token, Vec::new()),
                Some((num, den)) => {
                    let mut labels = Vec::new();
                    let mut rest = den;
                    while !rest.is_empty() {
                        let inner = rest
                            .strip_prefix("dx[")
                            .ok_or_else(|| err("derivative denominator must be dx[..] groups"))?;
                        let close = inner.find(']').ok_or_else(|| err("unclosed dx["))?;
                        labels.push(
                            Suffix::parse(&inner[..close]).ok_or_else(|| err("bad derivative suffix"))?,
                        );
                        rest = &inner[close + 1..];
                    }
                    (num, labels)
                }
            };
            let deriv_order = deriv_labels.len();
            let base_text = match deriv_order {
                0 => numerator,
                1 => numerator.strip_prefix('d').ok_or_else(|| err("derivative must start with d"))?,
                n => numerator
                    .strip_prefix(&format!("d{n}"))
                    .ok_or_else(|| err("higher derivative must start with d<order>"))?,
            };
            let (name, base_labels) = match base_text.split_once('[') {
                None => (base_text, Vec::new()),
                Some((name, idx)) => {
                    let idx = idx.strip_suffix(']').ok_or_else(|| err("unclosed index list"))?;
                    let labels = idx
                        .split(',')
                        .map(|s| Suffix::parse(s.trim()).ok_or_else(|| err("bad index suffix")))
                        .collect::<Result<Vec<_>>>()?;
                    (name, labels)
                }
            };
            if name.is_empty() {
                return Err(err("empty quantity name"));
            }
            let kind = FactorKind::new(
                name,
                base_labels.len() as u8,
                deriv_order as u8,
                symmetric(name),
            );
            let slots = base_labels.into_iter().chain(deriv_labels).collect();
            factors.push(TensorFactor { kind, slots });
        }
        Ok(CandidateTerm { factors })
    }
}

impl fmt::Display for CandidateTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return f.write_str("1");
        }
        for (i, factor) in self.factors.iter().enumerate() {
            if i > 0 {
                f.write_char(' ')?;
            }
            write!(f, "{factor}")?;
        }
        Ok(())
    }
}

impl Serialize for CandidateTerm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Every one of the `n^n` labelings of a template with `n` slots, each slot
/// drawing from `n` distinct labels.
pub fn assign_suffixes(template: &Template) -> Vec<CandidateTerm> {
    let n = template.slot_count();
    let mut out = Vec::new();
    let mut labels = vec![Suffix(0); n];
    loop {
        out.push(template.label(&labels));
        // odometer increment, last slot fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if (labels[pos].0 as usize) + 1 < n {
                labels[pos].0 += 1;
                break;
            }
            labels[pos] = Suffix(0);
        }
    }
}

pub fn check_validity(term: &CandidateTerm, target_order: usize) -> Validity {
    term.check_validity(target_order)
}

pub fn canonicalize(term: &CandidateTerm) -> Result<CandidateTerm> {
    term.canonicalize()
}

pub fn equivalent(a: &CandidateTerm, b: &CandidateTerm) -> bool {
    a.equivalent(b)
}

/// Rename and sort symmetric groups until nothing changes.
fn settle(mut labels: Vec<Suffix>, groups: &[Vec<usize>]) -> Vec<Suffix> {
    for _ in 0..32 {
        let mut next = rename(&labels);
        for g in groups {
            let mut vals: Vec<Suffix> = g.iter().map(|&i| next[i]).collect();
            vals.sort();
            for (&i, v) in g.iter().zip(vals) {
                next[i] = v;
            }
        }
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}

fn rename(labels: &[Suffix]) -> Vec<Suffix> {
    let mut counts: BTreeMap<Suffix, usize> = BTreeMap::new();
    for &s in labels {
        *counts.entry(s).or_insert(0) += 1;
    }
    let mut map: BTreeMap<Suffix, Suffix> = BTreeMap::new();
    let mut next = 0u8;
    for (&s, &c) in &counts {
        if c == 1 {
            map.insert(s, Suffix(next));
            next += 1;
        }
    }
    for &s in labels {
        if !map.contains_key(&s) {
            map.insert(s, Suffix(next));
            next += 1;
        }
    }
    labels.iter().map(|s| map[s]).collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Calls `f` once per element of the cartesian product of `options`.
fn for_each_choice<T>(options: &[Vec<T>], mut f: impl FnMut(&[&T])) {
    fn rec<'a, T>(options: &'a [Vec<T>], picked: &mut Vec<&'a T>, f: &mut impl FnMut(&[&T])) {
        match options.split_first() {
            None => f(picked),
            Some((first, rest)) => {
                for item in first {
                    picked.push(item);
                    rec(rest, picked, f);
                    picked.pop();
                }
            }
        }
    }
    rec(options, &mut Vec::with_capacity(options.len()), &mut f);
}
