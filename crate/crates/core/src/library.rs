//! Candidate library construction: template combination, suffix assignment,
//! filtering and deduplication for tensor mode, plus the component-wise scalar
//! library used as a baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CtsrError, Result};
use crate::symbolic::{CandidateTerm, FactorKind, Suffix, Template};

/// A physical quantity offered to the library builder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputTensorSpec {
    pub name: String,
    pub base_order: u8,
    /// Highest spatial derivative depth generated for this input (0, 1 or 2).
    pub max_deriv: u8,
    #[serde(default)]
    pub symmetric_base: bool,
    #[serde(default = "yes")]
    pub include_as_nonderivative: bool,
    /// Derivative depths that are not emitted on their own (still allowed in products).
    #[serde(default)]
    pub excluded_standalone_derivatives: Vec<u8>,
    /// Whether the scalar baseline sees this quantity as a field. Constant
    /// vectors such as gravity only make sense in tensor mode.
    #[serde(default = "yes")]
    pub include_in_scalar: bool,
}

fn yes() -> bool {
    true
}

impl InputTensorSpec {
    pub fn new(name: impl Into<String>, base_order: u8, max_deriv: u8) -> Self {
        InputTensorSpec {
            name: name.into(),
            base_order,
            max_deriv,
            symmetric_base: false,
            include_as_nonderivative: true,
            excluded_standalone_derivatives: Vec::new(),
            include_in_scalar: true,
        }
    }

    pub fn symmetric(mut self) -> Self {
        self.symmetric_base = true;
        self
    }

    pub fn exclude_standalone(mut self, depth: u8) -> Self {
        self.excluded_standalone_derivatives.push(depth);
        self
    }

    pub fn tensor_only(mut self) -> Self {
        self.include_in_scalar = false;
        self
    }

    fn kind(&self, deriv: u8) -> FactorKind {
        FactorKind::new(self.name.clone(), self.base_order, deriv, self.symmetric_base)
    }

    /// Independent scalar components; symmetric tensors keep only `i <= j <= ...`.
    pub fn components(&self, dim: usize) -> Vec<Vec<u8>> {
        tuples(dim, self.base_order as usize)
            .into_iter()
            .filter(|c| !self.symmetric_base || c.windows(2).all(|w| w[0] <= w[1]))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LibraryMode {
    Tensor,
    Scalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub inputs: Vec<InputTensorSpec>,
    /// Highest number of non-derivative factors in a product.
    pub max_poly_order: usize,
    pub target_order: usize,
    pub mode: LibraryMode,
    pub spatial_dim: usize,
}

impl LibrarySpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.spatial_dim) {
            return Err(CtsrError::Spec(format!(
                "spatial_dim must be 2 or 3, got {}",
                self.spatial_dim
            )));
        }
        let mut names = BTreeSet::new();
        for input in &self.inputs {
            if input.max_deriv > 2 {
                return Err(CtsrError::Spec(format!(
                    "{}: max_deriv must be 0, 1 or 2",
                    input.name
                )));
            }
            if input.name.is_empty() || !names.insert(input.name.as_str()) {
                return Err(CtsrError::Spec(format!(
                    "input names must be unique and non-empty: `{}`",
                    input.name
                )));
            }
            if input.name.contains(|c: char| c.is_whitespace() || "[]/,".contains(c)) {
                return Err(CtsrError::Spec(format!(
                    "input name `{}` contains reserved characters",
                    input.name
                )));
            }
        }
        Ok(())
    }

    pub fn input(&self, name: &str) -> Option<&InputTensorSpec> {
        self.inputs.iter().find(|i| i.name == name)
    }

    pub fn is_symmetric(&self, name: &str) -> bool {
        self.input(name).is_some_and(|i| i.symmetric_base)
    }

    /// Parse a term in canonical text using this spec's symmetry declarations.
    pub fn parse_term(&self, text: &str) -> Result<CandidateTerm> {
        CandidateTerm::parse(text, |name| self.is_symmetric(name))
    }
}

/// One template of the combination step, tagged with whether it is a
/// "1 × derivative" product that the spec excludes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateEntry {
    pub template: Template,
    pub excluded: bool,
}

/// All products of up to `P` non-derivative factors (unordered, with
/// repetition) with exactly one element of `{1} ∪ derivative terms`. The pure
/// constant is included; excluded standalone derivatives are kept but flagged.
pub fn enumerate_templates(spec: &LibrarySpec) -> Vec<TemplateEntry> {
    let nonderiv: Vec<FactorKind> = spec
        .inputs
        .iter()
        .filter(|i| i.include_as_nonderivative)
        .map(|i| i.kind(0))
        .collect();
    let mut derivs: Vec<(Option<FactorKind>, bool)> = vec![(None, false)];
    for input in &spec.inputs {
        for d in 1..=input.max_deriv {
            let excluded = input.excluded_standalone_derivatives.contains(&d);
            derivs.push((Some(input.kind(d)), excluded));
        }
    }

    let mut out = Vec::new();
    for degree in 0..=spec.max_poly_order {
        for combo in multisets(nonderiv.len(), degree) {
            for (deriv, excluded) in &derivs {
                let mut factors: Vec<FactorKind> = combo.iter().map(|&i| nonderiv[i].clone()).collect();
                if let Some(d) = deriv {
                    factors.push(d.clone());
                }
                out.push(TemplateEntry {
                    template: Template::new(factors),
                    excluded: *excluded && degree == 0,
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LibraryEntry {
    pub term: CandidateTerm,
    pub template_id: usize,
}

#[derive(Clone, Debug)]
pub struct TensorLibrary {
    pub entries: Vec<LibraryEntry>,
    pub templates: Vec<Template>,
    /// Sum of `n^n` over every template considered.
    pub raw_assignments: u128,
}

impl TensorLibrary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn terms(&self) -> Vec<CandidateTerm> {
        self.entries.iter().map(|e| e.term.clone()).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.term.to_string()).collect()
    }

    pub fn position(&self, term: &CandidateTerm) -> Option<usize> {
        let canonical = term.canonicalize().ok()?;
        self.entries.iter().position(|e| e.term == canonical)
    }
}

/// Canonical, valid, deduplicated candidates of one template.
pub fn expand_template(template: &Template, target_order: usize) -> BTreeSet<CandidateTerm> {
    let n = template.slot_count();
    let mut out = BTreeSet::new();
    if n < target_order || (n - target_order) % 2 != 0 {
        return out;
    }
    // Only labelings with every count <= 2 can survive; prune the rest early.
    let mut labels = vec![Suffix(0); n];
    let mut counts = vec![0u8; n.max(1)];
    fn rec(
        pos: usize,
        labels: &mut Vec<Suffix>,
        counts: &mut Vec<u8>,
        template: &Template,
        target: usize,
        out: &mut BTreeSet<CandidateTerm>,
    ) {
        let n = labels.len();
        if pos == n {
            let free = counts.iter().filter(|&&c| c == 1).count();
            if free == target {
                let term = template.label(labels);
                if let Ok(c) = term.canonicalize() {
                    out.insert(c);
                }
            }
            return;
        }
        for l in 0..n {
            if counts[l] < 2 {
                counts[l] += 1;
                labels[pos] = Suffix(l as u8);
                rec(pos + 1, labels, counts, template, target, out);
                counts[l] -= 1;
            }
        }
    }
    rec(0, &mut labels, &mut counts, template, target_order, &mut out);
    out
}

pub fn build_tensor_library(spec: &LibrarySpec) -> Result<TensorLibrary> {
    spec.validate()?;
    if spec.mode != LibraryMode::Tensor {
        return Err(CtsrError::Spec("build_tensor_library needs tensor mode".into()));
    }
    let entries = enumerate_templates(spec);
    let templates: Vec<Template> = entries.iter().map(|e| e.template.clone()).collect();
    let raw_assignments = templates.iter().map(Template::raw_assignment_count).sum();

    let expanded: Vec<(usize, BTreeSet<CandidateTerm>)> = entries
        .par_iter()
        .enumerate()
        .filter(|(_, e)| !e.excluded)
        .map(|(id, e)| (id, expand_template(&e.template, spec.target_order)))
        .collect();

    let mut seen: BTreeMap<String, LibraryEntry> = BTreeMap::new();
    for (template_id, terms) in expanded {
        for term in terms {
            seen.entry(term.to_string())
                .or_insert(LibraryEntry { term, template_id });
        }
    }
    Ok(TensorLibrary {
        entries: seen.into_values().collect(),
        templates,
        raw_assignments,
    })
}

/// One scalar field component or one of its derivatives, e.g. `du_x/dy`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScalarFactor {
    pub quantity: String,
    pub components: Vec<u8>,
    /// Ordered derivative axes; `[0, 1]` and `[1, 0]` are distinct entries.
    pub deriv: Vec<u8>,
}

const AXES: [char; 3] = ['x', 'y', 'z'];

impl fmt::Display for ScalarFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut base = self.quantity.clone();
        if !self.components.is_empty() {
            base.push('_');
            base.extend(self.components.iter().map(|&c| AXES[c as usize]));
        }
        match self.deriv.len() {
            0 => f.write_str(&base),
            n => {
                if n == 1 {
                    write!(f, "d{base}/")?;
                } else {
                    write!(f, "d{n}{base}/")?;
                }
                for &a in &self.deriv {
                    write!(f, "d{}", AXES[a as usize])?;
                }
                Ok(())
            }
        }
    }
}

/// A product of scalar factors: a monomial in field components times at most
/// one derivative component.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScalarCandidate {
    pub factors: Vec<ScalarFactor>,
}

impl fmt::Display for ScalarCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return f.write_str("1");
        }
        let parts: Vec<String> = self.factors.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(" "))
    }
}

/// Component-wise library: every monomial of degree `<= P` in the scalar field
/// components (degree 0 included) times `{1} ∪` every scalar derivative
/// component, minus the pure constant and minus excluded standalone derivatives.
pub fn build_scalar_library(spec: &LibrarySpec) -> Result<Vec<ScalarCandidate>> {
    spec.validate()?;
    let dim = spec.spatial_dim;
    let inputs: Vec<&InputTensorSpec> = spec.inputs.iter().filter(|i| i.include_in_scalar).collect();

    let mut fields = Vec::new();
    for input in inputs.iter().filter(|i| i.include_as_nonderivative) {
        for comps in input.components(dim) {
            fields.push(ScalarFactor {
                quantity: input.name.clone(),
                components: comps,
                deriv: Vec::new(),
            });
        }
    }
    let mut derivs: Vec<(Option<ScalarFactor>, bool)> = vec![(None, false)];
    for input in &inputs {
        for depth in 1..=input.max_deriv {
            let excluded = input.excluded_standalone_derivatives.contains(&depth);
            for comps in input.components(dim) {
                for axes in tuples(dim, depth as usize) {
                    derivs.push((
                        Some(ScalarFactor {
                            quantity: input.name.clone(),
                            components: comps.clone(),
                            deriv: axes,
                        }),
                        excluded,
                    ));
                }
            }
        }
    }

    let mut out = Vec::new();
    for degree in 0..=spec.max_poly_order {
        for combo in multisets(fields.len(), degree) {
            for (deriv, excluded) in &derivs {
                if degree == 0 && (deriv.is_none() || *excluded) {
                    continue;
                }
                let mut factors: Vec<ScalarFactor> = combo.iter().map(|&i| fields[i].clone()).collect();
                factors.extend(deriv.iter().cloned());
                out.push(ScalarCandidate { factors });
            }
        }
    }
    Ok(out)
}

/// A rendered library listing.
#[derive(Clone, Debug, Serialize)]
pub struct LibraryReport {
    pub mode: LibraryMode,
    pub count: usize,
    pub rows: Vec<ReportRow>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportRow {
    pub index: usize,
    pub term: String,
    pub template_id: Option<usize>,
}

impl LibraryReport {
    pub fn tensor(library: &TensorLibrary) -> Self {
        LibraryReport {
            mode: LibraryMode::Tensor,
            count: library.len(),
            rows: library
                .entries
                .iter()
                .enumerate()
                .map(|(index, e)| ReportRow {
                    index,
                    term: e.term.to_string(),
                    template_id: Some(e.template_id),
                })
                .collect(),
        }
    }

    pub fn scalar(library: &[ScalarCandidate]) -> Self {
        LibraryReport {
            mode: LibraryMode::Scalar,
            count: library.len(),
            rows: library
                .iter()
                .enumerate()
                .map(|(index, c)| ReportRow {
                    index,
                    term: c.to_string(),
                    template_id: None,
                })
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {:?} library: {} candidates\n", self.mode, self.count);
        for row in &self.rows {
            out.push_str(&format!("{:>5}  {}\n", row.index, row.term));
        }
        out
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["index", "term", "template_id"])?;
        for row in &self.rows {
            csv.write_record([
                row.index.to_string(),
                row.term.clone(),
                row.template_id.map(|t| t.to_string()).unwrap_or_default(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// All ordered tuples of length `len` over `0..dim`, lexicographic.
pub fn tuples(dim: usize, len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..dim as u8).map(move |a| {
                    let mut t = t.clone();
                    t.push(a);
                    t
                })
            })
            .collect();
    }
    out
}

/// Non-decreasing index sequences of length `k` over `0..n` (multisets).
fn multisets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}
