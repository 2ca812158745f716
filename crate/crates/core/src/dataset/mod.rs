//! Structured-grid spatio-temporal datasets: storage, finite-difference
//! derivatives, seeded sampling, and the on-disk format.

mod io;
mod sample;
mod stencil;

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{CtsrError, Result};

pub use io::{load_dataset, save_dataset};
pub use sample::{channel_snapshot, sample_points, SamplePlan, SamplePoint, SampleTable};
pub use stencil::{fd_derivative, fd_derivative_snapshot, time_derivative};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Clamped,
}

/// Declares a tensor quantity whose components are stored as separate fields.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantityDecl {
    pub name: String,
    pub order: u8,
    #[serde(default)]
    pub symmetric: bool,
}

impl QuantityDecl {
    pub fn new(name: impl Into<String>, order: u8) -> Self {
        QuantityDecl {
            name: name.into(),
            order,
            symmetric: false,
        }
    }

    pub fn symmetric(name: impl Into<String>, order: u8) -> Self {
        QuantityDecl {
            name: name.into(),
            order,
            symmetric: true,
        }
    }

    /// Storage form of a component index: sorted for symmetric tensors.
    pub fn canonical_components(&self, comps: &[u8]) -> Vec<u8> {
        let mut c = comps.to_vec();
        if self.symmetric {
            c.sort_unstable();
        }
        c
    }

    /// Independent stored components.
    pub fn components(&self, dim: usize) -> Vec<Vec<u8>> {
        crate::library::tuples(dim, self.order as usize)
            .into_iter()
            .filter(|c| !self.symmetric || c.windows(2).all(|w| w[0] <= w[1]))
            .collect()
    }
}

/// Identifies one scalar channel: a quantity component, optionally
/// differentiated in space (sorted axes) or once in time.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComponentKey {
    pub quantity: String,
    pub components: Vec<u8>,
    pub deriv: Vec<u8>,
    pub time_deriv: bool,
}

impl ComponentKey {
    pub fn new(quantity: impl Into<String>, components: &[u8]) -> Self {
        ComponentKey {
            quantity: quantity.into(),
            components: components.to_vec(),
            deriv: Vec::new(),
            time_deriv: false,
        }
    }

    pub fn with_deriv(mut self, axes: &[u8]) -> Self {
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        self.deriv = axes;
        self
    }

    pub fn with_time_deriv(mut self) -> Self {
        self.time_deriv = true;
        self
    }

    /// Key of the undifferentiated component.
    pub fn base(&self) -> ComponentKey {
        ComponentKey::new(self.quantity.clone(), &self.components)
    }

    /// Field name used in datasets and CSV headers: `u.0`, `tau.0.1`, `p`,
    /// `u.1/d00`, `u.0/dt`.
    pub fn name(&self) -> String {
        let mut s = self.quantity.clone();
        for c in &self.components {
            s.push('.');
            s.push_str(&c.to_string());
        }
        if self.time_deriv {
            s.push_str("/dt");
        } else if !self.deriv.is_empty() {
            s.push_str("/d");
            for a in &self.deriv {
                s.push_str(&a.to_string());
            }
        }
        s
    }

    pub fn parse_name(name: &str) -> Option<ComponentKey> {
        let (head, tail) = match name.split_once('/') {
            Some((h, t)) => (h, Some(t)),
            None => (name, None),
        };
        let mut parts = head.split('.');
        let quantity = parts.next()?.to_string();
        if quantity.is_empty() {
            return None;
        }
        let components = parts.map(|p| p.parse().ok()).collect::<Option<Vec<u8>>>()?;
        let mut key = ComponentKey {
            quantity,
            components,
            deriv: Vec::new(),
            time_deriv: false,
        };
        match tail {
            None => {}
            Some("dt") => key.time_deriv = true,
            Some(t) => {
                let digits = t.strip_prefix('d')?;
                if digits.is_empty() {
                    return None;
                }
                let axes = digits
                    .chars()
                    .map(|c| c.to_digit(10).map(|d| d as u8))
                    .collect::<Option<Vec<u8>>>()?;
                key = key.with_deriv(&axes);
            }
        }
        Some(key)
    }
}

impl fmt::Display for ComponentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Field snapshots on a uniform grid. Each field holds `times` snapshots of
/// `shape.iter().product()` values, snapshot-major, last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDataset {
    pub spatial_dim: usize,
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub dt: f64,
    pub times: usize,
    pub boundary: Vec<Boundary>,
    pub quantities: Vec<QuantityDecl>,
    pub fields: IndexMap<String, Vec<f64>>,
    pub metadata: BTreeMap<String, String>,
}

impl GridDataset {
    pub fn new(shape: Vec<usize>, spacing: Vec<f64>, dt: f64, times: usize, boundary: Vec<Boundary>) -> Result<Self> {
        let ds = GridDataset {
            spatial_dim: shape.len(),
            shape,
            spacing,
            dt,
            times,
            boundary,
            quantities: Vec::new(),
            fields: IndexMap::new(),
            metadata: BTreeMap::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn points(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_steady(&self) -> bool {
        self.times == 1
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.spatial_dim;
        if !(1..=3).contains(&d) || self.shape.len() != d || self.spacing.len() != d || self.boundary.len() != d {
            return Err(CtsrError::Format(format!(
                "inconsistent dimensions: dim {d}, shape {:?}, spacing {:?}, boundary {:?}",
                self.shape, self.spacing, self.boundary
            )));
        }
        if self.spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) || !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CtsrError::Format("spacing and dt must be positive".into()));
        }
        if self.times == 0 || self.shape.iter().any(|&n| n == 0) {
            return Err(CtsrError::Format("empty grid".into()));
        }
        let expected = self.points() * self.times;
        for (name, values) in &self.fields {
            if values.len() != expected {
                return Err(CtsrError::Format(format!(
                    "field {name} has {} values, expected {expected}",
                    values.len()
                )));
            }
        }
        Ok(())
    }

    pub fn quantity(&self, name: &str) -> Option<&QuantityDecl> {
        self.quantities.iter().find(|q| q.name == name)
    }

    pub fn declare(&mut self, decl: QuantityDecl) {
        if let Some(q) = self.quantities.iter_mut().find(|q| q.name == decl.name) {
            *q = decl;
        } else {
            self.quantities.push(decl);
        }
    }

    /// Storage-normalised key: symmetric components sorted.
    pub fn storage_key(&self, key: &ComponentKey) -> ComponentKey {
        let mut k = key.clone();
        if let Some(q) = self.quantity(&key.quantity) {
            k.components = q.canonical_components(&key.components);
        }
        k
    }

    pub fn insert(&mut self, key: &ComponentKey, values: Vec<f64>) -> Result<()> {
        let expected = self.points() * self.times;
        if values.len() != expected {
            return Err(CtsrError::Format(format!(
                "field {} has {} values, expected {expected}",
                key.name(),
                values.len()
            )));
        }
        self.fields.insert(self.storage_key(key).name(), values);
        Ok(())
    }

    pub fn field(&self, name: &str) -> Result<&[f64]> {
        self.fields
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| CtsrError::MissingField(name.to_string()))
    }

    pub fn get(&self, key: &ComponentKey) -> Option<&[f64]> {
        self.fields.get(&self.storage_key(key).name()).map(Vec::as_slice)
    }

    pub fn snapshot<'a>(&self, values: &'a [f64], t: usize) -> &'a [f64] {
        let n = self.points();
        &values[t * n..(t + 1) * n]
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.spatial_dim];
        for a in (0..self.spatial_dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.shape[a + 1];
        }
        strides
    }

    pub fn flat_index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(self.strides())
            .map(|(c, s)| c * s)
            .sum()
    }

    pub fn coords(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.spatial_dim];
        for a in (0..self.spatial_dim).rev() {
            out[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        out
    }

    /// Physical position of a grid point, `x_a = index_a · h_a`.
    pub fn position(&self, coords: &[usize]) -> Vec<f64> {
        coords
            .iter()
            .zip(&self.spacing)
            .map(|(&c, &h)| c as f64 * h)
            .collect()
    }
}
