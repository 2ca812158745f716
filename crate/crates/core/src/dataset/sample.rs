use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{fd_derivative_snapshot, time_derivative, Boundary, ComponentKey, GridDataset};
use crate::error::{CtsrError, Result};

#[derive(Clone, Debug, PartialEq)]
enum PlanItem {
    Quantity { name: String, max_deriv: u8 },
    TimeDerivative(String),
    Key(ComponentKey),
}

/// Which channels a sample table must carry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SamplePlan {
    items: Vec<PlanItem>,
}

impl SamplePlan {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every stored component of `name` and all its spatial derivatives up
    /// to depth `max_deriv` (axes sorted, so mixed partials appear once).
    pub fn quantity(mut self, name: &str, max_deriv: u8) -> Self {
        self.items.push(PlanItem::Quantity {
            name: name.to_string(),
            max_deriv,
        });
        self
    }

    pub fn time_derivative(mut self, name: &str) -> Self {
        self.items.push(PlanItem::TimeDerivative(name.to_string()));
        self
    }

    /// Stored components of `name` taken as-is, never differentiated.
    pub fn channel(self, name: &str) -> Self {
        self.quantity(name, 0)
    }

    pub fn key(mut self, key: ComponentKey) -> Self {
        self.items.push(PlanItem::Key(key));
        self
    }

    pub fn needs_time_derivative(&self) -> bool {
        self.items.iter().any(|i| match i {
            PlanItem::TimeDerivative(_) => true,
            PlanItem::Key(k) => k.time_deriv,
            PlanItem::Quantity { .. } => false,
        })
    }

    /// Expand the plan against a dataset into concrete, deduplicated keys.
    pub fn resolve(&self, ds: &GridDataset) -> Result<Vec<ComponentKey>> {
        let mut out: Vec<ComponentKey> = Vec::new();
        let mut push = |k: ComponentKey| {
            if !out.contains(&k) {
                out.push(k);
            }
        };
        let components = |name: &str| {
            ds.quantity(name)
                .map(|d| d.components(ds.spatial_dim))
                .ok_or_else(|| CtsrError::MissingField(format!("quantity `{name}` is not declared")))
        };
        for item in &self.items {
            match item {
                PlanItem::Key(k) => push(ds.storage_key(k)),
                PlanItem::TimeDerivative(name) => {
                    for comps in components(name)? {
                        push(ComponentKey::new(name.as_str(), &comps).with_time_deriv());
                    }
                }
                PlanItem::Quantity { name, max_deriv } => {
                    if *max_deriv > 2 {
                        return Err(CtsrError::Spec(format!("derivative depth {max_deriv} exceeds 2")));
                    }
                    for comps in components(name)? {
                        for d in 0..=*max_deriv as usize {
                            for axes in crate::library::tuples(ds.spatial_dim, d) {
                                if axes.windows(2).all(|w| w[0] <= w[1]) {
                                    push(ComponentKey::new(name.as_str(), &comps).with_deriv(&axes));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplePoint {
    pub coords: Vec<usize>,
    pub t: usize,
}

/// Values of the planned channels at sampled space-time points.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTable {
    pub columns: Vec<ComponentKey>,
    pub points: Vec<SamplePoint>,
    /// Row-major, `points.len() × columns.len()`.
    pub values: Vec<f64>,
    pub seed: u64,
    pub spatial_dim: usize,
    /// Quantities whose component index is stored sorted.
    pub symmetric: BTreeSet<String>,
    index: HashMap<ComponentKey, usize>,
}

impl SampleTable {
    pub fn new(columns: Vec<ComponentKey>, points: Vec<SamplePoint>, values: Vec<f64>, spatial_dim: usize, seed: u64) -> Self {
        assert_eq!(values.len(), columns.len() * points.len());
        let index = columns.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        SampleTable {
            columns,
            points,
            values,
            seed,
            spatial_dim,
            symmetric: BTreeSet::new(),
            index,
        }
    }

    pub fn with_symmetric(mut self, names: impl IntoIterator<Item = String>) -> Self {
        self.symmetric = names.into_iter().collect();
        self
    }

    /// Storage form of a key: derivative axes and symmetric components sorted.
    pub fn normalize(&self, key: &ComponentKey) -> ComponentKey {
        let mut k = key.clone();
        k.deriv.sort_unstable();
        if self.symmetric.contains(&k.quantity) {
            k.components.sort_unstable();
        }
        k
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn column(&self, key: &ComponentKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.columns.len();
        &self.values[r * w..(r + 1) * w]
    }

    pub fn value(&self, r: usize, key: &ComponentKey) -> Option<f64> {
        self.column(&self.normalize(key)).map(|c| self.row(r)[c])
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.spatial_dim).map(|a| format!("x{a}")).collect();
        header.push("t".into());
        header.extend(self.columns.iter().map(ComponentKey::name));
        out.write_record(&header)?;
        for (r, p) in self.points.iter().enumerate() {
            let mut rec: Vec<String> = p.coords.iter().map(ToString::to_string).collect();
            rec.push(p.t.to_string());
            rec.extend(self.row(r).iter().map(|v| format!("{v:e}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn interior_range(ds: &GridDataset, axis: usize) -> (usize, usize) {
    match ds.boundary[axis] {
        Boundary::Periodic => (0, ds.shape[axis]),
        Boundary::Clamped => (1, ds.shape[axis].saturating_sub(1)),
    }
}

/// Draws `n_space` interior locations and `n_time` interior snapshots without
/// replacement and tabulates the planned channels on their product. Rows are
/// ordered by snapshot, then location. With `n_time = 0` the table uses the
/// first snapshot only (steady data) and the plan may not ask for time
/// derivatives.
pub fn sample_points(ds: &GridDataset, plan: &SamplePlan, n_space: usize, n_time: usize, seed: u64) -> Result<SampleTable> {
    ds.validate()?;
    let columns = plan.resolve(ds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let ranges: Vec<(usize, usize)> = (0..ds.spatial_dim).map(|a| interior_range(ds, a)).collect();
    let interior: usize = ranges.iter().map(|(lo, hi)| hi.saturating_sub(*lo)).product();
    if n_space == 0 || n_space > interior {
        return Err(CtsrError::NotEnoughPoints(format!(
            "{n_space} spatial points requested, {interior} interior points available"
        )));
    }
    let times: Vec<usize> = if n_time == 0 {
        if plan.needs_time_derivative() {
            return Err(CtsrError::Spec(
                "time derivatives need n_time > 0".into(),
            ));
        }
        vec![0]
    } else {
        let available = ds.times.saturating_sub(2);
        if n_time > available {
            return Err(CtsrError::NotEnoughPoints(format!(
                "{n_time} snapshots requested, {available} interior snapshots available"
            )));
        }
        let mut t: Vec<usize> = rand::seq::index::sample(&mut rng, available, n_time)
            .into_iter()
            .map(|i| i + 1)
            .collect();
        t.sort_unstable();
        t
    };
    let mut locations: Vec<usize> = rand::seq::index::sample(&mut rng, interior, n_space).into_vec();
    locations.sort_unstable();
    let coords: Vec<Vec<usize>> = locations
        .iter()
        .map(|&k| {
            let mut rest = k;
            let mut c = vec![0; ds.spatial_dim];
            for a in (0..ds.spatial_dim).rev() {
                let (lo, hi) = ranges[a];
                c[a] = lo + rest % (hi - lo);
                rest /= hi - lo;
            }
            c
        })
        .collect();
    let flat: Vec<usize> = coords.iter().map(|c| ds.flat_index(c)).collect();

    let width = columns.len();
    let mut values = vec![0.0; times.len() * n_space * width];
    for (ti, &t) in times.iter().enumerate() {
        let channels: Vec<Vec<f64>> = columns
            .par_iter()
            .map(|key| channel_snapshot(ds, key, t))
            .collect::<Result<_>>()?;
        for (si, &p) in flat.iter().enumerate() {
            let row = ti * n_space + si;
            for (c, ch) in channels.iter().enumerate() {
                values[row * width + c] = ch[p];
            }
        }
    }
    let points = times
        .iter()
        .flat_map(|&t| coords.iter().map(move |c| SamplePoint { coords: c.clone(), t }))
        .collect();
    let symmetric = ds.quantities.iter().filter(|q| q.symmetric).map(|q| q.name.clone());
    Ok(SampleTable::new(columns, points, values, ds.spatial_dim, seed).with_symmetric(symmetric))
}

/// One channel at snapshot `t`: a stored field if present, otherwise a
/// stencil applied to the stored base component.
/// One snapshot of a channel: stored if present, otherwise by central differences.
pub fn channel_snapshot(ds: &GridDataset, key: &ComponentKey, t: usize) -> Result<Vec<f64>> {
    if let Some(stored) = ds.get(key) {
        return Ok(ds.snapshot(stored, t).to_vec());
    }
    let base_key = key.base();
    let base = ds.get(&base_key).ok_or_else(|| CtsrError::MissingField(ds.storage_key(&base_key).name()))?;
    if key.time_deriv {
        time_derivative(ds, base, t)
    } else {
        fd_derivative_snapshot(ds, ds.snapshot(base, t), &key.deriv)
    }
}
