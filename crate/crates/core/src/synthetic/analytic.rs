use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::assembly::FieldValues;
use crate::dataset::{ComponentKey, QuantityDecl};

/// One term `amp · cos(k·x + ω t + φ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: Vec<f64>,
    pub amp: f64,
    pub omega: f64,
    pub phase: f64,
}

/// A scalar field: constant plus a sum of travelling cosines.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigField {
    pub offset: f64,
    pub modes: Vec<Mode>,
}

impl TrigField {
    pub fn constant(offset: f64) -> Self {
        TrigField {
            offset,
            modes: Vec::new(),
        }
    }

    /// Value of `∂^axes ∂_t^time f` at `(x, t)`.
    pub fn eval(&self, x: &[f64], t: f64, axes: &[u8], time: usize) -> f64 {
        let mut sum = if axes.is_empty() && time == 0 { self.offset } else { 0.0 };
        for m in &self.modes {
            let theta = m.k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + m.omega * t + m.phase;
            let mut factor = m.amp;
            for &a in axes {
                factor *= m.k[a as usize];
            }
            for _ in 0..time {
                factor *= m.omega;
            }
            // d^n/dθ^n cos θ cycles through cos, -sin, -cos, sin.
            let trig = match (axes.len() + time) % 4 {
                0 => theta.cos(),
                1 => -theta.sin(),
                2 => -theta.cos(),
                _ => theta.sin(),
            };
            sum += factor * trig;
        }
        sum
    }

    /// [`eval`](Self::eval) for several `(axes, time order)` requests at one
    /// point, sharing the trigonometric evaluations.
    pub fn eval_many(&self, x: &[f64], t: f64, requests: &[(&[u8], usize)], out: &mut [f64]) {
        for (o, (axes, time)) in out.iter_mut().zip(requests) {
            *o = if axes.is_empty() && *time == 0 { self.offset } else { 0.0 };
        }
        for m in &self.modes {
            let theta = m.k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + m.omega * t + m.phase;
            let (s, c) = theta.sin_cos();
            for (o, (axes, time)) in out.iter_mut().zip(requests) {
                let mut factor = m.amp;
                for &a in *axes {
                    factor *= m.k[a as usize];
                }
                for _ in 0..*time {
                    factor *= m.omega;
                }
                let trig = match (axes.len() + time) % 4 {
                    0 => c,
                    1 => -s,
                    2 => -c,
                    _ => s,
                };
                *o += factor * trig;
            }
        }
    }
}

/// Parameters of a random trigonometric field family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilyParams {
    /// Modes per scalar component.
    pub modes: usize,
    /// Largest integer wavenumber magnitude per axis; each axis component is
    /// zero with probability 1/3, otherwise uniform over `±1..=±max`.
    pub max_wavenumber: i32,
    /// Standard deviation of the mode amplitudes (before richness weights).
    pub amplitude: f64,
    /// Standard deviation of the temporal frequencies.
    pub frequency: f64,
    /// Offsets are drawn uniformly from `[-offset, offset]`.
    pub offset: f64,
    /// Amplitude factor applied once per axis along which a mode varies.
    pub richness: Vec<f64>,
    /// Domain length per axis; wavenumbers are scaled by `2π / length`.
    pub length: f64,
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams {
            modes: 8,
            max_wavenumber: 4,
            amplitude: 1.0,
            frequency: 1.0,
            offset: 1.0,
            richness: Vec::new(),
            length: TAU,
        }
    }
}

impl FamilyParams {
    pub fn sample_field(&self, dim: usize, rng: &mut impl Rng) -> TrigField {
        let kmax = self.max_wavenumber.max(1);
        let base = TAU / self.length;
        let mut modes = Vec::with_capacity(self.modes);
        while modes.len() < self.modes {
            // Each axis is left constant with probability 1/3 so that weakly
            // weighted axes still leave plenty of modes that ignore them.
            let ints: Vec<i32> = (0..dim)
                .map(|_| {
                    if rng.random_bool(1.0 / 3.0) {
                        0
                    } else {
                        rng.random_range(1..=kmax) * if rng.random_bool(0.5) { 1 } else { -1 }
                    }
                })
                .collect();
            if ints.iter().all(|&k| k == 0) {
                continue;
            }
            let weight: f64 = ints
                .iter()
                .enumerate()
                .filter(|(_, k)| **k != 0)
                .map(|(a, _)| self.richness.get(a).copied().unwrap_or(1.0))
                .product();
            let amp: f64 = StandardNormal.sample(rng);
            let omega: f64 = StandardNormal.sample(rng);
            modes.push(Mode {
                k: ints.iter().map(|&k| k as f64 * base).collect(),
                amp: amp * self.amplitude * weight / (self.modes as f64).sqrt(),
                omega: omega * self.frequency,
                phase: rng.random_range(0.0..TAU),
            });
        }
        TrigField {
            offset: if self.offset > 0.0 {
                rng.random_range(-self.offset..=self.offset)
            } else {
                0.0
            },
            modes,
        }
    }
}

/// A tensor quantity whose stored components are analytic fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticQuantity {
    pub decl: QuantityDecl,
    /// Keyed by stored component tuple.
    pub components: BTreeMap<Vec<u8>, TrigField>,
}

impl AnalyticQuantity {
    pub fn random(decl: QuantityDecl, dim: usize, params: &FamilyParams, rng: &mut impl Rng) -> Self {
        let components = decl
            .components(dim)
            .into_iter()
            .map(|c| (c, params.sample_field(dim, rng)))
            .collect();
        AnalyticQuantity { decl, components }
    }

    /// A spatially and temporally constant tensor (components in storage order).
    pub fn constant(decl: QuantityDecl, dim: usize, values: &[f64]) -> Self {
        let comps = decl.components(dim);
        assert_eq!(comps.len(), values.len(), "one value per stored component");
        let components = comps.into_iter().zip(values).map(|(c, &v)| (c, TrigField::constant(v))).collect();
        AnalyticQuantity { decl, components }
    }

    pub fn field(&self, comps: &[u8]) -> Option<&TrigField> {
        self.components.get(&self.decl.canonical_components(comps))
    }
}

/// A collection of analytic quantities sharing one spatial dimension.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSource {
    pub spatial_dim: usize,
    pub quantities: BTreeMap<String, AnalyticQuantity>,
}

impl AnalyticSource {
    pub fn new(spatial_dim: usize) -> Self {
        AnalyticSource {
            spatial_dim,
            quantities: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, q: AnalyticQuantity) {
        self.quantities.insert(q.decl.name.clone(), q);
    }

    pub fn value_at(&self, key: &ComponentKey, x: &[f64], t: f64) -> Option<f64> {
        let f = self.quantities.get(&key.quantity)?.field(&key.components)?;
        if key.deriv.iter().any(|&a| a as usize >= self.spatial_dim) {
            return None;
        }
        Some(f.eval(x, t, &key.deriv, key.time_deriv as usize))
    }

    pub fn at<'a>(&'a self, x: &'a [f64], t: f64) -> AnalyticPoint<'a> {
        AnalyticPoint { source: self, x, t }
    }
}

/// An analytic source evaluated at one space-time point.
#[derive(Clone, Copy)]
pub struct AnalyticPoint<'a> {
    pub source: &'a AnalyticSource,
    pub x: &'a [f64],
    pub t: f64,
}

impl FieldValues for AnalyticPoint<'_> {
    fn value(&self, key: &ComponentKey) -> Option<f64> {
        self.source.value_at(key, self.x, self.t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = FamilyParams::default().sample_field(3, &mut rng);
        let x = [0.3, -1.1, 2.0];
        let h = 1e-5;
        for a in 0..3u8 {
            let mut xp = x;
            let mut xm = x;
            xp[a as usize] += h;
            xm[a as usize] -= h;
            let fd = (f.eval(&xp, 0.4, &[], 0) - f.eval(&xm, 0.4, &[], 0)) / (2.0 * h);
            assert!((fd - f.eval(&x, 0.4, &[a], 0)).abs() < 1e-7);
            let fd2 = (f.eval(&xp, 0.4, &[1], 0) - f.eval(&xm, 0.4, &[1], 0)) / (2.0 * h);
            assert!((fd2 - f.eval(&x, 0.4, &[1, a], 0)).abs() < 1e-6);
        }
        let req: Vec<(&[u8], usize)> = vec![(&[], 0), (&[2], 0), (&[0, 1], 0), (&[], 1)];
        let mut out = vec![0.0; 4];
        f.eval_many(&x, 0.4, &req, &mut out);
        for ((axes, time), v) in req.iter().zip(&out) {
            assert!((v - f.eval(&x, 0.4, axes, *time)).abs() < 1e-12);
        }
        let ft = (f.eval(&x, 0.4 + h, &[], 0) - f.eval(&x, 0.4 - h, &[], 0)) / (2.0 * h);
        assert!((ft - f.eval(&x, 0.4, &[], 1)).abs() < 1e-7);
    }

    #[test]
    fn richness_weight_suppresses_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = FamilyParams {
            richness: vec![1.0, 1.0, 0.01],
            ..FamilyParams::default()
        };
        let f = params.sample_field(3, &mut rng);
        for m in &f.modes {
            if m.k[2] != 0.0 {
                assert!(m.amp.abs() < 0.05);
            }
        }
    }

    #[test]
    fn symmetric_components_share_a_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tau = AnalyticQuantity::random(QuantityDecl::symmetric("tau", 2), 3, &FamilyParams::default(), &mut rng);
        assert_eq!(tau.components.len(), 6);
        assert_eq!(tau.field(&[2, 0]), tau.field(&[0, 2]));
    }
}
