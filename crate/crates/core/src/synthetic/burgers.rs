use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Boundary, ComponentKey, GridDataset, QuantityDecl};
use crate::error::{CtsrError, Result};

/// Explicit periodic solver for `u_t = −u_j ∂u_i/∂x_j + ε ∂²u_i/∂x_j∂x_j` in 2D.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurgersConfig {
    /// Grid points per axis.
    pub n: usize,
    /// Domain length per axis.
    pub length: f64,
    pub epsilon: f64,
    /// Integration step.
    pub dt: f64,
    /// Integration steps after the initial state.
    pub steps: usize,
    /// Steps between stored snapshots; snapshot spacing is `dt · save_every`.
    pub save_every: usize,
    pub seed: u64,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        BurgersConfig {
            n: 64,
            length: TAU,
            epsilon: 0.1,
            dt: 5e-4,
            steps: 4000,
            save_every: 40,
            seed: 0,
        }
    }
}

impl BurgersConfig {
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn snapshot_dt(&self) -> f64 {
        self.dt * self.save_every as f64
    }

    pub fn snapshots(&self) -> usize {
        1 + self.steps / self.save_every
    }

    fn validate(&self) -> Result<()> {
        if self.n < 3 || !(self.length > 0.0) || !(self.epsilon >= 0.0) || !(self.dt > 0.0) || self.save_every == 0 {
            return Err(CtsrError::Spec(format!("invalid Burgers configuration: {self:?}")));
        }
        Ok(())
    }
}

/// Random initial velocity: each component independently
/// `2 w0 / max|w0| + c`, with `w0 = Σ_{|k|,|l|≤4} λ cos(kx+ly) + γ sin(kx+ly)`,
/// `λ, γ ~ N(0,1)` and `c ~ U(−2, 2)`.
pub fn burgers_initial(config: &BurgersConfig) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n;
    let h = config.spacing();
    let base = TAU / config.length;
    let mut component = || {
        let mut coeffs = Vec::new();
        for k in -4i32..=4 {
            for l in -4i32..=4 {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                coeffs.push((k as f64 * base, l as f64 * base, a, b));
            }
        }
        let c: f64 = rng.random_range(-2.0..=2.0);
        let mut w0 = vec![0.0; n * n];
        for (p, w) in w0.iter_mut().enumerate() {
            let (x, y) = ((p / n) as f64 * h, (p % n) as f64 * h);
            *w = coeffs
                .iter()
                .map(|(k, l, a, b)| {
                    let arg = k * x + l * y;
                    a * arg.cos() + b * arg.sin()
                })
                .sum();
        }
        let max = w0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if max > 0.0 { 2.0 / max } else { 0.0 };
        w0.into_iter().map(|v| v * scale + c).collect::<Vec<f64>>()
    };
    let u = component();
    let v = component();
    (u, v)
}

/// Runs the solver from the seeded random initial condition.
pub fn burgers2d_simulate(config: &BurgersConfig) -> Result<GridDataset> {
    let (u, v) = burgers_initial(config);
    burgers2d_from(config, u, v)
}

/// Runs the solver from a given initial state (`n × n`, x-major).
pub fn burgers2d_from(config: &BurgersConfig, mut u: Vec<f64>, mut v: Vec<f64>) -> Result<GridDataset> {
    config.validate()?;
    let n = config.n;
    if u.len() != n * n || v.len() != n * n {
        return Err(CtsrError::Spec(format!("initial state must have {} points", n * n)));
    }
    let h = config.spacing();
    let umax = u.iter().chain(&v).fold(0.0f64, |m, x| m.max(x.abs()));
    let diffusive = if config.epsilon > 0.0 { h * h / (4.0 * config.epsilon) } else { f64::INFINITY };
    let convective = if umax > 0.0 { h / umax } else { f64::INFINITY };
    let bound = diffusive.min(convective);
    if config.dt > bound {
        return Err(CtsrError::Spec(format!(
            "dt = {} violates the explicit stability bound {bound:.3e}",
            config.dt
        )));
    }

    let times = config.snapshots();
    let mut ds = GridDataset::new(vec![n, n], vec![h, h], config.snapshot_dt(), times, vec![Boundary::Periodic; 2])?;
    let mut out_u = Vec::with_capacity(n * n * times);
    let mut out_v = Vec::with_capacity(n * n * times);
    out_u.extend_from_slice(&u);
    out_v.extend_from_slice(&v);

    let (inv2h, invhh) = (1.0 / (2.0 * h), 1.0 / (h * h));
    let mut du = vec![0.0; n * n];
    let mut dv = vec![0.0; n * n];
    for step in 1..=config.steps {
        for i in 0..n {
            let (ip, im) = ((i + 1) % n, (i + n - 1) % n);
            for j in 0..n {
                let (jp, jm) = ((j + 1) % n, (j + n - 1) % n);
                let p = i * n + j;
                let rhs = |f: &[f64]| {
                    let (fxp, fxm, fyp, fym) = (f[ip * n + j], f[im * n + j], f[i * n + jp], f[i * n + jm]);
                    let fx = (fxp - fxm) * inv2h;
                    let fy = (fyp - fym) * inv2h;
                    let lap = ((fxp + fxm) - 2.0 * f[p]) * invhh + ((fyp + fym) - 2.0 * f[p]) * invhh;
                    -(u[p] * fx + v[p] * fy) + config.epsilon * lap
                };
                du[p] = rhs(&u);
                dv[p] = rhs(&v);
            }
        }
        for p in 0..n * n {
            u[p] += config.dt * du[p];
            v[p] += config.dt * dv[p];
        }
        if !u.iter().chain(&v).all(|x| x.is_finite()) {
            return Err(CtsrError::Numerical(format!("non-finite velocity at step {step}")));
        }
        if step % config.save_every == 0 {
            out_u.extend_from_slice(&u);
            out_v.extend_from_slice(&v);
        }
    }

    ds.declare(QuantityDecl::new("u", 1));
    ds.insert(&ComponentKey::new("u", &[0]), out_u)?;
    ds.insert(&ComponentKey::new("u", &[1]), out_v)?;
    for (k, v) in [
        ("generator", "burgers2d".to_string()),
        ("seed", config.seed.to_string()),
        ("epsilon", config.epsilon.to_string()),
        ("solver_dt", config.dt.to_string()),
        ("save_every", config.save_every.to_string()),
        ("initial_condition", "trigonometric family applied to each velocity component".into()),
    ] {
        ds.metadata.insert(k.into(), v);
    }
    Ok(ds)
}
