use rayon::prelude::*;

use super::{Boundary, GridDataset};
use crate::error::{CtsrError, Result};

/// Second-order central derivative of a full field (all snapshots).
///
/// A repeated axis uses the three-point second difference. A mixed partial
/// applies the first-difference stencil along each axis in turn and averages
/// the two application orders, so the result does not depend on axis order
/// and commutes exactly with axis permutations. Points inside the margin of a
/// clamped axis are NaN.
pub fn fd_derivative(ds: &GridDataset, values: &[f64], axes: &[u8]) -> Result<Vec<f64>> {
    let n = ds.points();
    if values.len() != n * ds.times {
        return Err(CtsrError::Format(format!(
            "field has {} values, expected {}",
            values.len(),
            n * ds.times
        )));
    }
    let snaps: Vec<Vec<f64>> = values
        .par_chunks(n)
        .map(|snap| fd_derivative_snapshot(ds, snap, axes))
        .collect::<Result<_>>()?;
    Ok(snaps.concat())
}

/// [`fd_derivative`] on a single snapshot.
pub fn fd_derivative_snapshot(ds: &GridDataset, snap: &[f64], axes: &[u8]) -> Result<Vec<f64>> {
    if axes.len() > 2 {
        return Err(CtsrError::Spec(format!(
            "derivative depth {} exceeds 2",
            axes.len()
        )));
    }
    for &a in axes {
        let a = a as usize;
        if a >= ds.spatial_dim {
            return Err(CtsrError::Spec(format!(
                "axis {a} out of range for a {}-dimensional grid",
                ds.spatial_dim
            )));
        }
        if ds.shape[a] < 3 {
            return Err(CtsrError::InsufficientMargin {
                axis: a,
                points: ds.shape[a],
            });
        }
    }
    match axes {
        [] => Ok(snap.to_vec()),
        [a] => Ok(diff1(ds, snap, *a as usize)),
        [a, b] if a == b => Ok(diff2(ds, snap, *a as usize)),
        [a, b] => {
            let (a, b) = (*a as usize, *b as usize);
            let ab = diff1(ds, &diff1(ds, snap, a), b);
            let ba = diff1(ds, &diff1(ds, snap, b), a);
            Ok(ab.iter().zip(&ba).map(|(x, y)| 0.5 * (x + y)).collect())
        }
        _ => unreachable!(),
    }
}

/// Neighbour offsets of a point along an axis, or `None` inside a clamped margin.
fn neighbours(ds: &GridDataset, axis: usize, coord: usize, stride: usize) -> Option<(isize, isize)> {
    let len = ds.shape[axis];
    let s = stride as isize;
    if coord == 0 {
        match ds.boundary[axis] {
            Boundary::Periodic => Some((s, s * (len as isize - 1))),
            Boundary::Clamped => None,
        }
    } else if coord == len - 1 {
        match ds.boundary[axis] {
            Boundary::Periodic => Some((-s * (len as isize - 1), -s)),
            Boundary::Clamped => None,
        }
    } else {
        Some((s, -s))
    }
}

fn apply(ds: &GridDataset, snap: &[f64], axis: usize, op: impl Fn(f64, f64, f64) -> f64) -> Vec<f64> {
    let stride = ds.strides()[axis];
    let len = ds.shape[axis];
    (0..snap.len())
        .map(|p| {
            let coord = (p / stride) % len;
            match neighbours(ds, axis, coord, stride) {
                Some((up, down)) => {
                    let fp = snap[(p as isize + up) as usize];
                    let fm = snap[(p as isize + down) as usize];
                    op(fp, snap[p], fm)
                }
                None => f64::NAN,
            }
        })
        .collect()
}

fn diff1(ds: &GridDataset, snap: &[f64], axis: usize) -> Vec<f64> {
    let h2 = 2.0 * ds.spacing[axis];
    apply(ds, snap, axis, |fp, _, fm| (fp - fm) / h2)
}

fn diff2(ds: &GridDataset, snap: &[f64], axis: usize) -> Vec<f64> {
    let hh = ds.spacing[axis] * ds.spacing[axis];
    // (f+ + f-) is evaluated first so the stencil is exactly symmetric under reflection.
    apply(ds, snap, axis, |fp, f, fm| ((fp + fm) - 2.0 * f) / hh)
}

/// Central time difference of a field at snapshot `t`.
pub fn time_derivative(ds: &GridDataset, values: &[f64], t: usize) -> Result<Vec<f64>> {
    if t == 0 || t + 1 >= ds.times {
        return Err(CtsrError::TimeBoundary {
            index: t,
            times: ds.times,
        });
    }
    let next = ds.snapshot(values, t + 1);
    let prev = ds.snapshot(values, t - 1);
    let dt2 = 2.0 * ds.dt;
    Ok(next.iter().zip(prev).map(|(a, b)| (a - b) / dt2).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(n: usize, h: f64, boundary: Boundary, times: usize) -> GridDataset {
        GridDataset::new(vec![n], vec![h], 0.1, times, vec![boundary]).unwrap()
    }

    fn sample(ds: &GridDataset, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..ds.points())
            .map(|p| f(&ds.position(&ds.coords(p))))
            .collect()
    }

    #[test]
    fn exact_on_low_degree_polynomials() {
        let ds = grid1(11, 0.3, Boundary::Clamped, 1);
        let lin = sample(&ds, |x| 3.0 * x[0] - 1.0);
        let quad = sample(&ds, |x| x[0] * x[0]);
        let d1 = fd_derivative(&ds, &lin, &[0]).unwrap();
        let d2 = fd_derivative(&ds, &quad, &[0, 0]).unwrap();
        assert!(d1[0].is_nan() && d1[10].is_nan());
        for p in 1..10 {
            assert!((d1[p] - 3.0).abs() < 1e-12);
            assert!((d2[p] - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sine_truncation_matches_taylor() {
        let n = 64;
        let h = std::f64::consts::TAU / n as f64;
        let ds = grid1(n, h, Boundary::Periodic, 1);
        let f = sample(&ds, |x| x[0].sin());
        let d = fd_derivative(&ds, &f, &[0]).unwrap();
        for p in 0..n {
            let x = p as f64 * h;
            let predicted = x.cos() * (h.sin() / h);
            assert!((d[p] - predicted).abs() < 1e-13);
            assert!((d[p] - x.cos() * (1.0 - h * h / 6.0)).abs() < h.powi(4));
        }
    }

    #[test]
    fn clamped_axis_too_short() {
        let ds = grid1(2, 1.0, Boundary::Clamped, 1);
        let err = fd_derivative(&ds, &[0.0, 1.0], &[0]).unwrap_err();
        assert!(matches!(err, CtsrError::InsufficientMargin { axis: 0, points: 2 }));
    }

    #[test]
    fn mixed_partial_on_bilinear() {
        let ds = GridDataset::new(vec![6, 7], vec![0.5, 0.25], 1.0, 1, vec![Boundary::Clamped; 2]).unwrap();
        let f = sample(&ds, |x| x[0] * x[1] + x[1]);
        let dxy = fd_derivative(&ds, &f, &[0, 1]).unwrap();
        let dyx = fd_derivative(&ds, &f, &[1, 0]).unwrap();
        for p in 0..ds.points() {
            let c = ds.coords(p);
            if (1..5).contains(&c[0]) && (1..6).contains(&c[1]) {
                assert!((dxy[p] - 1.0).abs() < 1e-12);
                assert!((dyx[p] - 1.0).abs() < 1e-12);
            } else {
                assert!(dxy[p].is_nan());
            }
        }
    }

    #[test]
    fn time_difference() {
        let ds = grid1(3, 1.0, Boundary::Periodic, 5);
        let values: Vec<f64> = (0..5).flat_map(|t| vec![t as f64 * 0.1; 3]).collect();
        assert!(time_derivative(&ds, &values, 2).unwrap().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(matches!(time_derivative(&ds, &values, 0), Err(CtsrError::TimeBoundary { .. })));
        assert!(time_derivative(&ds, &values, 4).is_err());
        let constant = vec![2.5; 15];
        assert!(time_derivative(&ds, &constant, 1).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_in_time() {
        let omega = 3.0;
        let ds = GridDataset::new(vec![3], vec![1.0], 0.01, 50, vec![Boundary::Periodic]).unwrap();
        let values: Vec<f64> = (0..50)
            .flat_map(|t| vec![(omega * t as f64 * 0.01).sin(); 3])
            .collect();
        for t in 1..49 {
            let d = time_derivative(&ds, &values, t).unwrap();
            let exact = omega * (omega * t as f64 * 0.01).cos();
            assert!((d[0] - exact).abs() < omega.powi(3) * 1e-4 / 6.0 + 1e-12);
        }
    }
}
