#![allow(dead_code)]

use cvlasso::DesignMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gaussian_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DesignMatrix {
    DesignMatrix::from_row_major(n, p, gaussian_vec(rng, n * p)).unwrap()
}

pub fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// `||y - X b||^2` by explicit row loops.
pub fn objective(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> f64 {
    (0..x.nrows())
        .map(|i| {
            let fit: f64 = (0..x.ncols()).map(|j| x.get(i, j) * beta[j]).sum();
            (y[i] - fit).powi(2)
        })
        .sum()
}

/// Uniform-radius random point of the l1 ball of radius `k`.
pub fn random_feasible(rng: &mut ChaCha8Rng, p: usize, k: f64) -> Vec<f64> {
    let g = gaussian_vec(rng, p);
    let norm = l1(&g);
    let radius = k * rng.random::<f64>();
    g.into_iter().map(|v| v * radius / norm).collect()
}

/// Projection onto the l1 ball by bisection on the soft threshold:
/// find `theta` with `sum max(|v_i| - theta, 0) = k`.
pub fn projection_oracle(v: &[f64], k: f64) -> Vec<f64> {
    if l1(v) <= k {
        return v.to_vec();
    }
    let mass = |t: f64| v.iter().map(|x| (x.abs() - t).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    v.iter()
        .map(|x| (x.abs() - theta).max(0.0).copysign(*x))
        .collect()
}
