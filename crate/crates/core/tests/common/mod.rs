//! Independent oracles shared by the integration suites.

#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Nodes and weights of the n-point Gauss-Hermite rule (weight exp(-x^2)),
/// by Newton iteration on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let pi_m4 = std::f64::consts::PI.powf(-0.25);
    let mut out = vec![(0.0, 0.0); n];
    let m = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * out[0].0,
            3 => 1.91 * z - 0.91 * out[1].0,
            _ => 2.0 * z - out[i - 2].0,
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pi_m4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        let w = 2.0 / (pp * pp);
        out[i] = (z, w);
        out[n - 1 - i] = (-z, w);
    }
    out
}

/// E[f(theta)] for theta ~ N(0, sigma^2) by n-point Gauss-Hermite quadrature.
pub fn gaussian_expectation(n: usize, sigma: f64, f: impl Fn(f64) -> f64) -> f64 {
    let norm = std::f64::consts::PI.sqrt();
    gauss_hermite(n).into_iter().map(|(x, w)| w * f(std::f64::consts::SQRT_2 * sigma * x)).sum::<f64>() / norm
}

/// Sample variance of S2_in + s1 * phi with independent Gaussian draws.
/// Returns (variance, standard error of the variance estimate).
pub fn sampled_output_variance(v2_in: f64, s1: f64, var_phi: f64, n: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s2 = Normal::new(0.0, v2_in.sqrt()).unwrap();
    let phi = Normal::new(0.0, var_phi.sqrt()).unwrap();
    let (mut sum, mut sum2) = (0.0, 0.0);
    let mut fourth = 0.0;
    let samples: Vec<f64> = (0..n).map(|_| s2.sample(&mut rng) + s1 * phi.sample(&mut rng)).collect();
    for x in &samples {
        sum += x;
        sum2 += x * x;
    }
    let mean = sum / n as f64;
    let var = sum2 / n as f64 - mean * mean;
    for x in &samples {
        fourth += (x - mean).powi(4);
    }
    let m4 = fourth / n as f64;
    let se = ((m4 - var * var) / n as f64).sqrt();
    (var, se)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}
