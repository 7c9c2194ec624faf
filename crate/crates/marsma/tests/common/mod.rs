#![allow(dead_code)]

use std::f64::consts::PI;

use marsma_core::channel::{Scenario, UserChannel};
use marsma_core::config::GlobalConfig;
use marsma_core::{CVector, Complex64};
use rand::Rng;
use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn cn(r: &mut ChaCha8Rng) -> Complex64 {
    // Box-Muller
    let u1: f64 = r.random_range(f64::EPSILON..1.0);
    let u2: f64 = r.random_range(0.0..1.0);
    let m = (-u1.ln()).sqrt();
    Complex64::from_polar(m, 2.0 * PI * u2)
}

pub fn random_channels(r: &mut ChaCha8Rng, k: usize, n: usize) -> Vec<CVector> {
    (0..k).map(|_| (0..n).map(|_| cn(r)).collect()).collect()
}

/// One antenna, one user, one path at broadside, so the channel equals
/// the path gain wherever the antenna sits.
pub fn scalar_scenario(h: Complex64, noise_power: f64, p_max: f64) -> Scenario {
    let config = GlobalConfig {
        n_paths: 1,
        noise_power,
        p_max,
        ..GlobalConfig::reference(1, 1)
    };
    let user = UserChannel {
        angles: vec![PI / 2.0],
        gains: vec![h],
        distance: 50.0,
    };
    Scenario::new(config, vec![user]).unwrap()
}

/// Best single-user total rate over the three-way power split on a grid
/// of step `step`, with exact (non-linearized) SINRs.
pub fn grid_true_rate(g: f64, noise: f64, p_max: f64, step: f64) -> f64 {
    let n = (1.0 / step).round() as usize;
    let mut best = 0.0f64;
    for i in 0..=n {
        for j in 0..=(n - i) {
            let l = n - i - j;
            let (p1, p2, p3) = (
                p_max * i as f64 / n as f64,
                p_max * j as f64 / n as f64,
                p_max * l as f64 / n as f64,
            );
            let r_c2 = (1.0 + g * p1 / (noise + g * (p2 + p3))).log2();
            let r_c1 = (1.0 + g * p2 / (noise + g * p3)).log2();
            let r_p = (1.0 + g * p3 / noise).log2();
            best = best.max(r_c2 + r_c1 + r_p);
        }
    }
    best
}
