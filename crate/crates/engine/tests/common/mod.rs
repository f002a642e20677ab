// Shared across the engine's integration-test targets; not every target
// uses every helper.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cola_core::estfun::expit;
use cola_core::SiteDataset;

/// Confounded two-covariate site: treatment depends on (x1, x2), outcome on
/// (a, x1, x2). Sized so local fits converge comfortably.
pub fn simulate_site(seed: u64, n: usize, site_id: &str) -> SiteDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcome = Vec::with_capacity(n);
    let mut treatment = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let x1 = rng.gen::<f64>() * 2.0 - 1.0;
        let x2 = f64::from(rng.gen::<f64>() < 0.5);
        let e = expit(0.1 + 0.6 * x1 - 0.4 * x2);
        let a = u8::from(rng.gen::<f64>() < e);
        let m = expit(-0.4 + 0.5 * f64::from(a) + 0.5 * x1 + 0.3 * x2);
        let y = u8::from(rng.gen::<f64>() < m);
        outcome.push(y);
        treatment.push(a);
        rows.push(x1);
        rows.push(x2);
    }
    SiteDataset::new(
        site_id,
        outcome,
        treatment,
        DMatrix::from_row_slice(n, 2, &rows),
        false,
    )
    .unwrap()
}

pub fn simulate_sites(seed: u64, k: usize, n: usize) -> Vec<SiteDataset> {
    (0..k)
        .map(|i| simulate_site(seed.wrapping_add(i as u64), n, &format!("site{}", i + 1)))
        .collect()
}

/// A site whose outcome equals its treatment, so the local MSM is perfectly
/// separated and its effect fit cannot converge, while the propensity fit
/// stays healthy.
pub fn separated_msm_site(seed: u64, n: usize, site_id: &str) -> SiteDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcome = Vec::with_capacity(n);
    let mut treatment = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let x1 = rng.gen::<f64>() * 2.0 - 1.0;
        let x2 = f64::from(rng.gen::<f64>() < 0.5);
        let a = u8::from(rng.gen::<f64>() < 0.5);
        outcome.push(a);
        treatment.push(a);
        rows.push(x1);
        rows.push(x2);
    }
    SiteDataset::new(
        site_id,
        outcome,
        treatment,
        DMatrix::from_row_slice(n, 2, &rows),
        false,
    )
    .unwrap()
}
