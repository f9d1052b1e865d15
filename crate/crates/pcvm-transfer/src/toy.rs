//! Synthetic two-domain datasets for demos and harness tests.
//!
//! Both generators build a binary problem from two Gaussian clusters in the
//! first two feature dimensions and fill the remaining dimensions with unit
//! Gaussian noise. Samples are emitted class-sorted (all positive-class
//! rows first), matching the layout of the preprocessed text benchmarks
//! this kind of harness usually ingests.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Distance of both class centers from the origin.
const RADIUS: f64 = 2.0;
/// Angular gap between the two class centers, degrees.
const CLASS_GAP_DEG: f64 = 60.0;
/// Within-class standard deviation in the two signal dimensions.
const SIGMA_SIGNAL: f64 = 0.4;
/// Standard deviation of the noise dimensions.
const SIGMA_NOISE: f64 = 1.0;

fn validate_sizes(n: usize, m: usize, d: usize) -> Result<()> {
    if n < 2 || m < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 samples per domain, got n = {n}, m = {m}"
        )));
    }
    if d < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 feature dimensions, got d = {d}"
        )));
    }
    Ok(())
}

/// Draws `count` samples around an angle on the signal circle, noise in the
/// remaining dimensions.
fn sample_cluster(
    rng: &mut ChaCha8Rng,
    angle_rad: f64,
    count: usize,
    d: usize,
) -> Vec<Vec<f64>> {
    let signal = Normal::new(0.0, SIGMA_SIGNAL).expect("positive sigma");
    let noise = Normal::new(0.0, SIGMA_NOISE).expect("positive sigma");
    let cx = RADIUS * angle_rad.cos();
    let cy = RADIUS * angle_rad.sin();
    (0..count)
        .map(|_| {
            let mut row = Vec::with_capacity(d);
            row.push(cx + signal.sample(rng));
            row.push(cy + signal.sample(rng));
            for _ in 2..d {
                row.push(noise.sample(rng));
            }
            row
        })
        .collect()
}

fn assemble(rows: Vec<Vec<f64>>, positives: usize, name: &str) -> Result<Dataset> {
    let n = rows.len();
    let d = rows[0].len();
    let features = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mut labels = vec![1i64; positives];
    labels.extend(vec![-1i64; n - positives]);
    Dataset::new(features, labels, name)
}

fn two_cluster_domain(
    rng: &mut ChaCha8Rng,
    count: usize,
    d: usize,
    base_angle_deg: f64,
) -> (Vec<Vec<f64>>, usize) {
    let positives = count.div_ceil(2);
    let a0 = base_angle_deg.to_radians();
    let a1 = (base_angle_deg + CLASS_GAP_DEG).to_radians();
    let mut rows = sample_cluster(rng, a0, positives, d);
    rows.extend(sample_cluster(rng, a1, count - positives, d));
    (rows, positives)
}

/// Source and target share the class layout, but every target sample has
/// its two signal coordinates rotated by `angle_degrees` about the origin.
/// A classifier fit on the raw source degrades on the target as the angle
/// grows; the class structure itself is preserved.
pub fn rotated_gaussians(
    n: usize,
    m: usize,
    d: usize,
    angle_degrees: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    validate_sizes(n, m, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (source_rows, source_pos) = two_cluster_domain(&mut rng, n, d, 0.0);
    let (mut target_rows, target_pos) = two_cluster_domain(&mut rng, m, d, 0.0);
    let phi = angle_degrees.to_radians();
    let (sin, cos) = phi.sin_cos();
    for row in &mut target_rows {
        let (x, y) = (row[0], row[1]);
        row[0] = cos * x - sin * y;
        row[1] = sin * x + cos * y;
    }
    Ok((
        assemble(source_rows, source_pos, "rotated-gaussians-source")?,
        assemble(target_rows, target_pos, "rotated-gaussians-target")?,
    ))
}

/// Source and target share the class layout; the target's class centers are
/// shifted by `shift` along the first feature dimension.
pub fn shifted_means(
    n: usize,
    m: usize,
    d: usize,
    shift: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    validate_sizes(n, m, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (source_rows, source_pos) = two_cluster_domain(&mut rng, n, d, 0.0);
    let (mut target_rows, target_pos) = two_cluster_domain(&mut rng, m, d, 0.0);
    for row in &mut target_rows {
        row[0] += shift;
    }
    Ok((
        assemble(source_rows, source_pos, "shifted-means-source")?,
        assemble(target_rows, target_pos, "shifted-means-target")?,
    ))
}
