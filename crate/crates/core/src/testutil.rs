//! Shared helpers for unit tests across modules.

use rand::Rng;

use crate::model::{ClassDistribution, ConfusionMatrix};

/// A diagonally dominant random channel plus a random prior, both valid by
/// construction. Diagonal dominance keeps the induced posterior matrix well
/// conditioned so tests never trip the rank guard by accident.
pub fn random_channel_and_dist(
    r: &mut impl Rng,
    n: usize,
) -> (ConfusionMatrix, ClassDistribution) {
    let rows = (0..n)
        .map(|k| {
            let mut row: Vec<f64> = (0..n).map(|_| r.gen_range(0.01..1.0)).collect();
            row[k] += n as f64;
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
            row
        })
        .collect();
    let c = ConfusionMatrix::from_rows(rows).unwrap();
    let mut p: Vec<f64> = (0..n).map(|_| r.gen_range(0.05..1.0)).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    (c, ClassDistribution::new(p).unwrap())
}
