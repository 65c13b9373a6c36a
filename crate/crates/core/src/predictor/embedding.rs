use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Random Fourier features of the scalar time: `[sin(2πωt), cos(2πωt)]`
/// with `ω ~ N(0, scale²)` drawn once from the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepEmbedding {
    freqs: Vec<f64>,
    pub scale: f64,
}

impl TimestepEmbedding {
    pub const DEFAULT_DIM: usize = 128;
    pub const DEFAULT_SCALE: f64 = 16.0;

    pub fn new(dim: usize, scale: f64, seed: RngSeed) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "embedding dim {dim} must be even and positive"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!(
                "fourier scale {scale} must be positive"
            )));
        }
        let mut rng = seed.rng();
        let freqs = (0..dim / 2).map(|_| rng.normal() * scale).collect();
        Ok(Self { freqs, scale })
    }

    pub fn dim(&self) -> usize {
        2 * self.freqs.len()
    }

    pub fn embed(&self, t: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend(self.freqs.iter().map(|w| (2.0 * PI * w * t).sin()));
        out.extend(self.freqs.iter().map(|w| (2.0 * PI * w * t).cos()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn deterministic_and_sized() {
        let a = TimestepEmbedding::new(128, 16.0, RngSeed::new(4)).unwrap();
        let b = TimestepEmbedding::new(128, 16.0, RngSeed::new(4)).unwrap();
        assert_eq!(a.embed(0.3), b.embed(0.3));
        assert_eq!(a.embed(0.3).len(), 128);
        assert!(dist(&a.embed(0.2), &a.embed(0.8)) > 0.0);
    }

    #[test]
    fn injective_on_grid() {
        let e = TimestepEmbedding::new(16, 16.0, RngSeed::new(0)).unwrap();
        let grid: Vec<Vec<f64>> = (1..100).map(|i| e.embed(i as f64 / 100.0)).collect();
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                assert!(dist(&grid[i], &grid[j]) > 1e-6, "{i} {j}");
            }
        }
    }

    #[test]
    fn rejects_odd_dim() {
        assert!(TimestepEmbedding::new(7, 1.0, RngSeed::new(0)).is_err());
        assert!(TimestepEmbedding::new(8, 0.0, RngSeed::new(0)).is_err());
    }
}
