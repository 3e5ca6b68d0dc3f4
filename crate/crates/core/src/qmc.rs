//! Owen-scrambled Sobol points in `[0, 1)^d` and standard-normal base samples.

use nalgebra::DMatrix;
use sobol_burley::parts::{hash, owen_scramble_rev, sobol_rev};
use statrs::distribution::{ContinuousCDF, Normal};

/// Dimensions available per seed in the underlying direction-number table.
const DIMS_PER_SEED: u32 = sobol_burley::NUM_DIMENSIONS;
/// Maximum number of points in one sequence.
pub const MAX_POINTS: usize = 1 << 16;

/// A seeded, Owen-scrambled Sobol sequence.
#[derive(Debug, Clone, Copy)]
pub struct ScrambledSobol {
    dim: usize,
    seed: u64,
}

impl ScrambledSobol {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coordinate `d` of point `index`, in the open interval (0, 1).
    pub fn coordinate(&self, index: usize, d: usize) -> f64 {
        assert!(index < MAX_POINTS, "Sobol index {index} exceeds 2^16");
        let d = d as u32;
        // Independent sequences beyond the table width, per the seeding scheme
        // of the underlying generator.
        let block = d / DIMS_PER_SEED;
        let dim = d % DIMS_PER_SEED;
        let seed = fold_seed(self.seed).wrapping_add(block.wrapping_mul(0x9e37_79b9));
        let shuffled = owen_scramble_rev((index as u32).reverse_bits(), hash(seed ^ 0x79c6_8e4a));
        let raw = sobol_rev(shuffled, dim);
        let scramble = {
            let s = seed.wrapping_mul(0x9c8f_2d3b);
            hash((dim >> 2) ^ s ^ [0x912f_69ba, 0x174f_18ab, 0x691e_72ca, 0xb40c_c1b8][dim as usize & 3])
        };
        let bits = owen_scramble_rev(raw, scramble).reverse_bits();
        // midpoint of the 2^-32 cell keeps the value off 0 and 1
        (bits as f64 + 0.5) / 4_294_967_296.0
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        (0..self.dim).map(|d| self.coordinate(index, d)).collect()
    }

    /// First `n` points as rows.
    pub fn points(&self, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| self.point(i)).collect()
    }

    /// First `n` points mapped affinely onto the box `[lower, upper]`.
    pub fn points_in_box(&self, n: usize, lower: &[f64], upper: &[f64]) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                (0..self.dim)
                    .map(|d| lower[d] + (upper[d] - lower[d]) * self.coordinate(i, d))
                    .collect()
            })
            .collect()
    }
}

fn fold_seed(seed: u64) -> u32 {
    let z = splitmix64(seed);
    (z ^ (z >> 32)) as u32
}

/// SplitMix64 finalizer; used to derive independent sub-seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic child seed for a labelled purpose.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0x6a09_e667_f3bc_c909)))
}

pub fn standard_normal() -> Normal {
    Normal::standard()
}

/// Standard normal quantile.
pub fn norm_ppf(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `samples × dim` matrix of quasi-random standard normals.
pub fn normal_base_samples(samples: usize, dim: usize, seed: u64) -> DMatrix<f64> {
    let seq = ScrambledSobol::new(dim, seed);
    DMatrix::from_fn(samples, dim, |i, d| norm_ppf(seq.coordinate(i, d)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = ScrambledSobol::new(5, 11).points(32);
        let b = ScrambledSobol::new(5, 11).points(32);
        let c = ScrambledSobol::new(5, 12).points(32);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().flatten().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn stratified_in_each_dimension() {
        // each coordinate of a 2^k-point Owen-scrambled Sobol set hits every
        // interval [j/2^k, (j+1)/2^k) exactly once
        let seq = ScrambledSobol::new(300, 3);
        for d in [0, 7, 255, 256, 299] {
            let mut hit = [false; 64];
            for i in 0..64 {
                let cell = (seq.coordinate(i, d) * 64.0) as usize;
                assert!(!hit[cell]);
                hit[cell] = true;
            }
        }
    }

    #[test]
    fn normal_samples_have_unit_moments() {
        let z = normal_base_samples(1024, 4, 5);
        for d in 0..4 {
            let col = z.column(d);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 1023.0;
            assert!(mean.abs() < 0.01, "mean {mean}");
            assert!((var - 1.0).abs() < 0.02, "var {var}");
        }
    }

    #[test]
    fn normal_helpers() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        let p = norm_cdf(1.959963984540054);
        assert!((p - 0.975).abs() < 1e-12, "{p}");
        assert!((norm_ppf(0.975) - 1.959963984540054).abs() < 1e-9);
        assert!((norm_pdf(0.0) - 0.3989422804014327).abs() < 1e-15);
    }
}
