//! Gray-mapped constellation, prior-driven soft symbols and symbol variances.
//!
//! Bit conventions used across the detector, decoder and modem:
//! * bit `b` in {0, 1} has antipodal value `s = 2b - 1` in {-1, +1};
//! * an LLR is `ln P(b = 1) / P(b = 0)`, so `P(b) = 1 / (1 + exp(-(2b-1) L))`.
//!
//! The QPSK map is `[x00, x01, x10, x11] = sigma_x [-1+i, 1+i, -1-i, 1-i]`
//! scaled by `1/sqrt(2)` so that `E[|x|^2] = sigma_x^2`: the first bit selects
//! the sign of the imaginary part (0 -> +), the second bit the sign of the
//! real part (1 -> +). All constants derived from this map elsewhere in the
//! crate assume the same scaling.

use num_complex::Complex64;

use crate::error::Error;
use crate::linalg::C64;
use crate::Result;

/// Probability that a bit equals `b` given its LLR (`ln P(1)/P(0)`).
/// Handles infinite LLRs (degenerate priors).
pub fn bit_probability(b: u8, llr: f64) -> f64 {
    let s = 2.0 * b as f64 - 1.0;
    let z = s * llr;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A complex constellation with Gray-coded bit labels. Only QPSK is shipped;
/// the soft statistics below work for any point set with factorized priors.
#[derive(Debug, Clone)]
pub struct Constellation {
    points: Vec<C64>,
    bits_per_symbol: usize,
    sigma_x2: f64,
}

impl Constellation {
    /// QPSK with symbol energy `sigma_x2`.
    pub fn qpsk(sigma_x2: f64) -> Self {
        let a = (sigma_x2 / 2.0).sqrt();
        // Index is the label with the first bit as MSB.
        let points = vec![
            Complex64::new(-a, a),  // 00
            Complex64::new(a, a),   // 01
            Complex64::new(-a, -a), // 10
            Complex64::new(a, -a),  // 11
        ];
        Constellation {
            points,
            bits_per_symbol: 2,
            sigma_x2,
        }
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn sigma_x2(&self) -> f64 {
        self.sigma_x2
    }

    /// Bit `l` (0 = first) of the label `idx`.
    #[inline]
    pub fn label_bit(&self, idx: usize, l: usize) -> u8 {
        ((idx >> (self.bits_per_symbol - 1 - l)) & 1) as u8
    }

    /// Maps a bit stream (values 0/1) onto constellation points.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<C64>> {
        if bits.len() % self.bits_per_symbol != 0 {
            return Err(Error::dimension(format!(
                "bit count {} not divisible by {}",
                bits.len(),
                self.bits_per_symbol
            )));
        }
        Ok(bits
            .chunks(self.bits_per_symbol)
            .map(|chunk| {
                let mut idx = 0usize;
                for &b in chunk {
                    idx = (idx << 1) | (b as usize & 1);
                }
                self.points[idx]
            })
            .collect())
    }

    /// Per-point prior probabilities from independent per-bit LLRs.
    pub fn symbol_probs(&self, llrs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(llrs.len(), self.bits_per_symbol);
        (0..self.points.len())
            .map(|idx| {
                (0..self.bits_per_symbol)
                    .map(|l| bit_probability(self.label_bit(idx, l), llrs[l]))
                    .product()
            })
            .collect()
    }

    /// Soft symbol mean under the factorized bit prior.
    pub fn soft_symbol(&self, llrs: &[f64]) -> C64 {
        self.symbol_probs(llrs)
            .iter()
            .zip(&self.points)
            .map(|(&p, &x)| x * p)
            .sum()
    }

    /// Symbol variance `sum_x |x - mean|^2 P(x)` around a given mean.
    pub fn symbol_variance(&self, llrs: &[f64], mean: C64) -> f64 {
        self.symbol_probs(llrs)
            .iter()
            .zip(&self.points)
            .map(|(&p, &x)| (x - mean).norm_sqr() * p)
            .sum()
    }
}

/// Per-user soft means and variances at one symbol time.
#[derive(Debug, Clone)]
pub struct SoftSymbolStats {
    pub means: Vec<C64>,
    pub variances: Vec<f64>,
}

impl SoftSymbolStats {
    /// Uninformative priors: zero means, full variance.
    pub fn uniform(users: usize, sigma_x2: f64) -> Self {
        SoftSymbolStats {
            means: vec![C64::new(0.0, 0.0); users],
            variances: vec![sigma_x2; users],
        }
    }
}
