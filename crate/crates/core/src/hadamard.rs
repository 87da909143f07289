//! Orthonormal Walsh-Hadamard transform in Sylvester (natural) order.
//!
//! `H[i][j] = (-1)^popcount(i & j) / sqrt(N)`, so `H = H^T = H^-1`.

use crate::error::{Error, Result};

/// Size of a Hadamard system, `N = 2^log2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HadamardOrder {
    log2: u32,
}

impl HadamardOrder {
    pub fn new(log2: u32) -> Result<Self> {
        if log2 >= usize::BITS - 1 {
            return Err(Error::invalid(format!("Hadamard order 2^{log2} is too large")));
        }
        Ok(HadamardOrder { log2 })
    }

    pub fn from_len(n: usize) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        Ok(HadamardOrder {
            log2: n.trailing_zeros(),
        })
    }

    pub fn log2(self) -> u32 {
        self.log2
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        1usize << self.log2
    }

    /// `1/sqrt(N)`, the factor between optical (+-1) rows and orthonormal rows.
    pub fn scale(self) -> f64 {
        (self.len() as f64).sqrt().recip()
    }
}

/// In-place orthonormal transform. Applying it twice restores the input.
pub fn fwht_in_place(x: &mut [f64]) -> Result<()> {
    let order = HadamardOrder::from_len(x.len())?;
    butterflies(x);
    let scale = order.scale();
    x.iter_mut().for_each(|v| *v *= scale);
    Ok(())
}

pub fn fwht(x: &[f64]) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    fwht_in_place(&mut out)?;
    Ok(out)
}

/// Unnormalized radix-2 butterflies; caller guarantees a power-of-two length.
pub(crate) fn butterflies(x: &mut [f64]) {
    let n = x.len();
    let mut half = 1;
    while half < n {
        for block in x.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (s, d) = (*a + *b, *a - *b);
                *a = s;
                *b = d;
            }
        }
        half *= 2;
    }
}

/// Sign of entry `(i, j)` of `sqrt(N) * H`.
#[inline]
pub fn hadamard_sign(i: usize, j: usize) -> i8 {
    if (i & j).count_ones().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Row `i` of `sqrt(N) * H` as +-1 entries.
pub fn hadamard_row(i: usize, order: HadamardOrder) -> Result<Vec<i8>> {
    let n = order.len();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    Ok((0..n).map(|j| hadamard_sign(i, j)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Sylvester construction by explicit Kronecker doubling, independent of the
    /// popcount formula.
    fn dense_sylvester(n: usize) -> Vec<Vec<f64>> {
        let mut h = vec![vec![1.0]];
        while h.len() < n {
            let m = h.len();
            let mut next = vec![vec![0.0; 2 * m]; 2 * m];
            for i in 0..m {
                for j in 0..m {
                    next[i][j] = h[i][j];
                    next[i][j + m] = h[i][j];
                    next[i + m][j] = h[i][j];
                    next[i + m][j + m] = -h[i][j];
                }
            }
            h = next;
        }
        h
    }

    fn dense_apply(x: &[f64]) -> Vec<f64> {
        let h = dense_sylvester(x.len());
        let s = (x.len() as f64).sqrt().recip();
        h.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() * s)
            .collect()
    }

    #[test]
    fn trivial_sizes() {
        assert_eq!(fwht(&[5.0]).unwrap(), vec![5.0]);
        let y = fwht(&[1.0, 1.0]).unwrap();
        assert!((y[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(y[1].abs() < 1e-15);
    }

    #[test]
    fn matches_dense_sylvester() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for log2 in 1..=8 {
            let n = 1 << log2;
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = fwht(&x).unwrap();
            let dense = dense_apply(&x);
            let err = fast
                .iter()
                .zip(&dense)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-12, "N={n}: {err}");
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(fwht(&[1.0; 6]), Err(Error::NotPowerOfTwo(6))));
        assert!(matches!(fwht(&[]), Err(Error::NotPowerOfTwo(0))));
    }

    #[test]
    fn rows() {
        let o4 = HadamardOrder::from_len(4).unwrap();
        assert_eq!(hadamard_row(0, o4).unwrap(), vec![1, 1, 1, 1]);
        let o2 = HadamardOrder::from_len(2).unwrap();
        assert_eq!(hadamard_row(1, o2).unwrap(), vec![1, -1]);
        let o8 = HadamardOrder::from_len(8).unwrap();
        let dense = dense_sylvester(8);
        let row5: Vec<f64> = hadamard_row(5, o8).unwrap().iter().map(|&v| v as f64).collect();
        assert_eq!(row5, dense[5]);
        assert!(matches!(
            hadamard_row(8, o8),
            Err(Error::IndexOutOfRange { index: 8, len: 8 })
        ));
    }

    #[test]
    fn rows_are_orthogonal() {
        let o = HadamardOrder::from_len(64).unwrap();
        let rows: Vec<_> = (0..64).map(|i| hadamard_row(i, o).unwrap()).collect();
        for i in 0..64 {
            for j in 0..64 {
                let dot: i64 = rows[i].iter().zip(&rows[j]).map(|(&a, &b)| (a * b) as i64).sum();
                assert_eq!(dot, if i == j { 64 } else { 0 });
            }
        }
    }

    #[test]
    fn faster_than_dense_at_4096() {
        let n = 4096;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let signs: Vec<Vec<i8>> = (0..n)
            .map(|i| (0..n).map(|j| hadamard_sign(i, j)).collect())
            .collect();

        let t = std::time::Instant::now();
        let fast = fwht(&x).unwrap();
        let fast_time = t.elapsed();

        let t = std::time::Instant::now();
        let scale = (n as f64).sqrt().recip();
        let dense: Vec<f64> = signs
            .iter()
            .map(|row| row.iter().zip(&x).map(|(&s, v)| s as f64 * v).sum::<f64>() * scale)
            .collect();
        let dense_time = t.elapsed();

        assert!(fast_time < dense_time, "{fast_time:?} vs {dense_time:?}");
        for (a, b) in fast.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn vec_pow2() -> impl Strategy<Value = Vec<f64>> {
            (0u32..=12).prop_flat_map(|k| prop::collection::vec(-1e3f64..1e3, 1usize << k))
        }

        proptest! {
            #[test]
            fn involution_and_energy(x in vec_pow2()) {
                let y = fwht(&x).unwrap();
                let z = fwht(&y).unwrap();
                let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                let diff = x.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                prop_assert!(diff <= 1e-12 * nx.max(1e-300) + 1e-300);
                prop_assert!((nx - ny).abs() <= 1e-12 * nx.max(1e-300) + 1e-300);
            }
        }
    }
}
