//! Sylvester-ordered Hadamard matrices and the fast Walsh–Hadamard transform.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A power-of-two Hadamard order `n = 2^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HadamardOrder(usize);

impl HadamardOrder {
    pub fn new(n: usize) -> Result<Self> {
        if n.is_power_of_two() {
            Ok(Self(n))
        } else {
            Err(Error::InvalidArgument(format!(
                "Hadamard order must be a power of two, got {n}"
            )))
        }
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn log2(self) -> u32 {
        self.0.trailing_zeros()
    }
}

/// Integer Sylvester Hadamard matrix, `H_{2n} = [[H, H], [H, −H]]`.
pub fn sylvester_i64(order: HadamardOrder) -> Vec<Vec<i64>> {
    let n = order.get();
    (0..n)
        .map(|r| {
            (0..n)
                .map(|c| if (r & c).count_ones() % 2 == 0 { 1 } else { -1 })
                .collect()
        })
        .collect()
}

pub fn sylvester(order: HadamardOrder) -> Matrix {
    let n = order.get();
    Matrix::from_fn(n, n, |r, c| if (r & c).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
}

/// In-place fast Walsh–Hadamard transform in Sylvester order. Returns the
/// number of scalar additions/subtractions performed (`n·log₂ n`).
pub fn fwht_in_place(v: &mut [f64], normalize: bool) -> Result<u64> {
    let n = v.len();
    if !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "fwht length must be a power of two, got {n}"
        )));
    }
    let mut adds = 0u64;
    let mut h = 1;
    while h < n {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (a, b) = (*x, *y);
                *x = a + b;
                *y = a - b;
            }
            adds += 2 * h as u64;
        }
        h *= 2;
    }
    if normalize && n > 1 {
        let s = 1.0 / (n as f64).sqrt();
        v.iter_mut().for_each(|x| *x *= s);
    }
    Ok(adds)
}

pub fn fwht(v: &[f64], normalize: bool) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    fwht_in_place(&mut out, normalize)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_orders() {
        assert_eq!(sylvester_i64(HadamardOrder::new(1).unwrap()), vec![vec![1]]);
        assert_eq!(
            sylvester_i64(HadamardOrder::new(2).unwrap()),
            vec![vec![1, 1], vec![1, -1]]
        );
        assert!(HadamardOrder::new(6).is_err());
        assert!(fwht(&[1.0, 2.0, 3.0], false).is_err());
    }

    #[test]
    fn order_eight_is_orthogonal_exactly() {
        let h = sylvester_i64(HadamardOrder::new(8).unwrap());
        for i in 0..8 {
            for j in 0..8 {
                let s: i64 = (0..8).map(|k| h[i][k] * h[j][k]).sum();
                assert_eq!(s, if i == j { 8 } else { 0 });
            }
        }
    }

    #[test]
    fn unit_vector_transform() {
        assert_eq!(fwht(&[1.0, 0.0, 0.0, 0.0], false).unwrap(), vec![1.0; 4]);
        assert_eq!(fwht(&[3.5], true).unwrap(), vec![3.5]);
    }

    #[test]
    fn normalized_transform_is_an_involution() {
        let v: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = fwht(&fwht(&v, true).unwrap(), true).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn add_count_is_n_log_n() {
        for m in 0..9 {
            let n = 1usize << m;
            let mut v = vec![1.0; n];
            assert_eq!(fwht_in_place(&mut v, false).unwrap(), (n * m) as u64);
        }
    }
}
