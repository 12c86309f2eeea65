//! Matrix exponential by scaling and squaring with a [13/13] Padé approximant.

use super::matrix::{matmul, Matrix};
use crate::error::{Error, Result};

/// Scaling threshold on the 1-norm for the degree-13 approximant.
pub const PADE13_THETA: f64 = 5.4;

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// `exp(a)` for a square matrix.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Dimension {
            op: "expm",
            expected: a.rows(),
            got: a.cols(),
        });
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    if n == 1 {
        return Matrix::new(1, 1, vec![a.get(0, 0).exp()]);
    }
    let norm = a.norm_1();
    let squarings = if norm > PADE13_THETA {
        (norm / PADE13_THETA).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let scaled = a.scale(0.5f64.powi(squarings as i32));
    let mut e = pade13(&scaled)?;
    for _ in 0..squarings {
        e = matmul(&e, &e)?;
    }
    Ok(e)
}

fn pade13(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let b = &PADE13;
    let ident: Matrix = Matrix::identity(n);
    let a2 = matmul(a, a)?;
    let a4 = matmul(&a2, &a2)?;
    let a6 = matmul(&a2, &a4)?;

    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| -> Matrix {
        Matrix::from_fn(n, n, |r, c| {
            c6 * a6.get(r, c) + c4 * a4.get(r, c) + c2 * a2.get(r, c) + c0 * ident.get(r, c)
        })
    };

    let u_inner = matmul(&a6, &lin(b[13], b[11], b[9], 0.0))?.add(&lin(b[7], b[5], b[3], b[1]))?;
    let u = matmul(a, &u_inner)?;
    let v = matmul(&a6, &lin(b[12], b[10], b[8], 0.0))?.add(&lin(b[6], b[4], b[2], b[0]))?;

    let p = v.add(&u)?;
    let q = v.sub(&u)?;
    solve(&q, &p)
}

/// Solves `a · x = b` by LU with partial pivoting.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n {
        return Err(Error::Dimension {
            op: "solve",
            expected: n,
            got: b.rows(),
        });
    }
    let m = b.cols();
    let mut lu = a.clone();
    let mut x = b.clone();
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|r| (r, lu.get(r, k).abs()))
            .fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if pmax == 0.0 {
            return Err(Error::InvalidArgument("solve: singular matrix".into()));
        }
        if piv != k {
            for c in 0..n {
                let t = lu.get(k, c);
                lu.set(k, c, lu.get(piv, c));
                lu.set(piv, c, t);
            }
            for c in 0..m {
                let t = x.get(k, c);
                x.set(k, c, x.get(piv, c));
                x.set(piv, c, t);
            }
        }
        let d = lu.get(k, k);
        for r in k + 1..n {
            let f = lu.get(r, k) / d;
            if f == 0.0 {
                continue;
            }
            lu.set(r, k, f);
            for c in k + 1..n {
                lu.set(r, c, lu.get(r, c) - f * lu.get(k, c));
            }
            for c in 0..m {
                x.set(r, c, x.get(r, c) - f * x.get(k, c));
            }
        }
    }
    for k in (0..n).rev() {
        let d = lu.get(k, k);
        for c in 0..m {
            let mut s = x.get(k, c);
            for j in k + 1..n {
                s -= lu.get(k, j) * x.get(j, c);
            }
            x.set(k, c, s / d);
        }
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("solve"));
    }
    Ok(x)
}
