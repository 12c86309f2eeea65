use crate::error::{check_dim, Error, Result};

/// Element of the truncated tensor algebra over `R^d`, stored level by level.
/// Level `m` holds `d^m` coefficients indexed by words in base `d` (first
/// letter most significant).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorPoly {
    d: usize,
    depth: usize,
    levels: Vec<Vec<f64>>,
}

impl TensorPoly {
    pub fn zero(d: usize, depth: usize) -> Self {
        let levels = (0..=depth).map(|m| vec![0.0; d.pow(m as u32)]).collect();
        Self { d, depth, levels }
    }

    pub fn unit(d: usize, depth: usize) -> Self {
        let mut t = Self::zero(d, depth);
        t.levels[0][0] = 1.0;
        t
    }

    pub fn alphabet(&self) -> usize {
        self.d
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn level(&self, m: usize) -> &[f64] {
        &self.levels[m]
    }

    pub fn level_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.levels[m]
    }

    /// Coefficient of a word (0-based letters).
    pub fn coeff(&self, word: &[usize]) -> f64 {
        self.levels[word.len()][word_index(word, self.d)]
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        check_dim("TensorPoly alphabet", self.d, other.d)?;
        check_dim("TensorPoly depth", self.depth, other.depth)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (a, b) in out.levels.iter_mut().zip(&other.levels) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.levels.iter_mut().flatten().for_each(|x| *x *= s);
        out
    }

    /// Truncated tensor product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = Self::zero(self.d, self.depth);
        for m in 0..=self.depth {
            let dst = &mut out.levels[m];
            for k in 0..=m {
                let a = &self.levels[k];
                let b = &other.levels[m - k];
                let width = b.len();
                for (i, &x) in a.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    let row = &mut dst[i * width..(i + 1) * width];
                    for (o, &y) in row.iter_mut().zip(b) {
                        *o += x * y;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `exp(x)` for `x` with zero scalar part.
    pub fn exp(&self) -> Result<Self> {
        if self.levels[0][0] != 0.0 {
            return Err(Error::InvalidArgument("tensor exp needs a zero scalar part".into()));
        }
        let mut out = Self::unit(self.d, self.depth);
        let mut term = Self::unit(self.d, self.depth);
        for k in 1..=self.depth {
            term = term.mul(self)?.scale(1.0 / k as f64);
            out = out.add(&term)?;
        }
        Ok(out)
    }

    /// `log(x) = Σ_{k≥1} (−1)^{k+1} (x − 1)^k / k` for `x` with unit scalar part.
    pub fn log(&self) -> Result<Self> {
        if (self.levels[0][0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("tensor log needs a unit scalar part".into()));
        }
        let mut y = self.clone();
        y.levels[0][0] = 0.0;
        let mut out = Self::zero(self.d, self.depth);
        let mut power = Self::unit(self.d, self.depth);
        for k in 1..=self.depth {
            power = power.mul(&y)?;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            out = out.add(&power.scale(sign / k as f64))?;
        }
        Ok(out)
    }
}

pub(crate) fn word_index(word: &[usize], d: usize) -> usize {
    word.iter().fold(0, |acc, &l| acc * d + l)
}

/// Chen product: the signature of a concatenated path.
pub fn chen_product(a: &TensorPoly, b: &TensorPoly) -> Result<TensorPoly> {
    a.mul(b)
}

/// Signature of one linear segment with increment `d_omega`: `exp(Σ_i Δω^i e_i)`.
pub fn segment_signature(d_omega: &[f64], depth: usize) -> TensorPoly {
    let d = d_omega.len();
    let mut t = TensorPoly::unit(d, depth);
    for m in 1..=depth {
        let (lo, hi) = t.levels.split_at_mut(m);
        let prev = &lo[m - 1];
        for (i, &x) in prev.iter().enumerate() {
            for (j, &y) in d_omega.iter().enumerate() {
                hi[0][i * d + j] = x * y / m as f64;
            }
        }
    }
    t
}

/// Signature of the piecewise-linear path with the given increments.
pub fn path_signature(increments: &[&[f64]], d: usize, depth: usize) -> Result<TensorPoly> {
    let mut sig = TensorPoly::unit(d, depth);
    for inc in increments {
        check_dim("path_signature increment", d, inc.len())?;
        sig = chen_product(&sig, &segment_signature(inc, depth))?;
    }
    Ok(sig)
}
