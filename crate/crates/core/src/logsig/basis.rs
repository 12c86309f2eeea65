use super::tensor::{word_index, TensorPoly};
use crate::error::{check_dim, Error, Result};

/// Largest supported truncation depth.
pub const MAX_DEPTH: usize = 3;

/// How a basis element is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HallTree {
    Letter(usize),
    /// Lie bracket of two earlier basis elements (by index).
    Bracket(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HallElement {
    /// Lyndon word, 0-based letters.
    pub word: Vec<usize>,
    pub tree: HallTree,
}

/// Lyndon basis of the free Lie algebra truncated at `depth`, with standard
/// bracketing. Elements are ordered by word length, then lexicographically, so
/// the first `d` elements are the letters.
#[derive(Debug, Clone)]
pub struct HallBasis {
    d: usize,
    depth: usize,
    elements: Vec<HallElement>,
    /// Tensor expansion of each element at level `|word|`.
    expansions: Vec<Vec<f64>>,
}

pub fn is_lyndon(word: &[usize]) -> bool {
    !word.is_empty() && (1..word.len()).all(|i| word < &word[i..])
}

/// All Lyndon words of length ≤ `n` over `d` letters, in lexicographic order
/// (Duval's algorithm).
pub fn lyndon_words(d: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if d == 0 || n == 0 {
        return out;
    }
    let mut w: Vec<usize> = vec![0];
    loop {
        out.push(w.clone());
        let m = w.len();
        while w.len() < n {
            let c = w[w.len() - m];
            w.push(c);
        }
        while let Some(&last) = w.last() {
            if last == d - 1 {
                w.pop();
            } else {
                break;
            }
        }
        match w.last_mut() {
            Some(last) => *last += 1,
            None => break,
        }
    }
    out
}

fn mobius(mut n: usize) -> i64 {
    let mut result = 1;
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            n /= p;
            if n.is_multiple_of(p) {
                return 0;
            }
            result = -result;
        }
        p += 1;
    }
    if n > 1 {
        result = -result;
    }
    result
}

/// Dimension of the free Lie algebra over `d` letters truncated at depth `n`
/// (Witt's formula, summed over levels).
pub fn witt_dimension(d: usize, n: usize) -> usize {
    (1..=n)
        .map(|m| {
            let s: i64 = (1..=m)
                .filter(|k| m % k == 0)
                .map(|k| mobius(k) * (d as i64).pow((m / k) as u32))
                .sum();
            (s / m as i64) as usize
        })
        .sum()
}

fn bracket_expansion(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() * b.len()];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i * b.len() + j] += x * y;
        }
    }
    for (j, &y) in b.iter().enumerate() {
        for (i, &x) in a.iter().enumerate() {
            out[j * a.len() + i] -= y * x;
        }
    }
    out
}

impl HallBasis {
    pub fn new(d: usize, depth: usize) -> Result<Self> {
        if d == 0 || depth == 0 || depth > MAX_DEPTH {
            return Err(Error::InvalidArgument(format!(
                "log-signature depth must be in 1..={MAX_DEPTH} with a nonempty alphabet, got d = {d}, depth = {depth}"
            )));
        }
        let mut words = lyndon_words(d, depth);
        words.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        let position = |w: &[usize], words: &[Vec<usize>]| {
            words.iter().position(|x| x == w).expect("factor is a shorter Lyndon word")
        };
        let mut elements = Vec::with_capacity(words.len());
        let mut expansions: Vec<Vec<f64>> = Vec::with_capacity(words.len());
        for w in &words {
            if w.len() == 1 {
                let mut e = vec![0.0; d];
                e[w[0]] = 1.0;
                elements.push(HallElement {
                    word: w.clone(),
                    tree: HallTree::Letter(w[0]),
                });
                expansions.push(e);
                continue;
            }
            // standard factorization: v is the longest proper Lyndon suffix
            let split = (1..w.len()).find(|&i| is_lyndon(&w[i..])).expect("letters are Lyndon");
            let (i, j) = (position(&w[..split], &words), position(&w[split..], &words));
            let e = bracket_expansion(&expansions[i], &expansions[j]);
            elements.push(HallElement {
                word: w.clone(),
                tree: HallTree::Bracket(i, j),
            });
            expansions.push(e);
        }
        Ok(Self {
            d,
            depth,
            elements,
            expansions,
        })
    }

    pub fn alphabet(&self) -> usize {
        self.d
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[HallElement] {
        &self.elements
    }

    /// Tensor expansion of element `k` at level `|word_k|`.
    pub fn expansion(&self, k: usize) -> &[f64] {
        &self.expansions[k]
    }

    /// Coordinates of a Lie element given in tensor form. Uses the
    /// unitriangular structure of Lyndon expansions: the expansion of `w`
    /// contains `w` with coefficient one and otherwise only larger words.
    pub fn project(&self, lie: &TensorPoly) -> Result<Vec<f64>> {
        check_dim("HallBasis::project alphabet", self.d, lie.alphabet())?;
        if lie.depth() < self.depth {
            return Err(Error::Dimension {
                op: "HallBasis::project depth",
                expected: self.depth,
                got: lie.depth(),
            });
        }
        let mut residual: Vec<Vec<f64>> = (0..=self.depth).map(|m| lie.level(m).to_vec()).collect();
        let mut coeffs = vec![0.0; self.len()];
        for (k, el) in self.elements.iter().enumerate() {
            let m = el.word.len();
            let lam = residual[m][word_index(&el.word, self.d)];
            coeffs[k] = lam;
            if lam != 0.0 {
                for (r, e) in residual[m].iter_mut().zip(&self.expansions[k]) {
                    *r -= lam * e;
                }
            }
        }
        Ok(coeffs)
    }

    /// Tensor form of `Σ_k c_k P(w_k)`.
    pub fn to_tensor(&self, coeffs: &[f64]) -> Result<TensorPoly> {
        check_dim("HallBasis::to_tensor", self.len(), coeffs.len())?;
        let mut t = TensorPoly::zero(self.d, self.depth);
        for (k, el) in self.elements.iter().enumerate() {
            let lvl = t.level_mut(el.word.len());
            for (x, e) in lvl.iter_mut().zip(&self.expansions[k]) {
                *x += coeffs[k] * e;
            }
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duval_enumeration_small() {
        let words = lyndon_words(2, 3);
        assert_eq!(
            words,
            vec![vec![0], vec![0, 0, 1], vec![0, 1], vec![0, 1, 1], vec![1]]
        );
        assert!(words.iter().all(|w| is_lyndon(w)));
    }

    #[test]
    fn witt_counts() {
        assert_eq!(witt_dimension(2, 2), 3);
        assert_eq!(witt_dimension(2, 3), 5);
        assert_eq!(witt_dimension(3, 2), 6);
        for d in 1..=4 {
            for n in 1..=4 {
                assert_eq!(lyndon_words(d, n).len(), witt_dimension(d, n), "d={d} n={n}");
            }
        }
    }

    #[test]
    fn letters_come_first_and_brackets_reference_earlier_elements() {
        let b = HallBasis::new(3, 3).unwrap();
        for (k, el) in b.elements().iter().enumerate() {
            match el.tree {
                HallTree::Letter(l) => assert!(k < 3 && l == k),
                HallTree::Bracket(i, j) => assert!(i < k && j < k && k >= 3),
            }
        }
        assert!(HallBasis::new(2, 4).is_err());
    }
}
