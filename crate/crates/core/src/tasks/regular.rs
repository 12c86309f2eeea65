use crate::error::{Error, Result};

/// Operator alphabet of the modular-arithmetic task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModOps {
    /// `+`, `−`, `·`.
    AddSubMul,
    /// `+`, `·`.
    AddMul,
}

pub const MODULUS: usize = 5;
pub const OP_ADD: usize = 5;
pub const OP_SUB: usize = 6;
pub const OP_MUL: usize = 7;

/// Cycle navigation token ids: stay, forward, backward.
pub const STAY: usize = 0;
pub const FORWARD: usize = 1;
pub const BACKWARD: usize = 2;

/// Running position on a 5-cycle.
pub fn cycle_labels(tokens: &[usize]) -> Vec<usize> {
    let mut pos = 0;
    tokens
        .iter()
        .map(|&t| {
            pos = match t {
                FORWARD => (pos + 1) % 5,
                BACKWARD => (pos + 4) % 5,
                _ => pos,
            };
            pos
        })
        .collect()
}

/// 1 when the number of adjacent unequal pairs so far is even.
pub fn even_pairs_labels(tokens: &[usize]) -> Vec<usize> {
    let mut transitions = 0;
    tokens
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            if j > 0 && tokens[j - 1] != t {
                transitions += 1;
            }
            usize::from(transitions % 2 == 0)
        })
        .collect()
}

/// Running count of ones mod 2.
pub fn parity_labels(tokens: &[usize]) -> Vec<usize> {
    let mut p = 0;
    tokens
        .iter()
        .map(|&t| {
            p ^= t & 1;
            p
        })
        .collect()
}

/// Value mod 5 of the longest complete prefix ending at each position, with
/// `·` binding tighter than `+` and `−`.
pub fn mod_arith_labels(tokens: &[usize]) -> Result<Vec<usize>> {
    // value = sum + sign · term, where term is the running product
    let mut sum = 0;
    let mut term = 0;
    let mut sign_neg = false;
    let mut pending: Option<usize> = None;
    let mut last = 0;
    let mut out = Vec::with_capacity(tokens.len());
    for (j, &t) in tokens.iter().enumerate() {
        let expect_operand = j % 2 == 0;
        if expect_operand != (t < MODULUS) {
            return Err(Error::InvalidArgument(format!(
                "malformed expression: token {t} at position {j}"
            )));
        }
        if expect_operand {
            match pending {
                None => term = t,
                Some(OP_MUL) => term = term * t % MODULUS,
                Some(op) => {
                    sum = if sign_neg { (sum + MODULUS - term) % MODULUS } else { (sum + term) % MODULUS };
                    sign_neg = op == OP_SUB;
                    term = t;
                }
            }
            last = if sign_neg { (sum + MODULUS - term) % MODULUS } else { (sum + term) % MODULUS };
        } else {
            if !matches!(t, OP_ADD | OP_SUB | OP_MUL) {
                return Err(Error::InvalidArgument(format!("unknown operator token {t}")));
            }
            pending = Some(t);
        }
        out.push(last);
    }
    Ok(out)
}
