//! Fibonacci p-sequences reduced modulo `m`, and per-packet codebook selection.
//!
//! `F_p(n) = 0` for `n < 0`, `F_p(0) = 1`, otherwise `F_p(n) = F_p(n-1) + F_p(n-p-1)`.
//! The selected codebook index for packet `seq` is `F_p(seed + seq) mod size`; it
//! depends on nothing but the key and the sequence number, so a receiver that
//! misses packets stays in step with the sender.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signed_permutation::CodebookIndex;

/// Shared secret selecting the coding matrix of each packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PSequenceKey {
    pub p: usize,
    pub seed: u64,
}

impl Default for PSequenceKey {
    fn default() -> Self {
        PSequenceKey { p: 1, seed: 0 }
    }
}

fn check_modulus(m: u64) -> Result<()> {
    if m < 2 {
        Err(Error::InvalidModulus(m))
    } else {
        Ok(())
    }
}

#[inline]
fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 + b as u128) % m as u128) as u64
}

#[inline]
fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

type Mat = Vec<Vec<u64>>;

fn mat_mul(x: &Mat, y: &Mat, m: u64) -> Mat {
    let d = x.len();
    let mut out = vec![vec![0u64; d]; d];
    for i in 0..d {
        for k in 0..d {
            if x[i][k] == 0 {
                continue;
            }
            for j in 0..d {
                out[i][j] = add_mod(out[i][j], mul_mod(x[i][k], y[k][j], m), m);
            }
        }
    }
    out
}

/// `F_p(n) mod m` for a non-negative index, by exponentiating the companion
/// matrix of the recursion. State is `(F(n), F(n-1), ..., F(n-p))`.
fn eval_nonneg(p: usize, n: u128, m: u64) -> u64 {
    let d = p + 1;
    let mut step = vec![vec![0u64; d]; d];
    step[0][0] = 1 % m;
    step[0][p] = add_mod(step[0][p], 1, m);
    for i in 1..d {
        step[i][i - 1] = 1;
    }
    let mut acc: Mat = (0..d)
        .map(|i| (0..d).map(|j| u64::from(i == j)).collect())
        .collect();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            acc = mat_mul(&acc, &step, m);
        }
        step = mat_mul(&step, &step, m);
        e >>= 1;
    }
    // Initial state is (F(0), F(-1), ..., F(-p)) = (1, 0, ..., 0).
    acc[0][0] % m
}

/// `F_p(n) mod m`.
pub fn fib_p_mod(p: usize, n: i64, m: u64) -> Result<u64> {
    check_modulus(m)?;
    if n < 0 {
        return Ok(0);
    }
    Ok(eval_nonneg(p, n as u128, m))
}

/// Streams `F_p(0), F_p(1), ...` reduced mod `m`, keeping only the last `p + 1` residues.
#[derive(Debug, Clone)]
pub struct PSequence {
    p: usize,
    m: u64,
    // window[(head + i) % (p + 1)] holds F(n - 1 - i) for the next n to emit.
    window: Vec<u64>,
    head: usize,
    n: u64,
}

impl PSequence {
    pub fn new(p: usize, m: u64) -> Result<Self> {
        check_modulus(m)?;
        Ok(PSequence {
            p,
            m,
            window: vec![0; p + 1],
            head: 0,
            n: 0,
        })
    }
}

impl Iterator for PSequence {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let d = self.p + 1;
        let value = if self.n == 0 {
            1 % self.m
        } else {
            let prev = self.window[self.head];
            let far = self.window[(self.head + self.p) % d];
            add_mod(prev, far, self.m)
        };
        // The oldest slot F(n-p-1) is no longer needed; it becomes F(n).
        self.head = (self.head + d - 1) % d;
        self.window[self.head] = value;
        self.n += 1;
        Some(value)
    }
}

/// Smallest `L > 0` with `F_p(n + L) ≡ F_p(n) (mod m)` for all `n ≥ 0`.
pub fn period(p: usize, m: u64) -> Result<u64> {
    check_modulus(m)?;
    let d = p + 1;
    let initial: Vec<u64> = PSequence::new(p, m)?.take(d).collect();
    let bound = (m as u128)
        .checked_pow(d as u32)
        .map(|b| b.saturating_add(1))
        .unwrap_or(u128::MAX);

    let mut seq = PSequence::new(p, m)?;
    let mut state: std::collections::VecDeque<u64> = (&mut seq).take(d).collect();
    let mut shift: u128 = 0;
    while shift < bound {
        let next = seq.next().expect("infinite sequence");
        state.pop_front();
        state.push_back(next);
        shift += 1;
        if state.iter().eq(initial.iter()) {
            return Ok(shift as u64);
        }
    }
    Err(Error::NotPurelyPeriodic { p, modulus: m })
}

/// Codebook index for packet `seq`: `F_p(seed + seq) mod codebook_size`.
pub fn select_index(key: &PSequenceKey, seq: u64, codebook_size: u64) -> Result<CodebookIndex> {
    if codebook_size == 0 {
        return Err(Error::InvalidModulus(0));
    }
    if codebook_size == 1 {
        return Ok(CodebookIndex(0));
    }
    let n = key.seed as u128 + seq as u128;
    Ok(CodebookIndex(eval_nonneg(key.p, n, codebook_size)))
}
