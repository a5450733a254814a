//! Signed permutations: the hyperoctahedral group used as the output-coding codebook.
//!
//! An element is stored in compact one-line form. Applying `sp` to a vector `v`
//! produces `out[i] = signs[i] * v[perm[i]]`, which is the product of `v` with the
//! matrix having `signs[i]` at row `i`, column `perm[i]` and zeros elsewhere.
//!
//! The codebook ordering is fixed: the index of an element is
//! `lexrank(perm) * 2^n + sign_mask`, where the sign mask is read most-significant
//! bit first (bit for `signs[0]` is the highest) and a set bit means `-1`.

use std::fmt;

use crate::error::{Error, Result};

/// Largest dimension whose codebook size `2^n * n!` fits in a `u64`.
pub const MAX_DIMENSION: usize = 16;

/// Sign of a single entry of a signed permutation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn from_i8(s: i8) -> Option<Sign> {
        match s {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Sign::Plus => x,
            // Negation only flips the sign bit, so it is exact for every f64.
            Sign::Minus => -x,
        }
    }

    fn mul(self, other: Sign) -> Sign {
        if self == other {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// Position of an element in the sorted codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodebookIndex(pub u64);

impl fmt::Display for CodebookIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A signed permutation of `n` elements.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignedPermutation {
    perm: Vec<usize>,
    signs: Vec<Sign>,
}

fn check_dimension(n: usize) -> Result<()> {
    if n == 0 || n > MAX_DIMENSION {
        return Err(Error::InvalidDimension(n));
    }
    Ok(())
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// Number of signed permutations of size `n`, i.e. `2^n * n!`.
pub fn codebook_size(n: usize) -> Result<u64> {
    check_dimension(n)?;
    factorial(n)
        .checked_mul(1u64 << n)
        .ok_or(Error::InvalidDimension(n))
}

impl SignedPermutation {
    pub fn new(perm: Vec<usize>, signs: Vec<Sign>) -> Result<Self> {
        let n = perm.len();
        check_dimension(n)?;
        if signs.len() != n {
            return Err(Error::InvalidElement(format!(
                "{} signs for {} indices",
                signs.len(),
                n
            )));
        }
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || seen[p] {
                return Err(Error::InvalidElement(format!(
                    "perm {perm:?} is not a bijection on 0..{n}"
                )));
            }
            seen[p] = true;
        }
        Ok(SignedPermutation { perm, signs })
    }

    /// Builds an element from `±1` sign values.
    pub fn from_parts(perm: Vec<usize>, signs: &[i8]) -> Result<Self> {
        let signs = signs
            .iter()
            .map(|&s| {
                Sign::from_i8(s).ok_or_else(|| Error::InvalidElement(format!("sign {s} is not ±1")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(perm, signs)
    }

    pub fn identity(n: usize) -> Result<Self> {
        check_dimension(n)?;
        Ok(SignedPermutation {
            perm: (0..n).collect(),
            signs: vec![Sign::Plus; n],
        })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn signs(&self) -> &[Sign] {
        &self.signs
    }

    pub fn signs_i8(&self) -> Vec<i8> {
        self.signs.iter().map(|s| s.as_i8()).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| i == p)
            && self.signs.iter().all(|&s| s == Sign::Plus)
    }

    /// Returns the `index`-th element of the canonical ordering.
    pub fn unrank(index: CodebookIndex, n: usize) -> Result<Self> {
        let size = codebook_size(n)?;
        if index.0 >= size {
            return Err(Error::IndexOutOfRange {
                index: index.0,
                size,
            });
        }
        let sign_mask = index.0 & ((1u64 << n) - 1);
        let mut lex = index.0 >> n;

        let mut available: Vec<usize> = (0..n).collect();
        let mut perm = Vec::with_capacity(n);
        for i in 0..n {
            let radix = factorial(n - 1 - i);
            let digit = (lex / radix) as usize;
            lex %= radix;
            perm.push(available.remove(digit));
        }
        let signs = (0..n)
            .map(|i| {
                if (sign_mask >> (n - 1 - i)) & 1 == 1 {
                    Sign::Minus
                } else {
                    Sign::Plus
                }
            })
            .collect();
        Ok(SignedPermutation { perm, signs })
    }

    /// Position of this element in the canonical ordering.
    pub fn rank(&self) -> CodebookIndex {
        let n = self.len();
        let mut lex = 0u64;
        for i in 0..n {
            // Lehmer digit: how many later entries are smaller.
            let smaller = self.perm[i + 1..]
                .iter()
                .filter(|&&p| p < self.perm[i])
                .count() as u64;
            lex += smaller * factorial(n - 1 - i);
        }
        let mask = self
            .signs
            .iter()
            .fold(0u64, |acc, &s| (acc << 1) | u64::from(s == Sign::Minus));
        CodebookIndex((lex << n) | mask)
    }

    /// Signed reorder of `v`. Exact: no arithmetic beyond sign-bit flips.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: v.len(),
            });
        }
        Ok(self
            .perm
            .iter()
            .zip(&self.signs)
            .map(|(&p, &s)| s.apply(v[p]))
            .collect())
    }

    /// The group inverse; its matrix is the transpose of `self`'s.
    pub fn inverse(&self) -> Self {
        let n = self.len();
        let mut perm = vec![0; n];
        let mut signs = vec![Sign::Plus; n];
        for (i, (&p, &s)) in self.perm.iter().zip(&self.signs).enumerate() {
            perm[p] = i;
            signs[p] = s;
        }
        SignedPermutation { perm, signs }
    }

    /// Product `self * other`: applying the result equals applying `other` then `self`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        let (perm, signs) = self
            .perm
            .iter()
            .zip(&self.signs)
            .map(|(&p, &s)| (other.perm[p], s.mul(other.signs[p])))
            .unzip();
        Ok(SignedPermutation { perm, signs })
    }

    /// Dense matrix form, row-major. For inspection and display.
    pub fn to_matrix(&self) -> Vec<Vec<i8>> {
        let n = self.len();
        self.perm
            .iter()
            .zip(&self.signs)
            .map(|(&p, &s)| {
                let mut row = vec![0i8; n];
                row[p] = s.as_i8();
                row
            })
            .collect()
    }
}

impl fmt::Display for SignedPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, (&p, &s)) in self.perm.iter().zip(&self.signs).enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            let sign = if s == Sign::Plus { '+' } else { '-' };
            write!(f, "{sign}{p}")?;
        }
        write!(f, "]")
    }
}

/// Iterates the whole codebook of dimension `n` in canonical order.
pub fn codebook(n: usize) -> Result<impl Iterator<Item = SignedPermutation>> {
    let size = codebook_size(n)?;
    Ok((0..size).map(move |i| {
        SignedPermutation::unrank(CodebookIndex(i), n).expect("index below codebook size")
    }))
}
