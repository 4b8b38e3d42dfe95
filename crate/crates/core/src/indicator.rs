//! Variable-inclusion indicators over the columns of a design matrix.

use std::cmp::Ordering;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

/// Hard cap on the number of predictors a bitset may cover.
pub const MAX_PREDICTORS: usize = 4096;

/// A model: a bit per design column, plus a mask of columns that are always
/// included (by default the intercept). Equality, hashing, and ordering are
/// defined on the bits alone so indicators can key a model cache.
#[derive(Clone, Debug)]
pub struct ModelIndicator {
    p: usize,
    bits: Vec<u64>,
    forced: Vec<u64>,
}

fn limbs(p: usize) -> usize {
    p.div_ceil(64)
}

impl ModelIndicator {
    /// Model containing exactly the forced-in columns.
    pub fn new(p: usize, forced: &[usize]) -> Result<Self> {
        if p == 0 || p > MAX_PREDICTORS {
            return Err(Error::TooManyColumns {
                p,
                max: MAX_PREDICTORS,
            });
        }
        let mut forced_bits = vec![0u64; limbs(p)];
        for &j in forced {
            if j >= p {
                return Err(Error::DimensionMismatch {
                    context: format!("forced-in column {j} out of range for p = {p}"),
                });
            }
            forced_bits[j / 64] |= 1 << (j % 64);
        }
        Ok(Self {
            p,
            bits: forced_bits.clone(),
            forced: forced_bits,
        })
    }

    /// Model with the given active columns; forced-in columns are added to the
    /// active set so the containment invariant holds by construction.
    pub fn with_active(p: usize, active: &[usize], forced: &[usize]) -> Result<Self> {
        let mut ind = Self::new(p, forced)?;
        for &j in active {
            if j >= p {
                return Err(Error::DimensionMismatch {
                    context: format!("active column {j} out of range for p = {p}"),
                });
            }
            ind.bits[j / 64] |= 1 << (j % 64);
        }
        Ok(ind)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, j: usize) -> bool {
        debug_assert!(j < self.p);
        self.bits[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn is_forced(&self, j: usize) -> bool {
        debug_assert!(j < self.p);
        self.forced[j / 64] >> (j % 64) & 1 == 1
    }

    /// Number of active columns, |γ|₀.
    pub fn size(&self) -> usize {
        self.bits.iter().map(|l| l.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&l| l == 0)
    }

    /// Copy with bit `j` set.
    pub fn including(&self, j: usize) -> Self {
        debug_assert!(j < self.p);
        let mut out = self.clone();
        out.bits[j / 64] |= 1 << (j % 64);
        out
    }

    /// Copy with bit `j` cleared. Clearing a forced-in bit produces an
    /// indicator that will be rejected at evaluation time.
    pub fn excluding(&self, j: usize) -> Self {
        debug_assert!(j < self.p);
        let mut out = self.clone();
        out.bits[j / 64] &= !(1 << (j % 64));
        out
    }

    /// Indices of active columns in increasing order.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| self.get(j)).collect()
    }

    pub fn forced_indices(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| self.is_forced(j)).collect()
    }

    /// Columns the sampler is allowed to toggle.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.p).filter(|&j| !self.is_forced(j)).collect()
    }

    /// Position of active column `j` within `active_indices()`.
    pub fn rank_of(&self, j: usize) -> Option<usize> {
        if !self.get(j) {
            return None;
        }
        let mut rank = 0;
        for k in 0..j {
            if self.get(k) {
                rank += 1;
            }
        }
        Some(rank)
    }

    /// Nesting: does `self` contain every active column of `other`?
    pub fn contains(&self, other: &Self) -> bool {
        self.p == other.p
            && other
                .bits
                .iter()
                .zip(&self.bits)
                .all(|(o, s)| o & !s == 0)
    }

    /// Errors unless forced ⊆ bits, the precondition for evaluation.
    pub fn check_forced_included(&self) -> Result<()> {
        let ok = self
            .forced
            .iter()
            .zip(&self.bits)
            .all(|(f, b)| f & !b == 0);
        if ok {
            Ok(())
        } else {
            Err(Error::ForcedNotIncluded)
        }
    }

    /// Bits as a big-endian hex string (bit 0 is the least significant bit of
    /// the last hex digit), fixed width for a given p.
    pub fn bits_hex(&self) -> String {
        let mut s = String::with_capacity(self.bits.len() * 16);
        for limb in self.bits.iter().rev() {
            s.push_str(&format!("{limb:016x}"));
        }
        s
    }
}

impl PartialEq for ModelIndicator {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.bits == other.bits
    }
}

impl Eq for ModelIndicator {}

impl Hash for ModelIndicator {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.p.hash(state);
        self.bits.hash(state);
    }
}

impl Ord for ModelIndicator {
    /// Lexicographic on the bit string b₀b₁…b_{p−1}, with 1 ordered above 0 at
    /// the first differing position.
    fn cmp(&self, other: &Self) -> Ordering {
        match self.p.cmp(&other.p) {
            Ordering::Equal => {}
            ord => return ord,
        }
        for (a, b) in self.bits.iter().zip(&other.bits) {
            let diff = a ^ b;
            if diff != 0 {
                let j = diff.trailing_zeros();
                return if a >> j & 1 == 1 {
                    Ordering::Greater
                } else {
                    Ordering::Less
                };
            }
        }
        Ordering::Equal
    }
}

impl PartialOrd for ModelIndicator {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
