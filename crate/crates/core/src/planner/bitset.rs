use std::fmt;

use smallvec::SmallVec;

use crate::fosae::PropositionalState;

const WORD: usize = 64;

/// Fixed-width word-packed bit vector. Bits past `len` are always zero, so
/// equal states hash equally.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitsetState {
    len: usize,
    words: SmallVec<[u64; 2]>,
}

impl BitsetState {
    pub fn zeros(len: usize) -> Self {
        BitsetState {
            len,
            words: SmallVec::from_elem(0, len.div_ceil(WORD)),
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                s.set(i, true);
            }
        }
        s
    }

    pub fn from_indices(len: usize, ones: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::zeros(len);
        for i in ones {
            s.set(i, true);
        }
        s
    }

    pub fn to_state(&self) -> PropositionalState {
        PropositionalState::new((0..self.len).map(|i| self.get(i)).collect())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for width {}", self.len);
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range for width {}", self.len);
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        out
    }

    /// `(self \ del) ∪ add`.
    pub fn apply(&self, add: &Self, del: &Self) -> Self {
        let mut out = self.clone();
        for ((a, d), p) in out.words.iter_mut().zip(&del.words).zip(&add.words) {
            *a = (*a & !d) | p;
        }
        out
    }

    /// Approximate heap plus inline footprint in bytes.
    pub fn footprint(&self) -> usize {
        std::mem::size_of::<Self>() + if self.words.spilled() { self.words.len() * 8 } else { 0 }
    }
}

impl fmt::Debug for BitsetState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitsetState({self})")
    }
}

impl fmt::Display for BitsetState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl From<&PropositionalState> for BitsetState {
    fn from(s: &PropositionalState) -> Self {
        Self::from_bits(s.bits())
    }
}
