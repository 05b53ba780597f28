use std::fmt;

use serde::{Deserialize, Serialize};

/// The boolean bottleneck of one observation: `U·P` truth values with bit
/// `u·P + p` holding predicate `p` in unit `u`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PropositionalState {
    bits: Vec<bool>,
}

impl PropositionalState {
    pub fn new(bits: Vec<bool>) -> Self {
        PropositionalState { bits }
    }

    pub fn zeros(len: usize) -> Self {
        PropositionalState { bits: vec![false; len] }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    /// Indices of the true propositions.
    pub fn true_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }
}

impl fmt::Display for PropositionalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for PropositionalState {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(crate::Error::Format(format!("bad state character {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(PropositionalState::new)
    }
}

/// Object chosen by every hard attention, `U×A` indices in `[0, N)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AttentionAssignment {
    units: usize,
    arity: usize,
    indices: Vec<usize>,
}

impl AttentionAssignment {
    pub fn new(units: usize, arity: usize, indices: Vec<usize>) -> Self {
        assert_eq!(indices.len(), units * arity, "assignment size");
        AttentionAssignment { units, arity, indices }
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn get(&self, unit: usize, arg: usize) -> usize {
        self.indices[unit * self.arity + arg]
    }

    /// Argument object indices of one unit.
    pub fn unit(&self, unit: usize) -> &[usize] {
        &self.indices[unit * self.arity..(unit + 1) * self.arity]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}
