//! Transition datasets on disk.
//!
//! A dataset is a directory holding `manifest.json` and `states.bin`. The
//! payload stores one `N×F` block per state, row-major, as little-endian
//! IEEE-754 32-bit floats. States come in `(pre, suc)` order for every
//! pair; the training pairs precede the test pairs.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::puzzle::{self, PuzzleState, TransitionSplit};
use crate::scalar::Scalar;

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "states.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub domain: String,
    pub num_objects: usize,
    pub num_features: usize,
    pub num_pairs: usize,
    pub num_train_pairs: usize,
    pub num_test_pairs: usize,
    pub num_states: usize,
    pub seed: u64,
    pub train_fraction: f64,
    pub dedup: bool,
}

/// `(pre, suc)` observation pairs with a train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    pub manifest: DatasetManifest,
    /// `num_states · N · F` values; see the module docs for the order.
    states: Vec<f32>,
}

impl TransitionDataset {
    /// Builds a dataset from puzzle transitions.
    pub fn from_puzzle(split: &TransitionSplit, seed: u64, train_fraction: f64, dedup: bool) -> Self {
        let mut states = Vec::new();
        for (pre, suc) in split.train.iter().chain(&split.test) {
            states.extend_from_slice(pre.objects::<f32>().data());
            states.extend_from_slice(suc.objects::<f32>().data());
        }
        let num_pairs = split.train.len() + split.test.len();
        TransitionDataset {
            manifest: DatasetManifest {
                format_version: DATASET_FORMAT_VERSION,
                domain: "8-puzzle".into(),
                num_objects: puzzle::CELLS,
                num_features: puzzle::FEATURES,
                num_pairs,
                num_train_pairs: split.train.len(),
                num_test_pairs: split.test.len(),
                num_states: 2 * num_pairs,
                seed,
                train_fraction,
                dedup,
            },
            states,
        }
    }

    /// Generates `count` puzzle transitions and wraps them.
    pub fn generate_puzzle(count: usize, seed: u64, train_fraction: f64, dedup: bool) -> Result<Self> {
        let split = puzzle::generate_transitions(count, seed, train_fraction, dedup)?;
        Ok(Self::from_puzzle(&split, seed, train_fraction, dedup))
    }

    fn block(&self) -> usize {
        self.manifest.num_objects * self.manifest.num_features
    }

    pub fn state(&self, index: usize) -> &[f32] {
        let b = self.block();
        &self.states[index * b..(index + 1) * b]
    }

    /// `(pre, suc)` of pair `index` (training pairs first).
    pub fn pair(&self, index: usize) -> (&[f32], &[f32]) {
        (self.state(2 * index), self.state(2 * index + 1))
    }

    pub fn train_pairs(&self) -> std::ops::Range<usize> {
        0..self.manifest.num_train_pairs
    }

    pub fn test_pairs(&self) -> std::ops::Range<usize> {
        self.manifest.num_train_pairs..self.manifest.num_pairs
    }

    /// Distinct states appearing in the given pairs, in first-seen order.
    pub fn distinct_states(&self, pairs: std::ops::Range<usize>) -> Vec<&[f32]> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for i in pairs.flat_map(|p| [2 * p, 2 * p + 1]) {
            let s = self.state(i);
            let key: Vec<u32> = s.iter().map(|v| v.to_bits()).collect();
            if seen.insert(key) {
                out.push(s);
            }
        }
        out
    }

    /// Stacks rows into a `[B, N, F]` batch at precision `T`.
    pub fn stack<T: Scalar>(&self, states: &[&[f32]]) -> Tensor<T> {
        let data = states
            .iter()
            .flat_map(|s| s.iter().map(|&v| T::from_f64_lossy(v as f64)))
            .collect();
        Tensor::new(
            vec![states.len(), self.manifest.num_objects, self.manifest.num_features],
            data,
        )
        .expect("blocks have the manifest shape")
    }

    /// Decodes every pair back to puzzle states (8-puzzle datasets only).
    pub fn puzzle_pairs(&self) -> Result<Vec<(PuzzleState, PuzzleState)>> {
        let shape = vec![self.manifest.num_objects, self.manifest.num_features];
        (0..self.manifest.num_pairs)
            .map(|i| {
                let (a, b) = self.pair(i);
                let a = Tensor::<f32>::new(shape.clone(), a.to_vec())?;
                let b = Tensor::<f32>::new(shape.clone(), b.to_vec())?;
                Ok((PuzzleState::from_objects(&a)?, PuzzleState::from_objects(&b)?))
            })
            .collect()
    }

    pub fn payload_bytes(&self) -> Vec<u8> {
        self.states.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(PAYLOAD_FILE), self.payload_bytes())?;
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: DatasetManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
        if manifest.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset version {}",
                manifest.format_version
            )));
        }
        if manifest.num_states != 2 * manifest.num_pairs
            || manifest.num_pairs != manifest.num_train_pairs + manifest.num_test_pairs
        {
            return Err(Error::Format("inconsistent pair counts in manifest".into()));
        }
        let bytes = fs::read(dir.join(PAYLOAD_FILE))?;
        let expected = manifest.num_states * manifest.num_objects * manifest.num_features * 4;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "payload holds {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let states = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        Ok(TransitionDataset { manifest, states })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_sized_split() {
        let ds = TransitionDataset::generate_puzzle(20_000, 1, 0.9, false).unwrap();
        assert_eq!(ds.manifest.num_train_pairs, 18_000);
        assert_eq!(ds.manifest.num_test_pairs, 2_000);
        assert_eq!(ds.payload_bytes().len(), 40_000 * 9 * 15 * 4);
    }

    #[test]
    fn save_load_is_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let ds = TransitionDataset::generate_puzzle(300, 2, 0.9, true).unwrap();
        ds.save(dir.path()).unwrap();
        let back = TransitionDataset::load(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert!(back.states.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = TransitionDataset::generate_puzzle(10, 3, 0.9, false).unwrap();
        ds.save(dir.path()).unwrap();
        let mut bytes = fs::read(dir.path().join(PAYLOAD_FILE)).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(dir.path().join(PAYLOAD_FILE), bytes).unwrap();
        assert!(matches!(TransitionDataset::load(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn decodes_back_to_the_generated_pairs() {
        let split = puzzle::generate_transitions(50, 4, 0.8, false).unwrap();
        let ds = TransitionDataset::from_puzzle(&split, 4, 0.8, false);
        let pairs = ds.puzzle_pairs().unwrap();
        assert_eq!(pairs[..40], split.train[..]);
        assert_eq!(pairs[40..], split.test[..]);
        assert_eq!(ds.stack::<f64>(&[ds.state(0)]).shape(), &[1, 9, 15]);
    }
}
