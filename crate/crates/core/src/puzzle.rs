//! The 8-puzzle as a set of nine objects: one per tile (the blank is tile
//! 0), each described by a one-hot tile id and one-hot x/y coordinates.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::nn::{argmax, rng_from_seed, Rng, Tensor};
use crate::scalar::Scalar;

pub const SIDE: usize = 3;
pub const CELLS: usize = SIDE * SIDE;
/// Tile one-hot, then x one-hot, then y one-hot.
pub const FEATURES: usize = CELLS + 2 * SIDE;
/// Number of states reachable from the solved configuration (9!/2).
pub const REACHABLE_STATES: usize = 181_440;

/// A tile configuration: `cells[c]` is the tile on cell `c` (row-major).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PuzzleState {
    cells: [u8; CELLS],
}

/// Human-readable attributes of one decoded object row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObjectAttributes {
    pub tile: usize,
    pub x: usize,
    pub y: usize,
}

impl fmt::Display for ObjectAttributes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.tile, self.x, self.y)
    }
}

impl fmt::Debug for PuzzleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PuzzleState({self})")
    }
}

impl fmt::Display for PuzzleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.cells.iter().enumerate() {
            if i > 0 && i % SIDE == 0 {
                f.write_str("/")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl PuzzleState {
    /// Tile `i` on cell `i`; the blank sits top-left.
    pub fn solved() -> Self {
        let mut cells = [0u8; CELLS];
        for (i, c) in cells.iter_mut().enumerate() {
            *c = i as u8;
        }
        PuzzleState { cells }
    }

    /// Validates that `cells` is a permutation of `0..9`.
    pub fn from_cells(cells: &[u8]) -> Result<Self> {
        if cells.len() != CELLS {
            return Err(Error::Validation(format!("expected {CELLS} cells, got {}", cells.len())));
        }
        let mut seen = [false; CELLS];
        for &t in cells {
            let t = t as usize;
            if t >= CELLS || seen[t] {
                return Err(Error::Validation(format!("not a permutation of 0..{CELLS}: {cells:?}")));
            }
            seen[t] = true;
        }
        let mut out = [0u8; CELLS];
        out.copy_from_slice(cells);
        Ok(PuzzleState { cells: out })
    }

    pub fn cells(&self) -> &[u8; CELLS] {
        &self.cells
    }

    /// Cell index holding `tile`.
    pub fn position(&self, tile: usize) -> usize {
        self.cells
            .iter()
            .position(|&t| t as usize == tile)
            .expect("every tile is present")
    }

    pub fn blank(&self) -> usize {
        self.position(0)
    }

    /// States reachable by sliding one tile into the blank, in the order
    /// blank-up, blank-down, blank-left, blank-right.
    pub fn successors(&self) -> Vec<PuzzleState> {
        let blank = self.blank();
        let (x, y) = (blank % SIDE, blank / SIDE);
        let mut out = Vec::with_capacity(4);
        let mut swap = |other: usize| {
            let mut cells = self.cells;
            cells.swap(blank, other);
            out.push(PuzzleState { cells });
        };
        if y > 0 {
            swap(blank - SIDE);
        }
        if y + 1 < SIDE {
            swap(blank + SIDE);
        }
        if x > 0 {
            swap(blank - 1);
        }
        if x + 1 < SIDE {
            swap(blank + 1);
        }
        out
    }

    pub fn is_successor(&self, other: &PuzzleState) -> bool {
        self.successors().contains(other)
    }

    /// Parity of the permutation of non-blank tiles read row-major; the
    /// reachable half of the state space shares the solved parity.
    pub fn inversion_parity(&self) -> bool {
        let tiles: Vec<u8> = self.cells.iter().copied().filter(|&t| t != 0).collect();
        let mut inversions = 0;
        for i in 0..tiles.len() {
            for j in i + 1..tiles.len() {
                if tiles[i] > tiles[j] {
                    inversions += 1;
                }
            }
        }
        inversions % 2 == 1
    }

    pub fn is_reachable(&self) -> bool {
        self.inversion_parity() == PuzzleState::solved().inversion_parity()
    }

    /// Uniform sample from the states reachable from the solved one.
    pub fn random_reachable(rng: &mut Rng) -> Self {
        let mut cells = Self::solved().cells;
        for i in (1..CELLS).rev() {
            let j = rng.random_range(0..=i);
            cells.swap(i, j);
        }
        let mut s = PuzzleState { cells };
        if !s.is_reachable() {
            // swapping two non-blank tiles flips the parity
            let a = s.cells.iter().position(|&t| t != 0).expect("non-blank tile");
            let b = s.cells.iter().rposition(|&t| t != 0).expect("non-blank tile");
            s.cells.swap(a, b);
        }
        s
    }

    /// Endpoint of a `steps`-move uniform random walk (backtracking allowed).
    pub fn random_walk(&self, steps: usize, rng: &mut Rng) -> Self {
        let mut s = *self;
        for _ in 0..steps {
            s = *s.successors().choose(rng).expect("every state has a successor");
        }
        s
    }

    /// The object matrix `[9, 15]`; row `t` describes tile `t`.
    pub fn objects<T: Scalar>(&self) -> Tensor<T> {
        let mut data = vec![T::zero(); CELLS * FEATURES];
        for (cell, &tile) in self.cells.iter().enumerate() {
            let row = &mut data[tile as usize * FEATURES..(tile as usize + 1) * FEATURES];
            row[tile as usize] = T::one();
            row[CELLS + cell % SIDE] = T::one();
            row[CELLS + SIDE + cell / SIDE] = T::one();
        }
        Tensor::new(vec![CELLS, FEATURES], data).expect("fixed shape")
    }

    /// Inverse of [`Self::objects`] by argmax over each one-hot group.
    /// Fails when the decoded rows do not form a permutation.
    pub fn from_objects<T: Scalar>(x: &Tensor<T>) -> Result<Self> {
        if x.len() != CELLS * FEATURES {
            return Err(Error::dim("puzzle objects", x.shape(), &[CELLS, FEATURES]));
        }
        let mut cells = [u8::MAX; CELLS];
        for r in 0..CELLS {
            let a = decode_attributes(&x.data()[r * FEATURES..(r + 1) * FEATURES]);
            let cell = a.y * SIDE + a.x;
            if cells[cell] != u8::MAX {
                return Err(Error::Validation(format!("two objects decode to cell {cell}")));
            }
            cells[cell] = a.tile as u8;
        }
        Self::from_cells(&cells)
    }
}

/// Builds the object matrix of a permutation, validating it first.
pub fn encode_state<T: Scalar>(cells: &[u8]) -> Result<Tensor<T>> {
    Ok(PuzzleState::from_cells(cells)?.objects())
}

/// Tile id, x and y of one 15-feature object row (argmax per group).
pub fn decode_attributes<T: Scalar>(row: &[T]) -> ObjectAttributes {
    ObjectAttributes {
        tile: argmax(&row[..CELLS]),
        x: argmax(&row[CELLS..CELLS + SIDE]),
        y: argmax(&row[CELLS + SIDE..FEATURES]),
    }
}

/// Stacks object matrices into a batch `[B, 9, 15]`.
pub fn batch_objects<T: Scalar>(states: &[PuzzleState]) -> Tensor<T> {
    let mut data = Vec::with_capacity(states.len() * CELLS * FEATURES);
    for s in states {
        data.extend_from_slice(s.objects::<T>().data());
    }
    Tensor::new(vec![states.len(), CELLS, FEATURES], data).expect("fixed shape")
}

/// Transition pairs split into training and test parts.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSplit {
    pub train: Vec<(PuzzleState, PuzzleState)>,
    pub test: Vec<(PuzzleState, PuzzleState)>,
}

/// Samples `count` transitions: a uniformly random reachable state and one
/// random move from it. The first `round(count · train_fraction)` pairs
/// form the training set. With `dedup`, no pair is emitted twice, so the
/// two parts never share a pair.
pub fn generate_transitions(count: usize, seed: u64, train_fraction: f64, dedup: bool) -> Result<TransitionSplit> {
    if count == 0 {
        return Err(Error::Validation("transition count must be positive".into()));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Validation(format!("train fraction {train_fraction} outside [0, 1]")));
    }
    let mut rng = rng_from_seed(seed);
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let pre = PuzzleState::random_reachable(&mut rng);
        let suc = *pre.successors().choose(&mut rng).expect("successor");
        if dedup && !seen.insert((pre, suc)) {
            continue;
        }
        pairs.push((pre, suc));
    }
    let n_train = ((count as f64) * train_fraction).round() as usize;
    let test = pairs.split_off(n_train.min(count));
    Ok(TransitionSplit { train: pairs, test })
}

/// Planning instance: the goal is the solved state, the initial state the
/// end of a `steps`-move random walk from it.
pub fn make_instance(steps: usize, seed: u64) -> (PuzzleState, PuzzleState) {
    let goal = PuzzleState::solved();
    let init = goal.random_walk(steps, &mut rng_from_seed(seed));
    (init, goal)
}

/// Every reachable state in breadth-first order from the solved state,
/// paired with its distance.
pub fn enumerate_reachable() -> Vec<(PuzzleState, usize)> {
    let start = PuzzleState::solved();
    let mut seen = HashSet::with_capacity(REACHABLE_STATES);
    let mut out = Vec::with_capacity(REACHABLE_STATES);
    let mut queue = VecDeque::new();
    seen.insert(start);
    queue.push_back((start, 0));
    while let Some((s, d)) = queue.pop_front() {
        out.push((s, d));
        for n in s.successors() {
            if seen.insert(n) {
                queue.push_back((n, d + 1));
            }
        }
    }
    out
}

/// Length of a shortest move sequence between two states (BFS).
pub fn optimal_distance(from: &PuzzleState, to: &PuzzleState) -> Option<usize> {
    if from == to {
        return Some(0);
    }
    let mut seen = HashSet::new();
    let mut queue = VecDeque::from([(*from, 0usize)]);
    seen.insert(*from);
    while let Some((s, d)) = queue.pop_front() {
        for n in s.successors() {
            if n == *to {
                return Some(d + 1);
            }
            if seen.insert(n) {
                queue.push_back((n, d + 1));
            }
        }
    }
    None
}
