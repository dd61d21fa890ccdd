use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coalition::ledger::MergeTree;
use crate::error::{Error, Result};

/// Default cap on the number of boats in one coalition.
pub const DEFAULT_MAX_BLOCK: usize = 3;

/// Identifies a coalition by its smallest member (0-based boat index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CoalitionId(pub usize);

impl fmt::Display for CoalitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0 + 1)
    }
}

/// A partition of the boats `0..K` into coalitions, each carrying its merge history.
///
/// Blocks are kept sorted internally and ordered by smallest member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionStructure {
    blocks: Vec<Vec<usize>>,
    ledger: Vec<MergeTree>,
    pub epoch: usize,
    max_block_size: usize,
}

impl CoalitionStructure {
    /// Builds a structure from raw blocks; each block gets a flat ledger (all ratios even).
    pub fn new(blocks: Vec<Vec<usize>>, max_block_size: usize) -> Result<Self> {
        let ledger = blocks.iter().map(|b| MergeTree::flat(b)).collect();
        Self::with_ledger(blocks, ledger, max_block_size)
    }

    pub fn with_ledger(
        blocks: Vec<Vec<usize>>,
        ledger: Vec<MergeTree>,
        max_block_size: usize,
    ) -> Result<Self> {
        if max_block_size == 0 {
            return Err(Error::validation("max_block_size must be >= 1"));
        }
        if blocks.len() != ledger.len() {
            return Err(Error::validation("ledger must hold one tree per block"));
        }
        let mut pairs: Vec<(Vec<usize>, MergeTree)> = blocks
            .into_iter()
            .zip(ledger)
            .map(|(mut b, t)| {
                b.sort_unstable();
                (b, t)
            })
            .collect();
        let n_boats: usize = pairs.iter().map(|(b, _)| b.len()).sum();
        let mut seen = vec![false; n_boats];
        for (b, tree) in &pairs {
            if b.is_empty() {
                return Err(Error::validation("coalitions must be nonempty"));
            }
            if b.len() > max_block_size {
                return Err(Error::validation(format!(
                    "coalition of {} boats exceeds cap {max_block_size}",
                    b.len()
                )));
            }
            for &k in b {
                if k >= n_boats || seen[k] {
                    return Err(Error::validation(format!(
                        "boat {k} is repeated or out of range"
                    )));
                }
                seen[k] = true;
            }
            if tree.leaves() != *b {
                return Err(Error::validation("ledger tree does not match its block"));
            }
        }
        pairs.sort_by_key(|(b, _)| b[0]);
        let (blocks, ledger) = pairs.into_iter().unzip();
        Ok(CoalitionStructure {
            blocks,
            ledger,
            epoch: 0,
            max_block_size,
        })
    }

    pub fn singletons(n_boats: usize, max_block_size: usize) -> Self {
        Self::new((0..n_boats).map(|k| vec![k]).collect(), max_block_size)
            .expect("singletons form a valid partition")
    }

    /// One block holding every boat; the cap is raised to `n_boats`.
    pub fn grand(n_boats: usize) -> Self {
        Self::new(vec![(0..n_boats).collect()], n_boats.max(1))
            .expect("grand coalition is a valid partition")
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_slices(&self) -> impl Iterator<Item = &[usize]> {
        self.blocks.iter().map(Vec::as_slice)
    }

    pub fn ledger(&self) -> &[MergeTree] {
        &self.ledger
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn n_boats(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn max_block_size(&self) -> usize {
        self.max_block_size
    }

    pub fn id(&self, index: usize) -> CoalitionId {
        CoalitionId(self.blocks[index][0])
    }

    pub fn ids(&self) -> impl Iterator<Item = CoalitionId> + '_ {
        self.blocks.iter().map(|b| CoalitionId(b[0]))
    }

    pub fn index_of(&self, id: CoalitionId) -> Option<usize> {
        self.blocks.iter().position(|b| b[0] == id.0)
    }

    pub fn block(&self, id: CoalitionId) -> Option<&[usize]> {
        self.index_of(id).map(|i| self.blocks[i].as_slice())
    }

    /// Block index that contains `boat`.
    pub fn block_of(&self, boat: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(&boat))
    }

    /// True when both structures describe the same partition (ledgers ignored).
    pub fn same_partition(&self, other: &Self) -> bool {
        self.blocks == other.blocks
    }

    pub fn can_merge(&self, i: usize, j: usize) -> bool {
        i != j && self.blocks[i].len() + self.blocks[j].len() <= self.max_block_size
    }

    /// Merges blocks `i` and `j`, recording `(r_i, r_j)` in the new tree node.
    pub fn merged(&self, i: usize, j: usize, ratio_i: f64) -> Result<Self> {
        if i == j || i >= self.len() || j >= self.len() {
            return Err(Error::validation(format!("cannot merge blocks {i} and {j}")));
        }
        if !self.can_merge(i, j) {
            return Err(Error::validation(format!(
                "merging blocks {i} and {j} exceeds cap {}",
                self.max_block_size
            )));
        }
        let (lo, hi) = if self.blocks[i][0] < self.blocks[j][0] {
            (i, j)
        } else {
            (j, i)
        };
        let ratio_lo = if lo == i { ratio_i } else { 1.0 - ratio_i };
        let mut blocks = Vec::with_capacity(self.len() - 1);
        let mut ledger = Vec::with_capacity(self.len() - 1);
        for (idx, (b, t)) in self.blocks.iter().zip(&self.ledger).enumerate() {
            if idx == hi {
                continue;
            }
            if idx == lo {
                let mut joined = b.clone();
                joined.extend_from_slice(&self.blocks[hi]);
                blocks.push(joined);
                ledger.push(MergeTree::join(
                    t.clone(),
                    self.ledger[hi].clone(),
                    ratio_lo,
                ));
            } else {
                blocks.push(b.clone());
                ledger.push(t.clone());
            }
        }
        let mut out = Self::with_ledger(blocks, ledger, self.max_block_size)?;
        out.epoch = self.epoch;
        Ok(out)
    }

    /// Replaces block `i` by the given sub-blocks with their own trees.
    pub fn split_into(&self, i: usize, parts: Vec<MergeTree>) -> Result<Self> {
        let mut union: Vec<usize> = parts.iter().flat_map(MergeTree::leaves).collect();
        union.sort_unstable();
        if union != self.blocks[i] {
            return Err(Error::validation("split parts must cover the block exactly"));
        }
        let mut blocks = Vec::with_capacity(self.len() + parts.len());
        let mut ledger = Vec::with_capacity(self.len() + parts.len());
        for (idx, (b, t)) in self.blocks.iter().zip(&self.ledger).enumerate() {
            if idx != i {
                blocks.push(b.clone());
                ledger.push(t.clone());
            }
        }
        for p in parts {
            blocks.push(p.leaves());
            ledger.push(p);
        }
        let mut out = Self::with_ledger(blocks, ledger, self.max_block_size)?;
        out.epoch = self.epoch;
        Ok(out)
    }

    /// Checks disjoint cover of `0..n_boats` and the size cap.
    pub fn validate(&self, n_boats: usize) -> Result<()> {
        if self.n_boats() != n_boats {
            return Err(Error::validation(format!(
                "structure covers {} boats, expected {n_boats}",
                self.n_boats()
            )));
        }
        Self::with_ledger(
            self.blocks.clone(),
            self.ledger.clone(),
            self.max_block_size,
        )
        .map(|_| ())
    }

    /// Block label per boat, e.g. `[0, 0, 2, 3, 3, 3]`.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.n_boats()];
        for b in &self.blocks {
            for &k in b {
                labels[k] = b[0];
            }
        }
        labels
    }
}

impl fmt::Display for CoalitionStructure {
    /// 1-based boats, e.g. `{1,2}{3}{4,5,6}`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            write!(f, "{{")?;
            for (n, k) in b.iter().enumerate() {
                if n > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", k + 1)?;
            }
            write!(f, "}}")?;
        }
        Ok(())
    }
}
