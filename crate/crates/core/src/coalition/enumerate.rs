//! Enumeration of coalition structures and candidate coalitions.

use crate::coalition::structure::CoalitionStructure;

/// Set partitions of `0..n_boats` with every block no larger than `max_block`.
///
/// Walks restricted-growth strings in lexicographic order, so each partition is
/// produced exactly once. Partitions breaking the cap are skipped.
pub fn enumerate_partitions(n_boats: usize, max_block: usize) -> Partitions {
    Partitions {
        max_block: max_block.max(1),
        codes: vec![0; n_boats],
        maxima: vec![0; n_boats],
        done: n_boats == 0,
    }
}

#[derive(Debug, Clone)]
pub struct Partitions {
    max_block: usize,
    /// `codes[k]` is the block index of boat `k`.
    codes: Vec<usize>,
    /// `maxima[k] = max(codes[..k])`.
    maxima: Vec<usize>,
    done: bool,
}

impl Partitions {
    fn advance(&mut self) {
        let n = self.codes.len();
        for k in (1..n).rev() {
            if self.codes[k] <= self.maxima[k] {
                self.codes[k] += 1;
                for j in k + 1..n {
                    self.codes[j] = 0;
                    self.maxima[j] = self.maxima[j - 1].max(self.codes[j - 1]);
                }
                return;
            }
        }
        self.done = true;
    }

    fn current_fits(&self) -> bool {
        let mut sizes = vec![0usize; self.codes.len()];
        for &c in &self.codes {
            sizes[c] += 1;
            if sizes[c] > self.max_block {
                return false;
            }
        }
        true
    }

    fn current(&self) -> CoalitionStructure {
        let n_blocks = self.codes.iter().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); n_blocks];
        for (k, &c) in self.codes.iter().enumerate() {
            blocks[c].push(k);
        }
        CoalitionStructure::new(blocks, self.max_block).expect("generated partition is valid")
    }
}

impl Iterator for Partitions {
    type Item = CoalitionStructure;

    fn next(&mut self) -> Option<CoalitionStructure> {
        while !self.done {
            let fits = self.current_fits();
            let item = fits.then(|| self.current());
            self.advance();
            if item.is_some() {
                return item;
            }
        }
        None
    }
}

/// Every coalition (subset of boats) with at least `min_size` members, as sorted boat lists.
pub fn candidate_coalitions(n_boats: usize, min_size: usize) -> impl Iterator<Item = Vec<usize>> {
    assert!(n_boats < usize::BITS as usize, "too many boats to enumerate subsets");
    (1usize..(1 << n_boats))
        .filter(move |mask| mask.count_ones() as usize >= min_size)
        .map(move |mask| (0..n_boats).filter(|k| mask >> k & 1 == 1).collect())
}
