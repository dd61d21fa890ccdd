//! Merge history of a coalition and the catch attribution it implies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary merge tree; leaves are boats and each node stores the shares agreed at merge time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MergeTree {
    Leaf(usize),
    Node {
        left: Box<MergeTree>,
        right: Box<MergeTree>,
        ratio_left: f64,
        ratio_right: f64,
    },
}

impl MergeTree {
    /// Joins two sub-coalitions; `ratio_left` is clamped to `[0, 1]` and the right ratio is its complement.
    pub fn join(left: MergeTree, right: MergeTree, ratio_left: f64) -> Self {
        let ratio_left = if ratio_left.is_finite() {
            ratio_left.clamp(0.0, 1.0)
        } else {
            0.5
        };
        MergeTree::Node {
            left: Box::new(left),
            right: Box::new(right),
            ratio_left,
            ratio_right: 1.0 - ratio_left,
        }
    }

    /// Chain over `boats` that gives every boat an equal share.
    pub fn flat(boats: &[usize]) -> Self {
        let mut sorted = boats.to_vec();
        sorted.sort_unstable();
        let mut iter = sorted.into_iter();
        let Some(first) = iter.next() else {
            // empty blocks are rejected by the structure; a lone leaf keeps this total
            return MergeTree::Leaf(usize::MAX);
        };
        let mut tree = MergeTree::Leaf(first);
        let mut size = 1.0;
        for k in iter {
            tree = MergeTree::join(tree, MergeTree::Leaf(k), size / (size + 1.0));
            size += 1.0;
        }
        tree
    }

    /// Sorted boat ids under this node.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out.sort_unstable();
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            MergeTree::Leaf(k) => out.push(*k),
            MergeTree::Node { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, MergeTree::Leaf(_))
    }

    /// The two sub-coalitions of the most recent merge, if any.
    pub fn children(&self) -> Option<(&MergeTree, &MergeTree)> {
        match self {
            MergeTree::Leaf(_) => None,
            MergeTree::Node { left, right, .. } => Some((left, right)),
        }
    }

    /// Tree with `boat` removed; the removed leaf's sibling takes its parent's place.
    pub fn without(&self, boat: usize) -> Option<MergeTree> {
        match self {
            MergeTree::Leaf(k) if *k == boat => None,
            MergeTree::Leaf(_) => Some(self.clone()),
            MergeTree::Node {
                left,
                right,
                ratio_left,
                ..
            } => match (left.without(boat), right.without(boat)) {
                (None, Some(r)) => Some(r),
                (Some(l), None) => Some(l),
                (Some(l), Some(r)) => Some(MergeTree::join(l, r, *ratio_left)),
                (None, None) => None,
            },
        }
    }

    /// Largest `|r_left + r_right - 1|` over all nodes.
    pub fn ratio_defect(&self) -> f64 {
        match self {
            MergeTree::Leaf(_) => 0.0,
            MergeTree::Node {
                left,
                right,
                ratio_left,
                ratio_right,
            } => (ratio_left + ratio_right - 1.0)
                .abs()
                .max(left.ratio_defect())
                .max(right.ratio_defect()),
        }
    }

    fn split_down(&self, total: f64, out: &mut Vec<(usize, f64)>) {
        match self {
            MergeTree::Leaf(k) => out.push((*k, total)),
            MergeTree::Node {
                left,
                right,
                ratio_left,
                ..
            } => {
                let to_left = total * ratio_left;
                left.split_down(to_left, out);
                right.split_down(total - to_left, out);
            }
        }
    }
}

/// Splits a coalition's `total_catch` down its merge tree; returns `(boat, fish)` sorted by boat.
pub fn redistribute(total_catch: f64, tree: &MergeTree, block: &[usize]) -> Result<Vec<(usize, f64)>> {
    let mut members = block.to_vec();
    members.sort_unstable();
    if tree.leaves() != members {
        return Err(Error::validation(format!(
            "merge tree leaves {:?} do not match block {:?}",
            tree.leaves(),
            members
        )));
    }
    let mut out = Vec::with_capacity(members.len());
    tree.split_down(total_catch, &mut out);
    out.sort_by_key(|&(k, _)| k);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_ratio() {
        let t = MergeTree::join(MergeTree::Leaf(0), MergeTree::Leaf(1), 4.0 / 9.0);
        let shares = redistribute(10.0, &t, &[0, 1]).unwrap();
        assert!((shares[0].1 - 40.0 / 9.0).abs() < 1e-12);
        assert!((shares[1].1 - 50.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_is_identity() {
        let shares = redistribute(12.5, &MergeTree::Leaf(3), &[3]).unwrap();
        assert_eq!(shares, vec![(3, 12.5)]);
    }

    #[test]
    fn nested_tree() {
        let ab = MergeTree::join(MergeTree::Leaf(0), MergeTree::Leaf(1), 0.5);
        let abc = MergeTree::join(ab, MergeTree::Leaf(2), 0.6);
        let shares = redistribute(100.0, &abc, &[2, 0, 1]).unwrap();
        assert!((shares[0].1 - 30.0).abs() < 1e-12);
        assert!((shares[1].1 - 30.0).abs() < 1e-12);
        assert!((shares[2].1 - 40.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_block_rejected() {
        let t = MergeTree::join(MergeTree::Leaf(0), MergeTree::Leaf(1), 0.5);
        assert!(redistribute(1.0, &t, &[0, 2]).is_err());
    }

    #[test]
    fn flat_tree_gives_equal_shares() {
        let t = MergeTree::flat(&[4, 1, 2]);
        let shares = redistribute(9.0, &t, &[1, 2, 4]).unwrap();
        for (_, s) in shares {
            assert!((s - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn removing_a_leaf_promotes_sibling() {
        let ab = MergeTree::join(MergeTree::Leaf(0), MergeTree::Leaf(1), 0.5);
        let abc = MergeTree::join(ab, MergeTree::Leaf(2), 0.6);
        let rest = abc.without(1).unwrap();
        assert_eq!(rest.leaves(), vec![0, 2]);
        assert_eq!(
            rest,
            MergeTree::join(MergeTree::Leaf(0), MergeTree::Leaf(2), 0.6)
        );
        assert_eq!(MergeTree::Leaf(1).without(1), None);
    }
}
