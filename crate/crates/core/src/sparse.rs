//! Sorted sparse vectors over node ids.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::BuildHasherDefault;

/// Hash map with a fixed hasher so iteration order never depends on process state.
pub type NodeMap<V> = HashMap<usize, V, BuildHasherDefault<DefaultHasher>>;

pub fn node_map<V>() -> NodeMap<V> {
    NodeMap::default()
}

/// Nonzero entries sorted by index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    entries: Vec<(usize, f64)>,
}

impl SparseVec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from arbitrary pairs; duplicate indices are summed, zeros dropped.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for (i, x) in pairs {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += x,
                _ => entries.push((i, x)),
            }
        }
        entries.retain(|&(_, x)| x != 0.0);
        Self { entries }
    }

    pub fn from_map(map: &NodeMap<f64>) -> Self {
        let mut entries: Vec<(usize, f64)> = map.iter().filter(|(_, &x)| x != 0.0).map(|(&i, &x)| (i, x)).collect();
        entries.sort_unstable_by_key(|&(i, _)| i);
        Self { entries }
    }

    pub fn unit(i: usize) -> Self {
        Self { entries: vec![(i, 1.0)] }
    }

    pub fn from_dense(x: &[f64]) -> Self {
        Self { entries: x.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, &v)| (i, v)).collect() }
    }

    pub fn get(&self, i: usize) -> f64 {
        match self.entries.binary_search_by_key(&i, |&(j, _)| j) {
            Ok(k) => self.entries[k].1,
            Err(_) => 0.0,
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l1(&self) -> f64 {
        self.entries.iter().map(|&(_, x)| x.abs()).sum()
    }

    pub fn l2_squared(&self) -> f64 {
        self.entries.iter().map(|&(_, x)| x * x).sum()
    }

    pub fn linf(&self) -> f64 {
        self.entries.iter().map(|&(_, x)| x.abs()).fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> Option<f64> {
        self.entries.iter().map(|&(_, x)| x).reduce(f64::min)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_pairs(self.entries.iter().map(|&(i, x)| (i, c * x)).collect())
    }

    /// Returns `self / ‖self‖₁`, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let s = self.l1();
        if s > 0.0 {
            Some(Self { entries: self.entries.iter().map(|&(i, x)| (i, x / s)).collect() })
        } else {
            None
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(i, x) in &self.entries {
            out[i] = x;
        }
        out
    }

    pub fn dot_dense(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * x[i]).sum()
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut acc = 0.0;
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    acc += x * y;
                    a.next();
                    b.next();
                }
            }
        }
        acc
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|&(i, _)| i)
    }
}
