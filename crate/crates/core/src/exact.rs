//! The unique bucket: an exact dictionary counter charged `c` bytes per key.

use std::collections::HashMap;

pub const DEFAULT_UB_BYTES: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniqueBucket {
    entries: HashMap<Box<[u8]>, u64>,
    per_element_bytes: usize,
    total: u64,
}

impl UniqueBucket {
    pub fn new(per_element_bytes: usize) -> Self {
        UniqueBucket {
            entries: HashMap::new(),
            per_element_bytes,
            total: 0,
        }
    }

    pub fn insert(&mut self, key: &[u8], count: u64) {
        match self.entries.get_mut(key) {
            Some(v) => *v = v.saturating_add(count),
            None => {
                self.entries.insert(key.into(), count);
            }
        }
        self.total = self.total.saturating_add(count);
    }

    pub fn query(&self, key: &[u8]) -> Option<u64> {
        self.entries.get(key).copied()
    }

    /// Unique keys stored (`n`).
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Multiset size routed here (`N_UB`).
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn per_element_bytes(&self) -> usize {
        self.per_element_bytes
    }

    pub fn memory_bytes(&self) -> usize {
        self.per_element_bytes * self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], u64)> {
        self.entries.iter().map(|(k, &v)| (&**k, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unique_and_multiset_sizes() {
        let mut ub = UniqueBucket::new(DEFAULT_UB_BYTES);
        ub.insert(b"x1", 1);
        ub.insert(b"x2", 1);
        ub.insert(b"x2", 1);
        assert_eq!(ub.len(), 2);
        assert_eq!(ub.total(), 3);
    }

    #[test]
    fn empty_bucket_costs_nothing() {
        let ub = UniqueBucket::new(DEFAULT_UB_BYTES);
        assert_eq!(ub.memory_bytes(), 0);
        assert!(ub.is_empty());
    }

    #[test]
    fn memory_is_linear_in_keys() {
        let mut ub = UniqueBucket::new(20);
        for k in 0..5u8 {
            ub.insert(&[k], 1000 * k as u64 + 1);
        }
        assert_eq!(ub.memory_bytes(), 100);
    }

    #[test]
    fn query_is_exact_and_additive() {
        let mut ub = UniqueBucket::new(20);
        ub.insert(b"s", 7);
        assert_eq!(ub.query(b"s"), Some(7));
        assert_eq!(ub.query(b"unknown"), None);
        ub.insert(b"x", 3);
        ub.insert(b"x", 4);
        assert_eq!(ub.query(b"x"), Some(7));
    }
}
