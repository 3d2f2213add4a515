//! Interned token streams.

use std::collections::HashMap;

/// A multiset presented in arrival order. Tokens are interned so that a long
/// stream over a modest vocabulary stays compact.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stream {
    vocab: Vec<Box<[u8]>>,
    index: HashMap<Box<[u8]>, u32>,
    seq: Vec<u32>,
}

impl Stream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tokens<I, T>(tokens: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        let mut s = Stream::new();
        for t in tokens {
            s.push(t.as_ref());
        }
        s
    }

    pub fn intern(&mut self, token: &[u8]) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = u32::try_from(self.vocab.len()).expect("vocabulary exceeds u32 ids");
        self.vocab.push(token.into());
        self.index.insert(token.into(), id);
        id
    }

    pub fn push(&mut self, token: &[u8]) {
        let id = self.intern(token);
        self.seq.push(id);
    }

    /// Appends `count` consecutive occurrences of `token`.
    pub fn push_n(&mut self, token: &[u8], count: u64) {
        let id = self.intern(token);
        self.seq.extend(std::iter::repeat_n(id, count as usize));
    }

    /// Stream length `N`.
    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }

    pub fn unique_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn token(&self, id: u32) -> &[u8] {
        &self.vocab[id as usize]
    }

    pub fn ids(&self) -> &[u32] {
        &self.seq
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        self.seq.iter().map(move |&id| &*self.vocab[id as usize])
    }

    /// The first `len` tokens, as a borrowed iterator.
    pub fn prefix(&self, len: usize) -> impl Iterator<Item = &[u8]> + '_ {
        self.seq[..len.min(self.seq.len())]
            .iter()
            .map(move |&id| &*self.vocab[id as usize])
    }

    /// Exact count of every vocabulary entry, indexed by id.
    pub fn counts(&self) -> Vec<u64> {
        let mut c = vec![0u64; self.vocab.len()];
        for &id in &self.seq {
            c[id as usize] += 1;
        }
        c
    }

    /// `(token, exact count)` for every token that occurs.
    pub fn unique_counts(&self) -> Vec<(&[u8], u64)> {
        self.counts()
            .into_iter()
            .enumerate()
            .filter(|&(_, c)| c > 0)
            .map(|(id, c)| (&*self.vocab[id], c))
            .collect()
    }
}
