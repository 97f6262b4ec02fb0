use std::ops::Index;

use rand::Rng;

use crate::error::{Error, Result};

/// A configuration of `N` spins, each exactly `+1` or `-1`.
///
/// Basis-index convention (shared with the dense oracle): site `k` maps to bit
/// `k` of the index, with bit value 1 meaning `s_k = +1` and 0 meaning
/// `s_k = -1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some((pos, &bad)) = spins.iter().enumerate().find(|(_, &x)| x != 1 && x != -1) {
            return Err(Error::InvalidSpin(bad, pos));
        }
        Ok(SpinConfig(spins))
    }

    pub fn all_up(n: usize) -> Self {
        SpinConfig(vec![1; n])
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        SpinConfig((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
    }

    /// Configuration for basis index `index` (see the type-level docs).
    pub fn from_index(n: usize, index: usize) -> Self {
        SpinConfig((0..n).map(|k| if (index >> k) & 1 == 1 { 1 } else { -1 }).collect())
    }

    pub fn to_index(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0)
            .map(|(k, _)| 1usize << k)
            .sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, i8> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn flip(&mut self, k: usize) {
        self.0[k] = -self.0[k];
    }

    pub fn flipped(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.flip(k);
        out
    }
}

impl Index<usize> for SpinConfig {
    type Output = i8;
    fn index(&self, k: usize) -> &i8 {
        &self.0[k]
    }
}
