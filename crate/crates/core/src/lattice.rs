//! Square lattice on a torus.
//!
//! Sites are indexed row-major, `site = row * cols + col`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `rows x cols` square lattice with periodic boundaries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LatticeDims", into = "LatticeDims")]
pub struct Lattice {
    rows: usize,
    cols: usize,
    bonds: Vec<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct LatticeDims {
    rows: usize,
    cols: usize,
}

impl TryFrom<LatticeDims> for Lattice {
    type Error = Error;
    fn try_from(d: LatticeDims) -> Result<Self> {
        Lattice::new(d.rows, d.cols)
    }
}

impl From<Lattice> for LatticeDims {
    fn from(l: Lattice) -> Self {
        LatticeDims { rows: l.rows, cols: l.cols }
    }
}

impl Lattice {
    /// Build the torus and its nearest-neighbour bond list.
    ///
    /// Each unordered pair appears once. On a side of length 2 the forward and
    /// backward neighbours coincide and only one bond is kept.
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::Lattice(format!(
                "both sides must be at least 2 (got {rows}x{cols})"
            )));
        }
        let n = rows * cols;
        let mut bonds = Vec::with_capacity(2 * n);
        let mut seen = std::collections::HashSet::with_capacity(2 * n);
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                let right = r * cols + (c + 1) % cols;
                let down = ((r + 1) % rows) * cols + c;
                for j in [right, down] {
                    let key = (i.min(j), i.max(j));
                    if i != j && seen.insert(key) {
                        bonds.push(key);
                    }
                }
            }
        }
        Ok(Lattice { rows, cols, bonds })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of sites.
    pub fn n_sites(&self) -> usize {
        self.rows * self.cols
    }

    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    /// Row-major index of `(row, col)`.
    pub fn site(&self, row: usize, col: usize) -> Result<usize> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::Lattice(format!(
                "({row}, {col}) outside {}x{} lattice",
                self.rows, self.cols
            )));
        }
        Ok(row * self.cols + col)
    }

    /// `(row, col)` of a site index.
    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site / self.cols, site % self.cols)
    }

    /// Sorted neighbour list of `site`.
    pub fn neighbors(&self, site: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .bonds
            .iter()
            .filter_map(|&(i, j)| {
                if i == site {
                    Some(j)
                } else if j == site {
                    Some(i)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Graph distance on the torus: the minimal number of nearest-neighbour
    /// hops between the two sites.
    pub fn distance(&self, i: usize, j: usize) -> Result<usize> {
        let n = self.n_sites();
        for s in [i, j] {
            if s >= n {
                return Err(Error::InvalidSite { site: s, n });
            }
        }
        let (ri, ci) = self.coords(i);
        let (rj, cj) = self.coords(j);
        let wrap = |a: usize, b: usize, len: usize| {
            let d = a.abs_diff(b);
            d.min(len - d)
        };
        Ok(wrap(ri, rj, self.rows) + wrap(ci, cj, self.cols))
    }
}
