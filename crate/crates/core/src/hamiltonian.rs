//! Spin Hamiltonians of the form `H = D(S) + sum_k c_k sigma_x^k`, where `D`
//! is diagonal in the sigma-z basis.
//!
//! This covers the transverse-field Ising model and the pure-field
//! Hamiltonians used to prepare sigma-x product states. The dynamics and the
//! dense oracle only see the [`SpinHamiltonian`] trait.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::par::{self, Exec};
use crate::rbm::{FlipTable, RbmState, SpinConfig, ThetaCache};
use crate::sampler::SampleBatch;
use crate::stats;

pub trait SpinHamiltonian: Sync + Send {
    fn n_sites(&self) -> usize;

    /// `<S|H|S>`.
    fn diagonal(&self, s: &SpinConfig) -> f64;

    /// `(k, c_k)`: the matrix element `<S|H|flip_k S>`, independent of `S`.
    fn flip_terms(&self) -> &[(usize, f64)];

    /// `E_loc(S) = sum_S' <S|H|S'> Psi(S') / Psi(S)`.
    fn local_energy(&self, psi: &RbmState, table: &FlipTable, s: &SpinConfig, cache: &ThetaCache) -> C64 {
        let mut e = C64::new(self.diagonal(s), 0.0);
        for &(k, c) in self.flip_terms() {
            e += c * table.single_flip_ratio(psi, s, cache, k);
        }
        e
    }
}

/// `H = -h sum_i sigma_x^i - J sum_<ij> sigma_z^i sigma_z^j` on a torus.
#[derive(Clone, Debug, PartialEq)]
pub struct TfimParams {
    pub h: f64,
    pub j: f64,
    pub lattice: Lattice,
    field: Vec<(usize, f64)>,
}

impl TfimParams {
    pub fn new(lattice: Lattice, h: f64, j: f64) -> Result<Self> {
        if !h.is_finite() || !j.is_finite() {
            return Err(Error::Hamiltonian(format!("couplings must be finite (h={h}, J={j})")));
        }
        let field = (0..lattice.n_sites()).map(|k| (k, -h)).collect();
        Ok(TfimParams { h, j, lattice, field })
    }
}

impl SpinHamiltonian for TfimParams {
    fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }

    fn diagonal(&self, s: &SpinConfig) -> f64 {
        let zz: i32 = self.lattice.bonds().iter().map(|&(i, j)| (s[i] * s[j]) as i32).sum();
        -self.j * zz as f64
    }

    fn flip_terms(&self) -> &[(usize, f64)] {
        &self.field
    }
}

/// `H = sum_k c_k sigma_x^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransverseField {
    terms: Vec<(usize, f64)>,
}

impl TransverseField {
    pub fn new(coefficients: &[f64]) -> Self {
        TransverseField { terms: coefficients.iter().copied().enumerate().collect() }
    }

    /// `H = -sum_k x_k sigma_x^k`, whose ground state is the sigma-x product
    /// state with eigenvalues `x_k = +-1`.
    pub fn for_product_state(signs: &[i8]) -> Self {
        TransverseField { terms: signs.iter().enumerate().map(|(k, &x)| (k, -(x as f64))).collect() }
    }

    /// Exact ground energy, `-sum |c_k|`.
    pub fn ground_energy(&self) -> f64 {
        -self.terms.iter().map(|(_, c)| c.abs()).sum::<f64>()
    }
}

impl SpinHamiltonian for TransverseField {
    fn n_sites(&self) -> usize {
        self.terms.len()
    }

    fn diagonal(&self, _s: &SpinConfig) -> f64 {
        0.0
    }

    fn flip_terms(&self) -> &[(usize, f64)] {
        &self.terms
    }
}

/// Sample estimate of the energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyEstimate {
    pub mean: C64,
    /// Standard error of the real part.
    pub std_error: f64,
    /// Standard error of the imaginary part.
    pub im_std_error: f64,
}

/// Local energies of every configuration in `batch`.
pub fn local_energies<H: SpinHamiltonian + ?Sized>(
    ham: &H,
    psi: &RbmState,
    batch: &SampleBatch,
    exec: Exec,
) -> Result<Vec<C64>> {
    if psi.n_visible() != ham.n_sites() {
        return Err(Error::DimensionMismatch { expected: ham.n_sites(), got: psi.n_visible() });
    }
    let table = FlipTable::new(psi);
    let out = par::map_slice(exec, &batch.configs, |s| {
        let cache = psi.theta(s).expect("validated length");
        ham.local_energy(psi, &table, s, &cache)
    });
    Ok(out)
}

/// Mean local energy over `batch` with a batch-means error bar.
pub fn mean_energy<H: SpinHamiltonian + ?Sized>(ham: &H, psi: &RbmState, batch: &SampleBatch) -> Result<EnergyEstimate> {
    if batch.is_empty() {
        return Err(Error::Hamiltonian("empty sample batch".into()));
    }
    let e = local_energies(ham, psi, batch, Exec::default())?;
    Ok(summarize(&e, batch))
}

pub(crate) fn summarize(e: &[C64], batch: &SampleBatch) -> EnergyEstimate {
    let mean = stats::weighted_mean(e, batch.weights());
    let (std_error, im_std_error) = if batch.weights.is_some() {
        (0.0, 0.0)
    } else {
        stats::batch_means_error(e, 20)
    };
    EnergyEstimate { mean, std_error, im_std_error }
}
