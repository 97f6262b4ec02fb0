//! Dense state-vector reference for small systems.
//!
//! Basis index `i` encodes spin `k` in bit `k`, bit value 1 meaning `s_k = +1`
//! (the [`SpinConfig::from_index`] convention).

mod expm;

pub use expm::{Evolver, EIGEN_MAX_SITES, KRYLOV_TOL};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hamiltonian::SpinHamiltonian;
use crate::rbm::{Pauli, PauliOp, RbmState, SpinConfig};

/// Default maximum number of spins for dense calculations.
pub const DEFAULT_CAP: usize = 16;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// A `2^N` amplitude vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    n: usize,
    amps: Vec<C64>,
}

impl DenseState {
    pub fn new(n: usize, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != 1usize << n {
            return Err(Error::DimensionMismatch { expected: 1 << n, got: amps.len() });
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite("dense amplitudes".into()));
        }
        Ok(DenseState { n, amps })
    }

    /// Amplitudes `exp(ln Psi(S))` of an RBM, up to [`DEFAULT_CAP`] spins.
    pub fn from_rbm(psi: &RbmState) -> Result<Self> {
        Self::from_rbm_with_cap(psi, DEFAULT_CAP)
    }

    pub fn from_rbm_with_cap(psi: &RbmState, cap: usize) -> Result<Self> {
        let n = psi.n_visible();
        if n > cap {
            return Err(Error::OracleCap { n, cap });
        }
        let amps = (0..1usize << n)
            .map(|i| psi.log_amplitude(&SpinConfig::from_index(n, i)).map(|l| l.exp()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, amps)
    }

    /// Product state with sigma-x eigenvalue `signs[k]` on site `k`,
    /// normalized.
    pub fn sigma_x_product(signs: &[i8]) -> Result<Self> {
        let n = signs.len();
        if n > DEFAULT_CAP {
            return Err(Error::OracleCap { n, cap: DEFAULT_CAP });
        }
        let scale = (0.5f64).powf(n as f64 / 2.0);
        let amps = (0..1usize << n)
            .map(|i| {
                let negative = signs
                    .iter()
                    .enumerate()
                    .filter(|&(k, &x)| (i >> k) & 1 == 0 && x < 0)
                    .count();
                C64::new(if negative % 2 == 0 { scale } else { -scale }, 0.0)
            })
            .collect();
        Self::new(n, amps)
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &DenseState) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr().sqrt();
        DenseState { n: self.n, amps: self.amps.iter().map(|a| a / n).collect() }
    }

    /// `<self|other> / (|self| |other|)`.
    pub fn normalized_overlap(&self, other: &DenseState) -> C64 {
        self.inner(other) / (self.norm_sqr() * other.norm_sqr()).sqrt()
    }

    pub fn scale(&self, c: C64) -> Self {
        DenseState { n: self.n, amps: self.amps.iter().map(|a| a * c).collect() }
    }

    /// Apply a Pauli matrix to site `op.site`.
    pub fn apply(&self, op: PauliOp) -> Result<Self> {
        let k = op.site;
        if k >= self.n {
            return Err(Error::InvalidSite { site: k, n: self.n });
        }
        let bit = 1usize << k;
        let mut out = vec![zero(); self.amps.len()];
        for (i, &a) in self.amps.iter().enumerate() {
            let up = i & bit != 0;
            // sigma|s> for the basis state at index i
            let (target, coeff) = match op.pauli {
                Pauli::X => (i ^ bit, C64::new(1.0, 0.0)),
                Pauli::Y => (i ^ bit, if up { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) }),
                Pauli::Z => (i, if up { C64::new(1.0, 0.0) } else { C64::new(-1.0, 0.0) }),
            };
            out[target] += coeff * a;
        }
        Ok(DenseState { n: self.n, amps: out })
    }

    /// `<H> = <psi|H|psi> / <psi|psi>`.
    pub fn expectation<H: SpinHamiltonian + ?Sized>(&self, ham: &H) -> C64 {
        let dense = DenseHamiltonian::new(ham);
        let hv = dense.apply(&self.amps);
        self.amps.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum::<C64>() / self.norm_sqr()
    }
}

/// Matrix-free dense form of a [`SpinHamiltonian`]: a diagonal plus
/// single-bit-flip terms.
#[derive(Clone, Debug)]
pub struct DenseHamiltonian {
    n: usize,
    diag: Vec<f64>,
    flips: Vec<(usize, f64)>,
}

impl DenseHamiltonian {
    pub fn new<H: SpinHamiltonian + ?Sized>(ham: &H) -> Self {
        let n = ham.n_sites();
        let diag = (0..1usize << n).map(|i| ham.diagonal(&SpinConfig::from_index(n, i))).collect();
        DenseHamiltonian { n, diag, flips: ham.flip_terms().to_vec() }
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![zero(); v.len()];
        self.apply_into(v, &mut out);
        out
    }

    pub fn apply_into(&self, v: &[C64], out: &mut [C64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = self.diag[i] * v[i];
            for &(k, c) in &self.flips {
                acc += c * v[i ^ (1 << k)];
            }
            *o = acc;
        }
    }

    /// Full real symmetric matrix.
    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        let d = self.dim();
        let mut m = nalgebra::DMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = self.diag[i];
            for &(k, c) in &self.flips {
                m[(i, i ^ (1 << k))] += c;
            }
        }
        m
    }

    /// Lowest eigenvalue and a normalized eigenvector.
    pub fn ground_state(&self) -> Result<(f64, DenseState)> {
        self.ground_state_with_cap(DEFAULT_CAP)
    }

    /// [`DenseHamiltonian::ground_state`] with an explicit size cap. Beyond
    /// the full-diagonalization size a restarted Lanczos iteration is used.
    pub fn ground_state_with_cap(&self, cap: usize) -> Result<(f64, DenseState)> {
        if self.n > cap {
            return Err(Error::OracleCap { n: self.n, cap });
        }
        if self.n > EIGEN_MAX_SITES {
            let (e0, amps) = expm::lanczos_ground(self)?;
            return Ok((e0, DenseState::new(self.n, amps)?));
        }
        let eig = nalgebra::SymmetricEigen::new(self.to_matrix());
        let (idx, &e0) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty spectrum");
        let amps = eig.eigenvectors.column(idx).iter().map(|&x| C64::new(x, 0.0)).collect();
        Ok((e0, DenseState::new(self.n, amps)?))
    }
}

/// `F(t) = <Psi2|Psi1>` with `Psi1 = U^dag V2 U V1 Psi0` and
/// `Psi2 = V1 U^dag V2 U Psi0`, normalized.
pub fn dense_otoc(psi0: &DenseState, evolver: &Evolver, v1: PauliOp, v2: PauliOp, t: f64) -> Result<C64> {
    let branch1 = evolver.evolve(&evolver.evolve(&psi0.apply(v1)?, t)?.apply(v2)?, -t)?;
    let branch2 = evolver.evolve(&evolver.evolve(psi0, t)?.apply(v2)?, -t)?.apply(v1)?;
    Ok(branch2.normalized_overlap(&branch1))
}

/// [`dense_otoc`] at every time in `times`.
pub fn dense_otoc_curve(
    psi0: &DenseState,
    evolver: &Evolver,
    v1: PauliOp,
    v2: PauliOp,
    times: &[f64],
) -> Result<Vec<C64>> {
    times.iter().map(|&t| dense_otoc(psi0, evolver, v1, v2, t)).collect()
}

/// Infinite-temperature average over sigma-x product states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermalValue {
    pub mean: C64,
    /// Standard error of the mean of `Re F` over the ensemble.
    pub spread: f64,
}

/// Average [`dense_otoc`] over the sigma-x product states given by
/// `sign_vectors`.
pub fn dense_thermal_otoc(
    evolver: &Evolver,
    v1: PauliOp,
    v2: PauliOp,
    t: f64,
    sign_vectors: &[Vec<i8>],
) -> Result<ThermalValue> {
    if sign_vectors.is_empty() {
        return Err(Error::Format("need at least one sign vector".into()));
    }
    let values = sign_vectors
        .iter()
        .map(|signs| dense_otoc(&DenseState::sigma_x_product(signs)?, evolver, v1, v2, t))
        .collect::<Result<Vec<C64>>>()?;
    let mean = values.iter().sum::<C64>() / values.len() as f64;
    let re: Vec<f64> = values.iter().map(|v| v.re).collect();
    let (_, spread) = crate::stats::mean_and_sem(&re);
    Ok(ThermalValue { mean, spread })
}

#[cfg(test)]
mod tests;
