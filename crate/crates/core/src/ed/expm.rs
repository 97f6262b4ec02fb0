//! Exact propagation `exp(-i H t)` for dense states.
//!
//! Small systems use a full eigendecomposition of the real symmetric
//! Hamiltonian. Larger ones use a Lanczos (Krylov subspace) exponential with
//! adaptive substeps and an a-posteriori error bound.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use super::{DenseHamiltonian, DenseState, DEFAULT_CAP};
use crate::error::{Error, Result};
use crate::hamiltonian::SpinHamiltonian;

/// Systems up to this size are propagated through a full eigendecomposition.
pub const EIGEN_MAX_SITES: usize = 10;

/// Per-substep tolerance of the Krylov exponential, relative to the norm.
pub const KRYLOV_TOL: f64 = 1e-12;

const KRYLOV_DIM: usize = 40;
const MIN_SUBSTEP: f64 = 1e-8;

pub enum Evolver {
    Eigen { values: DVector<f64>, vectors: DMatrix<f64> },
    Krylov { ham: DenseHamiltonian, tol: f64 },
}

impl Evolver {
    /// Build the propagator for `ham`, choosing the method by system size.
    pub fn new<H: SpinHamiltonian + ?Sized>(ham: &H) -> Result<Self> {
        Self::with_cap(ham, DEFAULT_CAP)
    }

    pub fn with_cap<H: SpinHamiltonian + ?Sized>(ham: &H, cap: usize) -> Result<Self> {
        let n = ham.n_sites();
        if n > cap {
            return Err(Error::OracleCap { n, cap });
        }
        let dense = DenseHamiltonian::new(ham);
        if n <= EIGEN_MAX_SITES {
            let eig = SymmetricEigen::new(dense.to_matrix());
            Ok(Evolver::Eigen { values: eig.eigenvalues, vectors: eig.eigenvectors })
        } else {
            Ok(Evolver::Krylov { ham: dense, tol: KRYLOV_TOL })
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Evolver::Eigen { .. } => "eigendecomposition",
            Evolver::Krylov { .. } => "krylov",
        }
    }

    /// Krylov propagation regardless of size.
    pub fn krylov<H: SpinHamiltonian + ?Sized>(ham: &H) -> Self {
        Evolver::Krylov { ham: DenseHamiltonian::new(ham), tol: KRYLOV_TOL }
    }

    /// `exp(-i H t) |state>`.
    pub fn evolve(&self, state: &DenseState, t: f64) -> Result<DenseState> {
        if t == 0.0 {
            return Ok(state.clone());
        }
        match self {
            Evolver::Eigen { values, vectors } => {
                if vectors.nrows() != state.dim() {
                    return Err(Error::DimensionMismatch { expected: vectors.nrows(), got: state.dim() });
                }
                let re = DVector::from_iterator(state.dim(), state.amps.iter().map(|a| a.re));
                let im = DVector::from_iterator(state.dim(), state.amps.iter().map(|a| a.im));
                let cre = vectors.tr_mul(&re);
                let cim = vectors.tr_mul(&im);
                let mut pre = DVector::zeros(values.len());
                let mut pim = DVector::zeros(values.len());
                for (k, &e) in values.iter().enumerate() {
                    let c = C64::new(cre[k], cim[k]) * C64::from_polar(1.0, -e * t);
                    pre[k] = c.re;
                    pim[k] = c.im;
                }
                let out_re = vectors * pre;
                let out_im = vectors * pim;
                let amps = out_re.iter().zip(out_im.iter()).map(|(&r, &i)| C64::new(r, i)).collect();
                DenseState::new(state.n, amps)
            }
            Evolver::Krylov { ham, tol } => {
                if ham.dim() != state.dim() {
                    return Err(Error::DimensionMismatch { expected: ham.dim(), got: state.dim() });
                }
                let amps = krylov_expm(ham, &state.amps, t, *tol)?;
                DenseState::new(state.n, amps)
            }
        }
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

struct Lanczos {
    basis: Vec<Vec<C64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    breakdown: bool,
}

fn lanczos(ham: &DenseHamiltonian, start: &[C64], beta0: f64) -> Lanczos {
    let dim = start.len();
    let mut basis: Vec<Vec<C64>> = vec![start.iter().map(|x| x / beta0).collect()];
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut w = vec![C64::new(0.0, 0.0); dim];
    let max = KRYLOV_DIM.min(dim);
    for j in 0..max {
        ham.apply_into(&basis[j], &mut w);
        let a = dot(&basis[j], &w).re;
        alpha.push(a);
        // full reorthogonalization
        for v in &basis {
            let c = dot(v, &w);
            w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
        }
        let b = norm(&w);
        beta.push(b);
        if b <= 1e-13 * beta0.max(1.0) {
            return Lanczos { basis, alpha, beta, breakdown: true };
        }
        if j + 1 < max {
            basis.push(w.iter().map(|x| x / b).collect());
        }
    }
    let breakdown = basis.len() == dim;
    Lanczos { basis, alpha, beta, breakdown }
}

/// `exp(-i T tau) e_1` for the tridiagonal `T`.
fn small_expm(alpha: &[f64], beta: &[f64], m: usize, tau: f64) -> Vec<C64> {
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    (0..m)
        .map(|r| {
            (0..m)
                .map(|k| {
                    let q = &eig.eigenvectors;
                    q[(r, k)] * q[(0, k)] * C64::from_polar(1.0, -eig.eigenvalues[k] * tau)
                })
                .sum()
        })
        .collect()
}

fn krylov_expm(ham: &DenseHamiltonian, v: &[C64], t: f64, tol: f64) -> Result<Vec<C64>> {
    let mut w = v.to_vec();
    let mut remaining = t;
    let mut tau = t;
    while remaining != 0.0 {
        if tau.abs() > remaining.abs() {
            tau = remaining;
        }
        let beta0 = norm(&w);
        if beta0 == 0.0 {
            return Ok(w);
        }
        let lz = lanczos(ham, &w, beta0);
        let m = lz.alpha.len();
        loop {
            let y = small_expm(&lz.alpha, &lz.beta, m, tau);
            let err = if lz.breakdown { 0.0 } else { lz.beta[m - 1] * y[m - 1].norm() };
            if err <= tol {
                let mut next = vec![C64::new(0.0, 0.0); w.len()];
                for (coef, vec) in y.iter().zip(&lz.basis) {
                    let c = coef * beta0;
                    next.iter_mut().zip(vec).for_each(|(x, b)| *x += c * b);
                }
                w = next;
                remaining -= tau;
                if err < tol * 1e-3 {
                    tau *= 2.0;
                }
                break;
            }
            tau *= 0.5;
            if tau.abs() < MIN_SUBSTEP {
                return Err(Error::KrylovNonConvergence(format!(
                    "substep below {MIN_SUBSTEP:e} with error {err:e}"
                )));
            }
        }
    }
    Ok(w)
}

/// Lowest eigenpair by restarted Lanczos, restarting from the current Ritz
/// vector until the residual norm drops below `1e-10`.
pub(super) fn lanczos_ground(ham: &DenseHamiltonian) -> Result<(f64, Vec<C64>)> {
    let dim = ham.dim();
    let mut v = vec![C64::new(1.0 / (dim as f64).sqrt(), 0.0); dim];
    for _ in 0..200 {
        let lz = lanczos(ham, &v, norm(&v));
        let m = lz.alpha.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = lz.alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = lz.beta[i];
                t[(i + 1, i)] = lz.beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (k, &e0) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty Krylov space");
        let mut ritz = vec![C64::new(0.0, 0.0); dim];
        for (j, basis) in lz.basis.iter().enumerate() {
            let c = eig.eigenvectors[(j, k)];
            ritz.iter_mut().zip(basis).for_each(|(x, b)| *x += c * b);
        }
        let nrm = norm(&ritz);
        ritz.iter_mut().for_each(|x| *x /= nrm);
        let hv = ham.apply(&ritz);
        let residual = norm(&hv.iter().zip(&ritz).map(|(a, b)| a - e0 * b).collect::<Vec<_>>());
        if residual < 1e-10 || lz.breakdown {
            return Ok((e0, ritz));
        }
        v = ritz;
    }
    Err(Error::KrylovNonConvergence("ground-state Lanczos did not converge".into()))
}
