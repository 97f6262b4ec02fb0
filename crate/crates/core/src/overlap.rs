//! Normalized overlap between two RBM states from two Monte Carlo batches.
//!
//! Sampling `|Psi1|^2` and averaging `Psi2(S)/Psi1(S)` gives
//! `v1 = <Psi1|Psi2>/<Psi1|Psi1>`; the mirror estimate gives
//! `v2 = <Psi2|Psi1>/<Psi2|Psi2>`. Then
//! `<Psi2|Psi1> / sqrt(<Psi1|Psi1><Psi2|Psi2>) = sqrt(v1* v2)`.
//!
//! `v1*` and `v2` carry the same phase, so the estimate uses the magnitude
//! `sqrt(|v1| |v2|)` and an inverse-variance weighted circular mean of
//! `arg v1*` and `arg v2`. No square-root branch has to be chosen.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::rbm::RbmState;
use crate::sampler::{self, SampleBatch, SamplerConfig};
use crate::stats::{self, derive_seed};

const JACKKNIFE_BLOCKS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapEstimate {
    /// `<Psi2|Psi1> / sqrt(<Psi1|Psi1><Psi2|Psi2>)`.
    pub value: C64,
    /// Jackknife standard error of `value` (`sqrt(var Re + var Im)`).
    pub std_error: f64,
    pub v1: C64,
    pub v2: C64,
}

/// Sample both states under `cfg` (with derived seeds) and estimate their
/// normalized overlap.
pub fn overlap(psi1: &RbmState, psi2: &RbmState, cfg: &SamplerConfig) -> Result<OverlapEstimate> {
    if psi1.n_visible() != psi2.n_visible() {
        return Err(Error::DimensionMismatch { expected: psi1.n_visible(), got: psi2.n_visible() });
    }
    let b1 = sampler::sample(psi1, &cfg.with_seed(derive_seed(cfg.seed, &[1])))?;
    let b2 = sampler::sample(psi2, &cfg.with_seed(derive_seed(cfg.seed, &[2])))?;
    overlap_from_batches(psi1, psi2, &b1, &b2)
}

fn ratios(num: &RbmState, den: &RbmState, batch: &SampleBatch) -> Result<Vec<C64>> {
    let out = par::map_slice(Exec::default(), &batch.configs, |s| {
        let l = num.log_amplitude(s)? - den.log_amplitude(s)?;
        Ok(l.exp())
    });
    let out = out.into_iter().collect::<Result<Vec<C64>>>()?;
    if out.iter().any(|r| !r.re.is_finite() || !r.im.is_finite()) {
        return Err(Error::UnreliableEstimate(
            "amplitude ratio overflow; the states have (nearly) disjoint support".into(),
        ));
    }
    Ok(out)
}

/// Overlap estimate from a batch of `|Psi1|^2` and a batch of `|Psi2|^2`.
pub fn overlap_from_batches(
    psi1: &RbmState,
    psi2: &RbmState,
    batch1: &SampleBatch,
    batch2: &SampleBatch,
) -> Result<OverlapEstimate> {
    if batch1.is_empty() || batch2.is_empty() {
        return Err(Error::UnreliableEstimate("empty batch".into()));
    }
    let r1 = ratios(psi2, psi1, batch1)?;
    let r2 = ratios(psi1, psi2, batch2)?;
    let v1 = stats::weighted_mean(&r1, batch1.weights());
    let v2 = stats::weighted_mean(&r2, batch2.weights());

    let exact = batch1.weights.is_some() && batch2.weights.is_some();
    if exact {
        let value = combine(v1, v2, 1.0, 1.0);
        return Ok(OverlapEstimate { value, std_error: 0.0, v1, v2 });
    }

    let blocks1 = stats::block_ranges(r1.len(), JACKKNIFE_BLOCKS);
    let blocks2 = stats::block_ranges(r2.len(), JACKKNIFE_BLOCKS);
    let k = blocks1.len().min(blocks2.len());
    let loo = |values: &[C64], blocks: &[std::ops::Range<usize>], weights: Option<&[f64]>| -> Vec<C64> {
        let total_w: Vec<f64> = match weights {
            Some(w) => w.to_vec(),
            None => vec![1.0; values.len()],
        };
        let sum: C64 = values.iter().zip(&total_w).map(|(v, w)| v * w).sum();
        let wsum: f64 = total_w.iter().sum();
        blocks[..k]
            .iter()
            .map(|r| {
                let bs: C64 = values[r.clone()].iter().zip(&total_w[r.clone()]).map(|(v, w)| v * w).sum();
                let bw: f64 = total_w[r.clone()].iter().sum();
                (sum - bs) / (wsum - bw)
            })
            .collect()
    };
    let j1 = loo(&r1, &blocks1, batch1.weights());
    let j2 = loo(&r2, &blocks2, batch2.weights());

    // phase weights from the jackknife spread of each argument
    let arg_var = |reps: &[C64], centre: C64| {
        let devs: Vec<f64> = reps.iter().map(|r| (r / centre).arg()).collect();
        stats::jackknife_variance(&devs)
    };
    let var1 = arg_var(&j1, v1);
    let var2 = arg_var(&j2, v2);
    let (w1, w2) = match (var1 > 0.0, var2 > 0.0) {
        (true, true) => (1.0 / var1, 1.0 / var2),
        _ => (1.0, 1.0),
    };
    let value = combine(v1, v2, w1, w2);
    let reps: Vec<C64> = j1.iter().zip(&j2).map(|(&a, &b)| combine(a, b, w1, w2)).collect();
    let var_re = stats::jackknife_variance(&reps.iter().map(|r| r.re).collect::<Vec<_>>());
    let var_im = stats::jackknife_variance(&reps.iter().map(|r| r.im).collect::<Vec<_>>());
    Ok(OverlapEstimate { value, std_error: (var_re + var_im).sqrt(), v1, v2 })
}

fn combine(v1: C64, v2: C64, w1: f64, w2: f64) -> C64 {
    let magnitude = (v1.norm() * v2.norm()).sqrt();
    let unit = |z: C64| if z.norm() > 0.0 { z / z.norm() } else { C64::new(0.0, 0.0) };
    let direction = w1 * unit(v1.conj()) + w2 * unit(v2);
    let phase = if direction.norm() > 0.0 { direction.arg() } else { 0.0 };
    C64::from_polar(magnitude, phase)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ed::DenseState;
    use crate::rbm::{Pauli, PauliOp};

    fn cfg(seed: u64, sweeps: usize) -> SamplerConfig {
        SamplerConfig { n_chains: 4, n_sweeps: sweeps, burn_in_sweeps: 100, thinning: 1, seed, exact: false }
    }

    #[test]
    fn identical_states_give_one() {
        let psi = RbmState::random(6, 4, 0.4, 1).unwrap();
        let est = overlap(&psi, &psi, &cfg(3, 500)).unwrap();
        assert_eq!(est.value, C64::new(1.0, 0.0));
        assert_eq!(est.v1, C64::new(1.0, 0.0));
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn orthogonal_by_symmetry() {
        let psi = RbmState::zeros(6, 3);
        let z = psi.apply(PauliOp::new(Pauli::Z, 2)).unwrap();
        let est = overlap(&psi, &z, &cfg(5, 5000)).unwrap();
        assert!(est.value.norm() <= 4.0 * est.std_error.max(1e-12), "{est:?}");
    }

    #[test]
    fn matches_dense_inner_product() {
        for seed in 0..5 {
            let a = RbmState::random(6, 6, 0.5, seed).unwrap();
            let b = RbmState::random(6, 6, 0.5, seed + 100).unwrap();
            let want = DenseState::from_rbm(&b).unwrap().normalized_overlap(&DenseState::from_rbm(&a).unwrap());
            let est = overlap(&a, &b, &cfg(seed, 5000)).unwrap();
            assert!((est.value - want).norm() <= 4.0 * est.std_error, "{est:?} vs {want}");
            let exact = overlap_from_batches(&a, &b, &SampleBatch::exact(&a).unwrap(), &SampleBatch::exact(&b).unwrap())
                .unwrap();
            assert!((exact.value - want).norm() < 1e-12);
        }
    }

    #[test]
    fn phase_is_branch_free() {
        // a decoupled hidden unit with bias 1 + iy multiplies the state by
        // 2 cosh(1 + iy), whose argument approaches +-pi as y -> pi
        let a = RbmState::random(4, 3, 0.3, 2).unwrap();
        for y in [3.1, -3.1, std::f64::consts::PI, 0.3] {
            let b = a.with_decoupled_hidden(C64::new(1.0, y));
            let want = DenseState::from_rbm(&b).unwrap().normalized_overlap(&DenseState::from_rbm(&a).unwrap());
            let got = overlap_from_batches(&a, &b, &SampleBatch::exact(&a).unwrap(), &SampleBatch::exact(&b).unwrap())
                .unwrap();
            assert!((got.value - want).norm() < 1e-12, "{} vs {want}", got.value);
            assert!((want.norm() - 1.0).abs() < 1e-12);
        }
    }
}
