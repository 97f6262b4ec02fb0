//! Metropolis sampling of spin configurations from `|Psi(S)|^2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::rbm::{FlipTable, RbmState, SpinConfig};
use crate::stats::derive_seed;

/// Largest system the exact-enumeration mode accepts.
pub const EXACT_MAX_SITES: usize = 20;

const CACHE_REFRESH_SWEEPS: usize = 10_000;

/// Settings for a batch of Markov chains.
///
/// One sweep is `N` single-spin-flip proposals. Each chain runs
/// `burn_in_sweeps` sweeps and then `n_sweeps` more, keeping one configuration
/// every `thinning` sweeps. Chain `c` is seeded from `seed + c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_sweeps: usize,
    pub burn_in_sweeps: usize,
    pub thinning: usize,
    pub seed: u64,
    /// Replace Markov chains by a full enumeration weighted by `|Psi|^2`
    /// (only for `N <= 20`). Deterministic and noise-free.
    pub exact: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: par::available_workers(),
            n_sweeps: 1000,
            burn_in_sweeps: 100,
            thinning: 1,
            seed: 0,
            exact: false,
        }
    }
}

impl SamplerConfig {
    /// Config retaining about `samples` configurations in total.
    pub fn with_samples(&self, samples: usize) -> Self {
        let per_chain = samples.div_ceil(self.n_chains.max(1));
        SamplerConfig { n_sweeps: per_chain * self.thinning.max(1), ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SamplerConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_chains < 1 {
            errs.push("n_chains must be >= 1".to_string());
        }
        if self.n_sweeps < 1 {
            errs.push("n_sweeps must be >= 1".to_string());
        }
        if self.thinning < 1 {
            errs.push("thinning must be >= 1".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Retained samples per chain.
    pub fn samples_per_chain(&self) -> usize {
        self.n_sweeps / self.thinning.max(1)
    }
}

/// Sampled configurations.
///
/// Monte Carlo batches are unweighted and stored chain after chain;
/// `chain_lengths` records the split. Exact batches carry normalized
/// probabilities in `weights`.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub configs: Vec<SpinConfig>,
    pub weights: Option<Vec<f64>>,
    pub acceptance_rate: f64,
    pub chain_lengths: Vec<usize>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Every configuration of `psi` weighted by its normalized `|Psi|^2`.
    pub fn exact(psi: &RbmState) -> Result<Self> {
        let n = psi.n_visible();
        if n > EXACT_MAX_SITES {
            return Err(Error::Sampler(format!(
                "exact enumeration limited to {EXACT_MAX_SITES} sites, got {n}"
            )));
        }
        let configs: Vec<SpinConfig> = (0..1usize << n).map(|i| SpinConfig::from_index(n, i)).collect();
        let logs = configs
            .iter()
            .map(|s| psi.log_amplitude(s).map(|l| 2.0 * l.re))
            .collect::<Result<Vec<f64>>>()?;
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonFinite("all amplitudes vanish or overflow".into()));
        }
        let mut weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let len = configs.len();
        Ok(SampleBatch { configs, weights: Some(weights), acceptance_rate: 1.0, chain_lengths: vec![len] })
    }

    /// `(start, end)` index ranges of the Monte Carlo chains.
    pub fn chain_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.chain_lengths
            .iter()
            .map(|&len| {
                let r = start..start + len;
                start += len;
                r
            })
            .collect()
    }
}

/// Sample `psi` with the default execution mode.
pub fn sample(psi: &RbmState, cfg: &SamplerConfig) -> Result<SampleBatch> {
    sample_with(psi, cfg, Exec::default())
}

/// Sample `psi`, running chains with the given execution mode. Output does
/// not depend on `exec`.
pub fn sample_with(psi: &RbmState, cfg: &SamplerConfig, exec: Exec) -> Result<SampleBatch> {
    cfg.validate()?;
    if !psi.is_finite() {
        return Err(Error::NonFinite("RBM parameters".into()));
    }
    if cfg.exact {
        return SampleBatch::exact(psi);
    }
    let table = FlipTable::new(psi);
    let chains = par::map_range(exec, cfg.n_chains, |c| run_chain(psi, &table, cfg, c));
    let mut configs = Vec::with_capacity(cfg.n_chains * cfg.samples_per_chain());
    let mut chain_lengths = Vec::with_capacity(cfg.n_chains);
    let (mut accepted, mut proposed) = (0u64, 0u64);
    for chain in chains {
        let chain = chain?;
        chain_lengths.push(chain.configs.len());
        configs.extend(chain.configs);
        accepted += chain.accepted;
        proposed += chain.proposed;
    }
    let acceptance_rate = if proposed == 0 { 1.0 } else { accepted as f64 / proposed as f64 };
    Ok(SampleBatch { configs, weights: None, acceptance_rate, chain_lengths })
}

struct ChainResult {
    configs: Vec<SpinConfig>,
    accepted: u64,
    proposed: u64,
}

fn run_chain(psi: &RbmState, table: &FlipTable, cfg: &SamplerConfig, chain: usize) -> Result<ChainResult> {
    let n = psi.n_visible();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(chain as u64));
    let mut s = SpinConfig::random(n, &mut rng);
    let mut cache = psi.theta(&s)?;
    let thinning = cfg.thinning.max(1);
    let mut configs = Vec::with_capacity(cfg.samples_per_chain());
    let (mut accepted, mut proposed) = (0u64, 0u64);
    let total = cfg.burn_in_sweeps + cfg.n_sweeps;
    for sweep in 0..total {
        if sweep > 0 && sweep % CACHE_REFRESH_SWEEPS == 0 {
            cache = psi.theta(&s)?;
        }
        for _ in 0..n {
            let k = rng.random_range(0..n);
            let ratio = table.single_flip_ratio(psi, &s, &cache, k);
            let p = ratio.norm_sqr();
            if p.is_nan() {
                return Err(Error::NonFinite(format!(
                    "amplitude ratio NaN at chain {chain}, sweep {sweep}, site {k}"
                )));
            }
            proposed += 1;
            if p >= 1.0 || rng.random::<f64>() < p {
                cache.flip(psi, k, s[k]);
                s.flip(k);
                accepted += 1;
            }
        }
        let kept = sweep + 1 - cfg.burn_in_sweeps.min(sweep + 1);
        if sweep >= cfg.burn_in_sweeps && kept % thinning == 0 {
            configs.push(s.clone());
        }
    }
    Ok(ChainResult { configs, accepted, proposed })
}

/// Seed for the `index`-th batch drawn under `cfg`.
pub fn batch_seed(cfg: &SamplerConfig, tags: &[u64]) -> u64 {
    derive_seed(cfg.seed, tags)
}
