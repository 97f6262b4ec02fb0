//! Stochastic reconfiguration (SR) for ground-state training and real-time
//! evolution.
//!
//! With `O_k(S) = d ln Psi(S) / d p_k` and local energies `E_loc`, the sample
//! estimates
//!
//! ```text
//! S_kl = <O_k* O_l> - <O_k*><O_l>
//! F_k  = <O_k* E_loc> - <O_k*><E_loc>
//! ```
//!
//! give the imaginary-time update `dp = -eta (S + eps)^-1 F` and the
//! real-time update `dp = -i dt (S + eps)^-1 F`. The real-time update fixes
//! the state only up to a global phase, which is recovered at every step from
//! `<Psi(t)|Psi(t+dt)> = exp(i dphi) (1 - i E dt)`.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{self, EnergyEstimate, SpinHamiltonian};
use crate::par::{self, Exec};
use crate::rbm::{ln_cosh, FlipTable, RbmState};
use crate::sampler::{self, SampleBatch, SamplerConfig};
use crate::stats::{self, derive_seed};

const RETRY_LADDER: usize = 3;
const PLATEAU_WINDOW: usize = 50;
const PLATEAU_TOL: f64 = 1e-6;

/// SR settings shared by training and evolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrConfig {
    /// Learning rate for training, time step `dt` (units of 1/J) for
    /// evolution.
    pub step_size: f64,
    /// Diagonal shift added to the covariance matrix.
    pub regularization: f64,
    pub samples_per_step: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Chain layout for the per-step batches. Its `n_sweeps` and `seed` are
    /// replaced at every step.
    pub sampler: SamplerConfig,
}

impl Default for SrConfig {
    fn default() -> Self {
        SrConfig {
            step_size: 0.005,
            regularization: 1e-4,
            samples_per_step: 5000,
            max_steps: 1000,
            seed: 0,
            sampler: SamplerConfig::default(),
        }
    }
}

impl SrConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            errs.push(format!("step_size must be > 0 (got {})", self.step_size));
        }
        if !(self.regularization >= 0.0) {
            errs.push(format!("regularization must be >= 0 (got {})", self.regularization));
        }
        if self.samples_per_step < 10 {
            errs.push(format!("samples_per_step must be >= 10 (got {})", self.samples_per_step));
        }
        if let Err(Error::Config(more)) = self.sampler.validate() {
            errs.extend(more);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SrConfig { seed, ..self.clone() }
    }

    fn batch(&self, psi: &RbmState, step: u64) -> Result<SampleBatch> {
        let cfg = self
            .sampler
            .with_samples(self.samples_per_step)
            .with_seed(derive_seed(self.seed, &[step]));
        sampler::sample(psi, &cfg)
    }
}

/// Time direction of an evolution segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Per-sample log-derivatives and local energies of one batch.
pub struct SampleData {
    /// Row-major `n_samples x n_params`.
    pub derivatives: Vec<C64>,
    pub local_energies: Vec<C64>,
    pub n_params: usize,
}

/// Evaluate `O_k(S)` and `E_loc(S)` for every configuration of `batch`.
pub fn sample_data<H: SpinHamiltonian + ?Sized>(
    psi: &RbmState,
    ham: &H,
    batch: &SampleBatch,
    exec: Exec,
) -> Result<SampleData> {
    if psi.n_visible() != ham.n_sites() {
        return Err(Error::DimensionMismatch { expected: ham.n_sites(), got: psi.n_visible() });
    }
    let p = psi.n_params();
    let table = FlipTable::new(psi);
    let rows = par::map_slice(exec, &batch.configs, |s| {
        let cache = psi.theta(s).expect("validated length");
        let mut o = vec![C64::new(0.0, 0.0); p];
        psi.log_derivatives_into(s, &cache, &mut o);
        (o, ham.local_energy(psi, &table, s, &cache))
    });
    let mut derivatives = Vec::with_capacity(rows.len() * p);
    let mut local_energies = Vec::with_capacity(rows.len());
    for (o, e) in rows {
        derivatives.extend(o);
        local_energies.push(e);
    }
    Ok(SampleData { derivatives, local_energies, n_params: p })
}

/// Covariance matrix `S`, force `F` and energy estimate from one batch.
pub struct SrSystem {
    pub covariance: DMatrix<C64>,
    pub force: DVector<C64>,
    pub energy: EnergyEstimate,
}

/// Sample estimates of `S` and `F` in flat parameter order.
pub fn sr_matrices<H: SpinHamiltonian + ?Sized>(psi: &RbmState, ham: &H, batch: &SampleBatch) -> Result<SrSystem> {
    if batch.is_empty() {
        return Err(Error::Dynamics("empty sample batch".into()));
    }
    let data = sample_data(psi, ham, batch, Exec::default())?;
    Ok(assemble(&data, batch))
}

fn assemble(data: &SampleData, batch: &SampleBatch) -> SrSystem {
    let ns = batch.len();
    let p = data.n_params;
    let weights: Vec<f64> = match batch.weights() {
        Some(w) => {
            let total: f64 = w.iter().sum();
            w.iter().map(|x| x / total).collect()
        }
        None => vec![1.0 / ns as f64; ns],
    };
    let mut mean_o = vec![C64::new(0.0, 0.0); p];
    for (row, &w) in data.derivatives.chunks_exact(p).zip(&weights) {
        for (m, o) in mean_o.iter_mut().zip(row) {
            *m += o * w;
        }
    }
    let mean_e = stats::weighted_mean(&data.local_energies, Some(&weights));

    // centered and weighted, split into real and imaginary parts
    let mut re = DMatrix::<f64>::zeros(ns, p);
    let mut im = DMatrix::<f64>::zeros(ns, p);
    let mut de = DVector::<C64>::zeros(ns);
    for (s, (row, &w)) in data.derivatives.chunks_exact(p).zip(&weights).enumerate() {
        let sw = w.sqrt();
        for k in 0..p {
            let x = (row[k] - mean_o[k]) * sw;
            re[(s, k)] = x.re;
            im[(s, k)] = x.im;
        }
        de[s] = (data.local_energies[s] - mean_e) * sw;
    }
    // X^H X = (A^T A + B^T B) + i (A^T B - B^T A)
    let ret = re.transpose();
    let imt = im.transpose();
    let real_part = &ret * &re + &imt * &im;
    let cross = &ret * &im;
    let mut covariance = DMatrix::<C64>::zeros(p, p);
    for k in 0..p {
        for l in 0..p {
            covariance[(k, l)] = C64::new(real_part[(k, l)], cross[(k, l)] - cross[(l, k)]);
        }
    }
    let de_re = DVector::from_iterator(ns, de.iter().map(|x| x.re));
    let de_im = DVector::from_iterator(ns, de.iter().map(|x| x.im));
    // X^H d = (A^T - i B^T)(d_re + i d_im)
    let f_re = &ret * &de_re + &imt * &de_im;
    let f_im = &ret * &de_im - &imt * &de_re;
    let force = DVector::from_iterator(p, f_re.iter().zip(f_im.iter()).map(|(&r, &i)| C64::new(r, i)));

    let energy = hamiltonian::summarize(&data.local_energies, batch);
    SrSystem { covariance, force, energy }
}

/// Solve `(S + eps I) x = F`, raising `eps` tenfold up to three times when
/// the factorization fails.
pub fn solve_regularized(covariance: &DMatrix<C64>, force: &DVector<C64>, eps: f64) -> Result<DVector<C64>> {
    let p = covariance.nrows();
    let mut shift = eps;
    for attempt in 0..=RETRY_LADDER {
        let mut m = covariance.clone();
        for k in 0..p {
            m[(k, k)] += shift;
        }
        if let Some(chol) = Cholesky::new(m) {
            let x = chol.solve(force);
            if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
                return Ok(x);
            }
        }
        if attempt < RETRY_LADDER {
            shift = if shift > 0.0 { shift * 10.0 } else { 1e-10 };
        }
    }
    Err(Error::SolveFailed { attempts: RETRY_LADDER + 1, shift })
}

/// Result of [`train_ground_state`].
pub struct Training {
    pub state: RbmState,
    pub energies: Vec<EnergyEstimate>,
    pub converged: bool,
}

/// Imaginary-time SR until `max_steps` or an energy plateau (relative change
/// below 1e-6 across 50 steps).
pub fn train_ground_state<H: SpinHamiltonian + ?Sized>(psi0: &RbmState, ham: &H, cfg: &SrConfig) -> Result<Training> {
    cfg.validate()?;
    let mut psi = psi0.clone();
    let mut energies: Vec<EnergyEstimate> = Vec::with_capacity(cfg.max_steps);
    let mut converged = false;
    for step in 0..cfg.max_steps {
        let batch = cfg.batch(&psi, step as u64)?;
        let sys = sr_matrices(&psi, ham, &batch)?;
        energies.push(sys.energy);
        if energies.len() > PLATEAU_WINDOW {
            let now = energies[energies.len() - 1].mean.re;
            let then = energies[energies.len() - 1 - PLATEAU_WINDOW].mean.re;
            if (now - then).abs() <= PLATEAU_TOL * now.abs().max(1e-300) {
                converged = true;
                break;
            }
        }
        let x = solve_regularized(&sys.covariance, &sys.force, cfg.regularization)?;
        let delta: Vec<C64> = x.iter().map(|v| -cfg.step_size * v).collect();
        psi.update(&delta)
            .map_err(|_| Error::Dynamics(format!("parameters became non-finite at training step {step}")))?;
    }
    Ok(Training { state: psi, energies, converged })
}

/// One row of a [`PhaseLog`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub step: usize,
    /// Elapsed time along the segment at the start of the step.
    pub t: f64,
    /// Signed time step actually taken.
    pub dt: f64,
    pub energy: C64,
    pub overlap: C64,
    pub delta_phi: f64,
    pub accumulated_phi: f64,
    /// `|delta_phi| >= pi/2`: the step size is too large for the phase
    /// identity.
    pub warning: bool,
}

/// Energies and global-phase increments along one evolution segment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseLog {
    pub records: Vec<PhaseRecord>,
}

impl PhaseLog {
    /// Total phase of the evolved RBM relative to the exact evolution.
    pub fn total_phase(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.accumulated_phi)
    }

    pub fn has_warnings(&self) -> bool {
        self.records.iter().any(|r| r.warning)
    }

    /// Tab-separated table: `step t Re_E Im_E delta_phi sum_delta_phi`.
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# step\tt\tRe_E\tIm_E\tdelta_phi\tsum_delta_phi")?;
        for r in &self.records {
            writeln!(
                out,
                "{}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}",
                r.step, r.t, r.energy.re, r.energy.im, r.delta_phi, r.accumulated_phi
            )?;
        }
        Ok(())
    }
}

/// One real-time step of length `dt` (negative for backward evolution).
///
/// Returns the new state and its phase record with `step`/`t` left for the
/// caller to fill in.
pub fn evolve_step<H: SpinHamiltonian + ?Sized>(
    psi: &RbmState,
    ham: &H,
    cfg: &SrConfig,
    dt: f64,
    step: u64,
) -> Result<(RbmState, PhaseRecord)> {
    let batch = cfg.batch(psi, step)?;
    let data = sample_data(psi, ham, &batch, Exec::default())?;
    let sys = assemble(&data, &batch);
    let x = solve_regularized(&sys.covariance, &sys.force, cfg.regularization)?;
    let factor = C64::new(0.0, -dt);
    let delta: Vec<C64> = x.iter().map(|v| factor * v).collect();
    let mut next = psi.clone();
    next.update(&delta)
        .map_err(|_| Error::Dynamics(format!("parameters became non-finite at step {step}")))?;

    let overlap = one_sided_overlap(psi, &next, &batch);
    let energy = sys.energy.mean;
    let reference = C64::new(1.0, -energy.re * dt);
    let delta_phi = wrap_phase(overlap.arg() - reference.arg());
    let record = PhaseRecord {
        step: step as usize,
        t: 0.0,
        dt,
        energy,
        overlap,
        delta_phi,
        accumulated_phi: 0.0,
        warning: delta_phi.abs() >= std::f64::consts::FRAC_PI_2,
    };
    Ok((next, record))
}

fn wrap_phase(x: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    x - two_pi * (x / two_pi).round()
}

/// `<Psi|Psi'> / <Psi|Psi>` estimated on a batch drawn from `|Psi|^2`.
pub fn one_sided_overlap(psi: &RbmState, next: &RbmState, batch: &SampleBatch) -> C64 {
    let n = psi.n_visible();
    let ratios: Vec<C64> = batch
        .configs
        .iter()
        .map(|s| {
            let old = psi.theta(s).expect("validated length");
            let new = next.theta(s).expect("validated length");
            let mut log = C64::new(0.0, 0.0);
            for j in 0..n {
                log += (next.a()[j] - psi.a()[j]) * s[j] as f64;
            }
            for (t_new, t_old) in new.theta().iter().zip(old.theta()) {
                log += ln_cosh(*t_new) - ln_cosh(*t_old);
            }
            log.exp()
        })
        .collect();
    stats::weighted_mean(&ratios, batch.weights())
}

/// Evolve for `t_final` in steps of `cfg.step_size`, the last one truncated
/// to land on `t_final`. Backward evolution applies `U^dag`.
pub fn evolve<H: SpinHamiltonian + ?Sized>(
    psi: &RbmState,
    ham: &H,
    t_final: f64,
    cfg: &SrConfig,
    direction: Direction,
) -> Result<(RbmState, PhaseLog)> {
    cfg.validate()?;
    if !(t_final >= 0.0) {
        return Err(Error::Dynamics(format!("t_final must be >= 0, got {t_final}")));
    }
    let mut state = psi.clone();
    let mut log = PhaseLog::default();
    let n_steps = (t_final / cfg.step_size - 1e-9).ceil().max(0.0) as usize;
    let mut elapsed = 0.0;
    let mut accumulated = 0.0;
    for step in 0..n_steps {
        let dt = (t_final - elapsed).min(cfg.step_size);
        let (next, mut rec) = evolve_step(&state, ham, cfg, direction.sign() * dt, step as u64)?;
        accumulated += rec.delta_phi;
        rec.t = elapsed;
        rec.accumulated_phi = accumulated;
        log.records.push(rec);
        state = next;
        elapsed = if step + 1 == n_steps { t_final } else { elapsed + dt };
    }
    Ok((state, log))
}
