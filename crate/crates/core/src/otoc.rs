//! OTOC pipeline: `F(t) = <Psi2|Psi1>` with `Psi1 = U^dag V2 U V1 Psi0` and
//! `Psi2 = V1 U^dag V2 U Psi0`, both branches carried as RBMs.
//!
//! The forward legs `U V1 Psi0` and `U Psi0` are evolved once along the time
//! grid and snapshotted. Each time point then runs its own backward legs, so
//! time points are independent jobs. Every segment draws from its own derived
//! seed, which makes the result independent of scheduling.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, Direction, PhaseLog, SrConfig};
use crate::error::{Error, Result};
use crate::hamiltonian::{SpinHamiltonian, TransverseField};
use crate::overlap;
use crate::par::{self, Exec};
use crate::rbm::{PauliOp, RbmState};
use crate::sampler::SamplerConfig;
use crate::stats::{self, derive_seed};

/// Training energies further than this fraction above `-N` are flagged.
pub const THERMAL_ENERGY_TOL: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtocPoint {
    pub t: f64,
    pub f: C64,
    pub err: f64,
    /// `phi2 - phi1`, already applied to `f`.
    pub phase_correction: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OtocCurve {
    pub points: Vec<OtocPoint>,
    pub metadata: BTreeMap<String, String>,
}

/// Settings for one pure-state OTOC curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OtocConfig {
    pub dynamics: SrConfig,
    /// Batches for the final overlap of the two branches.
    pub overlap: SamplerConfig,
    pub seed: u64,
}

impl Default for OtocConfig {
    fn default() -> Self {
        OtocConfig {
            dynamics: SrConfig::default(),
            overlap: SamplerConfig::default().with_samples(20_000),
            seed: 0,
        }
    }
}

/// Phase log of one evolution leg.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedLog {
    pub name: String,
    pub log: PhaseLog,
}

/// A curve together with the phase logs of every leg that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct OtocRun {
    pub curve: OtocCurve,
    pub logs: Vec<NamedLog>,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Config(vec!["time grid is empty".into()]));
    }
    if !(times[0] >= 0.0) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Config(vec!["times must be finite and >= 0".into()]));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(vec!["times must be strictly increasing".into()]));
    }
    Ok(())
}

struct Snapshot {
    state: RbmState,
    phase: f64,
}

/// Evolve forward through the grid, keeping the state at every time.
fn forward_trajectory<H: SpinHamiltonian + Sync + ?Sized>(
    psi: &RbmState,
    ham: &H,
    times: &[f64],
    cfg: &SrConfig,
    tag: u64,
) -> Result<(Vec<Snapshot>, PhaseLog)> {
    let mut snaps = Vec::with_capacity(times.len());
    let mut merged = PhaseLog::default();
    let mut state = psi.clone();
    let mut phase = 0.0;
    let mut prev = 0.0;
    for (k, &t) in times.iter().enumerate() {
        let seg = cfg.with_seed(derive_seed(cfg.seed, &[tag, k as u64]));
        let (next, log) = dynamics::evolve(&state, ham, t - prev, &seg, Direction::Forward)?;
        for mut r in log.records {
            r.step = merged.records.len();
            r.t += prev;
            r.accumulated_phi += phase;
            merged.records.push(r);
        }
        phase = merged.total_phase();
        state = next;
        prev = t;
        snaps.push(Snapshot { state: state.clone(), phase });
    }
    Ok((snaps, merged))
}

/// Pure-state OTOC of `psi0` on the grid `times`.
pub fn compute_otoc_pure<H: SpinHamiltonian + Sync + ?Sized>(
    psi0: &RbmState,
    ham: &H,
    v1: PauliOp,
    v2: PauliOp,
    times: &[f64],
    cfg: &OtocConfig,
) -> Result<OtocRun> {
    check_times(times)?;
    let n = psi0.n_visible();
    for op in [v1, v2] {
        if op.site >= n {
            return Err(Error::InvalidSite { site: op.site, n });
        }
    }
    if ham.n_sites() != n {
        return Err(Error::DimensionMismatch { expected: ham.n_sites(), got: n });
    }
    let dyn_cfg = cfg.dynamics.with_seed(derive_seed(cfg.seed, &[0]));
    let a0 = psi0.apply(v1)?;
    let (snaps_a, log_a) = forward_trajectory(&a0, ham, times, &dyn_cfg, 1)?;
    let (snaps_b, log_b) = forward_trajectory(psi0, ham, times, &dyn_cfg, 2)?;

    let jobs: Vec<usize> = (0..times.len()).collect();
    let results = par::map_slice(Exec::default(), &jobs, |&k| -> Result<(OtocPoint, PhaseLog, PhaseLog)> {
        let t = times[k];
        let back = |state: &RbmState, tag: u64| {
            let seg = dyn_cfg.with_seed(derive_seed(dyn_cfg.seed, &[tag, k as u64]));
            dynamics::evolve(state, ham, t, &seg, Direction::Backward)
        };
        let (psi1, back_a) = back(&snaps_a[k].state.apply(v2)?, 3)?;
        let (b, back_b) = back(&snaps_b[k].state.apply(v2)?, 4)?;
        let psi2 = b.apply(v1)?;
        let phi1 = snaps_a[k].phase + back_a.total_phase();
        let phi2 = snaps_b[k].phase + back_b.total_phase();
        let ov_cfg = cfg.overlap.with_seed(derive_seed(cfg.seed, &[5, k as u64]));
        let est = overlap::overlap(&psi1, &psi2, &ov_cfg)?;
        let correction = phi2 - phi1;
        let f = est.value * C64::from_polar(1.0, correction);
        Ok((OtocPoint { t, f, err: est.std_error, phase_correction: correction }, back_a, back_b))
    });

    let mut points = Vec::with_capacity(times.len());
    let mut logs = vec![
        NamedLog { name: "branch1_forward".into(), log: log_a },
        NamedLog { name: "branch2_forward".into(), log: log_b },
    ];
    for (k, r) in results.into_iter().enumerate() {
        let (point, back_a, back_b) = r?;
        points.push(point);
        logs.push(NamedLog { name: format!("branch1_backward_t{k:03}"), log: back_a });
        logs.push(NamedLog { name: format!("branch2_backward_t{k:03}"), log: back_b });
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("v1".into(), v1.to_string());
    metadata.insert("v2".into(), v2.to_string());
    metadata.insert("n_sites".into(), n.to_string());
    metadata.insert("n_hidden".into(), psi0.n_hidden().to_string());
    metadata.insert("seed".into(), cfg.seed.to_string());
    Ok(OtocRun { curve: OtocCurve { points, metadata }, logs })
}

/// Train toward the ground state of `ham` from `initial`, then run
/// [`compute_otoc_pure`].
pub fn compute_otoc_ground<H: SpinHamiltonian + Sync + ?Sized>(
    initial: &RbmState,
    ham: &H,
    v1: PauliOp,
    v2: PauliOp,
    times: &[f64],
    training: &SrConfig,
    cfg: &OtocConfig,
) -> Result<(OtocRun, dynamics::Training)> {
    let trained = dynamics::train_ground_state(initial, ham, training)?;
    let run = compute_otoc_pure(&trained.state, ham, v1, v2, times, cfg)?;
    Ok((run, trained))
}

/// Settings for the infinite-temperature ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalConfig {
    pub ensemble_size: usize,
    /// Spread of the random parameters the product states are trained from.
    pub init_sigma: f64,
    pub n_hidden: usize,
    pub training: SrConfig,
    pub seed: u64,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        ThermalConfig {
            ensemble_size: 10,
            init_sigma: 0.02,
            n_hidden: 0,
            training: SrConfig { step_size: 0.05, max_steps: 200, samples_per_step: 1000, ..SrConfig::default() },
            seed: 0,
        }
    }
}

/// Random sigma-x sign vectors `x_i = +-1`, deterministic in `seed`.
pub fn sign_vectors(n_sites: usize, count: usize, seed: u64) -> Vec<Vec<i8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5167]));
    (0..count)
        .map(|_| (0..n_sites).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
        .collect()
}

/// One member of the thermal ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub signs: Vec<i8>,
    pub seed: u64,
    pub training_energy: f64,
    /// Training energy more than 1% above `-N`.
    pub flagged: bool,
    pub run: OtocRun,
}

/// Ensemble mean over realizations plus the members themselves.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalRun {
    /// Pointwise mean; `err` is the standard error of the mean over the
    /// realizations.
    pub curve: OtocCurve,
    /// Pointwise root-mean-square of the members' Monte Carlo errors divided
    /// by `sqrt(s)`.
    pub mc_err: Vec<f64>,
    pub realizations: Vec<Realization>,
}

/// Infinite-temperature OTOC averaged over `thermal.ensemble_size` random
/// sigma-x product states, each trained as an RBM from small random
/// parameters.
pub fn compute_otoc_thermal<H: SpinHamiltonian + Sync + ?Sized>(
    ham: &H,
    v1: PauliOp,
    v2: PauliOp,
    times: &[f64],
    thermal: &ThermalConfig,
    cfg: &OtocConfig,
) -> Result<ThermalRun> {
    if thermal.ensemble_size < 2 {
        return Err(Error::Config(vec![format!(
            "ensemble_size must be >= 2 (got {})",
            thermal.ensemble_size
        )]));
    }
    let signs = sign_vectors(ham.n_sites(), thermal.ensemble_size, thermal.seed);
    let seeds: Vec<u64> = (0..signs.len()).map(|r| derive_seed(thermal.seed, &[r as u64 + 1])).collect();
    thermal_ensemble(ham, v1, v2, times, thermal, cfg, &signs, &seeds)
}

/// [`compute_otoc_thermal`] with explicit sign vectors and per-member seeds.
#[allow(clippy::too_many_arguments)]
pub fn thermal_ensemble<H: SpinHamiltonian + Sync + ?Sized>(
    ham: &H,
    v1: PauliOp,
    v2: PauliOp,
    times: &[f64],
    thermal: &ThermalConfig,
    cfg: &OtocConfig,
    signs: &[Vec<i8>],
    seeds: &[u64],
) -> Result<ThermalRun> {
    if signs.is_empty() || signs.len() != seeds.len() {
        return Err(Error::Config(vec!["need one seed per sign vector and at least one member".into()]));
    }
    let n = ham.n_sites();
    let m = if thermal.n_hidden == 0 { 2 * n } else { thermal.n_hidden };
    let members = par::map_range(Exec::default(), signs.len(), |r| -> Result<Realization> {
        let sv = &signs[r];
        if sv.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: sv.len() });
        }
        let seed = seeds[r];
        let init = RbmState::random(n, m, thermal.init_sigma, derive_seed(seed, &[1]))?;
        let target = TransverseField::for_product_state(sv);
        let trained = dynamics::train_ground_state(&init, &target, &thermal.training.with_seed(derive_seed(seed, &[2])))?;
        let training_energy = trained.energies.last().map_or(f64::NAN, |e| e.mean.re);
        let ground = target.ground_energy();
        let flagged = !(training_energy <= ground + THERMAL_ENERGY_TOL * ground.abs());
        let run = compute_otoc_pure(&trained.state, ham, v1, v2, times, &cfg.clone_with_seed(derive_seed(seed, &[3])))?;
        Ok(Realization { signs: sv.clone(), seed, training_energy, flagged, run })
    });
    let realizations = members.into_iter().collect::<Result<Vec<_>>>()?;
    let (curve, mc_err) = ensemble_mean(&realizations.iter().map(|r| &r.run.curve).collect::<Vec<_>>())?;
    Ok(ThermalRun { curve, mc_err, realizations })
}

impl OtocConfig {
    fn clone_with_seed(&self, seed: u64) -> OtocConfig {
        OtocConfig { seed, ..self.clone() }
    }
}

/// Pointwise mean of curves on a common grid, with the standard error of
/// the mean of `Re F` as `err`.
pub fn ensemble_mean(curves: &[&OtocCurve]) -> Result<(OtocCurve, Vec<f64>)> {
    let first = curves.first().ok_or_else(|| Error::Format("no curves to average".into()))?;
    let len = first.points.len();
    if curves.iter().any(|c| c.points.len() != len) {
        return Err(Error::Format("curves have different lengths".into()));
    }
    let s = curves.len() as f64;
    let mut points = Vec::with_capacity(len);
    let mut mc_err = Vec::with_capacity(len);
    for k in 0..len {
        let t = first.points[k].t;
        if curves.iter().any(|c| c.points[k].t != t) {
            return Err(Error::Format(format!("time grids differ at index {k}")));
        }
        let f = curves.iter().map(|c| c.points[k].f).sum::<C64>() / s;
        let re: Vec<f64> = curves.iter().map(|c| c.points[k].f.re).collect();
        let (_, sem) = stats::mean_and_sem(&re);
        let ms = curves.iter().map(|c| c.points[k].err.powi(2)).sum::<f64>() / s;
        mc_err.push((ms / s).sqrt());
        let correction = curves.iter().map(|c| c.points[k].phase_correction).sum::<f64>() / s;
        points.push(OtocPoint { t, f, err: sem, phase_correction: correction });
    }
    let mut metadata = first.metadata.clone();
    metadata.insert("ensemble_size".into(), curves.len().to_string());
    Ok((OtocCurve { points, metadata }, mc_err))
}

impl OtocCurve {
    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    /// Tab-separated table with a `# key = value` header block and columns
    /// `t ReF ImF err`.
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# rbm-otoc curve v1")?;
        for (k, v) in &self.metadata {
            writeln!(out, "# {k} = {v}")?;
        }
        writeln!(out, "# t\tReF\tImF\terr")?;
        for p in &self.points {
            writeln!(out, "{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}", p.t, p.f.re, p.f.im, p.err)?;
        }
        Ok(())
    }

    pub fn to_table_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_table(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parse the format written by [`OtocCurve::write_table`]. Phase
    /// corrections are not part of the table and read back as zero.
    pub fn read_table<R: BufRead>(input: R) -> Result<Self> {
        let mut curve = OtocCurve::default();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    curve.metadata.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 4 {
                return Err(Error::Format(format!("line {}: expected 4 columns, found {}", lineno + 1, cols.len())));
            }
            let mut vals = [0.0; 4];
            for (v, c) in vals.iter_mut().zip(&cols) {
                *v = c
                    .parse()
                    .map_err(|_| Error::Format(format!("line {}: bad number {c:?}", lineno + 1)))?;
            }
            curve.points.push(OtocPoint {
                t: vals[0],
                f: C64::new(vals[1], vals[2]),
                err: vals[3],
                phase_correction: 0.0,
            });
        }
        if curve.points.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::Format("times are not strictly increasing".into()));
        }
        Ok(curve)
    }

    /// Gnuplot-style data: one block per series (`ReF`, `ImF`, `err`), each
    /// two columns `t value`, blocks separated by two blank lines.
    pub fn write_plot_data<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let series: [(&str, fn(&OtocPoint) -> f64); 3] =
            [("ReF", |p| p.f.re), ("ImF", |p| p.f.im), ("err", |p| p.err)];
        for (i, (name, get)) in series.iter().enumerate() {
            if i > 0 {
                writeln!(out)?;
                writeln!(out)?;
            }
            writeln!(out, "# series: {name}")?;
            for p in &self.points {
                writeln!(out, "{:.10e} {:.10e}", p.t, get(p))?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests;
