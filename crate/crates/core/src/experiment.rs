//! Run configurations, the batch pipeline behind the command-line driver, and
//! curve comparison.
//!
//! A run is described by a versioned TOML file. Every seed used by a run is
//! derived from the single top-level `seed`, and the manifest written next to
//! the results is the fully resolved configuration, so feeding a manifest back
//! as a config reproduces the run byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::SrConfig;
use crate::ed::{self, DenseHamiltonian, DenseState, Evolver};
use crate::error::{Error, Result};
use crate::fit::{self, FitResult};
use crate::hamiltonian::TfimParams;
use crate::lattice::Lattice;
use crate::otoc::{self, NamedLog, OtocConfig, OtocCurve, OtocPoint, ThermalConfig};
use crate::par;
use crate::rbm::{Pauli, PauliOp, RbmState};
use crate::sampler::SamplerConfig;
use crate::stats::derive_seed;
use crate::C64;

pub const CONFIG_VERSION: u32 = 1;
const TOOL: &str = concat!("rbm-otoc ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Pure,
    Ground,
    Thermal,
    OracleCompare,
    Fit,
}

/// How the initial state is prepared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    /// Random RBM parameters with spread `sigma`.
    Random,
    /// RBM trained toward the ground state of the Hamiltonian.
    Ground,
    /// Infinite-temperature ensemble of trained sigma-x product states.
    Ensemble,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub pauli: Pauli,
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub rows: usize,
    pub cols: usize,
}

impl Default for LatticeSection {
    fn default() -> Self {
        LatticeSection { rows: 3, cols: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HamiltonianSection {
    pub h: f64,
    pub j: f64,
}

impl Default for HamiltonianSection {
    fn default() -> Self {
        HamiltonianSection { h: 1.0, j: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorsSection {
    pub v1: OperatorSpec,
    pub v2: OperatorSpec,
}

impl Default for OperatorsSection {
    fn default() -> Self {
        OperatorsSection {
            v1: OperatorSpec { pauli: Pauli::X, row: 0, col: 0 },
            v2: OperatorSpec { pauli: Pauli::Y, row: 0, col: 1 },
        }
    }
}

/// Uniform grid `t_k = t_max k / (n_points - 1)`, starting at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub t_max: f64,
    pub n_points: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection { t_max: 0.8, n_points: 9 }
    }
}

impl TimeSection {
    pub fn grid(&self) -> Vec<f64> {
        let n = self.n_points.max(2);
        (0..n).map(|k| self.t_max * k as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    /// Defaults to the kind implied by the experiment kind.
    pub kind: Option<InitialKind>,
    /// Spread of the random starting parameters.
    pub sigma: f64,
    pub ensemble_size: usize,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection { kind: None, sigma: 0.1, ensemble_size: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbmSection {
    /// Hidden units per visible spin.
    pub alpha: usize,
}

impl Default for RbmSection {
    fn default() -> Self {
        RbmSection { alpha: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    /// Defaults to the number of workers.
    pub n_chains: Option<usize>,
    pub burn_in_sweeps: usize,
    pub thinning: usize,
    pub exact: bool,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection { n_chains: None, burn_in_sweeps: 100, thinning: 1, exact: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrSection {
    pub step_size: f64,
    pub regularization: f64,
    pub samples_per_step: usize,
    /// Only used for training.
    pub max_steps: usize,
}

impl SrSection {
    fn dynamics() -> Self {
        SrSection { step_size: 0.005, regularization: 1e-4, samples_per_step: 5000, max_steps: 0 }
    }

    fn training() -> Self {
        SrSection { step_size: 0.05, regularization: 1e-4, samples_per_step: 1000, max_steps: 300 }
    }
}

impl Default for SrSection {
    fn default() -> Self {
        SrSection::dynamics()
    }
}

fn default_training() -> SrSection {
    SrSection::training()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapSection {
    pub samples: usize,
}

impl Default for OverlapSection {
    fn default() -> Self {
        OverlapSection { samples: 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    /// Compute the dense reference when the lattice is within `cap`.
    pub enabled: bool,
    pub cap: usize,
    /// Allowed `|dRe F|` and `|dIm F|` inside the window.
    pub tolerance: f64,
    /// Only times where the reference has `Re F >= window` are checked.
    pub window: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection { enabled: true, cap: ed::DEFAULT_CAP, tolerance: 0.05, window: 0.85 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Fit the computed curve (curve kinds) after the run.
    pub enabled: bool,
    /// Defaults to the lattice distance between the two operators.
    pub distance: Option<f64>,
    pub threshold: f64,
    /// Curve tables to fit (kind `fit`), relative to the config file.
    pub curves: Vec<PathBuf>,
    /// Fit all curves jointly instead of one by one.
    pub pooled: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection { enabled: false, distance: None, threshold: fit::DEFAULT_THRESHOLD, curves: Vec::new(), pooled: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub json: bool,
    pub plot: bool,
    pub phase_logs: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { json: true, plot: true, phase_logs: true }
    }
}

/// Bookkeeping written into manifests. Ignored when a manifest is run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifestInfo {
    pub tool: String,
    pub derived_seeds: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub kind: Kind,
    /// Prefix of every output file.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub hamiltonian: HamiltonianSection,
    #[serde(default)]
    pub operators: OperatorsSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub rbm: RbmSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub dynamics: SrSection,
    #[serde(default = "default_training")]
    pub training: SrSection,
    #[serde(default)]
    pub overlap: OverlapSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<ManifestInfo>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.name.is_none() {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            cfg.name = Some(stem.trim_end_matches(".manifest").to_string());
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("run")
    }

    pub fn initial_kind(&self) -> InitialKind {
        self.initial.kind.unwrap_or(match self.kind {
            Kind::Ground => InitialKind::Ground,
            Kind::Thermal => InitialKind::Ensemble,
            _ => InitialKind::Random,
        })
    }

    /// Every violated constraint, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.version != CONFIG_VERSION {
            errs.push(format!("version: unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        let (rows, cols) = (self.lattice.rows, self.lattice.cols);
        if rows < 2 || cols < 2 {
            errs.push(format!("lattice: dimensions must be >= 2 (got {rows}x{cols})"));
        }
        for (name, op) in [("v1", &self.operators.v1), ("v2", &self.operators.v2)] {
            if op.row >= rows || op.col >= cols {
                errs.push(format!(
                    "operators.{name}: site ({}, {}) outside the {rows}x{cols} lattice",
                    op.row, op.col
                ));
            }
        }
        if !self.hamiltonian.h.is_finite() || !self.hamiltonian.j.is_finite() {
            errs.push("hamiltonian: h and j must be finite".into());
        }
        if !(self.time.t_max > 0.0) || !self.time.t_max.is_finite() {
            errs.push(format!("time.t_max: must be > 0 (got {})", self.time.t_max));
        }
        if self.time.n_points < 2 {
            errs.push(format!("time.n_points: must be >= 2 (got {})", self.time.n_points));
        }
        if !(self.initial.sigma >= 0.0) {
            errs.push(format!("initial.sigma: must be >= 0 (got {})", self.initial.sigma));
        }
        let ik = self.initial_kind();
        let expected = match self.kind {
            Kind::Pure => Some(InitialKind::Random),
            Kind::Ground => Some(InitialKind::Ground),
            Kind::Thermal => Some(InitialKind::Ensemble),
            _ => None,
        };
        if let Some(e) = expected {
            if ik != e {
                errs.push(format!("initial.kind: {ik:?} does not match experiment kind {:?}", self.kind));
            }
        }
        if ik == InitialKind::Ensemble && self.initial.ensemble_size < 2 {
            errs.push(format!("initial.ensemble_size: must be >= 2 (got {})", self.initial.ensemble_size));
        }
        if self.rbm.alpha < 1 {
            errs.push("rbm.alpha: must be >= 1".into());
        }
        if self.sampler.n_chains == Some(0) {
            errs.push("sampler.n_chains: must be >= 1".into());
        }
        if self.sampler.thinning < 1 {
            errs.push("sampler.thinning: must be >= 1".into());
        }
        for (name, sec) in [("dynamics", &self.dynamics), ("training", &self.training)] {
            if !(sec.step_size > 0.0) || !sec.step_size.is_finite() {
                errs.push(format!("{name}.step_size: must be > 0 (got {})", sec.step_size));
            }
            if !(sec.regularization >= 0.0) {
                errs.push(format!("{name}.regularization: must be >= 0"));
            }
            if sec.samples_per_step < 10 {
                errs.push(format!("{name}.samples_per_step: must be >= 10 (got {})", sec.samples_per_step));
            }
        }
        if ik != InitialKind::Random && self.training.max_steps < 1 {
            errs.push("training.max_steps: must be >= 1".into());
        }
        if self.overlap.samples < 10 {
            errs.push(format!("overlap.samples: must be >= 10 (got {})", self.overlap.samples));
        }
        if !(self.oracle.tolerance > 0.0) {
            errs.push("oracle.tolerance: must be > 0".into());
        }
        if self.kind == Kind::OracleCompare && rows * cols > self.oracle.cap {
            errs.push(format!("oracle.cap: {} spins exceed the oracle cap {}", rows * cols, self.oracle.cap));
        }
        if let Some(d) = self.fit.distance {
            if !(d > 0.0) {
                errs.push(format!("fit.distance: must be > 0 (got {d})"));
            }
        }
        if !(self.fit.threshold > 0.0 && self.fit.threshold < 1.0) {
            errs.push(format!("fit.threshold: must lie in (0, 1) (got {})", self.fit.threshold));
        }
        if self.kind == Kind::Fit && self.fit.curves.is_empty() {
            errs.push("fit.curves: kind \"fit\" needs at least one curve file".into());
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) {
                errs.push(format!("name: {name:?} is not a plain file prefix"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Copy with every runtime-dependent default made explicit.
    pub fn resolved(&self) -> RunConfig {
        let mut out = self.clone();
        out.sampler.n_chains = Some(self.sampler.n_chains.unwrap_or_else(par::available_workers));
        out.initial.kind = Some(self.initial_kind());
        out.name = Some(self.name().to_string());
        if out.fit.distance.is_none() && (out.fit.enabled || out.kind == Kind::Fit) {
            if let Ok(d) = self.lattice().and_then(|lat| self.operator_distance(&lat)) {
                out.fit.distance = Some(d as f64);
            }
        }
        out.manifest = None;
        out
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(self.lattice.rows, self.lattice.cols)
    }

    pub fn hamiltonian(&self) -> Result<TfimParams> {
        TfimParams::new(self.lattice()?, self.hamiltonian.h, self.hamiltonian.j)
    }

    pub fn operators(&self, lat: &Lattice) -> Result<(PauliOp, PauliOp)> {
        let op = |s: &OperatorSpec| -> Result<PauliOp> { Ok(PauliOp::new(s.pauli, lat.site(s.row, s.col)?)) };
        Ok((op(&self.operators.v1)?, op(&self.operators.v2)?))
    }

    fn operator_distance(&self, lat: &Lattice) -> Result<usize> {
        let (v1, v2) = self.operators(lat)?;
        lat.distance(v1.site, v2.site)
    }

    fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            n_chains: self.sampler.n_chains.unwrap_or_else(par::available_workers),
            n_sweeps: 1,
            burn_in_sweeps: self.sampler.burn_in_sweeps,
            thinning: self.sampler.thinning,
            seed: 0,
            exact: self.sampler.exact,
        }
    }

    fn sr_config(&self, sec: &SrSection, seed: u64) -> SrConfig {
        SrConfig {
            step_size: sec.step_size,
            regularization: sec.regularization,
            samples_per_step: sec.samples_per_step,
            max_steps: sec.max_steps,
            seed,
            sampler: self.sampler_config(),
        }
    }

    pub fn derived_seeds(&self) -> BTreeMap<String, u64> {
        let mut m = BTreeMap::new();
        m.insert("initial".to_string(), derive_seed(self.seed, &[1]));
        m.insert("otoc".to_string(), derive_seed(self.seed, &[2]));
        m.insert("training".to_string(), derive_seed(self.seed, &[3]));
        m.insert("ensemble".to_string(), derive_seed(self.seed, &[4]));
        m
    }

    pub fn otoc_config(&self) -> OtocConfig {
        let seeds = self.derived_seeds();
        OtocConfig {
            dynamics: self.sr_config(&self.dynamics, 0),
            overlap: self.sampler_config().with_samples(self.overlap.samples),
            seed: seeds["otoc"],
        }
    }

    pub fn training_config(&self) -> SrConfig {
        self.sr_config(&self.training, self.derived_seeds()["training"])
    }

    pub fn n_hidden(&self) -> usize {
        self.rbm.alpha * self.lattice.rows * self.lattice.cols
    }

    /// Starting RBM for the `random` and `ground` initial kinds.
    pub fn initial_state(&self) -> Result<RbmState> {
        let n = self.lattice.rows * self.lattice.cols;
        RbmState::random(n, self.n_hidden(), self.initial.sigma, self.derived_seeds()["initial"])
    }

    pub fn thermal_config(&self) -> ThermalConfig {
        ThermalConfig {
            ensemble_size: self.initial.ensemble_size,
            init_sigma: self.initial.sigma,
            n_hidden: self.n_hidden(),
            training: self.training_config(),
            seed: self.derived_seeds()["ensemble"],
        }
    }

    /// Header block shared by every curve written for this config.
    pub fn metadata(&self) -> BTreeMap<String, String> {
        let r = self.resolved();
        let mut m = BTreeMap::new();
        let op = |s: &OperatorSpec| format!("{}@({},{})", s.pauli, s.row, s.col);
        m.insert("lattice".into(), format!("{}x{}", r.lattice.rows, r.lattice.cols));
        m.insert("h".into(), format!("{}", r.hamiltonian.h));
        m.insert("j".into(), format!("{}", r.hamiltonian.j));
        m.insert("v1".into(), op(&r.operators.v1));
        m.insert("v2".into(), op(&r.operators.v2));
        m.insert("initial".into(), format!("{:?}", r.initial_kind()).to_lowercase());
        m.insert("initial_sigma".into(), format!("{}", r.initial.sigma));
        if r.initial_kind() == InitialKind::Ensemble {
            m.insert("ensemble_size".into(), r.initial.ensemble_size.to_string());
        }
        m.insert("alpha".into(), r.rbm.alpha.to_string());
        m.insert("seed".into(), r.seed.to_string());
        m.insert("n_chains".into(), r.sampler.n_chains.unwrap_or(1).to_string());
        m.insert("burn_in_sweeps".into(), r.sampler.burn_in_sweeps.to_string());
        m.insert("thinning".into(), r.sampler.thinning.to_string());
        m.insert("exact_sampling".into(), r.sampler.exact.to_string());
        m.insert("dt".into(), format!("{}", r.dynamics.step_size));
        m.insert("regularization".into(), format!("{}", r.dynamics.regularization));
        m.insert("samples_per_step".into(), r.dynamics.samples_per_step.to_string());
        m.insert("overlap_samples".into(), r.overlap.samples.to_string());
        m
    }
}

/// Pointwise comparison of two curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `(t, Re F_a - Re F_b, Im F_a - Im F_b, Re F_b)`.
    pub rows: Vec<(f64, f64, f64, f64)>,
    pub tolerance: f64,
    /// Rows with `Re F_b` below this are reported but not checked.
    pub window: Option<f64>,
    pub max_abs_re: f64,
    pub max_abs_im: f64,
    /// Earliest checked time with `|dRe F| > tolerance`.
    pub first_exceed_re: Option<f64>,
    /// Earliest checked time with `|dRe F|` or `|dIm F|` above tolerance.
    pub first_exceed: Option<f64>,
}

impl Comparison {
    pub fn within_tolerance(&self) -> bool {
        self.first_exceed.is_none()
    }

    pub fn write_report<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# tolerance = {}", self.tolerance)?;
        if let Some(w) = self.window {
            writeln!(out, "# window = ReF_ref >= {w}")?;
        }
        writeln!(out, "# max_abs_dReF = {:.6e}", self.max_abs_re)?;
        writeln!(out, "# max_abs_dImF = {:.6e}", self.max_abs_im)?;
        match self.first_exceed_re {
            Some(t) => writeln!(out, "# first_exceed_ReF_t = {t}")?,
            None => writeln!(out, "# first_exceed_ReF_t = none")?,
        }
        writeln!(out, "# t\tdReF\tdImF\tReF_ref")?;
        for &(t, dr, di, r) in &self.rows {
            writeln!(out, "{t:.10e}\t{dr:.6e}\t{di:.6e}\t{r:.10e}")?;
        }
        Ok(())
    }
}

fn interpolate(curve: &OtocCurve, t: f64) -> Option<C64> {
    let pts = &curve.points;
    let first = pts.first()?;
    let last = pts.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    let k = pts.partition_point(|p| p.t < t);
    if pts[k].t == t {
        return Some(pts[k].f);
    }
    let (a, b) = (&pts[k - 1], &pts[k]);
    let w = (t - a.t) / (b.t - a.t);
    Some(a.f * (1.0 - w) + b.f * w)
}

/// Compare `a` against the reference `b`.
///
/// Without `interpolate` the time grids must agree; with it, `b` is linearly
/// interpolated onto the times of `a` inside its range.
pub fn compare_curves(
    a: &OtocCurve,
    b: &OtocCurve,
    interpolate_grid: bool,
    tolerance: f64,
    window: Option<f64>,
) -> Result<Comparison> {
    let mut rows = Vec::new();
    if interpolate_grid {
        for p in &a.points {
            if let Some(fb) = interpolate(b, p.t) {
                rows.push((p.t, p.f.re - fb.re, p.f.im - fb.im, fb.re));
            }
        }
        if rows.is_empty() {
            return Err(Error::Format("curves do not overlap in time".into()));
        }
    } else {
        let same = a.points.len() == b.points.len()
            && a.points.iter().zip(&b.points).all(|(p, q)| (p.t - q.t).abs() <= 1e-12 * p.t.abs().max(1.0));
        if !same {
            return Err(Error::Format("time grids differ; pass the interpolation flag to compare anyway".into()));
        }
        for (p, q) in a.points.iter().zip(&b.points) {
            rows.push((p.t, p.f.re - q.f.re, p.f.im - q.f.im, q.f.re));
        }
    }
    let checked = |r: &&(f64, f64, f64, f64)| window.is_none_or(|w| r.3 >= w);
    let max_abs_re = rows.iter().filter(checked).map(|r| r.1.abs()).fold(0.0, f64::max);
    let max_abs_im = rows.iter().filter(checked).map(|r| r.2.abs()).fold(0.0, f64::max);
    let first_exceed_re = rows.iter().filter(checked).find(|r| r.1.abs() > tolerance).map(|r| r.0);
    let first_exceed = rows
        .iter()
        .filter(checked)
        .find(|r| r.1.abs() > tolerance || r.2.abs() > tolerance)
        .map(|r| r.0);
    Ok(Comparison { rows, tolerance, window, max_abs_re, max_abs_im, first_exceed_re, first_exceed })
}

/// Dense reference curve for a config. Thermal configs average over the same
/// sign vectors the RBM ensemble uses; `err` then holds the ensemble standard
/// error.
pub fn oracle_curve(cfg: &RunConfig) -> Result<OtocCurve> {
    cfg.validate()?;
    let ham = cfg.hamiltonian()?;
    let lat = cfg.lattice()?;
    let (v1, v2) = cfg.operators(&lat)?;
    let times = cfg.time.grid();
    let evolver = Evolver::with_cap(&ham, cfg.oracle.cap)?;
    let mut metadata = cfg.metadata();
    let points = match cfg.initial_kind() {
        InitialKind::Ensemble => {
            let th = cfg.thermal_config();
            let signs = otoc::sign_vectors(lat.n_sites(), th.ensemble_size, th.seed);
            let mut pts = Vec::with_capacity(times.len());
            for &t in &times {
                let v = ed::dense_thermal_otoc(&evolver, v1, v2, t, &signs)?;
                pts.push(OtocPoint { t, f: v.mean, err: v.spread, phase_correction: 0.0 });
            }
            metadata.insert(
                "sign_vectors".into(),
                signs
                    .iter()
                    .map(|s| s.iter().map(|&x| if x > 0 { '+' } else { '-' }).collect::<String>())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            pts
        }
        kind => {
            let psi0 = match kind {
                InitialKind::Ground => {
                    let (e0, g) = DenseHamiltonian::new(&ham).ground_state_with_cap(cfg.oracle.cap)?;
                    metadata.insert("ground_energy".into(), format!("{e0:.12}"));
                    g
                }
                _ => DenseState::from_rbm_with_cap(&cfg.initial_state()?, cfg.oracle.cap)?,
            };
            ed::dense_otoc_curve(&psi0, &evolver, v1, v2, &times)?
                .into_iter()
                .zip(&times)
                .map(|(f, &t)| OtocPoint { t, f, err: 0.0, phase_correction: 0.0 })
                .collect()
        }
    };
    metadata.insert("generator".into(), format!("{TOOL} dense oracle"));
    metadata.insert("evolver".into(), evolver.name().into());
    for k in ["dt", "regularization", "samples_per_step", "overlap_samples", "n_chains", "burn_in_sweeps", "thinning", "exact_sampling"] {
        metadata.remove(k);
    }
    Ok(OtocCurve { points, metadata })
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub curve: Option<OtocCurve>,
    pub oracle: Option<OtocCurve>,
    pub comparison: Option<Comparison>,
    pub fits: Vec<FitResult>,
    pub files: Vec<PathBuf>,
    /// Human-readable notes (flags, skipped oracle, ...).
    pub warnings: Vec<String>,
}

struct Writer<'a> {
    dir: &'a Path,
    prefix: String,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn write(&mut self, suffix: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(format!("{}.{suffix}", self.prefix));
        fs::write(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }
}

fn phase_log_text(logs: &[NamedLog]) -> Vec<u8> {
    let mut buf = Vec::new();
    for (i, l) in logs.iter().enumerate() {
        if i > 0 {
            buf.push(b'\n');
        }
        writeln!(buf, "# leg: {}", l.name).expect("in-memory write");
        l.log.write_table(&mut buf).expect("in-memory write");
    }
    buf
}

/// Execute `cfg`, writing results into `out_dir`. Relative fit inputs are
/// resolved against `base_dir`.
pub fn run(cfg: &RunConfig, out_dir: &Path, base_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let resolved = cfg.resolved();
    fs::create_dir_all(out_dir)?;
    let mut w = Writer { dir: out_dir, prefix: resolved.name().to_string(), files: Vec::new() };
    let mut out = RunOutput { curve: None, oracle: None, comparison: None, fits: Vec::new(), files: Vec::new(), warnings: Vec::new() };

    if resolved.kind == Kind::Fit {
        let curves = resolved
            .fit
            .curves
            .iter()
            .map(|p| {
                let path = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                let file = fs::File::open(&path)
                    .map_err(|e| Error::Config(vec![format!("fit.curves: cannot open {}: {e}", path.display())]))?;
                OtocCurve::read_table(std::io::BufReader::new(file))
            })
            .collect::<Result<Vec<_>>>()?;
        let d = resolved.fit.distance.unwrap_or(1.0);
        out.fits = if resolved.fit.pooled {
            vec![fit::fit_pooled(&curves.iter().collect::<Vec<_>>(), d, resolved.fit.threshold)?]
        } else {
            curves.iter().map(|c| fit::fit_wavefront(c, d, resolved.fit.threshold)).collect::<Result<_>>()?
        };
    } else {
        let (curve, logs) = run_curve(&resolved, &mut out.warnings, &mut w)?;
        w.write("curve.tsv", curve.to_table_string().as_bytes())?;
        if resolved.output.json {
            w.write("curve.json", curve.to_json()?.as_bytes())?;
        }
        if resolved.output.plot {
            let mut buf = Vec::new();
            curve.write_plot_data(&mut buf)?;
            w.write("plot.dat", &buf)?;
        }
        if resolved.output.phase_logs {
            w.write("phaselog.tsv", &phase_log_text(&logs))?;
        }
        let n = resolved.lattice.rows * resolved.lattice.cols;
        if resolved.oracle.enabled && n <= resolved.oracle.cap {
            let reference = oracle_curve(&resolved)?;
            let cmp = compare_curves(&curve, &reference, false, resolved.oracle.tolerance, Some(resolved.oracle.window))?;
            w.write("oracle.tsv", reference.to_table_string().as_bytes())?;
            let mut buf = Vec::new();
            cmp.write_report(&mut buf)?;
            w.write("compare.tsv", &buf)?;
            out.oracle = Some(reference);
            out.comparison = Some(cmp);
        } else if resolved.oracle.enabled {
            out.warnings.push(format!(
                "no dense oracle: {n} spins exceed the cap of {}; results are unchecked",
                resolved.oracle.cap
            ));
        }
        if resolved.fit.enabled {
            let d = resolved.fit.distance.unwrap_or(1.0);
            out.fits.push(fit::fit_wavefront(&curve, d, resolved.fit.threshold)?);
        }
        out.curve = Some(curve);
    }
    if !out.fits.is_empty() {
        w.write("fit.json", fit::to_json(&out.fits)?.as_bytes())?;
        let mut summary = String::new();
        for f in &out.fits {
            writeln!(summary, "{f}").expect("string write");
        }
        w.write("fit.txt", summary.as_bytes())?;
    }

    let mut manifest = resolved.clone();
    let mut outputs: Vec<String> = w
        .files
        .iter()
        .filter_map(|p| p.file_name().and_then(|s| s.to_str()).map(String::from))
        .collect();
    let manifest_name = format!("{}.manifest.toml", resolved.name());
    outputs.push(manifest_name.clone());
    manifest.manifest = Some(ManifestInfo { tool: TOOL.to_string(), derived_seeds: resolved.derived_seeds(), outputs });
    let text = format!(
        "# Fully resolved configuration; run it again with `rbm-otoc run --config {manifest_name}`.\n{}",
        manifest.to_toml()?
    );
    w.write("manifest.toml", text.as_bytes())?;
    out.files = w.files;

    if resolved.kind == Kind::OracleCompare {
        if let Some(cmp) = &out.comparison {
            if !cmp.within_tolerance() {
                return Err(Error::OracleMismatch(format!(
                    "deviation above {} at t = {} (max |dReF| = {:.3e}, max |dImF| = {:.3e})",
                    cmp.tolerance,
                    cmp.first_exceed.unwrap_or(f64::NAN),
                    cmp.max_abs_re,
                    cmp.max_abs_im
                )));
            }
        }
    }
    Ok(out)
}

fn run_curve(cfg: &RunConfig, warnings: &mut Vec<String>, w: &mut Writer<'_>) -> Result<(OtocCurve, Vec<NamedLog>)> {
    let ham = cfg.hamiltonian()?;
    let lat = cfg.lattice()?;
    let (v1, v2) = cfg.operators(&lat)?;
    let times = cfg.time.grid();
    let ocfg = cfg.otoc_config();
    let mut metadata = cfg.metadata();
    let (mut curve, logs) = match cfg.initial_kind() {
        InitialKind::Random => {
            let run = otoc::compute_otoc_pure(&cfg.initial_state()?, &ham, v1, v2, &times, &ocfg)?;
            (run.curve, run.logs)
        }
        InitialKind::Ground => {
            let (run, trained) =
                otoc::compute_otoc_ground(&cfg.initial_state()?, &ham, v1, v2, &times, &cfg.training_config(), &ocfg)?;
            if let Some(e) = trained.energies.last() {
                metadata.insert("training_energy".into(), format!("{:.12}", e.mean.re));
            }
            (run.curve, run.logs)
        }
        InitialKind::Ensemble => {
            let th = otoc::compute_otoc_thermal(&ham, v1, v2, &times, &cfg.thermal_config(), &ocfg)?;
            let mut logs = Vec::new();
            for (r, m) in th.realizations.iter().enumerate() {
                if m.flagged {
                    warnings.push(format!(
                        "realization {r}: training energy {:.6} is more than 1% above {}",
                        m.training_energy,
                        -(lat.n_sites() as f64)
                    ));
                }
                for l in &m.run.logs {
                    logs.push(NamedLog { name: format!("r{r:02}/{}", l.name), log: l.log.clone() });
                }
            }
            let flagged: Vec<String> =
                th.realizations.iter().enumerate().filter(|(_, m)| m.flagged).map(|(r, _)| r.to_string()).collect();
            metadata.insert("flagged_realizations".into(), if flagged.is_empty() { "none".into() } else { flagged.join(",") });
            let ensemble = EnsembleRecord {
                mc_err: th.mc_err.clone(),
                members: th
                    .realizations
                    .iter()
                    .map(|m| EnsembleMember {
                        signs: m.signs.clone(),
                        seed: m.seed,
                        training_energy: m.training_energy,
                        flagged: m.flagged,
                        curve: m.run.curve.clone(),
                    })
                    .collect(),
            };
            let json = serde_json::to_string_pretty(&ensemble).map_err(|e| Error::Format(e.to_string()))?;
            w.write("ensemble.json", json.as_bytes())?;
            (th.curve, logs)
        }
    };
    curve.metadata = metadata;
    Ok((curve, logs))
}

/// Per-member detail of a thermal run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    /// Monte Carlo error of the mean at each time.
    pub mc_err: Vec<f64>,
    pub members: Vec<EnsembleMember>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub signs: Vec<i8>,
    pub seed: u64,
    pub training_energy: f64,
    pub flagged: bool,
    pub curve: OtocCurve,
}

#[cfg(test)]
mod tests;
