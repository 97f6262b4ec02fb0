//! Restricted Boltzmann machine wavefunctions.
//!
//! With the hidden layer traced out the amplitude is
//!
//! ```text
//! Psi(S) = exp(sum_j a_j s_j) * prod_i 2 cosh(theta_i),   theta_i = b_i + sum_j W_ij s_j
//! ```
//!
//! Amplitudes are only ever handled as logarithms or as ratios between two
//! configurations, because the product of `2 cosh` factors overflows for a
//! few hundred hidden units.
//!
//! Parameters are stored flat in the order `a` (N entries), `b` (M entries),
//! then `W` row-major (`W[i][j]` at `N + M + i * N + j`). The same ordering is
//! used for log-derivatives and SR updates.

mod checkpoint;
mod spin;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use spin::SpinConfig;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;

/// `ln cosh z` without overflow.
///
/// Uses evenness to move to `Re z >= 0` and evaluates
/// `z + ln(1 + exp(-2z)) - ln 2`, where `|exp(-2z)| <= 1`.
#[inline]
pub fn ln_cosh(z: C64) -> C64 {
    let z = if z.re < 0.0 { -z } else { z };
    z + (C64::new(1.0, 0.0) + (-2.0 * z).exp()).ln() - std::f64::consts::LN_2
}

/// Complex parameters `{a, b, W}` of an RBM with `n_visible` spins and
/// `n_hidden` hidden units.
#[derive(Clone, Debug, PartialEq)]
pub struct RbmState {
    n_visible: usize,
    n_hidden: usize,
    params: Vec<C64>,
}

impl RbmState {
    /// All-zero parameters: the uniform superposition in the sigma-z basis.
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        RbmState {
            n_visible,
            n_hidden,
            params: vec![C64::new(0.0, 0.0); n_visible + n_hidden + n_visible * n_hidden],
        }
    }

    /// Build a state from explicit parameter blocks. `w` is row-major
    /// `n_hidden x n_visible`.
    pub fn from_parts(a: &[C64], b: &[C64], w: &[C64]) -> Result<Self> {
        let (n, m) = (a.len(), b.len());
        if w.len() != n * m {
            return Err(Error::DimensionMismatch { expected: n * m, got: w.len() });
        }
        let mut params = Vec::with_capacity(n + m + n * m);
        params.extend_from_slice(a);
        params.extend_from_slice(b);
        params.extend_from_slice(w);
        let state = RbmState { n_visible: n, n_hidden: m, params };
        state.check_finite()?;
        Ok(state)
    }

    /// Build a state from the flat parameter vector.
    pub fn from_flat(n_visible: usize, n_hidden: usize, params: Vec<C64>) -> Result<Self> {
        let expected = n_visible + n_hidden + n_visible * n_hidden;
        if params.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: params.len() });
        }
        let state = RbmState { n_visible, n_hidden, params };
        state.check_finite()?;
        Ok(state)
    }

    /// Independent `N(0, sigma^2)` draws for the real and imaginary part of
    /// every parameter, in flat parameter order (real part first).
    pub fn random(n_visible: usize, n_hidden: usize, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Format(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        let mut state = Self::zeros(n_visible, n_hidden);
        if sigma == 0.0 {
            return Ok(state);
        }
        let normal = Normal::new(0.0, sigma).expect("valid normal");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in state.params.iter_mut() {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            *p = C64::new(re, im);
        }
        Ok(state)
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    /// Total number of complex parameters, `N + M + N*M`.
    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[C64] {
        &self.params
    }

    pub fn a(&self) -> &[C64] {
        &self.params[..self.n_visible]
    }

    pub fn b(&self) -> &[C64] {
        &self.params[self.n_visible..self.n_visible + self.n_hidden]
    }

    /// Coupling matrix, row-major `M x N`.
    pub fn w(&self) -> &[C64] {
        &self.params[self.n_visible + self.n_hidden..]
    }

    #[inline]
    pub fn w_at(&self, hidden: usize, visible: usize) -> C64 {
        self.params[self.n_visible + self.n_hidden + hidden * self.n_visible + visible]
    }

    fn w_offset(&self) -> usize {
        self.n_visible + self.n_hidden
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.re.is_finite() && p.im.is_finite())
    }

    fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite("RBM parameters".into()))
        }
    }

    /// Add `delta` (flat ordering) to the parameters.
    pub fn update(&mut self, delta: &[C64]) -> Result<()> {
        if delta.len() != self.params.len() {
            return Err(Error::DimensionMismatch { expected: self.params.len(), got: delta.len() });
        }
        for (p, d) in self.params.iter_mut().zip(delta) {
            *p += d;
        }
        self.check_finite()
    }

    /// Return a copy with one extra hidden unit that has zero couplings and
    /// bias `bias`. This multiplies every amplitude by `2 cosh(bias)`.
    pub fn with_decoupled_hidden(&self, bias: C64) -> Self {
        let mut b = self.b().to_vec();
        b.push(bias);
        let mut w = self.w().to_vec();
        w.extend(std::iter::repeat_n(C64::new(0.0, 0.0), self.n_visible));
        RbmState::from_parts(self.a(), &b, &w).expect("consistent dimensions")
    }

    fn check_len(&self, s: &SpinConfig) -> Result<()> {
        if s.len() != self.n_visible {
            return Err(Error::DimensionMismatch { expected: self.n_visible, got: s.len() });
        }
        Ok(())
    }

    fn check_site(&self, k: usize) -> Result<()> {
        if k >= self.n_visible {
            return Err(Error::InvalidSite { site: k, n: self.n_visible });
        }
        Ok(())
    }

    /// Effective angles `theta_i = b_i + sum_j W_ij s_j`.
    pub fn theta(&self, s: &SpinConfig) -> Result<ThetaCache> {
        self.check_len(s)?;
        Ok(ThetaCache::new(self, s))
    }

    /// `ln Psi(S)`. The imaginary part is only defined modulo `2 pi`.
    pub fn log_amplitude(&self, s: &SpinConfig) -> Result<C64> {
        self.check_len(s)?;
        let cache = ThetaCache::new(self, s);
        Ok(self.log_amplitude_cached(s, &cache))
    }

    pub(crate) fn log_amplitude_cached(&self, s: &SpinConfig, cache: &ThetaCache) -> C64 {
        let visible: C64 = self.a().iter().zip(s.iter()).map(|(a, &sj)| a * sj as f64).sum();
        let hidden: C64 = cache.theta.iter().map(|&t| ln_cosh(t)).sum();
        visible + hidden + self.n_hidden as f64 * std::f64::consts::LN_2
    }

    /// Logarithm of `Psi(S') / Psi(S)` where `S'` is `S` with `flips` flipped.
    ///
    /// Costs `O(M * |flips|)` using the cached angles.
    pub fn log_ratio(&self, s: &SpinConfig, cache: &ThetaCache, flips: &[usize]) -> Result<C64> {
        for &k in flips {
            self.check_site(k)?;
        }
        let mut unique = flips.to_vec();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != flips.len() {
            return Err(Error::Format("flip set contains duplicate sites".into()));
        }
        let mut out = C64::new(0.0, 0.0);
        for &k in flips {
            out -= 2.0 * self.params[k] * s[k] as f64;
        }
        let n = self.n_visible;
        let w0 = self.w_offset();
        for (i, &t) in cache.theta.iter().enumerate() {
            let row = &self.params[w0 + i * n..w0 + (i + 1) * n];
            let shift: C64 = flips.iter().map(|&k| row[k] * (2.0 * s[k] as f64)).sum();
            out += ln_cosh(t - shift) - ln_cosh(t);
        }
        Ok(out)
    }

    /// `Psi(S') / Psi(S)` for the flipped configuration `S'`.
    pub fn amplitude_ratio(&self, s: &SpinConfig, cache: &ThetaCache, flips: &[usize]) -> Result<C64> {
        Ok(self.log_ratio(s, cache, flips)?.exp())
    }

    /// `O_k = d ln Psi / d p_k` in flat parameter order.
    pub fn log_derivatives(&self, s: &SpinConfig, cache: &ThetaCache) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n_params()];
        self.log_derivatives_into(s, cache, &mut out);
        out
    }

    pub(crate) fn log_derivatives_into(&self, s: &SpinConfig, cache: &ThetaCache, out: &mut [C64]) {
        let (n, m) = (self.n_visible, self.n_hidden);
        for (o, &sj) in out[..n].iter_mut().zip(s.iter()) {
            *o = C64::new(sj as f64, 0.0);
        }
        out[n..n + m].copy_from_slice(&cache.tanh);
        for (i, &t) in cache.tanh.iter().enumerate() {
            let row = &mut out[n + m + i * n..n + m + (i + 1) * n];
            for (o, &sj) in row.iter_mut().zip(s.iter()) {
                *o = if sj > 0 { t } else { -t };
            }
        }
    }

    /// Flip spin `k`: `a_k -> -a_k`, `W_ik -> -W_ik`. The new amplitude at `S`
    /// is exactly the old amplitude at `S` with `s_k` flipped.
    pub fn apply_sigma_x(&self, k: usize) -> Result<Self> {
        self.check_site(k)?;
        let mut out = self.clone();
        out.params[k] = -out.params[k];
        let (n, w0) = (self.n_visible, self.w_offset());
        for i in 0..self.n_hidden {
            let idx = w0 + i * n + k;
            out.params[idx] = -out.params[idx];
        }
        Ok(out)
    }

    /// `a_k -> a_k + i pi/2`, giving `Psi'(S) = i s_k Psi(S)`: sigma-z with a
    /// global factor `i`.
    pub fn apply_sigma_z(&self, k: usize) -> Result<Self> {
        self.check_site(k)?;
        let mut out = self.clone();
        out.params[k] += C64::new(0.0, HALF_PI);
        Ok(out)
    }

    /// sigma-z update followed by sigma-x update. Since `i sigma_x sigma_z =
    /// sigma_y`, the result is exactly `sigma_y Psi` with no extra constant:
    /// `Psi'(S) = -i s_k Psi(flip_k S)`.
    pub fn apply_sigma_y(&self, k: usize) -> Result<Self> {
        self.apply_sigma_z(k)?.apply_sigma_x(k)
    }

    /// Apply a single-site Pauli operator through the update rules above.
    pub fn apply(&self, op: PauliOp) -> Result<Self> {
        self.apply_pauli(op.pauli, op.site)
    }

    pub fn apply_pauli(&self, pauli: Pauli, k: usize) -> Result<Self> {
        match pauli {
            Pauli::X => self.apply_sigma_x(k),
            Pauli::Y => self.apply_sigma_y(k),
            Pauli::Z => self.apply_sigma_z(k),
        }
    }
}

/// Single-site Pauli operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    /// Global constant picked up when the operator is applied through
    /// [`RbmState::apply_pauli`]: `Psi' = c * (sigma Psi)`.
    pub fn rbm_phase(self) -> C64 {
        match self {
            Pauli::X | Pauli::Y => C64::new(1.0, 0.0),
            Pauli::Z => C64::new(0.0, 1.0),
        }
    }
}

impl std::fmt::Display for Pauli {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pauli::X => "x",
            Pauli::Y => "y",
            Pauli::Z => "z",
        })
    }
}

impl std::str::FromStr for Pauli {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" | "sx" | "sigma_x" => Ok(Pauli::X),
            "y" | "sy" | "sigma_y" => Ok(Pauli::Y),
            "z" | "sz" | "sigma_z" => Ok(Pauli::Z),
            other => Err(Error::Format(format!("unknown Pauli operator '{other}'"))),
        }
    }
}

/// A Pauli operator acting on one site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct PauliOp {
    pub pauli: Pauli,
    pub site: usize,
}

impl PauliOp {
    pub fn new(pauli: Pauli, site: usize) -> Self {
        PauliOp { pauli, site }
    }
}

impl std::fmt::Display for PauliOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "sigma_{}[{}]", self.pauli, self.site)
    }
}

/// Cached `theta_i` and `tanh(theta_i)` for one `(state, configuration)` pair.
#[derive(Clone, Debug)]
pub struct ThetaCache {
    theta: Vec<C64>,
    tanh: Vec<C64>,
}

impl ThetaCache {
    fn new(psi: &RbmState, s: &SpinConfig) -> Self {
        let n = psi.n_visible;
        let theta: Vec<C64> = psi
            .b()
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let row = &psi.w()[i * n..(i + 1) * n];
                b + row
                    .iter()
                    .zip(s.iter())
                    .map(|(w, &sj)| if sj > 0 { *w } else { -*w })
                    .sum::<C64>()
            })
            .collect();
        let tanh = theta.iter().map(|t| t.tanh()).collect();
        ThetaCache { theta, tanh }
    }

    pub fn theta(&self) -> &[C64] {
        &self.theta
    }

    pub fn tanh(&self) -> &[C64] {
        &self.tanh
    }

    /// Update after flipping site `k`, whose spin was `old_spin` before the
    /// flip.
    pub(crate) fn flip(&mut self, psi: &RbmState, k: usize, old_spin: i8) {
        let n = psi.n_visible;
        let w = psi.w();
        let factor = 2.0 * old_spin as f64;
        for (i, (t, th)) in self.theta.iter_mut().zip(self.tanh.iter_mut()).enumerate() {
            *t -= w[i * n + k] * factor;
            *th = t.tanh();
        }
    }

    /// Largest relative deviation from a from-scratch recomputation.
    pub fn drift(&self, psi: &RbmState, s: &SpinConfig) -> f64 {
        let fresh = ThetaCache::new(psi, s);
        self.theta
            .iter()
            .zip(&fresh.theta)
            .map(|(a, b)| (a - b).norm() / b.norm().max(1.0))
            .fold(0.0, f64::max)
    }
}

/// Precomputed `cosh(2 W_ik)` and `sinh(2 W_ik)` for fast single-flip ratios
/// through `cosh(theta - x) / cosh(theta) = cosh x - tanh(theta) sinh x`.
#[derive(Clone, Debug)]
pub struct FlipTable {
    n_visible: usize,
    // column-major (site k contiguous over hidden units)
    cosh2w: Vec<C64>,
    sinh2w: Vec<C64>,
    exp2a: Vec<C64>,
}

impl FlipTable {
    pub fn new(psi: &RbmState) -> Self {
        let (n, m) = (psi.n_visible, psi.n_hidden);
        let mut cosh2w = Vec::with_capacity(n * m);
        let mut sinh2w = Vec::with_capacity(n * m);
        for k in 0..n {
            for i in 0..m {
                let x = 2.0 * psi.w_at(i, k);
                cosh2w.push(x.cosh());
                sinh2w.push(x.sinh());
            }
        }
        let exp2a = psi.a().iter().map(|a| (2.0 * a).exp()).collect();
        FlipTable { n_visible: n, cosh2w, sinh2w, exp2a }
    }

    /// `Psi(flip_k S) / Psi(S)`.
    ///
    /// Falls back to the log-domain evaluation if the direct product leaves
    /// the finite, non-zero range.
    #[inline]
    pub fn single_flip_ratio(&self, psi: &RbmState, s: &SpinConfig, cache: &ThetaCache, k: usize) -> C64 {
        debug_assert!(k < self.n_visible);
        let m = cache.tanh.len();
        let ch = &self.cosh2w[k * m..(k + 1) * m];
        let sh = &self.sinh2w[k * m..(k + 1) * m];
        let sk = s[k];
        let mut prod = if sk > 0 { C64::new(1.0, 0.0) / self.exp2a[k] } else { self.exp2a[k] };
        if sk > 0 {
            for ((c, h), t) in ch.iter().zip(sh).zip(&cache.tanh) {
                prod *= c - t * h;
            }
        } else {
            for ((c, h), t) in ch.iter().zip(sh).zip(&cache.tanh) {
                prod *= c + t * h;
            }
        }
        let norm = prod.norm();
        if norm.is_finite() && norm > 1e-250 && norm < 1e250 {
            prod
        } else {
            psi.log_ratio(s, cache, &[k]).map(|l| l.exp()).unwrap_or(prod)
        }
    }
}
