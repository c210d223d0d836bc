//! AR(+GARCH) return simulators with Toeplitz cross-correlation.
//!
//! Benchmarks follow `r1_t = phi r1_{t-1} + L1 g1_t` and residuals
//! `eta_t = phi eta_{t-1} + L2 g2_t`, where `g = d * nu` with either unit
//! or GARCH(1,1) scales `d^2_t = 0.1 + 0.1 g^2_{t-1} + 0.8 d^2_{t-1}` and
//! `L` is the Cholesky factor of `(rho^{|i-j|})`. Test assets are
//! `r2 = alpha + beta r1 + eta`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::distributions::ln_gamma;
use crate::error::{Error, Result};
use crate::panel::ReturnPanel;

pub const SKEW_XI: f64 = 0.9;
pub const SKEW_NU: f64 = 4.0;
pub const GARCH_OMEGA: f64 = 0.1;
pub const GARCH_ARCH: f64 = 0.1;
pub const GARCH_GARCH: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Innovation {
    Normal,
    /// Student-t with 5 degrees of freedom, scaled to unit variance.
    Student5,
    /// Fernandez-Steel skewed Student-t (`xi = 0.9`, `nu = 4`), standardized.
    Skewst,
}

impl Innovation {
    pub fn short(self) -> &'static str {
        match self {
            Innovation::Normal => "N",
            Innovation::Student5 => "ST",
            Innovation::Skewst => "SKST",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub name: String,
    pub k: usize,
    pub n: usize,
    pub t: usize,
    pub phi: f64,
    pub garch: bool,
    pub innovation: Innovation,
    pub rho1: f64,
    pub rho2: f64,
    /// Sparse alternative: `alpha_i = delta_i = a` for the first `floor(N/2)`
    /// test assets. Zero gives the null.
    pub alternative_a: f64,
    pub burn_in: usize,
}

impl Default for DgpSpec {
    fn default() -> Self {
        DgpSpec {
            name: "DGP1".into(),
            k: 2,
            n: 2,
            t: 250,
            phi: 0.0,
            garch: false,
            innovation: Innovation::Normal,
            rho1: 0.8,
            rho2: 0.5,
            alternative_a: 0.0,
            burn_in: 500,
        }
    }
}

impl DgpSpec {
    pub fn with_dims(mut self, k: usize, n: usize, t: usize) -> Self {
        self.k = k;
        self.n = n;
        self.t = t;
        self
    }

    pub fn with_alternative(mut self, a: f64) -> Self {
        self.alternative_a = a;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 {
            return Err(Error::InvalidInput("K and N must be at least 1".into()));
        }
        if self.t < 2 {
            return Err(Error::InvalidInput("T must be at least 2".into()));
        }
        if !(self.phi.abs() < 1.0) {
            return Err(Error::InvalidInput(format!("AR coefficient {} is not stationary", self.phi)));
        }
        if !(self.rho1.abs() < 1.0 && self.rho2.abs() < 1.0) {
            return Err(Error::NotPositiveDefinite);
        }
        if !self.alternative_a.is_finite() {
            return Err(Error::InvalidInput("alternative_a must be finite".into()));
        }
        Ok(())
    }

    /// Number of test assets with nonzero `(alpha_i, delta_i)`.
    pub fn active_assets(&self) -> usize {
        if self.alternative_a == 0.0 {
            0
        } else {
            self.n / 2
        }
    }

    /// `(alpha_i, delta_i)` for test asset `i` (0-based).
    pub fn alpha_delta(&self, i: usize) -> (f64, f64) {
        if i < self.active_assets() {
            (self.alternative_a, self.alternative_a)
        } else {
            (0.0, 0.0)
        }
    }

    /// Loading of test asset `i` on benchmark 1: `1 - delta_i - (K - 1)`.
    pub fn beta_first(&self, i: usize) -> f64 {
        let (_, delta) = self.alpha_delta(i);
        2.0 - self.k as f64 - delta
    }
}

/// Dense lower-triangular Cholesky factor of the Toeplitz matrix
/// `(rho^{|i-j|})`.
pub fn toeplitz_cholesky(rho: f64, n: usize) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::NotPositiveDefinite);
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let c = (1.0 - rho * rho).sqrt();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if j > i {
            0.0
        } else if j == 0 {
            rho.powi(i as i32)
        } else {
            rho.powi((i - j) as i32) * c
        }
    }))
}

/// In-place `z <- L z` for the Toeplitz factor, in O(n).
pub fn apply_toeplitz_factor(rho: f64, z: &mut [f64]) {
    let c = (1.0 - rho * rho).sqrt();
    for i in 1..z.len() {
        z[i] = rho * z[i - 1] + c * z[i];
    }
}

fn student5() -> StudentT<f64> {
    StudentT::new(5.0).expect("positive degrees of freedom")
}

fn student_skew() -> StudentT<f64> {
    StudentT::new(SKEW_NU).expect("positive degrees of freedom")
}

/// Mean and standard deviation of the unstandardized two-piece variable
/// built from a unit-variance t.
pub fn skew_t_moments(xi: f64, nu: f64) -> (f64, f64) {
    let m1 = (ln_gamma((nu - 1.0) / 2.0) - ln_gamma(nu / 2.0)).exp() * (nu - 2.0).sqrt() / PI.sqrt();
    let m = m1 * (xi - 1.0 / xi);
    let s2 = xi * xi + 1.0 / (xi * xi) - 1.0 - m * m;
    (m, s2.sqrt())
}

struct Sampler {
    family: Innovation,
    st5: StudentT<f64>,
    st_skew: StudentT<f64>,
    st5_scale: f64,
    skew_unit: f64,
    skew_m: f64,
    skew_s: f64,
    p_positive: f64,
}

impl Sampler {
    fn new(family: Innovation) -> Self {
        let (skew_m, skew_s) = skew_t_moments(SKEW_XI, SKEW_NU);
        Sampler {
            family,
            st5: student5(),
            st_skew: student_skew(),
            st5_scale: (3.0_f64 / 5.0).sqrt(),
            skew_unit: ((SKEW_NU - 2.0) / SKEW_NU).sqrt(),
            skew_m,
            skew_s,
            p_positive: SKEW_XI * SKEW_XI / (1.0 + SKEW_XI * SKEW_XI),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            Innovation::Normal => rng.sample(StandardNormal),
            Innovation::Student5 => self.st5.sample(rng) * self.st5_scale,
            Innovation::Skewst => {
                let u = (self.st_skew.sample(rng) * self.skew_unit).abs();
                let x = if rng.random::<f64>() < self.p_positive { SKEW_XI * u } else { -u / SKEW_XI };
                (x - self.skew_m) / self.skew_s
            }
        }
    }
}

/// `count` independent mean-zero, unit-variance draws.
pub fn draw_innovations<R: Rng + ?Sized>(family: Innovation, count: usize, rng: &mut R) -> Vec<f64> {
    let s = Sampler::new(family);
    (0..count).map(|_| s.draw(rng)).collect()
}

/// Per-series GARCH(1,1) scale recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct GarchState {
    pub d_sq: Vec<f64>,
    pub g_prev: Vec<f64>,
}

impl GarchState {
    /// Starts at the unconditional variance: `d^2 = g^2 = 1`.
    pub fn new(n: usize) -> Self {
        GarchState { d_sq: vec![1.0; n], g_prev: vec![1.0; n] }
    }

    /// Turns innovations `nu` into `g = d nu` in place, advancing the state.
    pub fn step(&mut self, nu: &mut [f64]) {
        for ((d_sq, g_prev), x) in self.d_sq.iter_mut().zip(self.g_prev.iter_mut()).zip(nu.iter_mut()) {
            *d_sq = GARCH_OMEGA + GARCH_ARCH * *g_prev * *g_prev + GARCH_GARCH * *d_sq;
            *x *= d_sq.sqrt();
            *g_prev = *x;
        }
    }
}

struct Block {
    rho: f64,
    state: Vec<f64>,
    garch: Option<GarchState>,
    buf: Vec<f64>,
}

impl Block {
    fn new(n: usize, rho: f64, garch: bool) -> Self {
        Block { rho, state: vec![0.0; n], garch: garch.then(|| GarchState::new(n)), buf: vec![0.0; n] }
    }

    fn advance<R: Rng + ?Sized>(&mut self, phi: f64, sampler: &Sampler, rng: &mut R) {
        for x in self.buf.iter_mut() {
            *x = sampler.draw(rng);
        }
        if let Some(g) = self.garch.as_mut() {
            g.step(&mut self.buf);
        }
        apply_toeplitz_factor(self.rho, &mut self.buf);
        for (s, e) in self.state.iter_mut().zip(&self.buf) {
            *s = phi * *s + e;
        }
    }
}

pub fn simulate_panel(spec: &DgpSpec, seed: u64) -> Result<ReturnPanel> {
    spec.validate()?;
    let (k, n, t) = (spec.k, spec.n, spec.t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = Sampler::new(spec.innovation);
    let mut bench = Block::new(k, spec.rho1, spec.garch);
    let mut resid = Block::new(n, spec.rho2, spec.garch);
    let ad: Vec<(f64, f64)> = (0..n).map(|i| spec.alpha_delta(i)).collect();
    let beta1: Vec<f64> = (0..n).map(|i| spec.beta_first(i)).collect();

    let mut out = DMatrix::zeros(t, k + n);
    for step in 0..spec.burn_in + t {
        bench.advance(spec.phi, &sampler, &mut rng);
        resid.advance(spec.phi, &sampler, &mut rng);
        if step < spec.burn_in {
            continue;
        }
        let row = step - spec.burn_in;
        let r1 = &bench.state;
        let rest: f64 = r1[1..].iter().sum();
        for (j, v) in r1.iter().enumerate() {
            out[(row, j)] = *v;
        }
        for i in 0..n {
            out[(row, k + i)] = ad[i].0 + beta1[i] * r1[0] + rest + resid.state[i];
        }
    }
    ReturnPanel::new(out, k, None)
}

/// The twelve templates: {i.i.d., GARCH, AR, AR-GARCH} x {N, ST, SKST}.
pub fn dgp_catalog() -> Vec<DgpSpec> {
    let families = [Innovation::Normal, Innovation::Student5, Innovation::Skewst];
    let dynamics = [(0.0, false), (0.0, true), (0.2, false), (0.2, true)];
    let mut out = Vec::with_capacity(12);
    for (phi, garch) in dynamics {
        for innovation in families {
            out.push(DgpSpec {
                name: format!("DGP{}", out.len() + 1),
                phi,
                garch,
                innovation,
                ..DgpSpec::default()
            });
        }
    }
    out
}

/// Catalog entry by name (`"DGP7"`, case-insensitive) or 1-based number.
pub fn catalog_entry(name: &str) -> Result<DgpSpec> {
    let upper = name.trim().to_ascii_uppercase();
    let digits = upper.strip_prefix("DGP").unwrap_or(&upper);
    let idx: usize = digits
        .parse()
        .map_err(|_| Error::InvalidInput(format!("unknown DGP '{name}'")))?;
    dgp_catalog()
        .into_iter()
        .nth(idx.wrapping_sub(1))
        .ok_or_else(|| Error::InvalidInput(format!("DGP index {idx} outside 1..=12")))
}

pub fn describe(spec: &DgpSpec) -> String {
    let dynamics = match (spec.phi != 0.0, spec.garch) {
        (false, false) => "i.i.d.",
        (false, true) => "GARCH",
        (true, false) => "AR",
        (true, true) => "AR-GARCH",
    };
    format!("{dynamics} {}", spec.innovation.short())
}
