//! Quantized LLR densities and the variable-/check-node convolutions.
//!
//! A density lives on the uniform grid `{k * delta : -n <= k <= n}` with
//! `Lambda = n * delta`, plus two explicit cells for exact knowledge at
//! `+inf` and `-inf`. Sums that leave `[-Lambda, Lambda]` are saturated
//! into the boundary cells; the infinite cells are only reached from
//! infinite inputs.

mod check;
mod var;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use check::{chk_conv, chk_power, CheckTable};
pub(crate) use var::{Spectrum, VarFft};

/// Uniform LLR quantization grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Cell spacing.
    pub delta: f64,
    /// Number of positive cells `n`; the finite range is `[-n*delta, n*delta]`.
    pub half_cells: usize,
}

impl Default for Grid {
    /// `Lambda = 30`, `delta = 60 / 2^12`.
    fn default() -> Self {
        Grid { delta: 60.0 / 4096.0, half_cells: 2048 }
    }
}

impl Grid {
    pub fn new(delta: f64, half_cells: usize) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) || half_cells == 0 {
            return Err(Error::Config(format!("invalid grid: delta {delta}, half_cells {half_cells}")));
        }
        Ok(Grid { delta, half_cells })
    }

    /// Grid covering `[-max_llr, max_llr]` with `2 * half_cells` intervals.
    pub fn with_range(max_llr: f64, half_cells: usize) -> Result<Self> {
        Grid::new(max_llr / half_cells as f64, half_cells)
    }

    pub fn max_llr(&self) -> f64 {
        self.delta * self.half_cells as f64
    }

    /// Number of finite cells, `2n + 1`.
    pub fn len(&self) -> usize {
        2 * self.half_cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// LLR value of finite cell `idx` (`0..len`).
    #[inline]
    pub fn value(&self, idx: usize) -> f64 {
        (idx as f64 - self.half_cells as f64) * self.delta
    }

    /// Nearest finite cell, saturating at the boundary.
    #[inline]
    pub fn index_of(&self, llr: f64) -> usize {
        let n = self.half_cells as f64;
        ((llr / self.delta).round().clamp(-n, n) + n) as usize
    }

    fn key(&self) -> (u64, usize) {
        (self.delta.to_bits(), self.half_cells)
    }

    /// Check-node table for this grid, built once per process.
    pub fn check_table(&self) -> Arc<CheckTable> {
        static TABLES: OnceLock<Mutex<HashMap<(u64, usize), Arc<CheckTable>>>> = OnceLock::new();
        let mut map = TABLES.get_or_init(Default::default).lock().unwrap();
        map.entry(self.key()).or_insert_with(|| Arc::new(CheckTable::new(*self))).clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaKind {
    PlusInfinity,
    Zero,
}

/// Probability distribution of an LLR on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlrDensity {
    #[serde(flatten)]
    pub grid: Grid,
    /// Mass of finite cell `k` at index `k + n`.
    pub pmf: Vec<f64>,
    pub plus_inf: f64,
    pub minus_inf: f64,
}

impl LlrDensity {
    pub fn zeros(grid: Grid) -> Self {
        LlrDensity { grid, pmf: vec![0.0; grid.len()], plus_inf: 0.0, minus_inf: 0.0 }
    }

    pub fn delta(grid: Grid, kind: DeltaKind) -> Self {
        let mut d = Self::zeros(grid);
        match kind {
            DeltaKind::PlusInfinity => d.plus_inf = 1.0,
            DeltaKind::Zero => d.pmf[grid.half_cells] = 1.0,
        }
        d
    }

    /// Unit mass at the cell nearest to `llr` (saturating).
    pub fn point(grid: Grid, llr: f64) -> Self {
        let mut d = Self::zeros(grid);
        if llr == f64::INFINITY {
            d.plus_inf = 1.0;
        } else if llr == f64::NEG_INFINITY {
            d.minus_inf = 1.0;
        } else {
            d.pmf[grid.index_of(llr)] = 1.0;
        }
        d
    }

    pub fn total_mass(&self) -> f64 {
        self.pmf.iter().sum::<f64>() + self.plus_inf + self.minus_inf
    }

    pub fn finite_mass(&self) -> f64 {
        self.pmf.iter().sum()
    }

    /// Probability of a wrong hard decision, ties counted as one half.
    pub fn error_prob(&self) -> f64 {
        let n = self.grid.half_cells;
        self.minus_inf + self.pmf[..n].iter().sum::<f64>() + 0.5 * self.pmf[n]
    }

    /// Mean of the finite part, normalized by the finite mass.
    pub fn mean(&self) -> f64 {
        let f = self.finite_mass();
        self.pmf.iter().enumerate().map(|(i, p)| p * self.grid.value(i)).sum::<f64>() / f
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let f = self.finite_mass();
        self.pmf.iter().enumerate().map(|(i, p)| p * (self.grid.value(i) - mu).powi(2)).sum::<f64>() / f
    }

    pub fn ensure_same_grid(&self, other: &LlrDensity) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Total-variation style distance `sum |a - b|` over all cells.
    pub fn l1_distance(&self, other: &LlrDensity) -> f64 {
        self.pmf.iter().zip(&other.pmf).map(|(a, b)| (a - b).abs()).sum::<f64>()
            + (self.plus_inf - other.plus_inf).abs()
            + (self.minus_inf - other.minus_inf).abs()
    }

    /// `sum_{x > 0} |a(-x) - a(x) e^{-x}|`; zero for a symmetric density.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.grid.half_cells;
        let mut r = self.minus_inf;
        for k in 1..=n {
            let x = k as f64 * self.grid.delta;
            r += (self.pmf[n - k] - self.pmf[n + k] * (-x).exp()).abs();
        }
        r
    }

    /// The density of `-L`.
    pub fn flipped(&self) -> Self {
        let mut pmf = self.pmf.clone();
        pmf.reverse();
        LlrDensity { grid: self.grid, pmf, plus_inf: self.minus_inf, minus_inf: self.plus_inf }
    }

    pub fn scale_mut(&mut self, w: f64) {
        self.pmf.iter_mut().for_each(|p| *p *= w);
        self.plus_inf *= w;
        self.minus_inf *= w;
    }

    /// `self += w * other`.
    pub fn add_scaled(&mut self, w: f64, other: &LlrDensity) -> Result<()> {
        self.ensure_same_grid(other)?;
        self.pmf.iter_mut().zip(&other.pmf).for_each(|(a, b)| *a += w * b);
        self.plus_inf += w * other.plus_inf;
        self.minus_inf += w * other.minus_inf;
        Ok(())
    }

    /// Weighted mixture `sum_i w_i d_i`.
    pub fn mixture<'a, I>(grid: Grid, parts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, &'a LlrDensity)>,
    {
        let mut out = Self::zeros(grid);
        for (w, d) in parts {
            out.add_scaled(w, d)?;
        }
        Ok(out)
    }

    /// Arithmetic mean of equally weighted densities.
    pub fn average(parts: &[LlrDensity]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Config("average of no densities".into()))?;
        let w = 1.0 / parts.len() as f64;
        Self::mixture(first.grid, parts.iter().map(|d| (w, d)))
    }

    /// Clamp round-off negatives and rescale to unit mass.
    pub fn normalize(&mut self) {
        self.pmf.iter_mut().for_each(|p| *p = p.max(0.0));
        self.plus_inf = self.plus_inf.max(0.0);
        self.minus_inf = self.minus_inf.max(0.0);
        let t = self.total_mass();
        if t > 0.0 {
            self.scale_mut(t.recip());
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: LlrDensity = serde_json::from_str(s)?;
        if d.pmf.len() != d.grid.len() {
            return Err(Error::Config(format!("density has {} cells, grid expects {}", d.pmf.len(), d.grid.len())));
        }
        Ok(d)
    }

    pub fn sampler(&self) -> LlrSampler {
        LlrSampler::new(self)
    }
}

/// Accumulates LLR samples into a density.
#[derive(Debug, Clone)]
pub struct LlrHistogram {
    grid: Grid,
    counts: Vec<f64>,
    plus_inf: f64,
    minus_inf: f64,
    n: u64,
}

impl LlrHistogram {
    pub fn new(grid: Grid) -> Self {
        LlrHistogram { grid, counts: vec![0.0; grid.len()], plus_inf: 0.0, minus_inf: 0.0, n: 0 }
    }

    #[inline]
    pub fn add(&mut self, llr: f64) {
        self.n += 1;
        if llr == f64::INFINITY {
            self.plus_inf += 1.0;
        } else if llr == f64::NEG_INFINITY {
            self.minus_inf += 1.0;
        } else {
            debug_assert!(!llr.is_nan());
            self.counts[self.grid.index_of(llr)] += 1.0;
        }
    }

    pub fn merge(&mut self, other: &LlrHistogram) {
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        self.plus_inf += other.plus_inf;
        self.minus_inf += other.minus_inf;
        self.n += other.n;
    }

    pub fn samples(&self) -> u64 {
        self.n
    }

    pub fn into_density(self) -> LlrDensity {
        let mut d = LlrDensity { grid: self.grid, pmf: self.counts, plus_inf: self.plus_inf, minus_inf: self.minus_inf };
        if self.n > 0 {
            d.scale_mut(1.0 / self.n as f64);
        }
        d
    }
}

/// Inverse-CDF sampler over the cells of a density.
#[derive(Debug, Clone)]
pub struct LlrSampler {
    cdf: Vec<f64>,
    values: Vec<f64>,
}

impl LlrSampler {
    fn new(d: &LlrDensity) -> Self {
        let mut cdf = Vec::with_capacity(d.pmf.len() + 2);
        let mut values = Vec::with_capacity(d.pmf.len() + 2);
        let mut acc = 0.0;
        let mut push = |p: f64, v: f64| {
            if p > 0.0 {
                acc += p;
                cdf.push(acc);
                values.push(v);
            }
        };
        push(d.minus_inf, f64::NEG_INFINITY);
        for (i, &p) in d.pmf.iter().enumerate() {
            push(p, d.grid.value(i));
        }
        push(d.plus_inf, f64::INFINITY);
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        LlrSampler { cdf, values }
    }

    /// Maps a uniform variate in `[0, 1)` to an LLR value.
    #[inline]
    pub fn sample_with(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= u);
        self.values[i.min(self.values.len() - 1)]
    }

    /// True if every sample is `+inf`.
    pub fn is_perfect(&self) -> bool {
        self.values.len() == 1 && self.values[0] == f64::INFINITY
    }

    /// True if every sample is exactly zero.
    pub fn is_erasure(&self) -> bool {
        self.values.len() == 1 && self.values[0] == 0.0
    }
}

/// Degree distributions of an LDPC ensemble.
///
/// `lambda[i]` (`rho[i]`) is the fraction of edges attached to variable
/// (check) nodes of degree `i`; `node_l[i]` the fraction of variable nodes
/// of degree `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeProfile {
    pub lambda: Vec<f64>,
    pub rho: Vec<f64>,
    pub node_l: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Lambda,
    Rho,
    NodeL,
}

fn check_coeffs(name: &str, c: &[f64]) -> Result<()> {
    if c.iter().all(|&x| x == 0.0) {
        return Err(Error::Config(format!("{name} profile is empty")));
    }
    if c.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::Config(format!("{name} profile has negative coefficients")));
    }
    if c.first().is_some_and(|&x| x != 0.0) {
        return Err(Error::Config(format!("{name} profile has a degree-0 coefficient")));
    }
    let s: f64 = c.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{name} coefficients sum to {s}, expected 1")));
    }
    Ok(())
}

impl DegreeProfile {
    /// Builds a profile from edge-perspective coefficients indexed by degree.
    pub fn new(lambda: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        check_coeffs("lambda", &lambda)?;
        check_coeffs("rho", &rho)?;
        let w: Vec<f64> = lambda.iter().enumerate().map(|(i, &l)| if i == 0 { 0.0 } else { l / i as f64 }).collect();
        let s: f64 = w.iter().sum();
        let node_l = w.iter().map(|x| x / s).collect();
        Ok(DegreeProfile { lambda, rho, node_l })
    }

    pub fn regular(dl: usize, dr: usize) -> Result<Self> {
        if dl < 1 || dr < 2 {
            return Err(Error::Config(format!("invalid regular degrees ({dl}, {dr})")));
        }
        let mut lambda = vec![0.0; dl + 1];
        lambda[dl] = 1.0;
        let mut rho = vec![0.0; dr + 1];
        rho[dr] = 1.0;
        Self::new(lambda, rho)
    }

    /// `1 - (int rho) / (int lambda)`.
    pub fn design_rate(&self) -> f64 {
        let int = |c: &[f64]| c.iter().enumerate().skip(1).map(|(i, x)| x / i as f64).sum::<f64>();
        1.0 - int(&self.rho) / int(&self.lambda)
    }

    pub fn coeffs(&self, which: ProfileKind) -> &[f64] {
        match which {
            ProfileKind::Lambda => &self.lambda,
            ProfileKind::Rho => &self.rho,
            ProfileKind::NodeL => &self.node_l,
        }
    }

    /// `Some((dl, dr))` for a regular profile.
    pub fn regular_degrees(&self) -> Option<(usize, usize)> {
        let single = |c: &[f64]| {
            let nz: Vec<usize> = c.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(i, _)| i).collect();
            (nz.len() == 1).then(|| nz[0])
        };
        Some((single(&self.lambda)?, single(&self.rho)?))
    }

    pub fn max_left_degree(&self) -> usize {
        self.lambda.len() - 1
    }
}

/// `a ⊛ b`: density of the sum of independent LLRs.
pub fn var_conv(a: &LlrDensity, b: &LlrDensity) -> Result<LlrDensity> {
    a.ensure_same_grid(b)?;
    let fft = VarFft::for_factors(a.grid, 2);
    Ok(fft.inverse(&fft.forward(a).mul(&fft.forward(b))))
}

/// `a^{⊛k}` (`k = 0` gives `Δ_0`).
pub fn var_power(a: &LlrDensity, k: usize) -> LlrDensity {
    if k == 0 {
        return LlrDensity::delta(a.grid, DeltaKind::Zero);
    }
    let fft = VarFft::for_factors(a.grid, k);
    fft.inverse(&fft.forward(a).powi(k))
}

/// Applies `lambda(x) = sum lambda_i x^{⊛(i-1)}`, `rho(x) = sum rho_i
/// x^{⊞(i-1)}` or `L(x) = sum L_i x^{⊛i}` to a density.
pub fn apply_profile(profile: &DegreeProfile, which: ProfileKind, a: &LlrDensity) -> Result<LlrDensity> {
    let coeffs = profile.coeffs(which);
    if coeffs.iter().all(|&c| c == 0.0) {
        return Err(Error::Config("empty profile".into()));
    }
    match which {
        ProfileKind::Rho => {
            let dmax = coeffs.len() - 1;
            let regular = coeffs.iter().filter(|&&c| c > 0.0).count() == 1;
            if regular {
                return Ok(chk_power(a, dmax - 1));
            }
            let mut out = LlrDensity::zeros(a.grid);
            let mut pow = LlrDensity::delta(a.grid, DeltaKind::PlusInfinity);
            for (i, &c) in coeffs.iter().enumerate().skip(1) {
                if i >= 2 {
                    pow = chk_conv(&pow, a)?;
                }
                if c > 0.0 {
                    out.add_scaled(c, &pow)?;
                }
            }
            Ok(out)
        }
        ProfileKind::Lambda | ProfileKind::NodeL => {
            let shift = usize::from(which == ProfileKind::Lambda);
            let dmax = coeffs.len() - 1 - shift;
            let fft = VarFft::for_factors(a.grid, dmax.max(1));
            let s = fft.forward(a);
            let poly: Vec<(usize, f64)> = coeffs.iter().enumerate().filter(|(_, &c)| c > 0.0).map(|(i, &c)| (i - shift, c)).collect();
            Ok(fft.inverse(&s.polynomial(&poly)))
        }
    }
}
