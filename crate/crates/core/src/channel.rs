//! The BICM channel `Y = A X + Z` with `Z ~ CN(0, sigma^2)` and either no
//! fading (`A = 1`) or Rayleigh fast fading (`A ~ CN(0, 1)`) known at the
//! receiver.
//!
//! Symbol energy is normalized to one, so `Es/N0 = 1 / sigma^2` and
//! `Eb/N0 = 1 / (R * M * sigma^2)` for a code of rate `R`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::demapper::axis;
use crate::parallel;
use crate::rng::{purpose, SeedStream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fading {
    #[serde(rename = "awgn")]
    None,
    #[serde(rename = "rayleigh")]
    Rayleigh,
}

impl Fading {
    pub fn name(self) -> &'static str {
        match self {
            Fading::None => "awgn",
            Fading::Rayleigh => "rayleigh",
        }
    }
}

impl fmt::Display for Fading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fading {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "awgn" | "none" => Ok(Fading::None),
            "rayleigh" | "fading" => Ok(Fading::Rayleigh),
            other => Err(Error::Config(format!("unsupported channel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub constellation: Constellation,
    pub fading: Fading,
    pub sigma: f64,
}

impl ChannelSpec {
    pub fn new(constellation: Constellation, fading: Fading, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::OutOfRange(format!("sigma must be positive and finite, got {sigma}")));
        }
        Ok(ChannelSpec { constellation, fading, sigma })
    }

    /// Same modulation and fading at another noise level.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        ChannelSpec::new(self.constellation.clone(), self.fading, sigma)
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.constellation.bits_per_symbol
    }
}

/// What the demapper sees: the received sample and the fading coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelObservation {
    pub y: Complex64,
    pub a: Complex64,
}

fn cn01<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn sample_output<R: Rng + ?Sized>(spec: &ChannelSpec, symbol: usize, rng: &mut R) -> ChannelObservation {
    let a = match spec.fading {
        Fading::None => Complex64::new(1.0, 0.0),
        Fading::Rayleigh => cn01(rng),
    };
    let z = cn01(rng) * spec.sigma;
    ChannelObservation { y: a * spec.constellation.symbols[symbol] + z, a }
}

/// One channel use reduced to the two equalized real axes.
///
/// With perfect CSI the receiver may divide by `a`; the equalized sample is
/// `u = x + sigma * w` with `w = z' / a`, `z' ~ CN(0, 1)`, and the per-axis
/// metric scale is `|a|^2 / sigma^2`. Keeping `w` independent of `sigma`
/// lets one draw be replayed at several noise levels.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AxisDraw {
    pub level: [usize; 2],
    pub w: [f64; 2],
    pub gain2: f64,
}

impl AxisDraw {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, levels: usize, fading: Fading) -> Self {
        let li = rng.random_range(0..levels);
        let lq = rng.random_range(0..levels);
        let a = match fading {
            Fading::None => Complex64::new(1.0, 0.0),
            Fading::Rayleigh => cn01(rng),
        };
        let w = cn01(rng) / a;
        AxisDraw { level: [li, lq], w: [w.re, w.im], gain2: a.norm_sqr() }
    }

    #[inline]
    pub fn received(&self, amplitudes: &[f64], axis: usize, sigma: f64) -> f64 {
        amplitudes[self.level[axis]] + sigma * self.w[axis]
    }
}

pub fn ebn0_to_sigma(ebn0_db: f64, rate: f64, bits_per_symbol: usize) -> Result<f64> {
    if !(rate > 0.0 && rate <= 1.0) || bits_per_symbol == 0 {
        return Err(Error::OutOfRange(format!("rate {rate} and bits per symbol {bits_per_symbol} must be positive")));
    }
    let ebn0 = 10f64.powf(ebn0_db / 10.0);
    Ok((rate * bits_per_symbol as f64 * ebn0).recip().sqrt())
}

pub fn sigma_to_ebn0(sigma: f64, rate: f64, bits_per_symbol: usize) -> Result<f64> {
    if !(rate > 0.0 && rate <= 1.0) || bits_per_symbol == 0 || !(sigma > 0.0) {
        return Err(Error::OutOfRange(format!("sigma {sigma}, rate {rate} and bits per symbol {bits_per_symbol} must be positive")));
    }
    Ok(-10.0 * (rate * bits_per_symbol as f64 * sigma * sigma).log10())
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

pub const MIN_ALPHA_SAMPLES: usize = 10_000;

/// Normalized channel entropy `H(X|Y) / M` (bits) by Monte Carlo.
///
/// Draws come from `seeds` (stream [`purpose::ALPHA`]), so two calls with the
/// same seed use common random numbers.
pub fn channel_entropy_alpha(spec: &ChannelSpec, n_samples: usize, seeds: &SeedStream) -> Result<Estimate> {
    if n_samples < MIN_ALPHA_SAMPLES {
        return Err(Error::InsufficientSamples { got: n_samples, min: MIN_ALPHA_SAMPLES });
    }
    let pam = spec.constellation.axis();
    let m = spec.bits_per_symbol() as f64;
    let work = |acc: &mut (f64, f64), chunk: u64, len: usize| {
        let mut rng = seeds.stream(purpose::ALPHA, chunk);
        let mut metrics = vec![0.0; pam.amplitudes.len()];
        for _ in 0..len {
            let d = AxisDraw::draw(&mut rng, pam.amplitudes.len(), spec.fading);
            let gamma = d.gain2 / (spec.sigma * spec.sigma);
            let mut h = 0.0;
            for ax in 0..2 {
                let u = d.received(&pam.amplitudes, ax, spec.sigma);
                axis::metrics(pam, u, gamma, &mut metrics);
                h += axis::neg_log2_posterior(&metrics, d.level[ax]);
            }
            let v = h / m;
            acc.0 += v;
            acc.1 += v * v;
        }
    };
    let (sum, sum2) = parallel::fold_chunks(
        n_samples,
        || (0.0, 0.0),
        work,
        |a, b| {
            a.0 += b.0;
            a.1 += b.1;
        },
    );
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0);
    Ok(Estimate { value: mean.clamp(0.0, 1.0), stderr: (var / n).sqrt(), samples: n_samples })
}

/// Noise level whose normalized entropy equals `alpha`, by bisection in
/// `ln sigma` on common random numbers (relative tolerance `1e-4`).
pub fn alpha_to_sigma(template: &ChannelSpec, alpha: f64, n_samples: usize, seeds: &SeedStream) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::OutOfRange(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let eval = |s: f64| -> Result<f64> { Ok(channel_entropy_alpha(&template.with_sigma(s)?, n_samples, seeds)?.value) };
    let (mut lo, mut hi) = (1e-2f64, 1.0f64);
    while eval(lo)? > alpha {
        lo /= 4.0;
        if lo < 1e-8 {
            return Err(Error::NonConvergence("alpha_to_sigma: lower bracket".into()));
        }
    }
    while eval(hi)? < alpha {
        hi *= 4.0;
        if hi > 1e8 {
            return Err(Error::NonConvergence("alpha_to_sigma: upper bracket".into()));
        }
    }
    while hi / lo > 1.0 + 1e-4 {
        let mid = (lo * hi).sqrt();
        if eval(mid)? < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Per-axis entropy `H(level | u)` in bits for `u = a + s n`, `n ~ N(0, 1)`,
/// by the trapezoid rule over `n` (spectrally accurate for this integrand).
fn axis_entropy(amplitudes: &[f64], s: f64) -> f64 {
    const H: f64 = 0.1;
    const T: f64 = 10.0;
    let steps = (2.0 * T / H) as usize;
    let inv = 1.0 / (2.0 * s * s);
    let mut acc = 0.0;
    for &a in amplitudes {
        for i in 0..=steps {
            let t = -T + i as f64 * H;
            let n = s * t;
            // -log2 P(a | u) = log2 sum_b exp(((a - u)^2 - (b - u)^2) / 2s^2)
            let e: Vec<f64> = amplitudes.iter().map(|&b| (n * n - (a - b + n) * (a - b + n)) * inv).collect();
            let mx = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + e.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
            acc += (-0.5 * t * t).exp() * lse;
        }
    }
    acc * H / (2.0 * std::f64::consts::PI).sqrt() / amplitudes.len() as f64 * std::f64::consts::LOG2_E
}

/// Normalized channel entropy `H(X|Y) / M` by deterministic quadrature.
///
/// Exploits the per-axis factorization of square Gray QAM. Under fading the
/// gain `g = |a|^2 ~ Exp(1)` is integrated by the trapezoid rule in `ln g`.
pub fn channel_entropy_quadrature(spec: &ChannelSpec) -> f64 {
    let pam = spec.constellation.axis();
    let m = spec.bits_per_symbol() as f64;
    // equalized per-axis noise variance is sigma^2 / (2 g)
    let per_axis = |g: f64| axis_entropy(&pam.amplitudes, spec.sigma / (2.0 * g).sqrt());
    let h = match spec.fading {
        Fading::None => per_axis(1.0),
        Fading::Rayleigh => {
            let (x0, x1, steps) = (1e-7f64.ln(), 60f64.ln(), 160);
            let dx = (x1 - x0) / steps as f64;
            // the region below g0 sees no signal: entropy log2 K there
            let g0 = x0.exp();
            let mut acc = (1.0 - (-g0).exp()) * pam.bits as f64;
            for i in 0..=steps {
                let g = (x0 + i as f64 * dx).exp();
                let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                acc += w * dx * g * (-g).exp() * per_axis(g);
            }
            acc
        }
    };
    (2.0 * h / m).clamp(0.0, 1.0)
}
