//! Bit-metric computation (MAP and max-log-MAP) and Monte-Carlo extraction
//! of the demapper density operators.
//!
//! LLRs are `log P(b = 0 | .) / P(b = 1 | .)`. For square Gray QAM with
//! perfect CSI the symbol likelihood and the bit priors both factor over
//! the in-phase and quadrature axes, so the extrinsic LLR of an axis bit
//! only depends on that axis of the equalized sample `y / a`. The
//! Monte-Carlo loops use this per-axis form; [`bit_llr`] evaluates the
//! symbol-level expression directly and serves as the reference.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{AxisDraw, ChannelObservation, Fading};
use crate::constellation::Constellation;
use crate::density::{LlrDensity, LlrHistogram};
use crate::parallel;
use crate::rng::{purpose, SeedStream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DemapperKind {
    #[serde(rename = "map")]
    MapOptimal,
    #[serde(rename = "mlm")]
    MaxLogMap,
}

impl DemapperKind {
    pub fn name(self) -> &'static str {
        match self {
            DemapperKind::MapOptimal => "map",
            DemapperKind::MaxLogMap => "mlm",
        }
    }
}

impl fmt::Display for DemapperKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DemapperKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "map" => Ok(DemapperKind::MapOptimal),
            "mlm" | "max-log-map" | "maxlog" => Ok(DemapperKind::MaxLogMap),
            other => Err(Error::Config(format!("unsupported demapper '{other}'"))),
        }
    }
}

/// A-priori LLRs for the bits of one symbol.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorVector {
    AllZero,
    Llrs(Vec<f64>),
}

impl PriorVector {
    fn get(&self, m: usize) -> f64 {
        match self {
            PriorVector::AllZero => 0.0,
            PriorVector::Llrs(v) => v[m],
        }
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Extrinsic LLR of bit `m` from one observation, evaluated over the whole
/// constellation. The prior entry of bit `m` itself is ignored.
pub fn bit_llr(kind: DemapperKind, c: &Constellation, obs: &ChannelObservation, sigma: f64, m: usize, prior: &PriorVector) -> Result<f64> {
    if !(obs.y.re.is_finite() && obs.y.im.is_finite() && obs.a.re.is_finite() && obs.a.im.is_finite()) {
        return Err(Error::OutOfRange("non-finite channel observation".into()));
    }
    if m >= c.bits_per_symbol {
        return Err(Error::OutOfRange(format!("bit index {m}")));
    }
    let s2 = sigma * sigma;
    let term = |s: usize| -> f64 {
        let mut t = -(obs.y - obs.a * c.symbols[s]).norm_sqr() / s2;
        for l in (0..c.bits_per_symbol).filter(|&l| l != m) {
            let v = prior.get(l);
            // log Pr(B_l = b_l(x))
            t -= if c.bit(s, l) == 0 { softplus(-v) } else { softplus(v) };
        }
        t
    };
    let part = c.bit_partition(m)?;
    let (zero, one) = (part.zero_set.iter().map(|&s| term(s)), part.one_set.iter().map(|&s| term(s)));
    Ok(match kind {
        DemapperKind::MapOptimal => log_sum_exp(zero) - log_sum_exp(one),
        DemapperKind::MaxLogMap => zero.fold(f64::NEG_INFINITY, f64::max) - one.fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Largest prior magnitude used inside the per-axis kernels; keeps the
/// log-domain arithmetic free of `inf - inf`.
pub(crate) const PRIOR_CLAMP: f64 = 500.0;

/// Per-axis (PAM) kernels.
pub(crate) mod axis {
    use super::{softplus, DemapperKind};
    use crate::constellation::PamAxis;

    /// `out[p] = -gamma (u - A_p)^2`, the log-likelihood up to a constant.
    #[inline]
    pub fn metrics(pam: &PamAxis, u: f64, gamma: f64, out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(&pam.amplitudes) {
            let d = u - a;
            *o = -gamma * d * d;
        }
    }

    /// `-log2 P(level | u)` under uniform levels.
    #[inline]
    pub fn neg_log2_posterior(metrics: &[f64], level: usize) -> f64 {
        let mx = metrics.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = metrics.iter().map(|t| (t - mx).exp()).sum();
        (s.ln() + mx - metrics[level]) * std::f64::consts::LOG2_E
    }

    /// `-log2 P(level | u, priors)` with per-bit prior LLRs `v` (clamped).
    #[inline]
    pub fn neg_log2_posterior_with_prior(pam: &PamAxis, metrics: &[f64], v: &[f64], level: usize, scratch: &mut [f64]) -> f64 {
        level_terms(pam, metrics, v, scratch);
        let mx = scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = scratch.iter().map(|t| (t - mx).exp()).sum();
        (s.ln() + mx - scratch[level]) * std::f64::consts::LOG2_E
    }

    /// `t_p = metric_p + sum_j log Pr(B_j = b_j(p))`.
    #[inline]
    fn level_terms(pam: &PamAxis, metrics: &[f64], v: &[f64], t: &mut [f64]) {
        for (p, tp) in t.iter_mut().enumerate() {
            let mut acc = metrics[p];
            for (j, &vj) in v.iter().enumerate() {
                acc -= if pam.bit(p, j) == 0 { softplus(-vj) } else { softplus(vj) };
            }
            *tp = acc;
        }
    }

    /// Extrinsic LLRs of all axis bits. `v` holds the (clamped) prior LLRs,
    /// or is empty for no prior.
    pub fn extrinsic(kind: DemapperKind, pam: &PamAxis, metrics: &[f64], v: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        let t: &[f64] = if v.is_empty() {
            metrics
        } else {
            level_terms(pam, metrics, v, scratch);
            scratch
        };
        let prior = |j: usize| if v.is_empty() { 0.0 } else { v[j] };
        match kind {
            DemapperKind::MaxLogMap => {
                for j in 0..pam.bits {
                    let (mut m0, mut m1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                    for (p, &tp) in t.iter().enumerate() {
                        if pam.bit(p, j) == 0 {
                            m0 = m0.max(tp);
                        } else {
                            m1 = m1.max(tp);
                        }
                    }
                    out[j] = m0 - m1 - prior(j);
                }
            }
            DemapperKind::MapOptimal => {
                let mx = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut e = [0.0f64; 16];
                for (p, &tp) in t.iter().enumerate() {
                    e[p] = (tp - mx).exp();
                }
                for j in 0..pam.bits {
                    let (mut s0, mut s1) = (0.0, 0.0);
                    for (p, &ep) in e[..t.len()].iter().enumerate() {
                        if pam.bit(p, j) == 0 {
                            s0 += ep;
                        } else {
                            s1 += ep;
                        }
                    }
                    // with one level per half the exact form reduces to the
                    // max-log value bit for bit
                    out[j] = if t.len() > 2 && s0 > 1e-280 && s1 > 1e-280 {
                        s0.ln() - s1.ln() - prior(j)
                    } else {
                        exact_bit(pam, t, j) - prior(j)
                    };
                }
            }
        }
    }

    /// Half-wise log-sum-exp for one bit, used when the shared
    /// normalization underflows.
    fn exact_bit(pam: &PamAxis, t: &[f64], j: usize) -> f64 {
        let lse = |b: u32| {
            let mx = (0..t.len()).filter(|&p| pam.bit(p, j) == b).map(|p| t[p]).fold(f64::NEG_INFINITY, f64::max);
            mx + (0..t.len()).filter(|&p| pam.bit(p, j) == b).map(|p| (t[p] - mx).exp()).sum::<f64>().ln()
        };
        lse(0) - lse(1)
    }
}

pub const MIN_DEMAPPER_SAMPLES: usize = 10_000;

/// Monte-Carlo demapper density operators `phi_m` for every bit level.
///
/// Symbols, fading and noise are drawn at random; a-priori LLRs for the
/// other bits are drawn independently from `incoming` (an all-zero-codeword
/// density) and sign-adjusted by the true bits. Each output LLR is
/// multiplied by `(1 - 2 b_m)` so that the result is the density
/// conditioned on a transmitted zero, projected onto `incoming`'s grid.
/// Draws come from `seeds` stream [`purpose::DEMAPPER`], so repeated calls
/// replay the same randomness.
pub fn demapper_densities(
    kind: DemapperKind,
    c: &Constellation,
    fading: Fading,
    sigma: f64,
    incoming: &LlrDensity,
    n_samples: usize,
    seeds: &SeedStream,
) -> Result<Vec<LlrDensity>> {
    if n_samples < MIN_DEMAPPER_SAMPLES {
        return Err(Error::InsufficientSamples { got: n_samples, min: MIN_DEMAPPER_SAMPLES });
    }
    if !(sigma > 0.0) {
        return Err(Error::OutOfRange(format!("sigma {sigma}")));
    }
    let pam = c.axis();
    let h = pam.bits;
    let m = c.bits_per_symbol;
    let k = pam.amplitudes.len();
    let sampler = incoming.sampler();
    let no_prior = sampler.is_erasure();
    let s2 = sigma * sigma;
    let make = || -> Vec<LlrHistogram> { (0..m).map(|_| LlrHistogram::new(incoming.grid)).collect() };
    let work = |hist: &mut Vec<LlrHistogram>, chunk: u64, len: usize| {
        let mut rng = seeds.stream(purpose::DEMAPPER, chunk);
        let mut metrics = vec![0.0; k];
        let mut scratch = vec![0.0; k];
        let mut out = vec![0.0; h];
        let mut v = vec![0.0; m];
        for _ in 0..len {
            let d = AxisDraw::draw(&mut rng, k, fading);
            for (bit, vb) in v.iter_mut().enumerate() {
                let u: f64 = rng.random();
                let level = d.level[bit / h];
                let sign = if pam.bit(level, bit % h) == 0 { 1.0 } else { -1.0 };
                *vb = if no_prior { 0.0 } else { (sign * sampler.sample_with(u)).clamp(-PRIOR_CLAMP, PRIOR_CLAMP) };
            }
            let gamma = d.gain2 / s2;
            for ax in 0..2 {
                let u = d.received(&pam.amplitudes, ax, sigma);
                axis::metrics(pam, u, gamma, &mut metrics);
                let prior: &[f64] = if no_prior { &[] } else { &v[ax * h..(ax + 1) * h] };
                axis::extrinsic(kind, pam, &metrics, prior, &mut scratch, &mut out);
                for j in 0..h {
                    let sign = if pam.bit(d.level[ax], j) == 0 { 1.0 } else { -1.0 };
                    hist[ax * h + j].add(sign * out[j]);
                }
            }
        }
    };
    let hist = parallel::fold_chunks(n_samples, make, work, |a, b| {
        for (x, y) in a.iter_mut().zip(&b) {
            x.merge(y);
        }
    });
    Ok(hist.into_iter().map(LlrHistogram::into_density).collect())
}

/// `phi_m(incoming; sigma)` for one bit level.
#[allow(clippy::too_many_arguments)]
pub fn demapper_density(
    kind: DemapperKind,
    c: &Constellation,
    fading: Fading,
    sigma: f64,
    m: usize,
    incoming: &LlrDensity,
    n_samples: usize,
    seeds: &SeedStream,
) -> Result<LlrDensity> {
    if m >= c.bits_per_symbol {
        return Err(Error::OutOfRange(format!("bit index {m}")));
    }
    Ok(demapper_densities(kind, c, fading, sigma, incoming, n_samples, seeds)?.swap_remove(m))
}

/// `phi(incoming; sigma)`: the equally weighted average of the bit-level
/// operators.
pub fn demapper_density_avg(
    kind: DemapperKind,
    c: &Constellation,
    fading: Fading,
    sigma: f64,
    incoming: &LlrDensity,
    n_samples: usize,
    seeds: &SeedStream,
) -> Result<LlrDensity> {
    LlrDensity::average(&demapper_densities(kind, c, fading, sigma, incoming, n_samples, seeds)?)
}
