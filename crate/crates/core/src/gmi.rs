//! Achievable rates of BICM: per-bit I-curves, the GMI, the coded-modulation
//! mutual information and the noise thresholds obtained by inverting them.
//!
//! All information quantities are in bits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ebn0_to_sigma, AxisDraw, ChannelSpec, Estimate};
use crate::demapper::{axis, DemapperKind};
use crate::parallel;
use crate::rng::{purpose, SeedStream};
use crate::{Error, Result};

pub const MIN_GMI_SAMPLES: usize = 10_000;
pub const DEFAULT_GMI_SAMPLES: usize = 10_000_000;

const BIN_WIDTH: f64 = 0.005;
const BIN_RANGE: f64 = 400.0;
const S_MAX: f64 = 4.0;
const S_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ICurvePoint {
    pub s: f64,
    pub per_bit: Vec<f64>,
    pub total: f64,
    /// Upper bound on the standard error of `total` (per-bit errors added).
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmiEstimate {
    /// Bits per symbol.
    pub value: f64,
    pub s_opt: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMode {
    Gmi,
    Cm,
}

impl fmt::Display for RateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateMode::Gmi => "gmi",
            RateMode::Cm => "cm",
        })
    }
}

impl FromStr for RateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gmi" => Ok(RateMode::Gmi),
            "cm" => Ok(RateMode::Cm),
            other => Err(Error::Config(format!("unknown rate mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseThreshold {
    pub sigma: f64,
    pub ebn0_db: f64,
    /// Standard error of the threshold, propagated through the local slope.
    pub stderr_db: f64,
    /// Standard error of the normalized rate at the threshold.
    pub rate_stderr: f64,
    pub samples: usize,
}

/// Per-bit histogram of `t = (1 - 2 b) L`, the LLR signed so that positive
/// values favour the transmitted bit. Each bin keeps its count and the sum
/// of its samples; samples outside the binned range are kept verbatim.
struct BitHist {
    count: Vec<u32>,
    sum: Vec<f64>,
    tail: Vec<f64>,
}

impl BitHist {
    fn new() -> Self {
        let n = (2.0 * BIN_RANGE / BIN_WIDTH) as usize + 1;
        BitHist { count: vec![0; n], sum: vec![0.0; n], tail: Vec::new() }
    }

    #[inline]
    fn add(&mut self, t: f64) {
        if t.abs() < BIN_RANGE {
            let k = ((t + BIN_RANGE) / BIN_WIDTH) as usize;
            self.count[k] += 1;
            self.sum[k] += t;
        } else {
            self.tail.push(t);
        }
    }

    fn merge(&mut self, o: BitHist) {
        for (a, b) in self.count.iter_mut().zip(o.count) {
            *a += b;
        }
        for (a, b) in self.sum.iter_mut().zip(o.sum) {
            *a += b;
        }
        self.tail.extend(o.tail);
    }

    /// Sum and sum of squares of `1 - log2(1 + exp(-t s))` over the samples.
    fn moments(&self, s: f64) -> (f64, f64) {
        let f = |t: f64| 1.0 - softplus(-t * s) * std::f64::consts::LOG2_E;
        let (mut a, mut b) = (0.0, 0.0);
        for (&c, &sm) in self.count.iter().zip(&self.sum) {
            if c > 0 {
                let c = c as f64;
                let v = f(sm / c);
                a += c * v;
                b += c * v * v;
            }
        }
        for &t in &self.tail {
            let v = f(t);
            a += v;
            b += v * v;
        }
        (a, b)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

struct MetricStats {
    bits: Vec<BitHist>,
    cm_sum: f64,
    cm_sum2: f64,
    n: usize,
}

fn collect(spec: &ChannelSpec, kind: DemapperKind, n: usize, seeds: &SeedStream, with_hist: bool) -> Result<MetricStats> {
    if n < MIN_GMI_SAMPLES {
        return Err(Error::InsufficientSamples { got: n, min: MIN_GMI_SAMPLES });
    }
    let pam = spec.constellation.axis();
    let k = pam.amplitudes.len();
    let h = pam.bits;
    let m = spec.bits_per_symbol();
    let s2 = spec.sigma * spec.sigma;
    let make = || MetricStats {
        bits: if with_hist { (0..m).map(|_| BitHist::new()).collect() } else { Vec::new() },
        cm_sum: 0.0,
        cm_sum2: 0.0,
        n: 0,
    };
    let work = |acc: &mut MetricStats, chunk: u64, len: usize| {
        let mut rng = seeds.stream(purpose::GMI, chunk);
        let mut metrics = vec![0.0; k];
        let mut scratch = vec![0.0; k];
        let mut out = vec![0.0; h];
        for _ in 0..len {
            let d = AxisDraw::draw(&mut rng, k, spec.fading);
            let gamma = d.gain2 / s2;
            let mut cm = m as f64;
            for ax in 0..2 {
                let u = d.received(&pam.amplitudes, ax, spec.sigma);
                axis::metrics(pam, u, gamma, &mut metrics);
                cm -= axis::neg_log2_posterior(&metrics, d.level[ax]);
                if with_hist {
                    axis::extrinsic(kind, pam, &metrics, &[], &mut scratch, &mut out);
                    for j in 0..h {
                        let sign = if pam.bit(d.level[ax], j) == 0 { 1.0 } else { -1.0 };
                        acc.bits[ax * h + j].add(sign * out[j]);
                    }
                }
            }
            acc.cm_sum += cm;
            acc.cm_sum2 += cm * cm;
        }
        acc.n += len;
    };
    let stats = parallel::fold_chunks(n, make, work, |a, b| a.merge(b));
    debug_assert_eq!(stats.n, n);
    Ok(stats)
}

impl MetricStats {
    fn merge(&mut self, o: MetricStats) {
        for (a, b) in self.bits.iter_mut().zip(o.bits) {
            a.merge(b);
        }
        self.cm_sum += o.cm_sum;
        self.cm_sum2 += o.cm_sum2;
        self.n += o.n;
    }

    fn i_curve(&self, s: f64) -> ICurvePoint {
        let n = self.n as f64;
        let mut per_bit = Vec::with_capacity(self.bits.len());
        let mut stderr = 0.0;
        for b in &self.bits {
            let (a, q) = b.moments(s);
            let mean = a / n;
            per_bit.push(mean);
            stderr += ((q / n - mean * mean).max(0.0) / n).sqrt();
        }
        ICurvePoint { s, total: per_bit.iter().sum(), per_bit, stderr }
    }

    fn gmi(&self) -> GmiEstimate {
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0, S_MAX);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let (mut fc, mut fd) = (self.i_curve(c).total, self.i_curve(d).total);
        while b - a > S_TOL {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = self.i_curve(c).total;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = self.i_curve(d).total;
            }
        }
        let p = self.i_curve(0.5 * (a + b));
        GmiEstimate { value: p.total.max(0.0), s_opt: p.s, stderr: p.stderr, samples: self.n }
    }

    fn cm(&self) -> Estimate {
        let n = self.n as f64;
        let mean = self.cm_sum / n;
        let var = (self.cm_sum2 / n - mean * mean).max(0.0);
        Estimate { value: mean, stderr: (var / n).sqrt(), samples: self.n }
    }
}

/// Per-bit I-curve `I_m(s; sigma)` with no a-priori input.
pub fn i_curve(spec: &ChannelSpec, kind: DemapperKind, s: f64, n_samples: usize, seeds: &SeedStream) -> Result<ICurvePoint> {
    if !(s >= 0.0) {
        return Err(Error::OutOfRange(format!("s must be nonnegative, got {s}")));
    }
    Ok(collect(spec, kind, n_samples, seeds, true)?.i_curve(s))
}

/// `max_s I(s; sigma)` by golden-section search over `s` in `[0, 4]`.
pub fn gmi(spec: &ChannelSpec, kind: DemapperKind, n_samples: usize, seeds: &SeedStream) -> Result<GmiEstimate> {
    Ok(collect(spec, kind, n_samples, seeds, true)?.gmi())
}

/// Coded-modulation mutual information `I(X; Y | A)` under uniform input,
/// in bits per symbol.
pub fn cm_mutual_info(spec: &ChannelSpec, n_samples: usize, seeds: &SeedStream) -> Result<Estimate> {
    Ok(collect(spec, DemapperKind::MapOptimal, n_samples, seeds, false)?.cm())
}

/// Normalized rate `I / M` and its standard error.
fn normalized_rate(spec: &ChannelSpec, kind: DemapperKind, mode: RateMode, n: usize, seeds: &SeedStream) -> Result<(f64, f64)> {
    let m = spec.bits_per_symbol() as f64;
    Ok(match mode {
        RateMode::Gmi => {
            let g = gmi(spec, kind, n, seeds)?;
            (g.value / m, g.stderr / m)
        }
        RateMode::Cm => {
            let c = cm_mutual_info(spec, n, seeds)?;
            (c.value / m, c.stderr / m)
        }
    })
}

/// Smallest `Eb/N0` at which the normalized rate `I(sigma) / M` reaches the
/// code rate `rate`.
///
/// A coarse bisection on a reduced sample count locates the threshold, then
/// a bisection with `n_samples` draws refines it to `0.01` dB. All
/// evaluations share the same random numbers.
pub fn noise_threshold(
    template: &ChannelSpec,
    kind: DemapperKind,
    rate: f64,
    mode: RateMode,
    n_samples: usize,
    seeds: &SeedStream,
) -> Result<NoiseThreshold> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::OutOfRange(format!("rate must lie in (0, 1), got {rate}")));
    }
    let m = template.bits_per_symbol();
    let eval = |ebn0: f64, n: usize| -> Result<(f64, f64)> {
        let spec = template.with_sigma(ebn0_to_sigma(ebn0, rate, m)?)?;
        normalized_rate(&spec, kind, mode, n, seeds)
    };
    let coarse_n = n_samples.clamp(MIN_GMI_SAMPLES, 200_000);
    let (mut lo, mut hi) = (-5.0, 30.0);
    if eval(lo, coarse_n)?.0 >= rate || eval(hi, coarse_n)?.0 < rate {
        return Err(Error::NonConvergence("noise threshold outside [-5, 30] dB".into()));
    }
    while hi - lo > 0.02 {
        let mid = 0.5 * (lo + hi);
        if eval(mid, coarse_n)?.0 < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let centre = 0.5 * (lo + hi);
    let mut half = 0.1;
    let (mut flo, mut fhi);
    let mut tries = 0;
    loop {
        lo = centre - half;
        hi = centre + half;
        flo = eval(lo, n_samples)?;
        fhi = eval(hi, n_samples)?;
        if flo.0 < rate && fhi.0 >= rate {
            break;
        }
        tries += 1;
        if tries > 5 {
            return Err(Error::NonConvergence("noise threshold bracket".into()));
        }
        half *= 2.0;
    }
    let slope = (fhi.0 - flo.0) / (hi - lo);
    let mut se = 0.5 * (flo.1 + fhi.1);
    let mut steps = 0;
    while hi - lo > 0.01 && steps < 30 {
        let mid = 0.5 * (lo + hi);
        let (v, s) = eval(mid, n_samples)?;
        se = s;
        if v < rate {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    let ebn0_db = 0.5 * (lo + hi);
    Ok(NoiseThreshold {
        sigma: ebn0_to_sigma(ebn0_db, rate, m)?,
        ebn0_db,
        stderr_db: se / slope.max(1e-12),
        rate_stderr: se,
        samples: n_samples,
    })
}
