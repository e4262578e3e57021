//! BP-GEXIT curves of BICM schemes and the area threshold they imply.
//!
//! The normalized entropy `alpha = H(X|Y) / M` parametrizes the channel.
//! For a fixed point of density evolution, each bit sees extrinsic LLRs
//! from the code, distributed according to `L(rho(a))`. The GEXIT value is
//! the derivative of the symbol entropy given the channel output and the
//! extrinsic LLRs of all its bits, per bit and per unit of `alpha`:
//!
//! `g = (1/M) dH(X | Y, Phi) / d alpha = dH(X | Y, Phi) / dH(X | Y)`.
//!
//! Both derivatives are symmetric finite differences in `sigma`, estimated
//! on the same draws, so that `g = 1` exactly when the extrinsic LLRs are
//! uninformative. The posterior inside the entropy always uses the true
//! channel likelihood, whatever demapper produced the densities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{channel_entropy_quadrature, sigma_to_ebn0, AxisDraw, ChannelSpec};
use crate::de_coupled::{run_sc_de, ScEnsemble, ScState};
use crate::de_flat::{run_de, DeSchedule, DeState, DeStop, DemapperConfig};
use crate::demapper::{axis, PRIOR_CLAMP};
use crate::density::{apply_profile, DegreeProfile, DeltaKind, LlrDensity, LlrSampler, ProfileKind};
use crate::parallel;
use crate::rng::{purpose, SeedStream};
use crate::{Error, Result};

pub const MIN_KERNEL_SAMPLES: usize = 10_000;
pub const DEFAULT_KERNEL_SAMPLES: usize = 400_000;
/// Target shift of `alpha` for the finite difference in `sigma`.
const ALPHA_STEP: f64 = 1e-3;

/// Per-bit extrinsic LLR densities of one symbol; bits are independent
/// given the symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrinsicProductDensity {
    pub per_bit: Vec<LlrDensity>,
}

impl ExtrinsicProductDensity {
    pub fn new(per_bit: Vec<LlrDensity>) -> Result<Self> {
        if per_bit.is_empty() {
            return Err(Error::Config("no bit densities".into()));
        }
        for d in &per_bit {
            d.ensure_same_grid(&per_bit[0])?;
        }
        Ok(ExtrinsicProductDensity { per_bit })
    }

    /// Every bit sees the same density.
    pub fn uniform(d: LlrDensity, bits: usize) -> Self {
        ExtrinsicProductDensity { per_bit: vec![d; bits] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GexitEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Relative `sigma` step giving an `alpha` shift of about `1e-3`.
fn sigma_step(spec: &ChannelSpec) -> Result<f64> {
    let h = 0.01 * spec.sigma;
    let lo = channel_entropy_quadrature(&spec.with_sigma(spec.sigma - h)?);
    let hi = channel_entropy_quadrature(&spec.with_sigma(spec.sigma + h)?);
    let slope = (hi - lo) / (2.0 * h);
    let step = if slope > 0.0 { ALPHA_STEP / slope } else { 0.05 * spec.sigma };
    Ok(step.clamp(1e-4 * spec.sigma, 0.05 * spec.sigma))
}

/// GEXIT value for the extrinsic densities `ext` at `spec.sigma`.
pub fn gexit_functional(ext: &ExtrinsicProductDensity, spec: &ChannelSpec, n_samples: usize, seeds: &SeedStream) -> Result<GexitEstimate> {
    gexit_functional_avg(std::slice::from_ref(ext), spec, n_samples, seeds)
}

/// Average of the GEXIT values of several extrinsic densities (the
/// positions of a coupled chain), estimated by drawing the position
/// uniformly per sample.
pub fn gexit_functional_avg(
    exts: &[ExtrinsicProductDensity],
    spec: &ChannelSpec,
    n_samples: usize,
    seeds: &SeedStream,
) -> Result<GexitEstimate> {
    if n_samples < MIN_KERNEL_SAMPLES {
        return Err(Error::InsufficientSamples { got: n_samples, min: MIN_KERNEL_SAMPLES });
    }
    let m = spec.bits_per_symbol();
    if exts.is_empty() || exts.iter().any(|e| e.per_bit.len() != m) {
        return Err(Error::Config(format!("extrinsic densities must cover {m} bits")));
    }
    let samplers: Vec<Vec<LlrSampler>> = exts.iter().map(|e| e.per_bit.iter().map(LlrDensity::sampler).collect()).collect();
    let ds = sigma_step(spec)?;
    let sig = [spec.sigma - ds, spec.sigma + ds];
    let pam = spec.constellation.axis();
    let k = pam.amplitudes.len();
    let h = pam.bits;
    let work = |acc: &mut [f64; 5], chunk: u64, len: usize| {
        let mut rng = seeds.stream(purpose::GEXIT, chunk);
        let mut metrics = vec![0.0; k];
        let mut scratch = vec![0.0; k];
        let mut v = vec![0.0; m];
        for _ in 0..len {
            let pos = if exts.len() > 1 { rng.random_range(0..exts.len()) } else { 0 };
            let d = AxisDraw::draw(&mut rng, k, spec.fading);
            for (bit, vb) in v.iter_mut().enumerate() {
                let u: f64 = rng.random();
                let level = d.level[bit / h];
                let sign = if pam.bit(level, bit % h) == 0 { 1.0 } else { -1.0 };
                *vb = (sign * samplers[pos][bit].sample_with(u)).clamp(-PRIOR_CLAMP, PRIOR_CLAMP);
            }
            let mut he = [0.0; 2];
            let mut h0 = [0.0; 2];
            for (side, &s) in sig.iter().enumerate() {
                let gamma = d.gain2 / (s * s);
                for ax in 0..2 {
                    let u = d.received(&pam.amplitudes, ax, s);
                    axis::metrics(pam, u, gamma, &mut metrics);
                    h0[side] += axis::neg_log2_posterior(&metrics, d.level[ax]);
                    he[side] += axis::neg_log2_posterior_with_prior(pam, &metrics, &v[ax * h..(ax + 1) * h], d.level[ax], &mut scratch);
                }
            }
            let (de, d0) = (he[1] - he[0], h0[1] - h0[0]);
            acc[0] += de;
            acc[1] += d0;
            acc[2] += de * de;
            acc[3] += d0 * d0;
            acc[4] += de * d0;
        }
    };
    // sums of d_ext, d_0, d_ext^2, d_0^2, d_ext d_0
    let acc = parallel::fold_chunks(
        n_samples,
        || [0.0f64; 5],
        work,
        |a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        },
    );
    let n = n_samples as f64;
    let (me, m0) = (acc[0] / n, acc[1] / n);
    if !(m0 > 0.0) {
        return Err(Error::NonConvergence("channel entropy is flat in sigma".into()));
    }
    let g = me / m0;
    // delta method for a ratio of means
    let var_r = (acc[2] / n - me * me) - 2.0 * g * (acc[4] / n - me * m0) + g * g * (acc[3] / n - m0 * m0);
    Ok(GexitEstimate { value: g, stderr: (var_r.max(0.0) / n).sqrt() / m0, samples: n_samples })
}

/// Ensemble whose BP-GEXIT curve is traced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveEnsemble {
    Flat(DegreeProfile),
    Coupled(ScEnsemble),
}

impl CurveEnsemble {
    pub fn design_rate(&self) -> f64 {
        match self {
            CurveEnsemble::Flat(p) => p.design_rate(),
            CurveEnsemble::Coupled(e) => crate::de_coupled::sc_design_rate(e),
        }
    }

    /// Underlying (uncoupled) degree profile.
    pub fn profile(&self) -> DegreeProfile {
        match self {
            CurveEnsemble::Flat(p) => p.clone(),
            CurveEnsemble::Coupled(e) => e.profile(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            CurveEnsemble::Flat(p) => match p.regular_degrees() {
                Some((l, r)) => format!("({l},{r})"),
                None => "irregular".into(),
            },
            CurveEnsemble::Coupled(e) => format!("({},{},{},{})", e.dl, e.dr, e.l, e.w),
        }
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GexitPoint {
    pub alpha: f64,
    pub g: f64,
    pub stderr: f64,
    /// Noise level of the point; infinite at `alpha = 1` (JSON `null`).
    #[serde(with = "infinite_as_null")]
    pub sigma: f64,
    /// False if density evolution hit its iteration cap before reaching a
    /// fixed point.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub ensemble: String,
    pub modulation: String,
    pub channel: String,
    pub demapper: String,
    pub design_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GexitCurve {
    /// Sorted by strictly increasing `alpha`.
    pub points: Vec<GexitPoint>,
    pub meta: CurveMeta,
}

impl GexitCurve {
    /// Trapezoid integral of `g` over `[alpha_from, 1]`.
    pub fn area_above(&self, alpha_from: f64) -> f64 {
        let mut area = 0.0;
        for w in self.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b.alpha <= alpha_from {
                continue;
            }
            let lo = a.alpha.max(alpha_from);
            let glo = a.g + (b.g - a.g) * (lo - a.alpha) / (b.alpha - a.alpha);
            area += 0.5 * (glo + b.g) * (b.alpha - lo);
        }
        area
    }

    pub fn total_area(&self) -> f64 {
        self.area_above(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Config("empty GEXIT curve".into()));
        }
        if self.points.windows(2).any(|w| w[1].alpha <= w[0].alpha) {
            return Err(Error::Config("curve alphas must increase strictly".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CurveOptions {
    /// Channel entropies at which the curve is evaluated, in `(0, 1)`.
    pub alphas: Vec<f64>,
    pub kernel_samples: usize,
    /// Width to which the BP jump is located by bisection.
    pub jump_tol: f64,
}

impl CurveOptions {
    /// `n` equally spaced entropies strictly inside `(0, 1)`.
    pub fn uniform(n: usize) -> Self {
        let alphas = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        CurveOptions { alphas, kernel_samples: DEFAULT_KERNEL_SAMPLES, jump_tol: 1e-3 }
    }
}

/// Monotone map from `alpha` to `sigma`, tabulated by quadrature and
/// interpolated linearly in `ln sigma`.
#[derive(Debug, Clone)]
pub struct AlphaTable {
    sigmas: Vec<f64>,
    alphas: Vec<f64>,
}

impl AlphaTable {
    pub fn build(template: &ChannelSpec) -> Result<Self> {
        let eval = |s: f64| -> Result<f64> { Ok(channel_entropy_quadrature(&template.with_sigma(s)?)) };
        let (mut lo, mut hi) = (0.05f64, 2.0f64);
        while eval(lo)? > 1e-4 {
            lo /= 2.0;
        }
        while eval(hi)? < 0.995 {
            hi *= 2.0;
            if hi > 1e4 {
                return Err(Error::NonConvergence("alpha table upper end".into()));
            }
        }
        let n = 240;
        let mut sigmas = Vec::with_capacity(n);
        let mut alphas = Vec::with_capacity(n);
        let mut best: f64 = 0.0;
        for i in 0..n {
            let s = lo * (hi / lo).powf(i as f64 / (n - 1) as f64);
            best = best.max(eval(s)?);
            sigmas.push(s);
            alphas.push(best);
        }
        Ok(AlphaTable { sigmas, alphas })
    }

    pub fn sigma(&self, alpha: f64) -> Result<f64> {
        let k = self.alphas.partition_point(|&a| a < alpha);
        if k == 0 || k >= self.alphas.len() {
            return Err(Error::OutOfRange(format!("alpha {alpha} outside the tabulated range")));
        }
        let (a0, a1) = (self.alphas[k - 1], self.alphas[k]);
        let t = if a1 > a0 { (alpha - a0) / (a1 - a0) } else { 0.0 };
        Ok((self.sigmas[k - 1].ln() * (1.0 - t) + self.sigmas[k].ln() * t).exp())
    }
}

/// Warm-started DE state of either ensemble kind.
enum Tracker {
    Flat(Option<DeState>),
    Coupled(Option<ScState>),
}

struct Fixed {
    success: bool,
    converged: bool,
    ext: Vec<ExtrinsicProductDensity>,
}

impl Tracker {
    fn run(&mut self, ens: &CurveEnsemble, ch: &ChannelSpec, demapper: &DemapperConfig, schedule: &DeSchedule) -> Result<Fixed> {
        let phi = demapper.densities(ch, &demapper.erasure())?;
        let m = phi.len();
        match (self, ens) {
            (Tracker::Flat(slot), CurveEnsemble::Flat(profile)) => {
                let st = match slot.take() {
                    Some(s) => s.with_phi(phi)?,
                    None => DeState::from_phi(phi)?,
                };
                let out = run_de(st, profile, ch, demapper, schedule)?;
                let x = apply_profile(profile, ProfileKind::Rho, &out.state.avg)?;
                let ext = apply_profile(profile, ProfileKind::NodeL, &x)?;
                *slot = Some(out.state);
                Ok(Fixed {
                    success: out.stop == DeStop::Converged,
                    converged: out.stop != DeStop::MaxIters,
                    ext: vec![ExtrinsicProductDensity::uniform(ext, m)],
                })
            }
            (Tracker::Coupled(slot), CurveEnsemble::Coupled(e)) => {
                let phi = LlrDensity::average(&phi)?;
                let st = match slot.take() {
                    Some(s) => s.with_phi(phi)?,
                    None => ScState::uniform(e, phi),
                };
                let out = run_sc_de(st, e, ch, demapper, schedule)?;
                let profile = e.profile();
                let mut ext = Vec::with_capacity(e.positions());
                for x in &out.state.x {
                    ext.push(ExtrinsicProductDensity::uniform(apply_profile(&profile, ProfileKind::NodeL, x)?, m));
                }
                *slot = Some(out.state);
                Ok(Fixed { success: out.stop == DeStop::Converged, converged: out.stop != DeStop::MaxIters, ext })
            }
            _ => unreachable!("tracker matches ensemble"),
        }
    }

    fn snapshot(&self) -> Tracker {
        match self {
            Tracker::Flat(s) => Tracker::Flat(s.clone()),
            Tracker::Coupled(s) => Tracker::Coupled(s.clone()),
        }
    }
}

/// Traces the BP-GEXIT curve by sweeping `alpha` downward with warm-started
/// density evolution. Points where DE succeeds have `g = 0`; the jump is
/// located by bisection to `opts.jump_tol`, and the endpoint `(1, 1)` is
/// appended.
pub fn bp_gexit_curve(
    ens: &CurveEnsemble,
    template: &ChannelSpec,
    demapper: &DemapperConfig,
    schedule: &DeSchedule,
    opts: &CurveOptions,
) -> Result<GexitCurve> {
    if opts.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::OutOfRange("alpha grid must lie in (0, 1)".into()));
    }
    if opts.alphas.is_empty() {
        return Err(Error::Config("empty alpha grid".into()));
    }
    let table = AlphaTable::build(template)?;
    let mut alphas = opts.alphas.clone();
    alphas.sort_by(|a, b| b.total_cmp(a));
    alphas.dedup();
    let mut tracker = match ens {
        CurveEnsemble::Flat(_) => Tracker::Flat(None),
        CurveEnsemble::Coupled(_) => Tracker::Coupled(None),
    };
    let kernel = |ext: &[ExtrinsicProductDensity], ch: &ChannelSpec| -> Result<GexitEstimate> {
        gexit_functional_avg(ext, ch, opts.kernel_samples, &demapper.seeds)
    };
    let mut points = Vec::new();
    let mut last_fail: Option<f64> = None;
    let mut solved = false;
    for &alpha in &alphas {
        let sigma = table.sigma(alpha)?;
        if solved {
            points.push(GexitPoint { alpha, g: 0.0, stderr: 0.0, sigma, converged: true });
            continue;
        }
        let ch = template.with_sigma(sigma)?;
        let before = tracker.snapshot();
        let fx = tracker.run(ens, &ch, demapper, schedule)?;
        if fx.success {
            solved = true;
            if let Some(hi) = last_fail {
                // locate the jump between `alpha` (success) and `hi` (failure)
                let (mut lo, mut hi) = (alpha, hi);
                let mut state = before;
                let mut fail_point = None;
                while hi - lo > opts.jump_tol {
                    let mid = 0.5 * (lo + hi);
                    let s = table.sigma(mid)?;
                    let ch = template.with_sigma(s)?;
                    let mut trial = state.snapshot();
                    let f = trial.run(ens, &ch, demapper, schedule)?;
                    if f.success {
                        lo = mid;
                    } else {
                        hi = mid;
                        let g = kernel(&f.ext, &ch)?;
                        fail_point = Some(GexitPoint { alpha: mid, g: g.value, stderr: g.stderr, sigma: s, converged: f.converged });
                        state = trial;
                    }
                }
                if let Some(p) = fail_point {
                    points.push(p);
                }
                if lo > alpha {
                    points.push(GexitPoint { alpha: lo, g: 0.0, stderr: 0.0, sigma: table.sigma(lo)?, converged: true });
                }
            }
            points.push(GexitPoint { alpha, g: 0.0, stderr: 0.0, sigma, converged: true });
            continue;
        }
        let g = kernel(&fx.ext, &ch)?;
        points.push(GexitPoint { alpha, g: g.value, stderr: g.stderr, sigma, converged: fx.converged });
        last_fail = Some(alpha);
    }
    points.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    points.dedup_by(|a, b| a.alpha == b.alpha);
    if points.last().is_some_and(|p| p.alpha < 1.0) {
        points.push(GexitPoint { alpha: 1.0, g: 1.0, stderr: 0.0, sigma: f64::INFINITY, converged: true });
    }
    let curve = GexitCurve {
        points,
        meta: CurveMeta {
            ensemble: ens.label(),
            modulation: template.constellation.modulation.name().into(),
            channel: template.fading.name().into(),
            demapper: demapper.kind.name().into(),
            design_rate: ens.design_rate(),
        },
    };
    curve.validate()?;
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaThreshold {
    pub alpha: f64,
    pub sigma: f64,
    pub ebn0_db: f64,
    pub rate: f64,
}

/// Largest `alpha_bar` with `∫_{alpha_bar}^1 g = rate`, with `sigma` and
/// `Eb/N0` (at `rate`) interpolated from the neighbouring curve points.
pub fn area_threshold(curve: &GexitCurve, rate: f64, bits_per_symbol: usize) -> Result<AreaThreshold> {
    curve.validate()?;
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::OutOfRange(format!("rate {rate}")));
    }
    let total = curve.total_area();
    if total < rate {
        return Err(Error::NonConvergence(format!("curve area {total:.4} is below the rate {rate:.4}")));
    }
    let pts = &curve.points;
    let mut acc = 0.0;
    for k in (1..pts.len()).rev() {
        let (a, b) = (pts[k - 1], pts[k]);
        let seg = 0.5 * (a.g + b.g) * (b.alpha - a.alpha);
        if acc + seg >= rate {
            // g linear on the segment; solve for the lower limit
            let need = rate - acc;
            let (mut lo, mut hi) = (a.alpha, b.alpha);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let gm = a.g + (b.g - a.g) * (mid - a.alpha) / (b.alpha - a.alpha);
                if 0.5 * (gm + b.g) * (b.alpha - mid) < need {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let alpha = 0.5 * (lo + hi);
            let sigma = if b.sigma.is_finite() {
                let t = (alpha - a.alpha) / (b.alpha - a.alpha);
                (a.sigma.ln() * (1.0 - t) + b.sigma.ln() * t).exp()
            } else {
                a.sigma
            };
            return Ok(AreaThreshold { alpha, sigma, ebn0_db: sigma_to_ebn0(sigma, rate, bits_per_symbol)?, rate });
        }
        acc += seg;
    }
    unreachable!("total area covers the rate")
}

/// Extrinsic density with perfect knowledge of every bit.
pub fn perfect_extrinsic(grid: crate::density::Grid, bits: usize) -> ExtrinsicProductDensity {
    ExtrinsicProductDensity::uniform(LlrDensity::delta(grid, DeltaKind::PlusInfinity), bits)
}

/// Extrinsic density carrying no information.
pub fn erased_extrinsic(grid: crate::density::Grid, bits: usize) -> ExtrinsicProductDensity {
    ExtrinsicProductDensity::uniform(LlrDensity::delta(grid, DeltaKind::Zero), bits)
}
