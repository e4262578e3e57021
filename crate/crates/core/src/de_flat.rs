//! Density evolution for uncoupled LDPC ensembles over BICM channels, with
//! and without iterative detection, and the BP-threshold search.
//!
//! Densities are those of the all-zero codeword after the symmetrizing
//! sign flip. One iteration maps the variable-to-check density `a` to
//! `phi_m ⊛ lambda(rho(a))` for every bit level `m`, where `phi_m` is the
//! demapper density. Without iterative detection `phi_m` is computed once
//! with no a-priori input; with period `T` it is refreshed from
//! `L(rho(a))` every `T` iterations.

use serde::{Deserialize, Serialize};

use crate::channel::{ebn0_to_sigma, ChannelSpec};
use crate::demapper::{demapper_densities, DemapperKind};
use crate::density::{apply_profile, DegreeProfile, DeltaKind, Grid, LlrDensity, ProfileKind, Spectrum, VarFft};
use crate::rng::SeedStream;
use crate::{Error, Result};

pub const DEFAULT_DEMAPPER_SAMPLES: usize = 2_000_000;
pub const DEFAULT_EPSILON: f64 = 1e-7;
pub const DEFAULT_MAX_ITERS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "period")]
pub enum Detection {
    NonIterative,
    Iterative(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeSchedule {
    pub detection: Detection,
    pub max_iters: usize,
    /// Success once the error probability of the average density drops
    /// below this value.
    pub epsilon: f64,
}

impl DeSchedule {
    pub fn non_iterative() -> Self {
        DeSchedule { detection: Detection::NonIterative, max_iters: DEFAULT_MAX_ITERS, epsilon: DEFAULT_EPSILON }
    }

    pub fn iterative(period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::Config("detection period must be at least 1".into()));
        }
        Ok(DeSchedule { detection: Detection::Iterative(period), ..Self::non_iterative() })
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.detection == Detection::Iterative(0) {
            return Err(Error::Config("detection period must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) || self.max_iters == 0 {
            return Err(Error::Config("invalid convergence settings".into()));
        }
        Ok(())
    }

    /// True if the demapper is refreshed after iteration `iteration`
    /// (1-based count of completed iterations).
    pub(crate) fn refresh_due(&self, iteration: usize) -> bool {
        matches!(self.detection, Detection::Iterative(t) if iteration % t == 0)
    }
}

/// Demapper side of the DE: which metric, the quantization grid and the
/// Monte-Carlo budget of the demapper densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemapperConfig {
    pub kind: DemapperKind,
    pub grid: Grid,
    pub n_samples: usize,
    pub seeds: SeedStream,
}

impl DemapperConfig {
    pub fn new(kind: DemapperKind, seed: u64) -> Self {
        DemapperConfig { kind, grid: Grid::default(), n_samples: DEFAULT_DEMAPPER_SAMPLES, seeds: SeedStream::new(seed) }
    }

    /// Per-bit demapper densities for an incoming a-priori density.
    pub fn densities(&self, channel: &ChannelSpec, incoming: &LlrDensity) -> Result<Vec<LlrDensity>> {
        demapper_densities(self.kind, &channel.constellation, channel.fading, channel.sigma, incoming, self.n_samples, &self.seeds)
    }

    pub(crate) fn erasure(&self) -> LlrDensity {
        LlrDensity::delta(self.grid, DeltaKind::Zero)
    }
}

#[derive(Debug, Clone)]
pub struct DeState {
    pub per_bit: Vec<LlrDensity>,
    pub avg: LlrDensity,
    pub iteration: usize,
    /// Current per-bit demapper densities.
    pub phi: Vec<LlrDensity>,
    phi_spectra: Option<Vec<Spectrum>>,
}

impl DeState {
    /// State after the first demapper pass: `a_m = phi_m(Δ0)`.
    pub fn initial(channel: &ChannelSpec, demapper: &DemapperConfig) -> Result<Self> {
        let phi = demapper.densities(channel, &demapper.erasure())?;
        Self::from_phi(phi)
    }

    pub fn from_phi(phi: Vec<LlrDensity>) -> Result<Self> {
        let avg = LlrDensity::average(&phi)?;
        Ok(DeState { per_bit: phi.clone(), avg, iteration: 0, phi, phi_spectra: None })
    }

    /// Replaces the demapper densities, keeping the message densities.
    pub fn with_phi(mut self, phi: Vec<LlrDensity>) -> Result<Self> {
        if phi.len() != self.per_bit.len() {
            return Err(Error::Config("bit count changed".into()));
        }
        for p in &phi {
            p.ensure_same_grid(&self.avg)?;
        }
        self.phi = phi;
        self.phi_spectra = None;
        Ok(self)
    }

    pub fn error_prob(&self) -> f64 {
        self.avg.error_prob()
    }
}

/// `phi_m ⊛ lambda(x)` for all m, sharing the transform of `x`.
pub(crate) fn variable_update(
    profile: &DegreeProfile,
    x: &LlrDensity,
    phi: &[LlrDensity],
    phi_spectra: &mut Option<Vec<Spectrum>>,
) -> Vec<LlrDensity> {
    let fft = VarFft::for_factors(x.grid, profile.max_left_degree());
    let spectra = phi_spectra.get_or_insert_with(|| phi.iter().map(|p| fft.forward(p)).collect());
    let poly: Vec<(usize, f64)> = profile.lambda.iter().enumerate().filter(|(_, &c)| c > 0.0).map(|(i, &c)| (i - 1, c)).collect();
    let sx = fft.forward(x).polynomial(&poly);
    spectra
        .iter()
        .map(|sp| {
            // unit mass is restored each step; a deficit would otherwise
            // grow geometrically through the node powers
            let mut d = fft.inverse(&sp.mul(&sx));
            d.normalize();
            d
        })
        .collect()
}

/// One DE iteration.
pub fn de_step(
    state: DeState,
    profile: &DegreeProfile,
    channel: &ChannelSpec,
    demapper: &DemapperConfig,
    schedule: &DeSchedule,
) -> Result<DeState> {
    let DeState { per_bit, avg, iteration, mut phi, mut phi_spectra } = state;
    debug_assert_eq!(per_bit.len(), phi.len());
    let x = apply_profile(profile, ProfileKind::Rho, &avg)?;
    let iteration = iteration + 1;
    if schedule.refresh_due(iteration) {
        let incoming = apply_profile(profile, ProfileKind::NodeL, &x)?;
        phi = demapper.densities(channel, &incoming)?;
        phi_spectra = None;
    }
    for p in &phi {
        p.ensure_same_grid(&x)?;
    }
    let per_bit = variable_update(profile, &x, &phi, &mut phi_spectra);
    let avg = LlrDensity::average(&per_bit)?;
    Ok(DeState { per_bit, avg, iteration, phi, phi_spectra })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeVerdict {
    Success,
    Failure,
}

/// Why a DE run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeStop {
    Converged,
    FixedPoint,
    Stalled,
    MaxIters,
}

impl DeStop {
    pub fn verdict(self) -> DeVerdict {
        if self == DeStop::Converged {
            DeVerdict::Success
        } else {
            DeVerdict::Failure
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeOutcome {
    pub verdict: DeVerdict,
    pub stop: DeStop,
    pub iterations: usize,
    pub error_prob: f64,
    pub state: DeState,
}

impl DeOutcome {
    fn new(stop: DeStop, iterations: usize, error_prob: f64, state: DeState) -> Self {
        DeOutcome { verdict: stop.verdict(), stop, iterations, error_prob, state }
    }
}

/// Iterations between stall checks.
const STALL_WINDOW: usize = 50;
/// A window must reduce the error probability by at least this fraction.
const STALL_FRACTION: f64 = 1e-6;
/// L1 change below which the recursion is considered at a fixed point.
pub(crate) const FIXED_POINT_TOL: f64 = 1e-13;

/// Runs DE from `state` until success, a fixed point, a stall or
/// `schedule.max_iters`.
pub fn run_de(
    mut state: DeState,
    profile: &DegreeProfile,
    channel: &ChannelSpec,
    demapper: &DemapperConfig,
    schedule: &DeSchedule,
) -> Result<DeOutcome> {
    schedule.validate()?;
    let mut window_start = state.error_prob();
    let start = state.iteration;
    loop {
        let pe = state.error_prob();
        if pe < schedule.epsilon {
            let iterations = state.iteration - start;
            return Ok(DeOutcome::new(DeStop::Converged, iterations, pe, state));
        }
        let done = state.iteration - start;
        if done >= schedule.max_iters {
            return Ok(DeOutcome::new(DeStop::MaxIters, done, pe, state));
        }
        let prev = state.avg.clone();
        state = de_step(state, profile, channel, demapper, schedule)?;
        let done = state.iteration - start;
        let pe = state.error_prob();
        // with iterative detection the demapper refresh can restart progress
        let refreshing = matches!(schedule.detection, Detection::Iterative(_));
        if !refreshing && state.avg.l1_distance(&prev) < FIXED_POINT_TOL && pe >= schedule.epsilon {
            return Ok(DeOutcome::new(DeStop::FixedPoint, done, pe, state));
        }
        if done % STALL_WINDOW == 0 {
            let period_ok = match schedule.detection {
                Detection::Iterative(t) => done % t.max(STALL_WINDOW) == 0,
                Detection::NonIterative => true,
            };
            if period_ok && window_start - pe < STALL_FRACTION * pe && pe >= schedule.epsilon {
                return Ok(DeOutcome::new(DeStop::Stalled, done, pe, state));
            }
            if period_ok {
                window_start = pe;
            }
        }
    }
}

/// Runs DE at `channel.sigma` from the intrinsic demapper output.
pub fn de_converges(profile: &DegreeProfile, channel: &ChannelSpec, demapper: &DemapperConfig, schedule: &DeSchedule) -> Result<DeOutcome> {
    run_de(DeState::initial(channel, demapper)?, profile, channel, demapper, schedule)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpThreshold {
    pub ebn0_db: f64,
    pub sigma: f64,
    /// Rate used for the `Eb/N0` conversion.
    pub rate: f64,
    /// DE iterations of the last successful run inside the bracket.
    pub iters_at_threshold: usize,
    pub tolerance_db: f64,
}

/// Bisection in `Eb/N0` on a monotone success predicate.
///
/// `succeeds(ebn0)` returns the iteration count on success. The bracket
/// `[lo, hi]` is widened until `lo` fails and `hi` succeeds.
pub(crate) fn bisect_ebn0<F>(mut lo: f64, mut hi: f64, tol_db: f64, mut succeeds: F) -> Result<(f64, usize)>
where
    F: FnMut(f64) -> Result<Option<usize>>,
{
    let mut widen = 0;
    while succeeds(lo)?.is_some() {
        lo -= 2.0;
        widen += 1;
        if widen > 10 {
            return Err(Error::NonConvergence("no failing Eb/N0 below the bracket".into()));
        }
    }
    let mut iters = loop {
        if let Some(it) = succeeds(hi)? {
            break it;
        }
        hi += 3.0;
        widen += 1;
        if widen > 10 {
            return Err(Error::NonConvergence("no succeeding Eb/N0 above the bracket".into()));
        }
    };
    while hi - lo > tol_db {
        let mid = 0.5 * (lo + hi);
        match succeeds(mid)? {
            Some(it) => {
                hi = mid;
                iters = it;
            }
            None => lo = mid,
        }
    }
    Ok((0.5 * (lo + hi), iters))
}

/// BP threshold of an uncoupled ensemble in `Eb/N0` (dB), to `0.01` dB.
///
/// Every probe reuses the demapper's seed, so the Monte-Carlo noise in the
/// demapper densities is common to all points of the search.
pub fn bp_threshold(
    profile: &DegreeProfile,
    template: &ChannelSpec,
    demapper: &DemapperConfig,
    schedule: &DeSchedule,
    bracket: (f64, f64),
) -> Result<BpThreshold> {
    let rate = profile.design_rate();
    let m = template.bits_per_symbol();
    let tol = 0.01;
    let (ebn0_db, iters) = bisect_ebn0(bracket.0, bracket.1, tol, |e| {
        let ch = template.with_sigma(ebn0_to_sigma(e, rate, m)?)?;
        let out = de_converges(profile, &ch, demapper, schedule)?;
        Ok((out.verdict == DeVerdict::Success).then_some(out.iterations))
    })?;
    Ok(BpThreshold { ebn0_db, sigma: ebn0_to_sigma(ebn0_db, rate, m)?, rate, iters_at_threshold: iters, tolerance_db: tol })
}
