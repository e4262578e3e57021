//! Spatially-coupled `(dl, dr, L, w)` ensembles: design rate, coupled
//! density evolution and the BP threshold of the chain.
//!
//! Variable positions run over `-L..=L`; check positions over
//! `-L..=L+w-1`. Densities outside the variable range are `Δ+∞`. A check
//! at position `c` averages the variable densities at `c-w+1..=c`, and a
//! variable at `i` averages the check outputs at `i..=i+w-1`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel::{ebn0_to_sigma, ChannelSpec};
use crate::de_flat::{bisect_ebn0, DeSchedule, DeStop, DeVerdict, DemapperConfig, Detection};
use crate::density::{apply_profile, chk_power, DegreeProfile, DeltaKind, LlrDensity, ProfileKind, Spectrum, VarFft};
use crate::{Error, Result};

pub const DEFAULT_SC_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScEnsemble {
    pub dl: usize,
    pub dr: usize,
    /// Half-width: variable positions are `-l..=l`.
    pub l: usize,
    pub w: usize,
}

impl ScEnsemble {
    pub fn new(dl: usize, dr: usize, l: usize, w: usize) -> Result<Self> {
        if dl < 2 || dr <= dl || w < 1 || l < 1 {
            return Err(Error::Config(format!("invalid coupled ensemble ({dl},{dr},{l},{w})")));
        }
        Ok(ScEnsemble { dl, dr, l, w })
    }

    pub fn positions(&self) -> usize {
        2 * self.l + 1
    }

    fn check_positions(&self) -> usize {
        2 * self.l + self.w
    }

    /// The underlying uncoupled ensemble.
    pub fn profile(&self) -> DegreeProfile {
        DegreeProfile::regular(self.dl, self.dr).expect("validated degrees")
    }

    /// Design rate of the uncoupled ensemble, `1 - dl/dr`.
    pub fn asymptotic_rate(&self) -> f64 {
        1.0 - self.dl as f64 / self.dr as f64
    }
}

/// Design rate including the rate loss of the terminated chain.
pub fn sc_design_rate(e: &ScEnsemble) -> f64 {
    let w = e.w as f64;
    let s: f64 = (0..=e.w).map(|i| (i as f64 / w).powi(e.dr as i32)).sum();
    let ratio = e.dl as f64 / e.dr as f64;
    (1.0 - ratio) - ratio * (w + 1.0 - 2.0 * s) / e.positions() as f64
}

/// `Eb/N0` shift (dB) between the terminated and the infinite chain at
/// equal noise level.
pub fn rate_loss_shift_db(e: &ScEnsemble) -> f64 {
    10.0 * (e.asymptotic_rate() / sc_design_rate(e)).log10()
}

#[derive(Debug, Clone)]
pub struct ScState {
    /// `a_i` for `i = -L..=L`.
    pub chain: Vec<LlrDensity>,
    /// Check-to-variable averages `x_i` of the last iteration.
    pub x: Vec<LlrDensity>,
    /// Bit-averaged demapper density per position.
    pub phi: Vec<Arc<LlrDensity>>,
    pub iteration: usize,
    z: Vec<LlrDensity>,
    a_changed: Vec<bool>,
    phi_dirty: Vec<bool>,
    x_changed_since_refresh: Vec<bool>,
    phi_spectra: Vec<Option<Arc<Spectrum>>>,
}

/// Changes below this L1 distance do not propagate to neighbours.
const FREEZE_TOL: f64 = 1e-14;

impl ScState {
    /// Every position starts from the intrinsic demapper output.
    pub fn initial(e: &ScEnsemble, channel: &ChannelSpec, demapper: &DemapperConfig) -> Result<Self> {
        let phi = LlrDensity::average(&demapper.densities(channel, &demapper.erasure())?)?;
        Ok(Self::uniform(e, phi))
    }

    /// Every position starts from (and keeps, without iterative
    /// detection) the demapper density `phi`.
    pub fn uniform(e: &ScEnsemble, phi: LlrDensity) -> Self {
        let n = e.positions();
        let shared = Arc::new(phi);
        ScState {
            chain: vec![(*shared).clone(); n],
            x: vec![LlrDensity::delta(shared.grid, DeltaKind::Zero); n],
            phi: vec![shared.clone(); n],
            iteration: 0,
            z: vec![LlrDensity::zeros(shared.grid); e.check_positions()],
            a_changed: vec![true; n],
            phi_dirty: vec![true; n],
            x_changed_since_refresh: vec![true; n],
            phi_spectra: vec![None; n],
        }
    }

    /// Replaces the demapper density at every position, keeping the chain
    /// (warm start at a new noise level).
    pub fn with_phi(mut self, phi: LlrDensity) -> Result<Self> {
        phi.ensure_same_grid(&self.chain[0])?;
        let shared = Arc::new(phi);
        self.phi.iter_mut().for_each(|p| *p = shared.clone());
        self.phi_spectra.iter_mut().for_each(|s| *s = None);
        self.phi_dirty.iter_mut().for_each(|d| *d = true);
        Ok(self)
    }

    pub fn error_probs(&self) -> Vec<f64> {
        self.chain.iter().map(LlrDensity::error_prob).collect()
    }

    pub fn max_error_prob(&self) -> f64 {
        self.chain.iter().map(LlrDensity::error_prob).fold(0.0, f64::max)
    }

    /// `max_i |a_i - a_{-i}|` in L1.
    pub fn asymmetry(&self) -> f64 {
        let n = self.chain.len();
        (0..n).map(|p| self.chain[p].l1_distance(&self.chain[n - 1 - p])).fold(0.0, f64::max)
    }

    fn check_input(&self, q: isize, p_lo: isize, p_hi: isize) -> Option<usize> {
        (q >= p_lo && q <= p_hi).then_some(q as usize)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Span {
    Full,
    Mirror,
}

fn advance(
    mut st: ScState,
    e: &ScEnsemble,
    channel: &ChannelSpec,
    demapper: &DemapperConfig,
    schedule: &DeSchedule,
    span: Span,
) -> Result<ScState> {
    let n = e.positions();
    let nq = e.check_positions();
    let w = e.w;
    let grid = st.chain[0].grid;
    let inv_w = 1.0 / w as f64;
    let q_max = nq - 1;
    let q_start = if span == Span::Mirror { q_max.div_ceil(2) } else { 0 };
    let p_start = if span == Span::Mirror { e.l } else { 0 };
    let perfect = LlrDensity::delta(grid, DeltaKind::PlusInfinity);

    // check nodes
    let mut z_changed = vec![false; nq];
    for q in q_start..nq {
        let inputs: Vec<Option<usize>> = (0..w).map(|k| st.check_input(q as isize - k as isize, 0, n as isize - 1)).collect();
        let dirty = st.iteration == 0 || inputs.iter().flatten().any(|&p| st.a_changed[p]);
        if !dirty {
            continue;
        }
        let mix = LlrDensity::mixture(grid, inputs.iter().map(|ip| (inv_w, ip.map_or(&perfect, |p| &st.chain[p]))))?;
        let zq = chk_power(&mix, e.dr - 1);
        z_changed[q] = st.iteration == 0 || zq.l1_distance(&st.z[q]) > FREEZE_TOL;
        st.z[q] = zq;
    }
    if span == Span::Mirror {
        for q in 0..q_start {
            st.z[q] = st.z[q_max - q].clone();
            z_changed[q] = z_changed[q_max - q];
        }
    }

    // variable nodes
    let iteration = st.iteration + 1;
    let refresh = schedule.refresh_due(iteration);
    let fft = VarFft::for_factors(grid, e.dl);
    let mut a_changed = vec![false; n];
    let mut x_dirty = vec![false; n];
    for p in p_start..n {
        x_dirty[p] = (p..p + w).any(|q| z_changed[q]);
        if x_dirty[p] {
            st.x[p] = LlrDensity::mixture(grid, (p..p + w).map(|q| (inv_w, &st.z[q])))?;
            st.x_changed_since_refresh[p] = true;
        }
    }
    let mut phi_changed = std::mem::replace(&mut st.phi_dirty, vec![false; n]);
    if refresh {
        let profile = e.profile();
        for p in p_start..n {
            if st.x_changed_since_refresh[p] {
                let incoming = apply_profile(&profile, ProfileKind::NodeL, &st.x[p])?;
                let phi = LlrDensity::average(&demapper.densities(channel, &incoming)?)?;
                st.phi[p] = Arc::new(phi);
                st.phi_spectra[p] = None;
                st.x_changed_since_refresh[p] = false;
                phi_changed[p] = true;
            }
        }
    }
    for p in p_start..n {
        if !(x_dirty[p] || phi_changed[p]) {
            continue;
        }
        let sp = match &st.phi_spectra[p] {
            Some(s) => s.clone(),
            None => {
                let s = shared_spectrum(&st, p, &fft);
                st.phi_spectra[p] = Some(s.clone());
                s
            }
        };
        let mut a = fft.inverse(&sp.mul(&fft.forward(&st.x[p]).powi(e.dl - 1)));
        a.normalize();
        a_changed[p] = a.l1_distance(&st.chain[p]) > FREEZE_TOL;
        st.chain[p] = a;
    }
    if span == Span::Mirror {
        for p in 0..p_start {
            let src = n - 1 - p;
            st.chain[p] = st.chain[src].clone();
            st.x[p] = st.x[src].clone();
            a_changed[p] = a_changed[src];
            if phi_changed[src] {
                st.phi[p] = st.phi[src].clone();
                st.phi_spectra[p] = st.phi_spectra[src].clone();
            }
            st.x_changed_since_refresh[p] = st.x_changed_since_refresh[src];
        }
    }
    st.a_changed = a_changed;
    st.iteration = iteration;
    Ok(st)
}

/// Spectrum of `phi_p`, reusing one already computed for the same density.
fn shared_spectrum(st: &ScState, p: usize, fft: &VarFft) -> Arc<Spectrum> {
    for (q, s) in st.phi_spectra.iter().enumerate() {
        if let Some(s) = s {
            if Arc::ptr_eq(&st.phi[q], &st.phi[p]) {
                return s.clone();
            }
        }
    }
    Arc::new(fft.forward(&st.phi[p]))
}

/// One iteration of the coupled recursion over the whole chain.
pub fn sc_de_step(
    state: ScState,
    e: &ScEnsemble,
    channel: &ChannelSpec,
    demapper: &DemapperConfig,
    schedule: &DeSchedule,
) -> Result<ScState> {
    check_state(&state, e)?;
    advance(state, e, channel, demapper, schedule, Span::Full)
}

fn check_state(state: &ScState, e: &ScEnsemble) -> Result<()> {
    if state.chain.len() != e.positions() || state.z.len() != e.check_positions() {
        return Err(Error::Config("state does not match the ensemble".into()));
    }
    for a in &state.chain {
        a.ensure_same_grid(&state.chain[0])?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ScOutcome {
    pub verdict: DeVerdict,
    pub stop: DeStop,
    pub iterations: usize,
    pub max_error_prob: f64,
    pub state: ScState,
}

impl ScOutcome {
    fn new(stop: DeStop, iterations: usize, max_error_prob: f64, state: ScState) -> Self {
        ScOutcome { verdict: stop.verdict(), stop, iterations, max_error_prob, state }
    }
}

const STALL_WINDOW: usize = 200;
const STALL_FRACTION: f64 = 1e-5;

/// Runs the coupled recursion until every position succeeds, the chain
/// stops moving, or `schedule.max_iters`. Symmetric chains are updated on
/// one half and mirrored.
pub fn run_sc_de(
    mut state: ScState,
    e: &ScEnsemble,
    channel: &ChannelSpec,
    demapper: &DemapperConfig,
    schedule: &DeSchedule,
) -> Result<ScOutcome> {
    schedule.validate()?;
    check_state(&state, e)?;
    let span = if state.asymmetry() == 0.0 { Span::Mirror } else { Span::Full };
    let start = state.iteration;
    let total = |s: &ScState| s.error_probs().iter().sum::<f64>();
    let mut window_start = total(&state);
    loop {
        let pe = state.max_error_prob();
        let done = state.iteration - start;
        if pe < schedule.epsilon {
            return Ok(ScOutcome::new(DeStop::Converged, done, pe, state));
        }
        if done >= schedule.max_iters {
            return Ok(ScOutcome::new(DeStop::MaxIters, done, pe, state));
        }
        state = advance(state, e, channel, demapper, schedule, span)?;
        let done = state.iteration - start;
        let frozen = !state.a_changed.iter().any(|&c| c);
        let period = match schedule.detection {
            Detection::Iterative(t) => t.max(STALL_WINDOW),
            Detection::NonIterative => STALL_WINDOW,
        };
        let mut stalled = false;
        if done % period == 0 {
            let now = total(&state);
            stalled = window_start - now < STALL_FRACTION * now;
            window_start = now;
        }
        let pe = state.max_error_prob();
        if pe >= schedule.epsilon {
            if frozen {
                return Ok(ScOutcome::new(DeStop::FixedPoint, done, pe, state));
            }
            if stalled {
                return Ok(ScOutcome::new(DeStop::Stalled, done, pe, state));
            }
        }
    }
}

pub fn sc_de_converges(e: &ScEnsemble, channel: &ChannelSpec, demapper: &DemapperConfig, schedule: &DeSchedule) -> Result<ScOutcome> {
    run_sc_de(ScState::initial(e, channel, demapper)?, e, channel, demapper, schedule)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScThreshold {
    pub ebn0_db: f64,
    pub sigma: f64,
    /// Design rate with rate loss, used for the `Eb/N0` conversion.
    pub design_rate: f64,
    pub iters_at_threshold: usize,
    pub tolerance_db: f64,
}

/// BP threshold of the coupled chain in `Eb/N0` (dB), to `0.01` dB.
pub fn sc_bp_threshold(
    e: &ScEnsemble,
    template: &ChannelSpec,
    demapper: &DemapperConfig,
    schedule: &DeSchedule,
    bracket: (f64, f64),
) -> Result<ScThreshold> {
    let rate = sc_design_rate(e);
    let m = template.bits_per_symbol();
    let tol = 0.01;
    let (ebn0_db, iters) = bisect_ebn0(bracket.0, bracket.1, tol, |eb| {
        let ch = template.with_sigma(ebn0_to_sigma(eb, rate, m)?)?;
        let out = sc_de_converges(e, &ch, demapper, schedule)?;
        Ok((out.verdict == DeVerdict::Success).then_some(out.iterations))
    })?;
    Ok(ScThreshold { ebn0_db, sigma: ebn0_to_sigma(ebn0_db, rate, m)?, design_rate: rate, iters_at_threshold: iters, tolerance_db: tol })
}

/// Gap to a reference noise threshold and the same gap with the rate loss
/// of the terminated chain removed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScGap {
    pub gap_db: f64,
    pub asympt_gap_db: f64,
}

pub fn sc_gap(e: &ScEnsemble, threshold_db: f64, noise_threshold_db: f64) -> ScGap {
    let gap_db = threshold_db - noise_threshold_db;
    ScGap { gap_db, asympt_gap_db: gap_db - rate_loss_shift_db(e) }
}
