//! Variable-node convolutions in the Fourier domain.
//!
//! Finite cells are laid out circularly (cell `k` at FFT index `k mod N`)
//! so that products and mixtures of spectra with different numbers of
//! factors stay aligned. The infinite cells are carried as four scalars
//! that are multiplicative under convolution and linear under mixing.

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use super::{Grid, LlrDensity};

pub(crate) struct VarFft {
    grid: Grid,
    len: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct Spectrum {
    bins: Vec<Complex64>,
    /// finite mass
    fin: f64,
    /// finite + (+inf) mass
    fin_plus: f64,
    /// finite + (-inf) mass
    fin_minus: f64,
    total: f64,
}

fn planner() -> &'static Mutex<RealFftPlanner<f64>> {
    static P: OnceLock<Mutex<RealFftPlanner<f64>>> = OnceLock::new();
    P.get_or_init(|| Mutex::new(RealFftPlanner::new()))
}

impl VarFft {
    /// Transform large enough for the sum of `factors` LLRs without aliasing.
    pub fn for_factors(grid: Grid, factors: usize) -> Self {
        let span = factors.max(1) * 2 * grid.half_cells + 1;
        let len = span.next_power_of_two();
        let mut p = planner().lock().unwrap();
        VarFft { grid, len, r2c: p.plan_fft_forward(len), c2r: p.plan_fft_inverse(len) }
    }

    pub fn forward(&self, d: &LlrDensity) -> Spectrum {
        debug_assert_eq!(d.grid, self.grid);
        let n = self.grid.half_cells;
        let mut input = vec![0.0; self.len];
        input[..=n].copy_from_slice(&d.pmf[n..]);
        input[self.len - n..].copy_from_slice(&d.pmf[..n]);
        let mut bins = self.r2c.make_output_vec();
        self.r2c.process(&mut input, &mut bins).expect("fft length");
        let fin = d.finite_mass();
        Spectrum { bins, fin, fin_plus: fin + d.plus_inf, fin_minus: fin + d.minus_inf, total: fin + d.plus_inf + d.minus_inf }
    }

    pub fn inverse(&self, s: &Spectrum) -> LlrDensity {
        let n = self.grid.half_cells as isize;
        let mut bins = s.bins.clone();
        bins[0].im = 0.0;
        if let Some(last) = bins.last_mut() {
            last.im = 0.0;
        }
        let mut out = self.c2r.make_output_vec();
        self.c2r.process(&mut bins, &mut out).expect("fft length");
        let scale = 1.0 / self.len as f64;
        let mut d = LlrDensity::zeros(self.grid);
        let half = self.len as isize / 2;
        for (r, v) in out.iter().enumerate() {
            let r = r as isize;
            let k = if r <= half { r } else { r - self.len as isize };
            d.pmf[(k.clamp(-n, n) + n) as usize] += v * scale;
        }
        d.pmf.iter_mut().for_each(|p| *p = p.max(0.0));
        let f = d.finite_mass();
        if f > 0.0 {
            let w = s.fin / f;
            d.pmf.iter_mut().for_each(|p| *p *= w);
        }
        d.plus_inf = (s.fin_plus - s.fin).max(0.0);
        d.minus_inf = (s.fin_minus - s.fin).max(0.0);
        // +inf meets -inf: the sum is undetermined, count it as a tie
        let tie = s.total - s.fin_plus - s.fin_minus + s.fin;
        d.pmf[self.grid.half_cells] += tie.max(0.0);
        d
    }
}

impl Spectrum {
    pub fn mul(&self, other: &Spectrum) -> Spectrum {
        Spectrum {
            bins: self.bins.iter().zip(&other.bins).map(|(a, b)| a * b).collect(),
            fin: self.fin * other.fin,
            fin_plus: self.fin_plus * other.fin_plus,
            fin_minus: self.fin_minus * other.fin_minus,
            total: self.total * other.total,
        }
    }

    pub fn powi(&self, k: usize) -> Spectrum {
        let k32 = k as i32;
        Spectrum {
            bins: self.bins.iter().map(|b| b.powi(k32)).collect(),
            fin: self.fin.powi(k32),
            fin_plus: self.fin_plus.powi(k32),
            fin_minus: self.fin_minus.powi(k32),
            total: self.total.powi(k32),
        }
    }

    /// `sum_j c_j S^{p_j}` for `(p_j, c_j)` pairs.
    pub fn polynomial(&self, terms: &[(usize, f64)]) -> Spectrum {
        let maxp = terms.iter().map(|t| t.0).max().unwrap_or(0);
        let mut acc =
            Spectrum { bins: vec![Complex64::new(0.0, 0.0); self.bins.len()], fin: 0.0, fin_plus: 0.0, fin_minus: 0.0, total: 0.0 };
        let mut pow =
            Spectrum { bins: vec![Complex64::new(1.0, 0.0); self.bins.len()], fin: 1.0, fin_plus: 1.0, fin_minus: 1.0, total: 1.0 };
        for p in 0..=maxp {
            if p > 0 {
                pow = pow.mul(self);
            }
            for &(q, c) in terms {
                if q == p {
                    acc.add_scaled(c, &pow);
                }
            }
        }
        acc
    }

    pub fn add_scaled(&mut self, w: f64, other: &Spectrum) {
        self.bins.iter_mut().zip(&other.bins).for_each(|(a, b)| *a += b * w);
        self.fin += w * other.fin;
        self.fin_plus += w * other.fin_plus;
        self.fin_minus += w * other.fin_minus;
        self.total += w * other.total;
    }
}
