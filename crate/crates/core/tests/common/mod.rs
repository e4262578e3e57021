//! Independent reference computations for the binary-input AWGN channel.
//!
//! These share no code with the library: densities live on a plain uniform
//! LLR grid with saturating edges, check nodes use a direct pairwise table,
//! and channel expectations use deterministic quadrature.

#![allow(dead_code)]

pub mod props;

use std::f64::consts::LN_2;

/// `E[log2(1 + exp(-f(L)))]` for the BPSK channel LLR `L ~ N(2/s², 4/s²)`.
pub fn bpsk_expect(sigma: f64, f: impl Fn(f64) -> f64) -> f64 {
    let m = 2.0 / (sigma * sigma);
    let sd = (2.0 * m).sqrt();
    let n = 4000;
    let (a, b) = (m - 12.0 * sd, m + 12.0 * sd);
    let h = (b - a) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let l = a + i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        let z = (l - m) / sd;
        acc += w * (-0.5 * z * z).exp() * f(l);
    }
    acc * h / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

pub fn log2_1p_exp_neg(x: f64) -> f64 {
    (x.max(0.0) - x + (-x.abs()).exp().ln_1p()) / LN_2
}

/// Capacity of the binary-input AWGN channel, bits per use.
pub fn c_bpsk(sigma: f64) -> f64 {
    1.0 - bpsk_expect(sigma, |l| log2_1p_exp_neg(l))
}

/// Per-bit I-curve of BPSK (and Gray QPSK) at scaling `s`.
pub fn i_curve_bpsk(sigma: f64, s: f64) -> f64 {
    1.0 - bpsk_expect(sigma, |l| log2_1p_exp_neg(s * l))
}

/// `sigma` with `c_bpsk(sigma) = c`, by bisection in `ln sigma`.
pub fn c_bpsk_inverse(c: f64) -> f64 {
    let (mut lo, mut hi) = (0.05f64.ln(), 20f64.ln());
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if c_bpsk(mid.exp()) > c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

pub fn ebn0_db(sigma: f64, rate: f64, bits: usize) -> f64 {
    -10.0 * (rate * bits as f64 * sigma * sigma).log10()
}

/// BICM capacity (sum of bit-channel capacities, per real dimension) of a
/// Gray-labelled `2^h`-PAM with energy 1/2 per dimension, by quadrature over
/// the received value.
pub fn bicm_pam_capacity(h: usize, sigma: f64) -> f64 {
    let k = 1usize << h;
    let raw: Vec<f64> = (0..k).map(|i| 2.0 * i as f64 - (k as f64 - 1.0)).collect();
    let e = raw.iter().map(|a| a * a).sum::<f64>() / k as f64;
    let amp: Vec<f64> = raw.iter().map(|a| a * (0.5 / e).sqrt()).collect();
    let gray = |i: usize| i ^ (i >> 1);
    let pdf = |y: f64, a: f64| (-(y - a) * (y - a) / (2.0 * sigma * sigma)).exp();
    let (lo, hi) = (amp[0] - 12.0 * sigma, amp[k - 1] + 12.0 * sigma);
    let n = 20_000;
    let dy = (hi - lo) / n as f64;
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let mut cap = 0.0;
    for j in 0..h {
        let bit = |i: usize| (gray(i) >> (h - 1 - j)) & 1;
        let mut acc = 0.0;
        for t in 0..=n {
            let y = lo + t as f64 * dy;
            let w = if t == 0 || t == n { 0.5 } else { 1.0 };
            let p: Vec<f64> = amp.iter().map(|&a| pdf(y, a)).collect();
            let tot: f64 = p.iter().sum();
            let mut b = [0.0; 2];
            for i in 0..k {
                b[bit(i)] += p[i];
            }
            // E[log2 (p(y) / p(y|b))] with p(y) = (p0 + p1)/2 and p(y|b) = 2 pb / k
            for (i, &pi) in p.iter().enumerate() {
                if pi > 0.0 && b[bit(i)] > 0.0 {
                    acc += w * pi * (tot / (2.0 * b[bit(i)])).log2();
                }
            }
        }
        cap -= acc * dy * norm / k as f64;
    }
    cap
}

/// Quantized scalar density evolution for regular LDPC ensembles over the
/// binary-input AWGN channel.
pub struct ScalarDe {
    pub delta: f64,
    half: usize,
    n: usize,
    table: Vec<u32>,
}

impl ScalarDe {
    pub fn new(delta: f64, lmax: f64) -> Self {
        let half = (lmax / delta).round() as usize;
        let n = 2 * half + 1;
        let centre = |i: usize| (i as f64 - half as f64) * delta;
        let th: Vec<f64> = (0..n).map(|i| (0.5 * centre(i)).tanh()).collect();
        let mut table = vec![0u32; n * n];
        for i in 0..n {
            for j in 0..n {
                let p = (th[i] * th[j]).clamp(-1.0 + 1e-16, 1.0 - 1e-16);
                let l = 2.0 * p.atanh();
                let k = (l / delta).round() as isize + half as isize;
                table[i * n + j] = k.clamp(0, n as isize - 1) as u32;
            }
        }
        ScalarDe { delta, half, n, table }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn llr(&self, i: usize) -> f64 {
        (i as f64 - self.half as f64) * self.delta
    }

    pub fn erasure(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        d[self.half] = 1.0;
        d
    }

    /// Channel LLR density `N(2/s², 4/s²)` by exact cell probabilities.
    pub fn channel(&self, sigma: f64) -> Vec<f64> {
        let m = 2.0 / (sigma * sigma);
        let sd = (2.0 * m).sqrt();
        let cdf = |x: f64| 0.5 * erfc(-(x - m) / (sd * std::f64::consts::SQRT_2));
        (0..self.n)
            .map(|i| {
                let lo = if i == 0 { f64::NEG_INFINITY } else { self.llr(i) - 0.5 * self.delta };
                let hi = if i == self.n - 1 { f64::INFINITY } else { self.llr(i) + 0.5 * self.delta };
                let up = if hi.is_infinite() { 1.0 } else { cdf(hi) };
                let dn = if lo.is_infinite() { 0.0 } else { cdf(lo) };
                (up - dn).max(0.0)
            })
            .collect()
    }

    pub fn conv(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let last = self.n as isize - 1;
        for (i, &x) in a.iter().enumerate() {
            if x < 1e-300 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                let k = (i + j) as isize - self.half as isize;
                out[k.clamp(0, last) as usize] += x * y;
            }
        }
        out
    }

    pub fn boxplus(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &x) in a.iter().enumerate() {
            if x < 1e-300 {
                continue;
            }
            let row = &self.table[i * self.n..(i + 1) * self.n];
            for (j, &y) in b.iter().enumerate() {
                out[row[j] as usize] += x * y;
            }
        }
        out
    }

    fn power(&self, a: &[f64], k: usize, op: impl Fn(&[f64], &[f64]) -> Vec<f64>, unit: Vec<f64>) -> Vec<f64> {
        let mut acc = unit;
        for _ in 0..k {
            acc = op(&acc, a);
        }
        acc
    }

    /// Variable-to-check and new check-to-variable densities after one
    /// iteration from check density `c`. Both are renormalized: rounding
    /// drift in the mass would otherwise compound through the node powers.
    pub fn step(&self, ch: &[f64], c: &[f64], dl: usize, dr: usize) -> (Vec<f64>, Vec<f64>) {
        let v = normalized(self.power(c, dl - 1, |x, y| self.conv(x, y), ch.to_vec()));
        let mut unit = vec![0.0; self.n];
        unit[self.n - 1] = 1.0;
        let c_new = normalized(self.power(&v, dr - 1, |x, y| self.boxplus(x, y), unit));
        (v, c_new)
    }

    pub fn error_prob(&self, d: &[f64]) -> f64 {
        d[..self.half].iter().sum::<f64>() + 0.5 * d[self.half]
    }

    /// Whether BP decoding succeeds at `sigma` (error probability below
    /// `1e-7`); gives up when progress stalls.
    pub fn converges(&self, sigma: f64, dl: usize, dr: usize, max_iters: usize) -> bool {
        let ch = self.channel(sigma);
        let mut c = self.erasure();
        let mut best = f64::INFINITY;
        let mut since = 0;
        for _ in 0..max_iters {
            let (v, c2) = self.step(&ch, &c, dl, dr);
            c = c2;
            let p = self.error_prob(&v);
            if p < 1e-7 {
                return true;
            }
            if p < best * (1.0 - 1e-6) {
                best = p;
                since = 0;
            } else {
                since += 1;
                if since > 30 {
                    return false;
                }
            }
        }
        false
    }

    pub fn bp_threshold(&self, dl: usize, dr: usize, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if self.converges(mid, dl, dr, 3000) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// BP fixed point at `sigma` from the check density `c0`; returns the
    /// check-to-variable density.
    pub fn fixed_point(&self, sigma: f64, dl: usize, dr: usize, c0: &[f64]) -> Vec<f64> {
        let ch = self.channel(sigma);
        let mut c = c0.to_vec();
        for _ in 0..5000 {
            let (_, c2) = self.step(&ch, &c, dl, dr);
            let diff: f64 = c2.iter().zip(&c).map(|(a, b)| (a - b).abs()).sum();
            c = c2;
            if diff < 1e-11 {
                break;
            }
        }
        c
    }

    /// BP-GEXIT value at `sigma` for the extrinsic density `z` of a
    /// channel bit, as a ratio of sigma-derivatives of conditional entropy.
    pub fn gexit(&self, sigma: f64, z: &[f64]) -> f64 {
        let h = 1e-4 * sigma;
        let ent = |s: f64| -> (f64, f64) {
            let h0 = bpsk_expect(s, log2_1p_exp_neg);
            let mut he = 0.0;
            for (i, &p) in z.iter().enumerate() {
                if p < 1e-300 {
                    continue;
                }
                let zi = self.llr(i);
                he += p * bpsk_expect(s, |l| log2_1p_exp_neg(l + zi));
            }
            (h0, he)
        };
        let (a0, ae) = ent(sigma - h);
        let (b0, be) = ent(sigma + h);
        (be - ae) / (b0 - a0)
    }

    /// Extrinsic density of a channel bit: all `dl` incoming check messages.
    pub fn extrinsic(&self, c: &[f64], dl: usize) -> Vec<f64> {
        self.power(c, dl, |x, y| self.conv(x, y), self.erasure())
    }
}

fn normalized(mut d: Vec<f64>) -> Vec<f64> {
    let m: f64 = d.iter().sum();
    d.iter_mut().for_each(|x| *x /= m);
    d
}

/// Complementary error function (Numerical Recipes `erfcc`, |rel err| < 1.2e-7).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.265_512_23
            + t * (1.000_023_68
                + t * (0.374_091_96
                    + t * (0.096_784_18
                        + t * (-0.186_288_06
                            + t * (0.278_868_07 + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// `alpha = H(X|Y)` of the BPSK channel.
pub fn alpha_bpsk(sigma: f64) -> f64 {
    1.0 - c_bpsk(sigma)
}

pub fn alpha_bpsk_inverse(alpha: f64) -> f64 {
    c_bpsk_inverse(1.0 - alpha)
}

/// BP-GEXIT curve samples `(alpha, g)` of a regular ensemble over the BPSK
/// channel, on `alphas` sorted in decreasing order, warm-started from
/// the previous fixed point.
pub fn gexit_curve(de: &ScalarDe, dl: usize, dr: usize, alphas: &[f64]) -> Vec<(f64, f64)> {
    let mut c = de.erasure();
    let mut out = Vec::new();
    for &a in alphas {
        let s = alpha_bpsk_inverse(a);
        c = de.fixed_point(s, dl, dr, &c);
        let z = de.extrinsic(&c, dl);
        out.push((a, de.gexit(s, &z)));
    }
    out
}

/// Area threshold: the `alpha` where the area above it under the BP-GEXIT
/// curve equals `rate`. `curve` must be sorted by decreasing alpha and
/// reach beyond the threshold; the region above its first point counts as
/// `g = 1`.
pub fn area_threshold_alpha(curve: &[(f64, f64)], rate: f64) -> f64 {
    let mut area = 1.0 - curve[0].0;
    for w in curve.windows(2) {
        let ((a1, g1), (a0, g0)) = (w[0], w[1]);
        let seg = 0.5 * (g1 + g0) * (a1 - a0);
        if area + seg >= rate {
            // linear g within the segment: solve the quadratic for the cut
            let slope = (g1 - g0) / (a1 - a0);
            let need = rate - area;
            let (mut lo, mut hi) = (a0, a1);
            for _ in 0..100 {
                let x = 0.5 * (lo + hi);
                let gx = g1 - slope * (a1 - x);
                let part = 0.5 * (g1 + gx) * (a1 - x);
                if part > need {
                    lo = x;
                } else {
                    hi = x;
                }
            }
            return 0.5 * (lo + hi);
        }
        area += seg;
    }
    f64::NAN
}

/// Per-axis conditional entropy `H(X | Y, V)` (bits) of a Gray 4-PAM with
/// amplitudes `{-3,-1,1,3}/sqrt(10)`, noise variance `sigma^2/2` and
/// independent consistent Gaussian prior LLRs `N(m, 2m)` on both bits
/// (`m = 0` means no prior). Nested trapezoid quadrature.
pub fn pam4_entropy_with_prior(sigma: f64, m: f64) -> f64 {
    let amp = [-3.0, -1.0, 1.0, 3.0].map(|a: f64| a / 10f64.sqrt());
    // bit 0: sign (1 for negative), bit 1: outer level
    let bits = [[1u8, 1], [1, 0], [0, 0], [0, 1]];
    let s = sigma / 2f64.sqrt();
    let (nz, zmax) = if m > 0.0 { (141, 7.0) } else { (1, 0.0) };
    let dz = if nz > 1 { 2.0 * zmax / (nz - 1) as f64 } else { 1.0 };
    let zs: Vec<(f64, f64)> = (0..nz)
        .map(|i| {
            let z = -zmax + i as f64 * dz;
            let w = if nz > 1 { (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() * dz } else { 1.0 };
            (m + (2.0 * m).sqrt() * z, w)
        })
        .collect();
    let (nt, tmax) = (321, 8.0);
    let dt = 2.0 * tmax / (nt - 1) as f64;
    let mut h = 0.0;
    for (p, &ap) in amp.iter().enumerate() {
        for &(w0, c0) in &zs {
            for &(w1, c1) in &zs {
                // prior LLRs in the "positive favours 0" convention
                let v = [if bits[p][0] == 0 { w0 } else { -w0 }, if bits[p][1] == 0 { w1 } else { -w1 }];
                let logprior = |q: usize| -> f64 {
                    (0..2)
                        .map(|j| {
                            let x = if bits[q][j] == 0 { v[j] } else { -v[j] };
                            -(1.0 + (-x).exp()).ln()
                        })
                        .sum()
                };
                let lp: Vec<f64> = (0..4).map(logprior).collect();
                let mut acc = 0.0;
                for i in 0..nt {
                    let t = -tmax + i as f64 * dt;
                    let y = ap + s * t;
                    let wt = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt() * dt;
                    let terms: Vec<f64> = (0..4).map(|q| -(y - amp[q]).powi(2) / (2.0 * s * s) + lp[q]).collect();
                    let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = mx + terms.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
                    acc += wt * (lse - terms[p]);
                }
                h += 0.25 * c0 * c1 * acc / LN_2;
            }
        }
    }
    h
}

/// GEXIT value of the 4-PAM axis with Gaussian priors: the ratio of the
/// sigma-derivatives of the entropies with and without prior.
pub fn pam4_gexit(sigma: f64, m: f64) -> f64 {
    let d = 1e-3 * sigma;
    let ext = pam4_entropy_with_prior(sigma + d, m) - pam4_entropy_with_prior(sigma - d, m);
    let none = pam4_entropy_with_prior(sigma + d, 0.0) - pam4_entropy_with_prior(sigma - d, 0.0);
    ext / none
}
