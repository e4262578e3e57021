//! Check-node (`⊞`) convolution on the LLR grid.
//!
//! For magnitudes `a <= b` the output magnitude
//! `2 atanh(tanh(a/2) tanh(b/2))` is quantized to the grid; as `b` grows it
//! climbs monotonically to `a`, so for fixed `a` the pairs `(a, b)` split
//! into a few dozen runs of consecutive `b` that land in the same output
//! cell. Each run costs one prefix-sum difference, which makes a pairwise
//! convolution `O(n * runs)` instead of `O(n^2)`. Signs multiply.

use super::{DeltaKind, Grid, LlrDensity};
use crate::Result;

/// Quantized check-node map stored as runs over the larger magnitude.
#[derive(Debug)]
pub struct CheckTable {
    grid: Grid,
    /// `runs[offsets[i]..offsets[i + 1]]` covers `j = i..=n` for magnitude `i`.
    offsets: Vec<usize>,
    /// `(output magnitude index, exclusive end of the run)`.
    runs: Vec<(u32, u32)>,
}

/// Magnitude of `a ⊞ b` for `a, b >= 0`, without cancellation at large LLRs.
#[inline]
pub(crate) fn boxplus_magnitude(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    lo - (-(hi - lo)).exp().ln_1p() + (-(hi + lo)).exp().ln_1p()
}

impl CheckTable {
    pub fn new(grid: Grid) -> Self {
        let n = grid.half_cells;
        let d = grid.delta;
        let q = |i: usize, j: usize| -> u32 {
            let z = boxplus_magnitude(i as f64 * d, j as f64 * d);
            ((z / d).round().max(0.0) as u32).min(i.min(j) as u32)
        };
        let mut offsets = Vec::with_capacity(n + 2);
        let mut runs = Vec::new();
        for i in 0..=n {
            offsets.push(runs.len());
            let mut cur = q(i, i);
            let mut j = i + 1;
            while cur < i as u32 && j <= n {
                let k = q(i, j);
                if k != cur {
                    runs.push((cur, j as u32));
                    cur = k;
                }
                j += 1;
            }
            runs.push((cur, n as u32 + 1));
        }
        offsets.push(runs.len());
        CheckTable { grid, offsets, runs }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Average number of runs per magnitude (a cost measure).
    pub fn mean_runs(&self) -> f64 {
        self.runs.len() as f64 / (self.grid.half_cells + 1) as f64
    }

    #[inline]
    fn runs_of(&self, i: usize) -> &[(u32, u32)] {
        &self.runs[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Signed magnitude view of a density: index 0 holds the zero cell.
struct Magnitudes {
    pos: Vec<f64>,
    neg: Vec<f64>,
}

impl Magnitudes {
    fn of(d: &LlrDensity) -> Self {
        let n = d.grid.half_cells;
        let mut pos = d.pmf[n..].to_vec();
        let mut neg: Vec<f64> = d.pmf[..=n].iter().rev().copied().collect();
        neg[0] = 0.0;
        pos.shrink_to_fit();
        Magnitudes { pos, neg }
    }

    fn prefix(v: &[f64]) -> Vec<f64> {
        let mut p = Vec::with_capacity(v.len() + 1);
        let mut acc = 0.0;
        p.push(0.0);
        for x in v {
            acc += x;
            p.push(acc);
        }
        p
    }
}

/// Accumulates `sum_{j >= start(i)} x_i * y_j` into the output cells, using
/// runs of `y` from prefix sums `yp`, `ym`.
#[inline]
fn accumulate(
    table: &CheckTable,
    i: usize,
    first: usize,
    (xp, xm): (f64, f64),
    (yp, ym): (&[f64], &[f64]),
    out_pos: &mut [f64],
    out_neg: &mut [f64],
    weight: f64,
) {
    let mut start = first;
    for &(k, end) in table.runs_of(i) {
        let end = end as usize;
        if end <= start {
            continue;
        }
        let sp = yp[end] - yp[start];
        let sm = ym[end] - ym[start];
        let k = k as usize;
        out_pos[k] += weight * (xp * sp + xm * sm);
        out_neg[k] += weight * (xp * sm + xm * sp);
        start = end;
    }
}

fn assemble(grid: Grid, out_pos: &[f64], out_neg: &[f64], plus_inf: f64, minus_inf: f64) -> LlrDensity {
    let n = grid.half_cells;
    let mut d = LlrDensity::zeros(grid);
    d.pmf[n] = out_pos[0] + out_neg[0];
    for k in 1..=n {
        d.pmf[n + k] = out_pos[k];
        d.pmf[n - k] = out_neg[k];
    }
    d.plus_inf = plus_inf;
    d.minus_inf = minus_inf;
    d
}

/// `a ⊞ b`: density of `2 atanh(tanh(x/2) tanh(y/2))` for independent
/// `x ~ a`, `y ~ b`. `Δ_{+inf}` is the identity and `Δ_0` annihilates.
pub fn chk_conv(a: &LlrDensity, b: &LlrDensity) -> Result<LlrDensity> {
    a.ensure_same_grid(b)?;
    let table = a.grid.check_table();
    let n = a.grid.half_cells;
    let ma = Magnitudes::of(a);
    let mb = Magnitudes::of(b);
    let (ap, am) = (Magnitudes::prefix(&ma.pos), Magnitudes::prefix(&ma.neg));
    let (bp, bm) = (Magnitudes::prefix(&mb.pos), Magnitudes::prefix(&mb.neg));
    let mut out_pos = vec![0.0; n + 1];
    let mut out_neg = vec![0.0; n + 1];

    for i in 0..=n {
        let x = (ma.pos[i], ma.neg[i]);
        if x.0 != 0.0 || x.1 != 0.0 {
            accumulate(&table, i, i, x, (&bp, &bm), &mut out_pos, &mut out_neg, 1.0);
        }
        let y = (mb.pos[i], mb.neg[i]);
        if y.0 != 0.0 || y.1 != 0.0 {
            accumulate(&table, i, i + 1, y, (&ap, &am), &mut out_pos, &mut out_neg, 1.0);
        }
    }
    // an infinite input passes the other message through, with its sign
    for i in 0..=n {
        out_pos[i] += a.plus_inf * mb.pos[i] + a.minus_inf * mb.neg[i] + b.plus_inf * ma.pos[i] + b.minus_inf * ma.neg[i];
        out_neg[i] += a.plus_inf * mb.neg[i] + a.minus_inf * mb.pos[i] + b.plus_inf * ma.neg[i] + b.minus_inf * ma.pos[i];
    }
    let plus = a.plus_inf * b.plus_inf + a.minus_inf * b.minus_inf;
    let minus = a.plus_inf * b.minus_inf + a.minus_inf * b.plus_inf;
    Ok(assemble(a.grid, &out_pos, &out_neg, plus, minus))
}

/// `a ⊞ a` using the symmetry of the pair sum.
fn chk_square(a: &LlrDensity) -> LlrDensity {
    let table = a.grid.check_table();
    let n = a.grid.half_cells;
    let ma = Magnitudes::of(a);
    let (ap, am) = (Magnitudes::prefix(&ma.pos), Magnitudes::prefix(&ma.neg));
    let mut out_pos = vec![0.0; n + 1];
    let mut out_neg = vec![0.0; n + 1];
    for i in 0..=n {
        let (xp, xm) = (ma.pos[i], ma.neg[i]);
        if xp == 0.0 && xm == 0.0 {
            continue;
        }
        let k0 = table.runs_of(i)[0].0 as usize;
        out_pos[k0] += xp * xp + xm * xm;
        out_neg[k0] += 2.0 * xp * xm;
        accumulate(&table, i, i + 1, (xp, xm), (&ap, &am), &mut out_pos, &mut out_neg, 2.0);
    }
    for i in 0..=n {
        out_pos[i] += 2.0 * (a.plus_inf * ma.pos[i] + a.minus_inf * ma.neg[i]);
        out_neg[i] += 2.0 * (a.plus_inf * ma.neg[i] + a.minus_inf * ma.pos[i]);
    }
    let plus = a.plus_inf * a.plus_inf + a.minus_inf * a.minus_inf;
    let minus = 2.0 * a.plus_inf * a.minus_inf;
    assemble(a.grid, &out_pos, &out_neg, plus, minus)
}

/// `a^{⊞k}` by repeated squaring (`k = 0` gives `Δ_{+inf}`).
pub fn chk_power(a: &LlrDensity, k: usize) -> LlrDensity {
    let mut result: Option<LlrDensity> = None;
    let mut base = a.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => chk_conv(&r, &base).expect("same grid"),
            });
        }
        e >>= 1;
        if e > 0 {
            base = chk_square(&base);
        }
    }
    result.unwrap_or_else(|| LlrDensity::delta(a.grid, DeltaKind::PlusInfinity))
}
