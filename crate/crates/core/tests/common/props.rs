//! Density-algebra invariants as reusable checks, shared by the property
//! suite and the acceptance runner.

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use scbicm::channel::{ebn0_to_sigma, sigma_to_ebn0};
use scbicm::constellation::{Constellation, Modulation};
use scbicm::density::{chk_conv, var_conv, DeltaKind, Grid, LlrDensity};

type Check = std::result::Result<(), TestCaseError>;

pub fn grid() -> Grid {
    Grid::new(0.25, 64).unwrap()
}

/// Symmetric density from weights on `|L| = k * delta` (k >= 1), a mass at
/// zero and a mass at `+inf`. The finite support stays within a third of
/// the range so that three-fold sums do not saturate.
pub fn symmetric(weights: &[f64], zero: f64, inf: f64) -> LlrDensity {
    let g = grid();
    let mut d = LlrDensity::zeros(g);
    let n = g.half_cells;
    for (i, &w) in weights.iter().enumerate() {
        let k = (i % (n / 3)) + 1;
        let x = k as f64 * g.delta;
        let p = 1.0 / (1.0 + (-x).exp());
        d.pmf[n + k] += w * p;
        d.pmf[n - k] += w * (1.0 - p);
    }
    d.pmf[n] += zero;
    d.plus_inf += inf;
    let m = d.total_mass();
    d.scale_mut(1.0 / m);
    d
}

/// Mixture of consistent Gaussians `N(m, 2m)` on a 0.1-wide grid.
pub fn gaussian_mix(means: &[f64]) -> LlrDensity {
    let g = Grid::new(0.1, 300).unwrap();
    let mut d = LlrDensity::zeros(g);
    for &m in means {
        let sd = (2.0 * m).sqrt();
        for (i, p) in d.pmf.iter_mut().enumerate() {
            let z = (g.value(i) - m) / sd;
            *p += (-0.5 * z * z).exp();
        }
    }
    let t = d.total_mass();
    d.scale_mut(1.0 / t);
    d
}

pub fn arb_message() -> impl Strategy<Value = LlrDensity> {
    prop::collection::vec(0.5..15.0f64, 1..4).prop_map(|m| gaussian_mix(&m))
}

pub fn arb_symmetric() -> impl Strategy<Value = LlrDensity> {
    (prop::collection::vec(0.0..1.0f64, 1..40), 0.0..0.3f64, 0.0..0.3f64)
        .prop_filter("nonzero mass", |(w, z, i)| w.iter().sum::<f64>() + z + i > 1e-3)
        .prop_map(|(w, z, i)| symmetric(&w, z, i))
}

/// Arbitrary (not necessarily symmetric) unit-mass density.
pub fn arb_density() -> impl Strategy<Value = LlrDensity> {
    (prop::collection::vec(0.0..1.0f64, 129), 0.0..0.2f64, 0.0..0.2f64)
        .prop_filter("nonzero mass", |(w, _, _)| w.iter().sum::<f64>() > 1e-3)
        .prop_map(|(w, pi, mi)| {
            let mut d = LlrDensity::zeros(grid());
            d.pmf.copy_from_slice(&w);
            d.plus_inf = pi;
            d.minus_inf = mi;
            let m = d.total_mass();
            d.scale_mut(1.0 / m);
            d
        })
}

pub fn delta_identities(a: &LlrDensity) -> Check {
    let g = grid();
    let zero = LlrDensity::delta(g, DeltaKind::Zero);
    let inf = LlrDensity::delta(g, DeltaKind::PlusInfinity);
    prop_assert!(var_conv(a, &zero).unwrap().l1_distance(a) < 1e-12);
    prop_assert!(chk_conv(a, &inf).unwrap().l1_distance(a) < 1e-12);
    prop_assert!(chk_conv(a, &zero).unwrap().l1_distance(&zero) < 1e-12);
    Ok(())
}

pub fn perfect_knowledge_absorbs(a: &LlrDensity) -> Check {
    let inf = LlrDensity::delta(grid(), DeltaKind::PlusInfinity);
    prop_assert!(var_conv(a, &inf).unwrap().l1_distance(&inf) < 1e-12);
    Ok(())
}

pub fn commutativity(a: &LlrDensity, b: &LlrDensity) -> Check {
    prop_assert!(var_conv(a, b).unwrap().l1_distance(&var_conv(b, a).unwrap()) < 1e-10);
    prop_assert!(chk_conv(a, b).unwrap().l1_distance(&chk_conv(b, a).unwrap()) < 1e-12);
    Ok(())
}

pub fn associativity(a: &LlrDensity, b: &LlrDensity, c: &LlrDensity) -> Check {
    let l = var_conv(&var_conv(a, b).unwrap(), c).unwrap();
    let r = var_conv(a, &var_conv(b, c).unwrap()).unwrap();
    prop_assert!(l.l1_distance(&r) < 1e-9);
    Ok(())
}

/// Pairwise requantization makes the check-node operation only
/// approximately associative.
pub fn check_associativity(a: &LlrDensity, b: &LlrDensity, c: &LlrDensity) -> Check {
    let l = chk_conv(&chk_conv(a, b).unwrap(), c).unwrap();
    let r = chk_conv(a, &chk_conv(b, c).unwrap()).unwrap();
    prop_assert!(l.l1_distance(&r) < 1e-2, "{}", l.l1_distance(&r));
    prop_assert!((l.error_prob() - r.error_prob()).abs() < 1e-3);
    Ok(())
}

pub fn mass_conservation(a: &LlrDensity, b: &LlrDensity) -> Check {
    prop_assert!((chk_conv(a, b).unwrap().total_mass() - 1.0).abs() < 1e-12);
    // saturation keeps out-of-range sums on the grid; -inf + +inf is a tie
    prop_assert!((var_conv(a, b).unwrap().total_mass() - 1.0).abs() < 1e-9);
    Ok(())
}

pub fn symmetry_preservation(a: &LlrDensity, b: &LlrDensity) -> Check {
    prop_assert!(a.symmetry_residual() < 1e-12);
    prop_assert!(var_conv(a, b).unwrap().symmetry_residual() < 1e-9);
    Ok(())
}

/// Quantizing the check-node output breaks exact symmetry by O(delta).
pub fn check_symmetry_preservation(a: &LlrDensity, b: &LlrDensity) -> Check {
    prop_assert!(a.symmetry_residual() < 1e-2);
    prop_assert!(chk_conv(a, b).unwrap().symmetry_residual() < 2e-2);
    Ok(())
}

pub fn ebn0_round_trip(ebn0: f64, rate: f64, m: usize) -> Check {
    let s = ebn0_to_sigma(ebn0, rate, m).unwrap();
    prop_assert!((sigma_to_ebn0(s, rate, m).unwrap() - ebn0).abs() < 1e-12);
    Ok(())
}

pub fn arb_ebn0_case() -> impl Strategy<Value = (f64, f64, usize)> {
    (-10.0..30.0f64, 0.01..0.99f64, prop::sample::select(vec![2usize, 4, 6]))
}

/// Unit energy, bijective labels, balanced bit partitions and a Gray
/// labelled symmetric axis for every supported constellation.
pub fn constellation_invariants() {
    for m in Modulation::ALL {
        let c = Constellation::new(m);
        let k = c.len();
        assert_eq!(k, 1 << c.bits_per_symbol);
        assert!((c.mean_energy() - 1.0).abs() < 1e-12, "{m}");
        let mut labels = c.labels.clone();
        labels.sort_unstable();
        assert_eq!(labels, (0..k as u32).collect::<Vec<_>>(), "{m}: labels must be a bijection");
        for b in 0..c.bits_per_symbol {
            let p = c.bit_partition(b).unwrap();
            assert_eq!(p.zero_set.len(), k / 2);
            assert_eq!(p.one_set.len(), k / 2);
        }
        // Gray: nearest neighbours on each axis differ in exactly one bit
        let pam = c.axis();
        for p in 1..pam.amplitudes.len() {
            assert_eq!((pam.labels[p] ^ pam.labels[p - 1]).count_ones(), 1, "{m}");
            assert!(pam.amplitudes[p] > pam.amplitudes[p - 1]);
        }
        // symmetric amplitudes
        let sum: f64 = pam.amplitudes.iter().sum();
        assert!(sum.abs() < 1e-12);
    }
}
