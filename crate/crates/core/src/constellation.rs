//! Square QAM constellations with per-axis Gray labelling.
//!
//! Symbol `s` carries the `M`-bit label `s` itself: the upper `M/2` bits
//! address the in-phase amplitude and the lower `M/2` bits the quadrature
//! amplitude. Bit `m = 0` is the most significant label bit. Along each
//! axis, amplitudes in ascending order receive the complemented
//! binary-reflected Gray code, so a `0` in the first axis bit means a
//! positive amplitude and a `0` in every further bit means the inner half of
//! the corresponding reflection. Positive LLRs therefore favour positive
//! amplitudes.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    #[serde(rename = "qpsk")]
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
    #[serde(rename = "64qam")]
    Qam64,
}

impl Modulation {
    pub const ALL: [Modulation; 3] = [Modulation::Qpsk, Modulation::Qam16, Modulation::Qam64];

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
            Modulation::Qam64 => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "16qam",
            Modulation::Qam64 => "64qam",
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" | "4qam" => Ok(Modulation::Qpsk),
            "16qam" => Ok(Modulation::Qam16),
            "64qam" => Ok(Modulation::Qam64),
            other => Err(Error::Config(format!("unsupported modulation '{other}'"))),
        }
    }
}

/// One real axis of a square QAM constellation: a Gray-labelled PAM.
#[derive(Debug, Clone, PartialEq)]
pub struct PamAxis {
    /// Amplitudes in ascending order, already scaled for unit symbol energy.
    pub amplitudes: Vec<f64>,
    /// Axis label of each amplitude (`bits` bits, MSB = first axis bit).
    pub labels: Vec<u32>,
    pub bits: usize,
}

impl PamAxis {
    /// Value of axis bit `j` for amplitude index `p`.
    #[inline]
    pub fn bit(&self, p: usize, j: usize) -> u32 {
        (self.labels[p] >> (self.bits - 1 - j)) & 1
    }

    /// Amplitude index carrying a given axis label.
    pub fn index_of_label(&self, label: u32) -> usize {
        self.labels.iter().position(|&l| l == label).expect("axis labels are a bijection")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub modulation: Modulation,
    pub bits_per_symbol: usize,
    /// Symbol points indexed by label.
    pub symbols: Vec<Complex64>,
    pub labels: Vec<u32>,
    axis: PamAxis,
}

/// Symbol-index sets where label bit `bit_index` is 0 resp. 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPartition {
    pub bit_index: usize,
    pub zero_set: Vec<usize>,
    pub one_set: Vec<usize>,
}

fn gray(p: u32) -> u32 {
    p ^ (p >> 1)
}

impl Constellation {
    pub fn new(modulation: Modulation) -> Self {
        let m = modulation.bits_per_symbol();
        let h = m / 2;
        let k = 1usize << h;
        // per-axis energy of {±1, ±3, ...} is (K^2 - 1) / 3
        let scale = (2.0 * ((k * k - 1) as f64) / 3.0).sqrt().recip();
        let amplitudes: Vec<f64> = (0..k).map(|p| (2.0 * p as f64 - (k as f64 - 1.0)) * scale).collect();
        let labels: Vec<u32> = (0..k as u32).map(|p| gray(p) ^ (k as u32 - 1)).collect();
        let axis = PamAxis { amplitudes, labels, bits: h };

        let n = 1usize << m;
        let mut symbols = vec![Complex64::new(0.0, 0.0); n];
        for (pi, &li) in axis.labels.iter().enumerate() {
            for (pq, &lq) in axis.labels.iter().enumerate() {
                let label = ((li << h) | lq) as usize;
                symbols[label] = Complex64::new(axis.amplitudes[pi], axis.amplitudes[pq]);
            }
        }
        Constellation { modulation, bits_per_symbol: m, symbols, labels: (0..n as u32).collect(), axis }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Label bit `m` of symbol `s`.
    #[inline]
    pub fn bit(&self, s: usize, m: usize) -> u32 {
        (self.labels[s] >> (self.bits_per_symbol - 1 - m)) & 1
    }

    /// The per-axis PAM; identical for I and Q.
    pub fn axis(&self) -> &PamAxis {
        &self.axis
    }

    /// Amplitude indices `(in-phase, quadrature)` of symbol `s`.
    pub fn axis_indices(&self, s: usize) -> (usize, usize) {
        let h = self.axis.bits;
        let mask = (1u32 << h) - 1;
        let l = self.labels[s];
        (self.axis.index_of_label(l >> h), self.axis.index_of_label(l & mask))
    }

    pub fn bit_partition(&self, m: usize) -> Result<BitPartition> {
        if m >= self.bits_per_symbol {
            return Err(Error::OutOfRange(format!("bit index {m} for {} bits per symbol", self.bits_per_symbol)));
        }
        let (zero_set, one_set) = (0..self.len()).partition(|&s| self.bit(s, m) == 0);
        Ok(BitPartition { bit_index: m, zero_set, one_set })
    }

    pub fn mean_energy(&self) -> f64 {
        self.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.len() as f64
    }
}

/// Convenience alias for [`Constellation::new`].
pub fn build_constellation(modulation: Modulation) -> Constellation {
    Constellation::new(modulation)
}
