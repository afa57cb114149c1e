use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INT_TOL: f64 = 1e-9;

fn as_integer(x: f64) -> Option<usize> {
    let r = x.round();
    if r >= 0.0 && (x - r).abs() <= INT_TOL * r.max(1.0) {
        Some(r as usize)
    } else {
        None
    }
}

/// Discrete frequency/time grid shared by every spectrum, ACF and pulse.
///
/// `lg` is the DFT length, `nb` the index of the last in-band bin, `nt` the
/// number of samples per symbol and `beta` the roll-off. Bin `k` sits at
/// `k / symbol_bins()` in units of the symbol rate, so the band edge `nb` is
/// at `(1 + beta) / 2` and the fully flat part ends at bin `flat_bins()`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct GridSpec {
    lg: usize,
    nb: usize,
    nt: usize,
    beta: f64,
}

#[derive(Deserialize)]
struct RawGrid {
    lg: usize,
    nb: usize,
    beta: f64,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.lg, raw.nb, raw.beta)
    }
}

impl GridSpec {
    /// Validates `(lg, nb, beta)` and derives the samples per symbol.
    pub fn new(lg: usize, nb: usize, beta: f64) -> Result<Self> {
        Self::check(lg, nb, beta).map_err(|why| {
            let valid = Self::valid_nb(lg, beta);
            let hint = if valid.is_empty() {
                "no NB value is valid for this (Lg, beta)".to_string()
            } else {
                format!("valid NB values for Lg={lg}, beta={beta}: {valid:?}")
            };
            Error::InvalidGrid(format!("{why}; {hint}"))
        })
    }

    fn check(lg: usize, nb: usize, beta: f64) -> std::result::Result<Self, String> {
        if !(0.0..=1.0).contains(&beta) || !beta.is_finite() {
            return Err(format!("roll-off {beta} outside [0, 1]"));
        }
        if nb == 0 || 2 * nb + 1 > lg {
            return Err(format!("band of {nb} bins does not fit Lg={lg} (need 2NB+1 <= Lg)"));
        }
        let nt = as_integer((1.0 + beta) * lg as f64 / (2.0 * nb as f64))
            .filter(|&nt| nt >= 1)
            .ok_or_else(|| format!("samples per symbol (1+beta)Lg/(2NB) is not an integer for NB={nb}"))?;
        if !lg.is_multiple_of(nt) {
            return Err(format!("Lg={lg} is not a multiple of NT={nt}"));
        }
        let k = lg / nt;
        if as_integer(2.0 * nb as f64 / (1.0 + beta)) != Some(k) {
            return Err(format!("2NB/(1+beta) is not the integer {k}"));
        }
        if as_integer((1.0 - beta) * nb as f64 / (1.0 + beta)).is_none() {
            return Err(format!("(1-beta)NB/(1+beta) is not an integer for NB={nb}"));
        }
        Ok(Self { lg, nb, nt, beta })
    }

    /// All band sizes that make a valid grid with this `lg` and `beta`.
    pub fn valid_nb(lg: usize, beta: f64) -> Vec<usize> {
        (1..=lg.saturating_sub(1) / 2)
            .filter(|&nb| Self::check(lg, nb, beta).is_ok())
            .collect()
    }

    /// Smallest valid grid with `nt` samples per symbol and `lg >= min_lg`.
    ///
    /// Searches the symbol-rate bin count upward; fails if `beta` has no
    /// exact representation within a bounded search.
    pub fn for_beta(beta: f64, nt: usize, min_lg: usize) -> Result<Self> {
        if nt == 0 {
            return Err(Error::InvalidGrid("NT must be positive".into()));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidGrid(format!("roll-off {beta} outside [0, 1]")));
        }
        let k_min = min_lg.div_ceil(nt).max(2);
        for k in k_min..k_min + 4096 {
            let nb = (1.0 + beta) * k as f64 / 2.0;
            if let Some(nb) = as_integer(nb) {
                if let Ok(g) = Self::check(nt * k, nb, beta) {
                    return Ok(g);
                }
            }
        }
        Err(Error::InvalidGrid(format!(
            "no grid with NT={nt} and Lg >= {min_lg} represents beta={beta} exactly; nearest representable: {}",
            Self::nearest_beta(beta, k_min)
        )))
    }

    /// Closest roll-off to `beta` that is exact with `k` symbol-rate bins.
    pub fn nearest_beta(beta: f64, k: usize) -> f64 {
        // Exact iff beta*k is an integer of the same parity as k.
        let k = k.max(2) as f64;
        let mut best = 0.0;
        let mut m = if (k as usize).is_multiple_of(2) { 0.0 } else { 1.0 };
        while m <= k {
            let cand = m / k;
            if (cand - beta).abs() < (best - beta).abs() {
                best = cand;
            }
            m += 2.0;
        }
        best
    }

    pub fn lg(&self) -> usize {
        self.lg
    }

    pub fn nb(&self) -> usize {
        self.nb
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Bin index of the symbol rate, `lg / nt` (also `2nb / (1 + beta)`).
    pub fn symbol_bins(&self) -> usize {
        self.lg / self.nt
    }

    /// Last bin of the flat (non-rolled-off) part, `(1 - beta) nb / (1 + beta)`.
    pub fn flat_bins(&self) -> usize {
        self.symbol_bins() - self.nb
    }

    /// Largest lag index the ACF is evaluated at, `ceil(lg / 2)`.
    pub fn max_lag(&self) -> usize {
        self.lg.div_ceil(2)
    }
}
