//! Sampled pulse power spectra and their ACFs and pulses.
//!
//! DFT convention: the forward transform carries no factor and the inverse
//! carries `1/Lg`. With that choice the circular ACF of a pulse is exactly
//! the inverse DFT of its folded power spectrum, and any spectrum meeting
//! the Nyquist constraints at level `nt` has `psi[0] == 1`.

mod grid;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dft;
use crate::error::{Error, Result};
use crate::io::CsvTable;

pub use grid::GridSpec;

/// Imaginary residue allowed after inverting a Hermitian spectrum, relative
/// to the largest real sample.
const IMAG_RESIDUE_TOL: f64 = 1e-10;

/// One-sided sampled power spectrum `omega[0..=nb]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumVector {
    omega: Vec<f64>,
    grid: GridSpec,
}

impl SpectrumVector {
    pub fn new(omega: Vec<f64>, grid: GridSpec) -> Result<Self> {
        if omega.len() != grid.nb() + 1 {
            return Err(Error::InvalidArgument(format!(
                "spectrum has {} bins, grid expects {}",
                omega.len(),
                grid.nb() + 1
            )));
        }
        if let Some((k, v)) = omega.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "power spectrum must be finite and nonnegative (bin {k} = {v})"
            )));
        }
        Ok(Self { omega, grid })
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn into_omega(self) -> Vec<f64> {
        self.omega
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(vec!["omega".into()]);
        grid_meta(&mut t, &self.grid);
        for v in &self.omega {
            t.push_row(vec![*v]);
        }
        t
    }
}

/// Discrete (circular) ACF `psi[0..lg]` of a pulse on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteAcf {
    psi: Vec<f64>,
    grid: GridSpec,
}

impl DiscreteAcf {
    /// Wraps raw ACF samples, checking circular symmetry and the zero-lag peak.
    pub fn from_samples(psi: Vec<f64>, grid: GridSpec) -> Result<Self> {
        let lg = grid.lg();
        if psi.len() != lg {
            return Err(Error::InvalidArgument(format!(
                "ACF has {} samples, grid expects {lg}",
                psi.len()
            )));
        }
        let scale = psi.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 1..lg {
            if (psi[k] - psi[lg - k]).abs() > 1e-12 * scale {
                return Err(Error::Consistency(format!(
                    "ACF is not circularly symmetric at lag {k}"
                )));
            }
        }
        if psi[0] + 1e-12 * scale < scale {
            return Err(Error::Consistency("ACF peak is not at zero lag".into()));
        }
        Ok(Self { psi, grid })
    }

    /// Circular ACF of a real pulse of length `lg`, by direct summation.
    pub fn from_pulse(pulse: &[f64], grid: GridSpec) -> Result<Self> {
        let lg = grid.lg();
        if pulse.len() > lg {
            return Err(Error::InvalidArgument(format!(
                "pulse of {} samples exceeds Lg={lg}",
                pulse.len()
            )));
        }
        let mut padded = pulse.to_vec();
        padded.resize(lg, 0.0);
        let psi = (0..lg)
            .map(|k| (0..lg).map(|t| padded[t] * padded[(t + lg - k) % lg]).sum())
            .collect();
        Self::from_samples(psi, grid)
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Rescaled so that `psi[0] == 1`.
    pub fn normalized(&self) -> Self {
        let s = self.psi[0].recip();
        Self {
            psi: self.psi.iter().map(|v| v * s).collect(),
            grid: self.grid,
        }
    }

    /// ACF at an integer lag, treated as zero beyond `ceil(lg/2)`.
    ///
    /// The circular samples stand in for the linear ACF of a pulse that is
    /// time-limited to one grid period; lags past the half period belong to
    /// the mirrored copy and are dropped.
    pub fn at_lag(&self, lag: i64) -> f64 {
        let a = lag.unsigned_abs() as usize;
        if a <= self.grid.max_lag() {
            self.psi[a % self.grid.lg()]
        } else {
            0.0
        }
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(vec!["lag".into(), "psi".into()]);
        grid_meta(&mut t, &self.grid);
        for (k, v) in self.psi.iter().enumerate() {
            t.push_row(vec![k as f64, *v]);
        }
        t
    }
}

fn grid_meta(t: &mut CsvTable, g: &GridSpec) {
    t.meta("lg", g.lg());
    t.meta("nb", g.nb());
    t.meta("nt", g.nt());
    t.meta("beta", g.beta());
}

/// Mirrors `omega[0..=nb]` onto `lg` bins with zeros out of band.
pub(crate) fn fold_bins(omega: &[f64], lg: usize) -> Vec<f64> {
    let nb = omega.len() - 1;
    debug_assert!(2 * nb < lg);
    let mut out = vec![0.0; lg];
    out[..=nb].copy_from_slice(omega);
    for k in 1..=nb {
        out[lg - k] = omega[k];
    }
    out
}

/// Inverse DFT of a real, Hermitian-symmetric bin vector, imaginary part checked.
fn real_inverse(bins: &[f64]) -> Result<Vec<f64>> {
    let mut buf: Vec<Complex64> = bins.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft::inverse(&mut buf);
    let peak = buf.iter().fold(0.0_f64, |m, v| m.max(v.re.abs())).max(f64::MIN_POSITIVE);
    let resid = buf.iter().fold(0.0_f64, |m, v| m.max(v.im.abs()));
    if resid > IMAG_RESIDUE_TOL * peak {
        return Err(Error::Consistency(format!(
            "inverse DFT left imaginary residue {resid:.3e} (peak {peak:.3e})"
        )));
    }
    Ok(buf.into_iter().map(|v| v.re).collect())
}

/// The B-matrix action: one-sided spectrum to the full `lg`-bin layout.
pub fn fold_spectrum(s: &SpectrumVector) -> Vec<f64> {
    fold_bins(&s.omega, s.grid.lg())
}

/// ACF samples `psi = F^H B omega` (inverse DFT with `1/lg`).
pub fn spectrum_to_acf(s: &SpectrumVector) -> Result<DiscreteAcf> {
    let psi = real_inverse(&fold_spectrum(s))?;
    DiscreteAcf::from_samples(psi, s.grid)
}

/// Zero-phase pulse with power spectrum `s`, unit energy, peak at `lg / 2`.
pub fn spectrum_to_pulse(s: &SpectrumVector) -> Result<Vec<f64>> {
    let lg = s.grid.lg();
    let amplitude: Vec<f64> = fold_spectrum(s).into_iter().map(f64::sqrt).collect();
    let mut pulse = real_inverse(&amplitude)?;
    let energy: f64 = pulse.iter().map(|v| v * v).sum();
    if energy <= 0.0 {
        return Err(Error::InvalidArgument("spectrum has zero energy".into()));
    }
    let scale = energy.sqrt().recip();
    pulse.iter_mut().for_each(|v| *v *= scale);
    pulse.rotate_right(lg / 2);
    Ok(pulse)
}

/// Raised-cosine power spectrum scaled to level `nt` in the flat band.
///
/// The root of this spectrum is the RRC pulse. A bin sitting exactly at half
/// the symbol rate gets `nt / 2`, which is where every roll-off > 0 puts it
/// and keeps the folded spectrum constant at `beta = 0`.
pub fn rrc_spectrum(grid: &GridSpec) -> SpectrumVector {
    let nt = grid.nt() as f64;
    let k = grid.symbol_bins();
    let flat = grid.flat_bins();
    let beta = grid.beta();
    let omega = (0..=grid.nb())
        .map(|n| {
            if 2 * n == k {
                nt / 2.0
            } else if n <= flat {
                nt
            } else {
                let f = n as f64 / k as f64;
                let arg = PI / beta * (f - (1.0 - beta) / 2.0);
                (nt / 2.0 * (1.0 + arg.cos())).max(0.0)
            }
        })
        .collect();
    SpectrumVector {
        omega,
        grid: *grid,
    }
}
