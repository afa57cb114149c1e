//! Monte-Carlo frame synthesis and empirical ACF measurement.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acf_stats::{sidelobe_peaks, to_db, AcfStatistics, LagRegion};
use crate::constellation::{draw_frame, Constellation};
use crate::dft;
use crate::error::{Error, Result};

/// `sum_n s_n p[t - n nt]`, linear superposition of length `(L-1) nt + len(p)`.
pub fn synthesize_frame(symbols: &[Complex64], pulse: &[f64], nt: usize) -> Vec<Complex64> {
    if symbols.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Complex64::new(0.0, 0.0); (symbols.len() - 1) * nt + pulse.len()];
    for (n, &s) in symbols.iter().enumerate() {
        for (o, &p) in out[n * nt..n * nt + pulse.len()].iter_mut().zip(pulse) {
            *o += s * p;
        }
    }
    out
}

/// Frame wrapped onto one pulse period: `sum_n s_n p[(t - n nt) mod len(p)]`.
///
/// The design's ACF is circular on this period, so matched filtering the
/// wrapped frame sees exactly the designed Nyquist zeros.
pub fn synthesize_frame_periodic(symbols: &[Complex64], pulse: &[f64], nt: usize) -> Result<Vec<Complex64>> {
    let lg = pulse.len();
    if symbols.len() * nt > lg {
        return Err(Error::InvalidArgument(format!(
            "{} symbols of {nt} samples do not fit one period of {lg}",
            symbols.len()
        )));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); lg];
    for (n, &s) in symbols.iter().enumerate() {
        for (t, &p) in pulse.iter().enumerate() {
            out[(t + n * nt) % lg] += s * p;
        }
    }
    Ok(out)
}

/// Circular matched filter sampled at `k nt`, the receiver for
/// [`synthesize_frame_periodic`].
pub fn matched_filter_periodic(signal: &[Complex64], pulse: &[f64], nt: usize, frame_len: usize) -> Vec<Complex64> {
    let lg = pulse.len();
    (0..frame_len)
        .map(|k| {
            pulse
                .iter()
                .enumerate()
                .map(|(t, &p)| signal[(t + k * nt) % lg] * p)
                .sum()
        })
        .collect()
}

/// Linear ACF `chi[k] = sum_t x[t] conj(x[t - k])` for `k = -maxlag ..= maxlag`.
///
/// Index `maxlag + k` holds lag `k`.
pub fn empirical_acf(signal: &[Complex64], maxlag: usize) -> Result<Vec<Complex64>> {
    let pos = acf_nonnegative(signal, maxlag)?;
    let mut out = Vec::with_capacity(2 * maxlag + 1);
    out.extend(pos[1..].iter().rev().map(|v| v.conj()));
    out.extend_from_slice(&pos);
    Ok(out)
}

/// Lags `0 ..= maxlag` only, via a zero-padded FFT.
pub fn acf_nonnegative(signal: &[Complex64], maxlag: usize) -> Result<Vec<Complex64>> {
    if maxlag >= signal.len() {
        return Err(Error::InvalidArgument(format!(
            "max lag {maxlag} must be below the signal length {}",
            signal.len()
        )));
    }
    let size = (signal.len() + maxlag).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    buf[..signal.len()].copy_from_slice(signal);
    dft::forward(&mut buf);
    buf.iter_mut().for_each(|v| *v = Complex64::new(v.norm_sqr(), 0.0));
    dft::inverse(&mut buf);
    buf.truncate(maxlag + 1);
    Ok(buf)
}

/// Linear ACF of a real pulse at every lag `0 .. len(pulse)`.
fn pulse_linear_acf(pulse: &[f64]) -> Vec<f64> {
    let c: Vec<Complex64> = pulse.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    acf_nonnegative(&c, pulse.len() - 1)
        .expect("lag below length")
        .into_iter()
        .map(|v| v.re)
        .collect()
}

/// Frame model with the pulse ACF precomputed, for repeated draws.
#[derive(Debug, Clone)]
pub struct FrameModel {
    pulse: Vec<f64>,
    pulse_acf: Vec<f64>,
    nt: usize,
}

impl FrameModel {
    pub fn new(pulse: Vec<f64>, nt: usize) -> Result<Self> {
        if pulse.is_empty() || nt == 0 {
            return Err(Error::InvalidArgument("empty pulse or zero samples per symbol".into()));
        }
        let pulse_acf = pulse_linear_acf(&pulse);
        Ok(Self { pulse, pulse_acf, nt })
    }

    pub fn pulse(&self) -> &[f64] {
        &self.pulse
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    /// Linear pulse ACF `G(v)`, zero outside the pulse support.
    pub fn g(&self, v: i64) -> f64 {
        self.pulse_acf.get(v.unsigned_abs() as usize).copied().unwrap_or(0.0)
    }

    /// Self and cross parts of the frame ACF at lags `-maxlag ..= maxlag`,
    /// evaluated from the symbol-pair double sum and the pulse ACF.
    pub fn split_acf(&self, symbols: &[Complex64], maxlag: usize) -> (Vec<Complex64>, Vec<Complex64>) {
        let l = symbols.len() as i64;
        let nt = self.nt as i64;
        let energy: f64 = symbols.iter().map(|s| s.norm_sqr()).sum();
        // c_d = sum_n s_n conj(s_{n+d})
        let corr: Vec<(i64, Complex64)> = (-(l - 1)..l)
            .filter(|&d| d != 0)
            .map(|d| {
                let c = (0..l)
                    .filter(|&n| (0..l).contains(&(n + d)))
                    .map(|n| symbols[n as usize] * symbols[(n + d) as usize].conj())
                    .sum();
                (d, c)
            })
            .collect();
        let lags = -(maxlag as i64)..=maxlag as i64;
        let chi_s = lags.clone().map(|tau| Complex64::new(energy * self.g(tau), 0.0)).collect();
        let chi_c = lags
            .map(|tau| corr.iter().map(|&(d, c)| c * self.g(tau + d * nt)).sum())
            .collect();
        (chi_s, chi_c)
    }

    /// Matched-filter output sampled at the symbol instants.
    pub fn matched_filter(&self, signal: &[Complex64], frame_len: usize) -> Vec<Complex64> {
        (0..frame_len)
            .map(|k| {
                let start = k * self.nt;
                signal[start..]
                    .iter()
                    .zip(&self.pulse)
                    .map(|(x, p)| x * p)
                    .sum()
            })
            .collect()
    }

    pub fn realize(&self, c: &Constellation, frame_len: usize, maxlag: usize, seed: u64) -> Result<FrameRealization> {
        let symbols = draw_frame(c, frame_len, seed);
        let signal = synthesize_frame(&symbols, &self.pulse, self.nt);
        let acf = empirical_acf(&signal, maxlag)?;
        Ok(FrameRealization { symbols, signal, acf })
    }
}

/// `split_acf` for a one-off pulse.
pub fn split_acf(symbols: &[Complex64], pulse: &[f64], nt: usize, maxlag: usize) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    Ok(FrameModel::new(pulse.to_vec(), nt)?.split_acf(symbols, maxlag))
}

#[derive(Debug, Clone)]
pub struct FrameRealization {
    pub symbols: Vec<Complex64>,
    pub signal: Vec<Complex64>,
    /// Lags `-maxlag ..= maxlag`.
    pub acf: Vec<Complex64>,
}

impl FrameRealization {
    pub fn maxlag(&self) -> usize {
        self.acf.len() / 2
    }

    pub fn nonnegative_lags(&self) -> &[Complex64] {
        &self.acf[self.maxlag()..]
    }
}

/// Seed of realization `i`: `base_seed + i`.
pub fn frame_seed(base_seed: u64, i: usize) -> u64 {
    base_seed.wrapping_add(i as u64)
}

/// ACFs (lags `0..=maxlag`) of `n_frames` independent frames, in seed order.
pub fn monte_carlo_acfs(
    model: &FrameModel,
    c: &Constellation,
    frame_len: usize,
    maxlag: usize,
    n_frames: usize,
    base_seed: u64,
) -> Result<Vec<Vec<Complex64>>> {
    (0..n_frames)
        .into_par_iter()
        .map(|i| {
            let symbols = draw_frame(c, frame_len, frame_seed(base_seed, i));
            let signal = synthesize_frame(&symbols, model.pulse(), model.nt());
            acf_nonnegative(&signal, maxlag)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureReport {
    /// Averaged SACF normalized to lag 0, dB, lags `0..=maxlag`.
    pub avg_sacf_db: Vec<f64>,
    /// Peak of each complete sidelobe interval `(n nt, (n+1) nt)`, dB.
    pub sidelobe_peaks_db: Vec<f64>,
    /// Mean over frames of `sum_{u in region} |chi_u|^2 / |chi_0|^2`.
    pub empirical_islr: f64,
    /// Largest |empirical - theoretical| normalized SACF, dB.
    pub theory_gap_db: f64,
}

/// Averages per-frame SACFs and compares them with the closed form.
pub fn measure(acfs: &[Vec<Complex64>], stats: &AcfStatistics, region: &LagRegion) -> Result<MeasureReport> {
    if acfs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two realizations".into()));
    }
    let lags = acfs[0].len();
    if acfs.iter().any(|a| a.len() != lags) {
        return Err(Error::InvalidArgument("realizations have different lag ranges".into()));
    }
    let maxlag = lags - 1;
    if let Some(&u) = region.lags().iter().find(|&&u| u > maxlag) {
        return Err(Error::InvalidArgument(format!("region lag {u} beyond measured max lag {maxlag}")));
    }
    let n = acfs.len() as f64;
    let mut avg = vec![0.0; lags];
    for a in acfs {
        for (s, v) in avg.iter_mut().zip(a) {
            *s += v.norm_sqr();
        }
    }
    avg.iter_mut().for_each(|v| *v /= n);
    let norm: Vec<f64> = avg.iter().map(|v| v / avg[0]).collect();
    let theory = stats.normalized_sacf(maxlag);
    let theory_gap_db = norm
        .iter()
        .zip(&theory)
        .map(|(e, t)| (to_db(*e) - to_db(*t)).abs())
        .fold(0.0, f64::max);
    let nt = stats.grid.nt();
    let count = (maxlag / nt).saturating_sub(1);
    let empirical_islr = acfs
        .iter()
        .map(|a| region.lags().iter().map(|&u| a[u].norm_sqr()).sum::<f64>() / a[0].norm_sqr())
        .sum::<f64>()
        / n;
    Ok(MeasureReport {
        avg_sacf_db: norm.iter().map(|v| to_db(*v)).collect(),
        sidelobe_peaks_db: sidelobe_peaks(&norm, nt, count).into_iter().map(to_db).collect(),
        empirical_islr,
        theory_gap_db,
    })
}
