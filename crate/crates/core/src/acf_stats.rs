//! Closed-form statistics of the ACF of a random-symbol frame.
//!
//! For a frame `s(t) = sum_n s_n g(t - n T)` with i.i.d. zero-mean symbols,
//! unit energy and fourth moment `mu4`, the ACF splits into a self part
//! `chi_s = sum_n |s_n|^2 G(tau)` and a cross part over `n != m`. The two are
//! uncorrelated, so with `G` the pulse ACF:
//!
//! ```text
//! E{chi(tau)}     = L G(tau)
//! Var{chi(tau)}   = sum_{|n|<L} alpha~_n G(tau + n T)^2
//! E{|chi(tau)|^2} = sum_{|n|<L} alpha_n  G(tau + n T)^2
//! ```
//!
//! with `alpha~_0 = L (mu4 - 1)`, `alpha~_n = L - |n|` and
//! `alpha_n = alpha~_n + L^2 delta[n]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::CsvTable;
use crate::spectrum::{DiscreteAcf, GridSpec};

/// Weights `alpha_n`, `|n| < L`, of the shifted squared pulse ACFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCoefficients {
    frame_len: usize,
    mu4: f64,
    /// `alpha_n` for `n = -(L-1) ..= L-1`.
    values: Vec<f64>,
}

pub fn alpha_coefficients(frame_len: usize, mu4: f64) -> Result<AlphaCoefficients> {
    if frame_len == 0 {
        return Err(Error::InvalidArgument("frame length must be >= 1".into()));
    }
    if mu4.is_nan() || mu4 < 1.0 {
        return Err(Error::InvalidArgument(format!("fourth moment {mu4} < 1")));
    }
    let l = frame_len as f64;
    let values = (-(frame_len as i64 - 1)..frame_len as i64)
        .map(|n| {
            if n == 0 {
                l * l + l * (mu4 - 1.0)
            } else {
                l - n.abs() as f64
            }
        })
        .collect();
    Ok(AlphaCoefficients {
        frame_len,
        mu4,
        values,
    })
}

impl AlphaCoefficients {
    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn mu4(&self) -> f64 {
        self.mu4
    }

    /// Symbol shifts `n` with `|n| < L`, paired with `alpha_n`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let off = self.frame_len as i64 - 1;
        self.values.iter().enumerate().map(move |(i, &a)| (i as i64 - off, a))
    }

    pub fn alpha(&self, n: i64) -> f64 {
        if n.unsigned_abs() as usize >= self.frame_len {
            0.0
        } else {
            self.values[(n + self.frame_len as i64 - 1) as usize]
        }
    }

    /// Variance weight `alpha~_n`, i.e. `alpha_n` without the squared-mean term.
    pub fn alpha_tilde(&self, n: i64) -> f64 {
        let a = self.alpha(n);
        if n == 0 {
            a - (self.frame_len * self.frame_len) as f64
        } else {
            a
        }
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha(0)
    }
}

/// A set of nonnegative lag indices (the sidelobe region).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagRegion(Vec<usize>);

impl LagRegion {
    pub fn new(mut lags: Vec<usize>) -> Result<Self> {
        if lags.is_empty() {
            return Err(Error::InvalidArgument("sidelobe region is empty".into()));
        }
        lags.sort_unstable();
        lags.dedup();
        Ok(Self(lags))
    }

    /// Lags `lo * nt ..= hi * nt`.
    pub fn symbol_span(lo: usize, hi: usize, nt: usize) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidArgument(format!("region [{lo}, {hi}] is empty")));
        }
        Self::new((lo * nt..=hi * nt).collect())
    }

    pub fn lags(&self) -> &[usize] {
        &self.0
    }

    pub fn check_fits(&self, grid: &GridSpec) -> Result<()> {
        let max = *self.0.last().expect("nonempty");
        if max > grid.max_lag() {
            return Err(Error::InvalidArgument(format!(
                "region reaches lag {max}, beyond ceil(Lg/2) = {}",
                grid.max_lag()
            )));
        }
        Ok(())
    }
}

/// Closed-form ACF statistics on every lag of the grid.
///
/// Index `k` holds lag `k` for `k <= lg/2` and lag `k - lg` above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfStatistics {
    /// `G(tau)`, i.e. `E{chi} / L`.
    pub mean_acf: Vec<f64>,
    /// `Var{chi_s}`.
    pub var_self: Vec<f64>,
    /// `Var{chi_c}`.
    pub var_cross: Vec<f64>,
    /// `Var{chi}`.
    pub var_profile: Vec<f64>,
    /// `E{|chi|^2}`.
    pub expected_sacf: Vec<f64>,
    pub grid: GridSpec,
    pub alpha: AlphaCoefficients,
}

fn signed_lag(k: usize, lg: usize) -> i64 {
    if 2 * k <= lg {
        k as i64
    } else {
        k as i64 - lg as i64
    }
}

/// `sum_n w_n G(lag + n nt)^2` over `|n| < L`.
fn shifted_sum(acf: &DiscreteAcf, alpha: &AlphaCoefficients, lag: i64, weight: impl Fn(i64) -> f64) -> f64 {
    let nt = acf.grid().nt() as i64;
    let reach = acf.grid().max_lag() as i64;
    let big = alpha.frame_len() as i64 - 1;
    // Only shifts landing inside [-reach, reach] contribute.
    let lo = (-reach - lag).div_euclid(nt).max(-big);
    let hi = (reach - lag).div_euclid(nt).min(big);
    (lo..=hi)
        .map(|n| {
            let g = acf.at_lag(lag + n * nt);
            weight(n) * g * g
        })
        .sum()
}

pub fn theoretical_stats(acf: &DiscreteAcf, alpha: &AlphaCoefficients) -> AcfStatistics {
    let grid = *acf.grid();
    let lg = grid.lg();
    let l = alpha.frame_len() as f64;
    let mut var_self = Vec::with_capacity(lg);
    let mut var_cross = Vec::with_capacity(lg);
    let mut var_profile = Vec::with_capacity(lg);
    let mut expected_sacf = Vec::with_capacity(lg);
    for k in 0..lg {
        let lag = signed_lag(k, lg);
        let g = acf.at_lag(lag);
        let vs = alpha.alpha_tilde(0) * g * g;
        let vc = shifted_sum(acf, alpha, lag, |n| if n == 0 { 0.0 } else { alpha.alpha(n) });
        var_self.push(vs);
        var_cross.push(vc);
        var_profile.push(vs + vc);
        expected_sacf.push(vs + vc + (l * g).powi(2));
    }
    AcfStatistics {
        mean_acf: (0..lg).map(|k| acf.at_lag(signed_lag(k, lg))).collect(),
        var_self,
        var_cross,
        var_profile,
        expected_sacf,
        grid,
        alpha: alpha.clone(),
    }
}

/// Ratio-of-expectations ISLR: `(1/alpha_0) sum_{u in region} E{|chi_u|^2}`.
///
/// Only nonnegative lags are summed; the mirrored side is identical.
pub fn theoretical_islr(acf: &DiscreteAcf, alpha: &AlphaCoefficients, region: &LagRegion) -> Result<f64> {
    region.check_fits(acf.grid())?;
    let total: f64 = region
        .lags()
        .iter()
        .map(|&u| shifted_sum(acf, alpha, u as i64, |n| alpha.alpha(n)))
        .sum();
    Ok(total / alpha.alpha0())
}

impl AcfStatistics {
    /// `expected_sacf` divided by its lag-0 value, for lags `0..=max_lag`.
    pub fn normalized_sacf(&self, max_lag: usize) -> Vec<f64> {
        let peak = self.expected_sacf[0];
        self.expected_sacf[..=max_lag].iter().map(|v| v / peak).collect()
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(vec![
            "lag".into(),
            "mean".into(),
            "variance".into(),
            "expected_sacf".into(),
        ]);
        t.meta("lg", self.grid.lg());
        t.meta("nb", self.grid.nb());
        t.meta("nt", self.grid.nt());
        t.meta("beta", self.grid.beta());
        t.meta("frame_len", self.alpha.frame_len());
        t.meta("mu4", self.alpha.mu4());
        let lg = self.grid.lg();
        for k in 0..lg {
            t.push_row(vec![
                signed_lag(k, lg) as f64,
                self.mean_acf[k],
                self.var_profile[k],
                self.expected_sacf[k],
            ]);
        }
        t
    }
}

/// Peak of `curve` over each open interval `(n nt, (n+1) nt)`, `n = 1..=count`.
///
/// Sidelobe `n` sits between the `n`-th and `(n+1)`-th symbol-spaced Nyquist
/// zero; the mainlobe occupies `(-nt, nt)`.
pub fn sidelobe_peaks(curve: &[f64], nt: usize, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|n| {
            curve[n * nt + 1..(n + 1) * nt]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{rrc_spectrum, spectrum_to_acf};

    #[test]
    fn alpha0_for_16qam_frame() {
        let a = alpha_coefficients(256, 1.32).unwrap();
        assert!((a.alpha0() - 65617.92).abs() < 1e-9);
        assert_eq!(a.alpha(255), 1.0);
        assert_eq!(a.alpha(-255), 1.0);
        assert_eq!(a.alpha(256), 0.0);
    }

    #[test]
    fn single_symbol() {
        let a = alpha_coefficients(1, 1.7).unwrap();
        assert_eq!(a.iter().count(), 1);
        assert!((a.alpha0() - 1.7).abs() < 1e-15);
    }

    #[test]
    fn three_symbols() {
        let a = alpha_coefficients(3, 2.0).unwrap();
        let v: Vec<(i64, f64)> = a.iter().collect();
        assert_eq!(v, vec![(-2, 1.0), (-1, 2.0), (0, 12.0), (1, 2.0), (2, 1.0)]);
        assert_eq!(a.alpha_tilde(0), 3.0);
    }

    #[test]
    fn alpha_invariants() {
        for l in [1, 2, 7, 256] {
            let a = alpha_coefficients(l, 1.32).unwrap();
            for (n, v) in a.iter() {
                assert!(v > 0.0);
                assert_eq!(v, a.alpha(-n));
            }
            assert_eq!(a.alpha(l as i64 - 1), if l == 1 { a.alpha0() } else { 1.0 });
        }
        assert!(alpha_coefficients(0, 1.0).is_err());
        assert!(alpha_coefficients(4, 0.5).is_err());
    }

    fn rrc_acf(beta: f64) -> DiscreteAcf {
        let g = GridSpec::for_beta(beta, 8, 512).unwrap();
        spectrum_to_acf(&rrc_spectrum(&g)).unwrap()
    }

    #[test]
    fn sacf_is_variance_plus_squared_mean() {
        let acf = rrc_acf(0.25);
        let a = alpha_coefficients(16, 1.32).unwrap();
        let st = theoretical_stats(&acf, &a);
        for k in 0..acf.grid().lg() {
            let rhs = st.var_profile[k] + (16.0 * st.mean_acf[k]).powi(2);
            assert!((st.expected_sacf[k] - rhs).abs() <= 1e-9 * st.expected_sacf[k].max(1e-300));
            assert!(st.var_profile[k] >= 0.0);
        }
    }

    #[test]
    fn constant_modulus_has_no_mainlobe_variance() {
        // psi[0] = 1 and Nyquist zeros make Var{chi(0)} vanish for QPSK.
        let acf = rrc_acf(0.5);
        let a = alpha_coefficients(32, 1.0).unwrap();
        let st = theoretical_stats(&acf, &a);
        assert!(st.var_profile[0].abs() < 1e-20);
        assert!((st.expected_sacf[0] - a.alpha0()).abs() < 1e-9 * a.alpha0());
    }

    #[test]
    fn mainlobe_sacf_is_alpha0() {
        let acf = rrc_acf(0.3);
        let a = alpha_coefficients(64, 1.32).unwrap();
        let st = theoretical_stats(&acf, &a);
        assert!((st.expected_sacf[0] / a.alpha0() - 1.0).abs() < 1e-9);
        let region = LagRegion::new(vec![0]).unwrap();
        assert!((theoretical_islr(&acf, &a, &region).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn islr_sums_the_region() {
        let acf = rrc_acf(0.3);
        let a = alpha_coefficients(64, 1.32).unwrap();
        let st = theoretical_stats(&acf, &a);
        let region = LagRegion::symbol_span(1, 8, 8).unwrap();
        let direct: f64 = region.lags().iter().map(|&u| st.expected_sacf[u]).sum::<f64>() / a.alpha0();
        let islr = theoretical_islr(&acf, &a, &region).unwrap();
        assert!((islr - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn region_validation() {
        assert!(LagRegion::new(vec![]).is_err());
        assert!(LagRegion::symbol_span(3, 2, 8).is_err());
        let acf = rrc_acf(0.3);
        let a = alpha_coefficients(4, 1.0).unwrap();
        let far = LagRegion::new(vec![acf.grid().lg()]).unwrap();
        assert!(theoretical_islr(&acf, &a, &far).is_err());
    }

    #[test]
    fn sidelobe_intervals_are_open() {
        let nt = 4;
        let mut curve = vec![0.0; 20];
        curve[4] = 9.0; // Nyquist point itself is excluded
        curve[6] = 2.0;
        curve[9] = 3.0;
        assert_eq!(sidelobe_peaks(&curve, nt, 2), vec![2.0, 3.0]);
    }

    #[test]
    fn truncated_tail_is_negligible() {
        // Doubling the grid moves the wrap point; lags in the region barely change.
        let a = alpha_coefficients(256, 1.32).unwrap();
        let small = GridSpec::for_beta(0.3, 32, 8192).unwrap();
        let large = GridSpec::for_beta(0.3, 32, 16384).unwrap();
        assert_eq!(large.lg(), 2 * small.lg());
        let s1 = theoretical_stats(&spectrum_to_acf(&rrc_spectrum(&small)).unwrap(), &a);
        let s2 = theoretical_stats(&spectrum_to_acf(&rrc_spectrum(&large)).unwrap(), &a);
        for k in 0..=8 * 32 {
            let d = (s1.expected_sacf[k] - s2.expected_sacf[k]).abs();
            assert!(d < 1e-6 * a.alpha0(), "lag {k}: {d:e}");
        }
    }
}
