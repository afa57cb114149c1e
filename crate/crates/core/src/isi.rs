//! Zero-ISI checks that do not share code with the optimizer's constraints.

use crate::spectrum::{DiscreteAcf, SpectrumVector};

/// Tolerance on both checks for designs on the normalized grid.
pub const ISI_TOL: f64 = 1e-8;

/// Folds the two-sided spectrum into `lg / nt` classes spaced one symbol
/// rate apart and returns the largest `|class sum - nt|`.
pub fn check_folded_spectrum(s: &SpectrumVector) -> f64 {
    let g = s.grid();
    let lg = g.lg();
    let k = g.symbol_bins();
    let omega = s.omega();
    let mut classes = vec![0.0; k];
    for j in 0..lg {
        let f = j.min(lg - j);
        if let Some(&v) = omega.get(f) {
            classes[j % k] += v;
        }
    }
    let nt = g.nt() as f64;
    classes.iter().map(|c| (c - nt).abs()).fold(0.0, f64::max)
}

/// Largest `|psi[n nt]|` over the nonzero symbol-spaced lags.
pub fn check_acf_zeros(acf: &DiscreteAcf) -> f64 {
    let nt = acf.grid().nt();
    acf.psi()
        .iter()
        .step_by(nt)
        .skip(1)
        .map(|v| v.abs())
        .fold(0.0, f64::max)
}
