//! Unit-energy symbol constellations and i.i.d. frame drawing.

use std::f64::consts::PI;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A centrosymmetric constellation normalized to unit average energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    name: String,
    points: Vec<Complex64>,
    mu4: f64,
}

impl Constellation {
    /// Builds a constellation from raw points, rescaling to unit average energy.
    ///
    /// The point set must be closed under negation.
    pub fn from_points(name: impl Into<String>, points: Vec<Complex64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty constellation".into()));
        }
        let n = points.len() as f64;
        let energy = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / n;
        if energy <= 0.0 {
            return Err(Error::InvalidArgument("constellation has zero energy".into()));
        }
        let scale = energy.sqrt().recip();
        let points: Vec<Complex64> = points.into_iter().map(|p| p * scale).collect();
        let tol = 1e-12;
        for p in &points {
            if !points.iter().any(|q| (q + p).norm() < tol) {
                return Err(Error::InvalidArgument(format!(
                    "constellation is not closed under negation (missing {})",
                    -p
                )));
            }
        }
        let mu4 = points.iter().map(|p| p.norm_sqr().powi(2)).sum::<f64>() / n;
        Ok(Self {
            name: name.into(),
            points,
            mu4,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Fourth absolute moment E{|s|^4}.
    pub fn mu4(&self) -> f64 {
        self.mu4
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }
}

/// Square M-QAM on the odd-integer grid, M in {4, 16, 64, 256}.
pub fn make_qam(order: usize) -> Result<Constellation> {
    if !matches!(order, 4 | 16 | 64 | 256) {
        return Err(Error::InvalidArgument(format!(
            "unsupported QAM order {order} (expected 4, 16, 64 or 256)"
        )));
    }
    let side = (order as f64).sqrt().round() as i64;
    let levels: Vec<f64> = (0..side).map(|k| (2 * k - side + 1) as f64).collect();
    let points = levels
        .iter()
        .flat_map(|&re| levels.iter().map(move |&im| Complex64::new(re, im)))
        .collect();
    Constellation::from_points(format!("qam{order}"), points)
}

/// M-PSK on the unit circle, starting at phase 0.
pub fn make_psk(order: usize) -> Result<Constellation> {
    if order < 2 {
        return Err(Error::InvalidArgument(format!("PSK order must be >= 2, got {order}")));
    }
    if order % 2 == 1 {
        // Odd PSK has no negation symmetry.
        return Err(Error::InvalidArgument(format!(
            "PSK order {order} is not centrosymmetric"
        )));
    }
    let points = (0..order)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / order as f64))
        .collect();
    let mut c = Constellation::from_points(format!("psk{order}"), points)?;
    // Unit modulus: pin the moments exactly rather than carrying rounding.
    c.mu4 = 1.0;
    Ok(c)
}

impl FromStr for Constellation {
    type Err = Error;

    /// Parses names such as `qam16`, `qpsk`, `bpsk`, `psk8`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "bpsk" => return make_psk(2),
            "qpsk" => return make_psk(4),
            _ => {}
        }
        let parse_order = |digits: &str| {
            digits
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("unknown constellation '{s}'")))
        };
        if let Some(rest) = lower.strip_prefix("qam") {
            make_qam(parse_order(rest)?)
        } else if let Some(rest) = lower.strip_prefix("psk") {
            make_psk(parse_order(rest)?)
        } else {
            Err(Error::InvalidArgument(format!("unknown constellation '{s}'")))
        }
    }
}

/// Draws `len` i.i.d. uniform symbols from `c`, deterministically from `seed`.
pub fn draw_frame(c: &Constellation, len: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = c.points.len();
    (0..len).map(|_| c.points[rng.gen_range(0..n)]).collect()
}
