//! The ISLR-minimizing pulse design as a convex QP in the power spectrum.
//!
//! With `psi = F^H B omega`, every ACF sample is linear in `omega`, so the
//! ratio-of-expectations ISLR over a lag region is the quadratic form
//! `omega' Q omega` with
//!
//! ```text
//! Q = sum_{|n|<L} (alpha_n / alpha_0) sum_{u in region} T_{u + n nt},
//! T_v = r_v r_v',   r_v = row |v| of F^H B   (zero for |v| > ceil(lg/2)).
//! ```
//!
//! The Nyquist condition is a set of linear equalities on `omega` and
//! out-of-band power is zero by construction, so the design is
//! `min omega' Q omega  s.t.  A omega = nt 1, omega >= 0`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acf_stats::{AlphaCoefficients, LagRegion};
use crate::error::{Error, Result};
use crate::qp::{solve_qp, KktResidual, QpSettings};
use crate::spectrum::{rrc_spectrum, GridSpec, SpectrumVector};

/// Per-lag weights `w_v = sum over (n, u) with |u + n nt| = v of alpha_n / alpha_0`.
pub fn lag_weights(grid: &GridSpec, alpha: &AlphaCoefficients, region: &LagRegion) -> Vec<f64> {
    let reach = grid.max_lag();
    let nt = grid.nt() as i64;
    let a0 = alpha.alpha0();
    let mut w = vec![0.0; reach + 1];
    for (n, a) in alpha.iter() {
        for &u in region.lags() {
            let v = (u as i64 + n * nt).unsigned_abs() as usize;
            if v <= reach {
                w[v] += a / a0;
            }
        }
    }
    w
}

/// Assembles `Q` as a sum of rank-1 terms, one per distinct lag.
pub fn build_q(grid: &GridSpec, alpha: &AlphaCoefficients, region: &LagRegion) -> DMatrix<f64> {
    let weights = lag_weights(grid, alpha, region);
    let n = grid.nb() + 1;
    let lg = grid.lg();
    let inv = 1.0 / lg as f64;
    let cos_table: Vec<f64> = (0..lg)
        .map(|k| (2.0 * std::f64::consts::PI * k as f64 / lg as f64).cos())
        .collect();

    // Fixed chunking keeps the summation order, and so the bits, reproducible.
    const CHUNKS: usize = 64;
    let chunk_len = weights.len().div_ceil(CHUNKS);
    let partials: Vec<Vec<f64>> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; n * n];
            let mut r = vec![0.0; n];
            let lo = c * chunk_len;
            let hi = ((c + 1) * chunk_len).min(weights.len());
            for v in lo..hi {
                let w = weights[v];
                if w == 0.0 {
                    continue;
                }
                r[0] = inv;
                for (j, rj) in r.iter_mut().enumerate().skip(1) {
                    *rj = 2.0 * inv * cos_table[(j * v) % lg];
                }
                for i in 0..n {
                    let ci = w * r[i];
                    let row = &mut acc[i * n..(i + 1) * n];
                    for j in i..n {
                        row[j] += ci * r[j];
                    }
                }
            }
            acc
        })
        .collect();
    let mut upper = vec![0.0; n * n];
    for p in &partials {
        for (u, v) in upper.iter_mut().zip(p) {
            *u += v;
        }
    }
    DMatrix::from_fn(n, n, |i, j| if i <= j { upper[i * n + j] } else { upper[j * n + i] })
}

/// Nyquist equalities `A omega = nt 1`.
///
/// Bins up to the flat edge are pinned to `nt`; a transition-band bin `n`
/// pairs with its alias `K - n` (`K` the symbol-rate bin) so the two sum to
/// `nt`. Each pair appears once. A bin that is its own alias gets
/// `2 omega_n = nt`; at `beta = 0` that is the band-edge bin.
pub fn build_constraints(grid: &GridSpec) -> (DMatrix<f64>, DVector<f64>) {
    let k = grid.symbol_bins();
    let flat = grid.flat_bins();
    let nb = grid.nb();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for n in 0..=nb {
        let alias = k - n;
        if alias == n {
            rows.push(vec![(n, 2.0)]);
        } else if n <= flat {
            rows.push(vec![(n, 1.0)]);
        } else if alias > n || alias <= flat {
            rows.push(vec![(n, 1.0), (alias, 1.0)]);
        }
    }
    let mut a = DMatrix::zeros(rows.len(), nb + 1);
    for (r, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            a[(r, j)] = v;
        }
    }
    let b = DVector::from_element(rows.len(), grid.nt() as f64);
    (a, b)
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub grid: GridSpec,
    pub alpha: AlphaCoefficients,
    pub region: LagRegion,
}

impl QpProblem {
    pub fn new(grid: GridSpec, alpha: AlphaCoefficients, region: LagRegion) -> Result<Self> {
        let q = build_q(&grid, &alpha, &region);
        Self::with_q(q, grid, alpha, region)
    }

    /// Builds the problem around a precomputed (e.g. cached) `Q`.
    pub fn with_q(q: DMatrix<f64>, grid: GridSpec, alpha: AlphaCoefficients, region: LagRegion) -> Result<Self> {
        region.check_fits(&grid)?;
        if q.nrows() != grid.nb() + 1 || q.ncols() != grid.nb() + 1 {
            return Err(Error::InvalidArgument(format!(
                "Q is {}x{}, grid needs {}",
                q.nrows(),
                q.ncols(),
                grid.nb() + 1
            )));
        }
        let (a, b) = build_constraints(&grid);
        Ok(Self {
            q,
            a,
            b,
            grid,
            alpha,
            region,
        })
    }

    pub fn objective(&self, omega: &[f64]) -> f64 {
        let w = DVector::from_column_slice(omega);
        w.dot(&(&self.q * &w))
    }

    /// Max-abs violation of `A omega = b`.
    pub fn constraint_violation(&self, omega: &[f64]) -> f64 {
        (&self.a * DVector::from_column_slice(omega) - &self.b).amax()
    }

    /// Checks symmetry and positive semidefiniteness of `Q`.
    pub fn check_q(&self) -> Result<()> {
        let scale = self.q.amax();
        let asym = (&self.q - self.q.transpose()).amax();
        if asym > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Consistency(format!("Q asymmetric by {asym:e}")));
        }
        let lam_min = self.q.clone().symmetric_eigenvalues().min();
        let norm = self.q.norm();
        if lam_min < -1e-9 * norm {
            return Err(Error::Consistency(format!("Q has eigenvalue {lam_min:e}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignResult {
    pub omega_opt: SpectrumVector,
    /// `omega' Q omega` at the optimum.
    pub objective: f64,
    pub kkt_residual: f64,
    pub kkt: KktResidual,
    /// Objective of the RRC spectrum on the same grid.
    pub baseline_objective: f64,
    pub iterations: usize,
    /// The constraints alone determine the spectrum (`beta = 0`).
    pub degenerate: bool,
}

/// Solves the design QP and certifies the result.
pub fn solve(problem: &QpProblem) -> Result<DesignResult> {
    let n = problem.grid.nb() + 1;
    let p = &problem.q * 2.0;
    let zero = DVector::zeros(n);
    let sol = solve_qp(&p, &zero, &problem.a, &problem.b, &QpSettings::default())?;

    let mut omega: Vec<f64> = sol.x.iter().copied().collect();
    if let Some(v) = omega.iter().find(|v| **v < -1e-9) {
        return Err(Error::Consistency(format!("solver returned negative bin {v:e}")));
    }
    omega.iter_mut().for_each(|v| *v = v.max(0.0));

    let violation = problem.constraint_violation(&omega);
    if violation > 1e-8 {
        return Err(Error::Consistency(format!("design violates Nyquist rows by {violation:e}")));
    }
    let objective = problem.objective(&omega);
    let rrc = rrc_spectrum(&problem.grid);
    let baseline_objective = problem.objective(rrc.omega());
    if objective > baseline_objective + 1e-9 {
        return Err(Error::Consistency(format!(
            "design objective {objective:e} exceeds the feasible RRC point {baseline_objective:e}"
        )));
    }
    Ok(DesignResult {
        omega_opt: SpectrumVector::new(omega, problem.grid)?,
        objective,
        kkt_residual: sol.kkt.max(),
        kkt: sol.kkt,
        baseline_objective,
        iterations: sol.iterations,
        degenerate: sol.fully_determined,
    })
}

/// Content-addressed on-disk store for assembled `Q` matrices.
#[derive(Debug, Clone)]
pub struct QCache {
    dir: PathBuf,
}

impl QCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key(grid: &GridSpec, alpha: &AlphaCoefficients, region: &LagRegion) -> String {
        let mut h = Sha256::new();
        h.update(format!(
            "q-v1;lg={};nb={};nt={};beta={:016x};L={};mu4={:016x};region=",
            grid.lg(),
            grid.nb(),
            grid.nt(),
            grid.beta().to_bits(),
            alpha.frame_len(),
            alpha.mu4().to_bits()
        ));
        for u in region.lags() {
            h.update(u.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("q_{key}.bin"))
    }

    /// Returns the cached matrix, building and storing it on a miss.
    pub fn get_or_build(&self, grid: &GridSpec, alpha: &AlphaCoefficients, region: &LagRegion) -> Result<(DMatrix<f64>, bool)> {
        let key = Self::key(grid, alpha, region);
        let path = self.path(&key);
        let n = grid.nb() + 1;
        if let Some(q) = read_matrix(&path, n) {
            return Ok((q, true));
        }
        let q = build_q(grid, alpha, region);
        write_matrix(&path, &q)?;
        Ok((q, false))
    }
}

fn read_matrix(path: &Path, n: usize) -> Option<DMatrix<f64>> {
    let bytes = fs::read(path).ok()?;
    if bytes.len() != 8 + 8 * n * n {
        return None;
    }
    let dim = u64::from_le_bytes(bytes[..8].try_into().ok()?) as usize;
    if dim != n {
        return None;
    }
    let vals: Vec<f64> = bytes[8..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Some(DMatrix::from_row_slice(n, n, &vals))
}

fn write_matrix(path: &Path, q: &DMatrix<f64>) -> Result<()> {
    let n = q.nrows();
    let mut bytes = Vec::with_capacity(8 + 8 * n * n);
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    for i in 0..n {
        for j in 0..n {
            bytes.extend_from_slice(&q[(i, j)].to_le_bytes());
        }
    }
    crate::io::write_atomic(path, &bytes)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::acf_stats::{alpha_coefficients, theoretical_islr};
    use crate::spectrum::spectrum_to_acf;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random point of the affine feasible set: each free pair split at random.
    pub(crate) fn random_feasible(grid: &GridSpec, rng: &mut impl Rng) -> Vec<f64> {
        let nt = grid.nt() as f64;
        let k = grid.symbol_bins();
        let flat = grid.flat_bins();
        let mut w = vec![0.0; grid.nb() + 1];
        for n in 0..=grid.nb() {
            let alias = k - n;
            if alias == n {
                w[n] = nt / 2.0;
            } else if n <= flat {
                w[n] = nt;
            } else if alias > n {
                w[n] = nt * rng.gen::<f64>();
                w[alias] = nt - w[n];
            }
        }
        w
    }

    /// Literal dense `B^T F e_u e_u^H F^H B` with `F^H` the 1/lg inverse DFT.
    fn dense_q(grid: &GridSpec, alpha: &AlphaCoefficients, region: &LagRegion) -> DMatrix<f64> {
        let lg = grid.lg();
        let nb = grid.nb();
        let finv = DMatrix::from_fn(lg, lg, |u, j| {
            Complex64::from_polar(1.0 / lg as f64, 2.0 * std::f64::consts::PI * (u * j) as f64 / lg as f64)
        });
        let b = DMatrix::from_fn(lg, nb + 1, |k, j| {
            let hit = (k <= nb && k == j) || (j >= 1 && k == lg - j);
            Complex64::new(if hit { 1.0 } else { 0.0 }, 0.0)
        });
        let fb = &finv * &b;
        let t = |v: usize| {
            let row = fb.row(v).transpose();
            (row.conjugate() * row.transpose()).map(|c| c.re)
        };
        let mut q = DMatrix::zeros(nb + 1, nb + 1);
        let nt = grid.nt() as i64;
        for (n, a) in alpha.iter() {
            for &u in region.lags() {
                let v = (u as i64 + n * nt).unsigned_abs() as usize;
                if v <= grid.max_lag() {
                    q += t(v) * (a / alpha.alpha0());
                }
            }
        }
        q
    }

    #[test]
    fn q_matches_literal_construction() {
        let grid = GridSpec::new(64, 8, 1.0).unwrap();
        let alpha = alpha_coefficients(4, 1.32).unwrap();
        let region = LagRegion::new((8..=24).collect()).unwrap();
        let fast = build_q(&grid, &alpha, &region);
        let slow = dense_q(&grid, &alpha, &region);
        assert!((fast - slow).amax() < 1e-10);
    }

    #[test]
    fn unweighted_q_sums_squared_acf() {
        let grid = GridSpec::new(96, 12, 0.5).unwrap();
        let alpha = alpha_coefficients(1, 1.0).unwrap();
        let region = LagRegion::new(vec![3, 6, 7, 20]).unwrap();
        let q = build_q(&grid, &alpha, &region);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let w: Vec<f64> = (0..13).map(|_| rng.gen::<f64>() * 5.0).collect();
            let psi = spectrum_to_acf(&SpectrumVector::new(w.clone(), grid).unwrap()).unwrap();
            let wv = DVector::from_vec(w);
            let quad = wv.dot(&(&q * &wv));
            let direct: f64 = region.lags().iter().map(|&u| psi.psi()[u].powi(2)).sum();
            assert!((quad - direct).abs() < 1e-12 * direct.max(1e-300));
        }
    }

    #[test]
    fn quadratic_form_equals_theoretical_islr() {
        let grid = GridSpec::new(32, 8, 1.0).unwrap();
        assert_eq!(grid.nt(), 4);
        let alpha = alpha_coefficients(4, 1.32).unwrap();
        let region = LagRegion::new((4..=12).collect()).unwrap();
        let problem = QpProblem::new(grid, alpha.clone(), region.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let w = random_feasible(&grid, &mut rng);
            let acf = spectrum_to_acf(&SpectrumVector::new(w.clone(), grid).unwrap()).unwrap();
            let islr = theoretical_islr(&acf, &alpha, &region).unwrap();
            let quad = problem.objective(&w);
            assert!((quad - islr).abs() <= 1e-8 * islr);
        }
    }

    #[test]
    fn constraints_for_extreme_rolloffs() {
        let g0 = GridSpec::new(64, 8, 0.0).unwrap();
        let (a, b) = build_constraints(&g0);
        assert_eq!(a.nrows(), 9);
        // All single-entry rows: the feasible set is a point.
        for r in 0..a.nrows() {
            assert_eq!(a.row(r).iter().filter(|v| **v != 0.0).count(), 1);
        }
        assert!(b.iter().all(|v| *v == 4.0));

        let g1 = GridSpec::new(64, 8, 1.0).unwrap();
        let (a1, _) = build_constraints(&g1);
        let fixed: Vec<usize> = (0..a1.nrows())
            .filter(|&r| a1.row(r).iter().filter(|v| **v != 0.0).count() == 1 && a1[(r, 4)] == 0.0)
            .collect();
        assert_eq!(fixed.len(), 1);
        assert_eq!(a1[(fixed[0], 0)], 1.0);
    }

    #[test]
    fn constraint_rows_are_independent() {
        for (lg, nb, beta) in [(64, 8, 1.0), (96, 12, 0.5), (64, 8, 0.0), (8320, 169, 0.3)] {
            let g = GridSpec::new(lg, nb, beta).unwrap();
            let (a, _) = build_constraints(&g);
            let rank = a.clone().svd(false, false).rank(1e-9);
            assert_eq!(rank, a.nrows(), "beta {beta}");
        }
    }

    #[test]
    fn feasible_sum_is_constant() {
        let g = GridSpec::for_beta(0.3, 32, 8192).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sums: Vec<f64> = (0..100)
            .map(|_| {
                let w = random_feasible(&g, &mut rng);
                let problem_rows = build_constraints(&g);
                let v = (&problem_rows.0 * DVector::from_vec(w.clone()) - &problem_rows.1).amax();
                assert!(v < 1e-12);
                w[0] + 2.0 * w[1..].iter().sum::<f64>()
            })
            .collect();
        for s in &sums {
            assert!((s - g.lg() as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn rrc_is_feasible() {
        for i in 0..=20 {
            let g = GridSpec::for_beta(i as f64 / 20.0, 32, 8192).unwrap();
            let (a, b) = build_constraints(&g);
            let rrc = rrc_spectrum(&g);
            let v = (&a * DVector::from_column_slice(rrc.omega()) - &b).amax();
            assert!(v < 1e-9, "beta {}: {v:e}", g.beta());
        }
    }

    #[test]
    fn beta_zero_design_is_the_sinc() {
        let g = GridSpec::for_beta(0.0, 8, 256).unwrap();
        let alpha = alpha_coefficients(16, 1.32).unwrap();
        let region = LagRegion::symbol_span(1, 8, 8).unwrap();
        let r = solve(&QpProblem::new(g, alpha, region).unwrap()).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.omega_opt.omega(), rrc_spectrum(&g).omega());
        assert_eq!(r.objective, r.baseline_objective);
    }

    #[test]
    fn q_is_psd_and_symmetric() {
        let g = GridSpec::new(96, 12, 0.5).unwrap();
        let alpha = alpha_coefficients(8, 1.32).unwrap();
        let region = LagRegion::symbol_span(1, 4, 6).unwrap();
        QpProblem::new(g, alpha, region).unwrap().check_q().unwrap();
    }

    #[test]
    fn convexity_along_segments() {
        let g = GridSpec::new(96, 12, 0.5).unwrap();
        let alpha = alpha_coefficients(8, 1.32).unwrap();
        let region = LagRegion::symbol_span(1, 4, 6).unwrap();
        let problem = QpProblem::new(g, alpha, region).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let w1 = random_feasible(&g, &mut rng);
            let w2 = random_feasible(&g, &mut rng);
            let t: f64 = rng.gen();
            let mid: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
            let lhs = problem.objective(&mid);
            let rhs = t * problem.objective(&w1) + (1.0 - t) * problem.objective(&w2);
            assert!(lhs <= rhs + 1e-10);
        }
    }

    #[test]
    fn argmin_ignores_objective_scale() {
        let g = GridSpec::new(96, 12, 0.5).unwrap();
        let alpha = alpha_coefficients(8, 1.32).unwrap();
        let region = LagRegion::symbol_span(1, 4, 6).unwrap();
        let base = QpProblem::new(g, alpha.clone(), region.clone()).unwrap();
        let scaled = QpProblem::with_q(&base.q * 37.5, g, alpha, region).unwrap();
        let r1 = solve(&base).unwrap();
        let r2 = solve(&scaled).unwrap();
        for (a, b) in r1.omega_opt.omega().iter().zip(r2.omega_opt.omega()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((r2.objective / r1.objective - 37.5).abs() < 1e-6);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = QCache::new(dir.path());
        let g = GridSpec::new(96, 12, 0.5).unwrap();
        let alpha = alpha_coefficients(8, 1.32).unwrap();
        let region = LagRegion::symbol_span(1, 4, 6).unwrap();
        let (q1, hit1) = cache.get_or_build(&g, &alpha, &region).unwrap();
        let (q2, hit2) = cache.get_or_build(&g, &alpha, &region).unwrap();
        assert!(!hit1 && hit2);
        assert_eq!(q1, q2);
        let other = alpha_coefficients(9, 1.32).unwrap();
        assert_ne!(QCache::key(&g, &alpha, &region), QCache::key(&g, &other, &region));
    }
}
