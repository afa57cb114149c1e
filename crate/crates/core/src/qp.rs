//! Dense convex QP solver.
//!
//! Solves
//!
//! ```text
//! minimize    1/2 x' P x + q' x
//! subject to  A x = b,  x >= 0
//! ```
//!
//! with a Mehrotra predictor-corrector primal-dual interior-point method.
//! Before the interior-point phase, rows with a single free variable are
//! eliminated (this removes variables pinned by equality, which would
//! otherwise leave no strictly feasible point) and linearly dependent rows
//! are dropped. After convergence the iterate is polished by an exact
//! equality-constrained solve on the identified active set.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    /// Stopping tolerance on the scaled residuals and duality measure.
    pub tol: f64,
    pub max_iter: usize,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 200,
            polish: true,
        }
    }
}

/// Max-norm KKT residual components of a primal-dual triple.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KktResidual {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
    pub sign: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity).max(self.sign)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Equality multipliers, one per row of `A`.
    pub y: DVector<f64>,
    /// Bound multipliers.
    pub z: DVector<f64>,
    pub iterations: usize,
    pub kkt: KktResidual,
    /// True when presolve fixed every variable.
    pub fully_determined: bool,
}

pub fn kkt_residual(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
) -> KktResidual {
    let stat = p * x + q - a.tr_mul(y) - z;
    let prim = a * x - b;
    let comp = x.iter().zip(z.iter()).map(|(u, v)| (u * v).abs()).fold(0.0, f64::max);
    let sign = x.iter().chain(z.iter()).map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    KktResidual {
        stationarity: stat.amax(),
        primal: if prim.is_empty() { 0.0 } else { prim.amax() },
        complementarity: comp,
        sign,
    }
}

pub fn solve_qp(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    settings: &QpSettings,
) -> Result<QpSolution> {
    let n = q.len();
    let m = b.len();
    if p.nrows() != n || p.ncols() != n || a.nrows() != m || (m > 0 && a.ncols() != n) {
        return Err(Error::InvalidArgument(format!(
            "QP dimension mismatch: P {}x{}, q {n}, A {}x{}, b {m}",
            p.nrows(),
            p.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    let a = if m == 0 { DMatrix::zeros(0, n) } else { a.clone() };

    let pre = presolve(&a, b)?;
    let free: Vec<usize> = (0..n).filter(|&j| pre.fixed[j].is_none()).collect();
    let mut x = DVector::from_iterator(n, pre.fixed.iter().map(|v| v.unwrap_or(0.0)));

    // Reduced problem over the free variables and the kept rows.
    let kept_rows = independent_rows(&a, &pre.active_rows, &free);
    let nf = free.len();
    let mr = kept_rows.len();
    let mut iterations = 0;
    let mut y_red = DVector::zeros(mr);
    if nf > 0 {
        let pr = DMatrix::from_fn(nf, nf, |i, j| p[(free[i], free[j])]);
        let px = p * &x;
        let qr = DVector::from_fn(nf, |i, _| q[free[i]] + px[free[i]]);
        let ar = DMatrix::from_fn(mr, nf, |r, j| a[(kept_rows[r], free[j])]);
        let ax = &a * &x;
        let br = DVector::from_fn(mr, |r, _| b[kept_rows[r]] - ax[kept_rows[r]]);
        check_consistent(&a, b, &pre.active_rows, &free, &kept_rows, &x)?;

        let sol = match interior_point(&pr, &qr, &ar, &br, settings) {
            Ok(s) => s,
            Err(Error::NonConvergence { iterations, residual, best }) => {
                let mut full = x.clone();
                for (i, &j) in free.iter().enumerate() {
                    full[j] = best[i];
                }
                return Err(Error::NonConvergence {
                    iterations,
                    residual,
                    best: full.iter().copied().collect(),
                });
            }
            Err(e) => return Err(e),
        };
        iterations = sol.iterations;
        let (xr, yr) = if settings.polish {
            polish(&pr, &qr, &ar, &br, &sol).unwrap_or((sol.x.clone(), sol.y.clone()))
        } else {
            (sol.x.clone(), sol.y.clone())
        };
        for (i, &j) in free.iter().enumerate() {
            x[j] = xr[i].max(0.0);
        }
        y_red = yr;
    } else {
        check_consistent(&a, b, &pre.active_rows, &free, &kept_rows, &x)?;
    }

    // Multipliers: kept rows from the reduced solve, dropped rows zero,
    // eliminated rows back-substituted in reverse elimination order.
    let mut y = DVector::zeros(m);
    for (r, &row) in kept_rows.iter().enumerate() {
        y[row] = y_red[r];
    }
    let g = p * &x + q;
    for &(row, j) in pre.eliminated.iter().rev() {
        let others: f64 = (0..m).filter(|&r| r != row).map(|r| a[(r, j)] * y[r]).sum();
        y[row] = (g[j] - others) / a[(row, j)];
    }
    let mut z = &g - a.tr_mul(&y);
    for j in 0..n {
        if pre.fixed[j].is_some() {
            z[j] = 0.0;
        }
    }
    let kkt = kkt_residual(p, q, &a, b, &x, &y, &z);
    Ok(QpSolution {
        x,
        y,
        z,
        iterations,
        kkt,
        fully_determined: nf == 0,
    })
}

struct Presolve {
    fixed: Vec<Option<f64>>,
    /// Rows that still constrain free variables.
    active_rows: Vec<usize>,
    /// `(row, variable)` in elimination order.
    eliminated: Vec<(usize, usize)>,
}

fn presolve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Presolve> {
    let (m, n) = a.shape();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut live = vec![true; m];
    let mut eliminated = Vec::new();
    let scale = 1.0 + b.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    let tol = 1e-12 * scale;
    loop {
        let mut changed = false;
        for r in 0..m {
            if !live[r] {
                continue;
            }
            let mut rhs = b[r];
            let mut free = Vec::new();
            for j in 0..n {
                let v = a[(r, j)];
                if v == 0.0 {
                    continue;
                }
                match fixed[j] {
                    Some(x) => rhs -= v * x,
                    None => free.push(j),
                }
            }
            match free.as_slice() {
                [] => {
                    if rhs.abs() > tol {
                        return Err(Error::Infeasible(format!(
                            "equality row {r} is violated by {rhs:e} after presolve"
                        )));
                    }
                    live[r] = false;
                    changed = true;
                }
                [j] => {
                    let val = rhs / a[(r, *j)];
                    if val < -tol {
                        return Err(Error::Infeasible(format!(
                            "row {r} pins variable {j} to negative value {val:e}"
                        )));
                    }
                    fixed[*j] = Some(val.max(0.0));
                    live[r] = false;
                    eliminated.push((r, *j));
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }
    Ok(Presolve {
        fixed,
        active_rows: (0..m).filter(|&r| live[r]).collect(),
        eliminated,
    })
}

/// Greedy Gram-Schmidt selection of linearly independent rows (restricted to `cols`).
fn independent_rows(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for &r in rows {
        let mut v = DVector::from_fn(cols.len(), |j, _| a[(r, cols[j])]);
        let norm0 = v.norm();
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for u in &basis {
                let c = u.dot(&v);
                v.axpy(-c, u, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-10 * norm0 {
            basis.push(v / norm);
            kept.push(r);
        }
    }
    kept
}

/// Dropped dependent rows must still be satisfied by some x on the kept rows.
fn check_consistent(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    active: &[usize],
    free: &[usize],
    kept: &[usize],
    x_fixed: &DVector<f64>,
) -> Result<()> {
    if active.len() == kept.len() {
        return Ok(());
    }
    let ax = a * x_fixed;
    let sub = |rows: &[usize]| {
        (
            DMatrix::from_fn(rows.len(), free.len(), |r, j| a[(rows[r], free[j])]),
            DVector::from_fn(rows.len(), |r, _| b[rows[r]] - ax[rows[r]]),
        )
    };
    let (ak, bk) = sub(kept);
    let gram = &ak * ak.transpose();
    let w = gram
        .lu()
        .solve(&bk)
        .ok_or_else(|| Error::Consistency("independent rows produced a singular Gram matrix".into()))?;
    let x_ls = ak.tr_mul(&w);
    let (aa, ba) = sub(active);
    let resid = (aa * x_ls - &ba).amax();
    if resid > 1e-9 * (1.0 + ba.amax()) {
        return Err(Error::Infeasible(format!(
            "equality constraints are inconsistent (least-squares residual {resid:e})"
        )));
    }
    Ok(())
}

struct IpmSolution {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    iterations: usize,
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(1.0, f64::min)
}

fn interior_point(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    settings: &QpSettings,
) -> Result<IpmSolution> {
    let n = q.len();
    let m = b.len();

    // x = sx * x', objective divided by kappa.
    let sx = if m > 0 { b.amax().max(1e-300) } else { 1.0 };
    let p_s = p * (sx * sx);
    let q_s = q * sx;
    let kappa = {
        let k = p_s.amax().max(q_s.amax());
        if k > 0.0 {
            k
        } else {
            1.0
        }
    };
    let p_s = p_s / kappa;
    let q_s = q_s / kappa;
    let b_s = b / sx;

    let mut x = DVector::from_element(n, 1.0);
    let mut z = DVector::from_element(n, 1.0);
    let mut y = DVector::zeros(m);
    let b_norm = if m > 0 { b_s.amax() } else { 0.0 };
    let q_norm = q_s.amax();

    let mut best = (f64::INFINITY, x.clone());
    for it in 0..settings.max_iter {
        let rd = &p_s * &x + &q_s - a.tr_mul(&y) - &z;
        let rp = a * &x - &b_s;
        let mu = x.dot(&z) / n as f64;
        let rp_n = if m > 0 { rp.amax() } else { 0.0 };
        let score = (rp_n / (1.0 + b_norm)).max(rd.amax() / (1.0 + q_norm)).max(mu);
        if score < best.0 {
            best = (score, x.clone());
        }
        if score <= settings.tol {
            return Ok(IpmSolution {
                x: x * sx,
                y: y * (kappa / sx),
                z: z * (kappa / sx),
                iterations: it,
            });
        }

        let mut kkt = DMatrix::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p_s);
        for i in 0..n {
            kkt[(i, i)] += z[i] / x[i];
        }
        kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
        kkt.view_mut((n, 0), (m, n)).copy_from(a);
        let lu = kkt.lu();

        let solve = |rc: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
            let mut rhs = DVector::zeros(n + m);
            for i in 0..n {
                rhs[i] = -rd[i] + rc[i] / x[i];
            }
            for r in 0..m {
                rhs[n + r] = -rp[r];
            }
            let sol = lu.solve(&rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dy = -sol.rows(n, m).into_owned();
            let dz = DVector::from_fn(n, |i, _| (rc[i] - z[i] * dx[i]) / x[i]);
            Some((dx, dy, dz))
        };

        let singular = || Error::NonConvergence {
            iterations: it,
            residual: best.0,
            best: (&best.1 * sx).iter().copied().collect(),
        };
        let rc_aff = DVector::from_fn(n, |i, _| -x[i] * z[i]);
        let (dx_a, _, dz_a) = solve(&rc_aff).ok_or_else(singular)?;
        let alpha_a = max_step(&x, &dx_a).min(max_step(&z, &dz_a));
        let mu_aff = (&x + &dx_a * alpha_a).dot(&(&z + &dz_a * alpha_a)) / n as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let rc = DVector::from_fn(n, |i, _| -x[i] * z[i] + sigma * mu - dx_a[i] * dz_a[i]);
        let (dx, dy, dz) = solve(&rc).ok_or_else(singular)?;
        let alpha = (0.995 * max_step(&x, &dx).min(max_step(&z, &dz))).min(1.0);
        x += &dx * alpha;
        y += &dy * alpha;
        z += &dz * alpha;
    }
    Err(Error::NonConvergence {
        iterations: settings.max_iter,
        residual: best.0,
        best: (&best.1 * sx).iter().copied().collect(),
    })
}

/// Exact solve on the active set guessed from the interior-point iterate.
fn polish(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    sol: &IpmSolution,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = q.len();
    let m = b.len();
    let inactive: Vec<usize> = (0..n).filter(|&i| sol.x[i] >= sol.z[i]).collect();
    let k = inactive.len();
    let mut kkt = DMatrix::zeros(k + m, k + m);
    let mut rhs = DVector::zeros(k + m);
    for (ii, &i) in inactive.iter().enumerate() {
        for (jj, &j) in inactive.iter().enumerate() {
            kkt[(ii, jj)] = p[(i, j)];
        }
        for r in 0..m {
            kkt[(ii, k + r)] = a[(r, i)];
            kkt[(k + r, ii)] = a[(r, i)];
        }
        rhs[ii] = -q[i];
    }
    for r in 0..m {
        rhs[k + r] = b[r];
    }
    let s = kkt.clone().lu().solve(&rhs).filter(|s| s.iter().all(|v| v.is_finite())).or_else(|| {
        kkt.svd(true, true).solve(&rhs, 1e-14).ok().map(|m| m.column(0).into_owned())
    })?;
    let mut x = DVector::zeros(n);
    for (ii, &i) in inactive.iter().enumerate() {
        x[i] = s[ii];
    }
    let y = -s.rows(k, m).into_owned();
    let z = p * &x + q - a.tr_mul(&y);

    let before = kkt_residual(p, q, a, b, &sol.x, &sol.y, &sol.z).max();
    let mut xc = x.clone();
    xc.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut zc = z.clone();
    for &i in &inactive {
        zc[i] = 0.0;
    }
    let after = kkt_residual(p, q, a, b, &xc, &y, &zc).max();
    (after <= before).then_some((xc, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn simplex_projection() {
        // min |x - c|^2 on the simplex: answer is the Euclidean projection.
        let c = [0.8, 0.6, -0.5];
        let p = DMatrix::identity(3, 3) * 2.0;
        let q = DVector::from_iterator(3, c.iter().map(|v| -2.0 * v));
        let a = dm(1, 3, &[1.0, 1.0, 1.0]);
        let b = DVector::from_element(1, 1.0);
        let s = solve_qp(&p, &q, &a, &b, &QpSettings::default()).unwrap();
        assert!((s.x[0] - 0.6).abs() < 1e-9);
        assert!((s.x[1] - 0.4).abs() < 1e-9);
        assert!(s.x[2].abs() < 1e-12);
        assert!(s.kkt.max() < 1e-9);
    }

    #[test]
    fn pinned_zero_is_presolved() {
        // x0 = 1, x0 + x1 = 1 forces x1 = 0: no strictly feasible point.
        let p = DMatrix::identity(3, 3);
        let q = DVector::from_vec(vec![0.0, -1.0, -1.0]);
        let a = dm(3, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0, 2.0]);
        let s = solve_qp(&p, &q, &a, &b, &QpSettings::default()).unwrap();
        assert_eq!(s.x.as_slice(), &[1.0, 0.0, 2.0]);
        assert!(s.fully_determined);
        assert!(s.kkt.max() < 1e-12);
    }

    #[test]
    fn inconsistent_rows_are_infeasible() {
        let p = DMatrix::identity(2, 2);
        let q = DVector::zeros(2);
        let a = dm(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(
            solve_qp(&p, &q, &a, &b, &QpSettings::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn negative_pin_is_infeasible() {
        let p = DMatrix::identity(1, 1);
        let q = DVector::zeros(1);
        let a = dm(1, 1, &[1.0]);
        let b = DVector::from_vec(vec![-1.0]);
        assert!(matches!(
            solve_qp(&p, &q, &a, &b, &QpSettings::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn duplicate_rows_are_dropped() {
        let p = DMatrix::identity(2, 2) * 2.0;
        let q = DVector::from_vec(vec![-2.0, 0.0]);
        let a = dm(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let s = solve_qp(&p, &q, &a, &b, &QpSettings::default()).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-9 && s.x[1].abs() < 1e-9);
        assert!(s.kkt.max() < 1e-9);
    }

    #[test]
    fn iteration_limit_reports_best_iterate() {
        let p = DMatrix::identity(2, 2);
        let q = DVector::from_vec(vec![-1.0, -3.0]);
        let a = dm(1, 2, &[1.0, 1.0]);
        let b = DVector::from_element(1, 1.0);
        let settings = QpSettings {
            max_iter: 1,
            ..Default::default()
        };
        match solve_qp(&p, &q, &a, &b, &settings) {
            Err(Error::NonConvergence { best, .. }) => assert_eq!(best.len(), 2),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn unconstrained_bounds_only() {
        let p = dm(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let q = DVector::from_vec(vec![-2.0, 4.0]);
        let s = solve_qp(&p, &q, &DMatrix::zeros(0, 2), &DVector::zeros(0), &QpSettings::default()).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-9 && s.x[1].abs() < 1e-12);
        assert!(s.kkt.max() < 1e-9);
    }
}
