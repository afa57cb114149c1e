//! Experiment orchestration: single designs, the SACF comparison and the
//! roll-off sweeps, with CSV/JSON emission.

use std::path::{Path, PathBuf};

use log::{info, warn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::acf_stats::{alpha_coefficients, sidelobe_peaks, theoretical_islr, theoretical_stats, to_db, AcfStatistics, AlphaCoefficients, LagRegion};
use crate::constellation::{draw_frame, Constellation};
use crate::error::{Error, Result};
use crate::io::{write_json, CsvTable};
use crate::isi::{check_acf_zeros, check_folded_spectrum, ISI_TOL};
use crate::optimizer::{solve, DesignResult, QCache, QpProblem};
use crate::qp::KktResidual;
use crate::simulate::{matched_filter_periodic, measure, monte_carlo_acfs, synthesize_frame, synthesize_frame_periodic, FrameModel, MeasureReport};
use crate::spectrum::{rrc_spectrum, spectrum_to_acf, spectrum_to_pulse, GridSpec, SpectrumVector};

pub const DEFAULT_BETA: f64 = 0.3;

/// The 21-point roll-off grid `0, 0.05, ..., 1`.
pub fn default_sweep() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<f64>>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Beta {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(Option::<Beta>::deserialize(d)?.map(|b| match b {
        Beta::One(x) => vec![x],
        Beta::Many(v) => v,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Roll-off, or a list of them. Unset means 0.3 for `design`/`fig1` and
    /// the 21-point grid for the sweeps.
    #[serde(deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    /// Symbols per frame.
    pub frame_len: usize,
    pub constellation: String,
    /// Samples per symbol.
    pub nt: usize,
    /// Fixed DFT length. Unset picks the smallest exact grid with `lg >= min_lg`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lg: Option<usize>,
    pub min_lg: usize,
    /// ISLR lag region `[lo nt, hi nt]`, in symbols.
    pub region: [usize; 2],
    pub n_frames: usize,
    /// Frame `i` is drawn with seed `base_seed + i`.
    pub base_seed: u64,
    /// Signal bandwidth in Hz; only used for the bit-rate column.
    pub bandwidth_hz: f64,
    pub out_dir: PathBuf,
    /// Where assembled `Q` matrices are kept. Unset means `<out_dir>/cache`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            beta: None,
            frame_len: 256,
            constellation: "qam16".into(),
            nt: 32,
            lg: None,
            min_lg: 8192,
            region: [1, 8],
            n_frames: 1000,
            base_seed: 20240601,
            bandwidth_hz: 20e6,
            out_dir: PathBuf::from("out"),
            cache_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Checks everything that does not need a numerical solve.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if let Some(b) = &self.beta {
            if b.is_empty() {
                return bad("empty roll-off list".into());
            }
            if let Some(x) = b.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return bad(format!("roll-off {x} outside [0, 1]"));
            }
        }
        if self.frame_len == 0 || self.nt == 0 {
            return bad("frame length and samples per symbol must be positive".into());
        }
        if self.n_frames < 2 {
            return bad("need at least two Monte-Carlo frames".into());
        }
        let [lo, hi] = self.region;
        if lo == 0 || lo > hi {
            return bad(format!("region [{lo}, {hi}] must satisfy 1 <= lo <= hi"));
        }
        if self.bandwidth_hz.is_nan() || self.bandwidth_hz <= 0.0 {
            return bad("bandwidth must be positive".into());
        }
        self.constellation()?;
        Ok(())
    }

    pub fn constellation(&self) -> Result<Constellation> {
        self.constellation.parse()
    }

    pub fn betas_or(&self, default: Vec<f64>) -> Vec<f64> {
        self.beta.clone().unwrap_or(default)
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out_dir.join("cache"))
    }

    pub fn lag_region(&self) -> Result<LagRegion> {
        LagRegion::symbol_span(self.region[0], self.region[1], self.nt)
    }

    /// Grid that represents `beta` exactly with this config's `nt`.
    pub fn grid(&self, beta: f64) -> Result<GridSpec> {
        match self.lg {
            None => GridSpec::for_beta(beta, self.nt, self.min_lg),
            Some(lg) => {
                if lg % self.nt != 0 {
                    return Err(Error::InvalidGrid(format!("Lg={lg} is not a multiple of NT={}", self.nt)));
                }
                let k = lg / self.nt;
                let nb = ((1.0 + beta) * k as f64 / 2.0).round() as usize;
                GridSpec::new(lg, nb, beta).map_err(|e| {
                    Error::InvalidGrid(format!("{e}; nearest representable beta: {}", GridSpec::nearest_beta(beta, k)))
                })
            }
        }
    }

    /// Reproducibility header shared by every emitted file.
    fn stamp(&self, t: &mut CsvTable, betas: &[f64]) {
        let mut resolved = self.clone();
        resolved.beta = Some(betas.to_vec());
        t.meta("config", serde_json::to_string(&resolved).expect("config serializes"));
        t.meta("seed_schedule", format!("base_seed+i for i in 0..{}", self.n_frames));
        t.meta("base_seed", self.base_seed);
    }
}

/// Everything known about one roll-off after the design solve.
#[derive(Debug, Clone)]
pub struct DesignPoint {
    pub grid: GridSpec,
    pub alpha: AlphaCoefficients,
    pub region: LagRegion,
    pub rrc: SpectrumVector,
    pub design: DesignResult,
    pub cache_hit: bool,
}

impl DesignPoint {
    pub fn rrc_stats(&self) -> Result<AcfStatistics> {
        Ok(theoretical_stats(&spectrum_to_acf(&self.rrc)?, &self.alpha))
    }

    pub fn opt_stats(&self) -> Result<AcfStatistics> {
        Ok(theoretical_stats(&spectrum_to_acf(&self.design.omega_opt)?, &self.alpha))
    }

    pub fn rrc_islr(&self) -> Result<f64> {
        theoretical_islr(&spectrum_to_acf(&self.rrc)?, &self.alpha, &self.region)
    }

    pub fn opt_islr(&self) -> Result<f64> {
        theoretical_islr(&spectrum_to_acf(&self.design.omega_opt)?, &self.alpha, &self.region)
    }
}

pub fn design_point(cfg: &ExperimentConfig, beta: f64) -> Result<DesignPoint> {
    let grid = cfg.grid(beta)?;
    let c = cfg.constellation()?;
    let alpha = alpha_coefficients(cfg.frame_len, c.mu4())?;
    let region = cfg.lag_region()?;
    region.check_fits(&grid)?;
    let (q, cache_hit) = QCache::new(cfg.cache_dir()).get_or_build(&grid, &alpha, &region)?;
    info!("beta={beta}: Lg={} NB={} Q cache {}", grid.lg(), grid.nb(), if cache_hit { "hit" } else { "miss" });
    let problem = QpProblem::with_q(q, grid, alpha.clone(), region.clone())?;
    let design = solve(&problem)?;
    Ok(DesignPoint {
        grid,
        alpha,
        region,
        rrc: rrc_spectrum(&grid),
        design,
        cache_hit,
    })
}

/// Solves every representable roll-off in parallel; the rest are skipped
/// with a warning. Output order follows `betas`.
pub fn sweep(cfg: &ExperimentConfig, betas: &[f64]) -> Result<Vec<DesignPoint>> {
    let results: Vec<(f64, Result<DesignPoint>)> = betas.par_iter().map(|&b| (b, design_point(cfg, b))).collect();
    let mut points = Vec::new();
    for (beta, r) in results {
        match r {
            Ok(p) => points.push(p),
            Err(Error::InvalidGrid(why)) => warn!("skipping beta={beta}: {why}"),
            Err(e) => return Err(e),
        }
    }
    if points.is_empty() {
        return Err(Error::InvalidGrid("no roll-off in the list is representable".into()));
    }
    Ok(points)
}

#[derive(Debug, Clone, Serialize)]
pub struct IsiReport {
    pub folded_deviation: f64,
    pub acf_zero_max: f64,
}

impl IsiReport {
    pub fn of(s: &SpectrumVector) -> Result<Self> {
        Ok(Self {
            folded_deviation: check_folded_spectrum(s),
            acf_zero_max: check_acf_zeros(&spectrum_to_acf(s)?),
        })
    }

    pub fn passes(&self) -> bool {
        self.folded_deviation <= ISI_TOL && self.acf_zero_max <= ISI_TOL
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignSummary {
    pub config: ExperimentConfig,
    pub converged: bool,
    pub lg: usize,
    pub nb: usize,
    pub nt: usize,
    pub beta: f64,
    pub objective: f64,
    pub rrc_objective: f64,
    pub islr_opt_db: f64,
    pub islr_rrc_db: f64,
    pub kkt_residual: f64,
    pub kkt: Option<KktResidual>,
    pub iterations: usize,
    /// The Nyquist rows alone fix the spectrum, so the design equals RRC.
    pub degenerate: bool,
    pub isi: Option<IsiReport>,
    pub message: Option<String>,
}

fn spectrum_table(cfg: &ExperimentConfig, grid: &GridSpec, rrc: &[f64], opt: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(vec!["bin".into(), "omega_rrc".into(), "omega_opt".into()]);
    cfg.stamp(&mut t, &[grid.beta()]);
    grid_meta(&mut t, grid);
    for (i, (r, o)) in rrc.iter().zip(opt).enumerate() {
        t.push_row(vec![i as f64, *r, *o]);
    }
    t
}

fn pulse_table(cfg: &ExperimentConfig, grid: &GridSpec, rrc: &[f64], opt: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(vec!["sample".into(), "pulse_rrc".into(), "pulse_opt".into()]);
    cfg.stamp(&mut t, &[grid.beta()]);
    grid_meta(&mut t, grid);
    let center = grid.lg() / 2;
    for (i, (r, o)) in rrc.iter().zip(opt).enumerate() {
        t.push_row(vec![i as f64 - center as f64, *r, *o]);
    }
    t
}

fn grid_meta(t: &mut CsvTable, g: &GridSpec) {
    t.meta("lg", g.lg());
    t.meta("nb", g.nb());
    t.meta("nt", g.nt());
    t.meta("beta", g.beta());
}

fn point_dir(out: &Path, betas: &[f64], beta: f64) -> PathBuf {
    if betas.len() == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("beta_{beta:.4}"))
    }
}

/// Writes `spectrum.csv`, `pulse.csv` and `result.json` per roll-off.
///
/// A non-converged solve still writes its best iterate, flagged in
/// `result.json`, before the error is returned.
pub fn cmd_design(cfg: &ExperimentConfig) -> Result<Vec<DesignSummary>> {
    let betas = cfg.betas_or(vec![DEFAULT_BETA]);
    let mut summaries = Vec::new();
    let mut failure = None;
    for &beta in &betas {
        let dir = point_dir(&cfg.out_dir, &betas, beta);
        match design_point(cfg, beta) {
            Ok(p) => {
                let s = write_design(cfg, &p, &dir)?;
                summaries.push(s);
            }
            Err(Error::NonConvergence { iterations, residual, best }) => {
                let grid = cfg.grid(beta)?;
                let rrc = rrc_spectrum(&grid);
                let best: Vec<f64> = best.iter().map(|v| v.max(0.0)).collect();
                spectrum_table(cfg, &grid, rrc.omega(), &best).write(&dir.join("spectrum.csv"))?;
                let summary = DesignSummary {
                    config: cfg.clone(),
                    converged: false,
                    lg: grid.lg(),
                    nb: grid.nb(),
                    nt: grid.nt(),
                    beta,
                    objective: f64::NAN,
                    rrc_objective: f64::NAN,
                    islr_opt_db: f64::NAN,
                    islr_rrc_db: f64::NAN,
                    kkt_residual: residual,
                    kkt: None,
                    iterations,
                    degenerate: false,
                    isi: None,
                    message: Some(format!("solver stopped after {iterations} iterations, residual {residual:e}")),
                };
                write_json(&dir.join("result.json"), &summary)?;
                failure.get_or_insert(Error::NonConvergence { iterations, residual, best });
            }
            Err(e) => return Err(e),
        }
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(summaries),
    }
}

fn write_design(cfg: &ExperimentConfig, p: &DesignPoint, dir: &Path) -> Result<DesignSummary> {
    let g = &p.grid;
    let opt = &p.design.omega_opt;
    spectrum_table(cfg, g, p.rrc.omega(), opt.omega()).write(&dir.join("spectrum.csv"))?;
    let pr = spectrum_to_pulse(&p.rrc)?;
    let po = spectrum_to_pulse(opt)?;
    pulse_table(cfg, g, &pr, &po).write(&dir.join("pulse.csv"))?;
    let isi = IsiReport::of(opt)?;
    let summary = DesignSummary {
        config: cfg.clone(),
        converged: true,
        lg: g.lg(),
        nb: g.nb(),
        nt: g.nt(),
        beta: g.beta(),
        objective: p.design.objective,
        rrc_objective: p.design.baseline_objective,
        islr_opt_db: to_db(p.opt_islr()?),
        islr_rrc_db: to_db(p.rrc_islr()?),
        kkt_residual: p.design.kkt_residual,
        kkt: Some(p.design.kkt),
        iterations: p.design.iterations,
        degenerate: p.design.degenerate,
        isi: Some(isi),
        message: p.design.degenerate.then(|| "feasible set is a single point; the design is the RRC spectrum".to_string()),
    };
    write_json(&dir.join("result.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct Fig1Report {
    pub table: CsvTable,
    pub beta: f64,
    pub rrc_mc: MeasureReport,
    pub opt_mc: MeasureReport,
    pub rrc_theory_db: Vec<f64>,
    pub opt_theory_db: Vec<f64>,
    pub rrc_theory_peaks_db: Vec<f64>,
    pub opt_theory_peaks_db: Vec<f64>,
}

/// Theoretical and Monte-Carlo normalized SACFs of both pulses over lags
/// `0 ..= hi nt`, written to `sacf_curves.csv`.
pub fn cmd_fig1(cfg: &ExperimentConfig) -> Result<Fig1Report> {
    let betas = cfg.betas_or(vec![DEFAULT_BETA]);
    if betas.len() != 1 {
        return Err(Error::InvalidArgument("the SACF comparison takes a single roll-off".into()));
    }
    let p = design_point(cfg, betas[0])?;
    let report = fig1_report(cfg, &p)?;
    report.table.write(&cfg.out_dir.join("sacf_curves.csv"))?;
    Ok(report)
}

pub fn fig1_report(cfg: &ExperimentConfig, p: &DesignPoint) -> Result<Fig1Report> {
    let c = cfg.constellation()?;
    let nt = p.grid.nt();
    let maxlag = p.region.lags().last().copied().unwrap_or(nt).max(3 * nt);
    let count = maxlag / nt - 1;
    let mut curves = Vec::new();
    for s in [&p.rrc, &p.design.omega_opt] {
        let stats = theoretical_stats(&spectrum_to_acf(s)?, &p.alpha);
        let model = FrameModel::new(spectrum_to_pulse(s)?, nt)?;
        let acfs = monte_carlo_acfs(&model, &c, cfg.frame_len, maxlag, cfg.n_frames, cfg.base_seed)?;
        let mc = measure(&acfs, &stats, &p.region)?;
        let theory = stats.normalized_sacf(maxlag);
        let peaks: Vec<f64> = sidelobe_peaks(&theory, nt, count).into_iter().map(to_db).collect();
        curves.push((mc, theory.into_iter().map(to_db).collect::<Vec<f64>>(), peaks));
    }
    let (opt_mc, opt_theory_db, opt_theory_peaks_db) = curves.pop().expect("two curves");
    let (rrc_mc, rrc_theory_db, rrc_theory_peaks_db) = curves.pop().expect("two curves");

    let mut t = CsvTable::new(
        ["lag", "theory_rrc_db", "mc_rrc_db", "theory_opt_db", "mc_opt_db"]
            .map(String::from)
            .to_vec(),
    );
    cfg.stamp(&mut t, &[p.grid.beta()]);
    grid_meta(&mut t, &p.grid);
    t.meta("n_frames", cfg.n_frames);
    t.meta("theory_gap_rrc_db", rrc_mc.theory_gap_db);
    t.meta("theory_gap_opt_db", opt_mc.theory_gap_db);
    for k in 0..=maxlag {
        t.push_row(vec![
            k as f64,
            rrc_theory_db[k],
            rrc_mc.avg_sacf_db[k],
            opt_theory_db[k],
            opt_mc.avg_sacf_db[k],
        ]);
    }
    Ok(Fig1Report {
        table: t,
        beta: p.grid.beta(),
        rrc_mc,
        opt_mc,
        rrc_theory_db,
        opt_theory_db,
        rrc_theory_peaks_db,
        opt_theory_peaks_db,
    })
}

/// `4 B / (beta + 1)`: 16-QAM bits per symbol over the symbol period.
pub fn bit_rate(bandwidth_hz: f64, beta: f64) -> f64 {
    4.0 * bandwidth_hz / (beta + 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub bit_rate_bps: f64,
    pub lg: usize,
    pub nb: usize,
    /// First and second sidelobe peaks of the normalized theoretical SACF.
    pub rrc_sidelobes_db: [f64; 2],
    pub opt_sidelobes_db: [f64; 2],
    pub rrc_islr_db: f64,
    pub opt_islr_db: f64,
    pub kkt_residual: f64,
    pub degenerate: bool,
}

impl SweepRow {
    pub fn second_sidelobe_gap_db(&self) -> f64 {
        self.rrc_sidelobes_db[1] - self.opt_sidelobes_db[1]
    }
}

pub fn sweep_row(cfg: &ExperimentConfig, p: &DesignPoint) -> Result<SweepRow> {
    let nt = p.grid.nt();
    let peaks = |s: AcfStatistics| -> [f64; 2] {
        let v = sidelobe_peaks(&s.normalized_sacf(3 * nt), nt, 2);
        [to_db(v[0]), to_db(v[1])]
    };
    Ok(SweepRow {
        beta: p.grid.beta(),
        bit_rate_bps: bit_rate(cfg.bandwidth_hz, p.grid.beta()),
        lg: p.grid.lg(),
        nb: p.grid.nb(),
        rrc_sidelobes_db: peaks(p.rrc_stats()?),
        opt_sidelobes_db: peaks(p.opt_stats()?),
        rrc_islr_db: to_db(p.rrc_islr()?),
        opt_islr_db: to_db(p.opt_islr()?),
        kkt_residual: p.design.kkt_residual,
        degenerate: p.design.degenerate,
    })
}

/// Sweep rows for every representable roll-off; each row is also written
/// to `<out_dir>/sweep/beta_<b>.json` as soon as the sweep finishes.
pub fn sweep_rows(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let betas = cfg.betas_or(default_sweep());
    let points = sweep(cfg, &betas)?;
    points
        .par_iter()
        .map(|p| {
            let row = sweep_row(cfg, p)?;
            write_json(&cfg.out_dir.join("sweep").join(format!("beta_{:.4}.json", row.beta)), &row)?;
            Ok(row)
        })
        .collect()
}

fn sweep_table(cfg: &ExperimentConfig, rows: &[SweepRow], columns: &[&str], f: impl Fn(&SweepRow) -> Vec<f64>) -> CsvTable {
    let mut t = CsvTable::new(columns.iter().map(|c| c.to_string()).collect());
    let betas: Vec<f64> = rows.iter().map(|r| r.beta).collect();
    cfg.stamp(&mut t, &betas);
    t.meta("bandwidth_hz", cfg.bandwidth_hz);
    for r in rows {
        t.push_row(f(r));
    }
    t
}

pub fn fig2_table(cfg: &ExperimentConfig, rows: &[SweepRow]) -> CsvTable {
    sweep_table(
        cfg,
        rows,
        &["beta", "bit_rate_bps", "rrc_second_sidelobe_db", "opt_second_sidelobe_db", "gap_db"],
        |r| {
            vec![
                r.beta,
                r.bit_rate_bps,
                r.rrc_sidelobes_db[1],
                r.opt_sidelobes_db[1],
                r.second_sidelobe_gap_db(),
            ]
        },
    )
}

pub fn fig3_table(cfg: &ExperimentConfig, rows: &[SweepRow]) -> CsvTable {
    sweep_table(cfg, rows, &["beta", "bit_rate_bps", "rrc_islr_db", "opt_islr_db"], |r| {
        vec![r.beta, r.bit_rate_bps, r.rrc_islr_db, r.opt_islr_db]
    })
}

/// Second-sidelobe level versus bit rate, `sidelobe_vs_bitrate.csv`.
pub fn cmd_fig2(cfg: &ExperimentConfig) -> Result<CsvTable> {
    let t = fig2_table(cfg, &sweep_rows(cfg)?);
    t.write(&cfg.out_dir.join("sidelobe_vs_bitrate.csv"))?;
    Ok(t)
}

/// ISLR versus bit rate, `islr_vs_bitrate.csv`.
pub fn cmd_fig3(cfg: &ExperimentConfig) -> Result<CsvTable> {
    let t = fig3_table(cfg, &sweep_rows(cfg)?);
    t.write(&cfg.out_dir.join("islr_vs_bitrate.csv"))?;
    Ok(t)
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub beta: f64,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Largest symbol error after matched filtering a noiseless frame, for
/// linear synthesis and for the frame wrapped onto one pulse period.
pub fn symbol_recovery_error(pulse: &[f64], nt: usize, c: &Constellation, frame_len: usize, seed: u64) -> Result<(f64, f64)> {
    let symbols = draw_frame(c, frame_len, seed);
    let worst = |y: Vec<Complex64>| y.iter().zip(&symbols).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let model = FrameModel::new(pulse.to_vec(), nt)?;
    let linear = worst(model.matched_filter(&synthesize_frame(&symbols, pulse, nt), frame_len));
    let periodic = worst(matched_filter_periodic(
        &synthesize_frame_periodic(&symbols, pulse, nt)?,
        pulse,
        nt,
        frame_len,
    ));
    Ok((linear, periodic))
}

/// Certificates for every roll-off: zero ISI of both spectra, KKT
/// residual, objective against RRC, and the quadratic form against the
/// closed-form ISLR. Written to `validation.json`.
pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<Vec<Check>> {
    let betas = cfg.betas_or(vec![DEFAULT_BETA]);
    let c = cfg.constellation()?;
    let points = sweep(cfg, &betas)?;
    let mut checks = Vec::new();
    for p in &points {
        let beta = p.grid.beta();
        let mut add = |name: &str, value: f64, tol: f64| {
            checks.push(Check {
                name: name.to_string(),
                beta,
                value,
                tol,
                pass: value <= tol,
            })
        };
        for (tag, s) in [("rrc", &p.rrc), ("opt", &p.design.omega_opt)] {
            let isi = IsiReport::of(s)?;
            add(&format!("{tag}_folded_spectrum"), isi.folded_deviation, ISI_TOL);
            add(&format!("{tag}_acf_zeros"), isi.acf_zero_max, ISI_TOL);
            let pulse = spectrum_to_pulse(s)?;
            if cfg.frame_len * p.grid.nt() <= p.grid.lg() {
                let (_, periodic) = symbol_recovery_error(&pulse, p.grid.nt(), &c, cfg.frame_len, cfg.base_seed)?;
                add(&format!("{tag}_symbol_recovery_periodic"), periodic, 1e-6);
            }
        }
        add("kkt_residual", p.design.kkt_residual, 1e-7);
        add(
            "objective_minus_rrc",
            p.design.objective - p.design.baseline_objective,
            1e-9,
        );
        let islr = p.opt_islr()?;
        add(
            "quadratic_form_vs_islr",
            (p.design.objective - islr).abs() / islr.abs().max(f64::MIN_POSITIVE),
            1e-8,
        );
    }
    write_json(&cfg.out_dir.join("validation.json"), &checks)?;
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            frame_len: 8,
            nt: 8,
            min_lg: 256,
            region: [1, 4],
            n_frames: 20,
            out_dir: dir.to_path_buf(),
            ..Default::default()
        }
    }

    #[test]
    fn config_parses_scalar_or_list() {
        let a: ExperimentConfig = toml::from_str("beta = 0.5").unwrap();
        assert_eq!(a.beta, Some(vec![0.5]));
        let b: ExperimentConfig = toml::from_str("beta = [0.1, 0.2]\nframe_len = 4").unwrap();
        assert_eq!(b.beta, Some(vec![0.1, 0.2]));
        assert_eq!(b.frame_len, 4);
        assert!(toml::from_str::<ExperimentConfig>("colour = 1").is_err());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let ok = ExperimentConfig::default();
        assert!(ok.validate().is_ok());
        let bad = [
            ExperimentConfig { beta: Some(vec![]), ..ok.clone() },
            ExperimentConfig { beta: Some(vec![1.5]), ..ok.clone() },
            ExperimentConfig { region: [0, 8], ..ok.clone() },
            ExperimentConfig { n_frames: 1, ..ok.clone() },
            ExperimentConfig { constellation: "qam8".into(), ..ok.clone() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn fixed_lg_reports_nearest_beta() {
        let cfg = ExperimentConfig { lg: Some(8192), ..Default::default() };
        let err = cfg.grid(0.3).unwrap_err().to_string();
        assert!(err.contains("nearest representable beta"), "{err}");
        assert_eq!(cfg.grid(0.5).unwrap().nb(), 192);
    }

    #[test]
    fn default_sweep_has_21_points() {
        let b = default_sweep();
        assert_eq!(b.len(), 21);
        assert_eq!(b[0], 0.0);
        assert_eq!(b[20], 1.0);
    }

    #[test]
    fn design_writes_files_and_is_repeatable() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let first = cmd_design(&cfg).unwrap();
        let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
        let (s1, p1, r1) = (read("spectrum.csv"), read("pulse.csv"), read("result.json"));
        let second = cmd_design(&cfg).unwrap();
        assert_eq!(read("spectrum.csv"), s1);
        assert_eq!(read("pulse.csv"), p1);
        assert_eq!(read("result.json"), r1);
        assert!(first[0].objective < first[0].rrc_objective);
        assert_eq!(first[0].objective, second[0].objective);
        let t = CsvTable::parse(std::str::from_utf8(&s1).unwrap()).unwrap();
        assert!(t.meta_value("config").unwrap().contains("\"frame_len\":8"));
        assert!(t.meta_value("seed_schedule").is_some());
    }

    #[test]
    fn zero_rolloff_design_is_flagged_degenerate() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { beta: Some(vec![0.0]), ..small(dir.path()) };
        let s = cmd_design(&cfg).unwrap();
        assert!(s[0].degenerate);
        assert!(s[0].message.is_some());
        assert!((s[0].objective - s[0].rrc_objective).abs() <= 1e-12 * s[0].rrc_objective);
    }

    #[test]
    fn sweep_skips_unrepresentable_points() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            lg: Some(256),
            beta: Some(vec![0.25, 0.3, 0.5]),
            ..small(dir.path())
        };
        let rows = sweep_rows(&cfg).unwrap();
        let betas: Vec<f64> = rows.iter().map(|r| r.beta).collect();
        assert_eq!(betas, vec![0.25, 0.5]);
        let t = fig2_table(&cfg, &rows);
        for (r, b) in t.rows().iter().zip(&betas) {
            assert_eq!(r[1], 4.0 * cfg.bandwidth_hz / (b + 1.0));
        }
    }

    #[test]
    fn validate_passes_on_small_grid() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { beta: Some(vec![0.0, 0.5, 1.0]), ..small(dir.path()) };
        let checks = cmd_validate(&cfg).unwrap();
        for c in &checks {
            assert!(c.pass, "{c:?}");
        }
        assert!(dir.path().join("validation.json").exists());
    }
}
