use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_boundary::WaitingTimeEstimate;
use crate::grid::{BallMode, GridSpec};
use crate::initial_data::{criterion_mass, dyadic_radii, power_law, InitialData};
use crate::solver::SolverConfig;

use super::{cell, check_thetas, fit_loglog, measure_waiting, summary_header, thread_pool, LogLogFit, StudyOutput, WaitingRun};

/// How the solver's time-step limits depend on `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DtPolicy {
    /// Same limits and horizon for every run.
    Fixed,
    /// Limits and horizon multiplied by `(κ/κ_ref)^{-n}`, so every run is an
    /// exact rescaling of the reference run.
    Covariant { kappa_ref: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaSweepConfig {
    pub grid: GridSpec,
    pub shape: InitialData,
    /// Point whose waiting time is measured; defaults to the shape's.
    #[serde(default)]
    pub x0: Option<f64>,
    pub kappas: Vec<f64>,
    pub t_max: f64,
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    /// Arrival margin in cells.
    #[serde(default = "default_margin_cells")]
    pub margin_cells: f64,
    #[serde(default = "default_policy")]
    pub dt_policy: DtPolicy,
    /// Divide the shape by its mass-criterion supremum before scaling.
    #[serde(default = "default_true")]
    pub normalize: bool,
    /// Recorded snapshots per run (besides `t = 0`).
    #[serde(default = "default_records")]
    pub records: usize,
}

fn default_thetas() -> Vec<f64> {
    vec![1e-7, 1e-6, 1e-8]
}
fn default_margin_cells() -> f64 {
    4.0
}
fn default_policy() -> DtPolicy {
    DtPolicy::Fixed
}
fn default_true() -> bool {
    true
}
fn default_records() -> usize {
    50
}
fn default_steps() -> f64 {
    200.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaRun {
    pub kappa: f64,
    pub t_max: f64,
    /// One estimate per threshold, in configuration order.
    pub estimates: Vec<WaitingTimeEstimate>,
    /// `t* κⁿ` per threshold (infinite when censored).
    pub scaled: Vec<f64>,
    pub run: WaitingRun,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub n: f64,
    pub x0: f64,
    pub thetas: Vec<f64>,
    /// Factor the shape was divided by (1 without normalization).
    pub shape_sup: f64,
    pub runs: Vec<KappaRun>,
    /// Fit for the primary threshold.
    pub fit: LogLogFit,
    /// Fit per threshold; `None` where fewer than four runs were uncensored.
    pub fits_per_theta: Vec<Option<LogLogFit>>,
    /// Smallest and largest `t* κⁿ` over uncensored runs.
    pub c_est: f64,
    pub big_c_est: f64,
}

impl SweepResult {
    pub fn spread(&self) -> f64 {
        self.big_c_est / self.c_est
    }
}

fn scale_cfg(cfg: &SolverConfig, factor: f64) -> SolverConfig {
    SolverConfig {
        dt_init: cfg.dt_init * factor,
        dt_min: cfg.dt_min * factor,
        dt_max: cfg.dt_max * factor,
        ..*cfg
    }
}

/// Waiting time of `κ · shape` at `x0` for each `κ`, runs in parallel on
/// `workers` threads (0 picks the number of cores).
pub fn kappa_sweep(sc: &KappaSweepConfig, cfg: &SolverConfig, workers: usize) -> Result<SweepResult> {
    cfg.validate()?;
    check_thetas(&sc.thetas)?;
    let n = cfg.n;
    if sc.kappas.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
        return Err(Error::arg("kappas", "every kappa must be positive"));
    }
    if !(sc.t_max > 0.0) {
        return Err(Error::arg("t_max", format!("{} must be positive", sc.t_max)));
    }
    let grid = sc.grid.build()?;
    let x0 = sc
        .x0
        .or(sc.shape.x0())
        .ok_or_else(|| Error::arg("x0", "the shape has no boundary point; set x0"))?;
    let mut shape = sc.shape.build(grid, n)?;
    let mut shape_sup = 1.0;
    if sc.normalize {
        let r_max = (x0 - grid.x_min()).min(grid.x_max() - x0);
        let radii = dyadic_radii(r_max, grid.h());
        let rep = criterion_mass(&shape, x0, n, &radii, BallMode::Full)?;
        if !(rep.supremum > 0.0) {
            return Err(Error::arg("shape", "mass criterion of the shape vanishes"));
        }
        shape_sup = rep.supremum;
        shape = shape.scaled(1.0 / shape_sup)?;
    }
    let margin = sc.margin_cells * grid.h();
    let mut order: Vec<f64> = sc.kappas.clone();
    order.sort_by(f64::total_cmp);
    let pool = thread_pool(workers)?;
    let runs: Vec<KappaRun> = pool.install(|| {
        order
            .par_iter()
            .map(|&kappa| {
                let factor = match sc.dt_policy {
                    DtPolicy::Fixed => 1.0,
                    DtPolicy::Covariant { kappa_ref } => (kappa / kappa_ref).powf(-n),
                };
                let c = scale_cfg(cfg, factor);
                let t_max = sc.t_max * factor;
                let u0 = shape.scaled(kappa)?;
                let run = measure_waiting(&u0, x0, &sc.thetas, margin, &c, t_max, t_max / sc.records.max(1) as f64)?;
                let estimates = run.estimates.clone();
                let scaled = estimates.iter().map(|e| e.t_star * kappa.powf(n)).collect();
                Ok(KappaRun {
                    kappa,
                    t_max,
                    estimates,
                    scaled,
                    run,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let fit_for = |j: usize| -> Result<LogLogFit> {
        let (ks, ts): (Vec<f64>, Vec<f64>) = runs
            .iter()
            .filter(|r| !r.estimates[j].censored)
            .map(|r| (r.kappa, r.estimates[j].t_star))
            .unzip();
        if ks.is_empty() {
            return Err(Error::NoFit(format!(
                "every run is censored at theta = {}; raise t_max",
                sc.thetas[j]
            )));
        }
        fit_loglog(&ks, &ts, 4)
    };
    let fit = fit_for(0)?;
    let fits_per_theta = (0..sc.thetas.len()).map(|j| fit_for(j).ok()).collect();
    let scaled: Vec<f64> = runs.iter().filter(|r| !r.estimates[0].censored).map(|r| r.scaled[0]).collect();
    let c_est = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let big_c_est = scaled.iter().copied().fold(0.0, f64::max);
    Ok(SweepResult {
        n,
        x0,
        thetas: sc.thetas.clone(),
        shape_sup,
        runs,
        fit,
        fits_per_theta,
        c_est,
        big_c_est,
    })
}

impl SweepResult {
    pub fn write(&self, out: &mut StudyOutput) -> Result<()> {
        for (i, r) in self.runs.iter().enumerate() {
            out.write_series(&format!("runs/kappa_{i:02}.csv"), &r.run.series)?;
        }
        out.write_with("summary.csv", |w| {
            writeln!(w, "kappa,theta,t_star,censored,bracket_lo,bracket_hi,t_star_kappa_n")?;
            for r in &self.runs {
                for (e, s) in r.estimates.iter().zip(&r.scaled) {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{}",
                        cell(r.kappa),
                        cell(e.theta_used),
                        cell(e.t_star),
                        u8::from(e.censored),
                        cell(e.bracket.0),
                        cell(e.bracket.1),
                        cell(*s)
                    )?;
                }
            }
            Ok(())
        })?;
        let mut m = summary_header("kappa_sweep");
        let primary: Vec<serde_json::Value> = self
            .runs
            .iter()
            .map(|r| {
                let e = &r.estimates[0];
                serde_json::json!({
                    "kappa": r.kappa,
                    "t_star": if e.censored { serde_json::Value::Null } else { e.t_star.into() },
                    "censored": e.censored,
                    "failure": r.run.failure,
                })
            })
            .collect();
        m.insert("n".into(), self.n.into());
        m.insert("x0".into(), self.x0.into());
        m.insert("theta".into(), self.thetas[0].into());
        m.insert("shape_sup".into(), self.shape_sup.into());
        m.insert("runs".into(), primary.into());
        m.insert("slope".into(), self.fit.slope.into());
        m.insert("slope_stderr".into(), self.fit.stderr.into());
        m.insert("intercept".into(), self.fit.intercept.into());
        m.insert("c_est".into(), self.c_est.into());
        m.insert("C_est".into(), self.big_c_est.into());
        m.insert("spread".into(), self.spread().into());
        let per: Vec<serde_json::Value> = self
            .thetas
            .iter()
            .zip(&self.fits_per_theta)
            .map(|(t, f)| serde_json::json!({"theta": t, "slope": f.map(|f| f.slope)}))
            .collect();
        m.insert("per_theta".into(), per.into());
        out.write_json("summary.json", &serde_json::Value::Object(m))
    }
}

/// Outcome of a refinement study of the waiting time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// `t*` stable under refinement and bounded away from zero.
    Waiting,
    /// `t*` shrinking under refinement.
    Instantaneous,
    Inconclusive,
}

/// Largest fine-to-coarse `t*` ratio still read as "tends to zero".
pub const INSTANTANEOUS_RATIO: f64 = 0.6;
/// Largest relative spread `(max - min) / min` still read as "stable".
pub const WAITING_SPREAD: f64 = 0.15;

/// Classifies `t*` measured on successively finer grids. Censored values
/// are passed as `None`; a fully censored sequence counts as waiting.
pub fn classify(t_stars: &[Option<f64>]) -> Classification {
    if t_stars.len() < 2 {
        return Classification::Inconclusive;
    }
    if t_stars.iter().all(Option::is_none) {
        return Classification::Waiting;
    }
    let Some(ts) = t_stars.iter().copied().collect::<Option<Vec<f64>>>() else {
        return Classification::Inconclusive;
    };
    let (first, last) = (ts[0], ts[ts.len() - 1]);
    if ts.windows(2).all(|w| w[1] < w[0]) && last <= INSTANTANEOUS_RATIO * first {
        return Classification::Instantaneous;
    }
    let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ts.iter().copied().fold(0.0, f64::max);
    if lo > 0.0 && (hi - lo) / lo <= WAITING_SPREAD {
        return Classification::Waiting;
    }
    Classification::Inconclusive
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSweepConfig {
    pub x_min: f64,
    pub x_max: f64,
    /// Node counts, coarse to fine.
    pub grids: Vec<usize>,
    pub x0: f64,
    pub betas: Vec<f64>,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub width: f64,
    pub t_max: f64,
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    #[serde(default = "default_margin_cells")]
    pub margin_cells: f64,
    /// `dt_max` is capped at `t_max / steps_per_horizon`.
    #[serde(default = "default_steps")]
    pub steps_per_horizon: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaCell {
    pub beta: f64,
    pub n_nodes: usize,
    pub h: f64,
    pub run: WaitingRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaClass {
    pub beta: f64,
    /// Classification for each threshold, in configuration order.
    pub per_theta: Vec<Classification>,
    pub classification: Classification,
    pub theta_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSweepResult {
    pub n: f64,
    pub thetas: Vec<f64>,
    /// Ordered by `β`, then coarse to fine.
    pub cells: Vec<BetaCell>,
    pub classes: Vec<BetaClass>,
}

impl BetaSweepResult {
    pub fn class_of(&self, beta: f64) -> Option<&BetaClass> {
        self.classes.iter().find(|c| c.beta == beta)
    }
}

/// Waiting time of `(x - x0)₊^β` under grid refinement for each `β`.
pub fn beta_sweep(bc: &BetaSweepConfig, cfg: &SolverConfig, workers: usize) -> Result<BetaSweepResult> {
    cfg.validate()?;
    check_thetas(&bc.thetas)?;
    if bc.grids.len() < 2 {
        return Err(Error::arg("grids", "at least two grid levels are required"));
    }
    if bc.grids.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("grids", "node counts must increase"));
    }
    if !(bc.t_max > 0.0) || !(bc.steps_per_horizon >= 1.0) {
        return Err(Error::arg("t_max", "t_max and steps_per_horizon must be positive"));
    }
    let mut betas = bc.betas.clone();
    betas.sort_by(f64::total_cmp);
    let dt_max = cfg.dt_max.min(bc.t_max / bc.steps_per_horizon);
    let c = SolverConfig {
        dt_max,
        dt_init: cfg.dt_init.min(dt_max),
        ..*cfg
    };
    let jobs: Vec<(f64, usize)> = betas.iter().flat_map(|&b| bc.grids.iter().map(move |&g| (b, g))).collect();
    let pool = thread_pool(workers)?;
    let cells: Vec<BetaCell> = pool.install(|| {
        jobs.par_iter()
            .map(|&(beta, nn)| {
                let g = GridSpec {
                    x_min: bc.x_min,
                    x_max: bc.x_max,
                    n_nodes: nn,
                }
                .build()?;
                let u0 = power_law(g, bc.x0, beta, bc.amplitude, bc.width)?;
                let run = measure_waiting(&u0, bc.x0, &bc.thetas, bc.margin_cells * g.h(), &c, bc.t_max, bc.t_max / 10.0)?;
                Ok(BetaCell {
                    beta,
                    n_nodes: nn,
                    h: g.h(),
                    run,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let classes = betas
        .iter()
        .map(|&beta| {
            let row: Vec<&BetaCell> = cells.iter().filter(|c| c.beta == beta).collect();
            let per_theta: Vec<Classification> = (0..bc.thetas.len())
                .map(|j| {
                    let ts: Vec<Option<f64>> = row
                        .iter()
                        .map(|c| {
                            let e = &c.run.estimates[j];
                            (!e.censored).then_some(e.t_star)
                        })
                        .collect();
                    classify(&ts)
                })
                .collect();
            BetaClass {
                beta,
                classification: per_theta[0],
                theta_consistent: per_theta.iter().all(|c| *c == per_theta[0]),
                per_theta,
            }
        })
        .collect();
    Ok(BetaSweepResult {
        n: cfg.n,
        thetas: bc.thetas.clone(),
        cells,
        classes,
    })
}

impl BetaSweepResult {
    pub fn write(&self, out: &mut StudyOutput) -> Result<()> {
        for (i, c) in self.cells.iter().enumerate() {
            out.write_series(&format!("runs/beta_{i:02}.csv"), &c.run.series)?;
        }
        out.write_with("summary.csv", |w| {
            writeln!(w, "beta,n_nodes,h,theta,t_star,censored")?;
            for c in &self.cells {
                for e in &c.run.estimates {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        cell(c.beta),
                        c.n_nodes,
                        cell(c.h),
                        cell(e.theta_used),
                        cell(e.t_star),
                        u8::from(e.censored)
                    )?;
                }
            }
            Ok(())
        })?;
        let mut m = summary_header("beta_sweep");
        m.insert("n".into(), self.n.into());
        m.insert("critical_beta".into(), (4.0 / self.n).into());
        m.insert("thetas".into(), self.thetas.clone().into());
        m.insert(
            "classes".into(),
            serde_json::to_value(&self.classes).map_err(|e| Error::Parse(e.to_string()))?,
        );
        out.write_json("summary.json", &serde_json::Value::Object(m))
    }
}
