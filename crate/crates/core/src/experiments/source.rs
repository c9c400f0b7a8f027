use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, GridSpec, Profile};
use crate::solver::{run, RunFailureKind, SolverConfig};

use super::{cell, fit_loglog, summary_header, StudyOutput};

/// Source-type solution of `u_t = -(u u_xxx)_x`:
/// `t^{-1/5} (a² - η²)₊² / 120` with `η = x t^{-1/5}`.
///
/// Its support is `|x| <= a t^{1/5}` and its mass `a⁵ · 16/1800` does not
/// depend on `t`.
pub fn exact_source_n1(x: f64, t: f64, a: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::arg("t", format!("{t} must be positive")));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::arg("a", format!("{a} must be positive")));
    }
    let s = t.powf(-0.2);
    let eta = x * s;
    let q = (a * a - eta * eta).max(0.0);
    Ok(s * q * q / 120.0)
}

/// Largest scaled defect `|u_t + (u u_xxx)_x| / max(|u_t|, 1)` of the closed
/// form at `samples` points spread over the inner 60% of its support at time
/// `t`. Spatial quotients use a six-point third difference (exact on the
/// quartic) and a fourth-order first difference; `u_t` is a Richardson
/// extrapolated central difference.
pub fn source_residual(a: f64, t: f64, samples: usize) -> Result<f64> {
    exact_source_n1(0.0, t, a)?;
    if samples < 2 {
        return Err(Error::arg("samples", "need at least two points"));
    }
    let u = |x: f64, t: f64| exact_source_n1(x, t, a).unwrap_or(0.0);
    let edge = a * t.powf(0.2);
    let h = 1e-2 * edge;
    let uxxx = |x: f64| {
        let c = [0.125, -1.0, 1.625, 0.0, -1.625, 1.0, -0.125];
        (0..7).map(|j| c[j] * u(x + (j as f64 - 3.0) * h, t)).sum::<f64>() / (h * h * h)
    };
    let flux = |x: f64| u(x, t) * uxxx(x);
    let hx = 1e-3 * edge;
    let mut worst = 0.0f64;
    for i in 0..samples {
        let x = edge * (-0.6 + 1.2 * i as f64 / (samples - 1) as f64);
        let fx = (flux(x - 2.0 * hx) - 8.0 * flux(x - hx) + 8.0 * flux(x + hx) - flux(x + 2.0 * hx)) / (12.0 * hx);
        let k = 1e-4 * t;
        let d = |k: f64| (u(x, t + k) - u(x, t - k)) / (2.0 * k);
        let ut = (4.0 * d(0.5 * k) - d(k)) / 3.0;
        worst = worst.max((ut + fx).abs() / ut.abs().max(1.0));
    }
    Ok(worst)
}

/// [`exact_source_n1`] sampled on `grid`.
pub fn source_profile(grid: Grid1D, t: f64, a: f64) -> Result<Profile> {
    let values = grid.nodes().map(|x| exact_source_n1(x, t, a)).collect::<Result<Vec<_>>>()?;
    Profile::new(grid, values)
}

/// Time-step rule of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DtLaw {
    /// `dt = c · h²`.
    Diffusive { c: f64 },
    Fixed { dt: f64 },
}

impl DtLaw {
    pub fn dt(&self, h: f64) -> f64 {
        match *self {
            DtLaw::Diffusive { c } => c * h * h,
            DtLaw::Fixed { dt } => dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub x_min: f64,
    pub x_max: f64,
    /// Node counts, coarse to fine.
    pub grids: Vec<usize>,
    pub a: f64,
    pub t0: f64,
    pub t1: f64,
    pub dt_law: DtLaw,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            x_min: -0.6,
            x_max: 0.6,
            grids: vec![128, 256, 512, 1024],
            a: 1.0,
            t0: 0.01,
            t1: 0.02,
            dt_law: DtLaw::Diffusive { c: 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n_nodes: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    pub l1: f64,
    pub sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// `l1[k] / l1[k+1]`.
    pub l1_ratios: Vec<f64>,
    /// Observed order between consecutive grids, `ln(ratio) / ln(h[k]/h[k+1])`.
    pub orders: Vec<f64>,
    /// Least-squares slope of `ln l1` against `ln h`; `None` for a single grid.
    pub fitted_order: Option<f64>,
    /// Whether the L¹ error decreases on every refinement.
    pub monotone: bool,
}

/// Runs the `n = 1` source solution from `t0` to `t1` on each grid and
/// compares with the exact profile.
pub fn convergence_study(cc: &ConvergenceConfig, cfg: &SolverConfig) -> Result<ConvergenceStudy> {
    if cc.grids.is_empty() {
        return Err(Error::arg("grids", "at least one grid is required"));
    }
    if !(cc.t1 >= cc.t0) {
        return Err(Error::arg("t1", format!("t1 = {} precedes t0 = {}", cc.t1, cc.t0)));
    }
    let mut rows = Vec::new();
    for &nn in &cc.grids {
        let g = GridSpec {
            x_min: cc.x_min,
            x_max: cc.x_max,
            n_nodes: nn,
        }
        .build()?;
        let u0 = source_profile(g, cc.t0, cc.a)?;
        let dt = cc.dt_law.dt(g.h());
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::arg("dt_law", format!("time step {dt} must be positive")));
        }
        let c = SolverConfig {
            n: 1.0,
            dt_init: dt,
            dt_max: dt,
            dt_min: dt * 1e-6,
            ..*cfg
        };
        let span = cc.t1 - cc.t0;
        let series = run(&u0, &c, span, span, &mut []).map_err(|f| match f.kind {
            RunFailureKind::InvalidInput => Error::arg("solver", f.reason),
            _ => Error::RunFailed(format!("N = {nn}: {}", f.reason)),
        })?;
        let last = &series.last().expect("a run records at least t = 0").profile;
        let exact = source_profile(g, cc.t1, cc.a)?;
        let diff: Vec<f64> = last.values().iter().zip(exact.values()).map(|(u, e)| (u - e).abs()).collect();
        let m = diff.len();
        let l1 = g.h() * (diff[1..m - 1].iter().sum::<f64>() + 0.5 * (diff[0] + diff[m - 1]));
        let sup = diff.iter().copied().fold(0.0, f64::max);
        rows.push(ConvergenceRow {
            n_nodes: nn,
            h: g.h(),
            dt,
            steps: series.accepted_steps,
            l1,
            sup,
        });
    }
    let l1_ratios: Vec<f64> = rows.windows(2).map(|w| w[0].l1 / w[1].l1).collect();
    let orders = rows
        .windows(2)
        .map(|w| (w[0].l1 / w[1].l1).ln() / (w[0].h / w[1].h).ln())
        .collect();
    let fitted_order = if rows.len() >= 2 {
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let es: Vec<f64> = rows.iter().map(|r| r.l1).collect();
        fit_loglog(&hs, &es, 2).ok().map(|f| f.slope)
    } else {
        None
    };
    let monotone = rows.windows(2).all(|w| w[1].l1 < w[0].l1);
    Ok(ConvergenceStudy {
        rows,
        l1_ratios,
        orders,
        fitted_order,
        monotone,
    })
}

impl ConvergenceStudy {
    pub fn write(&self, out: &mut StudyOutput) -> Result<()> {
        out.write_with("summary.csv", |w| {
            writeln!(w, "n_nodes,h,dt,steps,l1,sup")?;
            for r in &self.rows {
                writeln!(w, "{},{},{},{},{},{}", r.n_nodes, cell(r.h), cell(r.dt), r.steps, cell(r.l1), cell(r.sup))?;
            }
            Ok(())
        })?;
        let mut m = summary_header("convergence");
        m.insert("rows".into(), serde_json::to_value(&self.rows).map_err(|e| Error::Parse(e.to_string()))?);
        m.insert("l1_ratios".into(), self.l1_ratios.clone().into());
        m.insert("orders".into(), self.orders.clone().into());
        m.insert("fitted_order".into(), self.fitted_order.into());
        m.insert("monotone".into(), self.monotone.into());
        out.write_json("summary.json", &serde_json::Value::Object(m))
    }
}
