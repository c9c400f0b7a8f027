use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BallMode, Grid1D, GridSpec};
use crate::initial_data::{concentrated, criterion_energy, criterion_mass, criterion_pnorm, dyadic_radii, oscillatory, power_law};
use crate::solver::SolverConfig;

use super::{cell, check_thetas, measure_waiting, summary_header, thread_pool, StudyOutput, WaitingRun};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleConfig {
    pub x_min: f64,
    pub x_max: f64,
    /// Node counts, coarse to fine. The concentrated family and all
    /// criteria use the finest one.
    pub grids: Vec<usize>,
    pub x0: f64,
    pub width: f64,
    /// Defaults to `0.2 · 4/n`.
    pub delta: Option<f64>,
    pub k_maxes: Vec<u32>,
    /// Exponent of the p-norm criterion.
    pub p_exp: f64,
    pub t_max: f64,
    pub thetas: Vec<f64>,
    pub margin_cells: f64,
    pub steps_per_horizon: f64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig {
            x_min: -0.6,
            x_max: 2.0,
            grids: vec![1025, 2049],
            x0: 0.0,
            width: 1.0,
            delta: None,
            k_maxes: vec![4, 8, 16],
            p_exp: 0.5,
            t_max: 1.0,
            thetas: vec![1e-7],
            margin_cells: 4.0,
            steps_per_horizon: 200.0,
        }
    }
}

pub const OSCILLATION_CELLS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillatoryReport {
    pub radii: Vec<f64>,
    pub mass: Vec<f64>,
    /// Mass criterion of the pure power law `(x - x0)₊^{4/n}` at the same radii.
    pub mass_baseline: Vec<f64>,
    pub energy: Vec<f64>,
    /// Range of `mass / mass_baseline` over the radii.
    pub mass_ratio_range: (f64, f64),
    /// Smallest radius at which the local period `2π s²` of the
    /// oscillation spans at least [`OSCILLATION_CELLS`] cells.
    pub resolved_radius: f64,
    /// `energy(r/4) / energy(r)` for every radius with `r/4 >= resolved_radius`.
    pub energy_growth: Vec<f64>,
    pub grids: Vec<usize>,
    pub runs: Vec<WaitingRun>,
    /// Primary-threshold `t*` per grid, `None` when censored.
    pub t_star: Vec<Option<f64>>,
    /// `(max - min) / min` of `t_star` when all are finite.
    pub t_star_spread: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentratedRow {
    pub k_max: u32,
    pub mass_sup: f64,
    pub pnorm_sup: f64,
    pub t_star: Option<f64>,
    pub run: WaitingRun,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub n: f64,
    pub delta: f64,
    pub oscillatory: OscillatoryReport,
    pub concentrated: Vec<ConcentratedRow>,
}

impl CounterexampleReport {
    pub fn mass_bounded(&self) -> bool {
        let (lo, hi) = self.oscillatory.mass_ratio_range;
        lo >= 1.0 - 1e-12 && hi <= 3.0 + 1e-12
    }

    /// The energy criterion grows towards small radii on every resolved
    /// scale pair.
    pub fn energy_grows(&self) -> bool {
        let g = &self.oscillatory.energy_growth;
        !g.is_empty() && g.iter().all(|f| *f > 1.0)
    }

    pub fn oscillatory_waits(&self) -> bool {
        self.oscillatory.t_star.iter().all(|t| t.is_some_and(|t| t > 0.0))
            && self.oscillatory.t_star_spread.is_some_and(|s| s <= super::WAITING_SPREAD)
    }

    pub fn concentrated_mass_increasing(&self) -> bool {
        self.concentrated.windows(2).all(|w| w[1].mass_sup > w[0].mass_sup)
    }

    pub fn concentrated_t_star_decreasing(&self) -> bool {
        self.concentrated
            .windows(2)
            .all(|w| matches!((w[0].t_star, w[1].t_star), (Some(a), Some(b)) if b < a))
    }
}

/// Criteria and waiting times of the oscillatory and concentrated families.
pub fn counterexample_study(cc: &CounterexampleConfig, cfg: &SolverConfig, workers: usize) -> Result<CounterexampleReport> {
    cfg.validate()?;
    check_thetas(&cc.thetas)?;
    let n = cfg.n;
    if !(n > 2.0 && n < 3.0) {
        return Err(Error::UnsupportedRange(format!("n = {n} is outside (2, 3)")));
    }
    if cc.grids.is_empty() || cc.k_maxes.is_empty() {
        return Err(Error::arg("grids", "grids and k_maxes must be non-empty"));
    }
    let delta = cc.delta.unwrap_or(0.2 * 4.0 / n);
    let grids: Vec<Grid1D> = cc
        .grids
        .iter()
        .map(|&nn| {
            GridSpec {
                x_min: cc.x_min,
                x_max: cc.x_max,
                n_nodes: nn,
            }
            .build()
        })
        .collect::<Result<_>>()?;
    let fine = *grids.last().expect("non-empty");
    let r_max = (cc.x0 - fine.x_min()).min(0.5 * cc.width);
    let radii = dyadic_radii(r_max, fine.h());
    if radii.is_empty() {
        return Err(Error::UnderResolved("no resolved radius around x0".into()));
    }
    let osc = oscillatory(fine, cc.x0, n, cc.width)?;
    let base = power_law(fine, cc.x0, 4.0 / n, 1.0, cc.width)?;
    let mass = criterion_mass(&osc, cc.x0, n, &radii, BallMode::Full)?.values;
    let mass_baseline = criterion_mass(&base, cc.x0, n, &radii, BallMode::Full)?.values;
    let energy = criterion_energy(&osc, cc.x0, n, &radii, BallMode::Full)?.values;
    let ratios: Vec<f64> = mass.iter().zip(&mass_baseline).map(|(a, b)| a / b).collect();
    let mass_ratio_range = (
        ratios.iter().copied().fold(f64::INFINITY, f64::min),
        ratios.iter().copied().fold(0.0, f64::max),
    );
    let resolved_radius = (OSCILLATION_CELLS * fine.h() / std::f64::consts::TAU).sqrt();
    let n_resolved = radii.iter().take_while(|r| **r >= resolved_radius).count();
    let energy_growth = energy[..n_resolved].windows(3).map(|w| w[2] / w[0]).collect();

    let dt_max = cfg.dt_max.min(cc.t_max / cc.steps_per_horizon);
    let c = SolverConfig {
        dt_max,
        dt_init: cfg.dt_init.min(dt_max),
        ..*cfg
    };
    let observe = cc.t_max / 10.0;
    let pool = thread_pool(workers)?;
    // jobs: one oscillatory run per grid, one concentrated run per k_max
    enum Job {
        Osc(Grid1D),
        Conc(u32),
    }
    let jobs: Vec<Job> = grids
        .iter()
        .map(|g| Job::Osc(*g))
        .chain(cc.k_maxes.iter().map(|k| Job::Conc(*k)))
        .collect();
    let runs: Vec<(WaitingRun, f64, f64)> = pool.install(|| {
        jobs.par_iter()
            .map(|job| match job {
                Job::Osc(g) => {
                    let u0 = oscillatory(*g, cc.x0, n, cc.width)?;
                    let run = measure_waiting(&u0, cc.x0, &cc.thetas, cc.margin_cells * g.h(), &c, cc.t_max, observe)?;
                    Ok((run, 0.0, 0.0))
                }
                Job::Conc(k) => {
                    let u0 = concentrated(fine, cc.x0, n, delta, *k, cc.width)?;
                    let m = criterion_mass(&u0, cc.x0, n, &radii, BallMode::Full)?.supremum;
                    let p = criterion_pnorm(&u0, cc.x0, n, cc.p_exp, &radii, BallMode::Full)?.supremum;
                    let run = measure_waiting(&u0, cc.x0, &cc.thetas, cc.margin_cells * fine.h(), &c, cc.t_max, observe)?;
                    Ok((run, m, p))
                }
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let first = |r: &WaitingRun| {
        let e = &r.estimates[0];
        (!e.censored).then_some(e.t_star)
    };
    let mut runs = runs.into_iter();
    let osc_runs: Vec<WaitingRun> = runs.by_ref().take(grids.len()).map(|(r, _, _)| r).collect();
    let t_star: Vec<Option<f64>> = osc_runs.iter().map(first).collect();
    let t_star_spread = t_star.iter().copied().collect::<Option<Vec<f64>>>().map(|ts| {
        let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ts.iter().copied().fold(0.0, f64::max);
        (hi - lo) / lo
    });
    let concentrated = cc
        .k_maxes
        .iter()
        .zip(runs)
        .map(|(&k_max, (run, mass_sup, pnorm_sup))| ConcentratedRow {
            k_max,
            mass_sup,
            pnorm_sup,
            t_star: first(&run),
            run,
        })
        .collect();
    Ok(CounterexampleReport {
        n,
        delta,
        oscillatory: OscillatoryReport {
            radii,
            mass,
            mass_baseline,
            energy,
            mass_ratio_range,
            resolved_radius,
            energy_growth,
            grids: cc.grids.clone(),
            runs: osc_runs,
            t_star,
            t_star_spread,
        },
        concentrated,
    })
}

impl CounterexampleReport {
    pub fn write(&self, out: &mut StudyOutput) -> Result<()> {
        let o = &self.oscillatory;
        out.write_with("runs/oscillatory_criteria.csv", |w| {
            writeln!(w, "r,mass,mass_baseline,energy")?;
            for i in 0..o.radii.len() {
                writeln!(w, "{},{},{},{}", cell(o.radii[i]), cell(o.mass[i]), cell(o.mass_baseline[i]), cell(o.energy[i]))?;
            }
            Ok(())
        })?;
        for (g, r) in o.grids.iter().zip(&o.runs) {
            out.write_series(&format!("runs/oscillatory_{g}.csv"), &r.series)?;
        }
        for row in &self.concentrated {
            out.write_series(&format!("runs/concentrated_k{}.csv", row.k_max), &row.run.series)?;
        }
        out.write_with("summary.csv", |w| {
            writeln!(w, "family,parameter,mass_sup,pnorm_sup,t_star")?;
            for (g, t) in o.grids.iter().zip(&o.t_star) {
                let m = o.mass.iter().copied().fold(0.0, f64::max);
                writeln!(w, "oscillatory,{g},{},nan,{}", cell(m), cell(t.unwrap_or(f64::INFINITY)))?;
            }
            for r in &self.concentrated {
                writeln!(
                    w,
                    "concentrated,{},{},{},{}",
                    r.k_max,
                    cell(r.mass_sup),
                    cell(r.pnorm_sup),
                    cell(r.t_star.unwrap_or(f64::INFINITY))
                )?;
            }
            Ok(())
        })?;
        let mut m = summary_header("counterexamples");
        m.insert("n".into(), self.n.into());
        m.insert("delta".into(), self.delta.into());
        m.insert(
            "oscillatory".into(),
            serde_json::json!({
                "mass_ratio_range": [o.mass_ratio_range.0, o.mass_ratio_range.1],
                "energy_growth": o.energy_growth,
                "resolved_radius": o.resolved_radius,
                "t_star": o.t_star,
                "t_star_spread": o.t_star_spread,
                "mass_bounded": self.mass_bounded(),
                "energy_grows": self.energy_grows(),
                "waits": self.oscillatory_waits(),
            }),
        );
        let conc: Vec<serde_json::Value> = self
            .concentrated
            .iter()
            .map(|r| serde_json::json!({"k_max": r.k_max, "mass_sup": r.mass_sup, "pnorm_sup": r.pnorm_sup, "t_star": r.t_star}))
            .collect();
        m.insert("concentrated".into(), conc.into());
        m.insert("concentrated_mass_increasing".into(), self.concentrated_mass_increasing().into());
        m.insert("concentrated_t_star_decreasing".into(), self.concentrated_t_star_decreasing().into());
        out.write_json("summary.json", &serde_json::Value::Object(m))
    }
}
