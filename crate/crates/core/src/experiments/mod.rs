//! Pre-built studies: validation against the exact `n = 1` source
//! solution, amplitude and growth-exponent sweeps of the waiting time, and
//! the two counterexample families.
//!
//! Every study can write a directory with `manifest.json`, `runs/*.csv`,
//! `summary.csv` and `summary.json`.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_boundary::{WaitingTimeEstimate, WaitingTimeTracker};
use crate::grid::Profile;
use crate::manifest::{RunManifest, SCHEMA_VERSION};
use crate::solver::{run, Observer, RunFailureKind, SolverConfig, TimeSeries};

mod counterexamples;
mod source;
mod sweeps;

pub use counterexamples::{
    counterexample_study, ConcentratedRow, CounterexampleConfig, CounterexampleReport, OscillatoryReport,
};
pub use source::{convergence_study, exact_source_n1, source_profile, source_residual, ConvergenceConfig, ConvergenceRow, ConvergenceStudy, DtLaw};
pub use sweeps::{
    beta_sweep, classify, kappa_sweep, BetaCell, BetaClass, BetaSweepConfig, BetaSweepResult, Classification, DtPolicy,
    KappaRun, KappaSweepConfig, SweepResult, INSTANTANEOUS_RATIO, WAITING_SPREAD,
};

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    /// Standard error of the slope; zero when the points are collinear or
    /// only two were given.
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Fits `ln y = intercept + slope · ln x`. All values must be positive and
/// at least `min_points` pairs are required.
pub fn fit_loglog(xs: &[f64], ys: &[f64], min_points: usize) -> Result<LogLogFit> {
    if xs.len() != ys.len() {
        return Err(Error::arg("ys", "length differs from xs"));
    }
    let m = xs.len();
    if m < min_points.max(2) {
        return Err(Error::NoFit(format!("{m} point(s), need at least {}", min_points.max(2))));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::NoFit("log-log fit needs finite positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / m as f64;
    let my = ly.iter().sum::<f64>() / m as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::NoFit("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if m > 2 {
        let ssr: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (ssr / (m - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LogLogFit {
        slope,
        stderr,
        intercept,
        points: m,
    })
}

/// Waiting-time estimates from one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaitingRun {
    pub estimates: Vec<WaitingTimeEstimate>,
    /// Reason the run stopped before `t_max`, other than every threshold
    /// having fired. Thresholds that had not fired by then are censored.
    pub failure: Option<String>,
    pub accepted_steps: usize,
    #[serde(skip)]
    pub series: TimeSeries,
}

/// Runs `u0` until the front has reached `x0` for every threshold in
/// `thetas` or `t_max` is hit.
pub fn measure_waiting(
    u0: &Profile,
    x0: f64,
    thetas: &[f64],
    margin: f64,
    cfg: &SolverConfig,
    t_max: f64,
    observe_every: f64,
) -> Result<WaitingRun> {
    let mut tracker = WaitingTimeTracker::new(u0, x0, thetas, margin)?;
    let outcome = {
        let mut obs: [&mut dyn Observer; 1] = [&mut tracker];
        run(u0, cfg, t_max, observe_every, &mut obs)
    };
    let (series, failure) = match outcome {
        Ok(s) => (s, None),
        Err(f) if f.kind == RunFailureKind::InvalidInput => return Err(Error::RunFailed(f.reason)),
        Err(f) => {
            let reason = format!("{} at t = {:.6e}", f.reason, f.t);
            (*f.series, Some(reason))
        }
    };
    Ok(WaitingRun {
        estimates: tracker.estimates(),
        failure,
        accepted_steps: series.accepted_steps,
        series,
    })
}

/// Validated list of support thresholds; the first one is the primary.
pub(crate) fn check_thetas(thetas: &[f64]) -> Result<()> {
    if thetas.is_empty() {
        return Err(Error::arg("thetas", "at least one threshold is required"));
    }
    if let Some(t) = thetas.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::arg("thetas", format!("{t} is outside (0, 1)")));
    }
    Ok(())
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::arg("workers", e.to_string()))
}

/// Output directory of a study.
#[derive(Debug)]
pub struct StudyOutput {
    dir: PathBuf,
    manifest: RunManifest,
}

impl StudyOutput {
    /// Creates `dir`; subdirectories appear as files are written into them.
    pub fn create(dir: &Path, manifest: RunManifest) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(StudyOutput {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    /// Writes a file through `fill` and lists it in the manifest.
    pub fn write_with(&mut self, rel: &str, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        fill(&mut w)?;
        w.flush()?;
        self.manifest.add_output(rel);
        Ok(())
    }

    pub fn write_json(&mut self, rel: &str, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
        self.write_with(rel, |w| {
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    pub fn write_series(&mut self, rel: &str, series: &TimeSeries) -> Result<()> {
        self.write_with(rel, |w| series.write_csv(w))
    }

    /// Writes `manifest.json` and returns it.
    pub fn finish(self) -> Result<RunManifest> {
        self.manifest.write(&self.dir)?;
        Ok(self.manifest)
    }
}

/// Common header of every `summary.json`.
pub(crate) fn summary_header(study: &str) -> serde_json::Map<String, serde_json::Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema_version".into(), SCHEMA_VERSION.into());
    m.insert("study".into(), study.into());
    m
}

/// Formats a float for CSV cells; infinities and NaN as `inf`/`nan`.
pub(crate) fn cell(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

#[cfg(test)]
mod tests;
