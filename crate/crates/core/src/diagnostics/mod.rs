//! Functionals evaluated on profiles and runs: the weighted entropy that is
//! monotone ahead of a dry point, localized mass/energy/entropy on shrinking
//! balls, and empirical checks of the interpolation inequalities behind the
//! waiting-time estimates.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_ball, integrate_cellwise, integrate_mapped, BallMode, Grid1D, Profile};
use crate::solver::TimeSeries;

mod inequalities;

pub use inequalities::{
    bernis_gruen_check, energy_balance_monitor, gns_check, gns_theta, positive_corpus, BernisGruenReport,
    Cutoff, EnergyBalanceReport, GnsReport, IntervalResidual,
};

/// Branch point of the monotonicity exponents.
pub const MONOTONICITY_BRANCH: f64 = 32.0 / 11.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityParams {
    pub alpha: f64,
    pub gamma: f64,
    pub n: f64,
}

/// Exponents `(α, γ)` for which `∫ u^{1+α} |x - x0|^γ` is nondecreasing in
/// time while `x0` stays dry. Defined for `n ∈ (2, 3)`.
pub fn monotonicity_params(n: f64) -> Result<MonotonicityParams> {
    if !(n > 2.0 && n < 3.0) {
        return Err(Error::UnsupportedRange(format!("n = {n} is outside (2, 3)")));
    }
    let (alpha, gamma) = if n < MONOTONICITY_BRANCH {
        (-11.0 * n / 20.0 + 12.0 / 20.0, -2.0)
    } else {
        ((1.0 - n) / 2.0, -1.1)
    };
    Ok(MonotonicityParams { alpha, gamma, n })
}

/// Nodes carrying positive height within `2h` of `x0`, if any.
fn wet_near(p: &Profile, x0: f64) -> Option<f64> {
    let g = p.grid();
    let reach = 2.0 * g.h() * (1.0 + 1e-9);
    g.nodes()
        .zip(p.values())
        .find(|(x, u)| **u > 0.0 && (x - x0).abs() <= reach)
        .map(|(x, _)| x)
}

/// `∫ u^{1+α} |x - x0|^γ dx` by the trapezoid rule over the nodes.
///
/// The weight is singular at `x0`, so every wet node must keep a distance
/// of more than `2h`.
pub fn weighted_entropy(p: &Profile, x0: f64, alpha: f64, gamma: f64) -> Result<f64> {
    if !(alpha > -1.0) || !alpha.is_finite() || !gamma.is_finite() {
        return Err(Error::arg("alpha", format!("need 1 + alpha > 0, got alpha = {alpha}")));
    }
    if let Some(x) = wet_near(p, x0) {
        return Err(Error::SingularWeight(format!(
            "u > 0 at x = {x}, within 2h of x0 = {x0}"
        )));
    }
    let g = p.grid();
    let v = p.values();
    let last = v.len() - 1;
    let total: f64 = v
        .iter()
        .enumerate()
        .filter(|(_, u)| **u > 0.0)
        .map(|(i, u)| {
            let w = if i == 0 || i == last { 0.5 } else { 1.0 };
            w * u.powf(1.0 + alpha) * (g.x(i) - x0).abs().powf(gamma)
        })
        .sum();
    Ok(g.h() * total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub x0: f64,
    pub params: MonotonicityParams,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `1e-6` times the largest value.
    pub tolerance: f64,
    /// Record indices `i` with `values[i] < values[i - 1] - tolerance`.
    pub violations: Vec<usize>,
    /// First recorded time at which the support came within `2h` of `x0`;
    /// the sequence stops just before it.
    pub hypothesis_lost_at: Option<f64>,
}

impl MonotonicityReport {
    pub fn is_monotone(&self) -> bool {
        self.violations.is_empty()
    }

    /// CSV `t,value,increment,violation`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,value,increment,violation")?;
        for (i, (t, v)) in self.times.iter().zip(&self.values).enumerate() {
            let inc = if i == 0 { 0.0 } else { v - self.values[i - 1] };
            let flag = u8::from(self.violations.contains(&i));
            writeln!(out, "{t:.16e},{v:.16e},{inc:.16e},{flag}")?;
        }
        Ok(())
    }
}

pub const MONOTONICITY_REL_TOL: f64 = 1e-6;

/// Weighted entropy along a run, checked for monotonicity.
pub fn monotonicity_monitor(series: &TimeSeries, x0: f64, n: f64) -> Result<MonotonicityReport> {
    let params = monotonicity_params(n)?;
    let first = series
        .records
        .first()
        .ok_or_else(|| Error::arg("series", "series has no records"))?;
    if !first.profile.grid().contains(x0) {
        return Err(Error::OutOfDomain(format!("x0 = {x0} lies outside the grid")));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut lost = None;
    for rec in &series.records {
        match weighted_entropy(&rec.profile, x0, params.alpha, params.gamma) {
            Ok(v) => {
                times.push(rec.t);
                values.push(v);
            }
            Err(Error::SingularWeight(msg)) => {
                if times.is_empty() {
                    return Err(Error::SingularWeight(msg));
                }
                lost = Some(rec.t);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let tolerance = MONOTONICITY_REL_TOL * values.iter().copied().fold(0.0, f64::max);
    let violations = (1..values.len())
        .filter(|&i| values[i] < values[i - 1] - tolerance)
        .collect();
    Ok(MonotonicityReport {
        x0,
        params,
        times,
        values,
        tolerance,
        violations,
        hypothesis_lost_at: lost,
    })
}

/// Which second functional accompanies the local mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CylinderMode {
    /// Weighted energy plus dissipation, for `n ∈ [2, 3)`.
    Weak,
    /// Weighted `α`-entropy plus its dissipation, for `n < 2`.
    Strong { alpha: f64 },
}

impl CylinderMode {
    pub const DEFAULT_STRONG_ALPHA: f64 = 0.05;

    /// The mode matching the slippage regime of `n`.
    pub fn for_n(n: f64) -> Self {
        if n >= 2.0 {
            CylinderMode::Weak
        } else {
            CylinderMode::Strong {
                alpha: Self::DEFAULT_STRONG_ALPHA,
            }
        }
    }

    /// Default time-weight exponent `β`.
    pub fn default_beta(self, n: f64) -> f64 {
        match self {
            CylinderMode::Weak => (0.5 * (0.5 + 4.0 / (3.0 + n))).min(0.6),
            CylinderMode::Strong { .. } => 0.1,
        }
    }

    /// Default smallness exponent `δ` paired with `ε`.
    pub fn default_delta(self, n: f64) -> f64 {
        match self {
            CylinderMode::Weak => {
                let (lo, hi) = weak_delta_range(n);
                0.5 * (lo + hi)
            }
            CylinderMode::Strong { .. } => 1.0,
        }
    }

    fn validate(self, n: f64) -> Result<()> {
        if let CylinderMode::Strong { alpha } = self {
            if !(alpha > 0.0 && alpha < 2.0 - n) {
                return Err(Error::arg(
                    "alpha",
                    format!("strong mode needs 0 < alpha < 2 - n = {}, got {alpha}", 2.0 - n),
                ));
            }
        }
        Ok(())
    }
}

/// Open interval of admissible `δ` in weak mode.
pub fn weak_delta_range(n: f64) -> (f64, f64) {
    ((6.0 - 2.0 * n) / (n + 3.0), 2.0 - n / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderReport {
    pub x0: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub k: u32,
    pub r_k: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub beta: f64,
    pub mode: CylinderMode,
    #[serde(rename = "M_k")]
    pub m_k: f64,
    #[serde(rename = "E_k")]
    pub e_k: Option<f64>,
    #[serde(rename = "S_k")]
    pub s_k: Option<f64>,
    #[serde(rename = "normalized_M")]
    pub normalized_m: f64,
    #[serde(rename = "normalized_E")]
    pub normalized_e: Option<f64>,
    #[serde(rename = "normalized_S")]
    pub normalized_s: Option<f64>,
}

impl CylinderReport {
    /// `E_k` or `S_k`, whichever the mode populates.
    pub fn second(&self) -> f64 {
        self.e_k.or(self.s_k).unwrap_or(0.0)
    }

    pub fn normalized_second(&self) -> f64 {
        self.normalized_e.or(self.normalized_s).unwrap_or(0.0)
    }
}

/// Per-record cellwise integrands, shared across levels.
struct Densities {
    t: f64,
    profile_idx: usize,
    /// Integrand of the supremum term (cellwise) or `None` when it is nodal.
    sup_cells: Option<Vec<f64>>,
    /// Integrand of the time-integrated term.
    int_cells: Vec<f64>,
}

fn third_difference_cells(g: &Grid1D, v: &[f64], n: f64) -> Vec<f64> {
    // uⁿ|u_xxx|² on each cell, switched off unless both end nodes are wet
    let m = v.len();
    let inv_h3 = 1.0 / (g.h() * g.h() * g.h());
    let mut out = vec![0.0; m - 1];
    for f in 1..m.saturating_sub(2) {
        if v[f] > 0.0 && v[f + 1] > 0.0 {
            let d3 = (v[f + 2] - 3.0 * v[f + 1] + 3.0 * v[f] - v[f - 1]) * inv_h3;
            out[f] = (0.5 * (v[f] + v[f + 1])).powf(n) * d3 * d3;
        }
    }
    out
}

fn power_slope_cells(g: &Grid1D, v: &[f64], p: f64, q: f64) -> Vec<f64> {
    // |∂x u^p|^q with face differences of u^p
    let h = g.h();
    v.windows(2)
        .map(|w| ((w[1].powf(p) - w[0].powf(p)) / h).abs().powf(q))
        .collect()
}

fn densities(series: &TimeSeries, horizon: f64, mode: CylinderMode) -> Vec<Densities> {
    let n = series.n;
    let cutoff = horizon * (1.0 + 1e-12);
    series
        .records
        .iter()
        .enumerate()
        .take_while(|(_, r)| r.t <= cutoff)
        .map(|(i, r)| {
            let g = r.profile.grid();
            let v = r.profile.values();
            let (sup_cells, int_cells) = match mode {
                CylinderMode::Weak => {
                    let slopes = r.profile.face_slopes().iter().map(|s| s * s).collect();
                    let mut int = power_slope_cells(g, v, (n + 2.0) / 6.0, 6.0);
                    for (a, b) in int.iter_mut().zip(third_difference_cells(g, v, n)) {
                        *a += b;
                    }
                    (Some(slopes), int)
                }
                CylinderMode::Strong { alpha } => (None, power_slope_cells(g, v, (n + alpha + 1.0) / 4.0, 4.0)),
            };
            Densities {
                t: r.t,
                profile_idx: i,
                sup_cells,
                int_cells,
            }
        })
        .collect()
}

fn check_series(series: &TimeSeries, horizon: f64) -> Result<()> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::arg("T", format!("horizon must be positive, got {horizon}")));
    }
    match series.records.first() {
        None => return Err(Error::arg("series", "series has no records")),
        Some(r) if r.t != 0.0 => return Err(Error::arg("series", "series must start at t = 0")),
        _ => {}
    }
    if series.t_final() < horizon * (1.0 - 1e-12) {
        return Err(Error::InsufficientResolution(format!(
            "series ends at t = {} before T = {horizon}",
            series.t_final()
        )));
    }
    Ok(())
}

fn check_radius(g: &Grid1D, x0: f64, r: f64) -> Result<()> {
    if r < 4.0 * g.h() * (1.0 - 1e-9) {
        return Err(Error::UnderResolved(format!("r = {r} is below 4h = {}", 4.0 * g.h())));
    }
    check_ball(g, x0, r, BallMode::Full).map(|_| ())
}

#[allow(clippy::too_many_arguments)]
fn level_report(
    series: &TimeSeries,
    dens: &[Densities],
    x0: f64,
    big_r: f64,
    k: u32,
    horizon: f64,
    beta: f64,
    mode: CylinderMode,
) -> CylinderReport {
    let n = series.n;
    let r = big_r / 2f64.powi(k as i32);
    let (a, b) = (x0 - r, x0 + r);
    let g = series.records[0].profile.grid();
    let mut m_k = 0.0f64;
    let mut sup = 0.0f64;
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for d in dens {
        let p = &series.records[d.profile_idx].profile;
        m_k = m_k.max(integrate_mapped(p, a, b, |u| u));
        let tw = d.t.powf(beta);
        let s = match (&d.sup_cells, mode) {
            (Some(c), _) => integrate_cellwise(g, c, a, b),
            (None, CylinderMode::Strong { alpha }) => integrate_mapped(p, a, b, |u| u.powf(alpha + 1.0)),
            (None, CylinderMode::Weak) => unreachable!(),
        };
        sup = sup.max(tw * s);
        let f = tw * integrate_cellwise(g, &d.int_cells, a, b);
        if let Some((t0, f0)) = prev {
            integral += 0.5 * (d.t - t0) * (f0 + f);
        }
        prev = Some((d.t, f));
    }
    let second = sup + integral;
    let normalized_m = m_k / (horizon.powf(-1.0 / n) * r.powf(4.0 / n + 1.0));
    let (e_k, s_k, normalized_e, normalized_s) = match mode {
        CylinderMode::Weak => {
            let scale = horizon.powf(beta - 2.0 / n) * r.powf(8.0 / n - 1.0);
            (Some(second), None, Some(second / scale), None)
        }
        CylinderMode::Strong { alpha } => {
            let scale = horizon.powf(beta - (1.0 + alpha) / n) * r.powf(4.0 * (alpha + 1.0) / n + 1.0);
            (None, Some(second), None, Some(second / scale))
        }
    };
    CylinderReport {
        x0,
        big_r,
        k,
        r_k: r,
        horizon,
        beta,
        mode,
        m_k,
        e_k,
        s_k,
        normalized_m,
        normalized_e,
        normalized_s,
    }
}

fn validate_cylinder(series: &TimeSeries, x0: f64, big_r: f64, k_max: u32, horizon: f64, beta: f64, mode: CylinderMode) -> Result<()> {
    check_series(series, horizon)?;
    mode.validate(series.n)?;
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::arg("beta", format!("{beta} must be finite and >= 0")));
    }
    let g = series.records[0].profile.grid();
    check_radius(g, x0, big_r)?;
    check_radius(g, x0, big_r / 2f64.powi(k_max as i32))
}

/// Local mass and the mode's weighted functional on `B_{R/2^k}(x0) × [0, T]`.
///
/// Suprema run over the recorded instants in `[0, T]`, time integrals use
/// the trapezoid rule on the same instants, so the record cadence sets the
/// accuracy.
pub fn cylinder_quantities(
    series: &TimeSeries,
    x0: f64,
    big_r: f64,
    k: u32,
    horizon: f64,
    beta: f64,
    mode: CylinderMode,
) -> Result<CylinderReport> {
    validate_cylinder(series, x0, big_r, k, horizon, beta, mode)?;
    let dens = densities(series, horizon, mode);
    Ok(level_report(series, &dens, x0, big_r, k, horizon, beta, mode))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeLevel {
    pub k: u32,
    pub r_k: f64,
    #[serde(rename = "M_k")]
    pub m_k: f64,
    /// `E_k` in weak mode, `S_k` in strong mode.
    pub second: f64,
    /// `M_k / (ε T^{-1/n} r_k^{4/n+1})`.
    pub margin_mass: f64,
    /// The second functional over `ε^δ` times its scaling.
    pub margin_second: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub x0: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n: f64,
    pub beta: f64,
    pub eps: f64,
    pub delta: f64,
    pub mode: CylinderMode,
    pub levels: Vec<CascadeLevel>,
}

impl CascadeReport {
    pub fn all_pass(&self) -> bool {
        self.levels.iter().all(|l| l.pass)
    }

    /// CSV, one row per level.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,r_k,M_k,second,margin_mass,margin_second,pass")?;
        for l in &self.levels {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                l.k,
                l.r_k,
                l.m_k,
                l.second,
                l.margin_mass,
                l.margin_second,
                u8::from(l.pass)
            )?;
        }
        Ok(())
    }
}

/// Checks both smallness conditions on every level `k = 0..=k_max`.
#[allow(clippy::too_many_arguments)]
pub fn degeneracy_cascade(
    series: &TimeSeries,
    x0: f64,
    big_r: f64,
    k_max: u32,
    horizon: f64,
    beta: f64,
    eps: f64,
    delta: f64,
    mode: CylinderMode,
) -> Result<CascadeReport> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::arg("eps", format!("{eps} must be positive")));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::arg("delta", format!("{delta} must be positive")));
    }
    validate_cylinder(series, x0, big_r, k_max, horizon, beta, mode)?;
    let dens = densities(series, horizon, mode);
    let levels = (0..=k_max)
        .map(|k| {
            let rep = level_report(series, &dens, x0, big_r, k, horizon, beta, mode);
            let margin_mass = rep.normalized_m / eps;
            let margin_second = rep.normalized_second() / eps.powf(delta);
            CascadeLevel {
                k,
                r_k: rep.r_k,
                m_k: rep.m_k,
                second: rep.second(),
                margin_mass,
                margin_second,
                pass: margin_mass <= 1.0 && margin_second <= 1.0,
            }
        })
        .collect();
    Ok(CascadeReport {
        x0,
        big_r,
        horizon,
        n: series.n,
        beta,
        eps,
        delta,
        mode,
        levels,
    })
}
