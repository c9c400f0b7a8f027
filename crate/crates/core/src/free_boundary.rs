//! Thresholded support detection and waiting-time estimation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::cell;
use crate::grid::Profile;
use crate::solver::{Observer, StepStats, TimeSeries};

pub const DEFAULT_THETA_REL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    pub left: f64,
    pub right: f64,
    pub empty: bool,
}

impl SupportInterval {
    pub const EMPTY: SupportInterval = SupportInterval {
        left: f64::NAN,
        right: f64::NAN,
        empty: true,
    };

    pub fn contains(&self, x: f64) -> bool {
        !self.empty && self.left <= x && x <= self.right
    }

    /// Distance from `x` to the interval; infinite when empty.
    pub fn distance(&self, x: f64) -> f64 {
        if self.empty {
            f64::INFINITY
        } else {
            (self.left - x).max(x - self.right).max(0.0)
        }
    }
}

fn check_theta(theta_rel: f64) -> Result<()> {
    if !(theta_rel > 0.0 && theta_rel < 1.0) {
        return Err(Error::arg("theta_rel", format!("{theta_rel} is outside (0, 1)")));
    }
    Ok(())
}

/// Smallest interval containing every node with `u > θ·max u`.
pub fn support_interval(p: &Profile, theta_rel: f64) -> Result<SupportInterval> {
    check_theta(theta_rel)?;
    Ok(support_unchecked(p, theta_rel))
}

pub(crate) fn support_unchecked(p: &Profile, theta_rel: f64) -> SupportInterval {
    let v = p.values();
    let cut = theta_rel * p.max();
    if !(p.max() > 0.0) {
        return SupportInterval::EMPTY;
    }
    let first = v.iter().position(|u| *u > cut);
    let last = v.iter().rposition(|u| *u > cut);
    match (first, last) {
        (Some(i), Some(j)) => SupportInterval {
            left: p.grid().x(i),
            right: p.grid().x(j),
            empty: false,
        },
        _ => SupportInterval::EMPTY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaitingMode {
    OutsideSupport,
    OnBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaitingTimeEstimate {
    pub x0: f64,
    /// Infinite when censored.
    pub t_star: f64,
    pub mode: WaitingMode,
    pub theta_used: f64,
    pub margin_used: f64,
    pub censored: bool,
    /// Last time at which the front had not arrived, and first time it had.
    pub bracket: (f64, f64),
}

impl WaitingTimeEstimate {
    pub fn is_finite(&self) -> bool {
        !self.censored
    }
}

/// Chooses the branch from the initial profile.
pub fn waiting_mode(u0: &Profile, x0: f64, theta_rel: f64, margin: f64) -> WaitingMode {
    if support_unchecked(u0, theta_rel).distance(x0) > margin {
        WaitingMode::OutsideSupport
    } else {
        WaitingMode::OnBoundary
    }
}

/// Whether the front has reached `x0` in the given mode.
pub fn front_arrived(p: &Profile, x0: f64, theta_rel: f64, margin: f64, mode: WaitingMode) -> bool {
    match mode {
        WaitingMode::OutsideSupport => support_unchecked(p, theta_rel).contains(x0),
        WaitingMode::OnBoundary => {
            let cut = theta_rel * p.max();
            if !(p.max() > 0.0) {
                return false;
            }
            let g = p.grid();
            let slack = 1e-9 * g.h();
            let lo = ((x0 - margin - g.x_min() - slack) / g.h()).ceil().max(0.0) as usize;
            let hi = (((x0 + margin - g.x_min() + slack) / g.h()).floor() as usize).min(g.n_nodes() - 1);
            p.values()[lo..=hi].iter().all(|u| *u > cut)
        }
    }
}

fn check_point(p: &Profile, x0: f64, margin: f64) -> Result<()> {
    let g = p.grid();
    if !(x0 >= g.x_min() && x0 <= g.x_max()) {
        return Err(Error::OutOfDomain(format!("x0 = {x0} lies outside the grid")));
    }
    if !(margin >= 2.0 * g.h() * (1.0 - 1e-12)) {
        return Err(Error::UnderResolved(format!("margin {margin} is below 2h = {}", 2.0 * g.h())));
    }
    Ok(())
}

/// First recorded arrival time of the front at `x0`.
pub fn waiting_time(series: &TimeSeries, x0: f64, theta_rel: f64, margin: f64) -> Result<WaitingTimeEstimate> {
    check_theta(theta_rel)?;
    let first = series
        .records
        .first()
        .ok_or_else(|| Error::arg("series", "series has no records"))?;
    if first.t != 0.0 {
        return Err(Error::arg("series", "series must start at t = 0"));
    }
    check_point(&first.profile, x0, margin)?;
    let mode = waiting_mode(&first.profile, x0, theta_rel, margin);
    let mut t_prev = 0.0;
    for rec in &series.records {
        if front_arrived(&rec.profile, x0, theta_rel, margin, mode) {
            return Ok(WaitingTimeEstimate {
                x0,
                t_star: rec.t,
                mode,
                theta_used: theta_rel,
                margin_used: margin,
                censored: false,
                bracket: (t_prev, rec.t),
            });
        }
        t_prev = rec.t;
    }
    Ok(WaitingTimeEstimate {
        x0,
        t_star: f64::INFINITY,
        mode,
        theta_used: theta_rel,
        margin_used: margin,
        censored: true,
        bracket: (t_prev, f64::INFINITY),
    })
}

/// Checks the arrival predicate after every accepted step, for several
/// thresholds at once. Once every threshold has fired the observer reports
/// itself finished, which lets the run stop early.
#[derive(Debug, Clone)]
pub struct WaitingTimeTracker {
    x0: f64,
    margin: f64,
    mode: WaitingMode,
    thetas: Vec<f64>,
    hits: Vec<Option<(f64, f64)>>,
    t_last: f64,
}

impl WaitingTimeTracker {
    pub fn new(u0: &Profile, x0: f64, thetas: &[f64], margin: f64) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::arg("thetas", "at least one threshold is required"));
        }
        for &th in thetas {
            check_theta(th)?;
        }
        check_point(u0, x0, margin)?;
        // the mode is fixed by the smallest threshold, i.e. the widest support
        let th_min = thetas.iter().copied().fold(f64::INFINITY, f64::min);
        let mode = waiting_mode(u0, x0, th_min, margin);
        let hits = thetas
            .iter()
            .map(|&th| front_arrived(u0, x0, th, margin, mode).then_some((0.0, 0.0)))
            .collect();
        Ok(WaitingTimeTracker {
            x0,
            margin,
            mode,
            thetas: thetas.to_vec(),
            hits,
            t_last: 0.0,
        })
    }

    pub fn mode(&self) -> WaitingMode {
        self.mode
    }

    pub fn estimates(&self) -> Vec<WaitingTimeEstimate> {
        self.thetas
            .iter()
            .zip(&self.hits)
            .map(|(&th, hit)| {
                let (t_star, censored, bracket) = match hit {
                    Some((a, b)) => (*b, false, (*a, *b)),
                    None => (f64::INFINITY, true, (self.t_last, f64::INFINITY)),
                };
                WaitingTimeEstimate {
                    x0: self.x0,
                    t_star,
                    mode: self.mode,
                    theta_used: th,
                    margin_used: self.margin,
                    censored,
                    bracket,
                }
            })
            .collect()
    }
}

impl Observer for WaitingTimeTracker {
    fn on_step(&mut self, t: f64, p: &Profile, stats: &StepStats) {
        let t_prev = t - stats.dt_used;
        for (th, hit) in self.thetas.iter().zip(self.hits.iter_mut()) {
            if hit.is_none() && front_arrived(p, self.x0, *th, self.margin, self.mode) {
                *hit = Some((t_prev, t));
            }
        }
        self.t_last = t;
    }

    fn finished(&self) -> bool {
        self.hits.iter().all(Option::is_some)
    }
}

/// Interface positions per record as CSV `t,left,right`.
pub fn write_interface_csv<W: Write>(series: &TimeSeries, mut out: W) -> Result<()> {
    writeln!(out, "t,left,right")?;
    for r in &series.records {
        writeln!(out, "{},{},{}", cell(r.t), cell(r.support.left), cell(r.support.right))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::initial_data::power_law;

    fn grid() -> Grid1D {
        Grid1D::new(-1.0, 2.0, 301).unwrap()
    }

    #[test]
    fn support_of_zero_is_empty() {
        let z = Profile::zeros(grid());
        assert!(support_interval(&z, 1e-7).unwrap().empty);
        assert!(support_interval(&z, 1.5).is_err());
    }

    #[test]
    fn single_node_support() {
        let g = grid();
        let mut v = vec![0.0; g.n_nodes()];
        v[150] = 2.0;
        let p = Profile::new(g, v).unwrap();
        let s = support_interval(&p, 0.5).unwrap();
        assert_eq!((s.left, s.right), (g.x(150), g.x(150)));
    }

    #[test]
    fn power_law_left_endpoint() {
        let g = Grid1D::new(-1.0, 2.0, 3001).unwrap();
        let p = power_law(g, 0.0, 2.0, 1.0, 1.0).unwrap();
        for theta in [1e-2, 1e-4, 1e-6] {
            let s = support_interval(&p, theta).unwrap();
            let expect = (theta * p.max()).sqrt();
            assert!(s.left >= 0.0 && (s.left - expect).abs() <= 2.0 * g.h(), "theta={theta}");
        }
    }

    #[test]
    fn boundary_predicate_needs_the_full_margin() {
        let g = grid();
        let p = power_law(g, 0.0, 2.0, 1.0, 1.0).unwrap();
        let m = 4.0 * g.h();
        assert!(!front_arrived(&p, 0.0, 1e-7, m, WaitingMode::OnBoundary));
        assert!(front_arrived(&p, 0.5, 1e-7, m, WaitingMode::OnBoundary));
        assert!(!front_arrived(&p, 0.0, 1e-7, m, WaitingMode::OutsideSupport));
        assert_eq!(waiting_mode(&p, 0.0, 1e-7, m), WaitingMode::OnBoundary);
        assert_eq!(waiting_mode(&p, -0.5, 1e-7, m), WaitingMode::OutsideSupport);
    }
}
