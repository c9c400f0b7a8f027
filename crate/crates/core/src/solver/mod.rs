//! Implicit Euler integrator for `u_t = -(uⁿ u_xxx)_x` in conservative flux
//! form.
//!
//! With faces `f = 0..N-1` between nodes `f` and `f+1`, the defect at node `i`
//! is
//!
//! ```text
//! r_i = u_i - u_old_i + dt/h (J_{i} - J_{i-1}),   J_f = M_f · D3_f,
//! D3_f = (u_{f+2} - 3u_{f+1} + 3u_f - u_{f-1}) / h³,
//! ```
//!
//! all evaluated at the new time level. The two outermost faces carry no
//! flux, which together with zero heights on the outer nodes gives the
//! clamped `u = u_x = 0` closure. Every face flux enters two defects with
//! opposite signs, so the columns of the Newton Jacobian sum to one and the
//! total mass is unchanged by each Newton update up to round-off.

mod banded;
pub(crate) mod mobility;
mod series;

pub use banded::{BandLu, BandMatrix};
pub use mobility::{face_mobility, face_states, upwind_mobility, Mobility};
pub use series::{EnergyFlag, Observer, Record, TimeSeries};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::grid::{dirichlet_energy, mass, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Mobility exponent, `0 < n < 3`.
    pub n: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Bound on `max_i (|r_i| - ρ_i)₊ / max u_old`, where `ρ_i` bounds the
    /// floating-point error of the defect itself.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub mobility: Mobility,
    pub support_threshold_rel: f64,
    pub positivity_floor: f64,
    /// Step-size factor after a rejected step.
    pub dt_shrink: f64,
    /// Step-size factor after an easy step.
    pub dt_grow: f64,
    /// A step is easy when Newton needs at most this many iterations.
    pub easy_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n: 2.5,
            dt_init: 1e-8,
            dt_min: 1e-16,
            dt_max: 1e-2,
            newton_tol: 1e-10,
            newton_max_iter: 20,
            mobility: Mobility::Upwind,
            support_threshold_rel: 1e-7,
            positivity_floor: 0.0,
            dt_shrink: 0.5,
            dt_grow: 1.5,
            easy_iters: 3,
        }
    }
}

impl SolverConfig {
    pub fn with_n(n: f64) -> Self {
        SolverConfig {
            n,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n > 0.0 && self.n < 3.0) {
            return Err(Error::arg("n", format!("{} is outside (0, 3)", self.n)));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(Error::arg(
                "dt_init",
                format!(
                    "need 0 < dt_min ({}) <= dt_init ({}) <= dt_max ({})",
                    self.dt_min, self.dt_init, self.dt_max
                ),
            ));
        }
        if !self.dt_max.is_finite() {
            return Err(Error::arg("dt_max", "must be finite"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::arg("newton_tol", "must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::arg("newton_max_iter", "must be at least 1"));
        }
        if let Mobility::Regularized { eps } = self.mobility {
            if !(eps >= 0.0) || !eps.is_finite() {
                return Err(Error::arg("eps", format!("{eps} must be >= 0")));
            }
        }
        if !(self.support_threshold_rel > 0.0 && self.support_threshold_rel < 1.0) {
            return Err(Error::arg("support_threshold_rel", "must lie in (0, 1)"));
        }
        if !(self.positivity_floor >= 0.0) {
            return Err(Error::arg("positivity_floor", "must be >= 0"));
        }
        if !(self.dt_shrink > 0.0 && self.dt_shrink < 1.0) {
            return Err(Error::arg("dt_shrink", "must lie in (0, 1)"));
        }
        if !(self.dt_grow >= 1.0) || !self.dt_grow.is_finite() {
            return Err(Error::arg("dt_grow", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub dt_used: f64,
    pub newton_iters: usize,
    pub residual_final: f64,
    /// Rejections that preceded this step (filled in by [`run`]).
    pub dt_rejections: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepFailure {
    #[error("Newton did not converge after {iters} iterations (scaled residual {residual:e})")]
    NotConverged { iters: usize, residual: f64 },
    #[error("singular Newton matrix")]
    Singular,
    #[error("negative height {min:e} beyond round-off")]
    PositivityViolation { min: f64 },
    #[error("support reached the domain boundary (node {node})")]
    DomainExhausted { node: usize },
    #[error(transparent)]
    Invalid(#[from] Error),
}

impl StepFailure {
    /// Failures that a smaller step may cure.
    pub fn is_rejection(&self) -> bool {
        matches!(
            self,
            StepFailure::NotConverged { .. } | StepFailure::Singular | StepFailure::PositivityViolation { .. }
        )
    }
}

/// Index of the first outer node (two per side) above the support threshold.
fn boundary_contact(u: &[f64], theta_rel: f64) -> Option<usize> {
    let n = u.len();
    let cut = theta_rel * u.iter().copied().fold(0.0, f64::max);
    [0, 1, n - 2, n - 1].into_iter().find(|&i| u[i] > cut)
}

/// Nodes whose old height and both neighbours lie below the floor. Their
/// faces are closed.
fn frozen_mask(u_old: &[f64], floor: f64) -> Option<Vec<bool>> {
    if floor <= 0.0 {
        return None;
    }
    let n = u_old.len();
    Some(
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(n - 1);
                u_old[lo..=hi].iter().all(|v| *v < floor)
            })
            .collect(),
    )
}

struct System<'a> {
    u_old: &'a [f64],
    c: f64,
    inv_h3: f64,
    n: f64,
    mobility: Mobility,
    frozen: Option<Vec<bool>>,
}

const D3_STENCIL: [f64; 4] = [-1.0, 3.0, -3.0, 1.0];

impl System<'_> {
    fn face_open(&self, f: usize) -> bool {
        match &self.frozen {
            Some(m) => !(m[f] || m[f + 1]),
            None => true,
        }
    }

    /// Mobility, third difference and flux gradient over nodes `f-1..=f+2`
    /// at an interior face.
    fn flux(&self, u: &[f64], f: usize) -> (f64, f64, [f64; 4]) {
        let w = [u[f - 1], u[f], u[f + 1], u[f + 2]];
        let d3 = (w[3] - 3.0 * w[2] + 3.0 * w[1] - w[0]) * self.inv_h3;
        let dd3 = D3_STENCIL.map(|s| s * self.inv_h3);
        match self.mobility {
            Mobility::Upwind => {
                let (m, g) = mobility::upwind(w, self.n, d3);
                let mut dj = [0.0; 4];
                for j in 0..4 {
                    dj[j] = g[j] * d3 + m * dd3[j];
                }
                (m, d3, dj)
            }
            v => {
                let (m, da, db) = mobility::symmetric(w[1], w[2], self.n, v);
                (
                    m,
                    d3,
                    [m * dd3[0], da * d3 + m * dd3[1], db * d3 + m * dd3[2], m * dd3[3]],
                )
            }
        }
    }

    /// Defect `r`, and optionally a bound `rho` on its floating-point error.
    /// The third difference loses about `eps·u/h³` to cancellation, which
    /// for large `dt/h⁴` dominates any fixed tolerance.
    fn residual(&self, u: &[f64], r: &mut [f64], mut rho: Option<&mut [f64]>) {
        let len = u.len();
        for i in 0..len {
            r[i] = u[i] - self.u_old[i];
        }
        if let Some(rho) = rho.as_deref_mut() {
            for i in 0..len {
                rho[i] = u[i].abs() + self.u_old[i].abs();
            }
        }
        for f in 1..len - 2 {
            if !self.face_open(f) {
                continue;
            }
            let (m, d3, _) = self.flux(u, f);
            let cj = self.c * m * d3;
            r[f] += cj;
            r[f + 1] -= cj;
            if let Some(rho) = rho.as_deref_mut() {
                let a = self.c
                    * m.abs()
                    * (u[f + 2].abs() + 3.0 * u[f + 1].abs() + 3.0 * u[f].abs() + u[f - 1].abs())
                    * self.inv_h3;
                rho[f] += a;
                rho[f + 1] += a;
            }
        }
        if let Some(rho) = rho {
            rho.iter_mut().for_each(|v| *v *= ROUNDOFF_FACTOR * f64::EPSILON);
        }
    }

    fn jacobian(&self, u: &[f64], jac: &mut BandMatrix) {
        let len = u.len();
        jac.clear();
        for i in 0..len {
            jac.add(i, i, 1.0);
        }
        for f in 1..len - 2 {
            if !self.face_open(f) {
                continue;
            }
            let (_, _, dj) = self.flux(u, f);
            for (k, d) in dj.iter().enumerate() {
                let col = f - 1 + k;
                jac.add(f, col, self.c * d);
                jac.add(f + 1, col, -self.c * d);
            }
        }
    }
}

const ROUNDOFF_FACTOR: f64 = 8.0;

/// `max_i (|r_i| - rho_i)₊ / scale`.
fn scaled_excess(r: &[f64], rho: &[f64], scale: f64) -> f64 {
    r.iter()
        .zip(rho)
        .fold(0.0f64, |m, (v, e)| m.max(v.abs() - e))
        / scale
}

fn check_step_input(p: &Profile, dt: f64, cfg: &SolverConfig) -> std::result::Result<(), StepFailure> {
    cfg.validate()?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg("dt", format!("{dt} must be positive")).into());
    }
    if let Some(node) = boundary_contact(p.values(), cfg.support_threshold_rel) {
        return Err(StepFailure::DomainExhausted { node });
    }
    Ok(())
}

/// Implicit Euler defect of `p_new` relative to `p_old`.
pub fn residual(p_new: &Profile, p_old: &Profile, dt: f64, cfg: &SolverConfig) -> Result<Vec<f64>> {
    if p_new.grid() != p_old.grid() {
        return Err(Error::GridMismatch("p_new and p_old live on different grids".into()));
    }
    cfg.validate()?;
    let h = p_old.grid().h();
    let sys = System {
        u_old: p_old.values(),
        c: dt / h,
        inv_h3: 1.0 / (h * h * h),
        n: cfg.n,
        mobility: cfg.mobility,
        frozen: frozen_mask(p_old.values(), cfg.positivity_floor),
    };
    let mut r = vec![0.0; p_new.values().len()];
    sys.residual(p_new.values(), &mut r, None);
    Ok(r)
}

/// Extra Newton iterations allowed to push small negative values down to
/// round-off once the tolerance is met.
const POLISH_ITERS: usize = 4;

/// One implicit Euler step of size `dt`.
pub fn step(p: &Profile, dt: f64, cfg: &SolverConfig) -> std::result::Result<(Profile, StepStats), StepFailure> {
    check_step_input(p, dt, cfg)?;
    let u_old = p.values();
    let len = u_old.len();
    let h = p.grid().h();
    let sys = System {
        u_old,
        c: dt / h,
        inv_h3: 1.0 / (h * h * h),
        n: cfg.n,
        mobility: cfg.mobility,
        frozen: frozen_mask(u_old, cfg.positivity_floor),
    };
    let scale = p.max().max(f64::MIN_POSITIVE);
    let neg_bound = 10.0 * f64::EPSILON * p.max();

    let mut u = u_old.to_vec();
    let mut r = vec![0.0; len];
    let mut rho = vec![0.0; len];
    let mut jac = BandMatrix::zeros(len, 2, 2);
    sys.residual(&u, &mut r, Some(&mut rho));
    let mut res = scaled_excess(&r, &rho, scale);
    let mut iters = 0;
    let mut polish = 0;
    loop {
        if res <= cfg.newton_tol {
            let min = u.iter().copied().fold(f64::INFINITY, f64::min);
            if min >= -neg_bound || polish >= POLISH_ITERS {
                break;
            }
            polish += 1;
        } else if iters >= cfg.newton_max_iter {
            return Err(StepFailure::NotConverged { iters, residual: res });
        }
        sys.jacobian(&u, &mut jac);
        let lu = jac.clone().factor().ok_or(StepFailure::Singular)?;
        lu.solve(&mut r);
        for (ui, di) in u.iter_mut().zip(&r) {
            *ui -= di;
        }
        iters += 1;
        sys.residual(&u, &mut r, Some(&mut rho));
        res = scaled_excess(&r, &rho, scale);
        if !res.is_finite() {
            return Err(StepFailure::NotConverged { iters, residual: res });
        }
    }
    let min = u.iter().copied().fold(f64::INFINITY, f64::min);
    // the bound is taken relative to the new maximum as well, which can only be larger
    let new_max = u.iter().copied().fold(0.0, f64::max);
    if min < -10.0 * f64::EPSILON * new_max.max(p.max()) {
        return Err(StepFailure::PositivityViolation { min });
    }
    for v in u.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    if let Some(node) = boundary_contact(&u, cfg.support_threshold_rel) {
        return Err(StepFailure::DomainExhausted { node });
    }
    Ok((
        Profile::from_raw(*p.grid(), u),
        StepStats {
            dt_used: dt,
            newton_iters: iters.max(1),
            residual_final: res,
            dt_rejections: 0,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunFailureKind {
    InvalidInput,
    DtUnderflow,
    DomainExhausted,
}

/// A failed run, carrying every record written before the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("run failed at t = {t}: {reason}")]
pub struct RunFailure {
    pub kind: RunFailureKind,
    pub t: f64,
    pub reason: String,
    pub series: Box<TimeSeries>,
}

/// Adaptive time loop from `t = 0` to `t_end`.
///
/// Records are written at `t = 0`, at every multiple of `observe_every`
/// (the step size is cut to land on them exactly), and at the final time.
/// `observe_every = 0` records after every accepted step. The run stops
/// early, with a final record, once at least one observer is attached and
/// all observers report themselves finished.
pub fn run(
    u0: &Profile,
    cfg: &SolverConfig,
    t_end: f64,
    observe_every: f64,
    observers: &mut [&mut dyn Observer],
) -> std::result::Result<TimeSeries, RunFailure> {
    let mut series = TimeSeries::empty(cfg.n);
    let fail_invalid = |e: Error, series: TimeSeries| RunFailure {
        kind: RunFailureKind::InvalidInput,
        t: 0.0,
        reason: e.to_string(),
        series: Box::new(series),
    };
    if let Err(e) = cfg.validate() {
        return Err(fail_invalid(e, series));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(fail_invalid(Error::arg("t_end", format!("{t_end} must be >= 0")), series));
    }
    if !(observe_every >= 0.0) || !observe_every.is_finite() {
        return Err(fail_invalid(
            Error::arg("observe_every", format!("{observe_every} must be >= 0")),
            series,
        ));
    }

    let theta = cfg.support_threshold_rel;
    let push = |series: &mut TimeSeries, observers: &mut [&mut dyn Observer], t: f64, p: &Profile| {
        let mut rec = Record::new(t, p.clone(), theta);
        for o in observers.iter_mut() {
            o.on_record(t, p, &mut rec.extra);
        }
        series.records.push(rec);
    };

    let mut u = u0.clone();
    push(&mut series, observers, 0.0, &u);
    if t_end == 0.0 {
        return Ok(series);
    }
    if let Some(node) = boundary_contact(u.values(), theta) {
        return Err(RunFailure {
            kind: RunFailureKind::DomainExhausted,
            t: 0.0,
            reason: StepFailure::DomainExhausted { node }.to_string(),
            series: Box::new(series),
        });
    }

    let m0 = mass(&u);
    let mut energy = dirichlet_energy(&u);
    let mut t = 0.0;
    let mut dt = cfg.dt_init;
    let mut k_obs: u64 = 1;
    let mut rejections = 0;
    let snap = 1e-12 * t_end;
    loop {
        let next_obs = if observe_every > 0.0 {
            (k_obs as f64 * observe_every).min(t_end)
        } else {
            t_end
        };
        let target = next_obs;
        let gap = target - t;
        let limited = dt.min(cfg.dt_max);
        let landing = limited >= gap - snap;
        let dt_try = if landing { gap } else { limited };
        match step(&u, dt_try, cfg) {
            Ok((next, mut stats)) => {
                stats.dt_rejections = rejections;
                rejections = 0;
                t = if landing { target } else { t + dt_try };
                let e_new = dirichlet_energy(&next);
                let tol = 10.0 * cfg.newton_tol * dt_try;
                if e_new - energy > tol {
                    series.energy_flags.push(EnergyFlag {
                        t,
                        dt: dt_try,
                        increase: e_new - energy,
                        tolerance: tol,
                    });
                }
                energy = e_new;
                let m = mass(&next);
                if m0 > 0.0 {
                    series.max_mass_drift = series.max_mass_drift.max((m - m0).abs() / m0);
                }
                series.accepted_steps += 1;
                series.newton_iters_total += stats.newton_iters;
                u = next;
                for o in observers.iter_mut() {
                    o.on_step(t, &u, &stats);
                }
                let at_end = landing && target >= t_end;
                let finished = !observers.is_empty() && observers.iter().all(|o| o.finished());
                let on_cadence = observe_every == 0.0 || landing;
                if on_cadence || at_end || finished {
                    push(&mut series, observers, t, &u);
                }
                if landing && observe_every > 0.0 {
                    k_obs += 1;
                }
                if at_end {
                    break;
                }
                if finished {
                    series.stopped_early = true;
                    break;
                }
                if stats.newton_iters <= cfg.easy_iters && !(landing && dt_try < limited) {
                    dt = (dt * cfg.dt_grow).min(cfg.dt_max);
                }
            }
            Err(f) if f.is_rejection() => {
                series.rejected_steps += 1;
                rejections += 1;
                dt = dt_try * cfg.dt_shrink;
                if dt < cfg.dt_min {
                    return Err(RunFailure {
                        kind: RunFailureKind::DtUnderflow,
                        t,
                        reason: format!("step size fell below dt_min after: {f}"),
                        series: Box::new(series),
                    });
                }
            }
            Err(StepFailure::DomainExhausted { node }) => {
                return Err(RunFailure {
                    kind: RunFailureKind::DomainExhausted,
                    t,
                    reason: StepFailure::DomainExhausted { node }.to_string(),
                    series: Box::new(series),
                });
            }
            Err(f) => {
                return Err(RunFailure {
                    kind: RunFailureKind::InvalidInput,
                    t,
                    reason: f.to_string(),
                    series: Box::new(series),
                });
            }
        }
    }
    Ok(series)
}
