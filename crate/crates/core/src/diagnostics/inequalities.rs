use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate_cellwise, integrate_mapped, integrate_nodal, Grid1D, Profile};
use crate::solver::mobility::upwind;
use crate::solver::TimeSeries;

/// Smooth nonnegative spatial weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cutoff {
    /// `φ ≡ 1`.
    Unit,
    /// Equal to one on `|x - center| <= inner`, zero beyond `outer`, joined
    /// by a quintic smoothstep (so `φ` is C²).
    Plateau { center: f64, inner: f64, outer: f64 },
}

impl Cutoff {
    fn validate(&self) -> Result<()> {
        if let Cutoff::Plateau { center, inner, outer } = *self {
            if !center.is_finite() || !(inner >= 0.0) || !(outer > inner) || !outer.is_finite() {
                return Err(Error::arg(
                    "cutoff",
                    format!("need 0 <= inner < outer, got inner = {inner}, outer = {outer}"),
                ));
            }
        }
        Ok(())
    }

    /// `(φ, φ', φ'')` at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            Cutoff::Unit => (1.0, 0.0, 0.0),
            Cutoff::Plateau { center, inner, outer } => {
                let d = (x - center).abs();
                if d <= inner {
                    return (1.0, 0.0, 0.0);
                }
                if d >= outer {
                    return (0.0, 0.0, 0.0);
                }
                let w = outer - inner;
                let s = (d - inner) / w;
                let sg = (x - center).signum();
                let f = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
                let f1 = 30.0 * s * s * (1.0 - s) * (1.0 - s);
                let f2 = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
                (1.0 - f, -sg * f1 / w, -f2 / (w * w))
            }
        }
    }

    /// Closed interval outside which `φ = 0`, if bounded.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            Cutoff::Unit => None,
            Cutoff::Plateau { center, outer, .. } => Some((center - outer, center + outer)),
        }
    }
}

fn check_exponent(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0) || v.is_nan() {
        return Err(Error::arg(name, format!("{v} must be positive")));
    }
    Ok(())
}

/// Interpolation exponent `ϑ = (1/q - 1/p) / (1/q + k/d - 1/r)`.
///
/// Evaluated in cleared-denominator form so that rational inputs give the
/// correctly rounded quotient. `p` and `r` may be infinite.
pub fn gns_theta(d: u32, k: u32, q: f64, p: f64, r: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::arg("d", "dimension must be positive"));
    }
    if !(k == 1 || k == 2) {
        return Err(Error::arg("k", format!("derivative order {k} is not 1 or 2")));
    }
    check_exponent("q", q)?;
    check_exponent("p", p)?;
    if !q.is_finite() || !(q < p) {
        return Err(Error::arg("p", format!("need 0 < q < p, got q = {q}, p = {p}")));
    }
    if !(r >= 1.0) {
        return Err(Error::arg("r", format!("need r >= 1, got {r}")));
    }
    let (d, k) = (d as f64, k as f64);
    // ϑ = (p - q) d r / (p (d r + k q r - d q)), with the limits p, r → ∞
    let theta = match (p.is_finite(), r.is_finite()) {
        (true, true) => (p - q) * d * r / (p * (d * r + k * q * r - d * q)),
        (true, false) => (p - q) * d / (p * (d + k * q)),
        (false, true) => d * r / (d * r + k * q * r - d * q),
        (false, false) => d / (d + k * q),
    };
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::arg("p", format!("exponents give theta = {theta} outside (0, 1]")));
    }
    Ok(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnsReport {
    pub theta: f64,
    /// `‖v‖_p`.
    pub lhs: f64,
    /// `‖D^k v‖_r^ϑ ‖v‖_q^{1-ϑ}` and `‖v‖_q`.
    pub rhs_terms: [f64; 2],
    /// Right-hand side with both constants set to one.
    pub rhs: f64,
    pub ratio: f64,
}

fn lp_norm(p: &Profile, a: f64, b: f64, s: f64) -> f64 {
    if s.is_infinite() {
        let g = p.grid();
        let v = p.values();
        let mut m = p.interpolate(a).max(p.interpolate(b));
        for (i, u) in v.iter().enumerate() {
            if g.x(i) >= a && g.x(i) <= b {
                m = m.max(*u);
            }
        }
        m
    } else {
        integrate_mapped(p, a, b, |u| u.powf(s)).powf(1.0 / s)
    }
}

fn derivative_norm(p: &Profile, k: u32, a: f64, b: f64, r: f64) -> f64 {
    let g = p.grid();
    if k == 1 {
        let slopes = p.face_slopes();
        if r.is_infinite() {
            let (j0, j1) = (g.cell_of(a), g.cell_of(b));
            return slopes[j0..=j1].iter().fold(0.0, |m, s| m.max(s.abs()));
        }
        let cells: Vec<f64> = slopes.iter().map(|s| s.abs().powf(r)).collect();
        return integrate_cellwise(g, &cells, a, b).powf(1.0 / r);
    }
    let v = p.values();
    let m = v.len();
    let h2 = g.h() * g.h();
    let mut dd = vec![0.0; m];
    for i in 1..m - 1 {
        dd[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2;
    }
    dd[0] = dd[1];
    dd[m - 1] = dd[m - 2];
    if r.is_infinite() {
        let (j0, j1) = (g.cell_of(a), g.cell_of(b));
        return dd[j0..=j1 + 1].iter().fold(0.0, |acc, s| acc.max(s.abs()));
    }
    integrate_nodal(g, &dd, a, b, |s| s.abs().powf(r)).powf(1.0 / r)
}

/// Both sides of `‖v‖_p ≤ C₁‖D^k v‖_r^ϑ‖v‖_q^{1-ϑ} + C₂‖v‖_q` on `window`
/// with `C₁ = C₂ = 1`.
pub fn gns_check(p: &Profile, k: u32, p_exp: f64, q_exp: f64, r_exp: f64, window: (f64, f64)) -> Result<GnsReport> {
    let theta = gns_theta(1, k, q_exp, p_exp, r_exp)?;
    let g = p.grid();
    let (a, b) = window;
    if !(a < b) || !g.contains(a) || !g.contains(b) {
        return Err(Error::OutOfDomain(format!(
            "window [{a}, {b}] is not inside [{}, {}]",
            g.x_min(),
            g.x_max()
        )));
    }
    let (a, b) = (a.max(g.x_min()), b.min(g.x_max()));
    let lhs = lp_norm(p, a, b, p_exp);
    let vq = lp_norm(p, a, b, q_exp);
    let dk = derivative_norm(p, k, a, b, r_exp);
    let t1 = dk.powf(theta) * vq.powf(1.0 - theta);
    let rhs = t1 + vq;
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(GnsReport {
        theta,
        lhs,
        rhs_terms: [t1, vq],
        rhs,
        ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernisGruenReport {
    /// `∫φ⁶u^{n-4}|u_x|⁶` and `∫φ⁶u^{n-2}|u_xx|²|u_x|²`.
    pub lhs_terms: [f64; 2],
    /// `∫φ⁶uⁿ|u_xxx|²` and `∫_{φ>0} u^{n+2}|φ_x|⁶`.
    pub rhs_terms: [f64; 2],
    pub ratio: f64,
}

/// Lower end of the admissible mobility range in one dimension.
pub fn bernis_gruen_n_min() -> f64 {
    2.0 - (8.0f64 / 9.0).sqrt()
}

/// Evaluates the four integrals of the weighted interpolation inequality
/// with centered node differences and the trapezoid rule.
pub fn bernis_gruen_check(p: &Profile, cutoff: &Cutoff, n: f64) -> Result<BernisGruenReport> {
    if !(n > bernis_gruen_n_min() && n < 3.0) {
        return Err(Error::UnsupportedRange(format!(
            "n = {n} is outside ({:.6}, 3)",
            bernis_gruen_n_min()
        )));
    }
    cutoff.validate()?;
    let g = p.grid();
    let v = p.values();
    let m = v.len();
    let (lo, hi) = (g.x(2), g.x(m - 3));
    if let Some((a, b)) = cutoff.support() {
        if a < lo - 1e-9 * g.h() || b > hi + 1e-9 * g.h() {
            return Err(Error::OutOfDomain(format!(
                "cutoff support [{a}, {b}] must lie within [{lo}, {hi}]"
            )));
        }
    }
    let h = g.h();
    let mut terms = [0.0f64; 4];
    for i in 2..=m - 3 {
        let (phi, dphi, _) = cutoff.eval(g.x(i));
        if phi <= 0.0 {
            continue;
        }
        if let Some(j) = (i - 2..=i + 2).find(|&j| !(v[j] > 0.0)) {
            return Err(Error::HypothesisViolated(format!(
                "u = {} at x = {} inside the cutoff support",
                v[j],
                g.x(j)
            )));
        }
        let w = if (i == 2 || i == m - 3) && cutoff.support().is_none() {
            0.5 * h
        } else {
            h
        };
        let u = v[i];
        let ux = (v[i + 1] - v[i - 1]) / (2.0 * h);
        let uxx = (v[i + 1] - 2.0 * u + v[i - 1]) / (h * h);
        let uxxx = (v[i + 2] - 2.0 * v[i + 1] + 2.0 * v[i - 1] - v[i - 2]) / (2.0 * h * h * h);
        let phi6 = phi.powi(6);
        terms[0] += w * phi6 * u.powf(n - 4.0) * ux.powi(6);
        terms[1] += w * phi6 * u.powf(n - 2.0) * uxx * uxx * ux * ux;
        terms[2] += w * phi6 * u.powf(n) * uxxx * uxxx;
        terms[3] += w * u.powf(n + 2.0) * dphi.abs().powi(6);
    }
    let lhs = terms[0] + terms[1];
    let rhs = terms[2] + terms[3];
    let ratio = if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    };
    Ok(BernisGruenReport {
        lhs_terms: [terms[0], terms[1]],
        rhs_terms: [terms[2], terms[3]],
        ratio,
    })
}

/// Seeded family of smooth, strictly positive profiles on `grid`: a
/// parabola lifted by a random floor plus three random Fourier modes whose
/// total amplitude stays below the floor. The shape only depends on `x`, so
/// the same seed on a refined grid samples the same functions.
pub fn positive_corpus(grid: Grid1D, count: usize, seed: u64) -> Vec<Profile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (grid.x_min(), grid.x_max());
    let (c, half) = (0.5 * (a + b), 0.5 * (b - a));
    (0..count)
        .map(|_| {
            let height = rng.random_range(0.5..1.5);
            let floor = rng.random_range(0.05..0.3);
            let modes: Vec<(f64, f64)> = (1..=3)
                .map(|_| {
                    (
                        rng.random_range(-0.3..0.3) * floor,
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            let values = grid
                .nodes()
                .map(|x| {
                    let s = (x - c) / half;
                    let wave: f64 = modes
                        .iter()
                        .enumerate()
                        .map(|(m, (amp, ph))| amp * ((m + 1) as f64 * std::f64::consts::PI * s + ph).sin())
                        .sum();
                    floor + height * (1.0 - s * s) + wave
                })
                .collect();
            Profile::from_raw(grid, values)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalResidual {
    pub t0: f64,
    pub t1: f64,
    /// `[∫½u_x²ψ]` over the interval minus `∫∫½u_x²ψ_t`.
    pub energy_change: f64,
    /// `∫∫uⁿ|u_xxx|²ψ`.
    pub dissipation: f64,
    /// `∫∫uⁿu_xxx(2u_xxψ_x + u_xψ_xx)`.
    pub commutator: f64,
    /// `energy_change + dissipation + commutator`; zero for exact solutions.
    pub residual: f64,
    /// Estimated time-quadrature error of the interval.
    pub tolerance: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalanceReport {
    pub n: f64,
    pub beta: f64,
    pub cutoff: Cutoff,
    pub intervals: Vec<IntervalResidual>,
}

impl EnergyBalanceReport {
    pub fn fraction_satisfied(&self) -> f64 {
        if self.intervals.is_empty() {
            return 1.0;
        }
        self.intervals.iter().filter(|r| r.satisfied).count() as f64 / self.intervals.len() as f64
    }

    /// CSV, one row per interval.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t0,t1,energy_change,dissipation,commutator,residual,tolerance,satisfied")?;
        for r in &self.intervals {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.t0,
                r.t1,
                r.energy_change,
                r.dissipation,
                r.commutator,
                r.residual,
                r.tolerance,
                u8::from(r.satisfied)
            )?;
        }
        Ok(())
    }
}

/// Spatial integrals at one instant: weighted energy, dissipation,
/// commutator.
fn balance_terms(p: &Profile, cutoff: &Cutoff, n: f64) -> (f64, f64, f64) {
    let g = p.grid();
    let v = p.values();
    let h = g.h();
    let inv_h3 = 1.0 / (h * h * h);
    let m = v.len();
    let (mut energy, mut diss, mut comm) = (0.0, 0.0, 0.0);
    for f in 0..m - 1 {
        let (phi, dphi, ddphi) = cutoff.eval(g.x(f) + 0.5 * h);
        let s = (v[f + 1] - v[f]) / h;
        energy += 0.5 * h * s * s * phi;
        if f == 0 || f + 2 >= m {
            continue;
        }
        let w = [v[f - 1], v[f], v[f + 1], v[f + 2]];
        let d3 = (w[3] - 3.0 * w[2] + 3.0 * w[1] - w[0]) * inv_h3;
        let (mob, _) = upwind(w, n, d3);
        if mob == 0.0 {
            continue;
        }
        let uxx = (w[3] - w[2] - w[1] + w[0]) / (2.0 * h * h);
        diss += h * mob * d3 * d3 * phi;
        comm += h * mob * d3 * (2.0 * uxx * dphi + s * ddphi);
    }
    (energy, diss, comm)
}

/// `∫_{t0}^{t1} t^β g(t) dt` for `g` linear between `g0` and `g1`.
fn weighted_linear(t0: f64, t1: f64, beta: f64, g0: f64, g1: f64) -> f64 {
    let dt = t1 - t0;
    if beta == 0.0 {
        return 0.5 * dt * (g0 + g1);
    }
    let i0 = (t1.powf(beta + 1.0) - t0.powf(beta + 1.0)) / (beta + 1.0);
    let i1 = (t1.powf(beta + 2.0) - t0.powf(beta + 2.0)) / (beta + 2.0) - t0 * i0;
    g0 * i0 + (g1 - g0) * i1 / dt
}

/// Checks the weighted energy identity with `ψ(x, t) = t^β φ(x)` on every
/// pair of consecutive records.
///
/// Face mobilities are the solver's upwind ones, so for `φ ≡ 1`, `β = 0` and
/// a run recorded at every step the discrete balance closes up to the
/// scheme's own numerical dissipation, which has the favourable sign. Time
/// integrals interpolate each spatial integral linearly between records; the
/// tolerance of an interval is the gap between that rule and the one-sided
/// rule evaluated at its right end.
pub fn energy_balance_monitor(series: &TimeSeries, cutoff: &Cutoff, beta: f64, n: f64) -> Result<EnergyBalanceReport> {
    cutoff.validate()?;
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::arg("beta", format!("{beta} must be finite and >= 0")));
    }
    if !(n > 0.0 && n < 3.0) {
        return Err(Error::UnsupportedRange(format!("n = {n} is outside (0, 3)")));
    }
    if series.records.len() < 2 {
        return Err(Error::InsufficientResolution(format!(
            "{} record(s); at least two are needed",
            series.records.len()
        )));
    }
    let terms: Vec<(f64, (f64, f64, f64))> = series
        .records
        .iter()
        .map(|r| (r.t, balance_terms(&r.profile, cutoff, n)))
        .collect();
    let intervals = terms
        .windows(2)
        .map(|w| {
            let (t0, (a0, d0, c0)) = w[0];
            let (t1, (a1, d1, c1)) = w[1];
            let dt = t1 - t0;
            let mut energy_change = t1.powf(beta) * a1 - t0.powf(beta) * a0;
            let mut tol = 0.0;
            if beta > 0.0 {
                // ∫ β t^{β-1} A(t) dt with A linear
                let i0 = t1.powf(beta) - t0.powf(beta);
                let i1 = beta / (beta + 1.0) * (t1.powf(beta + 1.0) - t0.powf(beta + 1.0)) - t0 * i0;
                let weighted = a0 * i0 + (a1 - a0) * i1 / dt;
                energy_change -= weighted;
                tol += (weighted - a1 * i0).abs();
            }
            let dissipation = weighted_linear(t0, t1, beta, d0, d1);
            let commutator = weighted_linear(t0, t1, beta, c0, c1);
            let g_lin = dissipation + commutator;
            let g_right = weighted_linear(t0, t1, beta, d1 + c1, d1 + c1);
            tol += (g_lin - g_right).abs();
            tol += 1e-12 * (t1.powf(beta) * a1.abs() + t0.powf(beta) * a0.abs());
            let residual = energy_change + dissipation + commutator;
            IntervalResidual {
                t0,
                t1,
                energy_change,
                dissipation,
                commutator,
                residual,
                tolerance: tol,
                satisfied: residual <= tol,
            }
        })
        .collect();
    Ok(EnergyBalanceReport {
        n,
        beta,
        cutoff: *cutoff,
        intervals,
    })
}
