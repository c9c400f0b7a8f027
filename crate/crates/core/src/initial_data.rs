//! Initial-data families and the growth criteria evaluated at a boundary
//! point `x0`.
//!
//! All generators vanish identically for `x <= x0` and are cut off at
//! `x0 + width` by a C² taper occupying the last 10% of the width, so that
//! the data stay in H¹ with compact support.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_ball, integrate, integrate_cellwise, integrate_mapped, BallMode, Grid1D, Profile};

/// Fraction of `width` occupied by the outer taper.
pub const TAPER_FRACTION: f64 = 0.1;

/// Quintic smoothstep; C² at both ends.
fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// 1 on `[0, 0.9 w]`, 0 beyond `w`, C² in between.
fn taper(offset: f64, width: f64) -> f64 {
    let start = (1.0 - TAPER_FRACTION) * width;
    if offset <= start {
        1.0
    } else if offset >= width {
        0.0
    } else {
        1.0 - smoothstep((offset - start) / (TAPER_FRACTION * width))
    }
}

/// The fixed bump used by [`concentrated`]: `64 s³ (1 - s)³` on `[0, 1]`.
///
/// C² with a triple zero at both ends and maximum 1 at `s = 1/2`.
pub fn bump(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        let q = s * (1.0 - s);
        64.0 * q * q * q
    }
}

/// `∫₀¹ bump = 64 · 3!·3!/7!`.
pub const BUMP_INTEGRAL: f64 = 64.0 * 36.0 / 5040.0;

fn check_support(grid: &Grid1D, x0: f64, width: f64) -> Result<()> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::arg("width", format!("{width} must be positive")));
    }
    // two zero nodes on each side are needed by the solver stencil
    let lo = grid.x(2);
    let hi = grid.x(grid.n_nodes() - 3);
    if x0 < lo || x0 + width > hi {
        return Err(Error::OutOfDomain(format!(
            "support [{x0}, {}] must lie in [{lo}, {hi}]",
            x0 + width
        )));
    }
    Ok(())
}

fn check_mobility_exponent(n: f64) -> Result<()> {
    if !(n > 0.0 && n < 3.0) {
        return Err(Error::arg("n", format!("{n} is outside (0, 3)")));
    }
    Ok(())
}

fn tapered(grid: Grid1D, x0: f64, width: f64, core: impl Fn(f64) -> f64) -> Profile {
    let values = grid
        .nodes()
        .map(|x| {
            let s = x - x0;
            if s <= 0.0 || s >= width {
                0.0
            } else {
                core(s) * taper(s, width)
            }
        })
        .collect();
    Profile::from_raw(grid, values)
}

/// `amplitude · (x - x0)₊^beta`, tapered.
pub fn power_law(grid: Grid1D, x0: f64, beta: f64, amplitude: f64, width: f64) -> Result<Profile> {
    if !(beta > 0.0) {
        return Err(Error::arg("beta", format!("{beta} must be positive")));
    }
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::arg("amplitude", format!("{amplitude} must be >= 0")));
    }
    check_support(&grid, x0, width)?;
    Ok(tapered(grid, x0, width, |s| amplitude * s.powf(beta)))
}

/// `(2 + sin(1/(x - x0))) · (x - x0)₊^{4/n}`, tapered.
pub fn oscillatory(grid: Grid1D, x0: f64, n: f64, width: f64) -> Result<Profile> {
    check_mobility_exponent(n)?;
    check_support(&grid, x0, width)?;
    let beta = 4.0 / n;
    Ok(tapered(grid, x0, width, |s| (2.0 + (1.0 / s).sin()) * s.powf(beta)))
}

/// Power law `(x - x0)₊^{4/n}` plus the bump train
/// `(x - x0)₊^{4/n - delta} · Σ_{k=2}^{k_max} k² φ(k² (x - x0 - 1/k))`, tapered.
pub fn concentrated(
    grid: Grid1D,
    x0: f64,
    n: f64,
    delta: f64,
    k_max: u32,
    width: f64,
) -> Result<Profile> {
    check_mobility_exponent(n)?;
    let beta = 4.0 / n;
    if !(delta >= 0.0 && delta < beta) {
        return Err(Error::arg("delta", format!("{delta} is outside [0, 4/n)")));
    }
    if k_max < 2 {
        return Err(Error::arg("k_max", "must be at least 2"));
    }
    let kk = f64::from(k_max) * f64::from(k_max);
    if kk * grid.h() > 0.5 {
        return Err(Error::UnderResolved(format!(
            "narrowest bump (width 1/{kk}) needs h <= {}, grid has h = {}",
            0.5 / kk,
            grid.h()
        )));
    }
    check_support(&grid, x0, width)?;
    Ok(tapered(grid, x0, width, |s| {
        let train: f64 = (2..=k_max)
            .map(|k| {
                let k2 = f64::from(k) * f64::from(k);
                k2 * bump(k2 * (s - 1.0 / f64::from(k)))
            })
            .sum();
        s.powf(beta) + s.powf(beta - delta) * train
    }))
}

/// A droplet `height · (1 - ((x - center)/radius)²)₊`.
pub fn parabola(grid: Grid1D, center: f64, radius: f64, height: f64) -> Result<Profile> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::arg("radius", format!("{radius} must be positive")));
    }
    if !(height >= 0.0) || !height.is_finite() {
        return Err(Error::arg("height", format!("{height} must be >= 0")));
    }
    if center - radius < grid.x(2) || center + radius > grid.x(grid.n_nodes() - 3) {
        return Err(Error::OutOfDomain(format!(
            "droplet [{}, {}] must leave two dry nodes on each side",
            center - radius,
            center + radius
        )));
    }
    Profile::from_fn(grid, |x| {
        let s = (x - center) / radius;
        height * (1.0 - s * s).max(0.0)
    })
}

/// Declarative description of an initial profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Zero {},
    PowerLaw {
        x0: f64,
        beta: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
    },
    Oscillatory {
        x0: f64,
        #[serde(default = "one")]
        width: f64,
    },
    Concentrated {
        x0: f64,
        delta: f64,
        k_max: u32,
        #[serde(default = "one")]
        width: f64,
    },
    Parabola {
        center: f64,
        radius: f64,
        #[serde(default = "one")]
        height: f64,
    },
    /// A `x,u` CSV on exactly the configured grid.
    File { path: std::path::PathBuf },
}

fn one() -> f64 {
    1.0
}

impl InitialData {
    /// Samples the data on `grid`; `n` is needed by the families whose
    /// growth is tied to `4/n`.
    pub fn build(&self, grid: Grid1D, n: f64) -> Result<Profile> {
        match self {
            InitialData::Zero {} => Ok(Profile::zeros(grid)),
            InitialData::PowerLaw {
                x0,
                beta,
                amplitude,
                width,
            } => power_law(grid, *x0, *beta, *amplitude, *width),
            InitialData::Oscillatory { x0, width } => oscillatory(grid, *x0, n, *width),
            InitialData::Concentrated { x0, delta, k_max, width } => concentrated(grid, *x0, n, *delta, *k_max, *width),
            InitialData::Parabola { center, radius, height } => parabola(grid, *center, *radius, *height),
            InitialData::File { path } => {
                let p = Profile::load_csv(path)?;
                let g = p.grid();
                let close = g.n_nodes() == grid.n_nodes()
                    && (g.x_min() - grid.x_min()).abs() <= 1e-9 * grid.h()
                    && (g.h() - grid.h()).abs() <= 1e-9 * grid.h();
                if !close {
                    return Err(Error::GridMismatch(format!(
                        "{} does not match the configured grid",
                        path.display()
                    )));
                }
                Profile::new(grid, p.into_values())
            }
        }
    }

    /// The distinguished boundary point of the family, if it has one.
    pub fn x0(&self) -> Option<f64> {
        match self {
            InitialData::PowerLaw { x0, .. }
            | InitialData::Oscillatory { x0, .. }
            | InitialData::Concentrated { x0, .. } => Some(*x0),
            InitialData::Parabola { center, radius, .. } => Some(center + radius),
            InitialData::Zero {} | InitialData::File { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "p")]
pub enum CriterionKind {
    Mass,
    Energy,
    Pnorm(f64),
}

impl CriterionKind {
    pub fn label(&self) -> String {
        match self {
            CriterionKind::Mass => "mass".into(),
            CriterionKind::Energy => "energy".into(),
            CriterionKind::Pnorm(p) => format!("pnorm({p})"),
        }
    }
}

/// Per-radius values of a growth criterion at `x0` and their resolved
/// supremum (maximum over the supplied radii).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub x0: f64,
    pub n: f64,
    pub kind: CriterionKind,
    pub ball: BallMode,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub supremum: f64,
    /// Radius at which the supremum is attained.
    pub argmax_r: f64,
    pub r_min: f64,
}

/// Dyadic radii `R / 2^k`, `k = 0, 1, ...`, down to (and including) the
/// last one that is at least `4h`.
pub fn dyadic_radii(r_max: f64, h: f64) -> Vec<f64> {
    let mut radii = Vec::new();
    let mut r = r_max;
    while r >= 4.0 * h * (1.0 - 1e-12) {
        radii.push(r);
        r *= 0.5;
    }
    radii
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::arg("radii", "at least one radius is required"));
    }
    if radii.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::arg("radii", "must be strictly decreasing"));
    }
    Ok(())
}

fn build_report(
    x0: f64,
    n: f64,
    kind: CriterionKind,
    ball: BallMode,
    radii: &[f64],
    values: Vec<f64>,
) -> CriterionReport {
    let (imax, supremum) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    CriterionReport {
        x0,
        n,
        kind,
        ball,
        radii: radii.to_vec(),
        supremum,
        argmax_r: radii[imax],
        r_min: *radii.last().unwrap(),
        values,
    }
}

fn ball_len(ball: BallMode, r: f64) -> f64 {
    match ball {
        BallMode::Full => 2.0 * r,
        BallMode::OneSided => r,
    }
}

/// `r^{-4/n} ⨍_{B_r(x0)} u` for each radius.
pub fn criterion_mass(p: &Profile, x0: f64, n: f64, radii: &[f64], ball: BallMode) -> Result<CriterionReport> {
    check_radii(radii)?;
    let values = radii
        .iter()
        .map(|&r| {
            let (a, b) = check_ball(p.grid(), x0, r, ball)?;
            Ok(r.powf(-4.0 / n) * integrate(p, a, b) / ball_len(ball, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(build_report(x0, n, CriterionKind::Mass, ball, radii, values))
}

/// `r^{-4/n + 1} (⨍_{B_r(x0)} |u_x|²)^{1/2}` for each radius.
pub fn criterion_energy(p: &Profile, x0: f64, n: f64, radii: &[f64], ball: BallMode) -> Result<CriterionReport> {
    check_radii(radii)?;
    let sq: Vec<f64> = p.face_slopes().iter().map(|s| s * s).collect();
    let values = radii
        .iter()
        .map(|&r| {
            let (a, b) = check_ball(p.grid(), x0, r, ball)?;
            let avg = integrate_cellwise(p.grid(), &sq, a, b) / ball_len(ball, r);
            Ok(r.powf(1.0 - 4.0 / n) * avg.sqrt())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(build_report(x0, n, CriterionKind::Energy, ball, radii, values))
}

/// `r^{-4/n} (⨍_{B_r(x0)} u^p)^{1/p}` for each radius, `0 < p < 1`.
pub fn criterion_pnorm(
    p: &Profile,
    x0: f64,
    n: f64,
    p_exp: f64,
    radii: &[f64],
    ball: BallMode,
) -> Result<CriterionReport> {
    if !(p_exp > 0.0 && p_exp < 1.0) {
        return Err(Error::arg("p_exp", format!("{p_exp} is outside (0, 1)")));
    }
    check_radii(radii)?;
    let values = radii
        .iter()
        .map(|&r| {
            let (a, b) = check_ball(p.grid(), x0, r, ball)?;
            let avg = integrate_mapped(p, a, b, |u| u.powf(p_exp)) / ball_len(ball, r);
            Ok(r.powf(-4.0 / n) * avg.powf(1.0 / p_exp))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(build_report(x0, n, CriterionKind::Pnorm(p_exp), ball, radii, values))
}

/// Waiting-time bounds `c·κ^{-n} <= T* <= C·κ^{-n}` implied by a criterion
/// supremum `κ`, with empirically calibrated constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub kappa: f64,
    pub n: f64,
    pub lower_t: f64,
    pub upper_t: f64,
    /// Set when `κ = 0`: no forward motion is implied at any time.
    pub no_forward_motion_implied: bool,
}

pub fn theorem_bounds(kappa: f64, n: f64, c_est: f64, big_c_est: f64) -> Result<BoundPair> {
    if !(n > 1.0 && n < 3.0) {
        return Err(Error::arg("n", format!("{n} is outside (1, 3)")));
    }
    if !(c_est >= 0.0) || !(big_c_est >= c_est) {
        return Err(Error::arg("c_est", format!("need 0 <= c_est ({c_est}) <= C_est ({big_c_est})")));
    }
    if !(kappa >= 0.0) || kappa.is_nan() {
        return Err(Error::arg("kappa", format!("{kappa} must be >= 0")));
    }
    if kappa == 0.0 {
        return Ok(BoundPair {
            kappa,
            n,
            lower_t: if c_est > 0.0 { f64::INFINITY } else { 0.0 },
            upper_t: f64::INFINITY,
            no_forward_motion_implied: true,
        });
    }
    let scale = kappa.powf(-n);
    Ok(BoundPair {
        kappa,
        n,
        lower_t: c_est * scale,
        upper_t: big_c_est * scale,
        no_forward_motion_implied: false,
    })
}

impl CriterionReport {
    /// `r,value` rows, largest radius first.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,value\n");
        for (r, v) in self.radii.iter().zip(&self.values) {
            s.push_str(&format!("{r:.16e},{v:.16e}\n"));
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "x0": self.x0,
            "kind": self.kind.label(),
            "supremum": self.supremum,
            "r_min": self.r_min,
            "argmax_r": self.argmax_r,
            "n": self.n,
            "ball": self.ball,
        })
    }
}
