//! Face mobilities.
//!
//! The symmetric variants are functions of the two adjacent heights. The
//! upwind variant reconstructs one-sided face states with a van Leer
//! limiter and picks the side the flux comes from, so it needs the four
//! nodes around the face and the sign of the third difference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Mobility {
    #[default]
    Upwind,
    EntropyConsistent,
    ArithmeticMean,
    Regularized {
        eps: f64,
    },
}

impl Mobility {
    pub fn label(&self) -> String {
        match self {
            Mobility::Upwind => "upwind".into(),
            Mobility::EntropyConsistent => "entropy_consistent".into(),
            Mobility::ArithmeticMean => "arithmetic_mean".into(),
            Mobility::Regularized { eps } => format!("regularized({eps})"),
        }
    }
}

/// `m(s) = (s₊)ⁿ` and its derivative (taken as 0 at `s <= 0`).
#[inline]
pub(crate) fn power(s: f64, n: f64) -> (f64, f64) {
    if s > 0.0 {
        let p = s.powf(n - 1.0);
        (p * s, n * p)
    } else {
        (0.0, 0.0)
    }
}

/// `M(a, b)` and `(∂M/∂a, ∂M/∂b)` for the symmetric variants.
pub(crate) fn symmetric(a: f64, b: f64, n: f64, variant: Mobility) -> (f64, f64, f64) {
    match variant {
        Mobility::ArithmeticMean => {
            let (ma, da) = power(a, n);
            let (mb, db) = power(b, n);
            (0.5 * (ma + mb), 0.5 * da, 0.5 * db)
        }
        Mobility::Regularized { eps } => {
            let (ma, da) = power(a.max(0.0) + eps, n);
            let (mb, db) = power(b.max(0.0) + eps, n);
            let da = if a > 0.0 { da } else { 0.0 };
            let db = if b > 0.0 { db } else { 0.0 };
            (0.5 * (ma + mb), 0.5 * da, 0.5 * db)
        }
        Mobility::EntropyConsistent => entropy_mean(a, b, n),
        Mobility::Upwind => unreachable!("upwind mobility is not a two-point mean"),
    }
}

/// `(a - b) / (G'(a) - G'(b))` with `G'' = s^{-n}`.
fn entropy_mean(a: f64, b: f64, n: f64) -> (f64, f64, f64) {
    if a <= 0.0 || b <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let hi = a.max(b);
    if (a - b).abs() <= 1e-6 * hi {
        let (m, d) = power(0.5 * (a + b), n);
        return (m, 0.5 * d, 0.5 * d);
    }
    let m = if (n - 1.0).abs() < 1e-12 {
        (a - b) / (a.ln() - b.ln())
    } else {
        (1.0 - n) * (a - b) / (a.powf(1.0 - n) - b.powf(1.0 - n))
    };
    let q = m / (a - b);
    let da = (1.0 - m * a.powf(-n)) * q;
    let db = (m * b.powf(-n) - 1.0) * q;
    (m, da, db)
}

/// Public two-point face mobility for the symmetric variants.
pub fn face_mobility(a: f64, b: f64, n: f64, variant: Mobility) -> Result<f64> {
    if !(a >= 0.0) || !(b >= 0.0) {
        return Err(Error::InvalidProfile(format!("negative heights ({a}, {b})")));
    }
    if !(n > 0.0 && n < 3.0) {
        return Err(Error::arg("n", format!("{n} is outside (0, 3)")));
    }
    match variant {
        Mobility::Upwind => Err(Error::arg(
            "variant",
            "upwind mobility depends on the flux direction; use upwind_mobility",
        )),
        Mobility::Regularized { eps } if !(eps >= 0.0) => {
            Err(Error::arg("eps", format!("{eps} must be >= 0")))
        }
        v => Ok(symmetric(a, b, n, v).0),
    }
}

/// van Leer limiter `2ab/(a+b)` for `ab > 0`, else 0, with partials.
#[inline]
fn van_leer(a: f64, b: f64) -> (f64, f64, f64) {
    if a * b > 0.0 {
        let s = a + b;
        (2.0 * a * b / s, 2.0 * b * b / (s * s), 2.0 * a * a / (s * s))
    } else {
        (0.0, 0.0, 0.0)
    }
}

/// Limited face states `s_L`, `s_R` at the face between `w[1]` and `w[2]`,
/// given the four nodes `w = [u_{f-1}, u_f, u_{f+1}, u_{f+2}]`.
pub fn face_states(w: [f64; 4]) -> (f64, f64) {
    let (pl, _, _) = van_leer(w[1] - w[0], w[2] - w[1]);
    let (pr, _, _) = van_leer(w[2] - w[1], w[3] - w[2]);
    (w[1] + 0.5 * pl, w[2] - 0.5 * pr)
}

/// Upwind mobility and its gradient with respect to the four stencil nodes.
/// `d3 > 0` means mass moves to the right, so the left state is used.
pub(crate) fn upwind(w: [f64; 4], n: f64, d3: f64) -> (f64, [f64; 4]) {
    if d3 >= 0.0 {
        let (p, pa, pb) = van_leer(w[1] - w[0], w[2] - w[1]);
        let s = w[1] + 0.5 * p;
        let (m, dm) = power(s, n);
        let ds = [-0.5 * pa, 1.0 + 0.5 * (pa - pb), 0.5 * pb, 0.0];
        (m, ds.map(|d| d * dm))
    } else {
        let (p, pa, pb) = van_leer(w[2] - w[1], w[3] - w[2]);
        let s = w[2] - 0.5 * p;
        let (m, dm) = power(s, n);
        let ds = [0.0, 0.5 * pa, 1.0 - 0.5 * (pa - pb), -0.5 * pb];
        (m, ds.map(|d| d * dm))
    }
}

/// Public wrapper of the upwind mobility.
pub fn upwind_mobility(w: [f64; 4], n: f64, d3: f64) -> Result<f64> {
    if w.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidProfile(format!("negative heights {w:?}")));
    }
    Ok(upwind(w, n, d3).0)
}
