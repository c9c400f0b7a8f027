//! Uniform 1D grids, nonnegative height profiles and the discrete calculus
//! shared by the solver and every diagnostic.
//!
//! Profiles store node values. Integrals are trapezoidal (equivalently, exact
//! integrals of the piecewise-linear interpolant), and first derivatives live
//! on cell faces: `(u[i+1] - u[i]) / h` is the difference centered at
//! `x[i] + h/2`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible node count.
pub const MIN_NODES: usize = 8;

/// Relative slack used when comparing radii and ball endpoints against the
/// grid, so that `r = 2h` or a ball ending exactly on `x_max` is accepted
/// despite rounding.
const GEOM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    x_min: f64,
    h: f64,
    n_nodes: usize,
}

impl Grid1D {
    /// Uniform grid with `n_nodes` nodes spanning `[x_min, x_max]`.
    pub fn new(x_min: f64, x_max: f64, n_nodes: usize) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "x_max ({x_max}) must exceed x_min ({x_min})"
            )));
        }
        if n_nodes < MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "n_nodes = {n_nodes} < {MIN_NODES}"
            )));
        }
        Ok(Grid1D {
            x_min,
            h: (x_max - x_min) / (n_nodes - 1) as f64,
            n_nodes,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n_nodes - 1)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes).map(move |i| self.x(i))
    }

    /// Index of the cell `[x_j, x_{j+1}]` containing `x`, clamped to the grid.
    pub(crate) fn cell_of(&self, x: f64) -> usize {
        let j = ((x - self.x_min) / self.h).floor();
        if j <= 0.0 {
            0
        } else {
            (j as usize).min(self.n_nodes - 2)
        }
    }

    fn slack(&self) -> f64 {
        GEOM_SLACK * self.h
    }

    pub(crate) fn contains(&self, x: f64) -> bool {
        x >= self.x_min - self.slack() && x <= self.x_max() + self.slack()
    }
}

/// Serializable grid description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_nodes: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid1D> {
        Grid1D::new(self.x_min, self.x_max, self.n_nodes)
    }
}

impl From<Grid1D> for GridSpec {
    fn from(g: Grid1D) -> Self {
        GridSpec {
            x_min: g.x_min(),
            x_max: g.x_max(),
            n_nodes: g.n_nodes(),
        }
    }
}

/// Nonnegative film height sampled at the nodes of a [`Grid1D`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    grid: Grid1D,
    values: Vec<f64>,
}

impl Profile {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::InvalidProfile(format!(
                "{} values for {} nodes",
                values.len(),
                grid.n_nodes()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidProfile(format!(
                "u[{i}] = {v} is negative or non-finite"
            )));
        }
        Ok(Profile { grid, values })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Profile {
            values: vec![0.0; grid.n_nodes()],
            grid,
        }
    }

    /// Samples `f` at the nodes. Negative samples are rejected.
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().map(f).collect();
        Profile::new(grid, values)
    }

    /// Crate-internal constructor for values already known to be valid.
    pub(crate) fn from_raw(grid: Grid1D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_nodes());
        Profile { grid, values }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Multiplies every height by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<Profile> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(Error::arg("factor", format!("{factor} must be finite and >= 0")));
        }
        Ok(Profile::from_raw(
            self.grid,
            self.values.iter().map(|v| v * factor).collect(),
        ))
    }

    /// True when the two outermost nodes on each side carry zero height.
    pub fn has_compact_support(&self) -> bool {
        let n = self.values.len();
        self.values[..2].iter().all(|v| *v == 0.0) && self.values[n - 2..].iter().all(|v| *v == 0.0)
    }

    /// Linear interpolation of the node values at `x` (inside the grid).
    pub fn interpolate(&self, x: f64) -> f64 {
        let j = self.grid.cell_of(x);
        let s = ((x - self.grid.x(j)) / self.grid.h).clamp(0.0, 1.0);
        self.values[j] * (1.0 - s) + self.values[j + 1] * s
    }

    /// Face difference `(u[i+1] - u[i]) / h` for every cell.
    pub fn face_slopes(&self) -> Vec<f64> {
        let h = self.grid.h;
        self.values.windows(2).map(|w| (w[1] - w[0]) / h).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,u")?;
        for (x, u) in self.grid.nodes().zip(&self.values) {
            writeln!(out, "{x:.16e},{u:.16e}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads the two-column `x,u` format written by [`Profile::write_csv`].
    /// Node positions must form a uniform grid.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty profile file".into()))??;
        if header.trim() != "x,u" {
            return Err(Error::Parse(format!("expected header `x,u`, found `{header}`")));
        }
        let mut xs = Vec::new();
        let mut us = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Parse(format!("line {}: missing column", lineno + 2)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
            };
            xs.push(parse(parts.next())?);
            us.push(parse(parts.next())?);
        }
        if xs.len() < MIN_NODES {
            return Err(Error::InvalidGrid(format!("only {} nodes", xs.len())));
        }
        let grid = Grid1D::new(xs[0], xs[xs.len() - 1], xs.len())?;
        for (i, x) in xs.iter().enumerate() {
            if (x - grid.x(i)).abs() > 1e-9 * grid.h().max(x.abs()) {
                return Err(Error::InvalidGrid(format!("node {i} at {x} is not uniform")));
            }
        }
        Profile::new(grid, us)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Profile::read_csv(std::io::BufReader::new(file))
    }
}

/// Trapezoidal quadrature of the profile over the whole grid.
pub fn mass(p: &Profile) -> f64 {
    let v = p.values();
    let n = v.len();
    let inner: f64 = v[1..n - 1].iter().sum();
    p.grid().h() * (inner + 0.5 * (v[0] + v[n - 1]))
}

/// Dirichlet energy `1/2 * int |u_x|^2` with face-centered differences.
///
/// This is the energy whose discrete gradient is the second difference used
/// by the solver stencil, so the implicit scheme dissipates it exactly.
pub fn dirichlet_energy(p: &Profile) -> f64 {
    let h = p.grid().h();
    0.5 * h * p.face_slopes().iter().map(|s| s * s).sum::<f64>()
}

/// Which neighbourhood of `x0` a radius refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallMode {
    /// `(x0 - r, x0 + r)`.
    #[default]
    Full,
    /// `(x0, x0 + r)`.
    OneSided,
}

impl BallMode {
    pub fn interval(self, x0: f64, r: f64) -> (f64, f64) {
        match self {
            BallMode::Full => (x0 - r, x0 + r),
            BallMode::OneSided => (x0, x0 + r),
        }
    }
}

pub(crate) fn check_ball(grid: &Grid1D, x0: f64, r: f64, mode: BallMode) -> Result<(f64, f64)> {
    if !x0.is_finite() || !r.is_finite() {
        return Err(Error::arg("r", "center and radius must be finite"));
    }
    if r < 2.0 * grid.h() * (1.0 - GEOM_SLACK) {
        return Err(Error::UnderResolved(format!(
            "radius {r} is below 2h = {}",
            2.0 * grid.h()
        )));
    }
    let (a, b) = mode.interval(x0, r);
    if !grid.contains(a) || !grid.contains(b) {
        return Err(Error::OutOfDomain(format!(
            "ball [{a}, {b}] exits grid [{}, {}]",
            grid.x_min(),
            grid.x_max()
        )));
    }
    Ok((a.max(grid.x_min()), b.min(grid.x_max())))
}

/// Integrates `f(u)` over `[a, b]` by the trapezoid rule on the grid cells,
/// splitting the two end cells at `a` and `b` (values there are linearly
/// interpolated before `f` is applied).
pub(crate) fn integrate_mapped(p: &Profile, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    integrate_nodal(p.grid(), p.values(), a, b, f)
}

/// [`integrate_mapped`] for an arbitrary array of node values.
pub(crate) fn integrate_nodal(g: &Grid1D, v: &[f64], a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (j0, j1) = (g.cell_of(a), g.cell_of(b));
    let mut total = 0.0;
    for j in j0..=j1 {
        let (xl, xr) = (g.x(j), g.x(j + 1));
        let lo = a.max(xl);
        let hi = b.min(xr);
        if hi <= lo {
            continue;
        }
        let lerp = |x: f64| {
            let s = ((x - xl) / g.h()).clamp(0.0, 1.0);
            v[j] * (1.0 - s) + v[j + 1] * s
        };
        let fl = if lo == xl { f(v[j]) } else { f(lerp(lo)) };
        let fr = if hi == xr { f(v[j + 1]) } else { f(lerp(hi)) };
        total += 0.5 * (hi - lo) * (fl + fr);
    }
    total
}

/// Integrates a cellwise-constant quantity (one value per cell) over `[a, b]`.
pub(crate) fn integrate_cellwise(grid: &Grid1D, cell_values: &[f64], a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (j0, j1) = (grid.cell_of(a), grid.cell_of(b));
    (j0..=j1)
        .map(|j| {
            let lo = a.max(grid.x(j));
            let hi = b.min(grid.x(j + 1));
            if hi > lo {
                (hi - lo) * cell_values[j]
            } else {
                0.0
            }
        })
        .sum()
}

/// Exact integral of the piecewise-linear interpolant over `[a, b]`.
pub fn integrate(p: &Profile, a: f64, b: f64) -> f64 {
    integrate_mapped(p, a, b, |u| u)
}

/// Mean of `u` over the ball of radius `r` around `x0`.
pub fn local_average(p: &Profile, x0: f64, r: f64) -> Result<f64> {
    local_average_in(p, x0, r, BallMode::Full)
}

pub fn local_average_in(p: &Profile, x0: f64, r: f64, mode: BallMode) -> Result<f64> {
    let (a, b) = check_ball(p.grid(), x0, r, mode)?;
    let len = match mode {
        BallMode::Full => 2.0 * r,
        BallMode::OneSided => r,
    };
    Ok(integrate(p, a, b) / len)
}
