use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::cell;
use crate::free_boundary::{support_unchecked, SupportInterval};
use crate::grid::{dirichlet_energy, mass, Profile};

use super::StepStats;

/// One recorded instant of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub profile: Profile,
    pub mass: f64,
    pub energy: f64,
    pub max_height: f64,
    pub support: SupportInterval,
    /// Columns contributed by observers.
    pub extra: BTreeMap<String, f64>,
}

impl Record {
    pub fn new(t: f64, profile: Profile, theta_rel: f64) -> Self {
        Record {
            t,
            mass: mass(&profile),
            energy: dirichlet_energy(&profile),
            max_height: profile.max(),
            support: support_unchecked(&profile, theta_rel),
            profile,
            extra: BTreeMap::new(),
        }
    }
}

/// An accepted step across which the discrete energy grew by more than
/// the allowed slack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyFlag {
    pub t: f64,
    pub dt: f64,
    pub increase: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub n: f64,
    pub records: Vec<Record>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub newton_iters_total: usize,
    pub energy_flags: Vec<EnergyFlag>,
    /// Largest relative mass change between any accepted step and `u0`.
    pub max_mass_drift: f64,
    /// Set when every observer reported itself finished before `t_end`.
    pub stopped_early: bool,
}

impl TimeSeries {
    pub(crate) fn empty(n: f64) -> Self {
        TimeSeries {
            n,
            records: Vec::new(),
            accepted_steps: 0,
            rejected_steps: 0,
            newton_iters_total: 0,
            energy_flags: Vec::new(),
            max_mass_drift: 0.0,
            stopped_early: false,
        }
    }

    /// Builds a series from given snapshots, e.g. for checking diagnostics
    /// on synthetic data. Times must be strictly increasing.
    pub fn from_profiles(n: f64, snapshots: Vec<(f64, Profile)>, theta_rel: f64) -> Result<Self> {
        if snapshots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::arg("snapshots", "times must be strictly increasing"));
        }
        if let Some((_, p0)) = snapshots.first() {
            if snapshots.iter().any(|(_, p)| p.grid() != p0.grid()) {
                return Err(Error::GridMismatch("snapshots live on different grids".into()));
            }
        }
        let mut s = TimeSeries::empty(n);
        s.records = snapshots
            .into_iter()
            .map(|(t, p)| Record::new(t, p, theta_rel))
            .collect();
        Ok(s)
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    pub fn t_final(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }

    /// Observer column names, sorted.
    pub fn extra_columns(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.records.iter().flat_map(|r| r.extra.keys()).collect();
        set.into_iter().cloned().collect()
    }

    pub const CSV_BASE_COLUMNS: [&'static str; 6] = ["t", "mass", "energy", "max_height", "left", "right"];

    /// One row per record: the base columns followed by the observer
    /// columns in sorted order. Missing values are written as `nan`, and so is an empty support.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let extra = self.extra_columns();
        let mut header: Vec<&str> = Self::CSV_BASE_COLUMNS.to_vec();
        header.extend(extra.iter().map(String::as_str));
        writeln!(out, "{}", header.join(","))?;
        for r in &self.records {
            let mut row = vec![r.t, r.mass, r.energy, r.max_height, r.support.left, r.support.right];
            row.extend(extra.iter().map(|k| r.extra.get(k).copied().unwrap_or(f64::NAN)));
            let cells: Vec<String> = row.iter().map(|v| cell(*v)).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Callbacks invoked on the run's thread.
pub trait Observer {
    fn on_step(&mut self, _t: f64, _p: &Profile, _stats: &StepStats) {}

    /// Adds columns to the record being written at time `t`.
    fn on_record(&mut self, _t: f64, _p: &Profile, _columns: &mut BTreeMap<String, f64>) {}

    fn finished(&self) -> bool {
        false
    }
}
