//! Strict TOML configuration shared by the command-line front end.
//!
//! Sections: `grid` and `initial_data` (required), `solver`, `run`,
//! `diagnostics`, `output` and `experiment` (optional, defaulted). Unknown
//! keys anywhere are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{Cutoff, CylinderMode};
use crate::error::{Error, Result};
use crate::experiments::{BetaSweepConfig, ConvergenceConfig, CounterexampleConfig, KappaSweepConfig};
use crate::grid::{BallMode, GridSpec};
use crate::initial_data::InitialData;
use crate::solver::SolverConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridSpec,
    pub initial_data: InitialData,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    /// Recording interval; 0 records every accepted step.
    pub observe_every: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t_end: 1e-3,
            observe_every: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Point of interest; defaults to the initial data's boundary point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    /// Thresholds for the waiting time; the first is the primary one.
    pub thetas: Vec<f64>,
    pub margin_cells: f64,
    pub ball: BallMode,
    /// Largest criterion radius; defaults to the largest ball inside the grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    /// Exponent of the p-norm criterion, evaluated when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_exp: Option<f64>,
    /// Weighted-entropy monitor (needs `2 < n < 3`).
    pub monotonicity: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cascade: Option<CascadeSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_balance: Option<EnergyBalanceSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inequalities: Option<InequalitySection>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            x0: None,
            thetas: vec![1e-7],
            margin_cells: 4.0,
            ball: BallMode::Full,
            r_max: None,
            p_exp: None,
            monotonicity: true,
            cascade: None,
            energy_balance: None,
            inequalities: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeSection {
    #[serde(rename = "R")]
    pub big_r: f64,
    pub k_max: u32,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub eps: f64,
    /// Defaults per mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Defaults to the mode matching `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<CylinderMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyBalanceSection {
    pub cutoff: Cutoff,
    #[serde(default)]
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalitySection {
    /// Weight for the Bernis–Grün check; must sit where the corpus is positive.
    pub cutoff: Cutoff,
    #[serde(default = "default_corpus")]
    pub corpus_size: usize,
    /// GNS exponents `(k, p, q, r)`.
    #[serde(default = "default_gns")]
    pub gns: (u32, f64, f64, f64),
}

fn default_corpus() -> usize {
    100
}

fn default_gns() -> (u32, f64, f64, f64) {
    (1, 6.0, 2.0, 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Used when `--out` is not given.
    pub dir: PathBuf,
    /// Write one `x,u` CSV per recorded instant under `snapshots/`.
    pub snapshots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            snapshots: true,
        }
    }
}

/// Study run by `sweep` and checked by `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    KappaSweep(KappaSweepConfig),
    BetaSweep(BetaSweepConfig),
    Convergence(ConvergenceConfig),
    Counterexamples(CounterexampleConfig),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::KappaSweep(_) => "kappa_sweep",
            Experiment::BetaSweep(_) => "beta_sweep",
            Experiment::Convergence(_) => "convergence",
            Experiment::Counterexamples(_) => "counterexamples",
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<Config> {
    let cfg: Config = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl Config {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        parse_config(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Field-level constraints beyond what the types encode.
    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        self.solver.validate()?;
        if !(self.run.t_end >= 0.0) || !self.run.t_end.is_finite() {
            return Err(Error::arg("t_end", format!("{} must be finite and >= 0", self.run.t_end)));
        }
        if !(self.run.observe_every >= 0.0) || !self.run.observe_every.is_finite() {
            return Err(Error::arg("observe_every", "must be finite and >= 0"));
        }
        let d = &self.diagnostics;
        if d.thetas.is_empty() || d.thetas.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::arg("thetas", "need at least one threshold, each in (0, 1)"));
        }
        if !(d.margin_cells >= 2.0) {
            return Err(Error::arg("margin_cells", "must be at least 2"));
        }
        if let Some(p) = d.p_exp {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::arg("p_exp", format!("{p} is outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// The diagnostics point, falling back to the initial data's.
    pub fn x0(&self) -> Option<f64> {
        self.diagnostics.x0.or(self.initial_data.x0())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Mobility;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"
[grid]
x_min = -1.0
x_max = 1.0
n_nodes = 64

[initial_data]
kind = "parabola"
center = 0.0
radius = 0.5
"#;

    #[test]
    fn empty_sections_take_defaults() {
        let cfg = parse_config(&format!("{MINIMAL}\n[solver]\n[diagnostics]\n")).unwrap();
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.solver.support_threshold_rel, 1e-7);
        assert_eq!(cfg.solver.mobility, Mobility::Upwind);
        assert_eq!(cfg.diagnostics, DiagnosticsSection::default());
        assert_eq!(cfg.x0(), Some(0.5));
    }

    #[test]
    fn out_of_range_exponent_names_the_constraint() {
        let err = parse_config(&format!("{MINIMAL}\n[solver]\nn = 3.5\n")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("`n`") && msg.contains("(0, 3)"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for extra in ["\n[solver]\nnn = 2.0\n", "\n[run]\nt_ned = 1.0\n", "\n[bogus]\n"] {
            let err = parse_config(&format!("{MINIMAL}{extra}")).unwrap_err();
            assert!(matches!(err, Error::Parse(_)), "{extra}: {err}");
        }
        let err = parse_config("[grid]\nx_min = 0.0\nx_max = 1.0\nn_nodes = 64\n[initial_data]\nkind = \"zero\"\nextra = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn parse_errors_carry_a_position() {
        let err = parse_config("[grid]\nx_min = -1.0\nx_max = \n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn experiment_section() {
        let text = format!(
            "{MINIMAL}\n[experiment]\nkind = \"convergence\"\ngrids = [64, 128]\n"
        );
        let cfg = parse_config(&text).unwrap();
        match cfg.experiment {
            Some(Experiment::Convergence(c)) => assert_eq!(c.grids, vec![64, 128]),
            other => panic!("{other:?}"),
        }
    }

    fn mobility() -> impl Strategy<Value = Mobility> {
        prop_oneof![
            Just(Mobility::Upwind),
            Just(Mobility::EntropyConsistent),
            Just(Mobility::ArithmeticMean),
            (0.0..1.0f64).prop_map(|eps| Mobility::Regularized { eps }),
        ]
    }

    fn initial_data() -> impl Strategy<Value = InitialData> {
        prop_oneof![
            Just(InitialData::Zero {}),
            (-0.5..0.0f64, 0.5..3.0f64, 0.1..2.0f64, 0.2..0.8f64).prop_map(|(x0, beta, amplitude, width)| {
                InitialData::PowerLaw {
                    x0,
                    beta,
                    amplitude,
                    width,
                }
            }),
            (-0.5..0.0f64, 0.0..1.0f64, 2u32..20, 0.2..0.8f64).prop_map(|(x0, delta, k_max, width)| {
                InitialData::Concentrated { x0, delta, k_max, width }
            }),
            (-0.2..0.2f64, 0.1..0.5f64).prop_map(|(center, radius)| InitialData::Parabola {
                center,
                radius,
                height: 1.0
            }),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(
            n in 0.5..2.9f64,
            nodes in 8usize..5000,
            dt_max in 1e-6..1.0f64,
            mob in mobility(),
            data in initial_data(),
            t_end in 0.0..10.0f64,
            thetas in prop::collection::vec(1e-9..0.5f64, 1..4),
            x0 in prop::option::of(-1.0..1.0f64),
            p_exp in prop::option::of(0.01..0.99f64),
            cascade in prop::option::of((0.01..1.0f64, 0u32..8, 1e-4..1.0f64)),
            snapshots in any::<bool>(),
        ) {
            let cfg = Config {
                grid: GridSpec { x_min: -1.0, x_max: 1.0, n_nodes: nodes },
                initial_data: data,
                solver: SolverConfig { n, dt_max, mobility: mob, ..Default::default() },
                run: RunSection { t_end, observe_every: t_end / 7.0 },
                diagnostics: DiagnosticsSection {
                    x0,
                    thetas,
                    p_exp,
                    cascade: cascade.map(|(big_r, k_max, horizon)| CascadeSection {
                        big_r, k_max, horizon, eps: 0.1, beta: None, delta: Some(0.5), mode: Some(CylinderMode::Weak),
                    }),
                    energy_balance: Some(EnergyBalanceSection {
                        cutoff: Cutoff::Plateau { center: 0.0, inner: 0.1, outer: 0.3 },
                        beta: 0.6,
                    }),
                    ..Default::default()
                },
                output: OutputSection { dir: "results/a".into(), snapshots },
                experiment: Some(Experiment::Convergence(ConvergenceConfig::default())),
            };
            let text = cfg.to_toml().unwrap();
            let back = parse_config(&text).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
