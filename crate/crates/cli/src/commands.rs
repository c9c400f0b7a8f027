use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};
use thinfilm::config::{Config, Experiment};
use thinfilm::diagnostics::{
    bernis_gruen_check, degeneracy_cascade, energy_balance_monitor, gns_check, monotonicity_monitor,
    monotonicity_params, positive_corpus, weighted_entropy, CylinderMode,
};
use thinfilm::experiments::{
    beta_sweep, convergence_study, counterexample_study, kappa_sweep, source_residual, Classification, StudyOutput,
};
use thinfilm::free_boundary::{write_interface_csv, WaitingTimeTracker};
use thinfilm::grid::{BallMode, Grid1D};
use thinfilm::initial_data::{criterion_energy, criterion_mass, criterion_pnorm, dyadic_radii};
use thinfilm::manifest::{RunManifest, SCHEMA_VERSION};
use thinfilm::solver::{self, Observer, TimeSeries};
use thinfilm::{Error, Profile};

use crate::{input_descriptor, Command, ErrorEntry, Failure, Loaded};

pub(crate) fn dispatch(command: Command, l: &Loaded, out: &Path, workers: usize) -> Result<(), Failure> {
    match command {
        Command::Run => simulate(l, out, false),
        Command::Diagnose => simulate(l, out, true),
        Command::Criteria => criteria(l, out),
        Command::Sweep => study(l, out, workers, false),
        Command::Validate => study(l, out, workers, true),
    }
}

fn header(command: Command) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema_version".into(), SCHEMA_VERSION.into());
    m.insert("command".into(), command.name().into());
    m
}

/// Adds the weighted entropy at `x0` as a series column when `2 < n < 3`.
struct EntropyColumn {
    x0: f64,
    alpha: f64,
    gamma: f64,
}

impl Observer for EntropyColumn {
    fn on_record(&mut self, _t: f64, p: &Profile, columns: &mut BTreeMap<String, f64>) {
        let v = weighted_entropy(p, self.x0, self.alpha, self.gamma).unwrap_or(f64::NAN);
        columns.insert("weighted_entropy".into(), v);
    }
}

/// Keeps the run going to `t_end` even after every threshold has fired.
struct Never;

impl Observer for Never {}

fn simulate(l: &Loaded, dir: &Path, diagnose: bool) -> Result<(), Failure> {
    let command = if diagnose { Command::Diagnose } else { Command::Run };
    let cfg = &l.cfg;
    let (grid, u0, mut out) = setup_at(l, command, dir)?;
    let n = cfg.solver.n;
    let x0 = cfg.x0();
    let margin = cfg.diagnostics.margin_cells * grid.h();

    let mut tracker = match x0 {
        Some(x0) => Some(WaitingTimeTracker::new(&u0, x0, &cfg.diagnostics.thetas, margin).map_err(Failure::Config)?),
        None => None,
    };
    let mut entropy = match (x0, monotonicity_params(n)) {
        (Some(x0), Ok(mp)) => Some(EntropyColumn {
            x0,
            alpha: mp.alpha,
            gamma: mp.gamma,
        }),
        _ => None,
    };
    let mut never = Never;
    let outcome = {
        let mut obs: Vec<&mut dyn Observer> = vec![&mut never];
        if let Some(t) = tracker.as_mut() {
            obs.push(t);
        }
        if let Some(e) = entropy.as_mut() {
            obs.push(e);
        }
        solver::run(&u0, &cfg.solver, cfg.run.t_end, cfg.run.observe_every, &mut obs)
    };
    let mut errors = Vec::new();
    let (series, failure) = match outcome {
        Ok(s) => (s, None),
        Err(f) => {
            errors.push(ErrorEntry {
                kind: "run_failed".into(),
                message: f.to_string(),
            });
            let kind = f.kind;
            (*f.series, Some(json!({ "kind": kind, "t": f.t, "reason": f.reason })))
        }
    };

    write_series(&mut out, &series, cfg.output.snapshots)?;
    let mut summary = header(command);
    summary.insert("run".into(), run_summary(&series, failure));
    if let Some(t) = &tracker {
        summary.insert("waiting".into(), json!({ "mode": t.mode(), "estimates": t.estimates() }));
    }
    if diagnose {
        let mon = monitors(cfg, x0, grid, l.seed, &series, &mut out, &mut errors)?;
        summary.insert("monitors".into(), mon);
    }
    out.write_json("summary.json", &Value::Object(summary))?;
    out.finish()?;
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Failure::Run(errors))
    }
}

fn setup_at(l: &Loaded, command: Command, dir: &Path) -> Result<(Grid1D, Profile, StudyOutput), Failure> {
    let cfg = &l.cfg;
    let grid = cfg.grid.build().map_err(Failure::Config)?;
    let u0 = cfg.initial_data.build(grid, cfg.solver.n).map_err(Failure::Config)?;
    let input = input_descriptor(cfg, l.seed).map_err(Failure::Config)?;
    let manifest = RunManifest::new(command.name(), cfg, input, &[&u0]).map_err(Failure::Config)?;
    let out = StudyOutput::create(dir, manifest)?;
    Ok((grid, u0, out))
}

fn write_series(out: &mut StudyOutput, series: &TimeSeries, snapshots: bool) -> Result<(), Failure> {
    out.write_series("series.csv", series)?;
    out.write_with("interface.csv", |w| write_interface_csv(series, w))?;
    if snapshots {
        let mut index = String::from("index,t,file\n");
        for (i, r) in series.records.iter().enumerate() {
            let rel = format!("snapshots/{i:05}.csv");
            out.write_with(&rel, |w| r.profile.write_csv(w))?;
            index.push_str(&format!("{i},{:.16e},{rel}\n", r.t));
        }
        out.write_with("snapshots/index.csv", |w| Ok(w.write_all(index.as_bytes())?))?;
    }
    Ok(())
}

fn run_summary(s: &TimeSeries, failure: Option<Value>) -> Value {
    let first = s.records.first();
    let last = s.last();
    json!({
        "n": s.n,
        "records": s.records.len(),
        "t_final": s.t_final(),
        "accepted_steps": s.accepted_steps,
        "rejected_steps": s.rejected_steps,
        "newton_iters_total": s.newton_iters_total,
        "max_mass_drift": s.max_mass_drift,
        "energy_flags": s.energy_flags,
        "stopped_early": s.stopped_early,
        "mass_initial": first.map(|r| r.mass),
        "mass_final": last.map(|r| r.mass),
        "energy_initial": first.map(|r| r.energy),
        "energy_final": last.map(|r| r.energy),
        "support_final": last.map(|r| r.support),
        "failure": failure,
    })
}

fn monitors(
    cfg: &Config,
    x0: Option<f64>,
    grid: Grid1D,
    seed: u64,
    series: &TimeSeries,
    out: &mut StudyOutput,
    errors: &mut Vec<ErrorEntry>,
) -> Result<Value, Failure> {
    let n = cfg.solver.n;
    let d = &cfg.diagnostics;
    let mut m = serde_json::Map::new();
    let mut fail = |name: &str, e: Error, m: &mut serde_json::Map<String, Value>| {
        m.insert(name.into(), json!({ "error": ErrorEntry::from(&e) }));
        errors.push(ErrorEntry {
            kind: e.kind().into(),
            message: format!("{name}: {e}"),
        });
    };

    if d.monotonicity {
        match (x0, monotonicity_params(n)) {
            (None, _) => {
                m.insert("monotonicity".into(), json!({ "skipped": "no x0" }));
            }
            (_, Err(e)) => {
                m.insert("monotonicity".into(), json!({ "skipped": e.to_string() }));
            }
            (Some(x0), Ok(_)) => match monotonicity_monitor(series, x0, n) {
                Ok(rep) => {
                    out.write_with("monotonicity.csv", |w| rep.write_csv(w))?;
                    m.insert(
                        "monotonicity".into(),
                        json!({
                            "x0": rep.x0,
                            "alpha": rep.params.alpha,
                            "gamma": rep.params.gamma,
                            "tolerance": rep.tolerance,
                            "monotone": rep.is_monotone(),
                            "violations": rep.violations.len(),
                            "hypothesis_lost_at": rep.hypothesis_lost_at,
                        }),
                    );
                }
                Err(e) => fail("monotonicity", e, &mut m),
            },
        }
    }

    if let Some(c) = d.cascade {
        let mode = c.mode.unwrap_or(CylinderMode::for_n(n));
        let beta = c.beta.unwrap_or(mode.default_beta(n));
        let delta = c.delta.unwrap_or(mode.default_delta(n));
        let res = x0
            .ok_or_else(|| Error::InvalidArgument {
                field: "x0",
                reason: "the cascade needs a point".into(),
            })
            .and_then(|x0| degeneracy_cascade(series, x0, c.big_r, c.k_max, c.horizon, beta, c.eps, delta, mode));
        match res {
            Ok(rep) => {
                out.write_with("cascade.csv", |w| rep.write_csv(w))?;
                m.insert(
                    "cascade".into(),
                    json!({ "all_pass": rep.all_pass(), "beta": beta, "delta": delta, "mode": mode, "eps": c.eps }),
                );
            }
            Err(e) => fail("cascade", e, &mut m),
        }
    }

    if let Some(eb) = d.energy_balance {
        match energy_balance_monitor(series, &eb.cutoff, eb.beta, n) {
            Ok(rep) => {
                out.write_with("energy_balance.csv", |w| rep.write_csv(w))?;
                m.insert(
                    "energy_balance".into(),
                    json!({
                        "intervals": rep.intervals.len(),
                        "fraction_satisfied": rep.fraction_satisfied(),
                        "beta": eb.beta,
                    }),
                );
            }
            Err(e) => fail("energy_balance", e, &mut m),
        }
    }

    if let Some(iq) = d.inequalities {
        let corpus = positive_corpus(grid, iq.corpus_size, seed);
        let (k, p, q, r) = iq.gns;
        let window = iq.cutoff.support().unwrap_or((grid.x_min(), grid.x_max()));
        let mut rows = String::from("index,bernis_gruen_ratio,gns_ratio\n");
        let (mut bg_max, mut gns_max) = (0.0f64, 0.0f64);
        let mut theta = None;
        let mut first_err = None;
        for (i, prof) in corpus.iter().enumerate() {
            let bg = bernis_gruen_check(prof, &iq.cutoff, n);
            let gn = gns_check(prof, k, p, q, r, window);
            match (bg, gn) {
                (Ok(bg), Ok(gn)) => {
                    bg_max = bg_max.max(bg.ratio);
                    gns_max = gns_max.max(gn.ratio);
                    theta = Some(gn.theta);
                    rows.push_str(&format!("{i},{:.16e},{:.16e}\n", bg.ratio, gn.ratio));
                }
                (Err(e), _) | (_, Err(e)) => {
                    first_err = Some(e);
                    break;
                }
            }
        }
        match first_err {
            Some(e) => fail("inequalities", e, &mut m),
            None => {
                out.write_with("inequalities.csv", |w| Ok(w.write_all(rows.as_bytes())?))?;
                m.insert(
                    "inequalities".into(),
                    json!({
                        "corpus_size": corpus.len(),
                        "seed": seed,
                        "bernis_gruen_max_ratio": bg_max,
                        "gns_theta": theta,
                        "gns_max_ratio": gns_max,
                    }),
                );
            }
        }
    }
    Ok(Value::Object(m))
}

fn criteria(l: &Loaded, dir: &Path) -> Result<(), Failure> {
    let cfg = &l.cfg;
    let d = &cfg.diagnostics;
    let n = cfg.solver.n;
    let grid = cfg.grid.build().map_err(Failure::Config)?;
    let u0 = cfg.initial_data.build(grid, n).map_err(Failure::Config)?;
    let x0 = cfg.x0().ok_or(Failure::Config(Error::InvalidArgument {
        field: "x0",
        reason: "set diagnostics.x0 for this initial data".into(),
    }))?;
    let r_max = d.r_max.unwrap_or(match d.ball {
        BallMode::Full => (x0 - grid.x_min()).min(grid.x_max() - x0),
        BallMode::OneSided => grid.x_max() - x0,
    });
    let radii = dyadic_radii(r_max, grid.h());
    if radii.is_empty() {
        return Err(Failure::Config(Error::UnderResolved(format!(
            "r_max = {r_max} is below 4h = {}",
            4.0 * grid.h()
        ))));
    }
    let mut reports = vec![
        criterion_mass(&u0, x0, n, &radii, d.ball).map_err(Failure::Config)?,
        criterion_energy(&u0, x0, n, &radii, d.ball).map_err(Failure::Config)?,
    ];
    if let Some(p) = d.p_exp {
        reports.push(criterion_pnorm(&u0, x0, n, p, &radii, d.ball).map_err(Failure::Config)?);
    }

    let input = input_descriptor(cfg, l.seed).map_err(Failure::Config)?;
    let manifest = RunManifest::new(Command::Criteria.name(), cfg, input, &[&u0]).map_err(Failure::Config)?;
    let mut out = StudyOutput::create(dir, manifest)?;
    out.write_with("profile.csv", |w| u0.write_csv(w))?;
    let mut per = serde_json::Map::new();
    for rep in &reports {
        let name = match rep.kind {
            thinfilm::initial_data::CriterionKind::Pnorm(_) => "pnorm".to_string(),
            k => k.label(),
        };
        let csv = rep.to_csv();
        out.write_with(&format!("criterion_{name}.csv"), |w| Ok(w.write_all(csv.as_bytes())?))?;
        per.insert(name, rep.summary_json());
    }
    let mut summary = header(Command::Criteria);
    summary.insert("x0".into(), x0.into());
    summary.insert("n".into(), n.into());
    summary.insert("supremum".into(), reports[0].supremum.into());
    summary.insert("criteria".into(), Value::Object(per));
    out.write_json("summary.json", &Value::Object(summary))?;
    out.finish()?;
    Ok(())
}

/// One checked property of `validate`.
#[derive(serde::Serialize)]
struct Property {
    name: String,
    pass: bool,
    value: Value,
}

fn prop(name: impl Into<String>, pass: bool, value: impl Into<Value>) -> Property {
    Property {
        name: name.into(),
        pass,
        value: value.into(),
    }
}

fn study(l: &Loaded, dir: &Path, workers: usize, validate: bool) -> Result<(), Failure> {
    let command = if validate { Command::Validate } else { Command::Sweep };
    let cfg = &l.cfg;
    let Some(exp) = &cfg.experiment else {
        if validate {
            return validate_run(l, dir);
        }
        return Err(Failure::Config(Error::InvalidArgument {
            field: "experiment",
            reason: "`sweep` needs an [experiment] section".into(),
        }));
    };
    let input = input_descriptor(cfg, l.seed).map_err(Failure::Config)?;
    let manifest = RunManifest::new(command.name(), cfg, input, &[]).map_err(Failure::Config)?;
    let mut out = StudyOutput::create(dir, manifest)?;
    let n = cfg.solver.n;
    let props = match exp {
        Experiment::Convergence(cc) => {
            // the closed form must solve the equation before it can judge the solver
            let res = [cc.t0, cc.t1]
                .iter()
                .map(|&t| source_residual(cc.a, t, 17))
                .collect::<Result<Vec<f64>, Error>>()
                .map_err(Failure::Config)?
                .into_iter()
                .fold(0.0, f64::max);
            let st = convergence_study(cc, &cfg.solver)?;
            st.write(&mut out)?;
            let mut p = vec![prop("substitution_residual", res < 1e-8, res)];
            p.extend(st
                .l1_ratios
                .iter()
                .enumerate()
                .map(|(i, r)| prop(format!("l1_ratio_{i}"), (3.0..=5.0).contains(r), *r)),
            );
            let fo = st.fitted_order.unwrap_or(f64::NAN);
            p.push(prop("fitted_order", (1.7..=2.3).contains(&fo), st.fitted_order));
            p
        }
        Experiment::KappaSweep(sc) => {
            let res = kappa_sweep(sc, &cfg.solver, workers)?;
            res.write(&mut out)?;
            let mut p = vec![
                prop("slope", (res.fit.slope + n).abs() <= 0.15, res.fit.slope),
                prop("t_star_kappa_n_spread", res.spread() <= 5.0, res.spread()),
            ];
            for (th, f) in res.thetas.iter().zip(&res.fits_per_theta) {
                let slope = f.as_ref().map(|f| f.slope);
                let ok = slope.is_some_and(|s| (s + n).abs() <= 0.15);
                p.push(prop(format!("slope_theta_{th:e}"), ok, slope));
            }
            p
        }
        Experiment::BetaSweep(bc) => {
            let res = beta_sweep(bc, &cfg.solver, workers)?;
            res.write(&mut out)?;
            let critical = 4.0 / n;
            res.classes
                .iter()
                .filter(|c| c.beta != critical)
                .map(|c| {
                    // finite mass criterion at x0 exactly when β >= 4/n
                    let expected = if c.beta > critical {
                        Classification::Waiting
                    } else {
                        Classification::Instantaneous
                    };
                    prop(
                        format!("beta_{}", c.beta),
                        c.classification == expected && c.theta_consistent,
                        json!({ "classification": c.classification, "expected": expected, "theta_consistent": c.theta_consistent }),
                    )
                })
                .collect()
        }
        Experiment::Counterexamples(cc) => {
            let rep = counterexample_study(cc, &cfg.solver, workers)?;
            rep.write(&mut out)?;
            vec![
                prop("oscillatory_mass_bounded", rep.mass_bounded(), json!(rep.oscillatory.mass_ratio_range)),
                prop("oscillatory_energy_grows", rep.energy_grows(), json!(rep.oscillatory.energy_growth)),
                prop("oscillatory_waits", rep.oscillatory_waits(), json!(rep.oscillatory.t_star)),
                prop("concentrated_mass_increasing", rep.concentrated_mass_increasing(), Value::Null),
                prop("concentrated_t_star_decreasing", rep.concentrated_t_star_decreasing(), Value::Null),
            ]
        }
    };
    finish_validation(out, command, exp.name(), props, validate)
}

fn finish_validation(
    mut out: StudyOutput,
    command: Command,
    study: &str,
    props: Vec<Property>,
    validate: bool,
) -> Result<(), Failure> {
    if validate {
        let pass = props.iter().all(|p| p.pass);
        let mut doc = header(command);
        doc.insert("study".into(), study.into());
        doc.insert("pass".into(), pass.into());
        doc.insert("properties".into(), serde_json::to_value(&props).unwrap_or_default());
        out.write_json("validation.json", &Value::Object(doc))?;
        out.finish()?;
        let failed: Vec<ErrorEntry> = props
            .iter()
            .filter(|p| !p.pass)
            .map(|p| ErrorEntry {
                kind: "property_failed".into(),
                message: format!("{}: {}", p.name, p.value),
            })
            .collect();
        if !failed.is_empty() {
            return Err(Failure::Run(failed));
        }
        return Ok(());
    }
    out.finish()?;
    Ok(())
}

/// Without an experiment, `validate` checks conservation and dissipation of
/// the configured run.
fn validate_run(l: &Loaded, dir: &Path) -> Result<(), Failure> {
    let cfg = &l.cfg;
    let (_, u0, mut out) = setup_at(l, Command::Validate, dir)?;
    let mut never = Never;
    let series = solver::run(&u0, &cfg.solver, cfg.run.t_end, cfg.run.observe_every, &mut [&mut never])
        .map_err(|f| Failure::Run(vec![ErrorEntry {
            kind: "run_failed".into(),
            message: f.to_string(),
        }]))?;
    out.write_series("series.csv", &series)?;
    let props = vec![
        prop("mass_drift", series.max_mass_drift <= 1e-10, series.max_mass_drift),
        prop("energy_nonincreasing", series.energy_flags.is_empty(), series.energy_flags.len()),
    ];
    finish_validation(out, Command::Validate, "run", props, true)
}
